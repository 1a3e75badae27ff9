#pragma once

#include <functional>
#include <span>
#include <vector>

#include "srcd/evaluation.hpp"
#include "srcd/model.hpp"

namespace srcd::eval {

struct SplitEvaluation {
  MetricReport report;
  std::vector<PatchRecord> records;
};

/// Per-patch outputs handed to an optional observer (e.g. for rendering).
struct PatchOutputs {
  const data::PatchPair* pair = nullptr;
  torch::Tensor t2_input;  // [3,P,P]: SR, bicubic or HR
  torch::Tensor distance;  // [1,P,P]
  ChangeMask prediction;   // [1,P,P]
};

/// Inference in eval mode, thresholding at `theta`, globally accumulated
/// confusion. With the SR module on, PSNR/SSIM of SR-vs-HR and
/// bicubic-vs-HR are averaged over patches.
SplitEvaluation evaluate_split(SrcdNet& net, std::span<const data::PatchPair> patches, double theta,
                               int batch_size = 8,
                               const std::function<void(const PatchOutputs&)>& observer = {});

}  // namespace srcd::eval
