#include "srcd/evaluate_split.hpp"

namespace srcd::eval {

SplitEvaluation evaluate_split(SrcdNet& net, std::span<const data::PatchPair> patches, double theta,
                               int batch_size, const std::function<void(const PatchOutputs&)>& observer) {
  require(!patches.empty(), "cannot evaluate an empty split");
  require(batch_size >= 1, "batch_size must be >= 1");
  torch::NoGradGuard no_grad;
  net.set_training(false);

  SplitEvaluation result;
  double psnr_sr = 0.0, ssim_sr = 0.0, psnr_bic = 0.0, ssim_bic = 0.0;
  for (size_t start = 0; start < patches.size(); start += static_cast<size_t>(batch_size)) {
    const auto chunk = patches.subspan(start, std::min(patches.size() - start, static_cast<size_t>(batch_size)));
    const auto batch = make_batch(chunk);
    auto t2 = net.t2_input(batch);
    auto dt = net.change_net->forward(batch.hr_t1, t2);
    auto pred = cd::threshold_segment(dt, theta);
    for (size_t i = 0; i < chunk.size(); ++i) {
      const auto idx = static_cast<int64_t>(i);
      PatchRecord record;
      record.patch_id = chunk[i].patch_id;
      record.counts = confusion(pred[idx], batch.gt[idx]);
      record.change = metrics(record.counts);
      if (net.use_srm) {
        record.psnr_sr = psnr(t2[idx], batch.hr_t2[idx]);
        record.ssim_sr = ssim(t2[idx], batch.hr_t2[idx]);
        record.psnr_bicubic = psnr(batch.bicubic_t2[idx], batch.hr_t2[idx]);
        record.ssim_bicubic = ssim(batch.bicubic_t2[idx], batch.hr_t2[idx]);
        psnr_sr += *record.psnr_sr;
        ssim_sr += *record.ssim_sr;
        psnr_bic += *record.psnr_bicubic;
        ssim_bic += *record.ssim_bicubic;
      }
      result.report.counts += record.counts;
      if (observer) observer({&chunk[i], t2[idx], dt[idx], pred[idx]});
      result.records.push_back(std::move(record));
    }
  }
  result.report.change = metrics(result.report.counts);
  if (net.use_srm) {
    const double n = static_cast<double>(patches.size());
    result.report.psnr_sr = psnr_sr / n;
    result.report.ssim_sr = ssim_sr / n;
    result.report.psnr_bicubic = psnr_bic / n;
    result.report.ssim_bicubic = ssim_bic / n;
  }
  return result;
}

}  // namespace srcd::eval
