#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "srcd/common.hpp"

namespace srcd::eval {

struct ConfusionCounts {
  int64_t tp = 0;
  int64_t fp = 0;
  int64_t tn = 0;
  int64_t fn = 0;

  int64_t total() const { return tp + fp + tn + fn; }
  ConfusionCounts& operator+=(const ConfusionCounts& other);
  bool operator==(const ConfusionCounts&) const = default;
};

/// Pixel-wise counts with "changed" (1) as the positive class. Both inputs
/// must be binary and equally shaped.
ConfusionCounts confusion(const ChangeMask& pred, const ChangeMask& gt);

struct ChangeMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double iou = 0.0;
};

/// precision = tp/(tp+fp), recall = tp/(tp+fn), f1 = 2PR/(P+R),
/// iou = tp/(tp+fp+fn). When neither prediction nor ground truth has a
/// positive pixel every metric is 1; otherwise an undefined ratio is 0.
ChangeMetrics metrics(const ConfusionCounts& counts);

inline constexpr double kPsnrCap = 100.0;

/// 10 log10(max^2 / MSE) over all elements; kPsnrCap when MSE is 0.
double psnr(const ImageTensor& a, const ImageTensor& b, double max_val = 1.0);

inline constexpr int kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;

/// Windowed SSIM (11x11 Gaussian, sigma 1.5, K1 0.01, K2 0.03, L 1) averaged
/// over valid window positions. Colour inputs are reduced to grey by channel
/// mean. [C,H,W] or [B,C,H,W]; batches are averaged.
double ssim(const ImageTensor& a, const ImageTensor& b);

/// Normalised 1-D Gaussian taps used by ssim().
std::vector<double> gaussian_window(int size, double sigma);

struct MetricReport {
  ChangeMetrics change;
  ConfusionCounts counts;
  std::optional<double> psnr_sr;
  std::optional<double> ssim_sr;
  std::optional<double> psnr_bicubic;
  std::optional<double> ssim_bicubic;
};

struct PatchRecord {
  std::string patch_id;
  ConfusionCounts counts;
  ChangeMetrics change;
  std::optional<double> psnr_sr, ssim_sr, psnr_bicubic, ssim_bicubic;
};

/// One row of the experiment table.
struct ReportRow {
  std::string variant;
  std::string mode;
  MetricReport report;
};

/// variant,mode,P,R,F1,IoU,PSNR_sr,SSIM_sr,PSNR_bicubic,SSIM_bicubic
std::string report_csv(const std::vector<ReportRow>& rows);

/// Fixed-width text table (percentages for change metrics, dB for PSNR).
std::string report_text(const std::vector<ReportRow>& rows);

}  // namespace srcd::eval
