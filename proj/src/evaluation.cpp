#include "srcd/evaluation.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

namespace srcd::eval {
namespace F = torch::nn::functional;

namespace {

void require_binary(const torch::Tensor& m, const char* what) {
  require(((m == 0) | (m == 1)).all().item<bool>(), std::string(what) + " must be binary");
}

double ratio(int64_t num, int64_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

torch::Tensor to_gray_batch(const torch::Tensor& x) {
  require(x.dim() == 3 || x.dim() == 4, "SSIM expects [C,H,W] or [B,C,H,W]");
  auto b = (x.dim() == 3 ? x.unsqueeze(0) : x).to(torch::kFloat64);
  return b.mean(1, /*keepdim=*/true);
}

std::string fmt(const std::optional<double>& v, const char* format) {
  if (!v) return "";
  char buf[32];
  std::snprintf(buf, sizeof(buf), format, *v);
  return buf;
}

}  // namespace

ConfusionCounts& ConfusionCounts::operator+=(const ConfusionCounts& other) {
  tp += other.tp;
  fp += other.fp;
  tn += other.tn;
  fn += other.fn;
  return *this;
}

ConfusionCounts confusion(const ChangeMask& pred, const ChangeMask& gt) {
  require(pred.sizes().equals(gt.sizes()),
          "confusion: shape mismatch " + shape_string(pred) + " vs " + shape_string(gt));
  require_binary(pred, "prediction");
  require_binary(gt, "ground truth");
  auto p = pred.to(torch::kBool);
  auto g = gt.to(torch::kBool);
  ConfusionCounts c;
  c.tp = (p & g).sum().item<int64_t>();
  c.fp = (p & ~g).sum().item<int64_t>();
  c.fn = (~p & g).sum().item<int64_t>();
  c.tn = pred.numel() - c.tp - c.fp - c.fn;
  return c;
}

ChangeMetrics metrics(const ConfusionCounts& c) {
  const int64_t predicted = c.tp + c.fp;
  const int64_t actual = c.tp + c.fn;
  if (predicted == 0 && actual == 0) return {1.0, 1.0, 1.0, 1.0};
  ChangeMetrics m;
  m.precision = ratio(c.tp, predicted);
  m.recall = ratio(c.tp, actual);
  m.f1 = (m.precision + m.recall) > 0.0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
  m.iou = ratio(c.tp, c.tp + c.fp + c.fn);
  return m;
}

double psnr(const ImageTensor& a, const ImageTensor& b, double max_val) {
  require(a.sizes().equals(b.sizes()), "psnr: shape mismatch " + shape_string(a) + " vs " + shape_string(b));
  require(max_val > 0.0, "psnr: max_val must be positive");
  const double mse = (a.to(torch::kFloat64) - b.to(torch::kFloat64)).pow(2).mean().item<double>();
  if (mse == 0.0) return kPsnrCap;
  return 10.0 * std::log10(max_val * max_val / mse);
}

std::vector<double> gaussian_window(int size, double sigma) {
  std::vector<double> taps(static_cast<size_t>(size));
  const double centre = (size - 1) / 2.0;
  for (int i = 0; i < size; ++i) {
    const double d = i - centre;
    taps[static_cast<size_t>(i)] = std::exp(-d * d / (2.0 * sigma * sigma));
  }
  const double sum = std::accumulate(taps.begin(), taps.end(), 0.0);
  for (auto& t : taps) t /= sum;
  return taps;
}

double ssim(const ImageTensor& a, const ImageTensor& b) {
  require(a.sizes().equals(b.sizes()), "ssim: shape mismatch " + shape_string(a) + " vs " + shape_string(b));
  auto x = to_gray_batch(a);
  auto y = to_gray_batch(b);
  require(x.size(2) >= kSsimWindow && x.size(3) >= kSsimWindow,
          "ssim: images smaller than the 11x11 window");

  const auto taps = gaussian_window(kSsimWindow, kSsimSigma);
  auto g = torch::tensor(taps, torch::kFloat64);
  auto kernel = torch::outer(g, g).view({1, 1, kSsimWindow, kSsimWindow});
  auto filt = [&kernel](const torch::Tensor& t) { return F::conv2d(t, kernel); };

  constexpr double c1 = 0.01 * 0.01;
  constexpr double c2 = 0.03 * 0.03;
  auto mu_x = filt(x);
  auto mu_y = filt(y);
  auto sxx = filt(x * x) - mu_x * mu_x;
  auto syy = filt(y * y) - mu_y * mu_y;
  auto sxy = filt(x * y) - mu_x * mu_y;
  auto map = ((2.0 * mu_x * mu_y + c1) * (2.0 * sxy + c2)) /
             ((mu_x * mu_x + mu_y * mu_y + c1) * (sxx + syy + c2));
  return map.mean().item<double>();
}

std::string report_csv(const std::vector<ReportRow>& rows) {
  std::ostringstream out;
  out << "variant,mode,P,R,F1,IoU,PSNR_sr,SSIM_sr,PSNR_bicubic,SSIM_bicubic\n";
  for (const auto& row : rows) {
    const auto& r = row.report;
    out << row.variant << ',' << row.mode << ',' << fmt(r.change.precision, "%.6f") << ','
        << fmt(r.change.recall, "%.6f") << ',' << fmt(r.change.f1, "%.6f") << ','
        << fmt(r.change.iou, "%.6f") << ',' << fmt(r.psnr_sr, "%.6f") << ',' << fmt(r.ssim_sr, "%.6f")
        << ',' << fmt(r.psnr_bicubic, "%.6f") << ',' << fmt(r.ssim_bicubic, "%.6f") << '\n';
  }
  return out.str();
}

std::string report_text(const std::vector<ReportRow>& rows) {
  std::ostringstream out;
  char line[256];
  std::snprintf(line, sizeof(line), "%-10s %-4s %8s %8s %8s %8s   %9s %7s %9s %7s\n", "Variant", "Mode",
                "Pre(%)", "Rec(%)", "F1(%)", "IoU(%)", "PSNR_sr", "SSIM_sr", "PSNR_bic", "SSIM_bic");
  out << line;
  for (const auto& row : rows) {
    const auto& r = row.report;
    auto opt = [](const std::optional<double>& v, const char* format) {
      return v ? fmt(v, format) : std::string("-");
    };
    std::snprintf(line, sizeof(line), "%-10s %-4s %8.2f %8.2f %8.2f %8.2f   %9s %7s %9s %7s\n",
                  row.variant.c_str(), row.mode.c_str(), 100.0 * r.change.precision,
                  100.0 * r.change.recall, 100.0 * r.change.f1, 100.0 * r.change.iou,
                  opt(r.psnr_sr, "%.2f").c_str(), opt(r.ssim_sr, "%.4f").c_str(),
                  opt(r.psnr_bicubic, "%.2f").c_str(), opt(r.ssim_bicubic, "%.4f").c_str());
    out << line;
  }
  return out.str();
}

}  // namespace srcd::eval
