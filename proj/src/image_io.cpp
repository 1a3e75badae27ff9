#include "srcd/image_io.hpp"

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <sstream>

namespace srcd {

std::string shape_string(const torch::Tensor& t) {
  std::ostringstream out;
  out << '[';
  for (int64_t d = 0; d < t.dim(); ++d) out << (d ? "," : "") << t.size(d);
  out << ']';
  return out.str();
}

}  // namespace srcd

namespace srcd::io {
namespace {

cv::Mat load_raw(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw DatasetError("raster not found: " + path.string());
  }
  cv::Mat raw = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  if (raw.empty()) throw DatasetError("cannot decode raster: " + path.string());
  return raw;
}

double range_of(const cv::Mat& m) {
  switch (m.depth()) {
    case CV_8U: return 255.0;
    case CV_16U: return 65535.0;
    case CV_32F:
    case CV_64F: return 1.0;
    default: throw DatasetError("unsupported raster depth");
  }
}

// HxWxC (any depth) -> float [C,H,W] scaled by 1/range.
torch::Tensor to_chw(const cv::Mat& m, double range) {
  cv::Mat f;
  m.convertTo(f, CV_32F, 1.0 / range);
  auto hwc = torch::from_blob(f.data, {f.rows, f.cols, f.channels()}, torch::kFloat32);
  return hwc.permute({2, 0, 1}).contiguous().clone();
}

void ensure_parent(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
}

void write_or_throw(const std::filesystem::path& path, const cv::Mat& m,
                    const std::vector<int>& params = {}) {
  ensure_parent(path);
  if (!cv::imwrite(path.string(), m, params)) {
    throw Error("failed to write raster: " + path.string());
  }
}

}  // namespace

ImageTensor read_image(const std::filesystem::path& path) {
  cv::Mat raw = load_raw(path);
  const double range = range_of(raw);
  cv::Mat rgb;
  switch (raw.channels()) {
    case 1: cv::cvtColor(raw, rgb, cv::COLOR_GRAY2RGB); break;
    case 3: cv::cvtColor(raw, rgb, cv::COLOR_BGR2RGB); break;
    case 4: cv::cvtColor(raw, rgb, cv::COLOR_BGRA2RGB); break;
    default: throw DatasetError("unsupported channel count in " + path.string());
  }
  return to_chw(rgb, range).clamp(0.0, 1.0);
}

ChangeMask read_mask(const std::filesystem::path& path) {
  cv::Mat raw = load_raw(path);
  cv::Mat gray = raw;
  if (raw.channels() == 3) cv::cvtColor(raw, gray, cv::COLOR_BGR2GRAY);
  if (raw.channels() == 4) cv::cvtColor(raw, gray, cv::COLOR_BGRA2GRAY);
  const double range = range_of(gray);
  auto levels = to_chw(gray, 1.0);
  const double max_level = levels.max().item<double>();
  // 0/1-encoded labels are common alongside 0/255 ones.
  const double cut = max_level <= 1.0 ? 0.5 : range / 2.0;
  return (levels > cut).to(torch::kFloat32);
}

void write_image_png(const std::filesystem::path& path, const ImageTensor& image) {
  require(image.dim() == 3 && (image.size(0) == 3 || image.size(0) == 1),
          "write_image_png expects [3,H,W] or [1,H,W], got " + shape_string(image));
  auto hwc = (image.detach().to(torch::kFloat32).clamp(0.0, 1.0) * 255.0)
                 .round()
                 .to(torch::kUInt8)
                 .permute({1, 2, 0})
                 .contiguous();
  const int channels = static_cast<int>(hwc.size(2));
  cv::Mat view(static_cast<int>(hwc.size(0)), static_cast<int>(hwc.size(1)),
               CV_8UC(channels), hwc.data_ptr<uint8_t>());
  cv::Mat out;
  if (channels == 3) {
    cv::cvtColor(view, out, cv::COLOR_RGB2BGR);
  } else {
    out = view.clone();
  }
  write_or_throw(path, out);
}

void write_mask_png(const std::filesystem::path& path, const ChangeMask& mask) {
  require(mask.dim() == 3 && mask.size(0) == 1, "write_mask_png expects [1,H,W]");
  auto levels = (mask.detach() > 0.5).to(torch::kUInt8).mul(255).squeeze(0).contiguous();
  cv::Mat view(static_cast<int>(levels.size(0)), static_cast<int>(levels.size(1)), CV_8UC1,
               levels.data_ptr<uint8_t>());
  write_or_throw(path, view.clone(), {cv::IMWRITE_PNG_BILEVEL, 1});
}

void write_distance_png(const std::filesystem::path& path, const torch::Tensor& dt, double margin) {
  require(dt.dim() == 3 && dt.size(0) == 1, "write_distance_png expects [1,H,W]");
  require(margin > 0.0, "margin must be positive");
  auto levels = (dt.detach().to(torch::kFloat64) / margin * 32767.0)
                    .round()
                    .clamp(0.0, 65535.0)
                    .to(torch::kInt32)
                    .squeeze(0)
                    .contiguous();
  cv::Mat as_int(static_cast<int>(levels.size(0)), static_cast<int>(levels.size(1)), CV_32SC1,
                 levels.data_ptr<int32_t>());
  cv::Mat out;
  as_int.convertTo(out, CV_16U);
  write_or_throw(path, out);
}

torch::Tensor read_u16_png(const std::filesystem::path& path) {
  cv::Mat raw = load_raw(path);
  require(raw.depth() == CV_16U && raw.channels() == 1, "expected 16-bit grayscale PNG");
  return to_chw(raw, 1.0);
}

}  // namespace srcd::io
