#pragma once

#include <filesystem>

#include "srcd/common.hpp"

namespace srcd::io {

/// Reads an 8- or 16-bit PNG/TIFF into a float [3,H,W] tensor in [0,1].
/// Grayscale inputs are replicated to three channels; alpha is dropped.
ImageTensor read_image(const std::filesystem::path& path);

/// Reads a label raster into a {0,1} float [1,H,W] mask (nonzero -> changed
/// for 0/1 encodings, >= half range -> changed for 0/255 encodings).
ChangeMask read_mask(const std::filesystem::path& path);

/// Writes a [3,H,W] or [1,H,W] image in [0,1] as an 8-bit PNG.
void write_image_png(const std::filesystem::path& path, const ImageTensor& image);

/// Writes a {0,1} [1,H,W] mask as a 1-bit PNG.
void write_mask_png(const std::filesystem::path& path, const ChangeMask& mask);

/// Writes a distance map [1,H,W] as 16-bit grayscale: round(dt / margin * 32767),
/// clamped to [0,65535], so the margin maps to 32767.
void write_distance_png(const std::filesystem::path& path, const torch::Tensor& dt, double margin);

/// Reads back a 16-bit PNG as raw integer levels (float [1,H,W]).
torch::Tensor read_u16_png(const std::filesystem::path& path);

}  // namespace srcd::io
