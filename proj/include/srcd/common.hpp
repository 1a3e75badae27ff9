#pragma once

#include <stdexcept>
#include <string>

#include <torch/torch.h>

namespace srcd {

// Images are float tensors with values in [0,1], laid out [C,H,W] for a single
// raster or [B,C,H,W] for a batch. Change masks are {0,1} rasters [1,H,W]
// (or [B,1,H,W]).
using ImageTensor = torch::Tensor;
using ChangeMask = torch::Tensor;

/// Base class for all errors raised by this project.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class DatasetError : public Error {
 public:
  using Error::Error;
};

class CheckpointError : public Error {
 public:
  using Error::Error;
};

/// Raised when a loss becomes NaN/Inf or exceeds the divergence guard.
class TrainingError : public Error {
 public:
  using Error::Error;
};

// Precondition failures use std::invalid_argument.
inline void require(bool condition, const std::string& message) {
  if (!condition) throw std::invalid_argument(message);
}

inline int64_t height_of(const torch::Tensor& t) { return t.size(t.dim() - 2); }
inline int64_t width_of(const torch::Tensor& t) { return t.size(t.dim() - 1); }

/// Shape as "[a,b,c]" for diagnostics.
std::string shape_string(const torch::Tensor& t);

}  // namespace srcd
