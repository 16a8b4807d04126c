#pragma once

#include <cmath>

#include "kbrd/rng.hpp"
#include "kbrd/tensor.hpp"

namespace kbrd {

/// Glorot-uniform matrix marked as a trainable leaf.
inline Tensor xavier(std::size_t rows, std::size_t cols, Rng& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::vector<double> v(rows * cols);
  for (auto& x : v) x = rng.uniform(-a, a);
  return Tensor::from({rows, cols}, std::move(v), true);
}

inline Tensor normal_init(std::size_t rows, std::size_t cols, double stddev, Rng& rng) {
  std::vector<double> v(rows * cols);
  for (auto& x : v) x = rng.normal(0.0, stddev);
  return Tensor::from({rows, cols}, std::move(v), true);
}

inline Tensor zeros_param(std::size_t rows, std::size_t cols) { return Tensor::zeros({rows, cols}, true); }
inline Tensor ones_param(std::size_t rows, std::size_t cols) { return Tensor::full({rows, cols}, 1.0, true); }

}  // namespace kbrd
