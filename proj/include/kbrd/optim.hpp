#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "kbrd/tensor.hpp"

namespace kbrd {

struct NamedParam {
  std::string name;
  Tensor tensor;
};

struct NonFiniteGradientError : std::runtime_error {
  explicit NonFiniteGradientError(const std::string& param)
      : std::runtime_error("non-finite gradient in parameter '" + param + "'"), param_name(param) {}
  std::string param_name;
};

/// Global L2 norm over every gradient buffer.
double global_grad_norm(std::span<const NamedParam> params);

/// Rescales all gradients by max_norm / norm when the global norm exceeds
/// max_norm. Returns the norm measured before clipping.
double clip_gradients(std::span<NamedParam> params, double max_norm);

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected Adam over named parameter groups, each with its own rate.
class Adam {
 public:
  struct Slot {
    NamedParam param;
    std::size_t group = 0;
    std::vector<double> m;
    std::vector<double> v;
  };
  struct Group {
    std::string name;
    double lr;
  };

  explicit Adam(AdamOptions opts = {}) : opts_(opts) {}

  void add_group(std::string name, std::vector<NamedParam> params, double lr);

  /// One update from the current gradients. If any gradient is non-finite the
  /// whole step is skipped and NonFiniteGradientError names the parameter.
  void step();
  void zero_grad();

  std::uint64_t steps() const { return t_; }
  void set_steps(std::uint64_t t) { t_ = t; }
  const AdamOptions& options() const { return opts_; }
  std::vector<Slot>& slots() { return slots_; }
  const std::vector<Slot>& slots() const { return slots_; }
  const std::vector<Group>& groups() const { return groups_; }
  std::vector<NamedParam> params() const;

 private:
  AdamOptions opts_;
  std::vector<Group> groups_;
  std::vector<Slot> slots_;
  std::uint64_t t_ = 0;
};

}  // namespace kbrd
