#include "kbrd/optim.hpp"

#include <cmath>

namespace kbrd {

double global_grad_norm(std::span<const NamedParam> params) {
  double sq = 0.0;
  for (const auto& p : params) {
    if (!p.tensor.has_grad()) continue;
    for (double g : p.tensor.node()->grad) sq += g * g;
  }
  return std::sqrt(sq);
}

double clip_gradients(std::span<NamedParam> params, double max_norm) {
  if (!(max_norm > 0.0)) throw std::invalid_argument("clip_gradients: max_norm must be positive");
  const double norm = global_grad_norm(params);
  if (norm > max_norm) {
    const double s = max_norm / norm;
    for (auto& p : params) {
      if (!p.tensor.has_grad()) continue;
      for (double& g : p.tensor.mutable_grad()) g *= s;
    }
  }
  return norm;
}

void Adam::add_group(std::string name, std::vector<NamedParam> params, double lr) {
  if (!(lr > 0.0)) throw std::invalid_argument("Adam: learning rate for group '" + name + "' must be positive");
  groups_.push_back({std::move(name), lr});
  for (auto& p : params) {
    const std::size_t n = p.tensor.numel();
    slots_.push_back({std::move(p), groups_.size() - 1, std::vector<double>(n, 0.0), std::vector<double>(n, 0.0)});
  }
}

void Adam::step() {
  for (const auto& s : slots_) {
    if (!s.param.tensor.has_grad()) continue;
    for (double g : s.param.tensor.node()->grad)
      if (!std::isfinite(g)) throw NonFiniteGradientError(s.param.name);
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(t_));
  for (auto& s : slots_) {
    const double lr = groups_[s.group].lr;
    auto& node = *s.param.tensor.node();
    const bool has = !node.grad.empty();
    for (std::size_t i = 0; i < node.data.size(); ++i) {
      const double g = has ? node.grad[i] : 0.0;
      s.m[i] = opts_.beta1 * s.m[i] + (1.0 - opts_.beta1) * g;
      s.v[i] = opts_.beta2 * s.v[i] + (1.0 - opts_.beta2) * g * g;
      const double mhat = s.m[i] / bc1;
      const double vhat = s.v[i] / bc2;
      node.data[i] -= lr * mhat / (std::sqrt(vhat) + opts_.eps);
    }
  }
}

void Adam::zero_grad() {
  for (auto& s : slots_) s.param.tensor.zero_grad();
}

std::vector<NamedParam> Adam::params() const {
  std::vector<NamedParam> out;
  out.reserve(slots_.size());
  for (const auto& s : slots_) out.push_back(s.param);
  return out;
}

}  // namespace kbrd
