#pragma once
// Central finite-difference check of reverse-mode gradients.
#include <algorithm>
#include <cmath>
#include <functional>
#include <mcf/ad/autodiff.h>
#include <mcf/core/rng.h>
#include <vector>

namespace test {

struct GradSample {
  std::size_t tensor;
  Eigen::Index row, col;
  double analytic, numeric, rel_error;
};

inline double rel_error(double a, double n) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-7});
}

/// Checks n_samples random scalars (all of them when n_samples <= 0).
inline std::vector<GradSample>
grad_check(std::vector<mcf::ad::Tensor> params,
           const std::function<mcf::ad::Tensor()> &loss, mcf::Rng &rng,
           int n_samples = 0, double step = 1e-5) {
  for (auto &p : params)
    p.node()->zero_grad();
  mcf::ad::backward(loss());
  std::vector<mcf::Mat> grads;
  for (const auto &p : params)
    grads.push_back(p.grad());

  std::vector<std::array<Eigen::Index, 3>> slots;
  for (std::size_t t = 0; t < params.size(); t++)
    for (Eigen::Index r = 0; r < params[t].rows(); r++)
      for (Eigen::Index c = 0; c < params[t].cols(); c++)
        slots.push_back({static_cast<Eigen::Index>(t), r, c});
  if (n_samples > 0 && static_cast<std::size_t>(n_samples) < slots.size()) {
    for (int i = 0; i < n_samples; i++)
      std::swap(slots[i], slots[i + rng.index(slots.size() - i)]);
    slots.resize(static_cast<std::size_t>(n_samples));
  }

  mcf::ad::NoGradGuard guard;
  std::vector<GradSample> out;
  for (const auto &[t, r, c] : slots) {
    auto &p = params[static_cast<std::size_t>(t)];
    const double orig = p.value()(r, c);
    p.mutable_value()(r, c) = orig + step;
    const double up = loss().item();
    p.mutable_value()(r, c) = orig - step;
    const double down = loss().item();
    p.mutable_value()(r, c) = orig;
    const double numeric = (up - down) / (2.0 * step);
    const double analytic = grads[static_cast<std::size_t>(t)](r, c);
    out.push_back({static_cast<std::size_t>(t), r, c, analytic, numeric,
                   rel_error(analytic, numeric)});
  }
  return out;
}

inline double worst(const std::vector<GradSample> &s) {
  double w = 0.0;
  for (const auto &x : s)
    w = std::max(w, x.rel_error);
  return w;
}

} // namespace test
