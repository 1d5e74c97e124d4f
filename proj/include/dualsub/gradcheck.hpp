#pragma once

// Central finite-difference verification of tape gradients. Meant to run in
// 64-bit mode; float mode has nowhere near the headroom for eps ~ 1e-5.

#include <vector>

#include "dualsub/ops.hpp"

namespace dualsub {

struct GradCheckOptions {
  double eps = 1e-5;
  int samples_per_tensor = 6;  // coordinates sampled per parameter tensor
  uint64_t seed = 7;
};

// |a - b| / max(|a|, |b|, 1e-8)
inline double relative_error(double a, double b) {
  double denom = std::max(std::abs(a), std::max(std::abs(b), 1e-8));
  return std::abs(a - b) / denom;
}

// f must be deterministic: called with a tape for the analytic pass and
// with nullptr for the two perturbed forward passes per coordinate.
template <typename F>
double gradient_check(const std::vector<Tensor<double>>& params, F f,
                      const GradCheckOptions& opt = {}) {
  if (opt.eps < 1e-7 || opt.eps > 1e-4)
    throw UsageError("gradient_check: eps out of the supported range");
  for (const auto& p : params) const_cast<Tensor<double>&>(p).ensure_grad();
  for (const auto& p : params) const_cast<Tensor<double>&>(p).zero_grad();

  Tape<double> tape;
  Tensor<double> loss = f(&tape);
  if (loss.numel() != 1) throw UsageError("gradient_check: f must return a scalar");
  if (!std::isfinite(loss.value())) throw NumericError("gradient_check: non-finite loss");
  loss.ensure_grad();
  loss.gradv()[0] = 1.0;
  tape.backward();

  Rng rng(opt.seed);
  double max_rel = 0.0;
  for (const auto& p : params) {
    const size_t n = p.numel();
    if (n == 0) continue;
    const int k = std::min<size_t>(n, size_t(opt.samples_per_tensor));
    for (int s = 0; s < k; ++s) {
      const size_t idx = size_t(rng.next_u64() % n);
      double& slot = p.vals()[idx];
      const double orig = slot;
      slot = orig + opt.eps;
      const double lp = f(static_cast<Tape<double>*>(nullptr)).value();
      slot = orig - opt.eps;
      const double lm = f(static_cast<Tape<double>*>(nullptr)).value();
      slot = orig;
      if (!std::isfinite(lp) || !std::isfinite(lm))
        throw NumericError("gradient_check: non-finite loss");
      const double fd = (lp - lm) / (2.0 * opt.eps);
      const double analytic = p.gradv()[idx];
      max_rel = std::max(max_rel, relative_error(analytic, fd));
    }
  }
  return max_rel;
}

}  // namespace dualsub
