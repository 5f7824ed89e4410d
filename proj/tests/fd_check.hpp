#pragma once

#include <cmath>
#include <functional>

#include "msdp/autograd.hpp"

namespace msdp::testing {

// Central finite difference of a scalar functional at one coordinate.
inline double fd_at(const std::function<double()>& f, double* x, double h = 1e-5) {
  double orig = *x;
  *x = orig + h;
  double fp = f();
  *x = orig - h;
  double fm = f();
  *x = orig;
  return (fp - fm) / (2.0 * h);
}

inline double rel_err(double a, double b) {
  double denom = std::abs(a) + std::abs(b);
  if (denom < 1e-8) return 0.0;
  return std::abs(a - b) / denom;
}

// Checks every entry of `p`'s analytic gradient (already accumulated in
// p.grad) against central differences of `loss_fn`, which must rebuild the
// whole graph from current parameter values. Returns the worst relative
// error seen.
inline double check_param_grad(Param& p, const std::function<double()>& loss_fn,
                               double h = 1e-5) {
  double worst = 0.0;
  for (int c = 0; c < p.value.cols(); ++c) {
    for (int r = 0; r < p.value.rows(); ++r) {
      double analytic = p.grad.size() ? p.grad(r, c) : 0.0;
      double numeric = fd_at(loss_fn, &p.value(r, c), h);
      worst = std::max(worst, rel_err(analytic, numeric));
    }
  }
  return worst;
}

// Same, sampling a fixed stride of entries (for big matrices).
inline double check_param_grad_sampled(Param& p, const std::function<double()>& loss_fn,
                                       int stride, double h = 1e-5) {
  double worst = 0.0;
  int i = 0;
  for (int c = 0; c < p.value.cols(); ++c) {
    for (int r = 0; r < p.value.rows(); ++r, ++i) {
      if (i % stride != 0) continue;
      double analytic = p.grad.size() ? p.grad(r, c) : 0.0;
      double numeric = fd_at(loss_fn, &p.value(r, c), h);
      worst = std::max(worst, rel_err(analytic, numeric));
    }
  }
  return worst;
}

}  // namespace msdp::testing
