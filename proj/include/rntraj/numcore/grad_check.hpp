#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "rntraj/numcore/tensor.hpp"

namespace rntraj::nc {

namespace detail {

inline void check_step(double h) {
  if (!(h >= 1e-7 && h <= 1e-3)) throw ContractError("grad_check: step must lie in [1e-7, 1e-3]");
}

inline double scalar_output(const Tensor& y) {
  if (y.size() != 1) throw ContractError("grad_check: function output is not scalar");
  return y.item();
}

}  // namespace detail

// Max over all components of all `params` of
//   |analytic - central difference| / max(1, |analytic|).
// `f` must rebuild its graph from the current parameter values on each call.
inline double grad_check_params(const std::function<Tensor()>& f, std::vector<Tensor> params,
                                double h) {
  detail::check_step(h);
  for (Tensor& p : params) p.zero_grad();
  Tensor y = f();
  detail::scalar_output(y);
  y.backward();
  std::vector<std::vector<double>> analytic;
  for (const Tensor& p : params) analytic.push_back(p.grad());

  NoGradGuard guard;
  double worst = 0.0;
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& w = params[k].data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double orig = w[i];
      w[i] = orig + h;
      const double fp = detail::scalar_output(f());
      w[i] = orig - h;
      const double fm = detail::scalar_output(f());
      w[i] = orig;
      const double numeric = (fp - fm) / (2.0 * h);
      const double a = analytic[k][i];
      worst = std::max(worst, std::abs(a - numeric) / std::max(1.0, std::abs(a)));
    }
  }
  return worst;
}

// Single-input form: checks d f(x) / dx at x.
inline double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double h) {
  Tensor leaf(x.shape(), x.data(), true);
  return grad_check_params([&] { return f(leaf); }, {leaf}, h);
}

}  // namespace rntraj::nc
