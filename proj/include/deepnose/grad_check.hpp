#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "deepnose/autodiff.hpp"
#include "deepnose/common.hpp"

namespace deepnose {

struct GradCheckResult {
  double max_rel_error = 0;
  double max_abs_error = 0;
  std::size_t checked = 0;
  std::string worst;
};

// Central-difference check of analytic gradients.  loss_fn rebuilds the graph
// from the shared parameter nodes on every call and returns the scalar loss
// node.  For tensors above max_coords entries a seeded sample of coordinates
// is probed instead of all of them.  The relative error denominator is
// floored to keep finite-difference noise on near-zero gradients from
// dominating the report.
template <typename LossFn>
GradCheckResult grad_check(LossFn&& loss_fn, const std::vector<NodePtr<double>>& params, double step = 1e-5,
                           std::size_t max_coords = 32, std::uint64_t seed = 20240607,
                           double denom_floor = 1e-3) {
  for (const auto& p : params) p->zero_grad();
  auto root = loss_fn();
  backward(root);
  std::vector<Tensor<double>> analytic;
  analytic.reserve(params.size());
  for (const auto& p : params) {
    analytic.push_back(p->ensure_grad());
    p->zero_grad();
  }

  auto eval = [&]() {
    NoGradGuard guard;
    return loss_fn()->value.v[0];
  };

  Rng rng(seed);
  GradCheckResult res;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto& p = params[pi];
    const std::size_t n = p->value.numel();
    std::vector<std::size_t> coords;
    if (n <= max_coords) {
      coords.resize(n);
      for (std::size_t i = 0; i < n; ++i) coords[i] = i;
    } else {
      // sample without replacement via a partial shuffle
      std::vector<std::size_t> all(n);
      for (std::size_t i = 0; i < n; ++i) all[i] = i;
      for (std::size_t i = 0; i < max_coords; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.below(static_cast<std::uint64_t>(n - i)));
        std::swap(all[i], all[j]);
      }
      coords.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(max_coords));
    }
    for (std::size_t c : coords) {
      const double saved = p->value.v[c];
      if (saved == 0.0) continue;  // exact kink of relu/maxpool; subgradient point, skipped
      p->value.v[c] = saved + step;
      const double f_plus = eval();
      p->value.v[c] = saved - step;
      const double f_minus = eval();
      p->value.v[c] = saved;
      const double numeric = (f_plus - f_minus) / (2 * step);
      const double a = analytic[pi].v[c];
      const double abs_err = std::abs(a - numeric);
      const double rel = abs_err / std::max({std::abs(a), std::abs(numeric), denom_floor});
      ++res.checked;
      if (abs_err > res.max_abs_error) res.max_abs_error = abs_err;
      if (rel > res.max_rel_error) {
        res.max_rel_error = rel;
        res.worst = "param " + std::to_string(pi) + " coord " + std::to_string(c) + ": analytic " +
                    format_double(a) + " vs numeric " + format_double(numeric);
      }
    }
  }
  return res;
}

}  // namespace deepnose
