#include "neo/core/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "neo/core/errors.hpp"
#include "neo/core/rng.hpp"

namespace neo {

GradCheckResult grad_check(const std::function<Tensor<double>()>& loss,
                           std::vector<GradCheckParam> params, const GradCheckOptions& options) {
  // Probe the same double-precision tensors the reverse pass used.
  auto probe = [&](std::size_t param, std::size_t index, long double value) -> long double {
    auto values = params[param].tensor.mutable_values();
    const double original = values[index];
    values[index] = static_cast<double>(value);
    NoGradGuard guard;
    const double v = loss().item();
    values[index] = original;
    return v;
  };
  return grad_check(loss, params, options, probe);
}

GradCheckResult grad_check(const std::function<Tensor<double>()>& loss,
                           std::vector<GradCheckParam> params, const GradCheckOptions& options,
                           const GradCheckProbe& probe) {
  if (!(options.eps > 0)) throw ConfigError("grad_check: eps must be positive");

  for (auto& p : params) {
    p.tensor.set_requires_grad(true);
    p.tensor.zero_grad();
  }
  const Tensor<double> root = loss();
  if (!std::isfinite(root.item())) throw NumericError("grad_check: non-finite loss at the base point");
  root.backward();

  std::vector<std::vector<double>> analytic;
  std::vector<std::size_t> offsets;
  std::size_t total = 0;
  for (auto& p : params) {
    const auto g = p.tensor.grad();
    analytic.emplace_back(p.tensor.numel(), 0.0);
    std::copy(g.begin(), g.end(), analytic.back().begin());
    offsets.push_back(total);
    total += p.tensor.numel();
  }

  std::vector<std::size_t> coords(total);
  std::iota(coords.begin(), coords.end(), std::size_t{0});
  if (options.max_coords != 0 && options.max_coords < total) {
    Rng rng(options.seed);
    for (std::size_t i = 0; i < options.max_coords; ++i) {
      const auto j = i + static_cast<std::size_t>(rng.next() % (total - i));
      std::swap(coords[i], coords[j]);
    }
    coords.resize(options.max_coords);
    std::sort(coords.begin(), coords.end());
  }

  GradCheckResult result;
  for (const auto flat : coords) {
    const auto pi = static_cast<std::size_t>(
        std::upper_bound(offsets.begin(), offsets.end(), flat) - offsets.begin() - 1);
    const std::size_t idx = flat - offsets[pi];
    auto& p = params[pi];
    const long double original = p.tensor.values()[idx];
    const long double eps = options.eps;
    const long double up = probe(pi, idx, original + eps);
    const long double down = probe(pi, idx, original - eps);
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw NumericError("grad_check: non-finite loss perturbing '" + p.name + "'[" +
                         std::to_string(idx) + "]");
    }

    const double numeric = static_cast<double>((up - down) / (2 * eps));
    const double a = analytic[pi][idx];
    const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
    const double rel = std::abs(a - numeric) / denom;
    ++result.coords_checked;
    if (rel > result.max_rel_error || result.coords_checked == 1) {
      result.max_rel_error = rel;
      result.worst_param = p.name;
      result.worst_index = idx;
      result.worst_analytic = a;
      result.worst_numeric = numeric;
    }
  }
  return result;
}

}  // namespace neo
