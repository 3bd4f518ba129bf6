#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "neo/core/tensor.hpp"

namespace neo {

struct GradCheckParam {
  std::string name;
  Tensor<double> tensor;
};

struct GradCheckOptions {
  double eps = 1e-5;
  // 0 checks every coordinate; otherwise a seeded uniform sample.
  std::size_t max_coords = 0;
  std::uint64_t seed = 0;
};

struct GradCheckResult {
  double max_rel_error = 0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double worst_analytic = 0;
  double worst_numeric = 0;
  std::size_t coords_checked = 0;
};

// Compares reverse-mode gradients of the scalar `loss` with central
// differences (f(x+eps) - f(x-eps)) / (2 eps). Relative error per coordinate
// uses max(|analytic|, |numeric|, 1e-8) as the denominator. Non-finite loss
// values throw NumericError naming the perturbed parameter.
GradCheckResult grad_check(const std::function<Tensor<double>()>& loss,
                           std::vector<GradCheckParam> params, const GradCheckOptions& options);

// Returns the loss with coordinate `index` of params[param] set to `value` and
// every other coordinate at its base value. Lets the finite differences run on
// a higher-precision copy of the same function, which lowers the roundoff
// floor (about ulp(f) / eps) below the analytic gradients being checked.
using GradCheckProbe =
    std::function<long double(std::size_t param, std::size_t index, long double value)>;

GradCheckResult grad_check(const std::function<Tensor<double>()>& loss,
                           std::vector<GradCheckParam> params, const GradCheckOptions& options,
                           const GradCheckProbe& probe);

}  // namespace neo
