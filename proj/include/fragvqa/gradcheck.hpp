#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace fragvqa {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

/// Central differences of a scalar function around `point`, compared to the
/// analytic gradient. Relative error is |a - n| / max(|a|, |n|, floor).
GradCheckResult finite_diff_check(const std::function<double(std::span<const double>)>& f,
                                  std::span<const double> point,
                                  std::span<const double> analytic, double step = 1e-4,
                                  double floor = 1e-3);

/// Same, but only the coordinates in `indices` are probed.
GradCheckResult finite_diff_check(const std::function<double(std::span<const double>)>& f,
                                  std::span<const double> point,
                                  std::span<const double> analytic,
                                  std::span<const std::size_t> indices, double step = 1e-4,
                                  double floor = 1e-3);

}  // namespace fragvqa
