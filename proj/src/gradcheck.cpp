#include "fragvqa/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fragvqa/error.hpp"

namespace fragvqa {

GradCheckResult finite_diff_check(const std::function<double(std::span<const double>)>& f,
                                  std::span<const double> point,
                                  std::span<const double> analytic, double step, double floor) {
  std::vector<std::size_t> all(point.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  return finite_diff_check(f, point, analytic, all, step, floor);
}

GradCheckResult finite_diff_check(const std::function<double(std::span<const double>)>& f,
                                  std::span<const double> point,
                                  std::span<const double> analytic,
                                  std::span<const std::size_t> indices, double step,
                                  double floor) {
  if (point.size() != analytic.size()) throw ShapeError("gradient check: size mismatch");
  std::vector<double> x(point.begin(), point.end());
  GradCheckResult r;
  for (std::size_t i : indices) {
    if (i >= x.size()) throw ShapeError("gradient check: index out of range");
    const double saved = x[i];
    x[i] = saved + step;
    const double up = f(x);
    x[i] = saved - step;
    const double down = f(x);
    x[i] = saved;
    const double numeric = (up - down) / (2.0 * step);
    const double a = analytic[i];
    const double err = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
    if (err > r.max_rel_error || (r.max_rel_error == 0.0 && i == indices.front())) {
      r.max_rel_error = err;
      r.worst_index = i;
      r.analytic = a;
      r.numeric = numeric;
    }
  }
  return r;
}

}  // namespace fragvqa
