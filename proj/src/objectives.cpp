#include "fragvqa/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "fragvqa/error.hpp"

namespace fragvqa {

namespace {

void check_pair(std::span<const double> a, std::span<const double> b, const char* what) {
  if (a.size() != b.size())
    throw ShapeError(std::string(what) + ": length mismatch (" + std::to_string(a.size()) +
                     " vs " + std::to_string(b.size()) + ")");
  if (a.size() < 2) throw ShapeError(std::string(what) + ": need at least two samples");
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!std::isfinite(a[i]) || !std::isfinite(b[i]))
      throw DegenerateInputError(std::string(what) + ": non-finite input");
  }
}

double sgn(double v) { return (v > 0.0) - (v < 0.0); }

std::vector<double> centred(std::span<const double> v) {
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] - mean;
  return out;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

struct Centred {
  std::vector<double> a, b;
  double na = 0, nb = 0, r = 0;
};

Centred pearson_parts(std::span<const double> x, std::span<const double> y, const char* what) {
  check_pair(x, y, what);
  Centred c{centred(x), centred(y)};
  c.na = std::sqrt(dot(c.a, c.a));
  c.nb = std::sqrt(dot(c.b, c.b));
  if (c.na == 0.0 || c.nb == 0.0)
    throw DegenerateInputError(std::string(what) + ": constant input");
  c.r = std::clamp(dot(c.a, c.b) / (c.na * c.nb), -1.0, 1.0);
  return c;
}

// Merge sort that counts inversions (pairs out of order) in `v`.
std::int64_t sort_count_swaps(std::vector<double>& v, std::vector<double>& scratch,
                              std::size_t lo, std::size_t hi) {
  if (hi - lo < 2) return 0;
  const std::size_t mid = lo + (hi - lo) / 2;
  std::int64_t swaps = sort_count_swaps(v, scratch, lo, mid) + sort_count_swaps(v, scratch, mid, hi);
  std::size_t i = lo, j = mid, o = lo;
  while (i < mid && j < hi) {
    if (v[j] < v[i]) {
      swaps += static_cast<std::int64_t>(mid - i);
      scratch[o++] = v[j++];
    } else {
      scratch[o++] = v[i++];
    }
  }
  while (i < mid) scratch[o++] = v[i++];
  while (j < hi) scratch[o++] = v[j++];
  std::copy(scratch.begin() + static_cast<std::ptrdiff_t>(lo),
            scratch.begin() + static_cast<std::ptrdiff_t>(hi),
            v.begin() + static_cast<std::ptrdiff_t>(lo));
  return swaps;
}

std::int64_t tied_pairs(std::span<const double> sorted) {
  std::int64_t total = 0, run = 1;
  for (std::size_t i = 1; i <= sorted.size(); ++i) {
    if (i < sorted.size() && sorted[i] == sorted[i - 1]) {
      ++run;
    } else {
      total += run * (run - 1) / 2;
      run = 1;
    }
  }
  return total;
}

}  // namespace

void ScoreBatch::validate() const {
  check_pair(pred, gt, "score batch");
  if (range && !(range->second > range->first))
    throw std::invalid_argument("score batch: range must satisfy lo < hi");
}

double loss_mono(std::span<const double> pred, std::span<const double> gt) {
  check_pair(pred, gt, "loss_mono");
  double total = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i)
    for (std::size_t j = 0; j < pred.size(); ++j)
      total += std::max((pred[i] - pred[j]) * sgn(gt[j] - gt[i]), 0.0);
  return total;
}

std::vector<double> loss_mono_grad(std::span<const double> pred, std::span<const double> gt) {
  check_pair(pred, gt, "loss_mono");
  std::vector<double> g(pred.size(), 0.0);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    for (std::size_t j = 0; j < pred.size(); ++j) {
      const double s = sgn(gt[j] - gt[i]);
      if ((pred[i] - pred[j]) * s > 0.0) {
        g[i] += s;
        g[j] -= s;
      }
    }
  }
  return g;
}

double loss_lin(std::span<const double> pred, std::span<const double> gt) {
  return (1.0 - pearson_parts(pred, gt, "loss_lin").r) / 2.0;
}

std::vector<double> loss_lin_grad(std::span<const double> pred, std::span<const double> gt) {
  const Centred c = pearson_parts(pred, gt, "loss_lin");
  // d r / d pred = b / (|a||b|) - r a / |a|^2 (already centred).
  std::vector<double> g(pred.size());
  for (std::size_t i = 0; i < g.size(); ++i)
    g[i] = -0.5 * (c.b[i] / (c.na * c.nb) - c.r * c.a[i] / (c.na * c.na));
  return g;
}

double loss_fusion(std::span<const double> pred, std::span<const double> gt,
                   double mono_weight) {
  return loss_lin(pred, gt) + mono_weight * loss_mono(pred, gt);
}

std::vector<double> loss_fusion_grad(std::span<const double> pred, std::span<const double> gt,
                                     double mono_weight) {
  auto g = loss_lin_grad(pred, gt);
  const auto m = loss_mono_grad(pred, gt);
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += mono_weight * m[i];
  return g;
}

double plcc(std::span<const double> x, std::span<const double> y) {
  return pearson_parts(x, y, "plcc").r;
}

std::vector<double> fractional_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i + 1;
    while (j < order.size() && v[order[j]] == v[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + 1 + j);  // mean of positions i+1..j
    for (std::size_t k = i; k < j; ++k) ranks[order[k]] = avg;
    i = j;
  }
  return ranks;
}

double srcc(std::span<const double> x, std::span<const double> y) {
  check_pair(x, y, "srcc");
  const auto rx = fractional_ranks(x);
  const auto ry = fractional_ranks(y);
  return pearson_parts(rx, ry, "srcc").r;
}

double krcc(std::span<const double> x, std::span<const double> y) {
  check_pair(x, y, "krcc");
  const std::size_t n = x.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return x[a] < x[b] || (x[a] == x[b] && y[a] < y[b]);
  });

  std::vector<double> xs(n), ys(n);
  for (std::size_t i = 0; i < n; ++i) {
    xs[i] = x[order[i]];
    ys[i] = y[order[i]];
  }
  const std::int64_t ties_x = tied_pairs(xs);
  std::int64_t ties_xy = 0, run = 1;
  for (std::size_t i = 1; i <= n; ++i) {
    if (i < n && xs[i] == xs[i - 1] && ys[i] == ys[i - 1]) {
      ++run;
    } else {
      ties_xy += run * (run - 1) / 2;
      run = 1;
    }
  }
  std::vector<double> scratch(n);
  const std::int64_t swaps = sort_count_swaps(ys, scratch, 0, n);
  const std::int64_t ties_y = tied_pairs(ys);

  const auto pairs = static_cast<std::int64_t>(n * (n - 1) / 2);
  const double denom = std::sqrt(static_cast<double>(pairs - ties_x)) *
                       std::sqrt(static_cast<double>(pairs - ties_y));
  if (denom == 0.0) throw DegenerateInputError("krcc: constant input");
  // concordant - discordant
  const auto s = static_cast<double>(pairs - ties_x - ties_y + ties_xy - 2 * swaps);
  return std::clamp(s / denom, -1.0, 1.0);
}

StabilityReport stability_report(const std::vector<std::vector<double>>& scores, double lo,
                                 double hi) {
  if (scores.empty()) throw std::invalid_argument("stability_report: no videos");
  if (!(hi > lo)) throw std::invalid_argument("stability_report: range must satisfy lo < hi");
  StabilityReport r;
  for (const auto& repeats : scores) {
    if (repeats.size() < 2)
      throw std::invalid_argument("stability_report: every video needs at least two repeats");
    const double n = static_cast<double>(repeats.size());
    const double mean = std::accumulate(repeats.begin(), repeats.end(), 0.0) / n;
    double ss = 0.0;
    for (double v : repeats) ss += (v - mean) * (v - mean);
    r.per_video_std.push_back(std::sqrt(ss / n));
  }
  r.mean_std = std::accumulate(r.per_video_std.begin(), r.per_video_std.end(), 0.0) /
               static_cast<double>(r.per_video_std.size());
  r.normalized_std = r.mean_std / (hi - lo);
  return r;
}

}  // namespace fragvqa
