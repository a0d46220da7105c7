#pragma once

#include <optional>
#include <span>
#include <utility>
#include <vector>

namespace fragvqa {

/// Predictions and ground-truth scores for one batch.
struct ScoreBatch {
  std::vector<double> pred;
  std::vector<double> gt;
  std::optional<std::pair<double, double>> range;

  /// Throws ShapeError on length mismatch or n < 2, DegenerateInputError on
  /// non-finite entries.
  void validate() const;
};

inline constexpr double kDefaultMonoWeight = 0.3;

/// Pairwise monotonicity loss summed over all ordered pairs (i, j):
/// max((pred_i - pred_j) * sgn(gt_j - gt_i), 0), with sgn(0) = 0.
double loss_mono(std::span<const double> pred, std::span<const double> gt);
/// Subgradient of loss_mono with respect to pred (exact off ties).
std::vector<double> loss_mono_grad(std::span<const double> pred, std::span<const double> gt);

/// (1 - cos(pred - mean, gt - mean)) / 2. Throws DegenerateInputError when
/// either centred vector is zero.
double loss_lin(std::span<const double> pred, std::span<const double> gt);
std::vector<double> loss_lin_grad(std::span<const double> pred, std::span<const double> gt);

/// loss_lin + weight * loss_mono.
double loss_fusion(std::span<const double> pred, std::span<const double> gt,
                   double mono_weight = kDefaultMonoWeight);
std::vector<double> loss_fusion_grad(std::span<const double> pred, std::span<const double> gt,
                                     double mono_weight = kDefaultMonoWeight);

/// Pearson linear correlation.
double plcc(std::span<const double> x, std::span<const double> y);
/// Spearman correlation: Pearson over average-tie ranks.
double srcc(std::span<const double> x, std::span<const double> y);
/// Kendall tau-b, O(n log n).
double krcc(std::span<const double> x, std::span<const double> y);

/// 1-based ranks, tied values share the mean of their positions.
std::vector<double> fractional_ranks(std::span<const double> v);

struct StabilityReport {
  std::vector<double> per_video_std;  ///< population standard deviation
  double mean_std = 0.0;
  double normalized_std = 0.0;        ///< mean_std / (hi - lo)
};

/// `scores[v]` holds the repeated predictions for video v (at least two each).
StabilityReport stability_report(const std::vector<std::vector<double>>& scores, double lo,
                                 double hi);

}  // namespace fragvqa
