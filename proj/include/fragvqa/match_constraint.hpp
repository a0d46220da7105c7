#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "fragvqa/sampler.hpp"

namespace fragvqa {

/// (t, h, w) triple; axes follow fragment order.
using Index3 = std::array<std::int64_t, 3>;

/// Separable axis-aligned pooling/downsampling stage without padding.
struct PoolStage {
  Index3 kernel{1, 1, 1};
  Index3 stride{1, 1, 1};

  /// kernel == stride on every axis.
  static PoolStage non_overlapping(Index3 kernel) { return {kernel, kernel}; }
  friend bool operator==(const PoolStage&, const PoolStage&) = default;
};

/// Stages applied to a fragment of `cube * cube_counts` pixels.
struct PoolSchedule {
  std::vector<PoolStage> stages;
  Index3 cube{1, 1, 1};         ///< (T_f, S_f, S_f)
  Index3 cube_counts{1, 1, 1};  ///< (G_t, G_f, G_f)

  Index3 input_dims() const noexcept {
    return {cube[0] * cube_counts[0], cube[1] * cube_counts[1], cube[2] * cube_counts[2]};
  }
};

/// Receptive box in original fragment pixels, half-open per axis.
struct Box {
  std::array<Interval, 3> axes;
  friend bool operator==(const Box&, const Box&) = default;
};

/// Output dims after stages 0..stage inclusive. Throws ShapeError if any
/// stage's kernel exceeds its input.
Index3 stage_output_dims(const PoolSchedule& schedule, std::size_t stage);

/// Original pixels feeding output `pixel` of stage `stage`, obtained by
/// composing the affine interval maps of stages stage..0.
Box receptive_set(const PoolSchedule& schedule, std::size_t stage, Index3 pixel);

struct MatchViolation {
  std::size_t stage = 0;
  Index3 pixel{};
  Box receptive;
  std::vector<Index3> cubes_touched;  ///< (k, i, j) of every cube the box meets
};

struct MatchReport {
  bool ok = true;
  std::optional<MatchViolation> violation;
  /// For each axis, the number of stages after which a cube is one pixel,
  /// or -1 if that never happens within the schedule.
  Index3 reduced_after{-1, -1, -1};

  explicit operator bool() const noexcept { return ok; }
};

/// Checks that every kernel applied before a cube has been reduced to a
/// single pixel (per axis) stays inside one cube. Axes are validated
/// independently; the first violation in (stage, t, h, w) scan order is
/// reported.
MatchReport check_match(const PoolSchedule& schedule);

/// Parses "4x4x4:2x2x2" (kernel == stride) or "3x3x3/2x2x2" (kernel/stride)
/// stage lists. A single number stands for the same value on every axis.
std::vector<PoolStage> parse_stages(std::string_view text);
std::string format_stages(std::span<const PoolStage> stages);

/// Spatial patch sides in [lo, hi] for which the schedule passes with the
/// given T_f and cube counts.
std::vector<std::int64_t> suggest_patch_sides(std::span<const PoolStage> stages,
                                              std::int64_t frames_per_cube,
                                              Index3 cube_counts, std::int64_t lo = 8,
                                              std::int64_t hi = 64);

nlohmann::json match_report_json(const PoolSchedule& schedule, const MatchReport& report);

}  // namespace fragvqa
