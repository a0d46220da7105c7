#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fragvqa/rng.hpp"
#include "fragvqa/video.hpp"

namespace fragvqa {

/// How spatial offsets relate across temporal segments.
enum class Alignment {
  kPerCube,  ///< every (k, i, j) cube draws its own (y0, x0)
  kPerClip,  ///< one (y0, x0) per spatial grid, shared by all segments
};

enum class OffsetPolicy { kRandom, kCentered };

/// kSegmented splits [0, T) into G_t uniform segments and takes T_f
/// consecutive frames from each. kContiguous takes one run of G_t*T_f
/// consecutive frames (dense frame sampling) and cuts it into G_t blocks.
enum class TemporalMode { kSegmented, kContiguous };

std::string_view to_string(Alignment a);
std::string_view to_string(OffsetPolicy p);
std::string_view to_string(TemporalMode m);
Alignment parse_alignment(std::string_view s);
OffsetPolicy parse_offset_policy(std::string_view s);
TemporalMode parse_temporal_mode(std::string_view s);

struct FragmentShape {
  std::int64_t t = 0;
  std::int64_t h = 0;
  std::int64_t w = 0;
  std::int64_t c = 0;

  std::int64_t size() const noexcept { return t * h * w * c; }
  friend bool operator==(const FragmentShape&, const FragmentShape&) = default;
};

struct SamplingConfig {
  std::int64_t temporal_segments = 8;  ///< G_t
  std::int64_t spatial_grids = 7;      ///< G_f
  std::int64_t frames_per_cube = 4;    ///< T_f
  std::int64_t patch_side = 32;        ///< S_f
  std::uint64_t seed = 0;
  Alignment alignment = Alignment::kPerCube;
  OffsetPolicy offset_policy = OffsetPolicy::kRandom;
  TemporalMode temporal_mode = TemporalMode::kSegmented;
  /// Off by default. When set, videos too small for G_f*S_f are upscaled by
  /// the smallest integer nearest-neighbour factor that makes them feasible.
  bool allow_upscale = false;

  std::int64_t cube_count() const noexcept {
    return temporal_segments * spatial_grids * spatial_grids;
  }
  FragmentShape fragment_shape(std::int64_t channels) const noexcept {
    return {temporal_segments * frames_per_cube, spatial_grids * patch_side,
            spatial_grids * patch_side, channels};
  }
  /// Throws std::invalid_argument on non-positive geometry fields.
  void validate() const;

  friend bool operator==(const SamplingConfig&, const SamplingConfig&) = default;
};

/// Named geometries. FasterVQA variants use segmented St-GMS; the FAST-VQA
/// variants use dense contiguous frames with clip-aligned patches.
SamplingConfig faster_vqa_config();
SamplingConfig faster_vqa_mt_config();
SamplingConfig faster_vqa_ms_config();
SamplingConfig fast_vqa_config();
SamplingConfig fast_vqa_m_config();
/// Looks up one of "fastervqa", "fastervqa-mt", "fastervqa-ms", "fast-vqa",
/// "fast-vqa-m".
SamplingConfig preset_config(std::string_view name);

/// Half-open index range.
struct Interval {
  std::int64_t begin = 0;
  std::int64_t end = 0;

  std::int64_t length() const noexcept { return end - begin; }
  bool contains(std::int64_t v) const noexcept { return v >= begin && v < end; }
  friend bool operator==(const Interval&, const Interval&) = default;
};

/// Uniform partition bounds. Cell n of an axis of length X split into G
/// cells is [floor(n*X/G), floor((n+1)*X/G)).
struct GridPartition {
  std::vector<Interval> segments;  ///< temporal, G_t entries
  std::vector<Interval> rows;      ///< G_f entries
  std::vector<Interval> cols;      ///< G_f entries
};

/// Uniform partition of [0, extent) into `cells` pieces.
std::vector<Interval> uniform_bounds(std::int64_t extent, std::int64_t cells);

/// One sampled mini-cube. (k, i, j) names the source segment and grid; the
/// offsets are relative to that cell's start.
struct CubeOffset {
  std::int64_t k = 0;
  std::int64_t i = 0;
  std::int64_t j = 0;
  std::int64_t t0 = 0;
  std::int64_t y0 = 0;
  std::int64_t x0 = 0;

  friend bool operator==(const CubeOffset&, const CubeOffset&) = default;
};

/// Spliced mini-cubes in (T, H, W, C) order. provenance[s] describes the
/// cube placed in slot s, where slots enumerate (k, i, j) row-major. Without
/// shuffling, slot s holds the cube sampled from cell s.
struct Fragment {
  std::vector<std::uint8_t> data;
  FragmentShape shape;
  std::vector<CubeOffset> provenance;
  SamplingConfig config;
  VideoDims source;              ///< dims of the video as loaded
  std::int64_t run_start = 0;    ///< first frame of the run in contiguous mode
  std::int64_t upscale = 1;      ///< nearest-neighbour factor applied before sampling

  std::uint8_t at(std::int64_t t, std::int64_t y, std::int64_t x,
                  std::int64_t c = 0) const noexcept {
    return data[static_cast<std::size_t>(((t * shape.h + y) * shape.w + x) * shape.c + c)];
  }
};

/// Throws GeometryError if G exceeds an axis or a cell is shorter than the
/// cube along that axis. In contiguous mode the temporal cells are the G_t
/// blocks of the run starting at `run_start`.
GridPartition partition_grids(const SamplingConfig& config, VideoDims dims,
                              std::int64_t run_start = 0);

/// Draws one CubeOffset per cell, in slot order. Draw order: temporal
/// offsets for k = 0..G_t-1, then (y0, x0) pairs in (k, i, j) row-major
/// order. kPerClip draws spatial pairs only for k = 0 and reuses them;
/// kCentered draws nothing.
std::vector<CubeOffset> sample_offsets(const SamplingConfig& config,
                                       const GridPartition& partition, CounterRng& rng);

/// Pure gather of the cubes in `offsets` into a fragment. `video` must be the
/// (possibly upscaled) volume the partition was computed on.
Fragment splice(const VideoVolume& video, std::span<const CubeOffset> offsets,
                const SamplingConfig& config, std::int64_t run_start = 0);

/// partition_grids + sample_offsets + splice. In contiguous mode the run
/// start is drawn first.
Fragment sample_fragment(const VideoVolume& video, const SamplingConfig& config,
                         CounterRng& rng);
/// Same, seeded from config.seed.
Fragment sample_fragment(const VideoVolume& video, const SamplingConfig& config);

/// `count` independent fragments seeded config.seed + n.
std::vector<Fragment> sample_clips(const VideoVolume& video, const SamplingConfig& config,
                                   std::int64_t count);

/// Smallest integer upscale factor that makes the spatial partition feasible,
/// or 1 if it already is.
std::int64_t required_upscale(const SamplingConfig& config, VideoDims dims);

struct ProvenanceMismatch {
  std::int64_t t = 0;
  std::int64_t y = 0;
  std::int64_t x = 0;
  std::int64_t c = 0;
  std::size_t slot = 0;
  std::string reason;
};

struct ProvenanceReport {
  bool ok = true;
  std::optional<ProvenanceMismatch> first_mismatch;
  std::int64_t pixels_checked = 0;

  explicit operator bool() const noexcept { return ok; }
};

/// Exhaustively checks that every fragment sample equals the source sample
/// its provenance names, that offsets lie inside their cells, and that
/// clip-aligned fragments share spatial offsets across segments.
ProvenanceReport verify_provenance(const Fragment& fragment, const VideoVolume& video);

/// Fraction of the video's samples that end up in the fragment:
/// G_t*T_f*G_f^2*S_f^2 / (T*H*W).
double sampled_fraction(VideoDims dims, const SamplingConfig& config);
/// Per-frame variant: G_f^2*S_f^2 / (H*W).
double spatial_sampled_fraction(std::int64_t height, std::int64_t width,
                                const SamplingConfig& config);

/// Rearranges cube blocks: slot s of the result receives the block (and
/// provenance) that sat in slot perm[s].
Fragment permute_cubes(const Fragment& fragment, std::span<const std::size_t> perm);

}  // namespace fragvqa
