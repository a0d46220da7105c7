#include "fragvqa/sampler.hpp"

#include <algorithm>
#include <cstring>
#include <stdexcept>

#include "fragvqa/error.hpp"

namespace fragvqa {

std::string_view to_string(Alignment a) {
  return a == Alignment::kPerCube ? "per_cube" : "per_clip";
}
std::string_view to_string(OffsetPolicy p) {
  return p == OffsetPolicy::kRandom ? "random" : "centered";
}
std::string_view to_string(TemporalMode m) {
  return m == TemporalMode::kSegmented ? "segmented" : "contiguous";
}

Alignment parse_alignment(std::string_view s) {
  if (s == "per_cube") return Alignment::kPerCube;
  if (s == "per_clip") return Alignment::kPerClip;
  throw std::invalid_argument("unknown alignment '" + std::string(s) + "'");
}
OffsetPolicy parse_offset_policy(std::string_view s) {
  if (s == "random") return OffsetPolicy::kRandom;
  if (s == "centered") return OffsetPolicy::kCentered;
  throw std::invalid_argument("unknown offset policy '" + std::string(s) + "'");
}
TemporalMode parse_temporal_mode(std::string_view s) {
  if (s == "segmented") return TemporalMode::kSegmented;
  if (s == "contiguous") return TemporalMode::kContiguous;
  throw std::invalid_argument("unknown temporal mode '" + std::string(s) + "'");
}

void SamplingConfig::validate() const {
  if (temporal_segments < 1 || spatial_grids < 1 || frames_per_cube < 1 || patch_side < 1)
    throw std::invalid_argument("sampling geometry fields must all be >= 1");
}

SamplingConfig faster_vqa_config() { return {}; }

SamplingConfig faster_vqa_mt_config() {
  SamplingConfig c;
  c.temporal_segments = 4;
  return c;
}

SamplingConfig faster_vqa_ms_config() {
  SamplingConfig c;
  c.spatial_grids = 5;
  return c;
}

SamplingConfig fast_vqa_config() {
  SamplingConfig c;
  c.temporal_mode = TemporalMode::kContiguous;
  c.alignment = Alignment::kPerClip;
  return c;
}

SamplingConfig fast_vqa_m_config() {
  SamplingConfig c = fast_vqa_config();
  c.temporal_segments = 4;
  c.spatial_grids = 4;
  return c;
}

SamplingConfig preset_config(std::string_view name) {
  if (name == "fastervqa") return faster_vqa_config();
  if (name == "fastervqa-mt") return faster_vqa_mt_config();
  if (name == "fastervqa-ms") return faster_vqa_ms_config();
  if (name == "fast-vqa") return fast_vqa_config();
  if (name == "fast-vqa-m") return fast_vqa_m_config();
  throw std::invalid_argument("unknown preset '" + std::string(name) + "'");
}

std::vector<Interval> uniform_bounds(std::int64_t extent, std::int64_t cells) {
  std::vector<Interval> out;
  out.reserve(static_cast<std::size_t>(cells));
  for (std::int64_t n = 0; n < cells; ++n)
    out.push_back({n * extent / cells, (n + 1) * extent / cells});
  return out;
}

namespace {

std::int64_t min_length(const std::vector<Interval>& bounds) {
  std::int64_t m = bounds.front().length();
  for (const auto& b : bounds) m = std::min(m, b.length());
  return m;
}

void check_spatial(const SamplingConfig& config, VideoDims dims) {
  const std::int64_t g = config.spatial_grids;
  if (g > dims.h)
    throw GeometryError("h", "G_f=" + std::to_string(g) + " exceeds height " +
                                 std::to_string(dims.h));
  if (g > dims.w)
    throw GeometryError("w", "G_f=" + std::to_string(g) + " exceeds width " +
                                 std::to_string(dims.w));
  if (dims.h / g < config.patch_side)
    throw GeometryError("h", "grid height " + std::to_string(dims.h / g) +
                                 " is smaller than S_f=" + std::to_string(config.patch_side));
  if (dims.w / g < config.patch_side)
    throw GeometryError("w", "grid width " + std::to_string(dims.w / g) +
                                 " is smaller than S_f=" + std::to_string(config.patch_side));
}

std::int64_t run_length(const SamplingConfig& config) {
  return config.temporal_segments * config.frames_per_cube;
}

}  // namespace

GridPartition partition_grids(const SamplingConfig& config, VideoDims dims,
                              std::int64_t run_start) {
  config.validate();
  if (dims.t <= 0 || dims.h <= 0 || dims.w <= 0)
    throw ShapeError("partition_grids: dimensions must be positive");
  GridPartition p;
  if (config.temporal_mode == TemporalMode::kSegmented) {
    if (config.temporal_segments > dims.t)
      throw GeometryError("t", "G_t=" + std::to_string(config.temporal_segments) +
                                   " exceeds frame count " + std::to_string(dims.t));
    p.segments = uniform_bounds(dims.t, config.temporal_segments);
    if (min_length(p.segments) < config.frames_per_cube)
      throw GeometryError("t", "segment length " + std::to_string(min_length(p.segments)) +
                                   " is shorter than T_f=" +
                                   std::to_string(config.frames_per_cube));
  } else {
    const std::int64_t run = run_length(config);
    if (run > dims.t)
      throw GeometryError("t", "contiguous run of " + std::to_string(run) +
                                   " frames exceeds frame count " + std::to_string(dims.t));
    if (run_start < 0 || run_start + run > dims.t)
      throw GeometryError("t", "run start " + std::to_string(run_start) + " out of range");
    for (std::int64_t k = 0; k < config.temporal_segments; ++k)
      p.segments.push_back({run_start + k * config.frames_per_cube,
                            run_start + (k + 1) * config.frames_per_cube});
  }
  check_spatial(config, dims);
  p.rows = uniform_bounds(dims.h, config.spatial_grids);
  p.cols = uniform_bounds(dims.w, config.spatial_grids);
  return p;
}

std::vector<CubeOffset> sample_offsets(const SamplingConfig& config,
                                       const GridPartition& partition, CounterRng& rng) {
  const auto G_t = static_cast<std::size_t>(config.temporal_segments);
  const auto G_f = static_cast<std::size_t>(config.spatial_grids);
  if (partition.segments.size() != G_t || partition.rows.size() != G_f ||
      partition.cols.size() != G_f)
    throw ShapeError("sample_offsets: partition does not match config");

  const bool centered = config.offset_policy == OffsetPolicy::kCentered;
  auto draw = [&](std::int64_t cell, std::int64_t size, const char* axis) -> std::int64_t {
    const std::int64_t slack = cell - size;
    if (slack < 0) throw GeometryError(axis, std::string("cube exceeds its cell along ") + axis);
    if (centered) return slack / 2;
    return static_cast<std::int64_t>(rng.uniform_inclusive(static_cast<std::uint64_t>(slack)));
  };

  std::vector<std::int64_t> t0(G_t);
  for (std::size_t k = 0; k < G_t; ++k) {
    t0[k] = draw(partition.segments[k].length(), config.frames_per_cube, "t");
  }

  std::vector<CubeOffset> out;
  out.reserve(G_t * G_f * G_f);
  for (std::size_t k = 0; k < G_t; ++k) {
    for (std::size_t i = 0; i < G_f; ++i) {
      for (std::size_t j = 0; j < G_f; ++j) {
        CubeOffset c;
        c.k = static_cast<std::int64_t>(k);
        c.i = static_cast<std::int64_t>(i);
        c.j = static_cast<std::int64_t>(j);
        c.t0 = t0[k];
        if (config.alignment == Alignment::kPerClip && k > 0) {
          const auto& first = out[i * G_f + j];
          c.y0 = first.y0;
          c.x0 = first.x0;
        } else {
          c.y0 = draw(partition.rows[i].length(), config.patch_side, "h");
          c.x0 = draw(partition.cols[j].length(), config.patch_side, "w");
        }
        out.push_back(c);
      }
    }
  }
  return out;
}

Fragment splice(const VideoVolume& video, std::span<const CubeOffset> offsets,
                const SamplingConfig& config, std::int64_t run_start) {
  const GridPartition p = partition_grids(config, video.dims(), run_start);
  if (static_cast<std::int64_t>(offsets.size()) != config.cube_count())
    throw ShapeError("splice: expected " + std::to_string(config.cube_count()) +
                     " cube offsets, got " + std::to_string(offsets.size()));

  Fragment f;
  f.config = config;
  f.source = video.dims();
  f.run_start = run_start;
  f.shape = config.fragment_shape(video.channels());
  f.data.resize(static_cast<std::size_t>(f.shape.size()));
  f.provenance.assign(offsets.begin(), offsets.end());

  const std::int64_t G = config.spatial_grids, Tf = config.frames_per_cube,
                     Sf = config.patch_side, C = video.channels();
  const auto row_bytes = static_cast<std::size_t>(Sf * C);
  for (std::size_t slot = 0; slot < offsets.size(); ++slot) {
    const CubeOffset& c = offsets[slot];
    if (c.k < 0 || c.k >= config.temporal_segments || c.i < 0 || c.i >= G || c.j < 0 || c.j >= G)
      throw ShapeError("splice: cube index out of range");
    const Interval& seg = p.segments[static_cast<std::size_t>(c.k)];
    const Interval& row = p.rows[static_cast<std::size_t>(c.i)];
    const Interval& col = p.cols[static_cast<std::size_t>(c.j)];
    if (c.t0 < 0 || c.t0 + Tf > seg.length() || c.y0 < 0 || c.y0 + Sf > row.length() ||
        c.x0 < 0 || c.x0 + Sf > col.length())
      throw ShapeError("splice: cube offset falls outside its grid cell");

    const auto s = static_cast<std::int64_t>(slot);
    const std::int64_t dk = s / (G * G), di = (s / G) % G, dj = s % G;
    for (std::int64_t t = 0; t < Tf; ++t) {
      for (std::int64_t y = 0; y < Sf; ++y) {
        const std::uint8_t* src =
            video.data().data() + video.index(seg.begin + c.t0 + t, row.begin + c.y0 + y,
                                              col.begin + c.x0);
        const auto dst = static_cast<std::size_t>(
            (((dk * Tf + t) * f.shape.h + di * Sf + y) * f.shape.w + dj * Sf) * C);
        std::memcpy(f.data.data() + dst, src, row_bytes);
      }
    }
  }
  return f;
}

std::int64_t required_upscale(const SamplingConfig& config, VideoDims dims) {
  config.validate();
  if (dims.h <= 0 || dims.w <= 0) throw ShapeError("required_upscale: empty frame");
  auto feasible = [&](std::int64_t m) {
    return (m * dims.h) / config.spatial_grids >= config.patch_side &&
           (m * dims.w) / config.spatial_grids >= config.patch_side;
  };
  std::int64_t m = 1;
  while (!feasible(m)) ++m;
  return m;
}

Fragment sample_fragment(const VideoVolume& video, const SamplingConfig& config,
                         CounterRng& rng) {
  config.validate();
  std::int64_t factor = 1;
  if (config.allow_upscale) factor = required_upscale(config, video.dims());
  const VideoVolume scaled_storage = factor > 1 ? upscale_nearest(video, factor) : VideoVolume{};
  const VideoVolume& source = factor > 1 ? scaled_storage : video;

  std::int64_t run_start = 0;
  if (config.temporal_mode == TemporalMode::kContiguous) {
    const std::int64_t run = run_length(config);
    if (run > source.frames())
      throw GeometryError("t", "contiguous run of " + std::to_string(run) +
                                   " frames exceeds frame count " +
                                   std::to_string(source.frames()));
    const std::int64_t slack = source.frames() - run;
    run_start = config.offset_policy == OffsetPolicy::kCentered
                    ? slack / 2
                    : static_cast<std::int64_t>(
                          rng.uniform_inclusive(static_cast<std::uint64_t>(slack)));
  }
  const GridPartition p = partition_grids(config, source.dims(), run_start);
  const auto offsets = sample_offsets(config, p, rng);
  Fragment f = splice(source, offsets, config, run_start);
  f.source = video.dims();
  f.upscale = factor;
  return f;
}

Fragment sample_fragment(const VideoVolume& video, const SamplingConfig& config) {
  CounterRng rng(config.seed);
  return sample_fragment(video, config, rng);
}

std::vector<Fragment> sample_clips(const VideoVolume& video, const SamplingConfig& config,
                                   std::int64_t count) {
  if (count < 1) throw std::invalid_argument("sample_clips: count must be >= 1");
  std::vector<Fragment> out;
  out.reserve(static_cast<std::size_t>(count));
  for (std::int64_t n = 0; n < count; ++n) {
    SamplingConfig c = config;
    c.seed = config.seed + static_cast<std::uint64_t>(n);
    out.push_back(sample_fragment(video, c));
  }
  return out;
}

ProvenanceReport verify_provenance(const Fragment& fragment, const VideoVolume& video) {
  ProvenanceReport report;
  auto fail = [&](std::size_t slot, std::int64_t t, std::int64_t y, std::int64_t x,
                  std::int64_t c, std::string reason) {
    report.ok = false;
    report.first_mismatch = ProvenanceMismatch{t, y, x, c, slot, std::move(reason)};
    return report;
  };

  const SamplingConfig& cfg = fragment.config;
  if (video.dims() != fragment.source)
    return fail(0, 0, 0, 0, 0, "video dimensions differ from fragment source");
  if (fragment.shape != cfg.fragment_shape(video.channels()) ||
      static_cast<std::int64_t>(fragment.data.size()) != fragment.shape.size())
    return fail(0, 0, 0, 0, 0, "fragment shape inconsistent with its config");
  if (static_cast<std::int64_t>(fragment.provenance.size()) != cfg.cube_count())
    return fail(0, 0, 0, 0, 0, "provenance length differs from cube count");

  const VideoVolume scaled_storage =
      fragment.upscale > 1 ? upscale_nearest(video, fragment.upscale) : VideoVolume{};
  const VideoVolume& src = fragment.upscale > 1 ? scaled_storage : video;

  GridPartition p;
  try {
    p = partition_grids(cfg, src.dims(), fragment.run_start);
  } catch (const Error& e) {
    return fail(0, 0, 0, 0, 0, std::string("partition: ") + e.what());
  }

  const std::int64_t G = cfg.spatial_grids, Tf = cfg.frames_per_cube, Sf = cfg.patch_side,
                     C = src.channels();
  for (std::size_t slot = 0; slot < fragment.provenance.size(); ++slot) {
    const CubeOffset& c = fragment.provenance[slot];
    const auto s = static_cast<std::int64_t>(slot);
    const std::int64_t dk = s / (G * G), di = (s / G) % G, dj = s % G;
    if (c.k < 0 || c.k >= cfg.temporal_segments || c.i < 0 || c.i >= G || c.j < 0 || c.j >= G)
      return fail(slot, dk * Tf, di * Sf, dj * Sf, 0, "cube index out of range");
    const Interval& seg = p.segments[static_cast<std::size_t>(c.k)];
    const Interval& row = p.rows[static_cast<std::size_t>(c.i)];
    const Interval& col = p.cols[static_cast<std::size_t>(c.j)];
    if (c.t0 < 0 || c.t0 + Tf > seg.length() || c.y0 < 0 || c.y0 + Sf > row.length() ||
        c.x0 < 0 || c.x0 + Sf > col.length())
      return fail(slot, dk * Tf, di * Sf, dj * Sf, 0, "offset outside its grid cell");
    if (cfg.alignment == Alignment::kPerClip) {
      // Clip alignment: the cube from the same (i, j) in segment 0 sets (y0, x0).
      for (const auto& other : fragment.provenance) {
        if (other.k == 0 && other.i == c.i && other.j == c.j &&
            (other.y0 != c.y0 || other.x0 != c.x0))
          return fail(slot, dk * Tf, di * Sf, dj * Sf, 0,
                      "spatial offset differs across segments under per_clip alignment");
      }
    }
    for (std::int64_t t = 0; t < Tf; ++t) {
      for (std::int64_t y = 0; y < Sf; ++y) {
        for (std::int64_t x = 0; x < Sf; ++x) {
          const std::int64_t ft = dk * Tf + t, fy = di * Sf + y, fx = dj * Sf + x;
          for (std::int64_t ch = 0; ch < C; ++ch) {
            ++report.pixels_checked;
            if (fragment.at(ft, fy, fx, ch) !=
                src.at(seg.begin + c.t0 + t, row.begin + c.y0 + y, col.begin + c.x0 + x, ch))
              return fail(slot, ft, fy, fx, ch, "sample differs from its source pixel");
          }
        }
      }
    }
  }
  return report;
}

double sampled_fraction(VideoDims dims, const SamplingConfig& config) {
  const double g = static_cast<double>(config.spatial_grids) * config.patch_side;
  const double sampled = static_cast<double>(config.temporal_segments) *
                         config.frames_per_cube * g * g;
  return sampled / (static_cast<double>(dims.t) * dims.h * dims.w);
}

double spatial_sampled_fraction(std::int64_t height, std::int64_t width,
                                const SamplingConfig& config) {
  const double g = static_cast<double>(config.spatial_grids) * config.patch_side;
  return g * g / (static_cast<double>(height) * width);
}

Fragment permute_cubes(const Fragment& fragment, std::span<const std::size_t> perm) {
  const SamplingConfig& cfg = fragment.config;
  const auto n = static_cast<std::size_t>(cfg.cube_count());
  if (perm.size() != n) throw ShapeError("permute_cubes: permutation length mismatch");
  std::vector<bool> seen(n, false);
  for (auto v : perm) {
    if (v >= n || seen[v]) throw ShapeError("permute_cubes: not a permutation");
    seen[v] = true;
  }

  Fragment out = fragment;
  const std::int64_t G = cfg.spatial_grids, Tf = cfg.frames_per_cube, Sf = cfg.patch_side,
                     C = fragment.shape.c;
  const auto row_bytes = static_cast<std::size_t>(Sf * C);
  auto origin = [&](std::size_t slot, std::int64_t t, std::int64_t y) {
    const auto s = static_cast<std::int64_t>(slot);
    const std::int64_t k = s / (G * G), i = (s / G) % G, j = s % G;
    return static_cast<std::size_t>(
        (((k * Tf + t) * fragment.shape.h + i * Sf + y) * fragment.shape.w + j * Sf) * C);
  };
  for (std::size_t s = 0; s < n; ++s) {
    out.provenance[s] = fragment.provenance[perm[s]];
    for (std::int64_t t = 0; t < Tf; ++t)
      for (std::int64_t y = 0; y < Sf; ++y)
        std::memcpy(out.data.data() + origin(s, t, y),
                    fragment.data.data() + origin(perm[s], t, y), row_bytes);
  }
  return out;
}

}  // namespace fragvqa
