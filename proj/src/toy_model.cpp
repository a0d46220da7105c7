#include "fragvqa/toy_model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <sstream>

#include "fragvqa/error.hpp"
#include "fragvqa/file_util.hpp"
#include "fragvqa/rng.hpp"

namespace fragvqa {

using json = nlohmann::json;

json toy_config_to_json(const ToyNetConfig& c) {
  return {{"channels", c.channels}, {"embed_patch", c.embed_patch}, {"dim", c.dim},
          {"heads", c.heads},       {"hidden", c.hidden},           {"layers", c.layers},
          {"base_window", c.base_window}, {"base_grid", c.base_grid}};
}

ToyNetConfig toy_config_from_json(const json& j) {
  ToyNetConfig c;
  try {
    c.channels = j.value("channels", c.channels);
    c.embed_patch = j.value("embed_patch", c.embed_patch);
    c.dim = j.value("dim", c.dim);
    c.heads = j.value("heads", c.heads);
    c.hidden = j.value("hidden", c.hidden);
    c.layers = j.value("layers", c.layers);
    c.base_window = j.value("base_window", c.base_window);
    c.base_grid = j.value("base_grid", c.base_grid);
  } catch (const json::exception& e) {
    throw FormatError(std::string("toy config: ") + e.what());
  }
  if (c.channels < 1 || c.dim < 1 || c.heads < 1 || c.hidden < 1 || c.layers < 0 ||
      c.dim % c.heads != 0)
    throw FormatError("toy config: inconsistent sizes");
  return c;
}

template <typename Real>
ToyNetWeights<Real>::ToyNetWeights(const ToyNetConfig& c)
    : config(c),
      embed(c.embed_patch[0] * c.embed_patch[1] * c.embed_patch[2] * c.channels, c.dim),
      head(c.dim, c.hidden) {
  for (std::int64_t n = 0; n < c.layers; ++n) layers.emplace_back(c.dim, c.heads, c.base_window);
}

template <typename Real>
std::vector<std::pair<std::string, std::span<Real>>> ToyNetWeights<Real>::tensors() {
  std::vector<std::pair<std::string, std::span<Real>>> out;
  out.emplace_back("embed.weight", std::span<Real>(embed.weight));
  out.emplace_back("embed.bias", std::span<Real>(embed.bias));
  for (std::size_t n = 0; n < layers.size(); ++n)
    for (auto& [name, span] : layers[n].tensors())
      out.emplace_back("layers." + std::to_string(n) + "." + name, span);
  for (auto& [name, span] : head.tensors()) out.emplace_back("head." + name, span);
  return out;
}

template struct ToyNetWeights<float>;
template struct ToyNetWeights<double>;

namespace {

struct TensorEntry {
  std::string name;
  std::vector<std::int64_t> shape;
  std::span<float> values;
};

std::vector<TensorEntry> tensor_entries(ToyNetWeights<float>& w) {
  std::vector<TensorEntry> out;
  auto add_linear = [&](const std::string& prefix, Linear<float>& l) {
    out.push_back({prefix + ".weight", {l.out, l.in}, l.weight});
    out.push_back({prefix + ".bias", {l.out}, l.bias});
  };
  add_linear("embed", w.embed);
  for (std::size_t n = 0; n < w.layers.size(); ++n) {
    auto& layer = w.layers[n];
    const std::string p = "layers." + std::to_string(n) + ".";
    add_linear(p + "query", layer.query);
    add_linear(p + "key", layer.key);
    add_linear(p + "value", layer.value);
    add_linear(p + "output", layer.output);
    const auto ts = static_cast<std::int64_t>(layer.tables.table_size());
    out.push_back({p + "bias.real", {layer.tables.heads, ts}, layer.tables.real});
    out.push_back({p + "bias.pseudo", {layer.tables.heads, ts}, layer.tables.pseudo});
  }
  add_linear("head.l1", w.head.l1);
  add_linear("head.l2", w.head.l2);
  return out;
}

}  // namespace

ToyNetWeights<float> init_toy_weights(const ToyNetConfig& config, std::uint64_t seed) {
  ToyNetWeights<float> w(config);
  CounterRng rng(seed);
  for (auto& entry : tensor_entries(w)) {
    if (entry.name.find("bias.real") != std::string::npos ||
        entry.name.find("bias.pseudo") != std::string::npos)
      continue;
    for (auto& v : entry.values) v = static_cast<float>(-0.1 + 0.2 * rng.uniform_real());
  }
  return w;
}

void write_toy_weights(const ToyNetWeights<float>& weights, const std::filesystem::path& path) {
  ToyNetWeights<float> copy = weights;
  json manifest = {{"format", "fragvqa-toy-weights"},
                   {"config", toy_config_to_json(weights.config)},
                   {"tensors", json::array()}};
  std::vector<std::uint8_t> blob;
  for (const auto& e : tensor_entries(copy)) {
    manifest["tensors"].push_back(
        {{"name", e.name}, {"shape", e.shape}, {"dtype", "f32"}, {"offset", blob.size()}});
    for (float v : e.values) {
      const auto bits = std::bit_cast<std::uint32_t>(v);
      for (int b = 0; b < 4; ++b) blob.push_back(static_cast<std::uint8_t>(bits >> (8 * b)));
    }
  }
  write_file_atomic(path, blob);
  write_file_atomic(with_suffix(path, ".json"), manifest.dump(1));
}

ToyNetWeights<float> read_toy_weights(const std::filesystem::path& path) {
  const auto manifest_path = with_suffix(path, ".json");
  json manifest;
  try {
    manifest = json::parse(read_file_text(manifest_path));
  } catch (const json::exception& e) {
    throw FormatError("weights manifest " + manifest_path.string() + ": " + e.what());
  }
  ToyNetWeights<float> w(toy_config_from_json(manifest.value("config", json::object())));
  const auto blob = read_file_bytes(path);
  try {
    for (auto& e : tensor_entries(w)) {
      const json* found = nullptr;
      for (const auto& t : manifest.at("tensors"))
        if (t.at("name").get<std::string>() == e.name) found = &t;
      if (!found) throw FormatError("weights: missing tensor " + e.name);
      if ((*found).at("shape").get<std::vector<std::int64_t>>() != e.shape)
        throw FormatError("weights: shape mismatch for " + e.name);
      if ((*found).value("dtype", std::string("f32")) != "f32")
        throw UnsupportedError("weights: only f32 tensors are supported");
      const auto offset = (*found).at("offset").get<std::size_t>();
      if (offset + 4 * e.values.size() > blob.size())
        throw FormatError("weights: tensor " + e.name + " runs past the end of the blob");
      for (std::size_t i = 0; i < e.values.size(); ++i) {
        std::uint32_t bits = 0;
        for (int b = 0; b < 4; ++b)
          bits |= static_cast<std::uint32_t>(blob[offset + 4 * i + static_cast<std::size_t>(b)]) << (8 * b);
        e.values[i] = std::bit_cast<float>(bits);
      }
    }
  } catch (const json::exception& e) {
    throw FormatError("weights manifest " + manifest_path.string() + ": " + e.what());
  }
  return w;
}

template <typename Real>
FeatureMap<Real> embed_fragment(const Fragment& fragment, const Linear<Real>& embed,
                                Index3 patch) {
  const FragmentShape& s = fragment.shape;
  if (s.t % patch[0] || s.h % patch[1] || s.w % patch[2])
    throw ShapeError("embed patch must tile the fragment");
  const std::int64_t C = s.c;
  if (embed.in != patch[0] * patch[1] * patch[2] * C)
    throw ShapeError("embed input size does not match patch volume");
  const Index3 dims{s.t / patch[0], s.h / patch[1], s.w / patch[2]};
  FeatureMap<Real> out(dims, embed.out);
  std::vector<Real> buf(static_cast<std::size_t>(embed.in));
  for (std::int64_t t = 0; t < dims[0]; ++t) {
    for (std::int64_t h = 0; h < dims[1]; ++h) {
      for (std::int64_t w = 0; w < dims[2]; ++w) {
        std::size_t n = 0;
        for (std::int64_t dt = 0; dt < patch[0]; ++dt)
          for (std::int64_t dy = 0; dy < patch[1]; ++dy)
            for (std::int64_t dx = 0; dx < patch[2]; ++dx)
              for (std::int64_t c = 0; c < C; ++c)
                buf[n++] = static_cast<Real>(fragment.at(t * patch[0] + dt, h * patch[1] + dy,
                                                         w * patch[2] + dx, c)) /
                           Real(255);
        embed.apply(buf.data(), out.pixel(t, h, w));
      }
    }
  }
  return out;
}

template <typename Real>
FeatureMap<Real> mean_pool(const FeatureMap<Real>& x, Index3 kernel) {
  const Index3 in = x.dims();
  for (int a = 0; a < 3; ++a) {
    if (kernel[a] < 1 || in[a] % kernel[a] != 0) throw ShapeError("pool kernel must tile the input");
  }
  const Index3 dims{in[0] / kernel[0], in[1] / kernel[1], in[2] / kernel[2]};
  FeatureMap<Real> out(dims, x.channels());
  const Real inv = Real(1) / static_cast<Real>(kernel[0] * kernel[1] * kernel[2]);
  for (std::int64_t t = 0; t < in[0]; ++t)
    for (std::int64_t h = 0; h < in[1]; ++h)
      for (std::int64_t w = 0; w < in[2]; ++w) {
        Real* o = out.pixel(t / kernel[0], h / kernel[1], w / kernel[2]);
        const Real* i = x.pixel(t, h, w);
        for (std::int64_t c = 0; c < x.channels(); ++c) o[c] += i[c] * inv;
      }
  return out;
}

PoolSchedule toy_schedule(const ToyNetConfig& config, const SamplingConfig& sampling) {
  PoolSchedule s;
  s.cube = {sampling.frames_per_cube, sampling.patch_side, sampling.patch_side};
  s.cube_counts = {sampling.temporal_segments, sampling.spatial_grids, sampling.spatial_grids};
  Index3 merge{};
  for (int a = 0; a < 3; ++a) merge[a] = std::max<std::int64_t>(1, s.cube[a] / config.embed_patch[a]);
  s.stages = {PoolStage::non_overlapping(config.embed_patch), PoolStage::non_overlapping(merge)};
  return s;
}

namespace {

Index3 feature_dims(const ToyNetConfig& config, const SamplingConfig& sampling) {
  const Index3 frag{sampling.temporal_segments * sampling.frames_per_cube,
                    sampling.spatial_grids * sampling.patch_side,
                    sampling.spatial_grids * sampling.patch_side};
  return {frag[0] / config.embed_patch[0], frag[1] / config.embed_patch[1],
          frag[2] / config.embed_patch[2]};
}

void require_match(const ToyNetConfig& config, const SamplingConfig& sampling) {
  const PoolSchedule s = toy_schedule(config, sampling);
  MatchReport report;
  try {
    report = check_match(s);
  } catch (const ShapeError& e) {
    throw ConstraintError(std::string("toy network does not fit the fragment: ") + e.what());
  }
  if (!report) {
    const auto& v = *report.violation;
    throw ConstraintError("toy network breaks the match constraint at stage " +
                          std::to_string(v.stage) + " (" + format_stages(s.stages) + ")");
  }
  if (stage_output_dims(s, s.stages.size() - 1) != s.cube_counts)
    throw ConstraintError("toy network does not reduce each mini-cube to one feature pixel");
}

}  // namespace

WindowGeometry toy_geometry(const ToyNetConfig& config, const SamplingConfig& sampling,
                            const ToyForwardOptions& options) {
  const Index3 dims = feature_dims(config, sampling);
  Index3 window;
  if (options.full_window) {
    window = dims;
  } else if (options.window) {
    window = *options.window;
  } else {
    window = ami_window(config.base_window, config.base_grid,
                        {sampling.temporal_segments, sampling.spatial_grids, sampling.spatial_grids});
  }
  const Index3 cube_extent{sampling.frames_per_cube / config.embed_patch[0],
                           sampling.patch_side / config.embed_patch[1],
                           sampling.patch_side / config.embed_patch[2]};
  auto g = WindowGeometry::from_cube_extent(dims, window, cube_extent);
  g.validate();
  return g;
}

template <typename Real>
QualityOutput toy_forward(const Fragment& fragment, const ToyNetWeights<Real>& weights,
                          const ToyForwardOptions& options) {
  const ToyNetConfig& cfg = weights.config;
  if (fragment.shape.c != cfg.channels)
    throw ShapeError("fragment has " + std::to_string(fragment.shape.c) +
                     " channels, network expects " + std::to_string(cfg.channels));
  if (fragment.shape != fragment.config.fragment_shape(fragment.shape.c))
    throw ShapeError("fragment shape disagrees with its sampling config");
  require_match(cfg, fragment.config);

  FeatureMap<Real> x = embed_fragment(fragment, weights.embed, cfg.embed_patch);
  const WindowGeometry geometry = toy_geometry(cfg, fragment.config, options);
  for (const auto& layer : weights.layers) {
    const FeatureMap<Real> a = window_attention_forward(x, layer, geometry, options.bias_mode);
    for (std::size_t i = 0; i < x.values().size(); ++i) x.values()[i] += a.values()[i];
  }
  const PoolSchedule s = toy_schedule(cfg, fragment.config);
  return ip_nlr(mean_pool(x, s.stages[1].kernel), weights.head);
}

double mean_clip_score(std::span<const Fragment> clips, const ToyNetWeights<float>& weights,
                       const ToyForwardOptions& options) {
  if (clips.empty()) throw std::invalid_argument("mean_clip_score: no clips");
  double sum = 0.0;
  for (const auto& f : clips) sum += toy_forward(f, weights, options).global;
  return sum / static_cast<double>(clips.size());
}

std::string quality_map_csv(const QualityOutput& q) {
  std::ostringstream out;
  out.precision(9);
  out << "t,h,w,l_pr\n";
  std::size_t n = 0;
  for (std::int64_t t = 0; t < q.dims[0]; ++t)
    for (std::int64_t h = 0; h < q.dims[1]; ++h)
      for (std::int64_t w = 0; w < q.dims[2]; ++w) out << t << ',' << h << ',' << w << ',' << q.local[n++] << '\n';
  return out.str();
}

std::vector<std::uint8_t> quality_map_pgm(const QualityOutput& q) {
  const std::int64_t width = q.dims[0] * q.dims[2], height = q.dims[1];
  const std::string header =
      "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  const auto [lo_it, hi_it] = std::minmax_element(q.local.begin(), q.local.end());
  const double lo = q.local.empty() ? 0.0 : *lo_it;
  const double span = q.local.empty() ? 0.0 : *hi_it - lo;
  for (std::int64_t h = 0; h < height; ++h) {
    for (std::int64_t t = 0; t < q.dims[0]; ++t) {
      for (std::int64_t w = 0; w < q.dims[2]; ++w) {
        const double v = q.local[static_cast<std::size_t>((t * q.dims[1] + h) * q.dims[2] + w)];
        const double norm = span > 0.0 ? (v - lo) / span : 0.5;
        out.push_back(static_cast<std::uint8_t>(std::lround(norm * 255.0)));
      }
    }
  }
  return out;
}

template FeatureMap<float> embed_fragment(const Fragment&, const Linear<float>&, Index3);
template FeatureMap<double> embed_fragment(const Fragment&, const Linear<double>&, Index3);
template FeatureMap<float> mean_pool(const FeatureMap<float>&, Index3);
template FeatureMap<double> mean_pool(const FeatureMap<double>&, Index3);
template QualityOutput toy_forward(const Fragment&, const ToyNetWeights<float>&,
                                   const ToyForwardOptions&);
template QualityOutput toy_forward(const Fragment&, const ToyNetWeights<double>&,
                                   const ToyForwardOptions&);

}  // namespace fragvqa
