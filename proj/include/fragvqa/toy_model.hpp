#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "fragvqa/fanet.hpp"
#include "fragvqa/sampler.hpp"

namespace fragvqa {

/// Architecture of the toy network: non-overlapping patch embedding, a stack
/// of residual window-attention layers, one mean-pooling merge that leaves
/// one feature pixel per mini-cube, and the IP-NLR head.
struct ToyNetConfig {
  std::int64_t channels = 3;
  Index3 embed_patch{2, 4, 4};
  std::int64_t dim = 8;
  std::int64_t heads = 2;
  std::int64_t hidden = 8;
  std::int64_t layers = 2;
  Index3 base_window{8, 7, 7};  ///< W0, in embedded feature pixels
  Index3 base_grid{8, 7, 7};    ///< G0 as (G_t, G_f, G_f)

  friend bool operator==(const ToyNetConfig&, const ToyNetConfig&) = default;
};

nlohmann::json toy_config_to_json(const ToyNetConfig& c);
ToyNetConfig toy_config_from_json(const nlohmann::json& j);

template <typename Real>
struct ToyNetWeights {
  ToyNetConfig config;
  Linear<Real> embed;
  std::vector<AttentionWeights<Real>> layers;
  HeadWeights<Real> head;

  ToyNetWeights() = default;
  explicit ToyNetWeights(const ToyNetConfig& c);

  std::vector<std::pair<std::string, std::span<Real>>> tensors();

  template <typename Other>
  ToyNetWeights<Other> cast() const {
    ToyNetWeights<Other> w;
    w.config = config;
    w.embed = embed.template cast<Other>();
    for (const auto& l : layers) w.layers.push_back(l.template cast<Other>());
    w.head = head.template cast<Other>();
    return w;
  }
};

/// Seeded uniform [-0.1, 0.1] for every linear map; bias tables start at zero.
ToyNetWeights<float> init_toy_weights(const ToyNetConfig& config, std::uint64_t seed);

/// Manifest `path` + ".json" lists {name, shape, dtype, offset} per tensor;
/// `path` holds the little-endian f32 payload.
void write_toy_weights(const ToyNetWeights<float>& weights, const std::filesystem::path& path);
ToyNetWeights<float> read_toy_weights(const std::filesystem::path& path);

struct ToyForwardOptions {
  BiasMode bias_mode = BiasMode::kGated;
  /// Explicit attention window; when empty the AMI rescaled window is used.
  std::optional<Index3> window;
  /// One window spanning the whole feature map.
  bool full_window = false;
};

/// Patch embedding applied to a fragment, samples scaled to [0, 1].
template <typename Real>
FeatureMap<Real> embed_fragment(const Fragment& fragment, const Linear<Real>& embed,
                                Index3 patch);

/// Non-overlapping mean pooling.
template <typename Real>
FeatureMap<Real> mean_pool(const FeatureMap<Real>& x, Index3 kernel);

/// Stages the toy net applies to the fragment: the embedding and the merge.
PoolSchedule toy_schedule(const ToyNetConfig& config, const SamplingConfig& sampling);

/// Window geometry used by the attention layers for this fragment.
WindowGeometry toy_geometry(const ToyNetConfig& config, const SamplingConfig& sampling,
                            const ToyForwardOptions& options = {});

/// Full toy forward. Throws ConstraintError when the embedding and merge
/// break the match constraint for the fragment's cube geometry.
template <typename Real>
QualityOutput toy_forward(const Fragment& fragment, const ToyNetWeights<Real>& weights,
                          const ToyForwardOptions& options = {});

/// Mean g_pr over several clips of one video.
double mean_clip_score(std::span<const Fragment> clips, const ToyNetWeights<float>& weights,
                       const ToyForwardOptions& options = {});

/// "t,h,w,l_pr" rows.
std::string quality_map_csv(const QualityOutput& q);
/// Binary 8-bit PGM, time slices tiled left to right, min-max normalized.
std::vector<std::uint8_t> quality_map_pgm(const QualityOutput& q);

}  // namespace fragvqa
