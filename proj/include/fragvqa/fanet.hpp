#pragma once

// Desk-scale fragment attention network pieces: gated relative position
// biases in window attention, the intra-patch non-linear regression head,
// and adaptive window rescaling. Forward passes are templated on the scalar
// type; float is used for inference and double for gradient checking.

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fragvqa/match_constraint.hpp"

namespace fragvqa {

/// Dense (T, H, W, D) feature tensor.
template <typename Real>
class FeatureMap {
 public:
  FeatureMap() = default;
  FeatureMap(Index3 dims, std::int64_t channels, Real fill = Real(0))
      : dims_(dims),
        channels_(channels),
        values_(static_cast<std::size_t>(dims[0] * dims[1] * dims[2] * channels), fill) {}

  Index3 dims() const noexcept { return dims_; }
  std::int64_t channels() const noexcept { return channels_; }
  std::int64_t positions() const noexcept { return dims_[0] * dims_[1] * dims_[2]; }

  std::int64_t flat(std::int64_t t, std::int64_t h, std::int64_t w) const noexcept {
    return (t * dims_[1] + h) * dims_[2] + w;
  }
  Real* pixel(std::int64_t p) noexcept { return values_.data() + p * channels_; }
  const Real* pixel(std::int64_t p) const noexcept { return values_.data() + p * channels_; }
  Real* pixel(std::int64_t t, std::int64_t h, std::int64_t w) noexcept { return pixel(flat(t, h, w)); }
  const Real* pixel(std::int64_t t, std::int64_t h, std::int64_t w) const noexcept {
    return pixel(flat(t, h, w));
  }

  std::vector<Real>& values() noexcept { return values_; }
  const std::vector<Real>& values() const noexcept { return values_; }

  template <typename Other>
  FeatureMap<Other> cast() const {
    FeatureMap<Other> out(dims_, channels_);
    for (std::size_t i = 0; i < values_.size(); ++i) out.values()[i] = static_cast<Other>(values_[i]);
    return out;
  }

 private:
  Index3 dims_{0, 0, 0};
  std::int64_t channels_ = 0;
  std::vector<Real> values_;
};

/// y = W x + b with W stored (out, in) row-major.
template <typename Real>
struct Linear {
  std::int64_t in = 0;
  std::int64_t out = 0;
  std::vector<Real> weight;
  std::vector<Real> bias;

  Linear() = default;
  Linear(std::int64_t in_features, std::int64_t out_features)
      : in(in_features),
        out(out_features),
        weight(static_cast<std::size_t>(in_features * out_features), Real(0)),
        bias(static_cast<std::size_t>(out_features), Real(0)) {}

  void apply(const Real* x, Real* y) const {
    for (std::int64_t o = 0; o < out; ++o) {
      Real acc = bias[static_cast<std::size_t>(o)];
      const Real* row = weight.data() + o * in;
      for (std::int64_t i = 0; i < in; ++i) acc += row[i] * x[i];
      y[o] = acc;
    }
  }

  template <typename Other>
  Linear<Other> cast() const {
    Linear<Other> l(in, out);
    for (std::size_t i = 0; i < weight.size(); ++i) l.weight[i] = static_cast<Other>(weight[i]);
    for (std::size_t i = 0; i < bias.size(); ++i) l.bias[i] = static_cast<Other>(bias[i]);
    return l;
  }
};

/// Maps a displacement p - p_hat with |d_a| < extent_a into
/// [0, (2E_t-1)(2E_h-1)(2E_w-1)), mixed radix with each axis shifted by E_a-1.
std::size_t encode_displacement(Index3 displacement, Index3 extent);
std::size_t relative_table_size(Index3 extent);

/// Table index for the pair (p, p_hat) inside `window`. Throws ShapeError when
/// the two positions fall in different windows.
std::size_t relative_index(Index3 p, Index3 p_hat, Index3 window);

/// Attention windows plus the cube each feature pixel was pooled from.
struct WindowGeometry {
  Index3 feature_dims{0, 0, 0};
  Index3 window{1, 1, 1};
  std::vector<std::int64_t> cube_of;  ///< flat (t, h, w) -> cube id

  /// Cube id of feature pixel (t, h, w) is the row-major index of
  /// (t / cube_extent_t, h / cube_extent_h, w / cube_extent_w).
  static WindowGeometry from_cube_extent(Index3 feature_dims, Index3 window,
                                         Index3 cube_extent);

  std::int64_t cube(Index3 p) const {
    return cube_of[static_cast<std::size_t>((p[0] * feature_dims[1] + p[1]) * feature_dims[2] + p[2])];
  }
  /// Throws ShapeError unless the window tiles the feature dims exactly.
  void validate() const;
};

/// 1 when both feature pixels come from the same mini-cube, else 0.
int grpb_gate(Index3 p, Index3 p_hat, const WindowGeometry& geometry);

/// Per-head real and pseudo relative position bias tables, indexed by
/// displacement within `extent` (the window the tables were sized for).
template <typename Real>
struct BiasTables {
  std::int64_t heads = 1;
  Index3 extent{1, 1, 1};
  std::vector<Real> real;    ///< (heads, table_size)
  std::vector<Real> pseudo;  ///< (heads, table_size)

  BiasTables() = default;
  BiasTables(std::int64_t head_count, Index3 table_extent)
      : heads(head_count),
        extent(table_extent),
        real(static_cast<std::size_t>(head_count) * relative_table_size(table_extent), Real(0)),
        pseudo(real.size(), Real(0)) {}

  std::size_t table_size() const { return relative_table_size(extent); }

  template <typename Other>
  BiasTables<Other> cast() const {
    BiasTables<Other> t(heads, extent);
    for (std::size_t i = 0; i < real.size(); ++i) {
      t.real[i] = static_cast<Other>(real[i]);
      t.pseudo[i] = static_cast<Other>(pseudo[i]);
    }
    return t;
  }
};

enum class BiasMode {
  kGated,    ///< B = G * T_real + (1 - G) * T_pseudo
  kUngated,  ///< plain relative position bias from T_real
  kNone,
};

/// B(p, p_hat) for every head under `mode`.
template <typename Real>
std::vector<Real> grpb_bias(Index3 p, Index3 p_hat, const BiasTables<Real>& tables,
                            const WindowGeometry& geometry, BiasMode mode = BiasMode::kGated);

template <typename Real>
struct AttentionWeights {
  std::int64_t dim = 0;
  std::int64_t heads = 1;
  Linear<Real> query, key, value, output;
  BiasTables<Real> tables;

  AttentionWeights() = default;
  AttentionWeights(std::int64_t d, std::int64_t head_count, Index3 table_extent)
      : dim(d),
        heads(head_count),
        query(d, d),
        key(d, d),
        value(d, d),
        output(d, d),
        tables(head_count, table_extent) {}

  /// Named views over every trainable tensor, in a fixed order.
  std::vector<std::pair<std::string, std::span<Real>>> tensors();

  template <typename Other>
  AttentionWeights<Other> cast() const {
    AttentionWeights<Other> w;
    w.dim = dim;
    w.heads = heads;
    w.query = query.template cast<Other>();
    w.key = key.template cast<Other>();
    w.value = value.template cast<Other>();
    w.output = output.template cast<Other>();
    w.tables = tables.template cast<Other>();
    return w;
  }
};

/// Window multi-head self-attention: per window and head,
/// softmax(Q K^T / sqrt(d_head) + B) V, then the output projection.
template <typename Real>
FeatureMap<Real> window_attention_forward(const FeatureMap<Real>& x,
                                          const AttentionWeights<Real>& weights,
                                          const WindowGeometry& geometry,
                                          BiasMode mode = BiasMode::kGated);

/// Softmax attention rows for one window and head; used by tests to check
/// normalization. Rows are (window token, key token).
template <typename Real>
std::vector<Real> attention_probabilities(const FeatureMap<Real>& x,
                                          const AttentionWeights<Real>& weights,
                                          const WindowGeometry& geometry, BiasMode mode,
                                          std::int64_t window_index, std::int64_t head);

struct AttentionGrads {
  FeatureMap<double> input;
  AttentionWeights<double> weights;  ///< same layout as the forward weights
};

/// Reverse-mode gradients of sum(grad_output * forward(x)).
AttentionGrads window_attention_backward(const FeatureMap<double>& x,
                                         const AttentionWeights<double>& weights,
                                         const WindowGeometry& geometry, BiasMode mode,
                                         const FeatureMap<double>& grad_output);

/// Two-layer MLP regression head: L1 (d -> d_mid), exact GeLU, L2 (d_mid -> 1).
template <typename Real>
struct HeadWeights {
  Linear<Real> l1;
  Linear<Real> l2;

  HeadWeights() = default;
  HeadWeights(std::int64_t dim, std::int64_t hidden) : l1(dim, hidden), l2(hidden, 1) {}

  std::vector<std::pair<std::string, std::span<Real>>> tensors();

  template <typename Other>
  HeadWeights<Other> cast() const {
    HeadWeights<Other> h;
    h.l1 = l1.template cast<Other>();
    h.l2 = l2.template cast<Other>();
    return h;
  }
};

/// Local quality map over the final feature grid and its mean.
struct QualityOutput {
  Index3 dims{0, 0, 0};
  std::vector<double> local;  ///< l_pr, row-major (t, h, w)
  double global = 0.0;        ///< g_pr
};

double gelu(double x);
double gelu_derivative(double x);

/// Regress every position independently, then average the local scores.
template <typename Real>
QualityOutput ip_nlr(const FeatureMap<Real>& features, const HeadWeights<Real>& head);

/// Baseline head: average the features first, then regress once.
template <typename Real>
double pool_first_head(const FeatureMap<Real>& features, const HeadWeights<Real>& head);

struct HeadGrads {
  FeatureMap<double> features;
  HeadWeights<double> head;
};

/// Gradients of sum(grad_local * l_pr).
HeadGrads ip_nlr_backward(const FeatureMap<double>& features, const HeadWeights<double>& head,
                          std::span<const double> grad_local);

/// Rescaled attention window W0 * G_hat / G0, per axis. Throws ShapeError if
/// any axis is not integral.
Index3 ami_window(Index3 base_window, Index3 base_grid, Index3 actual_grid);

}  // namespace fragvqa
