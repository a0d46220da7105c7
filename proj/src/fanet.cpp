#include "fragvqa/fanet.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "fragvqa/error.hpp"

namespace fragvqa {

std::size_t relative_table_size(Index3 extent) {
  return static_cast<std::size_t>((2 * extent[0] - 1) * (2 * extent[1] - 1) * (2 * extent[2] - 1));
}

std::size_t encode_displacement(Index3 d, Index3 extent) {
  std::size_t idx = 0;
  for (int a = 0; a < 3; ++a) {
    if (d[a] <= -extent[a] || d[a] >= extent[a])
      throw ShapeError("displacement exceeds the bias table extent");
    idx = idx * static_cast<std::size_t>(2 * extent[a] - 1) +
          static_cast<std::size_t>(d[a] + extent[a] - 1);
  }
  return idx;
}

std::size_t relative_index(Index3 p, Index3 p_hat, Index3 window) {
  for (int a = 0; a < 3; ++a) {
    if (window[a] < 1) throw ShapeError("window extents must be >= 1");
    if (p[a] < 0 || p_hat[a] < 0) throw ShapeError("negative feature position");
    if (p[a] / window[a] != p_hat[a] / window[a])
      throw ShapeError("relative_index: positions lie in different windows");
  }
  return encode_displacement({p[0] - p_hat[0], p[1] - p_hat[1], p[2] - p_hat[2]}, window);
}

WindowGeometry WindowGeometry::from_cube_extent(Index3 feature_dims, Index3 window,
                                                Index3 cube_extent) {
  WindowGeometry g;
  g.feature_dims = feature_dims;
  g.window = window;
  for (int a = 0; a < 3; ++a) {
    if (cube_extent[a] < 1 || feature_dims[a] % cube_extent[a] != 0)
      throw ShapeError("cube extent must tile the feature dims");
  }
  const Index3 counts{feature_dims[0] / cube_extent[0], feature_dims[1] / cube_extent[1],
                      feature_dims[2] / cube_extent[2]};
  g.cube_of.resize(static_cast<std::size_t>(feature_dims[0] * feature_dims[1] * feature_dims[2]));
  std::size_t n = 0;
  for (std::int64_t t = 0; t < feature_dims[0]; ++t)
    for (std::int64_t h = 0; h < feature_dims[1]; ++h)
      for (std::int64_t w = 0; w < feature_dims[2]; ++w)
        g.cube_of[n++] = ((t / cube_extent[0]) * counts[1] + h / cube_extent[1]) * counts[2] +
                         w / cube_extent[2];
  return g;
}

void WindowGeometry::validate() const {
  for (int a = 0; a < 3; ++a) {
    if (window[a] < 1 || feature_dims[a] < 1 || feature_dims[a] % window[a] != 0)
      throw ShapeError("attention window must divide the feature dims");
  }
  if (cube_of.size() !=
      static_cast<std::size_t>(feature_dims[0] * feature_dims[1] * feature_dims[2]))
    throw ShapeError("pixel-to-cube map does not match the feature dims");
}

int grpb_gate(Index3 p, Index3 p_hat, const WindowGeometry& geometry) {
  return geometry.cube(p) == geometry.cube(p_hat) ? 1 : 0;
}

template <typename Real>
std::vector<Real> grpb_bias(Index3 p, Index3 p_hat, const BiasTables<Real>& tables,
                            const WindowGeometry& geometry, BiasMode mode) {
  std::vector<Real> out(static_cast<std::size_t>(tables.heads), Real(0));
  if (mode == BiasMode::kNone) return out;
  relative_index(p, p_hat, geometry.window);  // same-window check
  const std::size_t idx =
      encode_displacement({p[0] - p_hat[0], p[1] - p_hat[1], p[2] - p_hat[2]}, tables.extent);
  const bool real = mode == BiasMode::kUngated || grpb_gate(p, p_hat, geometry) == 1;
  const auto& table = real ? tables.real : tables.pseudo;
  for (std::int64_t h = 0; h < tables.heads; ++h)
    out[static_cast<std::size_t>(h)] = table[static_cast<std::size_t>(h) * tables.table_size() + idx];
  return out;
}

namespace {

template <typename Real>
void append_linear(std::vector<std::pair<std::string, std::span<Real>>>& out,
                   const std::string& prefix, Linear<Real>& l) {
  out.emplace_back(prefix + ".weight", std::span<Real>(l.weight));
  out.emplace_back(prefix + ".bias", std::span<Real>(l.bias));
}

/// Token layout shared by every window of one geometry.
struct WindowLayout {
  Index3 counts{};                 // windows per axis
  std::int64_t tokens = 0;
  std::vector<Index3> local;       // in-window coordinates of token n
  std::vector<std::size_t> rel;    // tokens x tokens table offsets (if biased)

  std::int64_t windows() const { return counts[0] * counts[1] * counts[2]; }

  Index3 position(std::int64_t window_index, std::int64_t n, Index3 window) const {
    const std::int64_t wt = window_index / (counts[1] * counts[2]);
    const std::int64_t wh = (window_index / counts[2]) % counts[1];
    const std::int64_t ww = window_index % counts[2];
    const Index3& l = local[static_cast<std::size_t>(n)];
    return {wt * window[0] + l[0], wh * window[1] + l[1], ww * window[2] + l[2]};
  }
};

template <typename Real>
WindowLayout make_layout(const WindowGeometry& g, const AttentionWeights<Real>& w,
                         std::int64_t channels, BiasMode mode) {
  g.validate();
  if (w.dim != channels) throw ShapeError("attention dim differs from feature channels");
  if (w.heads < 1 || w.dim % w.heads != 0) throw ShapeError("heads must divide attention dim");
  if (w.query.in != w.dim || w.query.out != w.dim || w.key.in != w.dim || w.key.out != w.dim ||
      w.value.in != w.dim || w.value.out != w.dim || w.output.in != w.dim ||
      w.output.out != w.dim)
    throw ShapeError("attention projection shapes are inconsistent");
  WindowLayout L;
  for (int a = 0; a < 3; ++a) L.counts[a] = g.feature_dims[a] / g.window[a];
  L.tokens = g.window[0] * g.window[1] * g.window[2];
  for (std::int64_t t = 0; t < g.window[0]; ++t)
    for (std::int64_t h = 0; h < g.window[1]; ++h)
      for (std::int64_t x = 0; x < g.window[2]; ++x) L.local.push_back({t, h, x});
  if (mode != BiasMode::kNone) {
    if (w.tables.heads != w.heads ||
        w.tables.real.size() != static_cast<std::size_t>(w.heads) * w.tables.table_size() ||
        w.tables.pseudo.size() != w.tables.real.size())
      throw ShapeError("bias tables do not match head count");
    for (int a = 0; a < 3; ++a) {
      if (g.window[a] > w.tables.extent[a])
        throw ShapeError("attention window exceeds the bias table extent");
    }
    L.rel.resize(static_cast<std::size_t>(L.tokens * L.tokens));
    for (std::int64_t n = 0; n < L.tokens; ++n) {
      for (std::int64_t m = 0; m < L.tokens; ++m) {
        const Index3& a = L.local[static_cast<std::size_t>(n)];
        const Index3& b = L.local[static_cast<std::size_t>(m)];
        L.rel[static_cast<std::size_t>(n * L.tokens + m)] =
            encode_displacement({a[0] - b[0], a[1] - b[1], a[2] - b[2]}, w.tables.extent);
      }
    }
  }
  return L;
}

/// Per-window cached projections and probabilities.
template <typename Real>
struct WindowState {
  std::vector<std::int64_t> flat;  // feature index of token n
  std::vector<std::int64_t> cube;  // cube id of token n
  std::vector<Real> q, k, v;       // tokens x dim
  std::vector<Real> probs;         // heads x tokens x tokens
  std::vector<Real> mixed;         // tokens x dim, concatenated head outputs
};

template <typename Real>
void run_window(const FeatureMap<Real>& x, const AttentionWeights<Real>& w,
                const WindowGeometry& g, BiasMode mode, const WindowLayout& L,
                std::int64_t wi, WindowState<Real>& s) {
  const std::int64_t N = L.tokens, D = w.dim, H = w.heads, dh = D / H;
  const auto Nz = static_cast<std::size_t>(N);
  s.flat.resize(Nz);
  s.cube.resize(Nz);
  s.q.assign(Nz * static_cast<std::size_t>(D), Real(0));
  s.k.assign(s.q.size(), Real(0));
  s.v.assign(s.q.size(), Real(0));
  s.mixed.assign(s.q.size(), Real(0));
  s.probs.assign(static_cast<std::size_t>(H) * Nz * Nz, Real(0));
  for (std::int64_t n = 0; n < N; ++n) {
    const Index3 p = L.position(wi, n, g.window);
    s.flat[static_cast<std::size_t>(n)] = x.flat(p[0], p[1], p[2]);
    s.cube[static_cast<std::size_t>(n)] = g.cube(p);
    const Real* xp = x.pixel(s.flat[static_cast<std::size_t>(n)]);
    w.query.apply(xp, s.q.data() + n * D);
    w.key.apply(xp, s.k.data() + n * D);
    w.value.apply(xp, s.v.data() + n * D);
  }
  const Real scale = Real(1) / std::sqrt(static_cast<Real>(dh));
  const std::size_t ts = w.tables.table_size();
  std::vector<Real> row(Nz);
  for (std::int64_t h = 0; h < H; ++h) {
    for (std::int64_t n = 0; n < N; ++n) {
      Real mx = -std::numeric_limits<Real>::infinity();
      for (std::int64_t m = 0; m < N; ++m) {
        Real score = 0;
        for (std::int64_t c = h * dh; c < (h + 1) * dh; ++c) score += s.q[n * D + c] * s.k[m * D + c];
        score *= scale;
        if (mode != BiasMode::kNone) {
          const std::size_t idx = static_cast<std::size_t>(h) * ts + L.rel[static_cast<std::size_t>(n * N + m)];
          const bool real = mode == BiasMode::kUngated ||
                            s.cube[static_cast<std::size_t>(n)] == s.cube[static_cast<std::size_t>(m)];
          score += real ? w.tables.real[idx] : w.tables.pseudo[idx];
        }
        row[static_cast<std::size_t>(m)] = score;
        mx = std::max(mx, score);
      }
      Real sum = 0;
      for (auto& r : row) {
        r = std::exp(r - mx);
        sum += r;
      }
      Real* prob = s.probs.data() + (h * N + n) * N;
      for (std::int64_t m = 0; m < N; ++m) prob[m] = row[static_cast<std::size_t>(m)] / sum;
      for (std::int64_t m = 0; m < N; ++m)
        for (std::int64_t c = h * dh; c < (h + 1) * dh; ++c)
          s.mixed[n * D + c] += prob[m] * s.v[m * D + c];
    }
  }
}

}  // namespace

template <typename Real>
std::vector<std::pair<std::string, std::span<Real>>> AttentionWeights<Real>::tensors() {
  std::vector<std::pair<std::string, std::span<Real>>> out;
  append_linear(out, "query", query);
  append_linear(out, "key", key);
  append_linear(out, "value", value);
  append_linear(out, "output", output);
  out.emplace_back("bias.real", std::span<Real>(tables.real));
  out.emplace_back("bias.pseudo", std::span<Real>(tables.pseudo));
  return out;
}

template <typename Real>
std::vector<std::pair<std::string, std::span<Real>>> HeadWeights<Real>::tensors() {
  std::vector<std::pair<std::string, std::span<Real>>> out;
  append_linear(out, "l1", l1);
  append_linear(out, "l2", l2);
  return out;
}

template <typename Real>
FeatureMap<Real> window_attention_forward(const FeatureMap<Real>& x,
                                          const AttentionWeights<Real>& weights,
                                          const WindowGeometry& geometry, BiasMode mode) {
  if (x.dims() != geometry.feature_dims) throw ShapeError("feature dims differ from geometry");
  const WindowLayout L = make_layout(geometry, weights, x.channels(), mode);
  FeatureMap<Real> y(x.dims(), x.channels());
  WindowState<Real> s;
  const std::int64_t D = weights.dim;
  for (std::int64_t wi = 0; wi < L.windows(); ++wi) {
    run_window(x, weights, geometry, mode, L, wi, s);
    for (std::int64_t n = 0; n < L.tokens; ++n)
      weights.output.apply(s.mixed.data() + n * D, y.pixel(s.flat[static_cast<std::size_t>(n)]));
  }
  return y;
}

template <typename Real>
std::vector<Real> attention_probabilities(const FeatureMap<Real>& x,
                                          const AttentionWeights<Real>& weights,
                                          const WindowGeometry& geometry, BiasMode mode,
                                          std::int64_t window_index, std::int64_t head) {
  const WindowLayout L = make_layout(geometry, weights, x.channels(), mode);
  if (window_index < 0 || window_index >= L.windows() || head < 0 || head >= weights.heads)
    throw std::out_of_range("window or head index out of range");
  WindowState<Real> s;
  run_window(x, weights, geometry, mode, L, window_index, s);
  const auto N2 = static_cast<std::size_t>(L.tokens * L.tokens);
  return {s.probs.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(head) * N2),
          s.probs.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(head + 1) * N2)};
}

AttentionGrads window_attention_backward(const FeatureMap<double>& x,
                                         const AttentionWeights<double>& w,
                                         const WindowGeometry& geometry, BiasMode mode,
                                         const FeatureMap<double>& grad_output) {
  if (x.dims() != geometry.feature_dims || grad_output.dims() != x.dims() ||
      grad_output.channels() != x.channels())
    throw ShapeError("attention backward: shape mismatch");
  const WindowLayout L = make_layout(geometry, w, x.channels(), mode);
  const std::int64_t N = L.tokens, D = w.dim, H = w.heads, dh = D / H;
  const auto Nz = static_cast<std::size_t>(N);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const std::size_t ts = w.tables.table_size();

  AttentionGrads g{FeatureMap<double>(x.dims(), x.channels()),
                   AttentionWeights<double>(D, H, w.tables.extent)};
  auto& gw = g.weights;

  WindowState<double> s;
  std::vector<double> d_mixed(Nz * static_cast<std::size_t>(D));
  std::vector<double> dq(d_mixed.size()), dk(d_mixed.size()), dv(d_mixed.size());
  std::vector<double> dp(Nz), ds(Nz);

  auto accumulate_linear = [&](Linear<double>& gl, const Linear<double>& l, const double* in,
                               const double* d_out, double* d_in) {
    for (std::int64_t o = 0; o < l.out; ++o) {
      gl.bias[static_cast<std::size_t>(o)] += d_out[o];
      for (std::int64_t i = 0; i < l.in; ++i) {
        gl.weight[static_cast<std::size_t>(o * l.in + i)] += d_out[o] * in[i];
        if (d_in) d_in[i] += l.weight[static_cast<std::size_t>(o * l.in + i)] * d_out[o];
      }
    }
  };

  for (std::int64_t wi = 0; wi < L.windows(); ++wi) {
    run_window(x, w, geometry, mode, L, wi, s);
    std::fill(d_mixed.begin(), d_mixed.end(), 0.0);
    std::fill(dq.begin(), dq.end(), 0.0);
    std::fill(dk.begin(), dk.end(), 0.0);
    std::fill(dv.begin(), dv.end(), 0.0);

    for (std::int64_t n = 0; n < N; ++n) {
      const double* dy = grad_output.pixel(s.flat[static_cast<std::size_t>(n)]);
      accumulate_linear(gw.output, w.output, s.mixed.data() + n * D, dy, d_mixed.data() + n * D);
    }

    for (std::int64_t h = 0; h < H; ++h) {
      for (std::int64_t n = 0; n < N; ++n) {
        const double* prob = s.probs.data() + (h * N + n) * N;
        double weighted = 0.0;
        for (std::int64_t m = 0; m < N; ++m) {
          double acc = 0.0;
          for (std::int64_t c = h * dh; c < (h + 1) * dh; ++c) {
            acc += d_mixed[n * D + c] * s.v[m * D + c];
            dv[m * D + c] += prob[m] * d_mixed[n * D + c];
          }
          dp[static_cast<std::size_t>(m)] = acc;
          weighted += prob[m] * acc;
        }
        for (std::int64_t m = 0; m < N; ++m) {
          const double d_score = prob[m] * (dp[static_cast<std::size_t>(m)] - weighted);
          if (mode != BiasMode::kNone) {
            const std::size_t idx =
                static_cast<std::size_t>(h) * ts + L.rel[static_cast<std::size_t>(n * N + m)];
            const bool real = mode == BiasMode::kUngated ||
                              s.cube[static_cast<std::size_t>(n)] == s.cube[static_cast<std::size_t>(m)];
            (real ? gw.tables.real : gw.tables.pseudo)[idx] += d_score;
          }
          for (std::int64_t c = h * dh; c < (h + 1) * dh; ++c) {
            dq[n * D + c] += scale * d_score * s.k[m * D + c];
            dk[m * D + c] += scale * d_score * s.q[n * D + c];
          }
        }
      }
    }

    for (std::int64_t n = 0; n < N; ++n) {
      const std::int64_t p = s.flat[static_cast<std::size_t>(n)];
      const double* xp = x.pixel(p);
      double* gx = g.input.pixel(p);
      accumulate_linear(gw.query, w.query, xp, dq.data() + n * D, gx);
      accumulate_linear(gw.key, w.key, xp, dk.data() + n * D, gx);
      accumulate_linear(gw.value, w.value, xp, dv.data() + n * D, gx);
    }
  }
  return g;
}

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); }

double gelu_derivative(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return cdf + x * pdf;
}

namespace {

template <typename Real>
void check_head(const FeatureMap<Real>& f, const HeadWeights<Real>& head) {
  if (head.l1.in != f.channels() || head.l2.in != head.l1.out || head.l2.out != 1)
    throw ShapeError("regression head shapes do not match the features");
  if (f.positions() == 0) throw ShapeError("regression head: empty feature map");
}

template <typename Real>
double regress(const Real* x, const HeadWeights<Real>& head, std::vector<Real>& hidden) {
  hidden.resize(static_cast<std::size_t>(head.l1.out));
  head.l1.apply(x, hidden.data());
  for (auto& v : hidden) v = static_cast<Real>(gelu(static_cast<double>(v)));
  Real y = 0;
  head.l2.apply(hidden.data(), &y);
  return static_cast<double>(y);
}

}  // namespace

template <typename Real>
QualityOutput ip_nlr(const FeatureMap<Real>& features, const HeadWeights<Real>& head) {
  check_head(features, head);
  QualityOutput out;
  out.dims = features.dims();
  out.local.resize(static_cast<std::size_t>(features.positions()));
  std::vector<Real> hidden;
  double sum = 0.0;
  for (std::int64_t p = 0; p < features.positions(); ++p) {
    out.local[static_cast<std::size_t>(p)] = regress(features.pixel(p), head, hidden);
    sum += out.local[static_cast<std::size_t>(p)];
  }
  out.global = sum / static_cast<double>(features.positions());
  return out;
}

template <typename Real>
double pool_first_head(const FeatureMap<Real>& features, const HeadWeights<Real>& head) {
  check_head(features, head);
  std::vector<double> acc(static_cast<std::size_t>(features.channels()), 0.0);
  for (std::int64_t p = 0; p < features.positions(); ++p)
    for (std::int64_t c = 0; c < features.channels(); ++c)
      acc[static_cast<std::size_t>(c)] += static_cast<double>(features.pixel(p)[c]);
  std::vector<Real> mean(acc.size());
  for (std::size_t c = 0; c < acc.size(); ++c)
    mean[c] = static_cast<Real>(acc[c] / static_cast<double>(features.positions()));
  std::vector<Real> hidden;
  return regress(mean.data(), head, hidden);
}

HeadGrads ip_nlr_backward(const FeatureMap<double>& features, const HeadWeights<double>& head,
                          std::span<const double> grad_local) {
  check_head(features, head);
  if (grad_local.size() != static_cast<std::size_t>(features.positions()))
    throw ShapeError("ip_nlr backward: gradient length mismatch");
  HeadGrads g{FeatureMap<double>(features.dims(), features.channels()),
              HeadWeights<double>(head.l1.in, head.l1.out)};
  const std::int64_t D = head.l1.in, M = head.l1.out;
  std::vector<double> pre(static_cast<std::size_t>(M));
  for (std::int64_t p = 0; p < features.positions(); ++p) {
    const double* x = features.pixel(p);
    head.l1.apply(x, pre.data());
    const double dy = grad_local[static_cast<std::size_t>(p)];
    g.head.l2.bias[0] += dy;
    double* gx = g.features.pixel(p);
    for (std::int64_t m = 0; m < M; ++m) {
      const double z = pre[static_cast<std::size_t>(m)];
      g.head.l2.weight[static_cast<std::size_t>(m)] += dy * gelu(z);
      const double dz = dy * head.l2.weight[static_cast<std::size_t>(m)] * gelu_derivative(z);
      g.head.l1.bias[static_cast<std::size_t>(m)] += dz;
      for (std::int64_t d = 0; d < D; ++d) {
        g.head.l1.weight[static_cast<std::size_t>(m * D + d)] += dz * x[d];
        gx[d] += dz * head.l1.weight[static_cast<std::size_t>(m * D + d)];
      }
    }
  }
  return g;
}

Index3 ami_window(Index3 base_window, Index3 base_grid, Index3 actual_grid) {
  Index3 out{};
  for (int a = 0; a < 3; ++a) {
    if (base_window[a] < 1 || base_grid[a] < 1 || actual_grid[a] < 1)
      throw ShapeError("ami_window: extents must be >= 1");
    const std::int64_t num = base_window[a] * actual_grid[a];
    if (num % base_grid[a] != 0)
      throw ShapeError("ami_window: rescaled window is not integral on axis " +
                       std::string(1, "thw"[a]));
    out[a] = num / base_grid[a];
  }
  return out;
}

template std::vector<float> grpb_bias(Index3, Index3, const BiasTables<float>&,
                                      const WindowGeometry&, BiasMode);
template std::vector<double> grpb_bias(Index3, Index3, const BiasTables<double>&,
                                       const WindowGeometry&, BiasMode);
template struct AttentionWeights<float>;
template struct AttentionWeights<double>;
template struct HeadWeights<float>;
template struct HeadWeights<double>;
template FeatureMap<float> window_attention_forward(const FeatureMap<float>&,
                                                    const AttentionWeights<float>&,
                                                    const WindowGeometry&, BiasMode);
template FeatureMap<double> window_attention_forward(const FeatureMap<double>&,
                                                     const AttentionWeights<double>&,
                                                     const WindowGeometry&, BiasMode);
template std::vector<float> attention_probabilities(const FeatureMap<float>&,
                                                    const AttentionWeights<float>&,
                                                    const WindowGeometry&, BiasMode,
                                                    std::int64_t, std::int64_t);
template std::vector<double> attention_probabilities(const FeatureMap<double>&,
                                                     const AttentionWeights<double>&,
                                                     const WindowGeometry&, BiasMode,
                                                     std::int64_t, std::int64_t);
template QualityOutput ip_nlr(const FeatureMap<float>&, const HeadWeights<float>&);
template QualityOutput ip_nlr(const FeatureMap<double>&, const HeadWeights<double>&);
template double pool_first_head(const FeatureMap<float>&, const HeadWeights<float>&);
template double pool_first_head(const FeatureMap<double>&, const HeadWeights<double>&);

}  // namespace fragvqa
