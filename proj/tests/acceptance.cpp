// One PASS/FAIL line per primary acceptance criterion. Tolerances are fixed
// here; the process exits non-zero if any line fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "json.hpp"

#include "fragvqa/batch.hpp"
#include "fragvqa/error.hpp"
#include "fragvqa/fanet.hpp"
#include "fragvqa/file_util.hpp"
#include "fragvqa/gradcheck.hpp"
#include "fragvqa/match_constraint.hpp"
#include "fragvqa/objectives.hpp"
#include "fragvqa/rng.hpp"
#include "fragvqa/sampler.hpp"
#include "fragvqa/toy_model.hpp"
#include "oracles/provenance_oracle.hpp"
#include "oracles/receptive_oracle.hpp"
#include "oracles/stats_oracle.hpp"
#include "test_util.hpp"

using namespace fragvqa;
namespace fs = std::filesystem;

namespace {

constexpr double kFractionTolPp = 0.01;
constexpr double kDegeneracyTol = 1e-7;
constexpr double kGradTol = 1e-4;
constexpr double kGradStep = 1e-4;
constexpr double kGradFloor = 1e-5;  // above central-difference round-off (~1e-10) on exactly-zero gradients
constexpr double kMetricTol = 1e-12;
constexpr double kMeanTol = 1e-6;
constexpr double kStabilityTol = 1e-12;

struct Outcome {
  bool pass = true;
  std::string detail;
};

int failures = 0;

void report(const char* name, const std::function<Outcome()>& body) {
  const auto start = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (!o.pass) ++failures;
  std::printf("%s  %-28s %s [%.2fs]\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str(), secs);
  std::fflush(stdout);
}

std::string fmt(const char* f, double a, double b = 0, double c = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

double uniform(CounterRng& rng, double lo, double hi) { return lo + (hi - lo) * rng.uniform_real(); }

void fill(std::span<double> v, CounterRng& rng, double scale) {
  for (auto& x : v) x = uniform(rng, -scale, scale);
}

Outcome fragment_geometry() {
  const auto v = synth_video(SynthPattern::kNoise, 64, 240, 320, 3, 1);
  struct Row {
    const char* name;
    SamplingConfig config;
    FragmentShape want;
  };
  const std::vector<Row> rows{{"FasterVQA", faster_vqa_config(), {32, 224, 224, 3}},
                              {"FAST-VQA", fast_vqa_config(), {32, 224, 224, 3}},
                              {"FAST-VQA-M", fast_vqa_m_config(), {16, 128, 128, 3}}};
  Outcome o;
  for (const auto& r : rows) {
    const auto f = sample_fragment(v, r.config);
    const bool ok = f.shape == r.want && f.data.size() == static_cast<std::size_t>(r.want.size());
    o.pass &= ok;
    o.detail += std::string(r.name) + "=(" + std::to_string(f.shape.t) + "," +
                std::to_string(f.shape.h) + "," + std::to_string(f.shape.w) + ") ";
  }
  return o;
}

Outcome sampled_fractions() {
  const auto c = faster_vqa_config();
  const double p1080 = 100 * spatial_sampled_fraction(1080, 1920, c);
  const double p720 = 100 * spatial_sampled_fraction(720, 1280, c);
  const double pfull = 100 * sampled_fraction({300, 720, 1280}, c);
  Outcome o;
  o.pass = std::abs(p1080 - 2.42) <= kFractionTolPp && std::abs(p720 - 5.44) <= kFractionTolPp &&
           std::abs(pfull - 0.58) <= kFractionTolPp;
  o.detail = fmt("1080p %.4f%% 720p %.4f%% 720p/10s %.4f%%", p1080, p720, pfull);
  return o;
}

Outcome provenance_suite() {
  CounterRng rng(2024);
  std::int64_t pixels = 0, mismatched = 0, failed = 0, videos = 0;
  while (videos < 100) {
    SamplingConfig c;
    c.temporal_segments = 1 + static_cast<std::int64_t>(rng.uniform_inclusive(3));
    c.spatial_grids = 1 + static_cast<std::int64_t>(rng.uniform_inclusive(3));
    c.frames_per_cube = 1 + static_cast<std::int64_t>(rng.uniform_inclusive(3));
    c.patch_side = 2 + static_cast<std::int64_t>(rng.uniform_inclusive(10));
    c.seed = rng.next();
    c.alignment = rng.uniform_inclusive(1) ? Alignment::kPerClip : Alignment::kPerCube;
    c.offset_policy = rng.uniform_inclusive(4) == 0 ? OffsetPolicy::kCentered : OffsetPolicy::kRandom;
    c.temporal_mode = rng.uniform_inclusive(2) == 0 ? TemporalMode::kContiguous : TemporalMode::kSegmented;
    c.allow_upscale = rng.uniform_inclusive(3) == 0;
    const std::int64_t t = c.temporal_segments * c.frames_per_cube + static_cast<std::int64_t>(rng.uniform_inclusive(20));
    const std::int64_t min_side = c.allow_upscale ? 4 : c.spatial_grids * c.patch_side;
    const std::int64_t h = min_side + static_cast<std::int64_t>(rng.uniform_inclusive(30));
    const std::int64_t w = min_side + static_cast<std::int64_t>(rng.uniform_inclusive(30));
    const auto v = synth_video(SynthPattern::kGradient, t, h, w, 3, 0);
    Fragment f;
    try {
      f = sample_fragment(v, c);
    } catch (const GeometryError&) {
      continue;  // segment too short for T_f; draw another geometry
    }
    ++videos;
    if (!verify_provenance(f, v).ok) ++failed;
    const auto d = oracle::decode_fragment(f);
    pixels += d.checked;
    mismatched += d.mismatched;
  }
  Outcome o;
  o.pass = failed == 0 && mismatched == 0 && pixels > 0;
  o.detail = std::to_string(videos) + " videos, verify failures " + std::to_string(failed) +
             ", decoded " + std::to_string(pixels - mismatched) + "/" + std::to_string(pixels) + " pixels";
  return o;
}

// Verdict of check_match compared with the set simulation of each axis.
struct Verdict {
  bool shape_error = false;
  bool ok = true;
  std::size_t stage = 0;
  bool operator==(const Verdict&) const = default;
};

Verdict validator_verdict(const PoolSchedule& s) {
  Verdict v;
  try {
    const auto r = check_match(s);
    v.ok = r.ok;
    if (!r.ok) v.stage = r.violation->stage;
  } catch (const ShapeError&) {
    v.shape_error = true;
  }
  return v;
}

Verdict oracle_verdict(const std::vector<oracle::Stage1D>& stages, Index3 cube, Index3 counts) {
  Verdict v;
  for (int a = 0; a < 3; ++a) {
    const auto axis = oracle::simulate_axis(stages, cube[a], counts[a]);
    if (axis.shape_error) return Verdict{true, true, 0};
    if (axis.first_bad_stage && (v.ok || *axis.first_bad_stage < v.stage)) {
      v.ok = false;
      v.stage = *axis.first_bad_stage;
    }
  }
  return v;
}

Outcome match_oracle() {
  std::vector<oracle::Stage1D> options;
  for (std::int64_t k : {2, 3, 4})
    for (std::int64_t s = 1; s <= k; ++s) options.push_back({k, s});

  std::int64_t schedules = 0, disagreements = 0, passing = 0;
  const Index3 counts{8, 7, 7};
  for (std::int64_t sf : {8, 16, 32, 48}) {
    const Index3 cube{4, sf, sf};
    std::vector<std::vector<oracle::Stage1D>> frontier{{}};
    for (int depth = 1; depth <= 4; ++depth) {
      std::vector<std::vector<oracle::Stage1D>> next;
      for (const auto& prefix : frontier)
        for (const auto& st : options) {
          auto stages = prefix;
          stages.push_back(st);
          PoolSchedule s;
          s.cube = cube;
          s.cube_counts = counts;
          for (const auto& x : stages)
            s.stages.push_back({{x.kernel, x.kernel, x.kernel}, {x.stride, x.stride, x.stride}});
          const Verdict got = validator_verdict(s);
          const Verdict want = oracle_verdict(stages, cube, counts);
          ++schedules;
          if (!(got == want)) ++disagreements;
          if (!got.shape_error && got.ok) ++passing;
          next.push_back(std::move(stages));
        }
      frontier = std::move(next);
    }
  }

  auto worked = [&](const char* text, std::int64_t sf) {
    PoolSchedule s;
    s.stages = parse_stages(text);
    s.cube = {4, sf, sf};
    s.cube_counts = counts;
    return validator_verdict(s);
  };
  const bool pass32 = worked("4x4x4:2x2x2:2x2x2:2x2x2", 32) == Verdict{false, true, 0};
  const bool overlap = worked("3x3x3/2x2x2", 32) == Verdict{false, false, 0};
  const bool fail48 = worked("4x4x4:2x2x2:2x2x2:2x2x2", 48) == Verdict{false, false, 3};

  Outcome o;
  o.pass = disagreements == 0 && pass32 && overlap && fail48;
  o.detail = std::to_string(schedules) + " schedules (" + std::to_string(passing) +
             " passing), disagreements " + std::to_string(disagreements) + "; worked cases " +
             (pass32 ? "32-pass " : "32-PASS? ") + (overlap ? "overlap-fail " : "overlap? ") +
             (fail48 ? "48-fail" : "48?");
  return o;
}

Outcome ami_rows() {
  const Index3 w0{8, 7, 7}, g0{8, 7, 7};
  const auto mt = ami_window(w0, g0, {4, 7, 7});
  const auto ms = ami_window(w0, g0, {8, 5, 5});
  const auto small = ami_window(w0, g0, {4, 4, 4});
  Outcome o;
  o.pass = mt == Index3{4, 7, 7} && ms == Index3{8, 5, 5} && small == Index3{4, 4, 4};
  o.detail = fmt("G=(4,7,7) -> (%g,%g,%g)", double(mt[0]), double(mt[1]), double(mt[2])) +
             fmt(", G=(8,5,5) -> (%g,%g,%g)", double(ms[0]), double(ms[1]), double(ms[2])) +
             fmt(", G=(4,4,4) -> (%g,%g,%g)", double(small[0]), double(small[1]), double(small[2]));
  return o;
}

Outcome grpb_degeneracy() {
  CounterRng rng(77);
  double worst = 0.0;
  std::int64_t fragments = 0, pseudo_used = 0;
  for (int n = 0; n < 20; ++n) {
    SamplingConfig s;
    ToyNetConfig net;
    if (n < 2) {
      s = n == 0 ? faster_vqa_config() : faster_vqa_ms_config();
      net.base_window = {8, 14, 14};
    } else {
      s.temporal_segments = rng.uniform_inclusive(1) ? 4 : 2;
      s.spatial_grids = rng.uniform_inclusive(1) ? 4 : 2;
      s.frames_per_cube = 4;
      s.patch_side = rng.uniform_inclusive(1) ? 16 : 8;
      net.base_grid = {s.temporal_segments, s.spatial_grids, s.spatial_grids};
      net.base_window = {4, s.patch_side / 2, s.patch_side / 2};
    }
    s.seed = rng.next();
    const auto v = synth_video(SynthPattern::kNoise, s.temporal_segments * s.frames_per_cube + 8,
                               s.spatial_grids * s.patch_side + 9, s.spatial_grids * s.patch_side + 5,
                               3, rng.next());
    const auto f = sample_fragment(v, s);
    auto w = init_toy_weights(net, rng.next());
    for (auto& layer : w.layers) {
      for (auto& x : layer.tables.real) x = static_cast<float>(uniform(rng, -1, 1));
      layer.tables.pseudo = layer.tables.real;
    }
    const auto g = toy_geometry(net, s);
    for (std::int64_t p = 1; p < g.window[2] && p < g.feature_dims[2]; ++p)
      if (grpb_gate({0, 0, 0}, {0, 0, p}, g) == 0) {
        ++pseudo_used;
        break;
      }
    ToyForwardOptions gated, plain;
    plain.bias_mode = BiasMode::kUngated;
    const auto a = toy_forward(f, w, gated);
    const auto b = toy_forward(f, w, plain);
    worst = std::max(worst, std::abs(a.global - b.global));
    for (std::size_t i = 0; i < a.local.size(); ++i)
      worst = std::max(worst, std::abs(a.local[i] - b.local[i]));
    ++fragments;
  }
  Outcome o;
  o.pass = worst <= kDegeneracyTol && pseudo_used == fragments;
  o.detail = std::to_string(fragments) + " fragments, windows span several cubes in " +
             std::to_string(pseudo_used) + ", max |gated - ungated| " + fmt("%.3g", worst);
  return o;
}

struct GradStats {
  double worst = 0.0;
  std::string where;
  void add(const GradCheckResult& r, const std::string& label) {
    if (r.max_rel_error > worst) {
      worst = r.max_rel_error;
      where = label + fmt(" (analytic %.6g numeric %.6g)", r.analytic, r.numeric);
    }
  }
};

GradStats grad_loss_lin(CounterRng& rng) {
  GradStats st;
  for (int k = 0; k < 50; ++k) {
    const std::size_t n = 3 + rng.uniform_inclusive(12);
    std::vector<double> pred(n), gt(n);
    fill(pred, rng, 1.0);
    fill(gt, rng, 1.0);
    st.add(finite_diff_check([&](std::span<const double> p) { return loss_lin(p, gt); }, pred,
                             loss_lin_grad(pred, gt), kGradStep, kGradFloor),
           "loss_lin");
  }
  return st;
}

GradStats grad_loss_mono(CounterRng& rng) {
  GradStats st;
  int done = 0;
  while (done < 50) {
    const std::size_t n = 3 + rng.uniform_inclusive(12);
    std::vector<double> pred(n), gt(n);
    fill(pred, rng, 1.0);
    fill(gt, rng, 1.0);
    bool smooth = true;  // keep every pair of predictions well clear of a kink
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) smooth &= std::abs(pred[i] - pred[j]) > 10 * kGradStep;
    if (!smooth) continue;
    ++done;
    st.add(finite_diff_check([&](std::span<const double> p) { return loss_mono(p, gt); }, pred,
                             loss_mono_grad(pred, gt), kGradStep, kGradFloor),
           "loss_mono");
  }
  return st;
}

GradStats grad_ip_nlr(CounterRng& rng) {
  GradStats st;
  for (int k = 0; k < 50; ++k) {
    const Index3 dims{1 + static_cast<std::int64_t>(rng.uniform_inclusive(1)), 2, 3};
    FeatureMap<double> f(dims, 4);
    fill(f.values(), rng, 1.5);
    HeadWeights<double> h(4, 6);
    for (auto& [name, span] : h.tensors()) fill(span, rng, 0.8);
    std::vector<double> up(static_cast<std::size_t>(f.positions()));
    fill(up, rng, 1.0);
    const auto g = ip_nlr_backward(f, h, up);
    auto objective = [&] {
      const auto q = ip_nlr(f, h);
      return std::inner_product(q.local.begin(), q.local.end(), up.begin(), 0.0);
    };
    auto probe = [&](std::span<double> target, std::span<const double> analytic, const std::string& label) {
      const std::vector<double> point(target.begin(), target.end());
      st.add(finite_diff_check(
                 [&](std::span<const double> p) {
                   std::copy(p.begin(), p.end(), target.begin());
                   const double v = objective();
                   std::copy(point.begin(), point.end(), target.begin());
                   return v;
                 },
                 point, analytic, kGradStep, kGradFloor),
             label);
    };
    probe(f.values(), g.features.values(), "ip_nlr features");
    auto params = h.tensors();
    auto grads = const_cast<HeadWeights<double>&>(g.head).tensors();
    for (std::size_t t = 0; t < params.size(); ++t)
      probe(params[t].second, grads[t].second, "ip_nlr " + params[t].first);
  }
  return st;
}

// Attention gradients; `which` selects input+projections, bias.real or bias.pseudo.
GradStats grad_attention(CounterRng& rng, const std::string& which) {
  GradStats st;
  for (int k = 0; k < 50; ++k) {
    const Index3 dims{2, 2, 4}, window{2, 2, 2}, cube{1, 1 + static_cast<std::int64_t>(rng.uniform_inclusive(1)), 2};
    const auto g = WindowGeometry::from_cube_extent(dims, window, cube);
    FeatureMap<double> x(dims, 4);
    fill(x.values(), rng, 1.0);
    AttentionWeights<double> w(4, 2, window);
    for (auto& [name, span] : w.tensors()) fill(span, rng, 0.6);
    FeatureMap<double> up(dims, 4);
    fill(up.values(), rng, 1.0);
    const auto grads = window_attention_backward(x, w, g, BiasMode::kGated, up);
    auto objective = [&] {
      const auto y = window_attention_forward(x, w, g, BiasMode::kGated);
      return std::inner_product(y.values().begin(), y.values().end(), up.values().begin(), 0.0);
    };
    auto probe = [&](std::span<double> target, std::span<const double> analytic, const std::string& label) {
      const std::vector<double> point(target.begin(), target.end());
      st.add(finite_diff_check(
                 [&](std::span<const double> p) {
                   std::copy(p.begin(), p.end(), target.begin());
                   const double v = objective();
                   std::copy(point.begin(), point.end(), target.begin());
                   return v;
                 },
                 point, analytic, kGradStep, kGradFloor),
             label);
    };
    auto params = w.tensors();
    auto named = const_cast<AttentionWeights<double>&>(grads.weights).tensors();
    if (which == "attention") {
      probe(x.values(), grads.input.values(), "attention input");
      for (std::size_t t = 0; t < params.size(); ++t)
        if (params[t].first.rfind("bias.", 0) != 0)
          probe(params[t].second, named[t].second, "attention " + params[t].first);
    } else {
      for (std::size_t t = 0; t < params.size(); ++t)
        if (params[t].first == which) probe(params[t].second, named[t].second, which);
    }
  }
  return st;
}

Outcome gradient_suite() {
  CounterRng rng(31337);
  const std::vector<std::pair<const char*, GradStats>> parts{
      {"loss_lin", grad_loss_lin(rng)},
      {"loss_mono", grad_loss_mono(rng)},
      {"ip_nlr", grad_ip_nlr(rng)},
      {"attention", grad_attention(rng, "attention")},
      {"T_real", grad_attention(rng, "bias.real")},
      {"T_pseudo", grad_attention(rng, "bias.pseudo")}};
  Outcome o;
  for (const auto& [name, st] : parts) {
    o.pass &= st.worst < kGradTol;
    o.detail += std::string(name) + fmt(" %.1e  ", st.worst);
    if (st.worst >= kGradTol) o.detail += "[worst: " + st.where + "] ";
  }
  return o;
}

Outcome metric_oracles() {
  CounterRng rng(4242);
  double worst = 0.0, worst_lin = 0.0;
  int vectors = 0, tied = 0;
  while (vectors < 1000) {
    const std::size_t n = 2 + rng.uniform_inclusive(48);
    std::vector<double> x(n), y(n);
    const bool ties = rng.uniform_inclusive(1) == 1;
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = ties ? static_cast<double>(rng.uniform_inclusive(4)) : uniform(rng, -3, 3);
      y[i] = rng.uniform_inclusive(2) == 0 ? static_cast<double>(rng.uniform_inclusive(3)) : uniform(rng, 0, 5);
    }
    if (oracle::population_std(x) == 0 || oracle::population_std(y) == 0) continue;
    ++vectors;
    if (ties) ++tied;
    worst = std::max({worst, std::abs(plcc(x, y) - oracle::pearson(x, y)),
                      std::abs(srcc(x, y) - oracle::spearman(x, y)),
                      std::abs(krcc(x, y) - oracle::kendall_tau_b(x, y))});
    worst_lin = std::max(worst_lin, std::abs(loss_lin(x, y) - (1 - plcc(x, y)) / 2));
  }
  Outcome o;
  o.pass = worst <= kMetricTol && worst_lin <= kMetricTol;
  o.detail = std::to_string(vectors) + " vector pairs (" + std::to_string(tied) +
             " with heavy ties), max oracle gap " + fmt("%.2e", worst) +
             ", max |loss_lin - (1-plcc)/2| " + fmt("%.2e", worst_lin);
  return o;
}

Outcome ip_nlr_vs_pool_first() {
  CounterRng rng(99);
  double worst_const = 0.0, worst_mean = 0.0, min_gap = INFINITY, worst_closed = 0.0;
  for (int k = 0; k < 100; ++k) {
    const std::int64_t d = 2 + static_cast<std::int64_t>(rng.uniform_inclusive(6));
    HeadWeights<double> h(d, 4);
    for (auto& [name, span] : h.tensors()) fill(span, rng, 1.0);

    FeatureMap<double> c({2, 3, 3}, d);
    std::vector<double> value(static_cast<std::size_t>(d));
    fill(value, rng, 2.0);
    for (std::int64_t p = 0; p < c.positions(); ++p) std::copy(value.begin(), value.end(), c.pixel(p));
    worst_const = std::max(worst_const, std::abs(ip_nlr(c, h).global - pool_first_head(c, h)));

    // +a on half the positions, -a on the other half; zero L1 bias and positive
    // L2 weights make the gap sum_m w2_m * z_m * erf(z_m / sqrt 2) / 2 > 0.
    HeadWeights<double> hp = h;
    std::fill(hp.l1.bias.begin(), hp.l1.bias.end(), 0.0);
    for (auto& wv : hp.l2.weight) wv = std::abs(wv) + 0.1;
    FeatureMap<double> pm({1, 2, 2}, d);
    std::vector<double> a(static_cast<std::size_t>(d));
    fill(a, rng, 2.0);
    for (std::int64_t p = 0; p < 4; ++p)
      for (std::int64_t i = 0; i < d; ++i) pm.pixel(p)[i] = (p % 2 ? -1 : 1) * a[static_cast<std::size_t>(i)];
    const double gap = ip_nlr(pm, hp).global - pool_first_head(pm, hp);
    double closed = 0.0;
    for (std::int64_t m = 0; m < 4; ++m) {
      double z = 0;
      for (std::int64_t i = 0; i < d; ++i) z += hp.l1.weight[static_cast<std::size_t>(m * d + i)] * a[static_cast<std::size_t>(i)];
      closed += hp.l2.weight[static_cast<std::size_t>(m)] * z * std::erf(z / std::sqrt(2.0)) / 2;
    }
    min_gap = std::min(min_gap, gap);
    worst_closed = std::max(worst_closed, std::abs(gap - closed));

    FeatureMap<double> r({2, 3, 4}, d);
    fill(r.values(), rng, 3.0);
    const auto q = ip_nlr(r, h);
    worst_mean = std::max(worst_mean, std::abs(q.global - std::accumulate(q.local.begin(), q.local.end(), 0.0) /
                                                            static_cast<double>(q.local.size())));
  }
  // Also through the float toy network.
  const auto v = synth_video(SynthPattern::kNoise, 40, 240, 240, 3, 5);
  const auto q = toy_forward(sample_fragment(v, faster_vqa_config()), init_toy_weights(ToyNetConfig{}, 5));
  worst_mean = std::max(worst_mean, std::abs(q.global - std::accumulate(q.local.begin(), q.local.end(), 0.0) /
                                                          static_cast<double>(q.local.size())));
  Outcome o;
  o.pass = worst_const <= kMeanTol && min_gap > 0 && worst_closed <= kMeanTol && worst_mean <= kMeanTol;
  o.detail = fmt("constant-feature gap %.1e, +-a gap min %.3g (closed form off by %.1e)", worst_const,
                 min_gap, worst_closed) +
             fmt(", |g_pr - mean l_pr| %.1e", worst_mean);
  return o;
}

std::vector<std::pair<std::string, std::vector<std::uint8_t>>> tree_bytes(const fs::path& root) {
  std::vector<std::pair<std::string, std::vector<std::uint8_t>>> out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file())
      out.emplace_back(fs::relative(e.path(), root).generic_string(), read_file_bytes(e.path()));
  std::sort(out.begin(), out.end());
  return out;
}

Outcome determinism_and_stability() {
  testutil::TempDir dir;
  BatchManifest m;
  m.base = {{"gt", 2}, {"gf", 2}, {"tf", 4}, {"sf", 16}};
  for (int v = 0; v < 8; ++v) {
    const auto path = dir / ("v" + std::to_string(v) + ".raw");
    write_raw(synth_video(SynthPattern::kNoise, 20 + v, 40 + v, 44, 3, static_cast<std::uint64_t>(v)), path);
    m.items.push_back({path, nlohmann::json::object(), 6, static_cast<std::uint64_t>(1000 * v)});
  }
  m.items[3].overrides = {{"align", "per_clip"}};
  ToyNetConfig net;
  net.base_window = {4, 4, 4};
  net.base_grid = {2, 2, 2};
  const auto w = init_toy_weights(net, 11);
  const auto one = run_batch(m, dir / "p1", 1, w);
  const auto eight = run_batch(m, dir / "p8", 8, w);
  const bool identical = tree_bytes(dir / "p1") == tree_bytes(dir / "p8");

  const auto scores = summary_scores(one.summary);
  const auto rep = stability_report(scores, 0.0, 1.0);
  double want = 0;
  for (const auto& s : scores) want += oracle::population_std(s);
  want /= static_cast<double>(scores.size());

  const bool fixture1 = std::abs(stability_report({{0, 10}}, 0, 100).normalized_std - 0.05) <= kStabilityTol;
  const bool fixture2 =
      std::abs(stability_report({{1, 1, 1}, {2, 4, 2, 4}}, 1, 5).normalized_std - 0.125) <= kStabilityTol;
  const bool fixture3 = std::abs(stability_report({{3, 5}, {0, 0, 6, 6}, {7, 7}}, 0, 10).normalized_std -
                                 (1.0 + 3.0 + 0.0) / 3 / 10) <= kStabilityTol;
  const bool from_batch = std::abs(rep.normalized_std - want) <= kStabilityTol;

  Outcome o;
  o.pass = one.ok() && eight.ok() && identical && fixture1 && fixture2 && fixture3 && from_batch;
  o.detail = std::string("parallelism 1 vs 8 ") + (identical ? "byte-identical" : "DIFFER") +
             " over " + std::to_string(tree_bytes(dir / "p1").size()) + " files; fixtures " +
             (fixture1 && fixture2 && fixture3 ? "ok" : "MISMATCH") + "; 6-repeat batch normalized std " +
             fmt("%.4g", rep.normalized_std) + (from_batch ? " matches oracle" : " MISMATCH");
  return o;
}

}  // namespace

int main() {
  report("fragment-geometry", fragment_geometry);
  report("sampled-fractions", sampled_fractions);
  report("provenance", provenance_suite);
  report("match-constraint-oracle", match_oracle);
  report("ami-windows", ami_rows);
  report("grpb-degeneracy", grpb_degeneracy);
  report("gradients", gradient_suite);
  report("metric-oracles", metric_oracles);
  report("ip-nlr-vs-pool-first", ip_nlr_vs_pool_first);
  report("determinism-stability", determinism_and_stability);
  std::printf("%d of 10 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
