#include <cmath>
#include <numeric>
#include <set>
#include <vector>

#include "doctest.h"

#include "fragvqa/error.hpp"
#include "fragvqa/fanet.hpp"
#include "fragvqa/gradcheck.hpp"
#include "fragvqa/rng.hpp"
#include "oracles/attention_oracle.hpp"

using namespace fragvqa;

namespace {

void fill(std::span<double> v, CounterRng& rng, double scale) {
  for (auto& x : v) x = scale * (2.0 * rng.uniform_real() - 1.0);
}

AttentionWeights<double> random_attention(std::int64_t dim, std::int64_t heads, Index3 extent,
                                          std::uint64_t seed) {
  AttentionWeights<double> w(dim, heads, extent);
  CounterRng rng(seed);
  for (auto& [name, span] : w.tensors()) fill(span, rng, 0.5);
  return w;
}

FeatureMap<double> random_map(Index3 dims, std::int64_t ch, std::uint64_t seed) {
  FeatureMap<double> x(dims, ch);
  CounterRng rng(seed);
  fill(x.values(), rng, 1.0);
  return x;
}

}  // namespace

TEST_CASE("a 1x2x2 window has 9 displacement classes") {
  std::set<std::size_t> classes;
  const Index3 window{1, 2, 2};
  for (std::int64_t a = 0; a < 4; ++a)
    for (std::int64_t b = 0; b < 4; ++b)
      classes.insert(relative_index({0, a / 2, a % 2}, {0, b / 2, b % 2}, window));
  CHECK(classes.size() == 9);
  CHECK(relative_table_size(window) == 9);
  CHECK(relative_table_size({8, 7, 7}) == 15 * 13 * 13);
}

TEST_CASE("displacement encoding is mixed radix") {
  CHECK(encode_displacement({0, 0, 0}, {2, 2, 2}) == 13);
  CHECK(encode_displacement({-1, -1, -1}, {2, 2, 2}) == 0);
  CHECK(encode_displacement({1, 1, 1}, {2, 2, 2}) == 26);
  CHECK_THROWS_AS(encode_displacement({2, 0, 0}, {2, 2, 2}), ShapeError);
  CHECK_THROWS_AS(relative_index({0, 0, 0}, {0, 0, 2}, {1, 2, 2}), ShapeError);
}

TEST_CASE("gate follows cube membership") {
  const auto g = WindowGeometry::from_cube_extent({2, 4, 4}, {2, 4, 4}, {1, 2, 2});
  CHECK(grpb_gate({0, 0, 0}, {0, 1, 1}, g) == 1);
  CHECK(grpb_gate({0, 0, 0}, {0, 0, 2}, g) == 0);
  CHECK(grpb_gate({0, 0, 0}, {1, 0, 0}, g) == 0);

  BiasTables<double> t(2, {2, 4, 4});
  std::iota(t.real.begin(), t.real.end(), 0.0);
  std::iota(t.pseudo.begin(), t.pseudo.end(), 1000.0);
  const auto same = grpb_bias<double>({0, 0, 0}, {0, 1, 1}, t, g);
  const auto cross = grpb_bias<double>({0, 0, 0}, {0, 0, 2}, t, g);
  const std::size_t ts = t.table_size();
  const auto i1 = encode_displacement({0, -1, -1}, {2, 4, 4});
  const auto i2 = encode_displacement({0, 0, -2}, {2, 4, 4});
  CHECK(same[0] == t.real[i1]);
  CHECK(same[1] == t.real[ts + i1]);
  CHECK(cross[0] == t.pseudo[i2]);
  CHECK(grpb_bias<double>({0, 0, 0}, {0, 0, 2}, t, g, BiasMode::kUngated)[0] == t.real[i2]);
  CHECK(grpb_bias<double>({0, 0, 0}, {0, 0, 2}, t, g, BiasMode::kNone)[1] == 0.0);
}

TEST_CASE("window attention matches the naive double loop") {
  const Index3 dims{2, 4, 6}, window{2, 2, 3}, cube{1, 2, 3};
  const auto x = random_map(dims, 4, 1);
  const auto w = random_attention(4, 2, {2, 2, 3}, 2);
  const auto g = WindowGeometry::from_cube_extent(dims, window, cube);
  int m = 0;
  for (auto mode : {BiasMode::kGated, BiasMode::kUngated, BiasMode::kNone}) {
    const auto got = window_attention_forward(x, w, g, mode);
    const auto want = oracle::naive_attention(x.values(), dims, 4, w, window, cube, m++);
    REQUIRE(got.values().size() == want.size());
    for (std::size_t i = 0; i < want.size(); ++i) CHECK(got.values()[i] == doctest::Approx(want[i]).epsilon(1e-12));
  }
}

TEST_CASE("attention rows are normalized") {
  const Index3 dims{2, 4, 4};
  const auto x = random_map(dims, 4, 3);
  const auto w = random_attention(4, 2, {2, 2, 2}, 4);
  const auto g = WindowGeometry::from_cube_extent(dims, {2, 2, 2}, {1, 2, 2});
  const auto p = attention_probabilities(x, w, g, BiasMode::kGated, 3, 1);
  REQUIRE(p.size() == 64);
  for (int r = 0; r < 8; ++r) {
    double s = 0;
    for (int c = 0; c < 8; ++c) s += p[static_cast<std::size_t>(r * 8 + c)];
    CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
  }
  CHECK_THROWS_AS(attention_probabilities(x, w, g, BiasMode::kGated, 4, 0), std::out_of_range);
}

TEST_CASE("attention window must fit the tables and tile the map") {
  const auto x = random_map({2, 4, 4}, 4, 3);
  const auto w = random_attention(4, 2, {1, 2, 2}, 4);
  const auto big = WindowGeometry::from_cube_extent({2, 4, 4}, {2, 2, 2}, {1, 2, 2});
  CHECK_THROWS_AS(window_attention_forward(x, w, big), ShapeError);
  CHECK_NOTHROW(window_attention_forward(x, w, big, BiasMode::kNone));
  const auto ragged = WindowGeometry::from_cube_extent({2, 4, 4}, {1, 3, 2}, {1, 2, 2});
  CHECK_THROWS_AS(window_attention_forward(x, w, ragged), ShapeError);
}

TEST_CASE("attention backward matches finite differences") {
  const Index3 dims{2, 2, 4};
  const auto x = random_map(dims, 4, 5);
  auto w = random_attention(4, 2, {2, 2, 2}, 6);
  const auto g = WindowGeometry::from_cube_extent(dims, {2, 2, 2}, {1, 2, 2});
  const auto upstream = random_map(dims, 4, 7);
  const auto grads = window_attention_backward(x, w, g, BiasMode::kGated, upstream);

  auto objective = [&](const FeatureMap<double>& in, const AttentionWeights<double>& weights) {
    const auto y = window_attention_forward(in, weights, g, BiasMode::kGated);
    double s = 0;
    for (std::size_t i = 0; i < y.values().size(); ++i) s += y.values()[i] * upstream.values()[i];
    return s;
  };

  const auto rx = finite_diff_check(
      [&](std::span<const double> p) {
        FeatureMap<double> in(dims, 4);
        std::copy(p.begin(), p.end(), in.values().begin());
        return objective(in, w);
      },
      x.values(), grads.input.values(), 1e-5, 1e-6);
  CHECK(rx.max_rel_error < 1e-6);

  auto gw = grads.weights;
  auto named = gw.tensors();
  auto params = w.tensors();
  for (std::size_t t = 0; t < params.size(); ++t) {
    auto span = params[t].second;
    std::vector<double> point(span.begin(), span.end());
    const auto r = finite_diff_check(
        [&](std::span<const double> p) {
          std::copy(p.begin(), p.end(), span.begin());
          const double v = objective(x, w);
          std::copy(point.begin(), point.end(), span.begin());
          return v;
        },
        point, named[t].second, 1e-5, 1e-3);
    INFO(params[t].first);
    CHECK(r.max_rel_error < 1e-6);
  }
}

TEST_CASE("ip_nlr averages the local map") {
  const auto f = random_map({2, 3, 3}, 4, 9);
  HeadWeights<double> h(4, 5);
  CounterRng rng(10);
  for (auto& [n, s] : h.tensors()) fill(s, rng, 0.7);
  const auto q = ip_nlr(f, h);
  CHECK(q.local.size() == 18);
  CHECK(q.global == doctest::Approx(std::accumulate(q.local.begin(), q.local.end(), 0.0) / 18).epsilon(1e-14));
  CHECK(q.dims == Index3{2, 3, 3});
}

TEST_CASE("ip_nlr and pool-first agree on constant features, differ on +-a") {
  HeadWeights<double> h(2, 3);
  h.l1.weight = {1, 0, 0, 1, 1, 1};
  h.l1.bias = {0, 0, 0};
  h.l2.weight = {1, 1, 1};
  h.l2.bias = {0.25};
  FeatureMap<double> c({1, 2, 2}, 2, 0.4);
  CHECK(ip_nlr(c, h).global == doctest::Approx(pool_first_head(c, h)).epsilon(1e-14));
  FeatureMap<double> pm({1, 2, 2}, 2);
  for (std::int64_t p = 0; p < 4; ++p)
    for (std::int64_t d = 0; d < 2; ++d) pm.pixel(p)[d] = (p % 2 ? -1.5 : 1.5);
  const double pooled = pool_first_head(pm, h);
  CHECK(pooled == doctest::Approx(0.25));
  const double expected = 0.25 + (2 * (gelu(1.5) + gelu(-1.5)) + gelu(3.0) + gelu(-3.0)) / 2;
  CHECK(ip_nlr(pm, h).global == doctest::Approx(expected).epsilon(1e-12));
  CHECK(std::abs(ip_nlr(pm, h).global - pooled) > 1.0);
}

TEST_CASE("ip_nlr backward matches finite differences") {
  const auto f = random_map({1, 2, 3}, 3, 11);
  HeadWeights<double> h(3, 4);
  CounterRng rng(12);
  for (auto& [n, s] : h.tensors()) fill(s, rng, 0.8);
  std::vector<double> up(6);
  fill(up, rng, 1.0);
  const auto grads = ip_nlr_backward(f, h, up);
  const auto r = finite_diff_check(
      [&](std::span<const double> p) {
        FeatureMap<double> in(f.dims(), 3);
        std::copy(p.begin(), p.end(), in.values().begin());
        const auto q = ip_nlr(in, h);
        return std::inner_product(q.local.begin(), q.local.end(), up.begin(), 0.0);
      },
      f.values(), grads.features.values(), 1e-5, 1e-6);
  CHECK(r.max_rel_error < 1e-6);
}

TEST_CASE("gelu is the exact erf form") {
  CHECK(gelu(0.0) == 0.0);
  CHECK(gelu(1.0) == doctest::Approx(0.8413447460685429).epsilon(1e-14));
  CHECK(gelu_derivative(0.0) == doctest::Approx(0.5));
}

TEST_CASE("adaptive window rescaling") {
  CHECK(ami_window({8, 7, 7}, {8, 7, 7}, {4, 7, 7}) == Index3{4, 7, 7});
  CHECK(ami_window({8, 7, 7}, {8, 7, 7}, {8, 5, 5}) == Index3{8, 5, 5});
  CHECK(ami_window({8, 7, 7}, {8, 7, 7}, {4, 4, 4}) == Index3{4, 4, 4});
  CHECK_THROWS_AS(ami_window({4, 7, 7}, {8, 7, 7}, {3, 7, 7}), ShapeError);
  CHECK_THROWS_AS(ami_window({8, 6, 6}, {8, 7, 7}, {8, 5, 5}), ShapeError);
}
