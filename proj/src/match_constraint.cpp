#include "fragvqa/match_constraint.hpp"

#include <charconv>
#include <stdexcept>

#include "fragvqa/error.hpp"

namespace fragvqa {

namespace {

void check_schedule(const PoolSchedule& s) {
  for (int a = 0; a < 3; ++a) {
    if (s.cube[a] < 1 || s.cube_counts[a] < 1)
      throw ShapeError("pool schedule: cube dims and counts must be >= 1");
  }
  for (const auto& st : s.stages) {
    for (int a = 0; a < 3; ++a) {
      if (st.kernel[a] < 1 || st.stride[a] < 1)
        throw ShapeError("pool stage: kernel and stride must be >= 1");
    }
  }
}

/// Per-axis output lengths after each stage; lengths[0] is the input.
std::vector<std::int64_t> axis_lengths(const PoolSchedule& s, int axis) {
  std::vector<std::int64_t> len{s.cube[axis] * s.cube_counts[axis]};
  for (std::size_t n = 0; n < s.stages.size(); ++n) {
    const auto& st = s.stages[n];
    const std::int64_t in = len.back();
    if (st.kernel[axis] > in)
      throw ShapeError("pool stage " + std::to_string(n) + ": kernel " +
                       std::to_string(st.kernel[axis]) + " exceeds input length " +
                       std::to_string(in) + " on axis " + "thw"[axis]);
    len.push_back((in - st.kernel[axis]) / st.stride[axis] + 1);
  }
  return len;
}

Interval axis_receptive(const PoolSchedule& s, std::size_t stage, int axis, std::int64_t o) {
  Interval iv{o, o + 1};
  for (std::size_t n = stage + 1; n-- > 0;) {
    const auto& st = s.stages[n];
    iv = {iv.begin * st.stride[axis], (iv.end - 1) * st.stride[axis] + st.kernel[axis]};
  }
  return iv;
}

bool within_one_cube(Interval iv, std::int64_t cube) {
  return iv.begin / cube == (iv.end - 1) / cube;
}

/// Level L (after L stages) is reduced when its pixels' receptive intervals
/// are exactly the cube intervals.
bool level_reduced(const PoolSchedule& s, int axis, std::size_t level, std::int64_t length) {
  const std::int64_t cube = s.cube[axis];
  if (length != s.cube_counts[axis]) return false;
  if (level == 0) return cube == 1;
  for (std::int64_t o = 0; o < length; ++o) {
    const Interval iv = axis_receptive(s, level - 1, axis, o);
    if (iv.begin != o * cube || iv.end != (o + 1) * cube) return false;
  }
  return true;
}

std::int64_t parse_positive(std::string_view s, std::string_view whole) {
  std::int64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || v < 1)
    throw std::invalid_argument("bad stage '" + std::string(whole) + "'");
  return v;
}

Index3 parse_triple(std::string_view s, std::string_view whole) {
  Index3 out{};
  std::size_t n = 0, pos = 0;
  while (true) {
    const std::size_t x = s.find('x', pos);
    const auto part = s.substr(pos, x == std::string_view::npos ? s.size() - pos : x - pos);
    if (n == 3) throw std::invalid_argument("bad stage '" + std::string(whole) + "'");
    out[n++] = parse_positive(part, whole);
    if (x == std::string_view::npos) break;
    pos = x + 1;
  }
  if (n == 1) return {out[0], out[0], out[0]};
  if (n != 3) throw std::invalid_argument("bad stage '" + std::string(whole) + "'");
  return out;
}

std::string triple_string(const Index3& v) {
  return std::to_string(v[0]) + "x" + std::to_string(v[1]) + "x" + std::to_string(v[2]);
}

}  // namespace

Index3 stage_output_dims(const PoolSchedule& schedule, std::size_t stage) {
  check_schedule(schedule);
  if (stage >= schedule.stages.size()) throw std::out_of_range("stage index out of range");
  Index3 out{};
  for (int a = 0; a < 3; ++a) out[a] = axis_lengths(schedule, a)[stage + 1];
  return out;
}

Box receptive_set(const PoolSchedule& schedule, std::size_t stage, Index3 pixel) {
  const Index3 dims = stage_output_dims(schedule, stage);
  Box box;
  for (int a = 0; a < 3; ++a) {
    if (pixel[a] < 0 || pixel[a] >= dims[a]) throw std::out_of_range("output pixel out of range");
    box.axes[a] = axis_receptive(schedule, stage, a, pixel[a]);
  }
  return box;
}

MatchReport check_match(const PoolSchedule& schedule) {
  check_schedule(schedule);
  MatchReport report;
  std::array<std::vector<std::int64_t>, 3> lengths;
  for (int a = 0; a < 3; ++a) lengths[a] = axis_lengths(schedule, a);

  // exempt[a] turns true once the cube has been reduced on that axis.
  std::array<bool, 3> exempt{};
  for (int a = 0; a < 3; ++a) {
    exempt[a] = level_reduced(schedule, a, 0, lengths[a][0]);
    if (exempt[a]) report.reduced_after[a] = 0;
  }

  for (std::size_t s = 0; s < schedule.stages.size(); ++s) {
    std::array<std::vector<bool>, 3> bad;
    bool any_bad = false;
    for (int a = 0; a < 3; ++a) {
      bad[a].assign(static_cast<std::size_t>(lengths[a][s + 1]), false);
      if (exempt[a]) continue;
      for (std::int64_t o = 0; o < lengths[a][s + 1]; ++o) {
        if (!within_one_cube(axis_receptive(schedule, s, a, o), schedule.cube[a])) {
          bad[a][static_cast<std::size_t>(o)] = true;
          any_bad = true;
        }
      }
    }
    if (any_bad && report.ok) {
      // First violating output pixel in row-major (t, h, w) order.
      Index3 first{};
      bool found = false;
      for (std::int64_t t = 0; t < lengths[0][s + 1] && !found; ++t)
        for (std::int64_t h = 0; h < lengths[1][s + 1] && !found; ++h)
          for (std::int64_t w = 0; w < lengths[2][s + 1] && !found; ++w)
            if (bad[0][t] || bad[1][h] || bad[2][w]) {
              first = {t, h, w};
              found = true;
            }
      MatchViolation v;
      v.stage = s;
      v.pixel = first;
      v.receptive = receptive_set(schedule, s, first);
      Index3 lo{}, hi{};
      for (int a = 0; a < 3; ++a) {
        lo[a] = v.receptive.axes[a].begin / schedule.cube[a];
        hi[a] = (v.receptive.axes[a].end - 1) / schedule.cube[a];
      }
      for (std::int64_t k = lo[0]; k <= hi[0]; ++k)
        for (std::int64_t i = lo[1]; i <= hi[1]; ++i)
          for (std::int64_t j = lo[2]; j <= hi[2]; ++j) v.cubes_touched.push_back({k, i, j});
      report.ok = false;
      report.violation = std::move(v);
    }
    for (int a = 0; a < 3; ++a) {
      if (!exempt[a] && level_reduced(schedule, a, s + 1, lengths[a][s + 1])) {
        exempt[a] = true;
        report.reduced_after[a] = static_cast<std::int64_t>(s + 1);
      }
    }
    if (!report.ok) break;
  }
  return report;
}

std::vector<PoolStage> parse_stages(std::string_view text) {
  std::vector<PoolStage> out;
  if (text.empty()) throw std::invalid_argument("empty stage list");
  std::size_t pos = 0;
  while (true) {
    const std::size_t colon = text.find(':', pos);
    const auto item =
        text.substr(pos, colon == std::string_view::npos ? text.size() - pos : colon - pos);
    const std::size_t slash = item.find('/');
    PoolStage st;
    if (slash == std::string_view::npos) {
      st = PoolStage::non_overlapping(parse_triple(item, item));
    } else {
      st.kernel = parse_triple(item.substr(0, slash), item);
      st.stride = parse_triple(item.substr(slash + 1), item);
    }
    out.push_back(st);
    if (colon == std::string_view::npos) break;
    pos = colon + 1;
  }
  return out;
}

std::string format_stages(std::span<const PoolStage> stages) {
  std::string out;
  for (std::size_t n = 0; n < stages.size(); ++n) {
    if (n) out += ':';
    out += triple_string(stages[n].kernel);
    if (stages[n].stride != stages[n].kernel) out += "/" + triple_string(stages[n].stride);
  }
  return out;
}

std::vector<std::int64_t> suggest_patch_sides(std::span<const PoolStage> stages,
                                              std::int64_t frames_per_cube,
                                              Index3 cube_counts, std::int64_t lo,
                                              std::int64_t hi) {
  std::vector<std::int64_t> out;
  for (std::int64_t sf = lo; sf <= hi; ++sf) {
    PoolSchedule s{{stages.begin(), stages.end()}, {frames_per_cube, sf, sf}, cube_counts};
    try {
      if (check_match(s)) out.push_back(sf);
    } catch (const ShapeError&) {
      // schedule does not fit this fragment size at all
    }
  }
  return out;
}

nlohmann::json match_report_json(const PoolSchedule& schedule, const MatchReport& report) {
  nlohmann::json j = {{"ok", report.ok},
                      {"stages", format_stages(schedule.stages)},
                      {"cube", schedule.cube},
                      {"cube_counts", schedule.cube_counts},
                      {"reduced_after", report.reduced_after}};
  if (report.violation) {
    const auto& v = *report.violation;
    nlohmann::json box = nlohmann::json::array();
    for (const auto& iv : v.receptive.axes) box.push_back({iv.begin, iv.end});
    j["violation"] = {{"stage", v.stage},
                      {"pixel", v.pixel},
                      {"receptive", box},
                      {"cubes_touched", v.cubes_touched}};
  }
  return j;
}

}  // namespace fragvqa
