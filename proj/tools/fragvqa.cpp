#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "fragvqa/batch.hpp"
#include "fragvqa/error.hpp"
#include "fragvqa/file_util.hpp"
#include "fragvqa/fragment_io.hpp"
#include "fragvqa/match_constraint.hpp"
#include "fragvqa/objectives.hpp"
#include "fragvqa/sampler.hpp"
#include "fragvqa/toy_model.hpp"
#include "fragvqa/video.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace fragvqa;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void emit(const json& j, bool as_json) {
  if (as_json) {
    std::cout << j.dump() << '\n';
    return;
  }
  for (const auto& [key, value] : j.items()) {
    if (value.is_string())
      std::cout << key << ": " << value.get<std::string>() << '\n';
    else
      std::cout << key << ": " << value.dump() << '\n';
  }
}

// One number per line; the last comma-separated field counts. A first line
// that does not parse is taken as a header.
std::vector<double> read_column(const fs::path& path) {
  std::istringstream in(read_file_text(path));
  std::vector<double> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    const std::string field = line.substr(line.rfind(',') == std::string::npos ? 0 : line.rfind(',') + 1);
    try {
      std::size_t used = 0;
      out.push_back(std::stod(field, &used));
    } catch (const std::exception&) {
      if (lineno == 1) continue;
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": not a number");
    }
  }
  return out;
}

std::vector<std::vector<double>> read_rows(const fs::path& path) {
  std::istringstream in(read_file_text(path));
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    std::vector<double> row;
    std::istringstream fields(line);
    std::string f;
    bool header = false;
    while (std::getline(fields, f, ',')) {
      try {
        row.push_back(std::stod(f));
      } catch (const std::exception&) {
        if (lineno != 1) throw FormatError(path.string() + ":" + std::to_string(lineno) + ": not a number");
        header = true;
        break;
      }
    }
    if (!header) rows.push_back(std::move(row));
  }
  return rows;
}

struct SamplingFlags {
  std::string preset;
  std::int64_t gt = 0, gf = 0, tf = 0, sf = 0;
  std::uint64_t seed = 0;
  std::string align, offset_policy, temporal_mode;
  bool allow_upscale = false;
  std::vector<CLI::Option*> opts;

  void add(CLI::App* app, bool with_seed) {
    app->add_option("--preset", preset,
                    "fastervqa | fastervqa-mt | fastervqa-ms | fast-vqa | fast-vqa-m");
    opts = {app->add_option("--gt", gt, "temporal segments G_t"),
            app->add_option("--gf", gf, "spatial grids G_f"),
            app->add_option("--tf", tf, "frames per cube T_f"),
            app->add_option("--sf", sf, "patch side S_f")};
    if (with_seed) {
      opts.push_back(app->add_option("--seed", seed, "64-bit seed"));
      opts.push_back(app->add_option("--align", align, "per_cube | per_clip"));
      opts.push_back(app->add_option("--offset-policy", offset_policy, "random | centered"));
      opts.push_back(app->add_option("--temporal-mode", temporal_mode, "segmented | contiguous"));
      app->add_flag("--allow-upscale", allow_upscale, "upscale videos too small for the grid");
    }
  }

  SamplingConfig build() const {
    SamplingConfig c = preset.empty() ? SamplingConfig{} : preset_config(preset);
    if (opts[0]->count()) c.temporal_segments = gt;
    if (opts[1]->count()) c.spatial_grids = gf;
    if (opts[2]->count()) c.frames_per_cube = tf;
    if (opts[3]->count()) c.patch_side = sf;
    if (opts.size() > 4) {
      if (opts[4]->count()) c.seed = seed;
      if (opts[5]->count()) c.alignment = parse_alignment(align);
      if (opts[6]->count()) c.offset_policy = parse_offset_policy(offset_policy);
      if (opts[7]->count()) c.temporal_mode = parse_temporal_mode(temporal_mode);
      if (allow_upscale) c.allow_upscale = true;
    }
    c.validate();
    return c;
  }
};

BiasMode parse_bias_mode(const std::string& s) {
  if (s == "gated") return BiasMode::kGated;
  if (s == "ungated") return BiasMode::kUngated;
  if (s == "none") return BiasMode::kNone;
  throw UsageError("unknown bias mode '" + s + "' (gated | ungated | none)");
}

json shape_json(const FragmentShape& s) { return json::array({s.t, s.h, s.w, s.c}); }

void configure_logging() {
  auto logger = spdlog::stderr_color_mt("fragvqa");
  logger->set_pattern("%^%l%$: %v");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::warn);
  if (const char* env = std::getenv("FRAG_LOG")) spdlog::set_level(spdlog::level::from_str(env));
}

}  // namespace

int main(int argc, char** argv) {
  configure_logging();

  CLI::App app{"Fragment sampling, match-constraint checks and toy quality scoring"};
  app.require_subcommand(1);
  bool as_json = false;
  app.add_flag("--json", as_json, "machine-readable JSON on stdout");

  int code = kExitOk;
  auto sub = [&](const char* name, const char* help) {
    auto* s = app.add_subcommand(name, help);
    s->add_flag("--json", as_json, "machine-readable JSON on stdout");
    return s;
  };

  // sample
  auto* sample = sub("sample", "sample a fragment from a video");
  SamplingFlags sample_flags;
  std::string sample_in, sample_out;
  sample->add_option("--input", sample_in, "video (.y4m or raw with .json sidecar)")->required();
  sample->add_option("--out", sample_out, "fragment blob; sidecar goes to <out>.json")->required();
  sample_flags.add(sample, true);
  sample->callback([&] {
    const SamplingConfig config = sample_flags.build();
    const VideoVolume video = load_video(sample_in);
    spdlog::info("loaded {} ({}x{}x{}x{})", sample_in, video.frames(), video.height(),
                 video.width(), video.channels());
    const Fragment frag = sample_fragment(video, config);
    write_fragment(frag, sample_out);
    emit({{"fragment", sample_out},
          {"shape", shape_json(frag.shape)},
          {"cubes", frag.provenance.size()},
          {"seed", config.seed},
          {"run_start", frag.run_start},
          {"upscale", frag.upscale}},
         as_json);
  });

  // validate
  auto* validate = sub("validate", "check a pooling schedule against the match constraint");
  SamplingFlags validate_flags;
  std::string stages_text;
  bool suggest = false;
  validate_flags.add(validate, false);
  validate->add_option("--stages", stages_text, "e.g. 4x4x4:2x2x2 or 3x3x3/2x2x2")->required();
  validate->add_flag("--suggest", suggest, "list passing patch sides in [8, 64]");
  validate->callback([&] {
    const SamplingConfig c = validate_flags.build();
    PoolSchedule schedule;
    try {
      schedule.stages = parse_stages(stages_text);
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
    schedule.cube = {c.frames_per_cube, c.patch_side, c.patch_side};
    schedule.cube_counts = {c.temporal_segments, c.spatial_grids, c.spatial_grids};
    const MatchReport report = check_match(schedule);
    json j = match_report_json(schedule, report);
    if (suggest)
      j["suggested_patch_sides"] =
          suggest_patch_sides(schedule.stages, c.frames_per_cube, schedule.cube_counts);
    std::cout << (as_json ? j.dump() : j.dump(2)) << '\n';
    if (!report) code = kExitFailure;
  });

  // score
  auto* score = sub("score", "run the toy network on one or more fragments");
  std::vector<std::string> frag_paths;
  std::string weights_path, map_out, bias_text = "gated";
  score->add_option("--frag", frag_paths, "fragment blob; repeat to average clips")->required();
  score->add_option("--weights", weights_path, "toy weights blob")->required();
  score->add_option("--map-out", map_out, "quality map CSV; a .pgm is written next to it");
  score->add_option("--bias", bias_text, "gated | ungated | none");
  score->callback([&] {
    const auto weights = read_toy_weights(weights_path);
    ToyForwardOptions options;
    options.bias_mode = parse_bias_mode(bias_text);
    std::vector<Fragment> clips;
    for (const auto& p : frag_paths) clips.push_back(read_fragment(p));
    json j;
    std::optional<double> first;
    if (clips.size() == 1 || !map_out.empty()) {
      const QualityOutput q = toy_forward(clips.front(), weights, options);
      if (!map_out.empty()) {
        const fs::path csv(map_out);
        fs::path pgm = csv;
        pgm.replace_extension(".pgm");
        write_file_atomic(csv, quality_map_csv(q));
        write_file_atomic(pgm, quality_map_pgm(q));
        j["map_csv"] = csv.string();
        j["map_pgm"] = pgm.string();
      }
      j["map_dims"] = q.dims;
      first = q.global;
    }
    const double g = clips.size() == 1 && first ? *first : mean_clip_score(clips, weights, options);
    j["g_pr"] = g;
    j["clips"] = clips.size();
    if (as_json) {
      std::cout << j.dump() << '\n';
    } else {
      std::cout.precision(9);
      std::cout << g << '\n';
    }
  });

  // metrics / loss
  auto* metrics = sub("metrics", "PLCC, SRCC and KRCC between two score columns");
  std::string pred_path, gt_path;
  metrics->add_option("--pred", pred_path, "CSV of predictions")->required();
  metrics->add_option("--gt", gt_path, "CSV of ground truth")->required();
  metrics->callback([&] {
    const auto pred = read_column(pred_path);
    const auto gt = read_column(gt_path);
    emit({{"plcc", plcc(pred, gt)}, {"srcc", srcc(pred, gt)}, {"krcc", krcc(pred, gt)},
          {"n", pred.size()}},
         as_json);
  });

  auto* loss = sub("loss", "linearity, monotonicity and fused loss");
  double lambda = kDefaultMonoWeight;
  loss->add_option("--pred", pred_path, "CSV of predictions")->required();
  loss->add_option("--gt", gt_path, "CSV of ground truth")->required();
  loss->add_option("--lambda", lambda, "weight of the monotonicity term");
  loss->callback([&] {
    const auto pred = read_column(pred_path);
    const auto gt = read_column(gt_path);
    emit({{"lin", loss_lin(pred, gt)}, {"mono", loss_mono(pred, gt)},
          {"fusion", loss_fusion(pred, gt, lambda)}, {"lambda", lambda}},
         as_json);
  });

  // fraction
  auto* fraction = sub("fraction", "share of video samples kept by a fragment");
  SamplingFlags fraction_flags;
  std::int64_t vt = 0, vh = 0, vw = 0;
  fraction_flags.add(fraction, false);
  fraction->add_option("--frames", vt, "video frames (omit for the per-frame fraction)");
  fraction->add_option("--height", vh, "video height")->required();
  fraction->add_option("--width", vw, "video width")->required();
  fraction->callback([&] {
    const SamplingConfig c = fraction_flags.build();
    json j = {{"spatial_fraction", spatial_sampled_fraction(vh, vw, c)}};
    j["spatial_percent"] = 100.0 * j["spatial_fraction"].get<double>();
    if (vt > 0) {
      j["fraction"] = sampled_fraction({vt, vh, vw}, c);
      j["percent"] = 100.0 * j["fraction"].get<double>();
    }
    emit(j, as_json);
  });

  // stability
  auto* stability = sub("stability", "normalized std of repeated predictions");
  std::string scores_path, summary_path;
  std::vector<double> range;
  auto* scores_opt = stability->add_option("--scores", scores_path, "CSV, one video per row");
  auto* summary_opt = stability->add_option("--summary", summary_path, "batch summary.json");
  scores_opt->excludes(summary_opt);
  stability->add_option("--range", range, "score range lo hi")->expected(2)->required();
  stability->callback([&] {
    std::vector<std::vector<double>> scores;
    if (!scores_path.empty())
      scores = read_rows(scores_path);
    else if (!summary_path.empty())
      scores = summary_scores(json::parse(read_file_text(summary_path)));
    else
      throw UsageError("stability needs --scores or --summary");
    const StabilityReport r = stability_report(scores, range[0], range[1]);
    emit({{"per_video_std", r.per_video_std},
          {"mean_std", r.mean_std},
          {"normalized_std", r.normalized_std}},
         as_json);
  });

  // batch
  auto* batch = sub("batch", "sample (and optionally score) every item of a manifest");
  std::string manifest_path, batch_out, batch_weights;
  int jobs = 1;
  batch->add_option("--manifest", manifest_path, "manifest JSON")->required();
  batch->add_option("--out", batch_out, "output directory")->required();
  batch->add_option("--jobs", jobs, "worker threads")->check(CLI::PositiveNumber);
  batch->add_option("--weights", batch_weights, "toy weights; scores every repeat");
  batch->callback([&] {
    BatchManifest manifest = load_manifest(manifest_path);
    if (!batch_weights.empty()) manifest.weights = fs::path(batch_weights);
    std::optional<ToyNetWeights<float>> weights;
    if (manifest.weights) weights = read_toy_weights(*manifest.weights);
    const BatchResult result = run_batch(manifest, batch_out, jobs, weights);
    for (const auto& item : result.summary.at("items"))
      if (!item.at("ok").get<bool>())
        spdlog::error("{}: {}", item.at("video").get<std::string>(),
                      item.at("error").get<std::string>());
    emit({{"summary", (fs::path(batch_out) / "summary.json").string()},
          {"succeeded", result.summary.at("succeeded")},
          {"failed", result.failed}},
         as_json);
    if (!result.ok()) code = kExitFailure;
  });

  // synth
  auto* synth = sub("synth", "write a deterministic fixture video as raw + sidecar");
  std::string pattern = "gradient", synth_out;
  std::int64_t st = 32, sh = 64, sw = 64, sc = 3;
  std::uint64_t synth_seed = 0;
  synth->add_option("--pattern", pattern, "gradient | checker | noise");
  synth->add_option("--frames", st);
  synth->add_option("--height", sh);
  synth->add_option("--width", sw);
  synth->add_option("--channels", sc);
  synth->add_option("--seed", synth_seed);
  synth->add_option("--out", synth_out, "raw blob; sidecar goes to <out>.json")->required();
  synth->callback([&] {
    const VideoVolume v = synth_video(parse_synth_pattern(pattern), st, sh, sw, sc, synth_seed);
    write_raw(v, synth_out);
    emit({{"video", synth_out}, {"shape", json::array({st, sh, sw, sc})}}, as_json);
  });

  // init-weights
  auto* init = sub("init-weights", "write seeded toy network weights");
  std::string init_out, init_config;
  std::uint64_t init_seed = 0;
  init->add_option("--out", init_out, "weights blob; manifest goes to <out>.json")->required();
  init->add_option("--seed", init_seed);
  init->add_option("--config", init_config, "toy network config JSON");
  init->callback([&] {
    ToyNetConfig cfg;
    if (!init_config.empty()) cfg = toy_config_from_json(json::parse(read_file_text(init_config)));
    write_toy_weights(init_toy_weights(cfg, init_seed), init_out);
    emit({{"weights", init_out}, {"config", toy_config_to_json(cfg)}}, as_json);
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  } catch (const UsageError& e) {
    spdlog::error("{}", e.what());
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    spdlog::error("{}", e.what());
    return kExitUsage;
  } catch (const json::exception& e) {
    spdlog::error("{}", e.what());
    return kExitFailure;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kExitFailure;
  }
  return code;
}
