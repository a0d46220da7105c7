#include "fragvqa/batch.hpp"

#include <atomic>
#include <cstdio>
#include <set>
#include <thread>

#include "fragvqa/error.hpp"
#include "fragvqa/file_util.hpp"
#include "fragvqa/fragment_io.hpp"

namespace fragvqa {

using json = nlohmann::json;
namespace fs = std::filesystem;

void BatchManifest::validate() const {
  std::set<std::string> seen;
  for (const auto& item : items) {
    if (item.repeats < 1)
      throw FormatError("manifest: repeat count must be >= 1 for " + item.video.string());
    if (!seen.insert(item.video.lexically_normal().string()).second)
      throw FormatError("manifest: duplicate video path " + item.video.string());
  }
}

BatchManifest parse_manifest(const json& j, const fs::path& base_dir) {
  BatchManifest m;
  auto resolve = [&](const std::string& p) {
    fs::path path(p);
    return path.is_relative() && !base_dir.empty() ? base_dir / path : path;
  };
  try {
    m.base = j.value("config", json::object());
    if (j.contains("weights")) m.weights = resolve(j.at("weights").get<std::string>());
    for (const auto& it : j.at("items")) {
      BatchItem item;
      item.video = resolve(it.at("video").get<std::string>());
      item.overrides = it.value("config", json::object());
      item.repeats = it.value("repeats", std::int64_t{1});
      item.seed_base = it.value("seed_base", std::uint64_t{0});
      m.items.push_back(std::move(item));
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("manifest: ") + e.what());
  }
  m.validate();
  return m;
}

BatchManifest load_manifest(const fs::path& path) {
  json j;
  try {
    j = json::parse(read_file_text(path));
  } catch (const json::exception& e) {
    throw FormatError("manifest " + path.string() + ": " + e.what());
  }
  return parse_manifest(j, path.parent_path());
}

namespace {

std::string numbered(const char* prefix, std::int64_t n) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s_%03lld", prefix, static_cast<long long>(n));
  return buf;
}

json run_item(const BatchManifest& manifest, std::size_t index, const fs::path& out_dir,
              const std::optional<ToyNetWeights<float>>& weights) {
  const BatchItem& item = manifest.items[index];
  json record = {{"index", index}, {"video", item.video.generic_string()},
                 {"repeats", item.repeats}, {"seed_base", item.seed_base}};
  try {
    const SamplingConfig base = config_from_json(manifest.base, SamplingConfig{});
    SamplingConfig config = config_from_json(item.overrides, base);
    const VideoVolume video = load_video(item.video);
    const fs::path dir = out_dir / numbered("item", static_cast<std::int64_t>(index));
    fs::create_directories(dir);
    json reps = json::array();
    for (std::int64_t r = 0; r < item.repeats; ++r) {
      config.seed = item.seed_base + static_cast<std::uint64_t>(r);
      const Fragment frag = sample_fragment(video, config);
      const fs::path blob = dir / (numbered("rep", r) + ".bin");
      write_fragment(frag, blob);
      json rep = {{"seed", config.seed},
                  {"fragment", fs::relative(blob, out_dir).generic_string()}};
      if (weights) rep["score"] = toy_forward(frag, *weights).global;
      reps.push_back(std::move(rep));
    }
    record["ok"] = true;
    record["outputs"] = std::move(reps);
  } catch (const std::exception& e) {
    record["ok"] = false;
    record["error"] = e.what();
  }
  return record;
}

}  // namespace

BatchResult run_batch(const BatchManifest& manifest, const fs::path& out_dir, int parallelism,
                      const std::optional<ToyNetWeights<float>>& weights) {
  manifest.validate();
  fs::create_directories(out_dir);
  std::vector<json> records(manifest.items.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < records.size(); i = next++)
      records[i] = run_item(manifest, i, out_dir, weights);
  };
  const auto workers = static_cast<std::size_t>(std::max(1, parallelism));
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < std::min(workers, records.size()); ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  BatchResult result;
  json items = json::array();
  for (auto& r : records) {
    if (!r.at("ok").get<bool>()) ++result.failed;
    items.push_back(std::move(r));
  }
  result.summary = {{"items", std::move(items)},
                    {"succeeded", static_cast<std::int64_t>(records.size()) - result.failed},
                    {"failed", result.failed},
                    {"scored", weights.has_value()}};
  write_file_atomic(out_dir / "summary.json", result.summary.dump(1) + "\n");
  return result;
}

std::vector<std::vector<double>> summary_scores(const json& summary) {
  std::vector<std::vector<double>> out;
  try {
    for (const auto& item : summary.at("items")) {
      if (!item.value("ok", false)) continue;
      std::vector<double> scores;
      for (const auto& rep : item.at("outputs")) {
        if (!rep.contains("score")) throw FormatError("batch summary has no scores; rerun with weights");
        scores.push_back(rep.at("score").get<double>());
      }
      out.push_back(std::move(scores));
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("batch summary: ") + e.what());
  }
  return out;
}

}  // namespace fragvqa
