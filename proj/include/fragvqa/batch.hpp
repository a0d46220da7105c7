#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "fragvqa/sampler.hpp"
#include "fragvqa/toy_model.hpp"

namespace fragvqa {

struct BatchItem {
  std::filesystem::path video;
  nlohmann::json overrides = nlohmann::json::object();  // same keys as the fragment sidecar config
  std::int64_t repeats = 1;
  std::uint64_t seed_base = 0;
};

struct BatchManifest {
  std::vector<BatchItem> items;
  nlohmann::json base = nlohmann::json::object();
  std::optional<std::filesystem::path> weights;

  // Throws FormatError on duplicate paths or repeats < 1.
  void validate() const;
};

// {"items": [{"video", "config", "repeats", "seed_base"}], "config": {...}, "weights": path}.
// Relative paths resolve against `base_dir`.
BatchManifest parse_manifest(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
BatchManifest load_manifest(const std::filesystem::path& path);

struct BatchResult {
  nlohmann::json summary;
  std::int64_t failed = 0;

  bool ok() const noexcept { return failed == 0; }
};

// Item n, repeat r goes to out_dir/item_NNN/rep_RRR.bin (+ .json sidecar),
// sampled with seed seed_base + r. summary.json is written last.
BatchResult run_batch(const BatchManifest& manifest, const std::filesystem::path& out_dir,
                      int parallelism = 1,
                      const std::optional<ToyNetWeights<float>>& weights = std::nullopt);

// Per-item repeated scores from a batch summary, for stability reports.
std::vector<std::vector<double>> summary_scores(const nlohmann::json& summary);

}  // namespace fragvqa
