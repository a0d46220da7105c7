#include "fragvqa/fragment_io.hpp"

#include "fragvqa/error.hpp"
#include "fragvqa/file_util.hpp"

namespace fragvqa {

using json = nlohmann::json;

json config_to_json(const SamplingConfig& c) {
  return {{"gt", c.temporal_segments},
          {"gf", c.spatial_grids},
          {"tf", c.frames_per_cube},
          {"sf", c.patch_side},
          {"seed", c.seed},
          {"alignment", to_string(c.alignment)},
          {"offset_policy", to_string(c.offset_policy)},
          {"temporal_mode", to_string(c.temporal_mode)},
          {"allow_upscale", c.allow_upscale}};
}

SamplingConfig config_from_json(const json& j, SamplingConfig c) {
  if (!j.is_object()) throw FormatError("sampling config must be a JSON object");
  try {
    if (j.contains("preset")) c = preset_config(j.at("preset").get<std::string>());
    if (j.contains("gt")) c.temporal_segments = j.at("gt").get<std::int64_t>();
    if (j.contains("gf")) c.spatial_grids = j.at("gf").get<std::int64_t>();
    if (j.contains("tf")) c.frames_per_cube = j.at("tf").get<std::int64_t>();
    if (j.contains("sf")) c.patch_side = j.at("sf").get<std::int64_t>();
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("alignment")) c.alignment = parse_alignment(j.at("alignment").get<std::string>());
    if (j.contains("offset_policy"))
      c.offset_policy = parse_offset_policy(j.at("offset_policy").get<std::string>());
    if (j.contains("temporal_mode"))
      c.temporal_mode = parse_temporal_mode(j.at("temporal_mode").get<std::string>());
    if (j.contains("allow_upscale")) c.allow_upscale = j.at("allow_upscale").get<bool>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("sampling config: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("sampling config: ") + e.what());
  }
  return c;
}

json fragment_sidecar(const Fragment& f) {
  json offsets = json::array();
  for (const auto& o : f.provenance) offsets.push_back({o.k, o.i, o.j, o.t0, o.y0, o.x0});
  return {{"shape", {f.shape.t, f.shape.h, f.shape.w, f.shape.c}},
          {"dtype", "u8"},
          {"endianness", "le"},
          {"config", config_to_json(f.config)},
          {"offsets", std::move(offsets)},
          {"source", {{"t", f.source.t}, {"h", f.source.h}, {"w", f.source.w}}},
          {"seed", f.config.seed},
          {"run_start", f.run_start},
          {"upscale", f.upscale}};
}

void write_fragment(const Fragment& fragment, const std::filesystem::path& path) {
  write_file_atomic(path, fragment.data);
  write_file_atomic(with_suffix(path, ".json"), fragment_sidecar(fragment).dump(1));
}

Fragment read_fragment(const std::filesystem::path& path) {
  const auto sidecar_path = with_suffix(path, ".json");
  Fragment f;
  try {
    const json j = json::parse(read_file_text(sidecar_path));
    const auto& shape = j.at("shape");
    if (!shape.is_array() || shape.size() != 4) throw FormatError("fragment: shape must have 4 entries");
    f.shape = {shape[0].get<std::int64_t>(), shape[1].get<std::int64_t>(),
               shape[2].get<std::int64_t>(), shape[3].get<std::int64_t>()};
    if (j.value("dtype", std::string("u8")) != "u8")
      throw UnsupportedError("fragment: only u8 tensors are supported");
    f.config = config_from_json(j.at("config"));
    if (j.contains("seed")) f.config.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& o : j.at("offsets")) {
      if (!o.is_array() || o.size() != 6) throw FormatError("fragment: offsets need 6 entries");
      f.provenance.push_back({o[0].get<std::int64_t>(), o[1].get<std::int64_t>(),
                              o[2].get<std::int64_t>(), o[3].get<std::int64_t>(),
                              o[4].get<std::int64_t>(), o[5].get<std::int64_t>()});
    }
    const auto& src = j.at("source");
    f.source = {src.at("t").get<std::int64_t>(), src.at("h").get<std::int64_t>(),
                src.at("w").get<std::int64_t>()};
    f.run_start = j.value("run_start", std::int64_t{0});
    f.upscale = j.value("upscale", std::int64_t{1});
  } catch (const json::exception& e) {
    throw FormatError("fragment sidecar " + sidecar_path.string() + ": " + e.what());
  }
  f.data = read_file_bytes(path);
  if (static_cast<std::int64_t>(f.data.size()) != f.shape.size())
    throw FormatError("fragment: tensor holds " + std::to_string(f.data.size()) +
                      " bytes, sidecar shape needs " + std::to_string(f.shape.size()));
  return f;
}

}  // namespace fragvqa
