#pragma once

#include <filesystem>
#include <string>

#include "json.hpp"

#include "fragvqa/sampler.hpp"

namespace fragvqa {

nlohmann::json config_to_json(const SamplingConfig& config);
/// Missing keys keep the values already in `base`.
SamplingConfig config_from_json(const nlohmann::json& j, SamplingConfig base = {});

/// Sidecar document:
/// {"shape":[t,h,w,c], "dtype":"u8", "endianness":"le", "config":{...},
///  "offsets":[[k,i,j,t0,y0,x0],...], "source":{"t":..,"h":..,"w":..},
///  "seed":.., "run_start":.., "upscale":..}
nlohmann::json fragment_sidecar(const Fragment& fragment);

/// Writes the raw tensor to `path` and the sidecar to `path` + ".json",
/// each through a temporary file and rename.
void write_fragment(const Fragment& fragment, const std::filesystem::path& path);
Fragment read_fragment(const std::filesystem::path& path);

}  // namespace fragvqa
