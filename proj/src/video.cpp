#include "fragvqa/video.hpp"

#include <charconv>
#include <algorithm>
#include <cctype>
#include <stdexcept>

#include "json.hpp"

#include "fragvqa/error.hpp"
#include "fragvqa/file_util.hpp"
#include "fragvqa/rng.hpp"

namespace fragvqa {

using json = nlohmann::json;

VideoVolume::VideoVolume(std::int64_t frames, std::int64_t height, std::int64_t width,
                         std::int64_t channels, std::vector<std::uint8_t> data,
                         Rational fps)
    : frames_(frames),
      height_(height),
      width_(width),
      channels_(channels),
      fps_(fps),
      data_(std::move(data)) {
  if (frames <= 0 || height <= 0 || width <= 0 || channels <= 0)
    throw ShapeError("video dimensions must be positive");
  if (data_.size() != static_cast<std::size_t>(frames * height * width * channels))
    throw ShapeError("video data length does not match T*H*W*C");
}

namespace {

std::int64_t parse_int(std::string_view s, std::string_view what) {
  std::int64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size())
    throw FormatError("y4m: bad " + std::string(what) + " value '" + std::string(s) + "'");
  return v;
}

std::int64_t y4m_frame_bytes(const Y4mHeader& h) {
  const std::int64_t luma = h.width * h.height;
  switch (h.colorspace) {
    case Y4mColorspace::kMono: return luma;
    case Y4mColorspace::k444: return 3 * luma;
    case Y4mColorspace::k420: {
      const std::int64_t cw = (h.width + 1) / 2;
      const std::int64_t ch = (h.height + 1) / 2;
      return luma + 2 * cw * ch;
    }
  }
  return 0;
}

}  // namespace

Y4mHeader parse_y4m_header(std::string_view line) {
  constexpr std::string_view kMagic = "YUV4MPEG2";
  if (line.substr(0, kMagic.size()) != kMagic)
    throw FormatError("y4m: missing YUV4MPEG2 signature");
  Y4mHeader header;
  bool has_w = false, has_h = false;
  std::size_t pos = kMagic.size();
  while (pos < line.size()) {
    while (pos < line.size() && line[pos] == ' ') ++pos;
    if (pos >= line.size()) break;
    const std::size_t end = std::min(line.find(' ', pos), line.size());
    const std::string_view token = line.substr(pos, end - pos);
    pos = end;
    const char tag = token[0];
    const std::string_view value = token.substr(1);
    switch (tag) {
      case 'W':
        header.width = parse_int(value, "width");
        has_w = true;
        break;
      case 'H':
        header.height = parse_int(value, "height");
        has_h = true;
        break;
      case 'F': {
        const auto colon = value.find(':');
        if (colon == std::string_view::npos) throw FormatError("y4m: bad frame rate");
        header.fps = {parse_int(value.substr(0, colon), "frame rate"),
                      parse_int(value.substr(colon + 1), "frame rate")};
        break;
      }
      case 'C':
        if (value == "420" || value == "420jpeg" || value == "420paldv" ||
            value == "420mpeg2") {
          header.colorspace = Y4mColorspace::k420;
        } else if (value == "444") {
          header.colorspace = Y4mColorspace::k444;
        } else if (value == "mono") {
          header.colorspace = Y4mColorspace::kMono;
        } else {
          throw UnsupportedError("y4m: unsupported colorspace C" + std::string(value));
        }
        break;
      default:
        break;  // I, A, X carry nothing we use
    }
  }
  if (!has_w || !has_h) throw FormatError("y4m: header lacks W or H");
  if (header.width <= 0 || header.height <= 0)
    throw FormatError("y4m: non-positive frame size");
  return header;
}

VideoVolume parse_y4m(std::span<const std::uint8_t> bytes) {
  auto line_end = [&](std::size_t from) {
    for (std::size_t i = from; i < bytes.size(); ++i)
      if (bytes[i] == '\n') return i;
    throw FormatError("y4m: unterminated header line");
  };
  const std::size_t header_end = line_end(0);
  const std::string_view header_line(reinterpret_cast<const char*>(bytes.data()),
                                     header_end);
  const Y4mHeader header = parse_y4m_header(header_line);

  const std::int64_t frame_bytes = y4m_frame_bytes(header);
  const std::int64_t W = header.width, H = header.height;
  const std::int64_t channels = header.colorspace == Y4mColorspace::kMono ? 1 : 3;

  std::vector<std::uint8_t> data;
  std::int64_t frames = 0;
  std::size_t pos = header_end + 1;
  constexpr std::string_view kFrame = "FRAME";
  while (pos < bytes.size()) {
    const std::string_view rest(reinterpret_cast<const char*>(bytes.data()) + pos,
                                std::min(kFrame.size(), bytes.size() - pos));
    if (rest != kFrame) throw FormatError("y4m: expected FRAME marker");
    pos = line_end(pos) + 1;
    if (static_cast<std::int64_t>(bytes.size() - pos) < frame_bytes)
      throw FormatError("y4m: truncated frame payload");
    const std::uint8_t* y_plane = bytes.data() + pos;
    const std::size_t base = data.size();
    data.resize(base + static_cast<std::size_t>(H * W * channels));
    std::uint8_t* out = data.data() + base;
    if (channels == 1) {
      std::copy(y_plane, y_plane + H * W, out);
    } else if (header.colorspace == Y4mColorspace::k444) {
      const std::uint8_t* u_plane = y_plane + H * W;
      const std::uint8_t* v_plane = u_plane + H * W;
      for (std::int64_t i = 0; i < H * W; ++i) {
        out[3 * i] = y_plane[i];
        out[3 * i + 1] = u_plane[i];
        out[3 * i + 2] = v_plane[i];
      }
    } else {
      const std::int64_t cw = (W + 1) / 2;
      const std::uint8_t* u_plane = y_plane + H * W;
      const std::uint8_t* v_plane = u_plane + cw * ((H + 1) / 2);
      for (std::int64_t y = 0; y < H; ++y) {
        for (std::int64_t x = 0; x < W; ++x) {
          const std::int64_t i = y * W + x;
          const std::int64_t ci = (y / 2) * cw + x / 2;
          out[3 * i] = y_plane[i];
          out[3 * i + 1] = u_plane[ci];
          out[3 * i + 2] = v_plane[ci];
        }
      }
    }
    pos += static_cast<std::size_t>(frame_bytes);
    ++frames;
  }
  if (frames == 0) throw FormatError("y4m: no frames");
  return VideoVolume(frames, H, W, channels, std::move(data), header.fps);
}

VideoVolume load_y4m(const std::filesystem::path& path) {
  return parse_y4m(read_file_bytes(path));
}

RawMeta read_raw_meta(const std::filesystem::path& sidecar) {
  json j;
  try {
    j = json::parse(read_file_text(sidecar));
    RawMeta meta;
    meta.t = j.at("t").get<std::int64_t>();
    meta.h = j.at("h").get<std::int64_t>();
    meta.w = j.at("w").get<std::int64_t>();
    meta.c = j.at("c").get<std::int64_t>();
    meta.dtype = j.value("dtype", std::string("u8"));
    meta.endianness = j.value("endianness", std::string("le"));
    return meta;
  } catch (const json::exception& e) {
    throw FormatError("raw sidecar " + sidecar.string() + ": " + e.what());
  }
}

void write_raw_meta(const RawMeta& meta, const std::filesystem::path& sidecar) {
  const json j = {{"t", meta.t},          {"h", meta.h},
                  {"w", meta.w},          {"c", meta.c},
                  {"dtype", meta.dtype},  {"endianness", meta.endianness}};
  write_file_atomic(sidecar, j.dump());
}

VideoVolume load_raw(const std::filesystem::path& path, const RawMeta& meta) {
  if (meta.dtype != "u8")
    throw UnsupportedError("raw: unsupported sample width '" + meta.dtype + "'");
  if (meta.endianness != "le")
    throw UnsupportedError("raw: unsupported endianness '" + meta.endianness + "'");
  if (meta.c != 1 && meta.c != 3)
    throw UnsupportedError("raw: unsupported channel count " + std::to_string(meta.c));
  if (meta.t <= 0 || meta.h <= 0 || meta.w <= 0)
    throw FormatError("raw: non-positive dimensions in sidecar");
  auto bytes = read_file_bytes(path);
  const auto expected = static_cast<std::size_t>(meta.t * meta.h * meta.w * meta.c);
  if (bytes.size() != expected)
    throw FormatError("raw: file holds " + std::to_string(bytes.size()) +
                      " bytes, sidecar declares " + std::to_string(expected));
  return VideoVolume(meta.t, meta.h, meta.w, meta.c, std::move(bytes));
}

VideoVolume load_raw(const std::filesystem::path& path) {
  return load_raw(path, read_raw_meta(with_suffix(path, ".json")));
}

void write_raw(const VideoVolume& video, const std::filesystem::path& path) {
  write_file_atomic(path, video.data());
  write_raw_meta({video.frames(), video.height(), video.width(), video.channels()},
                 with_suffix(path, ".json"));
}

VideoVolume load_video(const std::filesystem::path& path) {
  auto ext = path.extension().string();
  for (auto& ch : ext) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  if (ext == ".y4m") return load_y4m(path);
  return load_raw(path);
}

SynthPattern parse_synth_pattern(std::string_view name) {
  if (name == "checker") return SynthPattern::kChecker;
  if (name == "gradient") return SynthPattern::kGradient;
  if (name == "noise") return SynthPattern::kNoise;
  throw std::invalid_argument("unknown synth pattern '" + std::string(name) + "'");
}

VideoVolume synth_video(SynthPattern pattern, std::int64_t t, std::int64_t h,
                        std::int64_t w, std::int64_t c, std::uint64_t seed) {
  if (t <= 0 || h <= 0 || w <= 0 || c <= 0)
    throw ShapeError("synth_video: zero dimension");
  std::vector<std::uint8_t> data(static_cast<std::size_t>(t * h * w * c));
  switch (pattern) {
    case SynthPattern::kGradient: {
      std::size_t o = 0;
      for (std::int64_t i = 0; i < t * h * w; ++i)
        for (std::int64_t ch = 0; ch < c; ++ch)
          data[o++] = static_cast<std::uint8_t>((static_cast<std::uint64_t>(i) >> (8 * ch)) & 0xFF);
      break;
    }
    case SynthPattern::kChecker: {
      std::size_t o = 0;
      for (std::int64_t ti = 0; ti < t; ++ti)
        for (std::int64_t y = 0; y < h; ++y)
          for (std::int64_t x = 0; x < w; ++x)
            for (std::int64_t ch = 0; ch < c; ++ch)
              data[o++] = ((ti + y + x) & 1) ? 255 : 0;
      break;
    }
    case SynthPattern::kNoise: {
      CounterRng rng(seed);
      std::size_t i = 0;
      while (i < data.size()) {
        std::uint64_t word = rng.next();
        for (int b = 0; b < 8 && i < data.size(); ++b, word >>= 8)
          data[i++] = static_cast<std::uint8_t>(word & 0xFF);
      }
      break;
    }
  }
  return VideoVolume(t, h, w, c, std::move(data), {30, 1});
}

VideoVolume upscale_nearest(const VideoVolume& video, std::int64_t factor) {
  if (factor < 1) throw std::invalid_argument("upscale factor must be >= 1");
  if (factor == 1) return video;
  const std::int64_t T = video.frames(), H = video.height() * factor,
                     W = video.width() * factor, C = video.channels();
  std::vector<std::uint8_t> data(static_cast<std::size_t>(T * H * W * C));
  std::size_t o = 0;
  for (std::int64_t t = 0; t < T; ++t)
    for (std::int64_t y = 0; y < H; ++y)
      for (std::int64_t x = 0; x < W; ++x)
        for (std::int64_t ch = 0; ch < C; ++ch)
          data[o++] = video.at(t, y / factor, x / factor, ch);
  return VideoVolume(T, H, W, C, std::move(data), video.fps());
}

}  // namespace fragvqa
