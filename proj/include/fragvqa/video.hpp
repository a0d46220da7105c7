#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace fragvqa {

struct Rational {
  std::int64_t num = 0;
  std::int64_t den = 1;

  double value() const { return den == 0 ? 0.0 : static_cast<double>(num) / den; }
  friend bool operator==(const Rational&, const Rational&) = default;
};

struct VideoDims {
  std::int64_t t = 0;
  std::int64_t h = 0;
  std::int64_t w = 0;

  friend bool operator==(const VideoDims&, const VideoDims&) = default;
};

/// Decoded video held as 8-bit samples in (T, H, W, C) order: frame-major,
/// then row-major, channels interleaved per pixel. Immutable once built.
class VideoVolume {
 public:
  VideoVolume() = default;
  /// Throws ShapeError if data.size() != t*h*w*c or any dimension is zero.
  VideoVolume(std::int64_t frames, std::int64_t height, std::int64_t width,
              std::int64_t channels, std::vector<std::uint8_t> data,
              Rational fps = {0, 1});

  std::int64_t frames() const noexcept { return frames_; }
  std::int64_t height() const noexcept { return height_; }
  std::int64_t width() const noexcept { return width_; }
  std::int64_t channels() const noexcept { return channels_; }
  VideoDims dims() const noexcept { return {frames_, height_, width_}; }
  Rational fps() const noexcept { return fps_; }

  std::span<const std::uint8_t> data() const noexcept { return data_; }

  std::size_t index(std::int64_t t, std::int64_t y, std::int64_t x,
                    std::int64_t c = 0) const noexcept {
    return static_cast<std::size_t>(((t * height_ + y) * width_ + x) * channels_ + c);
  }

  std::uint8_t at(std::int64_t t, std::int64_t y, std::int64_t x,
                  std::int64_t c = 0) const noexcept {
    return data_[index(t, y, x, c)];
  }

  friend bool operator==(const VideoVolume&, const VideoVolume&) = default;

 private:
  std::int64_t frames_ = 0;
  std::int64_t height_ = 0;
  std::int64_t width_ = 0;
  std::int64_t channels_ = 0;
  Rational fps_{0, 1};
  std::vector<std::uint8_t> data_;
};

enum class Y4mColorspace { k420, k444, kMono };

struct Y4mHeader {
  std::int64_t width = 0;
  std::int64_t height = 0;
  Rational fps{0, 1};
  Y4mColorspace colorspace = Y4mColorspace::k420;
};

/// Parses the first line of a YUV4MPEG2 stream (without the trailing
/// newline). Unknown tags are ignored; 8-bit 4:2:0, 4:4:4 and mono only.
Y4mHeader parse_y4m_header(std::string_view line);

/// Reads an uncompressed Y4M file. Mono gives C=1; 4:2:0 and 4:4:4 give
/// C=3 (Y, Cb, Cr) with 4:2:0 chroma duplicated nearest-neighbour. The luma
/// plane is copied byte for byte.
VideoVolume load_y4m(const std::filesystem::path& path);
VideoVolume parse_y4m(std::span<const std::uint8_t> bytes);

/// Sidecar descriptor for raw blobs.
struct RawMeta {
  std::int64_t t = 0;
  std::int64_t h = 0;
  std::int64_t w = 0;
  std::int64_t c = 0;
  std::string dtype = "u8";
  std::string endianness = "le";
};

RawMeta read_raw_meta(const std::filesystem::path& sidecar);
void write_raw_meta(const RawMeta& meta, const std::filesystem::path& sidecar);

VideoVolume load_raw(const std::filesystem::path& path, const RawMeta& meta);
/// Loads `path` using the sidecar at `path` + ".json".
VideoVolume load_raw(const std::filesystem::path& path);
/// Writes the sample bytes to `path` and the sidecar to `path` + ".json".
void write_raw(const VideoVolume& video, const std::filesystem::path& path);

/// Dispatches on extension: ".y4m" goes to load_y4m, anything else is
/// treated as a raw blob with a JSON sidecar.
VideoVolume load_video(const std::filesystem::path& path);

enum class SynthPattern { kChecker, kGradient, kNoise };

SynthPattern parse_synth_pattern(std::string_view name);

/// Deterministic fixture videos.
///
/// gradient: channel c of pixel (t, y, x) holds byte c of the linear index
///   t*H*W + y*W + x, so with C=1 the value is the index mod 256 and with C=3
///   any pixel of a video under 2^24 pixels decodes back to (t, y, x).
/// checker: 255 where (t + y + x) is odd, 0 elsewhere.
/// noise: i.i.d. bytes from CounterRng(seed).
VideoVolume synth_video(SynthPattern pattern, std::int64_t t, std::int64_t h,
                        std::int64_t w, std::int64_t c, std::uint64_t seed);

/// Nearest-neighbour integer upscale in both spatial axes.
VideoVolume upscale_nearest(const VideoVolume& video, std::int64_t factor);

}  // namespace fragvqa
