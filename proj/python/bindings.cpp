#include <cstring>
#include <optional>
#include <string>
#include <vector>

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "fragvqa/error.hpp"
#include "fragvqa/objectives.hpp"
#include "fragvqa/sampler.hpp"
#include "fragvqa/video.hpp"

namespace py = pybind11;
using namespace fragvqa;

namespace {

using U8Array = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;
using F64Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

SamplingConfig make_config(const std::string& preset, std::optional<std::int64_t> gt,
                           std::optional<std::int64_t> gf, std::optional<std::int64_t> tf,
                           std::optional<std::int64_t> sf, std::uint64_t seed,
                           const std::optional<std::string>& align,
                           const std::optional<std::string>& offset_policy,
                           const std::optional<std::string>& temporal_mode, bool allow_upscale) {
  auto c = preset_config(preset);
  if (gt) c.temporal_segments = *gt;
  if (gf) c.spatial_grids = *gf;
  if (tf) c.frames_per_cube = *tf;
  if (sf) c.patch_side = *sf;
  if (align) c.alignment = parse_alignment(*align);
  if (offset_policy) c.offset_policy = parse_offset_policy(*offset_policy);
  if (temporal_mode) c.temporal_mode = parse_temporal_mode(*temporal_mode);
  c.seed = seed;
  c.allow_upscale = allow_upscale;
  c.validate();
  return c;
}

VideoVolume to_volume(const U8Array& video) {
  if (video.ndim() != 3 && video.ndim() != 4)
    throw std::invalid_argument("video must be a (T, H, W) or (T, H, W, C) uint8 array");
  const auto c = video.ndim() == 4 ? video.shape(3) : 1;
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(video.size()));
  std::memcpy(bytes.data(), video.data(), bytes.size());
  return VideoVolume(video.shape(0), video.shape(1), video.shape(2), c, std::move(bytes));
}

std::span<const double> as_span(const F64Array& a) {
  if (a.ndim() != 1) throw std::invalid_argument("expected a 1-D array");
  return {a.data(), static_cast<std::size_t>(a.size())};
}

}  // namespace

PYBIND11_MODULE(_fragvqa, m) {
  m.doc() = "Grid mini-cube fragment sampling and VQA metrics";

  // translators run newest first, so the base goes in first
  py::register_exception<Error>(m, "FragVqaError", PyExc_RuntimeError);
  py::register_exception<GeometryError>(m, "GeometryError", PyExc_ValueError);
  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
  py::register_exception<DegenerateInputError>(m, "DegenerateInputError", PyExc_ValueError);

  m.def(
      "sample_fragment",
      [](const U8Array& video, const std::string& preset, std::optional<std::int64_t> gt,
         std::optional<std::int64_t> gf, std::optional<std::int64_t> tf,
         std::optional<std::int64_t> sf, std::uint64_t seed, std::optional<std::string> align,
         std::optional<std::string> offset_policy, std::optional<std::string> temporal_mode,
         bool allow_upscale) {
        const auto config = make_config(preset, gt, gf, tf, sf, seed, align, offset_policy,
                                        temporal_mode, allow_upscale);
        auto volume = to_volume(video);
        Fragment f;
        {
          py::gil_scoped_release release;
          f = sample_fragment(volume, config);
        }
        U8Array out({f.shape.t, f.shape.h, f.shape.w, f.shape.c});
        std::memcpy(out.mutable_data(), f.data.data(), f.data.size());
        return out;
      },
      py::arg("video"), py::arg("preset") = "fastervqa", py::kw_only(), py::arg("gt") = py::none(),
      py::arg("gf") = py::none(), py::arg("tf") = py::none(), py::arg("sf") = py::none(),
      py::arg("seed") = 0, py::arg("align") = py::none(), py::arg("offset_policy") = py::none(),
      py::arg("temporal_mode") = py::none(), py::arg("allow_upscale") = false,
      "Sample a (G_t*T_f, G_f*S_f, G_f*S_f, C) fragment from a (T, H, W[, C]) uint8 video.");

  m.def(
      "sampled_fraction",
      [](std::int64_t height, std::int64_t width, std::optional<std::int64_t> frames,
         const std::string& preset) {
        const auto c = preset_config(preset);
        return frames ? sampled_fraction({*frames, height, width}, c)
                      : spatial_sampled_fraction(height, width, c);
      },
      py::arg("height"), py::arg("width"), py::arg("frames") = py::none(),
      py::arg("preset") = "fastervqa");

  m.def("plcc", [](const F64Array& x, const F64Array& y) { return plcc(as_span(x), as_span(y)); },
        py::arg("x"), py::arg("y"));
  m.def("srcc", [](const F64Array& x, const F64Array& y) { return srcc(as_span(x), as_span(y)); },
        py::arg("x"), py::arg("y"));
  m.def("krcc", [](const F64Array& x, const F64Array& y) { return krcc(as_span(x), as_span(y)); },
        py::arg("x"), py::arg("y"));
  m.def(
      "loss_fusion",
      [](const F64Array& pred, const F64Array& gt, double mono_weight) {
        return loss_fusion(as_span(pred), as_span(gt), mono_weight);
      },
      py::arg("pred"), py::arg("gt"), py::arg("mono_weight") = kDefaultMonoWeight);
}
