#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <cstring>
#include <sstream>

#include "almrr/config.hpp"
#include "almrr/corpus.hpp"
#include "almrr/dataset.hpp"
#include "almrr/error.hpp"
#include "almrr/metrics.hpp"
#include "almrr/pipeline.hpp"
#include "almrr/synth.hpp"

namespace py = pybind11;
using namespace almrr;

namespace {

using F64Array = py::array_t<double, py::array::c_style | py::array::forcecast>;
using U8Array = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;

// Images cross the boundary as (C, H, W) float64 arrays, or (H, W) for one channel.
Image to_image(const F64Array& a) {
  if (a.ndim() == 2) {
    Image img(1, a.shape(0), a.shape(1));
    std::memcpy(img.data.data(), a.data(), img.data.size() * sizeof(double));
    return img;
  }
  if (a.ndim() != 3) throw ShapeError("image array must have shape (C, H, W) or (H, W)");
  Image img(a.shape(0), a.shape(1), a.shape(2));
  std::memcpy(img.data.data(), a.data(), img.data.size() * sizeof(double));
  return img;
}

F64Array from_image(const Image& img) {
  F64Array out({img.channels, img.height, img.width});
  std::memcpy(out.mutable_data(), img.data.data(), img.data.size() * sizeof(double));
  return out;
}

Mask to_mask(const U8Array& a) {
  if (a.ndim() != 2) throw ShapeError("mask array must have shape (H, W)");
  Mask m(a.shape(0), a.shape(1));
  std::memcpy(m.data.data(), a.data(), m.data.size());
  return m;
}

U8Array from_mask(const Mask& m) {
  U8Array out({m.height, m.width});
  std::memcpy(out.mutable_data(), m.data.data(), m.data.size());
  return out;
}

F64Array from_map(const AnomalyMap& m) {
  F64Array out({m.height, m.width});
  std::memcpy(out.mutable_data(), m.scores.data(), m.scores.size() * sizeof(double));
  return out;
}

ScoredSet to_set(const F64Array& scores, const U8Array& labels) {
  ScoredSet s;
  s.scores.assign(scores.data(), scores.data() + scores.size());
  s.labels.assign(labels.data(), labels.data() + labels.size());
  return s;
}

py::dict report_dict(const CategoryReport& r) {
  py::dict d;
  d["category"] = r.category;
  d["image_auroc"] = r.image_auroc;
  d["pixel_auroc"] = r.pixel_auroc;
  d["pixel_ap"] = r.pixel_ap;
  d["n_images"] = r.n_images;
  d["n_skipped"] = r.n_skipped;
  return d;
}

}  // namespace

PYBIND11_MODULE(_almrr, m) {
  m.doc() = "Anomaly localization by feature reconstruction and refinement";

  auto base = py::register_exception<Error>(m, "Error");
  py::register_exception<ShapeError>(m, "ShapeError", base.ptr());
  py::register_exception<ArgumentError>(m, "ArgumentError", base.ptr());
  py::register_exception<DataContractError>(m, "DataContractError", base.ptr());
  py::register_exception<NumericalError>(m, "NumericalError", base.ptr());
  py::register_exception<UndefinedMetricError>(m, "UndefinedMetricError", base.ptr());
  py::register_exception<FormatError>(m, "FormatError", base.ptr());

  py::class_<RunConfig>(m, "RunConfig")
      .def(py::init<>())
      .def_static("profile", &RunConfig::profile, py::arg("name"))
      .def("set", &RunConfig::set, py::arg("key"), py::arg("value"))
      .def("to_dict", &RunConfig::to_map)
      .def("to_json", &RunConfig::to_json)
      .def_static("from_json", &RunConfig::from_json)
      .def("validate", &RunConfig::validate)
      .def_readwrite("image_size", &RunConfig::image_size)
      .def_readwrite("grid_size", &RunConfig::grid_size)
      .def_readwrite("batch_size", &RunConfig::batch_size)
      .def_readwrite("epochs", &RunConfig::epochs)
      .def_readwrite("lr", &RunConfig::lr)
      .def_readwrite("seed", &RunConfig::seed)
      .def_readwrite("frm_enabled", &RunConfig::frm_enabled)
      .def_readwrite("strict_deterministic", &RunConfig::strict_deterministic)
      .def_readwrite("checkpoint_every", &RunConfig::checkpoint_every)
      .def("__repr__", [](const RunConfig& c) { return "RunConfig(" + c.to_json() + ")"; });

  m.def("load_config", &load_config_file, py::arg("path"), py::arg("base") = RunConfig{});

  py::class_<LossReport>(m, "LossReport")
      .def_readonly("l_rec", &LossReport::l_rec)
      .def_readonly("l_focal", &LossReport::l_focal)
      .def_readonly("l_dice", &LossReport::l_dice)
      .def_readonly("l_ref", &LossReport::l_ref)
      .def_readonly("l_total", &LossReport::l_total);

  py::class_<TrainResult>(m, "TrainResult")
      .def_readonly("checkpoint", &TrainResult::checkpoint)
      .def_readonly("log", &TrainResult::log)
      .def_readonly("steps", &TrainResult::steps)
      .def_readonly("seconds", &TrainResult::seconds);

  m.def(
      "train",
      [](const RunConfig& cfg, const std::vector<F64Array>& images, const std::filesystem::path& out_dir,
         std::int64_t max_steps) {
        std::vector<Image> imgs;
        for (const auto& a : images) imgs.push_back(to_image(a));
        py::gil_scoped_release release;
        return train(cfg, imgs, {out_dir, nullptr, max_steps});
      },
      py::arg("config"), py::arg("images"), py::arg("out_dir"), py::arg("max_steps") = -1);

  m.def(
      "train_category",
      [](const RunConfig& cfg, const std::filesystem::path& data, const std::string& category,
         const std::filesystem::path& out_dir, std::int64_t max_steps) {
        py::gil_scoped_release release;
        return train_category(cfg, ingest(data, Layout::mvtec, {category}), category, {out_dir, nullptr, max_steps});
      },
      py::arg("config"), py::arg("data"), py::arg("category"), py::arg("out_dir"), py::arg("max_steps") = -1);

  py::class_<Predictor>(m, "Predictor")
      .def_static("load", py::overload_cast<const std::filesystem::path&>(&Predictor::load), py::arg("checkpoint"))
      .def_property_readonly("config", &Predictor::config)
      .def(
          "score",
          [](const Predictor& p, const F64Array& image) {
            const auto img = to_image(image);
            AnomalyMap map;
            {
              py::gil_scoped_release release;
              map = p.score(img);
            }
            return from_map(map);
          },
          py::arg("image"))
      .def(
          "score_file",
          [](const Predictor& p, const std::filesystem::path& path) {
            return from_map(p.score(read_image(path), path.stem().string()));
          },
          py::arg("path"))
      .def(
          "evaluate",
          [](const Predictor& p, const std::filesystem::path& data, const std::string& category) {
            py::gil_scoped_release release;
            const auto r = evaluate_category(p, ingest(data, Layout::mvtec, {category}), category);
            py::gil_scoped_acquire acquire;
            return report_dict(r);
          },
          py::arg("data"), py::arg("category"));

  m.def(
      "evaluate",
      [](const std::filesystem::path& data, const std::filesystem::path& checkpoints) {
        py::list out;
        for (const auto& r : evaluate(ingest(data), checkpoints)) out.append(report_dict(r));
        return out;
      },
      py::arg("data"), py::arg("checkpoints"));

  m.def(
      "make_synth_corpus",
      [](const std::filesystem::path& out_dir, std::uint64_t seed, std::size_t image_size, int train_per_category,
         int test_good, int test_anomalous, std::vector<std::string> categories) {
        CorpusOptions opt;
        opt.image_size = image_size;
        opt.train_per_category = train_per_category;
        opt.test_good = test_good;
        opt.test_anomalous = test_anomalous;
        if (!categories.empty()) opt.categories = std::move(categories);
        return make_synth_corpus(out_dir, seed, opt).files_written;
      },
      py::arg("out_dir"), py::arg("seed"), py::arg("image_size") = CorpusOptions{}.image_size,
      py::arg("train_per_category") = CorpusOptions{}.train_per_category,
      py::arg("test_good") = CorpusOptions{}.test_good, py::arg("test_anomalous") = CorpusOptions{}.test_anomalous,
      py::arg("categories") = std::vector<std::string>{});

  m.def(
      "perlin",
      [](std::size_t h, std::size_t w, int res_y, int res_x, std::uint64_t seed) {
        const auto f = perlin(h, w, res_y, res_x, seed);
        F64Array out({h, w});
        std::memcpy(out.mutable_data(), f.values.data(), f.values.size() * sizeof(double));
        return out;
      },
      py::arg("height"), py::arg("width"), py::arg("res_y"), py::arg("res_x"), py::arg("seed"));

  m.def(
      "binarize",
      [](std::size_t h, std::size_t w, int res_y, int res_x, std::uint64_t seed, double threshold) {
        return from_mask(threshold_field(perlin(h, w, res_y, res_x, seed), threshold));
      },
      py::arg("height"), py::arg("width"), py::arg("res_y"), py::arg("res_x"), py::arg("seed"),
      py::arg("threshold") = 0.5);

  m.def(
      "synthesize",
      [](const F64Array& image, const F64Array& texture, const U8Array& mask, double alpha) {
        return from_image(synthesize(to_image(image), to_image(texture), to_mask(mask), alpha).image_a);
      },
      py::arg("image"), py::arg("texture"), py::arg("mask"), py::arg("alpha"));

  m.def(
      "read_image",
      [](const std::filesystem::path& path, bool rgb) { return from_image(read_image(path, rgb)); },
      py::arg("path"), py::arg("rgb") = true);

  m.def(
      "auroc", [](const F64Array& s, const U8Array& l) { return auroc(to_set(s, l)); }, py::arg("scores"),
      py::arg("labels"));
  m.def(
      "average_precision", [](const F64Array& s, const U8Array& l) { return average_precision(to_set(s, l)); },
      py::arg("scores"), py::arg("labels"));
}
