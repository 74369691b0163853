// SPDX-FileCopyrightText: 2026 The PointForge Authors
// SPDX-License-Identifier: Apache-2.0

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "pointforge/geometry.hpp"
#include "pointforge/harness.hpp"
#include "pointforge/metrics.hpp"
#include "pointforge/run_config.hpp"
#include "pointforge/synthetic.hpp"

namespace py = pybind11;
using namespace pf;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;
using IntArray = py::array_t<int, py::array::c_style | py::array::forcecast>;

std::vector<Vec3> to_points(const FloatArray& a) {
  if (a.ndim() != 2 || a.shape(1) != 3) throw py::value_error("expected an (n, 3) array");
  std::vector<Vec3> out(static_cast<std::size_t>(a.shape(0)));
  const float* p = a.data();
  for (auto& v : out) {
    v = {p[0], p[1], p[2]};
    p += 3;
  }
  return out;
}

py::array_t<float> from_points(const std::vector<Vec3>& pts) {
  py::array_t<float> out({static_cast<py::ssize_t>(pts.size()), py::ssize_t{3}});
  auto m = out.mutable_unchecked<2>();
  for (std::size_t i = 0; i < pts.size(); ++i) {
    for (int k = 0; k < 3; ++k) m(static_cast<py::ssize_t>(i), k) = pts[i][static_cast<std::size_t>(k)];
  }
  return out;
}

template <class T>
py::array_t<T> vector_array(const std::vector<T>& v) {
  py::array_t<T> out(std::vector<py::ssize_t>{static_cast<py::ssize_t>(v.size())});
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

template <class T>
py::array_t<T> matrix(const std::vector<T>& v, std::size_t rows, std::size_t cols) {
  py::array_t<T> out({static_cast<py::ssize_t>(rows), static_cast<py::ssize_t>(cols)});
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

std::vector<std::vector<int>> to_label_lists(const std::vector<IntArray>& arrays) {
  std::vector<std::vector<int>> out;
  for (const auto& a : arrays) out.emplace_back(a.data(), a.data() + a.size());
  return out;
}

py::dict cloud_dict(const PointCloud& c) {
  py::dict d;
  d["name"] = c.name;
  d["coords"] = from_points(c.coords);
  if (c.normals) d["normals"] = from_points(*c.normals);
  if (c.colors) d["colors"] = from_points(*c.colors);
  if (c.heights) d["heights"] = vector_array(*c.heights);
  if (c.seg_labels) {
    d["seg_labels"] = vector_array(*c.seg_labels);
  }
  if (c.type_label) d["type_label"] = *c.type_label;
  return d;
}

}  // namespace

PYBIND11_MODULE(_pointforge, m) {
  m.doc() = "Point-cloud building segmentation toolkit";

  // Later registrations are tried first, so the base class goes first.
  py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);
  py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);

  m.def(
      "farthest_point_sampling",
      [](const FloatArray& coords, std::size_t stride) {
        return vector_array(farthest_point_sampling(to_points(coords), stride));
      },
      py::arg("coords"), py::arg("stride"), "Deterministic-start FPS; returns n // stride indices.");

  m.def(
      "ball_query",
      [](const FloatArray& coords, const FloatArray& queries, float radius, std::size_t k) {
        const auto r = ball_query_points(to_points(coords), to_points(queries), radius, k);
        return matrix(r.neighbor_indices, r.neighbor_indices.size() / k, k);
      },
      py::arg("coords"), py::arg("queries"), py::arg("radius"), py::arg("k"));

  m.def(
      "knn",
      [](const FloatArray& coords, const FloatArray& queries, std::size_t k) {
        const auto q = to_points(queries);
        const auto r = knn(to_points(coords), q, k);
        return py::make_tuple(matrix(r.indices, q.size(), k), matrix(r.distances, q.size(), k));
      },
      py::arg("coords"), py::arg("queries"), py::arg("k"), "Indices and distances of the k nearest points.");

  m.def(
      "voxel_cells",
      [](const FloatArray& coords, float voxel_size) {
        const auto g = build_voxel_grid(to_points(coords), voxel_size);
        std::vector<std::vector<std::size_t>> cells;
        for (const auto& c : g.cells) cells.push_back(c.members);
        return cells;
      },
      py::arg("coords"), py::arg("voxel_size"), "Member indices of every occupied voxel.");

  m.def(
      "test_subclouds",
      [](const FloatArray& coords, float voxel_size) {
        return enumerate_test_subclouds(build_voxel_grid(to_points(coords), voxel_size));
      },
      py::arg("coords"), py::arg("voxel_size"));

  m.def(
      "part_iou",
      [](const std::vector<IntArray>& pred, const std::vector<IntArray>& truth, int num_classes, bool per_building) {
        const auto r = part_iou(to_label_lists(pred), to_label_lists(truth), num_classes, 0,
                                per_building ? IouMode::PerBuildingAverage : IouMode::Pooled);
        return py::make_tuple(r.part_iou, r.per_class_iou);
      },
      py::arg("pred"), py::arg("truth"), py::arg("num_classes") = kNumPartLabels, py::arg("per_building") = false,
      "PartIoU and per-class IoU; label 0 is ignored.");
  m.def(
      "shape_iou",
      [](const std::vector<IntArray>& pred, const std::vector<IntArray>& truth, int num_classes) {
        return shape_iou(to_label_lists(pred), to_label_lists(truth), num_classes, 0);
      },
      py::arg("pred"), py::arg("truth"), py::arg("num_classes") = kNumPartLabels);
  m.def(
      "overall_accuracy",
      [](const IntArray& pred, const IntArray& truth) {
        return overall_accuracy(std::span<const int>(pred.data(), static_cast<std::size_t>(pred.size())),
                                std::span<const int>(truth.data(), static_cast<std::size_t>(truth.size())));
      },
      py::arg("pred"), py::arg("truth"));
  m.def("harmonic_mean", &harmonic_mean, py::arg("accuracy"), py::arg("part_iou"));

  m.def(
      "load_point_cloud", [](const std::filesystem::path& path) { return cloud_dict(compute_heights(load_point_cloud(path))); },
      py::arg("path"), "Reads a .pcloud file into a dict of numpy arrays (heights derived, up axis Y).");

  m.def(
      "load_dataset",
      [](const std::filesystem::path& root) {
        const Dataset d = load_dataset(root);
        py::dict out;
        const std::pair<const char*, const std::vector<PointCloud>*> splits[] = {
            {"train", &d.train}, {"val", &d.val}, {"test", &d.test}};
        for (const auto& [name, clouds] : splits) {
          py::list l;
          for (const auto& c : *clouds) l.append(cloud_dict(c));
          out[name] = l;
        }
        return out;
      },
      py::arg("root"));

  m.def(
      "generate_dataset",
      [](const std::filesystem::path& root, std::size_t train, std::size_t val, std::size_t test,
         std::uint64_t seed, std::size_t points) {
        GeneratorSpec spec = GeneratorSpec::default_spec();
        spec.seed = seed;
        spec.points_per_building = points;
        generate_dataset(spec, SplitCounts{train, val, test}, root);
        generate_embeddings(spec, EmbeddingSpec{}, root);
      },
      py::arg("root"), py::arg("train") = 8, py::arg("val") = 2, py::arg("test") = 2, py::arg("seed") = 0,
      py::arg("points") = 4096, "Synthetic buildings plus embedding files.");

  m.def(
      "config_keys",
      [] {
        py::dict d;
        for (const auto& k : config_keys()) d[py::str(k.name)] = k.default_value;
        return d;
      },
      "Every run-config key with its default value.");

  m.def(
      "train",
      [](const std::map<std::string, std::string>& settings) {
        RunConfig rc;
        for (const auto& [k, v] : settings) rc.set(k, v);
        const TrainConfig config = rc.train_config();
        const Dataset data = load_dataset(rc.get("data"), config.augment.up_axis);
        TrainResult r;
        {
          py::gil_scoped_release release;
          if (config.task == Task::UlipPretrain) {
            const std::filesystem::path emb = rc.is_set("embeddings") ? rc.get("embeddings") : rc.get("data");
            r = pretrain(config, data, emb, rc.get("out"));
          } else {
            r = train(config, data, rc.get("out"));
          }
        }
        py::list history;
        for (const auto& row : r.history) {
          py::dict h;
          h["epoch"] = row.epoch;
          h["lr"] = row.lr;
          h["train_loss"] = row.train_loss;
          h["val_acc"] = row.val_acc;
          h["val_piou"] = row.val_piou;
          h["harmonic"] = row.harmonic;
          history.append(h);
        }
        py::dict out;
        out["history"] = history;
        out["best_checkpoint"] = r.best_checkpoint;
        out["best_index"] = r.best_index;
        return out;
      },
      py::arg("settings"), "Runs training with run-config keys (same names as config files).");

  m.def(
      "predict",
      [](const std::filesystem::path& checkpoint, const std::filesystem::path& cloud_path) {
        const auto meta = read_metadata(checkpoint);
        RunConfig rc;
        for (const auto& [k, v] : meta.config) {
          if (k != "embedding_dim") rc.set(k, v);
        }
        const TrainConfig config = rc.train_config();
        auto model = load_trained_model(checkpoint);
        const PointCloud cloud = compute_heights(load_point_cloud(cloud_path), config.augment.up_axis);
        CloudPrediction p;
        {
          py::gil_scoped_release release;
          p = predict_clouds(*model, std::span<const PointCloud>(&cloud, 1), config.voxel_size,
                             config.augment.up_axis)
                  .front();
        }
        py::dict out;
        if (!p.part_labels.empty()) {
          out["part_labels"] = vector_array(p.part_labels);
        }
        if (p.type_label >= 0) out["type_label"] = p.type_label;
        return out;
      },
      py::arg("checkpoint"), py::arg("cloud"), "Per-point part labels (and type label) for one .pcloud file.");
}
