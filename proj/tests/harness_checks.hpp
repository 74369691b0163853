// SPDX-FileCopyrightText: 2026 The PointForge Authors
// SPDX-License-Identifier: Apache-2.0

// Training-loop checks shared by the unit tests and the acceptance run.

#pragma once

#include <algorithm>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "pointforge/harness.hpp"
#include "test_util.hpp"

namespace pf::testing {

inline TrainConfig small_train_config(Task task, std::uint64_t seed) {
  TrainConfig c;
  c.task = task;
  c.preset = "tiny";
  c.epochs = 2;
  c.lr = 0.01;
  c.optimizer = OptimizerKind::Sgd;
  c.voxel_size = 0.05f;
  c.sample_size = 96;
  c.radius = 0.2f;
  c.batch_size = 4;
  c.augment.loop_factor = 5;
  c.seed = seed;
  return c;
}

inline std::vector<PointCloud> labeled_clouds(std::size_t count, std::uint64_t seed, std::size_t n = 160) {
  Rng rng(seed);
  std::vector<PointCloud> out;
  for (std::size_t i = 0; i < count; ++i) out.push_back(compute_heights(random_cloud(n + 4 * i, rng)));
  return out;
}

struct EndpointOutcome {
  bool identical = true;
  int steps = 0;
  std::string detail;
};

/// Runs `steps` training steps of a multitask model with the given beta next
/// to a single-task model fed the same batches, and compares every shared
/// parameter and the matching loss bit for bit.
inline EndpointOutcome compare_endpoint(double beta, Task single, int steps, std::uint64_t seed) {
  const auto train = labeled_clouds(8, seed);
  TrainConfig mc = small_train_config(Task::Multitask, seed);
  mc.beta = beta;
  TrainConfig sc = small_train_config(single, seed);
  Trainer multi(mc, train), solo(sc, train);
  EndpointOutcome out;
  std::ostringstream why;
  int epoch = 0;
  while (out.steps < steps) {
    for (const auto& items : multi.epoch_batches(epoch)) {
      if (out.steps >= steps) break;
      std::vector<PointCloud> clouds;
      for (const auto& it : items) clouds.push_back(multi.prepare(epoch, it));
      const auto rm = multi.step(clouds);
      const auto rs = solo.step(clouds);
      ++out.steps;
      const double want = single == Task::Segmentation ? rm.seg_loss : rm.cls_loss;
      if (want != rs.loss) {
        out.identical = false;
        why << "step " << out.steps << " loss " << want << " vs " << rs.loss << "; ";
      }
      for (const auto& p : solo.model().params().state()) {
        const auto& other = multi.model().params().state();
        const auto it = std::find_if(other.begin(), other.end(), [&](const auto& q) { return q.first == p.first; });
        if (it == other.end() || it->second.values() != p.second.values()) {
          out.identical = false;
          why << "step " << out.steps << " tensor " << p.first << " differs; ";
          break;
        }
      }
    }
    ++epoch;
    multi.set_epoch(epoch);
    solo.set_epoch(epoch);
  }
  out.detail = why.str();
  return out;
}

struct CoverageOutcome {
  bool ok = true;
  std::string detail;
};

/// Sub-cloud enumeration and evaluate-time aggregation against the
/// logit-collection oracle for one random cloud.
inline CoverageOutcome check_coverage(PointNeXt<float>& model, const PointCloud& cloud, float voxel) {
  CoverageOutcome out;
  std::ostringstream why;
  const auto grid = build_voxel_grid(cloud, voxel);
  const auto subs = enumerate_test_subclouds(grid);
  if (subs.size() != grid.max_occupancy) {
    out.ok = false;
    why << subs.size() << " sub-clouds for occupancy " << grid.max_occupancy << "; ";
  }
  std::vector<bool> seen(cloud.size(), false);
  for (const auto& s : subs) {
    for (auto i : s) seen[i] = true;
  }
  if (std::find(seen.begin(), seen.end(), false) != seen.end()) {
    out.ok = false;
    why << "uncovered point; ";
  }
  std::vector<std::vector<float>> logits;
  {
    nn::NoGradGuard guard;
    for (const auto& rows : subs) {
      const PointCloud sub = compute_heights(cloud.subset(rows));
      const auto o = model.forward(make_batch(std::span<const PointCloud>(&sub, 1)), ForwardOptions{});
      logits.emplace_back(o.seg_logits.data().begin(), o.seg_logits.data().end());
    }
  }
  const std::size_t classes = model.config().num_parts;
  const auto want = oracle::collect_and_average(cloud.size(), classes, subs, logits);
  const auto pred = predict_clouds(model, std::span<const PointCloud>(&cloud, 1), voxel).front();
  if (pred.seg_logits != want) {
    out.ok = false;
    why << "aggregated logits differ; ";
  }
  for (std::size_t p = 0; p < cloud.size(); ++p) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < classes; ++c) {
      if (want[p * classes + c] > want[p * classes + best]) best = c;
    }
    if (pred.part_labels[p] != static_cast<int>(best) + 1) {
      out.ok = false;
      why << "label of point " << p << " differs; ";
      break;
    }
  }
  out.detail = why.str();
  return out;
}

}  // namespace pf::testing
