// SPDX-FileCopyrightText: 2026 The PointForge Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <fstream>
#include <set>

#include "harness_checks.hpp"
#include "oracles.hpp"
#include "pointforge/harness.hpp"
#include "test_util.hpp"

using namespace pf;
using pf::testing::labeled_clouds;
using pf::testing::small_train_config;
using pf::testing::TempDir;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

HistoryRow row(int epoch, std::optional<double> acc, std::optional<double> piou) {
  HistoryRow r;
  r.epoch = epoch;
  r.lr = 0.01;
  r.train_loss = 1.0 / epoch;
  r.val_acc = acc;
  r.val_piou = piou;
  if (acc && piou) r.harmonic = harmonic_mean(*acc, *piou);
  return r;
}

Dataset small_dataset(std::uint64_t seed) {
  Dataset d;
  d.train = labeled_clouds(6, seed);
  d.val = labeled_clouds(3, seed + 100);
  d.test = labeled_clouds(2, seed + 200);
  return d;
}

}  // namespace

TEST_CASE("task names and label mapping") {
  for (Task t : {Task::Classification, Task::Segmentation, Task::Multitask, Task::UlipPretrain}) {
    CHECK(parse_task(task_name(t)) == t);
  }
  CHECK(head_for_task(Task::UlipPretrain) == HeadKind::Encoder);
  CHECK_THROWS_AS(parse_task("detection"), ParseError);
  CHECK(seg_target(0) == -1);
  CHECK(seg_target(1) == 0);
  CHECK(seg_target(31) == 30);
}

TEST_CASE("segmentation class weights skip the unspecified label") {
  std::vector<PointCloud> clouds(1);
  clouds[0].coords.assign(6, Vec3{0, 0, 0});
  clouds[0].seg_labels = std::vector<int>{0, 0, 1, 1, 2, 2};
  const auto w = segmentation_class_weights(clouds);
  REQUIRE(w.size() == 31);
  CHECK(w[0] == doctest::Approx(1.0 / std::log(1.7)));
  CHECK(w[1] == doctest::Approx(1.0 / std::log(1.7)));
  CHECK(w[5] == doctest::Approx(1.0 / std::log(1.2)));
}

TEST_CASE("checkpoint selection") {
  const std::vector<HistoryRow> seg{row(1, {}, 50), row(2, {}, 60), row(3, {}, 55)};
  CHECK(select_best(seg, Task::Segmentation) == 1);
  const std::vector<HistoryRow> tie{row(1, 70, {}), row(2, 80, {}), row(3, 80, {})};
  CHECK(select_best(tie, Task::Classification) == 1);
  CHECK(select_best(tie, Task::UlipPretrain) == 1);

  // The harmonic mean prefers balanced rows over the best single metric.
  const std::vector<HistoryRow> multi{row(1, 90, 20), row(2, 60, 30), row(3, 40, 45), row(4, 95, 10)};
  std::size_t arg = 0;
  for (std::size_t i = 1; i < multi.size(); ++i) {
    if (2.0 / (1.0 / *multi[i].val_acc + 1.0 / *multi[i].val_piou) >
        2.0 / (1.0 / *multi[arg].val_acc + 1.0 / *multi[arg].val_piou)) {
      arg = i;
    }
  }
  CHECK(select_best(multi, Task::Multitask) == arg);
  CHECK(arg == 2);
  CHECK(harmonic_mean(60, 30) == 40.0);

  const std::vector<HistoryRow> none{row(1, {}, {}), row(2, {}, {})};
  CHECK(select_best(none, Task::Segmentation) == 1);
}

TEST_CASE("history and metadata round trip") {
  TempDir dir("hist");
  const std::vector<HistoryRow> h{row(1, {}, 50.25), row(2, 75.5, 60), row(3, 1e-4, {})};
  write_history(dir.path() / "history.csv", h);
  const auto text = slurp(dir.path() / "history.csv");
  CHECK(text.rfind("epoch,lr,train_loss,val_acc,val_piou,harmonic\n1,0.01,1,,50.25,\n", 0) == 0);
  const auto back = read_history(dir.path() / "history.csv");
  REQUIRE(back.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(back[i].epoch == h[i].epoch);
    CHECK(back[i].lr == h[i].lr);
    CHECK(back[i].train_loss == h[i].train_loss);
    CHECK(back[i].val_acc == h[i].val_acc);
    CHECK(back[i].val_piou == h[i].val_piou);
    CHECK(back[i].harmonic == h[i].harmonic);
  }

  CheckpointMetadata m;
  m.epoch = 7;
  m.accuracy = 88.5;
  m.part_iou = 61.0 / 3.0;
  m.config_hash = 0xdeadbeefcafef00dULL;
  m.parameter_checksum = 42;
  m.config = {{"task", "multitask"}, {"preset", "tiny"}};
  const auto ck = dir.path() / "best.pfckpt";
  write_metadata(ck, m);
  CHECK(metadata_path(ck) == dir.path() / "best.meta");
  const auto mb = read_metadata(ck);
  CHECK(mb.epoch == 7);
  CHECK(mb.accuracy == m.accuracy);
  CHECK(mb.part_iou == m.part_iou);
  CHECK_FALSE(mb.harmonic.has_value());
  CHECK(mb.config_hash == m.config_hash);
  CHECK(mb.parameter_checksum == 42);
  CHECK(mb.config == m.config);
}

TEST_CASE("sub-cloud aggregation") {
  // Point 0 seen twice, point 1 once.
  const std::vector<std::vector<std::size_t>> subs{{0, 1}, {0}};
  const std::vector<std::vector<float>> logits{{1, 3, 5, 7}, {3, 5}};
  const auto agg = aggregate_subcloud_logits(2, 2, subs, logits);
  CHECK(agg == std::vector<double>{2, 4, 5, 7});
  CHECK_THROWS(aggregate_subcloud_logits(3, 2, subs, logits));

  Rng rng(1);
  std::uniform_real_distribution<float> u(-5, 5);
  for (int trial = 0; trial < 30; ++trial) {
    const auto pts = pf::testing::random_points(1 + rng() % 200, rng);
    const auto s = enumerate_test_subclouds(build_voxel_grid(pts, 0.1f));
    std::vector<std::vector<float>> l;
    for (const auto& rows : s) {
      l.emplace_back(rows.size() * 5);
      for (auto& x : l.back()) x = u(rng);
    }
    CHECK(aggregate_subcloud_logits(pts.size(), 5, s, l) == oracle::collect_and_average(pts.size(), 5, s, l));
  }
}

TEST_CASE("epoch batching") {
  const auto train = labeled_clouds(7, 2);
  auto cfg = small_train_config(Task::Segmentation, 3);
  cfg.augment.loop_factor = 3;
  cfg.batch_size = 4;
  Trainer t(cfg, train);
  const auto b = t.epoch_batches(0);
  std::multiset<std::pair<int, std::size_t>> seen;
  for (const auto& batch : b) {
    CHECK(batch.size() >= 2);
    for (const auto& it : batch) seen.insert({it.loop, it.entry});
  }
  CHECK(seen.size() == 21);
  CHECK(std::set<std::pair<int, std::size_t>>(seen.begin(), seen.end()).size() == 21);
  // 21 items in batches of 4 leave one item, merged into the last batch.
  CHECK(b.size() == 5);
  CHECK(b.back().size() == 5);

  const auto again = t.epoch_batches(0);
  const auto other = t.epoch_batches(1);
  bool same = true, differs = false;
  for (std::size_t i = 0; i < b.size(); ++i) {
    for (std::size_t j = 0; j < b[i].size(); ++j) {
      same &= b[i][j].entry == again[i][j].entry;
      differs |= b[i][j].entry != other[i][j].entry;
    }
  }
  CHECK(same);
  CHECK(differs);

  const auto p1 = t.prepare(0, b[0][0]);
  const auto p2 = t.prepare(0, b[0][0]);
  CHECK(p1.size() == cfg.sample_size);
  CHECK(p1.coords == p2.coords);
  CHECK(p1.heights.has_value());
  CHECK(t.prepare(1, b[0][0]).coords != p1.coords);
}

TEST_CASE("loss mixing endpoints are exact") {
  const auto seg = pf::testing::compare_endpoint(0.0, Task::Segmentation, 10, 5);
  INFO(seg.detail);
  CHECK(seg.steps == 10);
  CHECK(seg.identical);
  const auto cls = pf::testing::compare_endpoint(1.0, Task::Classification, 10, 5);
  INFO(cls.detail);
  CHECK(cls.identical);
  const auto mid = pf::testing::compare_endpoint(0.5, Task::Segmentation, 2, 5);
  CHECK_FALSE(mid.identical);
}

TEST_CASE("test-time coverage matches the collection oracle") {
  PointNeXt<float> model(model_preset("tiny", HeadKind::Segmentation, 0.2f), 3);
  Rng rng(4);
  for (int trial = 0; trial < 6; ++trial) {
    const auto cloud = compute_heights(pf::testing::random_cloud(60 + rng() % 100, rng));
    const auto r = pf::testing::check_coverage(model, cloud, 0.15f);
    INFO(r.detail);
    CHECK(r.ok);
  }
}

TEST_CASE("training run artifacts") {
  TempDir dir("train");
  const auto data = small_dataset(6);
  auto cfg = small_train_config(Task::Multitask, 7);
  cfg.epochs = 2;
  cfg.augment.loop_factor = 1;
  cfg.deterministic = true;
  std::vector<int> epochs_seen;
  TrainHooks hooks;
  hooks.on_epoch = [&](const HistoryRow& r) { epochs_seen.push_back(r.epoch); };
  const auto res = train(cfg, data, dir.path() / "a", hooks);
  CHECK(epochs_seen == std::vector<int>{1, 2});
  REQUIRE(res.history.size() == 2);
  CHECK(res.best_index == select_best(res.history, Task::Multitask));
  for (const char* f : {"best.pfckpt", "best.meta", "last.pfckpt", "last.meta", "history.csv"}) {
    CHECK(std::filesystem::exists(dir.path() / "a" / f));
  }
  const auto hist = read_history(dir.path() / "a" / "history.csv");
  CHECK(hist.size() == 2);
  CHECK(hist[1].harmonic.has_value());

  // The stored metric is reproduced by re-evaluating the stored weights.
  const auto model = load_trained_model(res.best_checkpoint);
  const auto rep = evaluate(*model, data.val, cfg);
  CHECK(std::abs(*rep.harmonic_mean - *res.best.harmonic) <= 1e-4);
  CHECK(std::abs(*rep.part_iou - *res.best.part_iou) <= 1e-4);
  CHECK(read_metadata(res.best_checkpoint).parameter_checksum == parameter_checksum(model->params()));
  CHECK(read_metadata(res.best_checkpoint).config_hash == config_hash(cfg));

  // Same seed, same bytes.
  const auto res2 = train(cfg, data, dir.path() / "b");
  CHECK(slurp(dir.path() / "a" / "last.pfckpt") == slurp(dir.path() / "b" / "last.pfckpt"));
  CHECK(slurp(dir.path() / "a" / "history.csv") == slurp(dir.path() / "b" / "history.csv"));

  // predict writes one line per point, identically on repeat.
  predict(*model, data.test, dir.path() / "p1", cfg);
  predict(*model, data.test, dir.path() / "p2", cfg);
  for (const auto& c : data.test) {
    const auto text = slurp(dir.path() / "p1" / (c.name + ".labels"));
    CHECK(static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n')) == c.size());
    CHECK(text == slurp(dir.path() / "p2" / (c.name + ".labels")));
  }

  // Stopping early keeps the artifacts consistent.
  TrainHooks stop;
  stop.stop = [](const HistoryRow&) { return true; };
  const auto res3 = train(cfg, data, dir.path() / "c", stop);
  CHECK(res3.history.size() == 1);
  CHECK(std::filesystem::exists(dir.path() / "c" / "last.pfckpt"));
}

TEST_CASE("warm start from a checkpoint") {
  TempDir dir("init");
  const auto data = small_dataset(8);
  auto cfg = small_train_config(Task::Classification, 9);
  cfg.epochs = 1;
  cfg.augment.loop_factor = 1;
  const auto res = train(cfg, data, dir.path() / "cls");
  auto seg = small_train_config(Task::Segmentation, 9);
  seg.init = dir.path() / "cls" / "last.pfckpt";
  Trainer t(seg, data.train);
  CHECK_FALSE(t.init_report().loaded.empty());
  CHECK_FALSE(t.init_report().missing.empty());
  CHECK_FALSE(t.init_report().skipped.empty());
  seg.strict = true;
  CHECK_THROWS(Trainer(seg, data.train));
  (void)res;
}

TEST_CASE("divergence is reported with its position") {
  TempDir dir("nan");
  const auto data = small_dataset(10);
  auto cfg = small_train_config(Task::Segmentation, 11);
  cfg.lr = 1e38;
  cfg.epochs = 3;
  cfg.augment.loop_factor = 2;
  try {
    train(cfg, data, dir.path());
    FAIL("training did not diverge");
  } catch (const TrainingDiverged& e) {
    CHECK(e.epoch >= 1);
    CHECK(e.step >= 1);
    CHECK(std::string(e.what()).find("not finite") != std::string::npos);
  }
  CHECK(std::filesystem::exists(dir.path() / "history.csv"));
}

TEST_CASE("config validation and description") {
  auto cfg = small_train_config(Task::Segmentation, 1);
  CHECK_NOTHROW(cfg.validate());
  cfg.beta = 2.0;
  CHECK_THROWS(cfg.validate());
  cfg = small_train_config(Task::Segmentation, 1);
  cfg.min_lr = 1.0;
  CHECK_THROWS(cfg.validate());
  cfg = small_train_config(Task::Segmentation, 1);
  const auto d = describe_config(cfg);
  CHECK(d.at("task") == "segmentation");
  CHECK(d.at("preset") == "tiny");
  auto other = cfg;
  other.seed = 2;
  CHECK(config_hash(other) != config_hash(cfg));
  CHECK(config_hash(cfg) == config_hash(small_train_config(Task::Segmentation, 1)));
}
