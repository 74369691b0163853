// SPDX-FileCopyrightText: 2026 The PointForge Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>
#include <fstream>

#include "gradchecks.hpp"
#include "pointforge/checkpoint.hpp"
#include "pointforge/metrics.hpp"
#include "pointforge/pointnext.hpp"
#include "test_util.hpp"

using namespace pf;
using pf::testing::random_cloud;
using pf::testing::TempDir;
using T64 = nn::Tensor<double>;

namespace {

// Linear + batch norm units carry cin*cout + 2*cout values; linear + bias
// units carry cin*cout + cout.
constexpr std::size_t normed(std::size_t cin, std::size_t cout) { return cin * cout + 2 * cout; }
constexpr std::size_t biased(std::size_t cin, std::size_t cout) { return cin * cout + cout; }

constexpr std::size_t tiny_encoder() {
  const std::size_t stem = normed(10, 16);
  const std::size_t stage0 = normed(19, 16) + normed(19, 16) + normed(16, 64) + normed(64, 16);
  const std::size_t stage1 = normed(19, 32) + normed(35, 32) + normed(32, 128) + normed(128, 32);
  return stem + stage0 + stage1;
}
constexpr std::size_t tiny_seg_head() {
  return normed(32 + 16, 16) + normed(16 + 16, 16) + normed(16, 16) + biased(16, 31);
}
constexpr std::size_t tiny_cls_head() { return normed(32, 512) + normed(512, 256) + biased(256, 15); }

std::vector<PointCloud> clouds(std::size_t count, std::uint64_t seed, std::size_t n = 96) {
  Rng rng(seed);
  std::vector<PointCloud> out;
  for (std::size_t i = 0; i < count; ++i) out.push_back(random_cloud(n + 8 * i, rng));
  return out;
}

}  // namespace

TEST_CASE("radius policy and presets") {
  for (const auto& name : preset_names()) {
    const auto c = model_preset(name, HeadKind::Segmentation, 0.05f);
    for (std::size_t t = 0; t < c.stages.size(); ++t) {
      CHECK(c.stages[t].radius == doctest::Approx(0.05f * static_cast<float>(1 << t)));
    }
  }
  CHECK(model_preset("tiny", HeadKind::Classification, 0.1f, StrideProfile::Cls).stages[0].stride == 2);
  CHECK_THROWS_AS(model_preset("huge", HeadKind::Segmentation, 0.1f), ParseError);
}

TEST_CASE("parameter counts follow the config") {
  CHECK(PointNeXt<float>(model_preset("tiny", HeadKind::Segmentation, 0.1f)).params().parameter_count() ==
        tiny_encoder() + tiny_seg_head());
  CHECK(PointNeXt<float>(model_preset("tiny", HeadKind::Classification, 0.1f)).params().parameter_count() ==
        tiny_encoder() + tiny_cls_head());
  CHECK(PointNeXt<float>(model_preset("tiny", HeadKind::Multitask, 0.1f)).params().parameter_count() ==
        tiny_encoder() + tiny_seg_head() + tiny_cls_head());
  CHECK(PointNeXt<float>(model_preset("tiny", HeadKind::Encoder, 0.1f)).params().parameter_count() == tiny_encoder());

  // Expansion scales only the hidden layer of each block.
  auto c2 = model_preset("tiny", HeadKind::Encoder, 0.1f);
  c2.expansion = 2;
  CHECK(PointNeXt<float>(c2).params().parameter_count() ==
        tiny_encoder() - normed(16, 64) - normed(64, 16) - normed(32, 128) - normed(128, 32) + normed(16, 32) +
            normed(32, 16) + normed(32, 64) + normed(64, 32));
}

TEST_CASE("stage point counts use floor division") {
  const auto cfg = model_preset("tiny", HeadKind::Segmentation, 0.2f);
  const auto cs = clouds(3, 1);
  const Batch batch = make_batch(cs);
  const auto plan = plan_geometry(cfg, batch.coords, batch.offsets, {}, true);
  for (std::size_t b = 0; b < cs.size(); ++b) {
    std::size_t n = cs[b].size();
    for (std::size_t t = 0; t < cfg.stages.size(); ++t) {
      n = std::max<std::size_t>(1, n / cfg.stages[t].stride);
      const auto& off = plan.levels[t + 1].offsets;
      CHECK(off[b + 1] - off[b] == n);
    }
  }
}

TEST_CASE("forward shapes and label range") {
  const auto cs = clouds(2, 2);
  const Batch batch = make_batch(cs);
  PointNeXt<float> model(model_preset("tiny", HeadKind::Multitask, 0.2f), 5);
  const auto out = model.forward(batch, {});
  CHECK(out.cls_logits.shape() == nn::Shape{2, 15});
  CHECK(out.seg_logits.shape() == nn::Shape{batch.rows(), 31});
  CHECK(model.classification_forward(batch, {}).shape() == nn::Shape{2, 15});

  PointNeXt<float> seg(model_preset("tiny", HeadKind::Segmentation, 0.2f), 5);
  CHECK_THROWS(seg.classification_forward(batch, {}));
  const auto logits = seg.segmentation_forward(batch, {});
  for (std::size_t r = 0; r < batch.rows(); ++r) {
    const auto row = logits.data().subspan(r * 31, 31);
    const int label = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin()) + 1;
    CHECK(label >= 1);
    CHECK(label <= 31);
  }

  Batch bad = batch;
  bad.channels = 7;
  CHECK_THROWS(seg.forward(bad, {}));
}

TEST_CASE("eval forward is deterministic and per cloud") {
  auto cs = clouds(1, 3);
  cs.push_back(cs[0]);
  PointNeXt<float> model(model_preset("tiny", HeadKind::Classification, 0.2f), 7);
  const auto a = model.classification_forward(make_batch(cs), {});
  const auto b = model.classification_forward(make_batch(cs), {});
  CHECK(a.values() == b.values());
  CHECK(std::equal(a.data().begin(), a.data().begin() + 15, a.data().begin() + 15));

  PointNeXt<float> twin(model_preset("tiny", HeadKind::Classification, 0.2f), 7);
  CHECK(twin.classification_forward(make_batch(cs), {}).values() == a.values());
}

TEST_CASE("model responds to scale") {
  auto cs = clouds(1, 4);
  PointNeXt<float> model(model_preset("tiny", HeadKind::Segmentation, 0.2f), 8);
  const auto base = model.segmentation_forward(make_batch(cs), {});
  for (auto& p : cs[0].coords) {
    for (float& x : p) x *= 2.0f;
  }
  const auto doubled = model.segmentation_forward(make_batch(cs), {});
  CHECK(doubled.shape() == base.shape());
  CHECK(doubled.values() != base.values());
}

TEST_CASE("residual block with a zeroed last layer is the shortcut") {
  const auto cfg = model_preset("tiny", HeadKind::Encoder, 0.2f);
  const auto cs = clouds(2, 5);
  const Batch batch = make_batch(cs);
  const auto plan = plan_geometry(cfg, batch.coords, batch.offsets, {}, false);
  const auto& level = plan.levels[1];
  Rng rng(6);
  for (bool training : {true, false}) {
    nn::ParameterSet<double> ps;
    InvResBlock<double> same(ps, "same", 16, 16, 4, 1);
    InvResBlock<double> wide(ps, "wide", 16, 24, 4, 1);
    std::fill(same.reduce.weight.values().begin(), same.reduce.weight.values().end(), 0.0);
    std::fill(wide.reduce.weight.values().begin(), wide.reduce.weight.values().end(), 0.0);
    T64 x = pf::testing::uniform64({level.coords.size(), 16}, rng);
    x.set_requires_grad(true);
    CHECK(same(x, level, training).values() == x.values());
    CHECK(wide(x, level, training).values() == (*wide.shortcut)(x, training).values());

    // The residual path keeps the input gradient alive.
    x.zero_grad();
    nn::sum(same(x, level, training)).backward();
    REQUIRE(x.has_grad());
    CHECK(std::all_of(x.grad().begin(), x.grad().end(), [](double g) { return g == 1.0; }));
  }
}

TEST_CASE("classification loss reaches the shared encoder") {
  const auto cs = clouds(2, 7);
  PointNeXt<float> model(model_preset("tiny", HeadKind::Multitask, 0.2f), 9);
  Rng drop(1);
  ForwardOptions opts;
  opts.training = true;
  opts.dropout_rng = &drop;
  const auto out = model.forward(make_batch(cs), opts);
  nn::softmax_cross_entropy(out.cls_logits, std::vector<int>{1, 2}).backward();
  bool stem_grad = false, seg_grad = false;
  for (auto& p : model.params().parameters()) {
    const bool nonzero = p.tensor.has_grad() &&
                         std::any_of(p.tensor.grad().begin(), p.tensor.grad().end(), [](float g) { return g != 0.0f; });
    if (p.name == "stem.weight") stem_grad = nonzero;
    if (p.name.rfind("seg.", 0) == 0) seg_grad |= nonzero;
  }
  CHECK(stem_grad);
  CHECK_FALSE(seg_grad);
}

TEST_CASE("multitask gradient is the beta mixture of the task gradients") {
  const auto cs = clouds(2, 8, 64);
  auto cfg = model_preset("tiny", HeadKind::Multitask, 0.25f);
  cfg.cls_dropout = 0.0;
  PointNeXt<double> model(cfg, 10);
  const Batch batch = make_batch(cs);
  ForwardOptions opts;
  opts.training = true;
  const auto plan = plan_geometry(cfg, batch.coords, batch.offsets, opts, true);
  std::vector<int> seg, cls{0, 3};
  for (const auto& c : cs) {
    for (int s : *c.seg_labels) seg.push_back(s - 1);
  }
  auto grads = [&](double b) {
    model.params().zero_grad();
    const auto out = model.forward(batch, plan, opts);
    multitask_loss(nn::softmax_cross_entropy(out.cls_logits, cls), nn::softmax_cross_entropy(out.seg_logits, seg),
                   b)
        .backward();
    std::vector<double> g;
    for (auto& p : model.params().parameters()) {
      if (p.name.rfind("enc", 0) != 0 && p.name.rfind("stem", 0) != 0) continue;
      if (p.tensor.has_grad()) {
        g.insert(g.end(), p.tensor.grad().begin(), p.tensor.grad().end());
      } else {
        g.insert(g.end(), p.tensor.size(), 0.0);
      }
    }
    return g;
  };
  const double beta = 0.3;
  const auto g_cls = grads(1.0);
  const auto g_seg = grads(0.0);
  const auto g_mix = grads(beta);
  REQUIRE(g_cls.size() == g_mix.size());
  double worst = 0.0, scale = 0.0;
  for (std::size_t i = 0; i < g_mix.size(); ++i) {
    const double want = beta * g_cls[i] + (1.0 - beta) * g_seg[i];
    worst = std::max(worst, std::abs(g_mix[i] - want));
    scale = std::max({scale, std::abs(g_cls[i]), std::abs(g_seg[i])});
  }
  CHECK(scale > 0.0);
  CHECK(worst <= 1e-9 * scale);
}

TEST_CASE("tiny multitask model passes a finite-difference check") {
  const auto r = pf::testing::tiny_model_gradcheck(11, 2);
  INFO("max rel error " << r.max_rel_error << " coords " << r.coords_checked << " input " << r.worst_input << " coord "
                        << r.worst_coord << " analytic " << r.worst_analytic << " numeric " << r.worst_numeric);
  CHECK(r.max_rel_error < 1e-4);
}

TEST_CASE("checkpoint round trip and partial loading") {
  TempDir dir("model");
  PointNeXt<float> cls(model_preset("tiny", HeadKind::Classification, 0.2f), 12);
  const auto path = dir.path() / "cls.pfckpt";
  save_model(cls, path);

  PointNeXt<float> same(model_preset("tiny", HeadKind::Classification, 0.2f), 99);
  const auto rep = load_checkpoint(same, path, true);
  CHECK(rep.skipped.empty());
  CHECK(rep.missing.empty());
  CHECK(parameter_checksum(same.params()) == parameter_checksum(cls.params()));
  for (std::size_t i = 0; i < cls.params().parameters().size(); ++i) {
    CHECK(same.params().parameters()[i].tensor.values() == cls.params().parameters()[i].tensor.values());
  }

  PointNeXt<float> multi(model_preset("tiny", HeadKind::Multitask, 0.2f), 99);
  CHECK_THROWS(load_checkpoint(multi, path, true));
  const auto partial = load_checkpoint(multi, path, false);
  CHECK(partial.skipped.empty());
  std::vector<std::string> expect_missing, expect_loaded;
  for (const auto& [name, t] : multi.params().state()) {
    const bool head = name.rfind("dec", 0) == 0 || name.rfind("seg.", 0) == 0;
    (head ? expect_missing : expect_loaded).push_back(name);
  }
  auto sorted = [](std::vector<std::string> v) {
    std::sort(v.begin(), v.end());
    return v;
  };
  CHECK(sorted(partial.missing) == sorted(expect_missing));
  CHECK(sorted(partial.loaded) == sorted(expect_loaded));

  PointNeXt<float> seg(model_preset("tiny", HeadKind::Segmentation, 0.2f), 99);
  const auto from_cls = load_checkpoint(seg, path, false);
  CHECK(std::all_of(from_cls.skipped.begin(), from_cls.skipped.end(),
                    [](const std::string& n) { return n.rfind("cls.", 0) == 0; }));
  CHECK_FALSE(from_cls.skipped.empty());

  // Flip one payload byte.
  std::string bytes;
  {
    std::ifstream in(path, std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(in), {});
  }
  bytes[bytes.size() - 20] ^= 0x5a;
  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  }
  CHECK_THROWS(load_checkpoint(same, path, false));
}
