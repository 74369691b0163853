// SPDX-FileCopyrightText: 2026 The PointForge Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "pointforge/synthetic.hpp"
#include "pointforge/ulip.hpp"
#include "test_util.hpp"

using namespace pf;
using pf::testing::TempDir;
using T64 = nn::Tensor<double>;

namespace {

std::vector<double> unit(std::size_t d, Rng& rng) {
  std::normal_distribution<double> g;
  std::vector<double> v(d);
  double n = 0.0;
  for (auto& x : v) {
    x = g(rng);
    n += x * x;
  }
  for (auto& x : v) x /= std::sqrt(n);
  return v;
}

ClassPrompts random_prompts(std::size_t classes, std::size_t d, Rng& rng) {
  ClassPrompts p;
  p.dim = d;
  for (std::size_t c = 0; c < classes; ++c) {
    p.names.push_back("class" + std::to_string(c));
    for (double x : unit(d, rng)) p.vectors.push_back(static_cast<float>(x));
  }
  return p;
}

// Random orthogonal matrix from Gram-Schmidt on Gaussian columns.
std::vector<double> random_rotation(std::size_t d, Rng& rng) {
  std::vector<std::vector<double>> q;
  while (q.size() < d) {
    auto v = unit(d, rng);
    for (const auto& u : q) {
      double dot = 0.0;
      for (std::size_t i = 0; i < d; ++i) dot += v[i] * u[i];
      for (std::size_t i = 0; i < d; ++i) v[i] -= dot * u[i];
    }
    double n = 0.0;
    for (double x : v) n += x * x;
    for (auto& x : v) x /= std::sqrt(n);
    q.push_back(v);
  }
  std::vector<double> m;
  for (const auto& row : q) m.insert(m.end(), row.begin(), row.end());
  return m;
}

T64 rows(std::size_t b, std::size_t d, Rng& rng) {
  std::vector<double> v;
  for (std::size_t i = 0; i < b; ++i) {
    auto u = unit(d, rng);
    v.insert(v.end(), u.begin(), u.end());
  }
  return T64(nn::Shape{b, d}, v);
}

double loss_at(const T64& p, const T64& t, double tau) {
  return contrastive_alignment_loss(p, t, T64(nn::Shape{1}, std::vector<double>{std::log(tau)})).item();
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST_CASE("embedding and prompt files round trip") {
  TempDir dir("ulip");
  Rng rng(1);
  EmbeddingTriplet e;
  e.name = "RESIDENTIALhouse_mesh0001";
  e.dim = 5;
  for (int i = 0; i < 3 * 5; ++i) e.text.push_back(static_cast<float>(i) * 0.1f);
  for (int i = 0; i < 2 * 5; ++i) e.image.push_back(-static_cast<float>(i));
  save_embedding(dir.path() / "e.pfemb", e);
  const auto back = load_embedding(dir.path() / "e.pfemb");
  CHECK(back.name == e.name);
  CHECK(back.dim == 5);
  CHECK(back.text == e.text);
  CHECK(back.image == e.image);
  CHECK(slurp(dir.path() / "e.pfemb").rfind("PFEMB v1\n", 0) == 0);

  const auto prompts = random_prompts(4, 6, rng);
  save_class_prompts(dir.path() / "p.pfcls", prompts);
  const auto pb = load_class_prompts(dir.path() / "p.pfcls");
  CHECK(pb.names == prompts.names);
  CHECK(pb.vectors == prompts.vectors);

  std::ofstream(dir.path() / "bad.pfemb") << "PFEMB v2\n";
  CHECK_THROWS(load_embedding(dir.path() / "bad.pfemb"));
  auto bytes = slurp(dir.path() / "e.pfemb");
  bytes.resize(bytes.size() - 3);
  std::ofstream(dir.path() / "short.pfemb", std::ios::binary) << bytes;
  CHECK_THROWS(load_embedding(dir.path() / "short.pfemb"));
}

TEST_CASE("average text embedding") {
  EmbeddingTriplet e;
  e.dim = 2;
  e.text = {3, 4, 3, 4};
  const auto same = average_text_embedding(e);
  CHECK(same[0] == doctest::Approx(0.6));
  CHECK(same[1] == doctest::Approx(0.8));

  e.text = {1, 0, -1, 0};
  CHECK_THROWS(average_text_embedding(e));

  Rng rng(2);
  std::normal_distribution<float> g;
  e.dim = 7;
  e.text.clear();
  for (int i = 0; i < 7 * 9; ++i) e.text.push_back(g(rng));
  const auto got = average_text_embedding(e);
  std::vector<double> mean(7, 0.0);
  for (int r = 0; r < 9; ++r) {
    for (int j = 0; j < 7; ++j) mean[j] += e.text[r * 7 + j] / 9.0;
  }
  const double n = std::sqrt(std::inner_product(mean.begin(), mean.end(), mean.begin(), 0.0));
  for (int j = 0; j < 7; ++j) CHECK(got[j] == doctest::Approx(mean[j] / n).epsilon(1e-12));
}

TEST_CASE("contrastive loss examples") {
  Rng rng(3);
  const T64 one = rows(1, 6, rng);
  CHECK(loss_at(one, one, 0.07) == doctest::Approx(0.0).epsilon(1e-15));

  const T64 pair(nn::Shape{2, 2}, std::vector<double>{1, 0, 0, 1});
  double prev = loss_at(pair, pair, 1.0);
  CHECK(prev > 0.0);
  for (double tau : {0.5, 0.1, 0.05, 0.01}) {
    const double l = loss_at(pair, pair, tau);
    CHECK(l < prev);
    CHECK(l >= 0.0);
    prev = l;
  }
  CHECK(prev < 1e-40);

  // Unnormalized inputs are normalized by the loss.
  const T64 scaled(nn::Shape{2, 2}, std::vector<double>{5, 0, 0, 0.2});
  CHECK(loss_at(scaled, pair, 0.1) == doctest::Approx(loss_at(pair, pair, 0.1)).epsilon(1e-14));

  T64 bad = pair.clone();
  bad.values()[0] = std::nan("");
  CHECK_THROWS(loss_at(bad, pair, 0.1));
  CHECK_THROWS(loss_at(one, pair, 0.1));
}

TEST_CASE("contrastive loss is invariant under a common rotation") {
  Rng rng(4);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t b = 2 + trial % 5, d = 3 + trial % 6;
    const T64 p = rows(b, d, rng), t = rows(b, d, rng);
    const auto r = random_rotation(d, rng);
    auto rotate = [&](const T64& x) {
      std::vector<double> out(b * d, 0.0);
      for (std::size_t i = 0; i < b; ++i) {
        for (std::size_t k = 0; k < d; ++k) {
          for (std::size_t j = 0; j < d; ++j) out[i * d + k] += r[k * d + j] * x.values()[i * d + j];
        }
      }
      return T64(nn::Shape{b, d}, out);
    };
    CHECK(loss_at(rotate(p), rotate(t), 0.1) == doctest::Approx(loss_at(p, t, 0.1)).epsilon(1e-12));
    CHECK(loss_at(p, t, 0.1) >= 0.0);
  }
}

TEST_CASE("zero-shot classification") {
  Rng rng(5);
  const auto prompts = random_prompts(15, 8, rng);
  const auto row3 = prompts.row(3);
  CHECK(zero_shot_classify(std::vector<double>(row3.begin(), row3.end()), prompts).top1 == 3);

  ClassPrompts axes;
  axes.dim = 15;
  for (int c = 0; c < 15; ++c) {
    axes.names.push_back(std::to_string(c));
    for (int j = 0; j < 15; ++j) axes.vectors.push_back(c == j ? 1.0f : 0.0f);
  }
  std::vector<double> f(15, 0.0);
  f[7] = 0.3;
  CHECK(zero_shot_classify(f, axes).top1 == 7);
  // All-zero similarity ties resolve to the lowest index.
  std::vector<double> tie(15, 0.0);
  tie[7] = -1.0;
  CHECK(zero_shot_classify(tie, axes).top1 == 0);
  CHECK(zero_shot_classify(tie, axes).top5 == std::vector<int>{0, 1, 2, 3, 4});

  const std::vector<int> subset{2, 9, 11};
  f.assign(15, 0.0);
  f[7] = 1.0;
  f[11] = 0.5;
  const auto sub = zero_shot_classify(f, axes, subset);
  CHECK(sub.top1 == 11);
  CHECK(sub.similarity.size() == 3);

  for (int trial = 0; trial < 200; ++trial) {
    const auto feat = unit(8, rng);
    const auto r = zero_shot_classify(feat, prompts);
    std::vector<std::pair<double, int>> scan;
    for (int c = 0; c < 15; ++c) {
      const auto row = prompts.row(c);
      double dot = 0.0, rn = 0.0, fn = 0.0;
      for (std::size_t j = 0; j < 8; ++j) {
        dot += feat[j] * row[j];
        rn += static_cast<double>(row[j]) * row[j];
        fn += feat[j] * feat[j];
      }
      scan.emplace_back(-dot / std::sqrt(rn * fn), c);
    }
    std::sort(scan.begin(), scan.end());
    CHECK(r.top1 == scan[0].second);
    for (int k = 0; k < 5; ++k) CHECK(r.top5[k] == scan[k].second);
    CHECK(std::find(r.top5.begin(), r.top5.end(), r.top1) != r.top5.end());

    auto scaled = feat;
    for (auto& x : scaled) x *= 3.75;
    CHECK(zero_shot_classify(scaled, prompts).top1 == r.top1);
    CHECK(zero_shot_classify(scaled, prompts).top5 == r.top5);
  }
}

TEST_CASE("temperature stays clamped") {
  nn::ParameterSet<float> ps;
  ProjectionHead<float> head(ps, 8, 4, 1);
  CHECK(std::exp(head.log_tau_text.item()) == doctest::Approx(0.07).epsilon(1e-6));
  head.log_tau_text.values()[0] = -20.0f;
  head.log_tau_image.values()[0] = 3.0f;
  head.clamp_temperature();
  CHECK(std::exp(head.log_tau_text.item()) == doctest::Approx(0.01).epsilon(1e-5));
  CHECK(head.log_tau_image.item() == 0.0f);
}

TEST_CASE("pretraining steps") {
  TempDir dir("pretrain");
  auto spec = GeneratorSpec::default_spec();
  spec.points_per_building = 384;
  spec.seed = 3;
  generate_dataset(spec, SplitCounts{16, 1, 1}, dir.path());
  EmbeddingSpec es;
  es.dim = 16;
  es.text_rows = 8;
  es.image_rows = 4;
  generate_embeddings(spec, es, dir.path());
  const auto train = load_split_manifest(dir.path() / "train.txt", SplitName::Train);
  std::vector<PointCloud> clouds;
  std::vector<EmbeddingTriplet> triplets;
  std::map<std::filesystem::path, std::string> before;
  for (const auto& entry : train.entries) {
    clouds.push_back(compute_heights(load_point_cloud(entry)));
    const auto ep = embedding_path(dir.path(), clouds.back().name);
    triplets.push_back(load_embedding(ep));
    before[ep] = slurp(ep);
  }
  std::vector<PretrainSample> batch;
  for (std::size_t i = 0; i < clouds.size(); ++i) batch.push_back({clouds[i], &triplets[i]});

  ForwardOptions opts;
  opts.training = true;
  Rng rng(4);

  SUBCASE("zero learning rate leaves parameters alone") {
    PointNeXt<float> model(model_preset("tiny", HeadKind::Encoder, 0.15f), 1);
    ProjectionHead<float> head(model.params(), model.config().encoder_width(), es.dim, 1);
    // Running statistics are buffers, so the checksum is taken over parameters only.
    std::vector<std::vector<float>> snap;
    for (auto& p : model.params().parameters()) snap.push_back(p.tensor.values());
    nn::Sgd<float> sgd(model.params().parameters(), {.lr = 0.0, .momentum = 0.9, .weight_decay = 1e-4});
    for (int s = 0; s < 3; ++s) pretrain_step(model, head, sgd, std::span(batch).first(4), opts, rng);
    for (std::size_t i = 0; i < snap.size(); ++i) CHECK(model.params().parameters()[i].tensor.values() == snap[i]);
  }

  SUBCASE("loss decreases and embeddings stay frozen") {
    PointNeXt<float> model(model_preset("tiny", HeadKind::Encoder, 0.15f), 2);
    ProjectionHead<float> head(model.params(), model.config().encoder_width(), es.dim, 2);
    nn::Adam<float> adam(model.params().parameters(), {.lr = 0.005, .weight_decay = 0.0});
    std::vector<double> losses;
    for (int s = 0; s < 50; ++s) {
      const std::size_t start = (s % 2) * 8;
      losses.push_back(pretrain_step(model, head, adam, std::span(batch).subspan(start, 8), opts, rng).loss);
    }
    const double first = std::accumulate(losses.begin(), losses.begin() + 6, 0.0) / 6.0;
    const double last = std::accumulate(losses.end() - 6, losses.end(), 0.0) / 6.0;
    INFO("first " << first << " last " << last);
    CHECK(last < first);
    for (const auto& [path, bytes] : before) CHECK(slurp(path) == bytes);
    for (std::size_t i = 0; i < triplets.size(); ++i) CHECK(triplets[i].text == load_embedding(embedding_path(dir.path(), clouds[i].name)).text);
  }

  SUBCASE("missing triplets are rejected") {
    PointNeXt<float> model(model_preset("tiny", HeadKind::Encoder, 0.15f), 1);
    ProjectionHead<float> head(model.params(), model.config().encoder_width(), es.dim, 1);
    nn::Sgd<float> sgd(model.params().parameters(), {});
    std::vector<PretrainSample> broken{batch[0], {clouds[1], nullptr}};
    CHECK_THROWS(pretrain_step(model, head, sgd, std::span<const PretrainSample>(broken), opts, rng));
  }
}
