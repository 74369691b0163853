// SPDX-FileCopyrightText: 2026 The PointForge Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <numbers>

#include "pointforge/gradcheck.hpp"
#include "pointforge/ops.hpp"
#include "pointforge/optim.hpp"

using namespace pf;
using namespace pf::nn;

namespace {

using T64 = Tensor<double>;

T64 uniform(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(numel(shape));
  for (auto& x : v) x = u(rng);
  return T64(std::move(shape), std::move(v));
}

// Values bounded away from zero, for kinks and ties.
T64 away_from_zero(Shape shape, Rng& rng) {
  T64 t = uniform(std::move(shape), rng, 0.05, 1.0);
  std::bernoulli_distribution flip(0.5);
  for (auto& x : t.values()) x = flip(rng) ? -x : x;
  return t;
}

// Fixed random weight per output coordinate, so no coordinate's gradient
// cancels by construction (batch norm outputs sum to a constant per channel).
T64 readout(const T64& y) {
  Rng rng(1000 + y.size());
  const T64 r = uniform({y.size(), 1}, rng);
  return sum(dense(reshape(y, Shape{1, y.size()}), r));
}

void require_pass(const GradCheckResult& r, double tol = 1e-6) {
  INFO("max rel error " << r.max_rel_error << " at input " << r.worst_input << " coord " << r.worst_coord
                        << " analytic " << r.worst_analytic << " numeric " << r.worst_numeric);
  CHECK(r.coords_checked > 0);
  CHECK(r.max_rel_error < tol);
}

double scalar_ce(std::span<const double> row, int target) {
  double mx = row[0];
  for (double v : row) mx = std::max(mx, v);
  double s = 0.0;
  for (double v : row) s += std::exp(v - mx);
  return -(row[static_cast<std::size_t>(target)] - mx - std::log(s));
}

}  // namespace

TEST_CASE("dense examples") {
  const T64 x(Shape{1, 1}, std::vector<double>{3});
  const T64 w(Shape{1, 1}, std::vector<double>{2});
  const T64 b(Shape{1}, std::vector<double>{1});
  CHECK(dense(x, w, b).item() == 7.0);

  Rng rng(1);
  const T64 in = uniform({2, 3, 4}, rng);
  std::vector<double> eye(16, 0.0);
  for (int i = 0; i < 4; ++i) eye[i * 5] = 1.0;
  const T64 out = dense(in, T64({4, 4}, eye), T64({4}, 0.0));
  CHECK(out.shape() == Shape{2, 3, 4});
  CHECK(out.values() == in.values());
  CHECK_THROWS(dense(in, uniform({3, 2}, rng)));
}

TEST_CASE("relu, batch norm and max reduce examples") {
  const T64 x(Shape{2}, std::vector<double>{-1, 2});
  CHECK(relu(x).values() == std::vector<double>{0, 2});

  T64 z(Shape{4, 1}, std::vector<double>{-1, 1, -1, 1});
  BatchNormState<double> st(1);
  st.eps = 0.0;
  const auto y = batch_norm(z, T64({1}, 1.0), T64({1}, 0.0), st, true);
  for (std::size_t i = 0; i < 4; ++i) CHECK(y.values()[i] == doctest::Approx(z.values()[i]).epsilon(1e-12));
  CHECK(st.running_mean.values()[0] == doctest::Approx(0.0));
  // Unbiased variance 4/3 blended with momentum 0.1.
  CHECK(st.running_var.values()[0] == doctest::Approx(0.9 + 0.1 * 4.0 / 3.0));
  CHECK_THROWS(batch_norm(T64({1, 1}, 1.0), T64({1}, 1.0), T64({1}, 0.0), st, true));

  // Eval mode depends only on the running statistics.
  BatchNormState<double> fixed(2);
  fixed.running_mean.values() = {1.0, -1.0};
  fixed.running_var.values() = {4.0, 1.0};
  fixed.eps = 0.0;
  const auto e1 = batch_norm(T64({1, 2}, std::vector<double>{3, 0}), T64({2}, 1.0), T64({2}, 0.0), fixed, false);
  CHECK(e1.values() == std::vector<double>{1.0, 1.0});
  const auto e2 = batch_norm(T64({1, 2}, std::vector<double>{3, 0}), T64({2}, 1.0), T64({2}, 0.0), fixed, false);
  CHECK(e2.values() == e1.values());

  const T64 m(Shape{1, 2, 2}, std::vector<double>{1, 5, 3, 2});
  const auto r = max_reduce_neighbors(m);
  CHECK(r.values.values() == std::vector<double>{3, 5});
  CHECK(r.argmax == std::vector<std::uint32_t>{1, 0});
  Rng rng(2);
  const T64 k1 = uniform({5, 1, 3}, rng);
  CHECK(max_reduce_neighbors(k1).values.values() == k1.values());
}

TEST_CASE("softmax cross entropy examples and scalar recomputation") {
  const T64 flat(Shape{3, 4}, 0.0);
  const std::vector<int> t{0, 1, 3};
  CHECK(softmax_cross_entropy(flat, t).item() == doctest::Approx(std::log(4.0)).epsilon(1e-12));

  T64 sure(Shape{1, 3}, std::vector<double>{50, 0, 0});
  CHECK(softmax_cross_entropy(sure, std::vector<int>{0}).item() < 1e-20);

  const std::vector<int> ignored{-1, -1};
  CHECK_THROWS(softmax_cross_entropy(T64({2, 3}, 0.0), ignored, {}, -1));

  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t rows = 1 + rng() % 12, classes = 2 + rng() % 5;
    const T64 logits = uniform({rows, classes}, rng, -3, 3);
    std::vector<int> targets(rows);
    std::vector<double> w(classes);
    for (auto& x : w) x = 0.5 + (rng() % 100) / 50.0;
    for (auto& x : targets) x = static_cast<int>(rng() % (classes + 1)) - 1;  // -1 is ignored
    targets[0] = 0;
    double num = 0.0, den = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
      if (targets[r] < 0) continue;
      const auto row = std::span<const double>(logits.values()).subspan(r * classes, classes);
      num += w[targets[r]] * scalar_ce(row, targets[r]);
      den += w[targets[r]];
    }
    CHECK(softmax_cross_entropy(logits, targets, w, -1).item() == doctest::Approx(num / den).epsilon(1e-12));
  }
}

TEST_CASE("layer gradient checks") {
  Rng rng(4);
  constexpr int kTrials = 3;
  SUBCASE("dense") {
    for (int trial = 0; trial < kTrials; ++trial) {
      const T64 x = uniform({3, 4}, rng), w = uniform({4, 5}, rng), b = uniform({5}, rng);
      require_pass(gradient_check([&] { return readout(dense(x, w, b)); }, {x, w, b}));
    }
  }
  SUBCASE("relu") {
    for (int trial = 0; trial < kTrials; ++trial) {
      const T64 x = away_from_zero({4, 6}, rng);
      require_pass(gradient_check([&] { return readout(relu(x)); }, {x}));
    }
  }
  SUBCASE("batch norm") {
    for (int trial = 0; trial < kTrials; ++trial) {
      const T64 x = uniform({6, 3}, rng), g = uniform({3}, rng, 0.5, 1.5), b = uniform({3}, rng);
      BatchNormState<double> st(3);
      require_pass(gradient_check([&] { return readout(batch_norm(x, g, b, st, true)); }, {x, g, b}));
      require_pass(gradient_check([&] { return readout(batch_norm(x, g, b, st, false)); }, {x, g, b}));
    }
  }
  SUBCASE("max reduce") {
    for (int trial = 0; trial < kTrials; ++trial) {
      const T64 x = uniform({3, 4, 5}, rng);
      require_pass(gradient_check([&] { return readout(max_reduce_neighbors(x).values); }, {x}));
    }
  }
  SUBCASE("softmax cross entropy") {
    for (int trial = 0; trial < kTrials; ++trial) {
      const T64 x = uniform({5, 4}, rng, -2, 2);
      const std::vector<int> t{0, 3, -1, 2, 1};
      const std::vector<double> w{1.0, 0.5, 2.0, 1.5};
      require_pass(gradient_check([&] { return softmax_cross_entropy(x, t, w, -1); }, {x}));
    }
  }
  SUBCASE("dense relu cross entropy composite") {
    for (int trial = 0; trial < kTrials; ++trial) {
      const T64 x = uniform({6, 3}, rng), w = uniform({3, 4}, rng), b = uniform({4}, rng);
      const std::vector<int> t{0, 1, 2, 3, 0, 1};
      const auto pre = dense(x, w, b);
      bool near_kink = false;
      for (double v : pre.values()) near_kink |= std::abs(v) < 1e-3;
      if (!near_kink) require_pass(gradient_check([&] { return softmax_cross_entropy(relu(dense(x, w, b)), t); }, {x, w, b}));
    }
  }
}

TEST_CASE("structural op gradient checks") {
  Rng rng(5);
  const T64 x = uniform({5, 3}, rng), y = uniform({5, 3}, rng);
  const std::vector<std::size_t> idx{4, 0, 0, 2, 3, 1};
  const std::vector<std::size_t> offsets{0, 2, 5};
  const std::vector<double> weights{0.25, 0.75, 0.5, 0.5, 1.0, 0.0};
  const T64 s = uniform({1}, rng);
  require_pass(gradient_check([&] { return readout(segment_max(x, offsets)); }, {x}));
  require_pass(gradient_check([&] { return readout(gather_rows(x, idx, Shape{2, 3})); }, {x}));
  require_pass(gradient_check([&] { return readout(weighted_gather(x, idx, weights, 2)); }, {x}));
  require_pass(gradient_check([&] { return readout(concat_last(x, y)); }, {x, y}));
  require_pass(gradient_check([&] { return readout(add(x, y)); }, {x, y}));
  require_pass(gradient_check([&] { return readout(mul_scalar(x, -1.7)); }, {x}));
  require_pass(gradient_check([&] { return readout(mul_by(x, s)); }, {x, s}));
  require_pass(gradient_check([&] { return readout(exp(x)); }, {x}));
  require_pass(gradient_check([&] { return readout(transpose(x)); }, {x}));
  require_pass(gradient_check([&] { return readout(matmul_nt(x, y)); }, {x, y}));
  require_pass(gradient_check([&] { return readout(l2_normalize_rows(x)); }, {x}));
}

TEST_CASE("gradient check harness") {
  Rng rng(6);
  const T64 x = uniform({4, 3}, rng), w = uniform({3, 2}, rng);
  const auto linear = gradient_check([&] { return sum(dense(x, w)); }, {x});
  CHECK(linear.max_rel_error < 1e-9);

  // A backward that doubles the incoming gradient must be caught.
  auto faulty = [](const T64& in) {
    std::vector<double> v(in.values());
    for (auto& e : v) e *= 3.0;
    return T64::from_op(in.shape(), std::move(v), {in}, [](Tensor<double>::Node& node) {
      auto& src = *node.inputs[0];
      src.ensure_grad();
      for (std::size_t i = 0; i < node.grad.size(); ++i) src.grad[i] += 6.0 * node.grad[i];
    });
  };
  const auto bad = gradient_check([&] { return sum(faulty(x)); }, {x});
  CHECK(bad.max_rel_error > 1e-2);
  CHECK_FALSE(bad.passed);

  CHECK_THROWS(gradient_check([&] { return sum(mul_scalar(exp(mul_scalar(x, 1e4)), 1.0)); }, {x}));
}

TEST_CASE("backward is linear in the loss") {
  Rng rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    const T64 w = uniform({4, 3}, rng);
    w.node()->requires_grad = true;
    const T64 x = uniform({6, 4}, rng);
    const std::vector<int> t{0, 1, 2, 0, 1, 2};
    auto loss_a = [&] { return softmax_cross_entropy(dense(x, w), t); };
    auto loss_b = [&] { return sum(relu(dense(x, w))); };

    T64 wa = w;
    wa.zero_grad();
    loss_a().backward();
    const std::vector<double> ga(w.grad().begin(), w.grad().end());
    wa.zero_grad();
    loss_b().backward();
    const std::vector<double> gb(w.grad().begin(), w.grad().end());
    wa.zero_grad();
    add(loss_a(), loss_b()).backward();
    for (std::size_t i = 0; i < ga.size(); ++i) CHECK(w.grad()[i] == doctest::Approx(ga[i] + gb[i]).epsilon(1e-12));
  }
}

TEST_CASE("forward is deterministic") {
  Rng rng(8);
  const T64 x = uniform({7, 5}, rng), w = uniform({5, 4}, rng);
  CHECK(relu(dense(x, w)).values() == relu(dense(x, w)).values());
}

TEST_CASE("sgd and adam steps") {
  auto one_param = [](double v) {
    ParameterSet<double> ps;
    ps.add_parameter("theta", T64(Shape{1}, v, true), false);
    return ps;
  };

  auto ps = one_param(0.0);
  Sgd<double> sgd(ps.parameters(), {.lr = 0.1, .momentum = 0.0, .weight_decay = 0.0});
  sum(ps.parameters()[0].tensor).backward();
  sgd.step();
  CHECK(ps.parameters()[0].tensor.values()[0] == doctest::Approx(-0.1).epsilon(1e-15));

  auto pa = one_param(0.0);
  Adam<double> adam(pa.parameters(), {.lr = 0.05, .weight_decay = 0.0});
  mul_scalar(sum(pa.parameters()[0].tensor), 3.0).backward();
  adam.step();
  CHECK(pa.parameters()[0].tensor.values()[0] == doctest::Approx(-0.05).epsilon(1e-6));

  // Weight decay on an exempt parameter is skipped.
  ParameterSet<double> pe;
  pe.add_parameter("bias", T64(Shape{1}, 1.0, true), true);
  Sgd<double> decay(pe.parameters(), {.lr = 0.1, .momentum = 0.0, .weight_decay = 0.5});
  mul_scalar(sum(pe.parameters()[0].tensor), 0.0).backward();
  decay.step();
  CHECK(pe.parameters()[0].tensor.values()[0] == 1.0);
}

TEST_CASE("optimizers converge on a quadratic bowl") {
  auto bowl = [](auto& optimizer, ParameterSet<double>& ps) {
    for (int step = 0; step < 200; ++step) {
      ps.zero_grad();
      const T64& theta = ps.parameters()[0].tensor;
      sum(matmul_nt(reshape(theta, Shape{1, 1}), reshape(theta, Shape{1, 1}))).backward();
      optimizer.step();
    }
    return std::abs(ps.parameters()[0].tensor.values()[0]);
  };
  ParameterSet<double> a;
  a.add_parameter("theta", T64(Shape{1}, 1.0, true), false);
  Sgd<double> sgd(a.parameters(), {.lr = 0.1, .momentum = 0.9, .weight_decay = 0.0});
  CHECK(bowl(sgd, a) < 1e-3);

  ParameterSet<double> b;
  b.add_parameter("theta", T64(Shape{1}, 1.0, true), false);
  Adam<double> adam(b.parameters(), {.lr = 0.05, .weight_decay = 0.0});
  CHECK(bowl(adam, b) < 1e-3);
}

TEST_CASE("cosine schedule") {
  LrSchedule s{.base_lr = 0.01, .total_epochs = 100, .kind = ScheduleKind::Cosine, .min_lr = 0.0};
  CHECK(cosine_lr(s, 0) == doctest::Approx(0.01).epsilon(1e-15));
  CHECK(cosine_lr(s, 100) == doctest::Approx(0.0));
  CHECK(cosine_lr(s, 50) == doctest::Approx(0.005).epsilon(1e-12));
  s.min_lr = 0.001;
  CHECK(cosine_lr(s, 100) == doctest::Approx(0.001).epsilon(1e-12));
  double prev = 1.0;
  for (int e = 0; e <= 100; ++e) {
    const double lr = cosine_lr(s, e);
    CHECK(lr <= prev);
    CHECK(lr >= s.min_lr - 1e-15);
    prev = lr;
  }
  s.kind = ScheduleKind::Constant;
  CHECK(cosine_lr(s, 70) == 0.01);
}
