// Copyright 2026 The MoFlow Workbench Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>

#include "gradcheck.hpp"
#include "helpers.hpp"
#include "moflow/errors.hpp"
#include "moflow/teacher.hpp"

using namespace moflow;
using ag::Var;

namespace {

NetworkConfig tiny(int K) {
  NetworkConfig c;
  c.d_model = 8;
  c.d_ff = 16;
  c.n_heads = 2;
  c.n_enc_layers = 1;
  c.n_dec_blocks = 1;
  c.dropout = 0.0;
  c.K = K;
  return c;
}

/// Independent oracle for the per-scene loss: brute-force argmin over
/// squared distances and a log-sum-exp cross-entropy.
double loss_oracle(const Mat& S, const Vec& z, const Mat& y1, int K) {
  const long A = y1.rows();
  int best = 0;
  double best_d = 1e300;
  for (int k = 0; k < K; ++k) {
    double d = 0;
    for (long a = 0; a < A; ++a) {
      for (long c = 0; c < y1.cols(); ++c) d += std::pow(S(k * A + a, c) - y1(a, c), 2);
    }
    if (d < best_d) {
      best_d = d;
      best = k;
    }
  }
  const double mx = z.maxCoeff();
  double se = 0;
  for (int k = 0; k < K; ++k) se += std::exp(z(k) - mx);
  return best_d + (mx + std::log(se) - z(best));
}

std::vector<Example> tiny_examples(Rng& rng, int n, int A) {
  std::vector<Example> out;
  for (int i = 0; i < n; ++i) {
    Example e;
    const Scene s = testutil::random_scene(rng, A, 3, 2, "e" + std::to_string(i));
    e.scene_id = s.scene_id;
    e.context = build_context(s);
    e.target = testutil::random_mat(rng, A, 4) * 0.5;
    out.push_back(e);
  }
  return out;
}

}  // namespace

TEST_SUITE("teacher") {
  TEST_CASE("logistic values and time sampling") {
    CHECK(logistic(0.0) == 0.5);
    CHECK(logistic(-0.5) == doctest::Approx(0.377541).epsilon(1e-6));
    Rng rng(1);
    std::vector<double> ts;
    for (int i = 0; i < 100000; ++i) {
      const double t = sample_time(TimeSchedule{}, rng);
      REQUIRE(t > 0.0);
      REQUIRE(t < 1.0);
      ts.push_back(t);
    }
    std::nth_element(ts.begin(), ts.begin() + ts.size() / 2, ts.end());
    CHECK(std::abs(ts[ts.size() / 2] - 0.3775) < 0.01);
    TimeSchedule bad{0.0, 0.0};
    CHECK_THROWS_AS(bad.validate(), ConfigError);
  }

  TEST_CASE("closest index examples") {
    Rng rng(2);
    const Mat y1 = testutil::random_mat(rng, 2, 4);
    Mat S(6, 4);
    S.topRows(2) = y1;
    S.middleRows(2, 2) = y1;
    S.bottomRows(2) = testutil::random_mat(rng, 2, 4);
    CHECK(closest_index(S, y1, 3) == 0);  // exact match, tie resolved to the lowest index

    Mat y(1, 2);
    y << 0, 0;
    Mat S2(2, 2);
    S2 << 1, 0, 2, 0;  // squared distances 1 and 4
    CHECK(closest_index(S2, y, 2) == 0);
    Mat S3(2, 2);
    S3 << 2, 0, 0, 1;
    CHECK(closest_index(S3, y, 2) == 1);
    CHECK(closest_index(S3 * 7.5, y, 2) == 1);  // residual scaling
  }

  TEST_CASE("fm loss examples") {
    Mat y1(1, 2);
    y1 << 0.3, -0.2;
    Mat S(2, 2);
    S << 0.3, -0.2, 1.0, 1.0;
    PredictionSet p{2, 1, S, Vec::Zero(2)};
    FmLossTerms l = fm_loss(p, y1);
    CHECK(l.regression == 0.0);
    CHECK(l.total == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    p.logits << 20.0, 0.0;
    l = fm_loss(p, y1);
    CHECK(l.regression == 0.0);
    CHECK(l.ce == doctest::Approx(2.0611536e-9).epsilon(1e-6));
    CHECK(l.j_star == 0);

    PredictionSet single{1, 1, S.topRows(1), Vec::Constant(1, 3.0)};
    CHECK(fm_loss(single, y1).ce == 0.0);
  }

  TEST_CASE("fm loss agrees with the oracle and is nonnegative") {
    Rng rng(3);
    for (int trial = 0; trial < 200; ++trial) {
      const int K = 1 + trial % 4, A = 1 + trial % 3;
      const Mat S = testutil::random_mat(rng, K * A, 6);
      const Mat y1 = testutil::random_mat(rng, A, 6);
      Vec z(K);
      for (int k = 0; k < K; ++k) z(k) = 3 * standard_normal(rng);
      const FmLossTerms l = fm_loss({K, A, S, z}, y1);
      CHECK(l.total >= 0.0);
      CHECK(l.total == doctest::Approx(loss_oracle(S, z, y1, K)).epsilon(1e-12));
    }
  }

  TEST_CASE("batched loss gradient matches finite differences") {
    Rng rng(4);
    const int K = 3, A = 2;
    const Mat y1a = testutil::random_mat(rng, A, 4), y1b = testutil::random_mat(rng, A, 4);
    std::vector<Var> in{Var::parameter(testutil::random_mat(rng, 2 * K * A, 4)),
                        Var::parameter(testutil::random_mat(rng, 2 * K, 1))};
    const double err = testutil::gradcheck(in, [&](const std::vector<Var>& v) {
      return fm_loss_batch(v[0], v[1], {&y1a, &y1b}, K, A).loss;
    });
    CHECK(err < 1e-6);
    const FmBatchLoss b = fm_loss_batch(in[0], in[1], {&y1a, &y1b}, K, A);
    const double expected = (fm_loss({K, A, in[0].value().topRows(K * A), in[1].value().topRows(K)}, y1a).total +
                             fm_loss({K, A, in[0].value().bottomRows(K * A), in[1].value().bottomRows(K)}, y1b).total) /
                            2;
    CHECK(b.loss.item() == doctest::Approx(expected).epsilon(1e-12));
  }

  TEST_CASE("loss gradient through the teacher matches finite differences") {
    Rng rng(5);
    Network net(tiny(2), {3, 2, {"pedestrian"}}, NetworkKind::teacher, 6);
    for (auto& [n, v] : net.params().entries()) v.mutable_value() += 0.2 * testutil::random_mat(rng, v.rows(), v.cols());
    const Scene s = testutil::random_scene(rng, 2, 3, 2);
    const ContextTensor ctx = build_context(s);
    const Mat noisy = testutil::random_mat(rng, 4, 4);
    const Mat y1 = testutil::random_mat(rng, 2, 4);
    std::vector<Var> params;
    for (auto& [n, v] : net.params().entries()) params.push_back(v);
    const double err = testutil::gradcheck(params, [&](const std::vector<Var>&) {
      const BatchInput in = net.make_batch({&ctx}, 2, noisy, {0.35});
      const BatchOutput o = net.forward(in, Mode::eval, nullptr);
      return fm_loss_batch(o.waypoints, o.logits, {&y1}, 2, 2).loss;
    });
    CHECK(err < 1e-4);
  }

  TEST_CASE("loss equivalence identity") {
    Rng rng(6);
    for (double t : {0.3, 0.999}) {
      const Mat v = testutil::random_mat(rng, 4, 6), y0 = testutil::random_mat(rng, 4, 6),
                y1 = testutil::random_mat(rng, 4, 6);
      CHECK(loss_equivalence_check(v, y0, y1, t).relative <= (t < 0.5 ? 1e-9 : 1e-6));
      const EquivalenceResidual exact = loss_equivalence_check(y1 - y0, y0, y1, t);
      CHECK(exact.velocity_form == 0.0);
      CHECK(exact.data_form <= 1e-20);
    }
  }

  TEST_CASE("learning rate schedule") {
    CHECK(scheduled_learning_rate(1.0, 0, 10, 100, true) == doctest::Approx(0.1));
    CHECK(scheduled_learning_rate(1.0, 9, 10, 100, true) == doctest::Approx(1.0));
    CHECK(scheduled_learning_rate(1.0, 100, 10, 100, true) == doctest::Approx(0.1));
    CHECK(scheduled_learning_rate(1.0, 50, 10, 100, false) == 1.0);
  }

  TEST_CASE("training reduces the loss on a frozen batch and is deterministic") {
    Rng rng(7);
    const auto examples = tiny_examples(rng, 8, 2);
    std::vector<const Example*> batch;
    for (const auto& e : examples) batch.push_back(&e);
    auto run = [&](int steps) {
      Network net(tiny(2), {3, 2, {"pedestrian"}}, NetworkKind::teacher, 8);
      AdamW opt(net.params(), {3e-3, 0.9, 0.999, 1e-8, 0.01, 1.0});
      TrainConfig cfg;
      Rng r(9);
      std::vector<double> losses;
      for (int i = 0; i < steps; ++i) losses.push_back(train_step(net, opt, batch, TimeSchedule{}, cfg, r).loss);
      return losses;
    };
    const auto a = run(200);
    CHECK(a.back() < a.front());
    double first = 0, last = 0;
    for (int i = 0; i < 20; ++i) {
      first += a[i];
      last += a[a.size() - 1 - i];
    }
    CHECK(last < first);
    CHECK(run(30) == std::vector<double>(a.begin(), a.begin() + 30));
  }

  TEST_CASE("train_teacher emits log records and checkpoints") {
    Rng rng(10);
    const auto examples = tiny_examples(rng, 10, 1);
    Network net(tiny(1), {3, 2, {"pedestrian"}}, NetworkKind::teacher, 11);
    TrainConfig cfg;
    cfg.batch_size = 4;
    cfg.max_steps = 12;
    cfg.log_every = 5;
    cfg.checkpoint_every = 6;
    cfg.warmup_steps = 2;
    std::vector<long> checkpoints;
    TrainHooks hooks;
    hooks.on_checkpoint = [&](long s) { checkpoints.push_back(s); };
    const auto log = train_teacher(net, examples, TimeSchedule{}, cfg, hooks);
    REQUIRE(log.size() == 3);
    CHECK(log[0].step == 5);
    CHECK(log[2].step == 12);
    for (const auto& r : log) CHECK(r.ce == 0.0);  // K = 1
    CHECK(checkpoints == std::vector<long>{6, 12});
  }

  TEST_CASE("invalid train config lists every problem") {
    TrainConfig c;
    c.batch_size = 0;
    c.learning_rate = -1;
    c.max_steps = 0;
    try {
      c.validate();
      FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
      const std::string m = e.what();
      CHECK(m.find("batch_size") != std::string::npos);
      CHECK(m.find("learning_rate") != std::string::npos);
      CHECK(m.find("max_steps") != std::string::npos);
    }
  }
}
