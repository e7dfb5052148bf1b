// Copyright 2026 The MoFlow Workbench Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <numeric>

#include "gradcheck.hpp"
#include "helpers.hpp"
#include "moflow/errors.hpp"
#include "moflow/student.hpp"

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
  c.K = K;
  return c;
}

const DataDims kDims{3, 2, {"pedestrian"}};

// Chamfer written out from the set definition with explicit loops.
double chamfer_oracle(const Mat& a, const Mat& b, int K) {
  const long A = a.rows() / K;
  auto dist = [&](int i, int j) {
    double s = 0;
    for (long r = 0; r < A; ++r) {
      for (long c = 0; c < a.cols(); ++c) s += std::pow(a(i * A + r, c) - b(j * A + r, c), 2);
    }
    return std::sqrt(s);
  };
  double fwd = 0, bwd = 0;
  for (int i = 0; i < K; ++i) {
    double m = 1e300;
    for (int j = 0; j < K; ++j) m = std::min(m, dist(i, j));
    fwd += m;
  }
  for (int j = 0; j < K; ++j) {
    double m = 1e300;
    for (int i = 0; i < K; ++i) m = std::min(m, dist(i, j));
    bwd += m;
  }
  return (fwd + bwd) / K;
}

Mat permute_components(const Mat& x, const std::vector<int>& order, long A) {
  Mat out(x.rows(), x.cols());
  for (size_t k = 0; k < order.size(); ++k) out.middleRows(k * A, A) = x.middleRows(order[k] * A, A);
  return out;
}

DistillExample make_ex(Rng& rng, int A, int K, const std::string& id) {
  const Scene s = testutil::random_scene(rng, A, 3, 2, id);
  DistillExample e;
  e.scene_id = id;
  e.context = build_context(s);
  e.teacher = testutil::random_mat(rng, K * A, 4) * 0.5;
  return e;
}

}  // namespace

TEST_SUITE("student") {
  TEST_CASE("chamfer examples") {
    Rng rng(1);
    const Mat a = testutil::random_mat(rng, 6, 4);
    CHECK(chamfer(a, a, 3) == 0.0);
    Mat p = Mat::Zero(1, 2), q(1, 2);
    q << 3.0, 0.0;
    CHECK(chamfer(p, q, 1) == 6.0);
    CHECK_THROWS_AS(chamfer(a, a.topRows(4), 3), ShapeError);
    CHECK_THROWS_AS(chamfer(a, a, 4), ShapeError);
  }

  TEST_CASE("chamfer matches the oracle, is symmetric and permutation invariant") {
    Rng rng(2);
    for (int trial = 0; trial < 100; ++trial) {
      const int K = 1 + trial % 5, A = 1 + trial % 3;
      const Mat a = testutil::random_mat(rng, K * A, 4), b = testutil::random_mat(rng, K * A, 4);
      const double d = chamfer(a, b, K);
      CHECK(d == doctest::Approx(chamfer_oracle(a, b, K)).epsilon(1e-12));
      CHECK(d == doctest::Approx(chamfer(b, a, K)).epsilon(1e-12));
      std::vector<int> order(K);
      std::iota(order.begin(), order.end(), 0);
      std::shuffle(order.begin(), order.end(), rng);
      CHECK(chamfer(permute_components(a, order, A), b, K) == doctest::Approx(d).epsilon(1e-12));
      CHECK(chamfer(a, permute_components(b, order, A), K) == doctest::Approx(d).epsilon(1e-12));
      CHECK(chamfer(a, permute_components(a, order, A), K) == 0.0);
    }
  }

  TEST_CASE("chamfer batch gradient matches finite differences") {
    Rng rng(3);
    const int K = 3, A = 2;
    const Mat t1 = testutil::random_mat(rng, K * A, 4), t2 = testutil::random_mat(rng, K * A, 4);
    std::vector<Var> in{Var::parameter(testutil::random_mat(rng, 2 * K * A, 4))};
    const double err = testutil::gradcheck(in, [&](const std::vector<Var>& v) {
      return chamfer_batch(v[0], {&t1, &t2}, K, A);
    });
    CHECK(err < 1e-6);
    const double expected =
        (chamfer(t1, in[0].value().topRows(K * A), K) + chamfer(t2, in[0].value().bottomRows(K * A), K)) / 2;
    CHECK(chamfer_batch(in[0], {&t1, &t2}, K, A).item() == doctest::Approx(expected).epsilon(1e-12));
  }

  TEST_CASE("chamfer gradient through the student matches finite differences") {
    Rng rng(4);
    Network net(tiny(2), kDims, NetworkKind::student, 5);
    for (auto& [n, v] : net.params().entries()) v.mutable_value() += 0.2 * testutil::random_mat(rng, v.rows(), v.cols());
    const Scene s = testutil::random_scene(rng, 2, 3, 2);
    const ContextTensor ctx = build_context(s);
    const Mat z = testutil::random_mat(rng, 4, 4);
    const Mat target = testutil::random_mat(rng, 4, 4);
    std::vector<Var> params;
    for (auto& [n, v] : net.params().entries()) params.push_back(v);
    const double err = testutil::gradcheck(params, [&](const std::vector<Var>&) {
      const BatchOutput o = net.forward(net.make_batch({&ctx}, 2, z, {}), Mode::eval, nullptr);
      return chamfer_batch(o.waypoints, {&target}, 2, 2);
    });
    CHECK(err < 1e-4);
  }

  TEST_CASE("selection picks an exact candidate and ignores distance scale") {
    Rng rng(6);
    Network net(tiny(2), kDims, NetworkKind::student, 7);
    DistillExample ex = make_ex(rng, 2, 2, "e");
    DistillConfig cfg;
    cfg.m = 5;
    // Reproduce the candidate draws of distill_step and plant candidate 3 as the target.
    Rng replay(99);
    std::vector<Mat> zs;
    for (int j = 0; j < cfg.m; ++j) zs.push_back(iid_noise(2, 2, 2, replay));
    ex.teacher = net.forward_student(zs[3], 2, ex.context).waypoints;
    AdamW opt(net.params(), {1e-3, 0.9, 0.999, 1e-8, 0.01, 1.0});
    Rng r(99);
    const DistillStepStats s = distill_step(net, opt, {&ex}, cfg, r);
    CHECK(s.pi == std::vector<int>{3});
    CHECK(s.loss < 1e-9);

    // The nearest candidate under scaled distances is the same one.
    const Mat target = testutil::random_mat(rng, 4, 4);
    std::vector<Mat> cands;
    for (int j = 0; j < 6; ++j) cands.push_back(testutil::random_mat(rng, 4, 4));
    auto pick = [&](double scale) {
      int best = 0;
      for (int j = 1; j < 6; ++j) {
        if (scale * chamfer(target, cands[j], 2) < scale * chamfer(target, cands[best], 2)) best = j;
      }
      return best;
    };
    CHECK(pick(1.0) == pick(37.5));
  }

  TEST_CASE("single candidate reduces to regression on that candidate") {
    Rng rng(8);
    Network net(tiny(2), kDims, NetworkKind::student, 9);
    const DistillExample ex = make_ex(rng, 1, 2, "e");
    DistillConfig cfg;
    cfg.m = 1;
    Rng replay(5);
    const Mat z = iid_noise(2, 1, 2, replay);
    const double expected = chamfer(ex.teacher, net.forward_student(z, 2, ex.context).waypoints, 2);
    AdamW opt(net.params(), {1e-3, 0.9, 0.999, 1e-8, 0.01, 1.0});
    Rng r(5);
    const DistillStepStats s = distill_step(net, opt, {&ex}, cfg, r);
    CHECK(s.pi == std::vector<int>{0});
    CHECK(s.loss == doctest::Approx(expected).epsilon(1e-10));
  }

  TEST_CASE("distillation reduces the loss on a frozen batch") {
    Rng rng(11);
    Network reference(tiny(2), kDims, NetworkKind::student, 12);
    std::vector<DistillExample> exs;
    for (int i = 0; i < 4; ++i) {
      DistillExample e = make_ex(rng, 2, 2, "e" + std::to_string(i));
      e.teacher = reference.forward_student(iid_noise(2, 2, 2, rng), 2, e.context).waypoints;
      exs.push_back(std::move(e));
    }
    std::vector<const DistillExample*> batch;
    for (const auto& e : exs) batch.push_back(&e);
    Network net(tiny(2), kDims, NetworkKind::student, 13);
    AdamW opt(net.params(), {3e-3, 0.9, 0.999, 1e-8, 0.01, 1.0});
    DistillConfig cfg;
    Rng r(14);
    std::vector<double> losses;
    for (int i = 0; i < 500; ++i) losses.push_back(distill_step(net, opt, batch, cfg, r).loss);
    const double first = losses.front();
    double last = 0;
    for (int i = 480; i < 500; ++i) last += losses[i] / 20;
    CHECK(last < 0.2 * first);
  }

  TEST_CASE("distill logs histograms over the candidate indices") {
    Rng rng(15);
    std::vector<DistillExample> exs;
    for (int i = 0; i < 6; ++i) exs.push_back(make_ex(rng, 1, 2, "e" + std::to_string(i)));
    Network net(tiny(2), kDims, NetworkKind::student, 16);
    DistillConfig cfg;
    cfg.m = 4;
    cfg.batch_size = 3;
    cfg.max_steps = 4;
    cfg.log_every = 2;
    const auto log = distill(net, exs, cfg);
    REQUIRE(log.size() == 2);
    CHECK(log[1].step == 4);
    CHECK(log[0].pi_histogram.size() == 4);
    CHECK(std::accumulate(log[0].pi_histogram.begin(), log[0].pi_histogram.end(), 0L) == 6);
  }

  TEST_CASE("student sampling is one evaluation, deterministic, uniform probabilities") {
    Rng rng(17);
    const Network net(tiny(3), kDims, NetworkKind::student, 18);
    const Scene s = testutil::random_scene(rng, 2, 3, 2, "s");
    Normalizer norm;
    norm.min_disp = {-5, -5};
    norm.max_disp = {5, 5};
    const long before = net.forward_calls();
    Rng r1(3), r2(3);
    const SceneSample a = student_sample(net, s, norm, 3, r1);
    CHECK(net.forward_calls() - before == 1);
    const SceneSample b = student_sample(net, s, norm, 3, r2);
    CHECK(a.predictions == b.predictions);
    CHECK(a.predictions.rows() == 6);
    CHECK(a.predictions.cols() == 4);
    for (int k = 0; k < 3; ++k) CHECK(a.probs(k) == doctest::Approx(1.0 / 3));
  }

  TEST_CASE("sample store") {
    TeacherSampleStore store;
    SceneSample s;
    s.scene_id = "a";
    s.K = 1;
    s.A = 1;
    s.T_f = 1;
    s.predictions = Mat::Zero(1, 2);
    s.logits = Vec::Zero(1);
    s.probs = Vec::Ones(1);
    store.insert(s);
    CHECK(store.contains("a"));
    CHECK_FALSE(store.contains("b"));
    CHECK_THROWS_AS(store.at("b"), DatasetError);
    const auto dir = testutil::temp_dir("store");
    {
      std::ofstream out(dir / "d.jsonl");
      out << sample_to_json_line(s) << "\n\n";
    }
    CHECK(TeacherSampleStore::load(dir / "d.jsonl").size() == 1);
    CHECK_THROWS_AS(TeacherSampleStore::load(dir / "missing.jsonl"), DatasetError);
  }
}
