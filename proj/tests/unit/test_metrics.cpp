// Copyright 2026 The MoFlow Workbench Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "moflow/errors.hpp"
#include "moflow/metrics.hpp"

using namespace moflow;

namespace {

// Brute-force enumeration of every (agent, k) pair.
struct Oracle {
  double ade, fde, jade, jfde;
};

Oracle brute_force(const Mat& preds, const Mat& gt, int K, int h) {
  const int A = static_cast<int>(gt.rows());
  auto disp = [&](int k, int a, int f) {
    const double dx = preds(k * A + a, 2 * f) - gt(a, 2 * f);
    const double dy = preds(k * A + a, 2 * f + 1) - gt(a, 2 * f + 1);
    return std::sqrt(dx * dx + dy * dy);
  };
  auto ade_of = [&](int k, int a) {
    double s = 0;
    for (int f = 0; f < h; ++f) s += disp(k, a, f);
    return s / h;
  };
  Oracle o{0, 0, 1e300, 1e300};
  for (int a = 0; a < A; ++a) {
    double ba = 1e300, bf = 1e300;
    for (int k = 0; k < K; ++k) {
      ba = std::min(ba, ade_of(k, a));
      bf = std::min(bf, disp(k, a, h - 1));
    }
    o.ade += ba / A;
    o.fde += bf / A;
  }
  for (int k = 0; k < K; ++k) {
    double sa = 0, sf = 0;
    for (int a = 0; a < A; ++a) {
      sa += ade_of(k, a) / A;
      sf += disp(k, a, h - 1) / A;
    }
    o.jade = std::min(o.jade, sa);
    o.jfde = std::min(o.jfde, sf);
  }
  return o;
}

Mat offset(const Mat& gt, double dx, double dy) {
  Mat out = gt;
  for (long c = 0; c < gt.cols(); c += 2) {
    out.col(c).array() += dx;
    out.col(c + 1).array() += dy;
  }
  return out;
}

}  // namespace

TEST_SUITE("metrics") {
  TEST_CASE("brute-force oracle equivalence") {
    Rng rng(1);
    for (int trial = 0; trial < 200; ++trial) {
      const int K = 1 + static_cast<int>(uniform01(rng) * 4);
      const int A = 1 + static_cast<int>(uniform01(rng) * 3);
      const int T_f = 1 + static_cast<int>(uniform01(rng) * 5);
      const int h = 1 + static_cast<int>(uniform01(rng) * T_f);
      const Mat gt = testutil::random_mat(rng, A, 2 * T_f);
      const Mat preds = testutil::random_mat(rng, K * A, 2 * T_f);
      const Oracle o = brute_force(preds, gt, K, h);
      CHECK(std::abs(min_ade(preds, gt, K, h) - o.ade) <= 1e-12);
      CHECK(std::abs(min_fde(preds, gt, K, h) - o.fde) <= 1e-12);
      const JointMetrics j = joint_ade_fde(preds, gt, K, h);
      CHECK(std::abs(j.jade - o.jade) <= 1e-12);
      CHECK(std::abs(j.jfde - o.jfde) <= 1e-12);
    }
  }

  TEST_CASE("constant offset gives exactly five") {
    Rng rng(2);
    const Mat gt = testutil::random_mat(rng, 2, 10);
    const Mat p = offset(gt, 3.0, 4.0);
    CHECK(min_ade(p, gt, 1, 5) == doctest::Approx(5.0).epsilon(1e-14));
    CHECK(min_fde(p, gt, 1, 5) == doctest::Approx(5.0).epsilon(1e-14));
    Mat small = Mat::Zero(1, 2), shifted(1, 2);
    shifted << 3.0, 4.0;
    CHECK(min_ade(shifted, small, 1, 1) == 5.0);
  }

  TEST_CASE("perfect predictions and final-frame semantics") {
    Rng rng(3);
    const Mat gt = testutil::random_mat(rng, 2, 8);
    Mat preds(4, 8);
    preds.topRows(2) = offset(gt, 1.0, 1.0);
    preds.bottomRows(2) = gt;
    CHECK(min_ade(preds, gt, 2, 4) == 0.0);
    Mat wrong_middle = offset(gt, 2.0, 0.0);
    wrong_middle.rightCols(2) = gt.rightCols(2);
    CHECK(min_fde(wrong_middle, gt, 1, 4) == 0.0);
    CHECK(min_ade(wrong_middle, gt, 1, 4) == doctest::Approx(1.5));
  }

  TEST_CASE("extra components never increase the value") {
    Rng rng(4);
    for (int trial = 0; trial < 50; ++trial) {
      const Mat gt = testutil::random_mat(rng, 3, 6);
      const Mat two = testutil::random_mat(rng, 6, 6);
      Mat three(9, 6);
      three.topRows(6) = two;
      three.bottomRows(3) = testutil::random_mat(rng, 3, 6);
      CHECK(min_ade(three, gt, 3, 3) <= min_ade(two, gt, 2, 3));
      CHECK(min_fde(three, gt, 3, 3) <= min_fde(two, gt, 2, 3));
    }
  }

  TEST_CASE("joint metrics bound the marginal ones") {
    Rng rng(5);
    for (int trial = 0; trial < 50; ++trial) {
      const Mat gt = testutil::random_mat(rng, 3, 6);
      const Mat preds = testutil::random_mat(rng, 9, 6);
      const JointMetrics j = joint_ade_fde(preds, gt, 3, 3);
      CHECK(j.jade >= min_ade(preds, gt, 3, 3) - 1e-12);
      CHECK(j.jfde >= min_fde(preds, gt, 3, 3) - 1e-12);
    }
    const Mat gt1 = testutil::random_mat(rng, 1, 6);
    const Mat p1 = testutil::random_mat(rng, 4, 6);
    CHECK(joint_ade_fde(p1, gt1, 4, 3).jade == min_ade(p1, gt1, 4, 3));
  }

  TEST_CASE("agents preferring different components make the joint value strictly larger") {
    Mat gt = Mat::Zero(2, 2);
    Mat preds(4, 2);
    preds << 0, 0,   // k=0, agent 0 exact
        10, 0,       // k=0, agent 1 off by 10
        10, 0,       // k=1, agent 0 off by 10
        0, 0;        // k=1, agent 1 exact
    CHECK(min_ade(preds, gt, 2, 1) == 0.0);
    CHECK(joint_ade_fde(preds, gt, 2, 1).jade == doctest::Approx(5.0));
  }

  TEST_CASE("translation invariance") {
    Rng rng(6);
    const Mat gt = testutil::random_mat(rng, 2, 6);
    const Mat preds = testutil::random_mat(rng, 6, 6);
    const double a = min_ade(preds, gt, 3, 3), f = min_fde(preds, gt, 3, 3);
    CHECK(min_ade(offset(preds, 7.0, -2.0), offset(gt, 7.0, -2.0), 3, 3) == doctest::Approx(a).epsilon(1e-12));
    CHECK(min_fde(offset(preds, 7.0, -2.0), offset(gt, 7.0, -2.0), 3, 3) == doctest::Approx(f).epsilon(1e-12));
  }

  TEST_CASE("shape and horizon errors") {
    const Mat gt = Mat::Zero(2, 6);
    CHECK_THROWS_AS(min_ade(Mat::Zero(5, 6), gt, 3, 1), ShapeError);
    CHECK_THROWS_AS(min_ade(Mat::Zero(6, 6), gt, 3, 4), ShapeError);
    CHECK_THROWS_AS(min_fde(Mat::Zero(6, 6), gt, 3, 0), ShapeError);
    CHECK(horizon_frames({1.0, 2.0}, 0.5, 4) == std::vector<int>{2, 4});
    CHECK_THROWS_AS(horizon_frames({3.0}, 0.5, 4), ConfigError);
  }

  TEST_CASE("evaluate aggregates in scene order and counts evaluations") {
    Rng rng(7);
    std::vector<Scene> scenes;
    for (int i = 0; i < 7; ++i) scenes.push_back(testutil::random_scene(rng, 1 + i % 2, 2, 4, "s" + std::to_string(i)));
    long calls = 0;
    // Every scene is predicted by its ground truth offset by (3, 4) in one of two components.
    Predictor p;
    p.model = "teacher";
    p.K = 2;
    p.forward_calls = [&] { return calls; };
    p.run = [&](const std::vector<const Scene*>& chunk, std::size_t) {
      calls += 3;
      std::vector<SceneSample> out;
      for (const Scene* s : chunk) {
        SceneSample ss;
        ss.scene_id = s->scene_id;
        ss.K = 2;
        ss.A = s->num_agents();
        ss.T_f = s->T_f;
        const Mat gt = future_matrix(*s);
        ss.predictions = Mat(2 * ss.A, gt.cols());
        ss.predictions.topRows(ss.A) = offset(gt, 3.0, 4.0);
        ss.predictions.bottomRows(ss.A) = offset(gt, 30.0, 40.0);
        ss.logits = Vec::Zero(2);
        ss.probs = softmax(ss.logits);
        out.push_back(ss);
      }
      return out;
    };
    EvalOptions opt;
    opt.horizons = {2, 4};
    opt.dt = 0.5;
    opt.chunk_size = 2;
    std::vector<SceneSample> samples;
    const EvalReport r = evaluate(p, scenes, opt, &samples);
    CHECK(r.n_scenes == 7);
    CHECK(r.K == 2);
    REQUIRE(r.horizons.size() == 2);
    CHECK(r.horizons[0].seconds == 1.0);
    for (const auto& h : r.horizons) {
      CHECK(h.min_ade == doctest::Approx(5.0));
      CHECK(h.jfde == doctest::Approx(5.0));
    }
    CHECK(r.nfe_per_sample == 3.0);
    REQUIRE(samples.size() == 7);
    for (int i = 0; i < 7; ++i) CHECK(samples[i].scene_id == "s" + std::to_string(i));

    opt.workers = 3;
    EvalReport r3 = evaluate(p, scenes, opt);
    r3.mean_wallclock_s = r.mean_wallclock_s;
    CHECK(r3 == r);

    CHECK_THROWS_AS(evaluate(p, {}, opt), DatasetError);
  }

  TEST_CASE("report serialization round trip") {
    EvalReport r;
    r.model = "student";
    r.K = 20;
    r.n_scenes = 500;
    r.nfe_per_sample = 1.0;
    r.mean_wallclock_s = 0.0007;
    r.horizons = {{2, 1.0, 0.1, 0.2, 0.3, 0.4}, {8, 4.0, 1.0 / 3.0, 0.7, 0.8, 0.9}};
    CHECK(eval_report_from_json(Json::parse(to_json(r).dump())) == r);
    EvalReport no_time = eval_report_from_json(to_json(r, false));
    CHECK(no_time.mean_wallclock_s == 0.0);
    CHECK(to_json(r, false).dump().find("wallclock") == std::string::npos);
    CHECK(format_table(r).find("minADE") != std::string::npos);
    CHECK_THROWS_AS(eval_report_from_json(Json::parse("{\"model\":3}")), FormatError);
  }
}
