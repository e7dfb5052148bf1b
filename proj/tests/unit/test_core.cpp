// Copyright 2026 The MoFlow Workbench Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include "helpers.hpp"
#include "moflow/core.hpp"
#include "moflow/errors.hpp"

using namespace moflow;

namespace {

Scene line_scene() {
  Scene s;
  s.scene_id = "line";
  s.dt = 1.0;
  s.T_p = 3;
  s.T_f = 2;
  s.agents.push_back({"0", "pedestrian", {{0, 0}, {1, 0}, {2, 0}}, {{3, 0}, {4, 0}}});
  return s;
}

}  // namespace

TEST_SUITE("core") {
  TEST_CASE("stationary agent has zero relative and velocity features") {
    Scene s = line_scene();
    s.agents[0].past = {{3, 4}, {3, 4}, {3, 4}};
    const ContextTensor c = build_context(s);
    REQUIRE(c.values.rows() == 1);
    REQUIRE(c.values.cols() == 18);
    for (int f = 0; f < 3; ++f) {
      CHECK(c.values(0, 6 * f + 0) == 3.0);
      CHECK(c.values(0, 6 * f + 1) == 4.0);
      for (int j = 2; j < 6; ++j) CHECK(c.values(0, 6 * f + j) == 0.0);
    }
  }

  TEST_CASE("velocity features are backward differences over dt") {
    const ContextTensor c = build_context(line_scene());
    const double expected[3][2] = {{0, 0}, {1, 0}, {1, 0}};
    for (int f = 0; f < 3; ++f) {
      CHECK(c.values(0, 6 * f + 4) == expected[f][0]);
      CHECK(c.values(0, 6 * f + 5) == expected[f][1]);
    }
    // relative to the last observed frame (2, 0)
    CHECK(c.values(0, 2) == -2.0);
    CHECK(c.values(0, 6 * 2 + 2) == 0.0);
    Scene slow = line_scene();
    slow.dt = 0.5;
    CHECK(build_context(slow).values(0, 6 + 4) == 2.0);
  }

  TEST_CASE("context shape for two agents") {
    Rng rng(1);
    const Scene s = testutil::random_scene(rng, 2, 5, 4);
    const ContextTensor c = build_context(s);
    CHECK(c.values.rows() == 2);
    CHECK(c.values.cols() == 6 * 5);
    CHECK(c.agent_types.size() == 2);
  }

  TEST_CASE("malformed scene is rejected") {
    Scene s = line_scene();
    s.agents[0].past.pop_back();
    CHECK_THROWS_AS(build_context(s), ValidationError);
    Scene empty = line_scene();
    empty.agents.clear();
    CHECK_THROWS_AS(validate_scene(empty), ValidationError);
    Scene nan = line_scene();
    nan.agents[0].future[0][0] = std::nan("");
    CHECK_THROWS_AS(validate_scene(nan), ValidationError);
  }

  TEST_CASE("normalization endpoints and midpoint") {
    const Scene s = line_scene();
    Normalizer n{{-2.0, -1.0}, {4.0, 3.0}};
    Mat fut(1, 4);
    // last observed (2, 0); rel = min and rel = midpoint
    fut << 0.0, -1.0, 3.0, 1.0;
    const Mat z = normalize_future(fut, s, n);
    CHECK(z(0, 0) == -1.0);
    CHECK(z(0, 1) == -1.0);
    CHECK(z(0, 2) == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(z(0, 3) == doctest::Approx(0.0).epsilon(1e-15));
  }

  TEST_CASE("normalize and denormalize are inverse") {
    Rng rng(5);
    for (int trial = 0; trial < 50; ++trial) {
      const Scene s = testutil::random_scene(rng, 3, 4, 6);
      const Normalizer n{{-7.0, -3.0}, {5.0, 9.5}};
      const Mat y = future_matrix(s);
      const Mat back = denormalize_future(normalize_future(y, s, n), s, n);
      CHECK((back - y).cwiseAbs().maxCoeff() <= 1e-9);
      const Mat z = testutil::random_mat(rng, 3, 12);
      CHECK((normalize_future(denormalize_future(z, s, n), s, n) - z).cwiseAbs().maxCoeff() <= 1e-9);
    }
  }

  TEST_CASE("values outside the training range are not clipped") {
    const Scene s = line_scene();
    const Normalizer n{{0.0, 0.0}, {1.0, 1.0}};
    Mat fut(1, 4);
    fut << 12.0, 5.0, 2.0, 0.0;
    const Mat z = normalize_future(fut, s, n);
    CHECK(z(0, 0) == doctest::Approx(19.0));
    CHECK(z(0, 1) == doctest::Approx(9.0));
  }

  TEST_CASE("degenerate normalizer is a configuration error") {
    const Scene s = line_scene();
    const Normalizer n{{1.0, 0.0}, {1.0, 2.0}};
    CHECK_THROWS_AS(n.check(), ConfigError);
    CHECK_THROWS_AS(normalize_future(future_matrix(s), s, n), ConfigError);
  }

  TEST_CASE("interpolate endpoints, midpoint and affinity") {
    Rng rng(2);
    const Mat y0 = testutil::random_mat(rng, 4, 6);
    const Mat y1 = testutil::random_mat(rng, 4, 6);
    CHECK(interpolate(y0, y1, 0.0) == y0);
    CHECK(interpolate(y0, y1, 1.0) == y1);
    CHECK(interpolate(Mat::Zero(2, 2), Mat::Constant(2, 2, 2.0), 0.5) == Mat::Constant(2, 2, 1.0));
    const double a = -1.7, t = 0.3;
    CHECK((interpolate(a * y0, a * y1, t) - a * interpolate(y0, y1, t)).cwiseAbs().maxCoeff() <= 1e-12);
    // (Y1 - Y^t) / (1 - t) recovers Y1 - Y0
    const Mat yt = interpolate(y0, y1, t);
    CHECK((((y1 - yt) / (1 - t)) - (y1 - y0)).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK_THROWS_AS(interpolate(y0, Mat::Zero(3, 6), t), ShapeError);
    CHECK_THROWS(interpolate(y0, y1, 1.5));
  }

  TEST_CASE("tied noise repeats one draw over K") {
    Rng rng(9);
    const Mat n = tied_noise(5, 3, 4, rng);
    REQUIRE(n.rows() == 15);
    for (int k = 1; k < 5; ++k) CHECK(n.middleRows(3 * k, 3) == n.topRows(3));
    Rng a(42), b(42);
    CHECK(tied_noise(2, 2, 3, a) == tied_noise(2, 2, 3, b));
  }

  TEST_CASE("tied noise is standard normal") {
    Rng rng(123);
    double sum = 0.0, sq = 0.0;
    const int n = 100000;
    for (int i = 0; i < n / 10; ++i) {
      const Mat m = tied_noise(3, 1, 5, rng);  // 10 fresh values per draw
      for (int j = 0; j < 10; ++j) {
        sum += m(0, j);
        sq += m(0, j) * m(0, j);
      }
    }
    const double mean = sum / n;
    const double var = sq / n - mean * mean;
    CHECK(std::abs(mean) < 0.02);
    CHECK(std::abs(var - 1.0) < 0.05);
  }

  TEST_CASE("repeat_rows and iid noise layout") {
    Rng rng(4);
    const Mat block = testutil::random_mat(rng, 2, 3);
    const Mat r = repeat_rows(block, 3);
    REQUIRE(r.rows() == 6);
    CHECK(r.middleRows(4, 2) == block);
    const Mat iid = iid_noise(2, 2, 3, rng);
    CHECK(iid.rows() == 4);
    CHECK(iid.topRows(2) != iid.bottomRows(2));
  }

  TEST_CASE("batches group equal agent counts") {
    Rng rng(3);
    const std::vector<int> counts{1, 2, 1, 2, 2, 3, 1};
    const auto batches = make_batches(counts, 2, rng);
    std::vector<int> seen(counts.size(), 0);
    for (const auto& b : batches) {
      CHECK(b.size() <= 2);
      for (int i : b) {
        ++seen[i];
        CHECK(counts[i] == counts[b.front()]);
      }
    }
    for (int s : seen) CHECK(s == 1);
  }
}
