// Copyright 2026 The MoFlow Workbench Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include "helpers.hpp"
#include "moflow/errors.hpp"
#include "moflow/sampler.hpp"

using namespace moflow;

namespace {

SamplerConfig cfg(int T, double p) {
  SamplerConfig c;
  c.T = T;
  c.p = p;
  return c;
}

Network tiny_teacher(int K) {
  NetworkConfig c;
  c.d_model = 8;
  c.d_ff = 16;
  c.n_heads = 2;
  c.n_enc_layers = 1;
  c.n_dec_blocks = 1;
  c.K = K;
  return Network(c, {3, 2, {"pedestrian"}}, NetworkKind::teacher, 3);
}

Normalizer unit_norm() {
  Normalizer n;
  n.min_disp = {-5.0, -5.0};
  n.max_disp = {5.0, 5.0};
  return n;
}

}  // namespace

TEST_SUITE("sampler") {
  TEST_CASE("time map values") {
    const SamplerConfig c = cfg(100, 5.0);
    CHECK(time_map(0, c) == 0.0);
    CHECK(time_map(100, c) == 1.0);
    CHECK(time_map(75, c) == doctest::Approx(0.225).epsilon(1e-12));
    CHECK(time_map(50, c) == doctest::Approx(0.05).epsilon(1e-15));
    CHECK(time_map(51, c) > 0.2);
    CHECK_THROWS_AS(time_map(101, c), ValidationError);
    CHECK_THROWS_AS(time_map(-1, c), ValidationError);
    CHECK_THROWS_AS(cfg(501, 5.0).validate(), ConfigError);
    CHECK_THROWS_AS(cfg(0, 5.0).validate(), ConfigError);
  }

  TEST_CASE("time map is monotone with exact endpoints") {
    for (int T : {1, 2, 3, 10, 99, 100, 500}) {
      for (double p : {1.0, 5.0}) {
        for (bool continuous : {false, true}) {
          SamplerConfig c = cfg(T, p);
          c.continuous_time_map = continuous;
          CHECK(time_map(0, c) == 0.0);
          CHECK(time_map(T, c) == 1.0);
          for (int n = 0; n < T; ++n) CHECK(time_map(n, c) <= time_map(n + 1, c));
        }
      }
    }
  }

  TEST_CASE("continuous time map has no jump at the midpoint") {
    SamplerConfig c = cfg(100, 5.0);
    c.continuous_time_map = true;
    CHECK(time_map(51, c) - time_map(50, c) < 0.01);
  }

  TEST_CASE("k-shot vector field examples") {
    Rng rng(1);
    const Mat y0 = testutil::random_mat(rng, 6, 4), y1 = testutil::random_mat(rng, 6, 4);
    CHECK(kshot_vector_field(y0, y0, 0.4).cwiseAbs().maxCoeff() == 0.0);
    const double t = 0.37;
    const Mat yt = interpolate(y0, y1, t);
    CHECK((kshot_vector_field(y1, yt, t) - (y1 - y0)).cwiseAbs().maxCoeff() < 1e-12);
    const Mat v = kshot_vector_field(y1, yt, t);
    const Mat v2 = kshot_vector_field(yt + 2.0 * (y1 - yt), yt, t);
    CHECK((v2 - 2.0 * v).cwiseAbs().maxCoeff() < 1e-12);
    CHECK_THROWS(kshot_vector_field(y1, yt, 1.0));
    CHECK_THROWS_AS(kshot_vector_field(y1, yt.topRows(3), 0.2), ShapeError);
  }

  TEST_CASE("oracle integration reproduces the target") {
    Rng rng(2);
    for (int T : {1, 10, 100}) {
      for (double p : {1.0, 5.0}) {
        const Mat y1 = testutil::random_mat(rng, 6, 8);
        const Mat y0 = repeat_rows(testutil::random_mat(rng, 2, 8), 3);
        int calls = 0;
        const Denoiser oracle = [&](const Mat&, double t) {
          CHECK(t < 1.0);
          ++calls;
          return Denoised{y1, Mat::Zero(3, 1)};
        };
        const Integration out = integrate(oracle, y0, cfg(T, p));
        CHECK((out.state - y1).cwiseAbs().maxCoeff() <= 1e-9);
        CHECK(out.nfe == T);
        CHECK(calls == T);
      }
    }
  }

  TEST_CASE("single step lands on the data prediction") {
    Rng rng(3);
    const Mat y1 = testutil::random_mat(rng, 2, 4);
    const Integration out =
        integrate([&](const Mat&, double) { return Denoised{y1, Mat::Zero(1, 1)}; }, Mat::Zero(2, 4), cfg(1, 5.0));
    CHECK(out.state == y1);
  }

  TEST_CASE("non-finite state names the step") {
    int calls = 0;
    const Denoiser bad = [&](const Mat& y, double) {
      Mat s = y;
      if (++calls == 3) s(0, 0) = std::numeric_limits<double>::quiet_NaN();
      return Denoised{s, Mat::Zero(1, 1)};
    };
    try {
      integrate(bad, Mat::Zero(2, 4), cfg(10, 5.0));
      FAIL("expected SamplingFault");
    } catch (const SamplingFault& e) {
      CHECK(std::string(e.what()).find("step 2") != std::string::npos);
    }
  }

  TEST_CASE("softmax") {
    Vec z(3);
    z << 1000.0, 1000.0, 1000.0;
    const Vec p = softmax(z);
    CHECK(p.sum() == doctest::Approx(1.0));
    CHECK(p(0) == doctest::Approx(1.0 / 3));
  }

  TEST_CASE("teacher sampling counts evaluations and is reproducible") {
    Rng rng(4);
    const Network net = tiny_teacher(3);
    const Scene s1 = testutil::random_scene(rng, 2, 3, 2, "s1");
    const Scene s2 = testutil::random_scene(rng, 2, 3, 2, "s2");
    const SamplerConfig c = cfg(20, 5.0);
    const long before = net.forward_calls();
    const auto both = sample_batch(net, {&s1, &s2}, unit_norm(), c, 3, {11, 12});
    CHECK(net.forward_calls() - before == 20);
    REQUIRE(both.size() == 2);
    CHECK(both[0].predictions.rows() == 6);
    CHECK(both[0].predictions.cols() == 4);
    CHECK(both[0].probs.sum() == doctest::Approx(1.0));
    // Batching must not change a scene's result.
    const auto alone = sample_batch(net, {&s2}, unit_norm(), c, 3, {12});
    CHECK((alone[0].predictions - both[1].predictions).cwiseAbs().maxCoeff() < 1e-12);
    const auto again = sample_batch(net, {&s1, &s2}, unit_norm(), c, 3, {11, 12});
    CHECK(again[0].predictions == both[0].predictions);
    CHECK(again[1].logits == both[1].logits);
  }

  TEST_CASE("sample dump round trip") {
    Rng rng(5);
    SceneSample s;
    s.scene_id = "x";
    s.K = 2;
    s.A = 3;
    s.T_f = 4;
    s.predictions = testutil::random_mat(rng, 6, 8);
    s.logits = Vec::Zero(2);
    s.logits << 0.3, -1.2;
    s.probs = softmax(s.logits);
    const SceneSample back = sample_from_json_line(sample_to_json_line(s));
    CHECK(back.scene_id == "x");
    CHECK(back.K == 2);
    CHECK(back.A == 3);
    CHECK(back.T_f == 4);
    CHECK((back.predictions - s.predictions).cwiseAbs().maxCoeff() == 0.0);
    CHECK((back.probs - s.probs).cwiseAbs().maxCoeff() < 1e-15);
    CHECK_THROWS_AS(sample_from_json_line("{\"scene_id\":1}", 7), ParseError);
  }
}
