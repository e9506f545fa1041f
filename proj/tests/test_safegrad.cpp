#include <doctest.h>

#include <cmath>

#include "kfcpo/errors.hpp"
#include "kfcpo/safegrad.hpp"
#include "oracles.hpp"

using namespace kfcpo;
using Eigen::VectorXd;

namespace {

// A ParamSet holding just a log_std vector, the simplest flat container.
ParamSet flat(const VectorXd& v) {
  ParamSet p;
  p.log_std = v;
  return p;
}

ParamSet vec2(double x, double y) {
  VectorXd v(2);
  v << x, y;
  return flat(v);
}

}  // namespace

TEST_CASE("blend weights at reference points") {
  MarginConfig cfg;
  const BlendWeights center = blend_weights(cfg.center(), cfg);
  CHECK(center.cost == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(center.reward == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(blend_weights(cfg.center() + 1000.0 / cfg.steepness, cfg).cost >= 1.0 - 1e-9);
  const double want = 1.0 / (1.0 + std::exp(-0.5 * (25.0 - 20.0)));
  CHECK(blend_weights(25.0, cfg).cost == doctest::Approx(want).epsilon(1e-14));
  CHECK(blend_weights(25.0, cfg).cost == doctest::Approx(0.9241).epsilon(1e-4));
  CHECK(std::isfinite(blend_weights(1e300, cfg).cost));
  CHECK(std::isfinite(blend_weights(-1e300, cfg).cost));
}

TEST_CASE("blend weights sum to one and increase with cost") {
  MarginConfig cfg;
  Rng rng(1);
  double prev_cost = -1.0;
  for (int i = 0; i <= 4000; ++i) {
    const double c = i * 0.01;
    const BlendWeights w = blend_weights(c, cfg);
    CHECK(w.reward + w.cost == 1.0);
    // strictly increasing until the sigmoid saturates in double precision
    if (w.cost < 1.0 - 1e-15) CHECK(w.cost > prev_cost);
    prev_cost = w.cost;
  }
  for (int i = 0; i < 10000; ++i) {
    MarginConfig r;
    r.cost_limit = rng.uniform(0.1, 100.0);
    r.margin_coeff = rng.uniform(0.05, 0.95);
    r.steepness = rng.uniform(0.01, 5.0);
    const BlendWeights w = blend_weights(rng.uniform(0.0, 200.0), r);
    CHECK(w.reward + w.cost == 1.0);
  }
}

TEST_CASE("zones") {
  MarginConfig cfg;
  CHECK(classify_zone(19.9, cfg) == SafetyZone::kSafe);
  CHECK(classify_zone(20.0, cfg) == SafetyZone::kMargin);
  CHECK(classify_zone(25.0, cfg) == SafetyZone::kMargin);
  CHECK(classify_zone(25.1, cfg) == SafetyZone::kUnsafe);
  CHECK(std::string(zone_name(SafetyZone::kUnsafe)) == "unsafe");
  MarginConfig bad;
  bad.margin_coeff = 1.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("projection reference cases") {
  const ParamSet p = project_conflict(vec2(-1, 1), vec2(1, 0), 1e-15);
  CHECK(p.log_std(0) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(p.log_std(1) == doctest::Approx(1.0));

  const ParamSet orth = project_conflict(vec2(0, 3), vec2(2, 0), 1e-8);
  CHECK(orth.log_std.isApprox(VectorXd(vec2(0, 3).log_std), 1e-8));

  Rng rng(2);
  const VectorXd g = oracle::random_vector(rng, 9);
  const ParamSet anti = project_conflict(flat(-g), flat(g), 1e-8);
  CHECK(anti.log_std.norm() <= 1e-8 * g.norm());
}

TEST_CASE("projection residual bound over random pairs") {
  Rng rng(3);
  const double eps = 1e-8;
  for (int i = 0; i < 1000; ++i) {
    const int n = 1 + static_cast<int>(rng.uniform_index(20));
    const double scale = std::pow(10.0, rng.uniform(-4.0, 2.0));
    const VectorXd gr = oracle::random_vector(rng, n, scale);
    const VectorXd gc = oracle::random_vector(rng, n);
    const ParamSet p = project_conflict(flat(gc), flat(gr), eps);
    const double residual = std::abs(p.log_std.dot(gr));
    const double bound = eps * gc.norm() * gr.norm() / (gr.squaredNorm() + eps) + 1e-12;
    CHECK(residual <= bound);
  }
}

TEST_CASE("combine reference cases") {
  const BlendDecision same = combine(vec2(1, 2), vec2(1, 2), BlendWeights{0.3, 0.7}, 1e-8);
  CHECK_FALSE(same.conflict);
  CHECK(same.direction.log_std.isApprox(VectorXd(vec2(1, 2).log_std)));

  const BlendDecision anti = combine(vec2(1, 2), vec2(-1, -2), BlendWeights{0.3, 0.7}, 1e-8);
  CHECK(anti.conflict);
  CHECK((anti.direction.log_std - 0.3 * vec2(1, 2).log_std).norm() <= 1e-8);

  const BlendDecision ex = combine(vec2(1, 0), vec2(-1, 1), BlendWeights{0.3, 0.7}, 1e-15);
  CHECK(ex.conflict);
  CHECK(ex.direction.log_std(0) == doctest::Approx(0.3));
  CHECK(ex.direction.log_std(1) == doctest::Approx(0.7));

  // orthogonal pair: inner product zero goes to the direct blend
  const BlendDecision tie = combine(vec2(1, 0), vec2(0, 1), BlendWeights{0.3, 0.7}, 1e-8);
  CHECK_FALSE(tie.conflict);
  CHECK(tie.direction.log_std == VectorXd(vec2(0.3, 0.7).log_std));

  CHECK_THROWS_AS(combine(vec2(0, 0), vec2(0, 0), BlendWeights{}, 1e-8), DegenerateInputError);
  CHECK_NOTHROW(combine(vec2(0, 0), vec2(0, 1), BlendWeights{}, 1e-8));
  MarginConfig cfg;
  CHECK(combine(vec2(1, 0), vec2(0, 1), 30.0, cfg).zone == SafetyZone::kUnsafe);
}

TEST_CASE("combine geometry over random pairs") {
  Rng rng(4);
  const double eps = 1e-8;
  int conflicts = 0;
  for (int i = 0; i < 1000; ++i) {
    const int n = 2 + static_cast<int>(rng.uniform_index(10));
    const VectorXd gr = oracle::random_vector(rng, n);
    const VectorXd gc = oracle::random_vector(rng, n);
    const double wc = rng.uniform();
    const BlendWeights w{1.0 - wc, wc};
    const BlendDecision d = combine(flat(gr), flat(gc), w, eps);
    const VectorXd& out = d.direction.log_std;
    CHECK(d.conflict == (gr.dot(gc) < 0.0));
    if (!d.conflict) {
      // convex cone: out = w_r g_r + w_c g_c with nonnegative coefficients
      CHECK((out - (w.reward * gr + w.cost * gc)).norm() <= 1e-12 * (gr.norm() + gc.norm()));
    } else {
      ++conflicts;
      CHECK(out.dot(gr) >= -1e-12 * gr.squaredNorm());
      // component along -g_c_hat equals w_r |<g_r, g_c_hat>|
      const VectorXd unit_c = gc.normalized();
      const double along = -out.dot(unit_c);
      const double perp_part = -w.cost * (gc - gc.dot(gr) / (gr.squaredNorm() + eps) * gr).dot(unit_c);
      CHECK(along - perp_part == doctest::Approx(w.reward * std::abs(gr.dot(unit_c))).epsilon(1e-9));
    }
  }
  CHECK(conflicts > 300);
}

TEST_CASE("reward opposition shrinks as the reward weight falls") {
  const VectorXd gr = vec2(1, 0.5).log_std;
  const VectorXd gc = vec2(-1, 1).log_std;
  const VectorXd perp = project_conflict(flat(gc), flat(gr), 1e-12).log_std;
  double prev = 1e300;
  for (double wr = 1.0; wr >= 0.0; wr -= 0.1) {
    const BlendDecision d = combine(flat(gr), flat(gc), BlendWeights{wr, 1.0 - wr}, 1e-12);
    // strip the projected cost part; what remains opposes g_c by w_r |<g_r, g_c_hat>|
    const VectorXd reward_part = d.direction.log_std - (1.0 - wr) * perp;
    const double opposition = std::max(0.0, -reward_part.dot(gc.normalized()));
    CHECK(opposition <= prev + 1e-15);
    prev = opposition;
  }
  CHECK(prev <= 1e-12);
}
