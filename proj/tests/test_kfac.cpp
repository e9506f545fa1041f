#include <doctest.h>

#include "kfcpo/errors.hpp"
#include "kfcpo/kfac.hpp"
#include "oracles.hpp"

using namespace kfcpo;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

std::vector<LayerSpec> single_layer(int in, int out) {
  return {{in, out, Activation::kIdentity}};
}

// Sets the factors directly and refreshes.
CurvatureSet with_factors(int in, int out, const MatrixXd& a, const MatrixXd& g, double damping,
                          int log_std_dim = 0) {
  KfacOptions opts;
  opts.damping = damping;
  CurvatureSet set(single_layer(in, out), log_std_dim, ObjectiveTag::kReward, opts);
  auto& layer = set.mutable_layers()[0];
  layer.a = a;
  layer.g = g;
  layer.stats_step = 1;
  set.refresh_eig();
  return set;
}

LayerStats random_stats(Rng& rng, int in, int out, int n) {
  LayerStats s;
  s.activations = oracle::random_matrix(rng, in + 1, n);
  s.activations.row(in).setOnes();
  s.deltas = oracle::random_matrix(rng, out, n);
  return s;
}

}  // namespace

TEST_CASE("first update keeps decay times the new statistics") {
  Rng rng(1);
  CurvatureSet set(single_layer(3, 2), 0, ObjectiveTag::kReward);
  const LayerStats s = random_stats(rng, 3, 2, 16);
  set.update_stats(std::span<const LayerStats>(&s, 1));
  const MatrixXd a_new = s.activations * s.activations.transpose() / 16.0;
  const MatrixXd g_new = s.deltas * s.deltas.transpose() / 16.0;
  CHECK((set.layers()[0].a - 0.95 * a_new).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK((set.layers()[0].g - 0.95 * g_new).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK(set.layers()[0].eig_stale);
}

TEST_CASE("sparse unit activation gives corner entries") {
  CurvatureSet set(single_layer(3, 1), 0, ObjectiveTag::kReward);
  LayerStats s;
  s.activations = MatrixXd::Zero(4, 5);
  s.activations.row(0).setOnes();
  s.activations.row(3).setOnes();
  s.deltas = MatrixXd::Ones(1, 5);
  set.update_stats(std::span<const LayerStats>(&s, 1));
  MatrixXd want = MatrixXd::Zero(4, 4);
  want(0, 0) = want(0, 3) = want(3, 0) = want(3, 3) = 0.95;
  CHECK(set.layers()[0].a.isApprox(want));
}

TEST_CASE("two-step EMA matches the closed-form expansion") {
  Rng rng(2);
  CurvatureSet set(single_layer(2, 3), 0, ObjectiveTag::kReward);
  const double eps = 0.95;
  MatrixXd init_a = oracle::random_psd(rng, 3);
  set.mutable_layers()[0].a = init_a;
  const LayerStats s1 = random_stats(rng, 2, 3, 9);
  const LayerStats s2 = random_stats(rng, 2, 3, 9);
  set.update_stats(std::span<const LayerStats>(&s1, 1));
  set.update_stats(std::span<const LayerStats>(&s2, 1));
  const MatrixXd a1 = s1.activations * s1.activations.transpose() / 9.0;
  const MatrixXd a2 = s2.activations * s2.activations.transpose() / 9.0;
  const MatrixXd want = (1 - eps) * eps * a1 + eps * a2 + (1 - eps) * (1 - eps) * init_a;
  CHECK((set.layers()[0].a - want).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("EMA converges geometrically to a constant target") {
  Rng rng(3);
  CurvatureSet set(single_layer(2, 2), 0, ObjectiveTag::kReward);
  const LayerStats s = random_stats(rng, 2, 2, 7);
  const MatrixXd target = s.activations * s.activations.transpose() / 7.0;
  double prev = target.norm();
  for (int i = 0; i < 8; ++i) {
    set.update_stats(std::span<const LayerStats>(&s, 1));
    const double err = (set.layers()[0].a - target).norm();
    CHECK(err == doctest::Approx(0.05 * prev).epsilon(1e-6));
    prev = err;
  }
}

TEST_CASE("factors stay symmetric and eigendecompositions reconstruct") {
  Rng rng(4);
  const auto specs = make_mlp_specs(4, std::vector<int>{5}, 3);
  CurvatureSet set(specs, 0, ObjectiveTag::kCost);
  for (int step = 0; step < 30; ++step) {
    std::vector<LayerStats> stats = {random_stats(rng, 4, 5, 11), random_stats(rng, 5, 3, 11)};
    set.update_stats(stats);
    for (const auto& l : set.layers()) {
      CHECK((l.a - l.a.transpose()).cwiseAbs().maxCoeff() <= 1e-10);
      CHECK((l.g - l.g.transpose()).cwiseAbs().maxCoeff() <= 1e-10);
      CHECK(l.eig_stale);
    }
    set.refresh_eig();
    for (const auto& l : set.layers()) {
      CHECK_FALSE(l.eig_stale);
      const MatrixXd ra = l.q_a * l.lambda_a.asDiagonal() * l.q_a.transpose();
      const MatrixXd rg = l.q_g * l.lambda_g.asDiagonal() * l.q_g.transpose();
      CHECK((ra - l.a).norm() / l.a.norm() <= 1e-8);
      CHECK((rg - l.g).norm() / l.g.norm() <= 1e-8);
    }
  }
}

TEST_CASE("refresh_eig trivial factors") {
  CurvatureSet id = with_factors(1, 1, MatrixXd::Identity(2, 2), MatrixXd::Identity(1, 1), 0.0);
  const auto& l = id.layers()[0];
  CHECK(l.lambda_a.isApprox(VectorXd::Ones(2)));
  CHECK((l.q_a.transpose() * l.q_a).isApprox(MatrixXd::Identity(2, 2)));

  MatrixXd d = MatrixXd::Zero(2, 2);
  d(0, 0) = 4.0;
  d(1, 1) = 1.0;
  CurvatureSet diag = with_factors(1, 1, d, MatrixXd::Identity(1, 1), 0.0);
  VectorXd eig = diag.layers()[0].lambda_a;
  std::sort(eig.data(), eig.data() + eig.size());
  CHECK(eig(0) == doctest::Approx(1.0));
  CHECK(eig(1) == doctest::Approx(4.0));

  Rng rng(5);
  const MatrixXd psd = oracle::random_psd(rng, 5);
  CurvatureSet rnd = with_factors(4, 1, psd, MatrixXd::Identity(1, 1), 0.0);
  const auto& r = rnd.layers()[0];
  CHECK((r.q_a * r.lambda_a.asDiagonal() * r.q_a.transpose() - psd).norm() / psd.norm() <= 1e-8);
}

TEST_CASE("apply_inverse trivial preconditioners") {
  Rng rng(6);
  CurvatureSet id = with_factors(2, 3, MatrixXd::Identity(3, 3), MatrixXd::Identity(3, 3), 0.0);
  ParamSet g = ParamSet::zeros(single_layer(2, 3));
  g.assign(oracle::random_vector(rng, static_cast<int>(g.size())));
  CHECK(id.apply_inverse(g).flatten().isApprox(g.flatten(), 1e-14));

  CurvatureSet half = with_factors(1, 1, 2.0 * MatrixXd::Identity(2, 2), MatrixXd::Identity(1, 1), 0.0);
  ParamSet h = ParamSet::zeros(single_layer(1, 1));
  h.layers[0].weight(0, 0) = 3.0;
  h.layers[0].bias(0) = -1.0;
  const ParamSet out = half.apply_inverse(h);
  CHECK(out.layers[0].weight(0, 0) == doctest::Approx(1.5));
  CHECK(out.layers[0].bias(0) == doctest::Approx(-0.5));
}

TEST_CASE("apply_inverse and quadratic_form match dense Kronecker algebra") {
  Rng rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    const int in = 1 + static_cast<int>(rng.uniform_index(6));
    const int out = 1 + static_cast<int>(rng.uniform_index(4));
    const double d = trial % 3 == 0 ? 0.0 : 1e-3;
    const MatrixXd a = oracle::random_psd(rng, in + 1);
    const MatrixXd g = oracle::random_psd(rng, out);
    CurvatureSet set = with_factors(in, out, a, g, d, 2);
    ParamSet v = ParamSet::zeros(single_layer(in, out), 2);
    v.assign(oracle::random_vector(rng, static_cast<int>(v.size())));

    const VectorXd flat = oracle::vec(v.layers[0].augmented());
    const MatrixXd ad = a + d * MatrixXd::Identity(in + 1, in + 1);
    const MatrixXd gd = g + d * MatrixXd::Identity(out, out);
    const MatrixXd dense_inv = oracle::kron(ad.inverse(), gd.inverse());
    const VectorXd want = dense_inv * flat;
    const ParamSet got = set.apply_inverse(v);
    CHECK(oracle::rel_err(oracle::vec(got.layers[0].augmented()), want) <= 1e-8);
    CHECK(got.log_std.isApprox(v.log_std / (2.0 + d), 1e-14));

    // round trip through the dense damped block
    const VectorXd back = oracle::kron(ad, gd) * oracle::vec(got.layers[0].augmented());
    CHECK(oracle::rel_err(back, flat) <= 1e-6);

    const double quad = flat.dot(oracle::kron(a, g) * flat) + 2.0 * v.log_std.squaredNorm();
    CHECK(set.quadratic_form(v) == doctest::Approx(quad).epsilon(1e-8));
    CHECK(set.quadratic_form(v) >= 0.0);
    CHECK(set.quadratic_form(v.zeros_like()) == 0.0);
  }
}

TEST_CASE("identity factors give the squared norm") {
  Rng rng(8);
  CurvatureSet id = with_factors(3, 2, MatrixXd::Identity(4, 4), MatrixXd::Identity(2, 2), 1e-3);
  ParamSet v = ParamSet::zeros(single_layer(3, 2));
  v.assign(oracle::random_vector(rng, static_cast<int>(v.size())));
  CHECK(id.quadratic_form(v) == doctest::Approx(squared_norm(v)).epsilon(1e-14));
}

TEST_CASE("damped inverse is finite on rank-one statistics") {
  CurvatureSet set(single_layer(3, 2), 0, ObjectiveTag::kReward);
  LayerStats s;
  s.activations = MatrixXd::Ones(4, 1);
  s.deltas = MatrixXd::Ones(2, 1);
  set.update_stats(std::span<const LayerStats>(&s, 1));
  set.refresh_eig();
  ParamSet g = ParamSet::zeros(single_layer(3, 2));
  g.layers[0].weight.setConstant(1.0);
  CHECK(set.apply_inverse(g).all_finite());
}

TEST_CASE("apply_inverse refuses missing or stale decompositions") {
  Rng rng(9);
  KfacOptions opts;
  opts.max_stale_updates = 3;
  CurvatureSet set(single_layer(2, 2), 0, ObjectiveTag::kReward, opts);
  ParamSet g = ParamSet::zeros(single_layer(2, 2));
  CHECK_THROWS_AS(set.apply_inverse(g), StaleStateError);
  CHECK_THROWS_AS(set.refresh_eig(), UsageError);
  const LayerStats s = random_stats(rng, 2, 2, 5);
  set.update_stats(std::span<const LayerStats>(&s, 1));
  CHECK_THROWS_AS(set.apply_inverse(g), StaleStateError);
  set.refresh_eig();
  for (int i = 0; i < 3; ++i) {
    set.update_stats(std::span<const LayerStats>(&s, 1));
    CHECK_NOTHROW(set.apply_inverse(g));
  }
  CHECK(set.staleness() == 3);
  set.update_stats(std::span<const LayerStats>(&s, 1));
  CHECK_THROWS_AS(set.apply_inverse(g), StaleStateError);
}

TEST_CASE("shape mismatches are rejected") {
  CurvatureSet set = with_factors(2, 2, MatrixXd::Identity(3, 3), MatrixXd::Identity(2, 2), 0.0);
  ParamSet wrong = ParamSet::zeros(single_layer(3, 2));
  CHECK_THROWS_AS(set.apply_inverse(wrong), ConfigError);
  CHECK_THROWS_AS(set.quadratic_form(wrong), ConfigError);
  LayerStats s;
  s.activations = MatrixXd::Ones(5, 2);
  s.deltas = MatrixXd::Ones(2, 2);
  CHECK_THROWS_AS(set.update_stats(std::span<const LayerStats>(&s, 1)), ConfigError);
  KfacOptions bad;
  bad.decay = 1.5;
  CHECK_THROWS_AS(CurvatureSet(single_layer(1, 1), 0, ObjectiveTag::kReward, bad), ConfigError);
}
