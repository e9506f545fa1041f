#include "kfcpo/kfac.hpp"

#include <algorithm>
#include <string>

#include "kfcpo/errors.hpp"

namespace kfcpo {

namespace {

void decompose(const Eigen::MatrixXd& m, Eigen::MatrixXd& q, Eigen::VectorXd& lambda) {
  if (!m.allFinite()) throw NumericError("non-finite Kronecker factor");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(m);
  if (solver.info() != Eigen::Success) throw NumericError("eigendecomposition failed");
  q = solver.eigenvectors();
  // rounding can leave PSD factors with tiny negative eigenvalues
  lambda = solver.eigenvalues().cwiseMax(0.0);
}

}  // namespace

KfacLayerState::KfacLayerState(int in_dim, int out_dim)
    : a(Eigen::MatrixXd::Zero(in_dim + 1, in_dim + 1)),
      g(Eigen::MatrixXd::Zero(out_dim, out_dim)) {}

CurvatureSet::CurvatureSet(std::span<const LayerSpec> specs, int log_std_dim,
                           ObjectiveTag tag, KfacOptions options)
    : log_std_dim_(log_std_dim), tag_(tag), options_(options) {
  validate_specs(specs);
  if (!(options_.decay > 0.0 && options_.decay < 1.0)) {
    throw ConfigError("kfac.decay must lie in (0, 1)");
  }
  if (options_.damping < 0.0) throw ConfigError("kfac.damping must be >= 0");
  for (const auto& s : specs) layers_.emplace_back(s.in_dim, s.out_dim);
}

void CurvatureSet::update_stats(std::span<const LayerStats> batch_stats) {
  if (batch_stats.size() != layers_.size()) {
    throw ConfigError("stats layer count does not match curvature set");
  }
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& st = batch_stats[l];
    auto& layer = layers_[l];
    if (st.activations.rows() != layer.a.rows() || st.deltas.rows() != layer.g.rows()) {
      throw ConfigError("stats dimension mismatch at layer " + std::to_string(l));
    }
    const Eigen::Index n = st.activations.cols();
    if (n == 0 || st.deltas.cols() != n) throw ConfigError("empty or ragged stats batch");
    const double inv_n = 1.0 / static_cast<double>(n);
    Eigen::MatrixXd a_new = inv_n * st.activations * st.activations.transpose();
    Eigen::MatrixXd g_new = inv_n * st.deltas * st.deltas.transpose();
    const double eps = options_.decay;
    layer.a = (1.0 - eps) * layer.a + eps * a_new;
    layer.g = (1.0 - eps) * layer.g + eps * g_new;
    // exact symmetry, the products above agree only up to rounding
    layer.a = 0.5 * (layer.a + layer.a.transpose()).eval();
    layer.g = 0.5 * (layer.g + layer.g.transpose()).eval();
    ++layer.stats_step;
    ++layer.updates_since_refresh;
    layer.eig_stale = true;
  }
}

void CurvatureSet::refresh_eig() {
  for (auto& layer : layers_) {
    if (layer.stats_step == 0) throw UsageError("refresh_eig before any stats update");
    decompose(layer.a, layer.q_a, layer.lambda_a);
    decompose(layer.g, layer.q_g, layer.lambda_g);
    layer.has_eig = true;
    layer.eig_stale = false;
    layer.updates_since_refresh = 0;
  }
}

bool CurvatureSet::ready() const {
  for (const auto& layer : layers_) {
    if (!layer.has_eig) return false;
  }
  return true;
}

int CurvatureSet::staleness() const {
  int worst = 0;
  for (const auto& layer : layers_) worst = std::max(worst, layer.updates_since_refresh);
  return worst;
}

void CurvatureSet::check_shape(const ParamSet& p) const {
  if (p.layers.size() != layers_.size() || p.log_std.size() != log_std_dim_) {
    throw ConfigError("ParamSet does not match curvature set");
  }
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    if (p.layers[l].weight.rows() != layers_[l].out_dim() ||
        p.layers[l].weight.cols() != layers_[l].in_dim()) {
      throw ConfigError("ParamSet layer " + std::to_string(l) + " does not match curvature set");
    }
  }
}

ParamSet CurvatureSet::apply_inverse(const ParamSet& grads) const {
  check_shape(grads);
  ParamSet out = grads;
  const double d = options_.damping;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& layer = layers_[l];
    if (!layer.has_eig) throw StaleStateError("no eigendecomposition for layer " + std::to_string(l));
    if (layer.updates_since_refresh > options_.max_stale_updates) {
      throw StaleStateError("eigendecomposition of layer " + std::to_string(l) + " is " +
                            std::to_string(layer.updates_since_refresh) + " updates old");
    }
    const Eigen::MatrixXd v = grads.layers[l].augmented();
    // rotate into the eigenbases, scale, rotate back
    Eigen::MatrixXd rotated = layer.q_g.transpose() * v * layer.q_a;
    const Eigen::VectorXd inv_g = (layer.lambda_g.array() + d).inverse();
    const Eigen::VectorXd inv_a = (layer.lambda_a.array() + d).inverse();
    rotated = inv_g.asDiagonal() * rotated * inv_a.asDiagonal();
    out.layers[l].set_augmented(layer.q_g * rotated * layer.q_a.transpose());
  }
  out.log_std = grads.log_std / (kLogStdFisher + d);
  return out;
}

double CurvatureSet::quadratic_form(const ParamSet& v) const {
  check_shape(v);
  double total = 0.0;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const Eigen::MatrixXd m = v.layers[l].augmented();
    // vec(V)^T (A (x) G) vec(V) = <V, G V A>
    total += m.cwiseProduct(layers_[l].g * m * layers_[l].a).sum();
  }
  return total + kLogStdFisher * v.log_std.squaredNorm();
}

}  // namespace kfcpo
