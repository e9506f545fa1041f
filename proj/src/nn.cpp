#include "kfcpo/nn.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "kfcpo/errors.hpp"

namespace kfcpo {

namespace {

constexpr double kLogTwoPi = 1.8378770664093453;  // ln(2*pi)

Eigen::VectorXd log_softmax(const Eigen::VectorXd& logits) {
  const double max_logit = logits.maxCoeff();
  const double lse =
      max_logit + std::log((logits.array() - max_logit).exp().sum());
  return logits.array() - lse;
}

template <typename F>
void for_each_block(ParamSet& a, const ParamSet& b, F&& f) {
  if (!a.same_shape(b)) throw ConfigError("ParamSet shapes differ");
  for (std::size_t l = 0; l < a.layers.size(); ++l) {
    f(a.layers[l].weight, b.layers[l].weight);
    f(a.layers[l].bias, b.layers[l].bias);
  }
  f(a.log_std, b.log_std);
}

}  // namespace

void validate_specs(std::span<const LayerSpec> specs) {
  if (specs.empty()) throw ConfigError("network needs at least one layer");
  for (std::size_t l = 0; l < specs.size(); ++l) {
    const auto& s = specs[l];
    if (s.in_dim < 1 || s.out_dim < 1) {
      throw ConfigError("layer " + std::to_string(l) + " has a non-positive dimension");
    }
    if (l + 1 < specs.size()) {
      if (s.activation == Activation::kIdentity) {
        throw ConfigError("only the final layer may use identity activation");
      }
      if (specs[l + 1].in_dim != s.out_dim) {
        throw ConfigError("layer " + std::to_string(l + 1) +
                          " in_dim does not match previous out_dim");
      }
    }
  }
}

std::vector<LayerSpec> make_mlp_specs(int in_dim, std::span<const int> hidden,
                                      int out_dim) {
  std::vector<LayerSpec> specs;
  int prev = in_dim;
  for (int h : hidden) {
    specs.push_back({prev, h, Activation::kRelu});
    prev = h;
  }
  specs.push_back({prev, out_dim, Activation::kIdentity});
  validate_specs(specs);
  return specs;
}

// ---------------------------------------------------------------- ParamSet

Eigen::MatrixXd LayerParams::augmented() const {
  Eigen::MatrixXd wb(weight.rows(), weight.cols() + 1);
  wb.leftCols(weight.cols()) = weight;
  wb.col(weight.cols()) = bias;
  return wb;
}

void LayerParams::set_augmented(const Eigen::MatrixXd& wb) {
  if (wb.rows() != weight.rows() || wb.cols() != weight.cols() + 1) {
    throw ConfigError("augmented weight shape mismatch");
  }
  weight = wb.leftCols(weight.cols());
  bias = wb.col(weight.cols());
}

ParamSet ParamSet::zeros(std::span<const LayerSpec> specs, int log_std_dim) {
  ParamSet p;
  for (const auto& s : specs) {
    p.layers.push_back({Eigen::MatrixXd::Zero(s.out_dim, s.in_dim),
                        Eigen::VectorXd::Zero(s.out_dim)});
  }
  p.log_std = Eigen::VectorXd::Zero(log_std_dim);
  return p;
}

Eigen::Index ParamSet::size() const {
  Eigen::Index n = log_std.size();
  for (const auto& l : layers) n += l.weight.size() + l.bias.size();
  return n;
}

Eigen::VectorXd ParamSet::flatten() const {
  Eigen::VectorXd flat(size());
  Eigen::Index pos = 0;
  for (const auto& l : layers) {
    flat.segment(pos, l.weight.size()) = l.weight.reshaped();
    pos += l.weight.size();
    flat.segment(pos, l.bias.size()) = l.bias;
    pos += l.bias.size();
  }
  flat.segment(pos, log_std.size()) = log_std;
  return flat;
}

void ParamSet::assign(const Eigen::VectorXd& flat) {
  if (flat.size() != size()) {
    throw ConfigError("flat parameter vector has length " + std::to_string(flat.size()) +
                      ", expected " + std::to_string(size()));
  }
  Eigen::Index pos = 0;
  for (auto& l : layers) {
    l.weight.reshaped() = flat.segment(pos, l.weight.size());
    pos += l.weight.size();
    l.bias = flat.segment(pos, l.bias.size());
    pos += l.bias.size();
  }
  log_std = flat.segment(pos, log_std.size());
}

ParamSet ParamSet::zeros_like() const {
  ParamSet p = *this;
  for (auto& l : p.layers) {
    l.weight.setZero();
    l.bias.setZero();
  }
  p.log_std.setZero();
  return p;
}

bool ParamSet::all_finite() const {
  for (const auto& l : layers) {
    if (!l.weight.allFinite() || !l.bias.allFinite()) return false;
  }
  return log_std.allFinite();
}

bool ParamSet::same_shape(const ParamSet& other) const {
  if (layers.size() != other.layers.size()) return false;
  if (log_std.size() != other.log_std.size()) return false;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    if (layers[l].weight.rows() != other.layers[l].weight.rows() ||
        layers[l].weight.cols() != other.layers[l].weight.cols() ||
        layers[l].bias.size() != other.layers[l].bias.size()) {
      return false;
    }
  }
  return true;
}

ParamSet& ParamSet::operator+=(const ParamSet& other) {
  for_each_block(*this, other, [](auto& x, const auto& y) { x += y; });
  return *this;
}

ParamSet& ParamSet::operator-=(const ParamSet& other) {
  for_each_block(*this, other, [](auto& x, const auto& y) { x -= y; });
  return *this;
}

ParamSet& ParamSet::operator*=(double s) {
  for (auto& l : layers) {
    l.weight *= s;
    l.bias *= s;
  }
  log_std *= s;
  return *this;
}

ParamSet operator+(ParamSet a, const ParamSet& b) { return a += b; }
ParamSet operator-(ParamSet a, const ParamSet& b) { return a -= b; }
ParamSet operator*(double s, ParamSet a) { return a *= s; }

double dot(const ParamSet& a, const ParamSet& b) {
  if (!a.same_shape(b)) throw ConfigError("ParamSet shapes differ");
  double sum = 0.0;
  for (std::size_t l = 0; l < a.layers.size(); ++l) {
    sum += a.layers[l].weight.cwiseProduct(b.layers[l].weight).sum();
    sum += a.layers[l].bias.dot(b.layers[l].bias);
  }
  return sum + a.log_std.dot(b.log_std);
}

double squared_norm(const ParamSet& a) { return dot(a, a); }

void axpy(double alpha, const ParamSet& x, ParamSet& y) {
  for_each_block(y, x, [alpha](auto& dst, const auto& src) { dst += alpha * src; });
}

ParamSet init_params(std::span<const LayerSpec> specs, const InitOptions& opts,
                     Rng& rng) {
  validate_specs(specs);
  ParamSet p = ParamSet::zeros(specs, opts.log_std_dim);
  for (std::size_t l = 0; l < specs.size(); ++l) {
    const int rows = specs[l].out_dim;
    const int cols = specs[l].in_dim;
    const int big = std::max(rows, cols);
    const int small = std::min(rows, cols);
    Eigen::MatrixXd gauss(big, small);
    for (Eigen::Index j = 0; j < gauss.cols(); ++j) {
      for (Eigen::Index i = 0; i < gauss.rows(); ++i) gauss(i, j) = rng.normal();
    }
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(gauss);
    Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(big, small);
    const Eigen::MatrixXd r = qr.matrixQR().topRows(small).triangularView<Eigen::Upper>();
    for (int j = 0; j < small; ++j) {
      if (r(j, j) < 0.0) q.col(j) *= -1.0;
    }
    const double gain = (l + 1 == specs.size()) ? opts.output_gain : opts.hidden_gain;
    if (rows >= cols) {
      p.layers[l].weight = gain * q;
    } else {
      p.layers[l].weight = gain * q.transpose();
    }
  }
  p.log_std.setConstant(opts.log_std_init);
  return p;
}

// --------------------------------------------------------------------- Mlp

Mlp::Mlp(std::vector<LayerSpec> specs) : specs_(std::move(specs)) {
  validate_specs(specs_);
}

void Mlp::check_params(const ParamSet& params) const {
  if (params.layers.size() != specs_.size()) {
    throw ConfigError("parameter layer count does not match network");
  }
  for (std::size_t l = 0; l < specs_.size(); ++l) {
    if (params.layers[l].weight.rows() != specs_[l].out_dim ||
        params.layers[l].weight.cols() != specs_[l].in_dim ||
        params.layers[l].bias.size() != specs_[l].out_dim) {
      throw ConfigError("parameter shape mismatch at layer " + std::to_string(l));
    }
  }
}

ForwardCache Mlp::forward(const ParamSet& params, const Eigen::MatrixXd& obs) const {
  check_params(params);
  if (obs.rows() != input_dim()) {
    throw ConfigError("observation length " + std::to_string(obs.rows()) +
                      " does not match input dimension " + std::to_string(input_dim()));
  }
  const Eigen::Index n = obs.cols();
  ForwardCache cache;
  cache.inputs.reserve(specs_.size());
  cache.pre_activations.reserve(specs_.size());
  Eigen::MatrixXd x = obs;
  for (std::size_t l = 0; l < specs_.size(); ++l) {
    Eigen::MatrixXd a(x.rows() + 1, n);
    a.topRows(x.rows()) = x;
    a.row(x.rows()).setOnes();
    Eigen::MatrixXd s = params.layers[l].weight * x;
    s.colwise() += params.layers[l].bias;
    cache.inputs.push_back(std::move(a));
    x = specs_[l].activation == Activation::kRelu ? Eigen::MatrixXd(s.cwiseMax(0.0)) : s;
    cache.pre_activations.push_back(std::move(s));
  }
  cache.output = std::move(x);
  return cache;
}

Eigen::VectorXd Mlp::forward(const ParamSet& params, const Eigen::VectorXd& obs,
                             ForwardCache* cache) const {
  ForwardCache c = forward(params, Eigen::MatrixXd(obs));
  Eigen::VectorXd out = c.output.col(0);
  if (cache != nullptr) *cache = std::move(c);
  return out;
}

std::vector<Eigen::MatrixXd> Mlp::backward(const ParamSet& params,
                                           const ForwardCache& cache,
                                           const Eigen::MatrixXd& output_grad) const {
  check_params(params);
  if (cache.inputs.size() != specs_.size()) {
    throw ConfigError("forward cache does not match network");
  }
  std::vector<Eigen::MatrixXd> deltas(specs_.size());
  Eigen::MatrixXd grad = output_grad;
  for (std::size_t i = specs_.size(); i-- > 0;) {
    if (specs_[i].activation == Activation::kRelu) {
      grad = grad.cwiseProduct(
          (cache.pre_activations[i].array() > 0.0).cast<double>().matrix());
    }
    deltas[i] = grad;
    if (i > 0) grad = params.layers[i].weight.transpose() * deltas[i];
  }
  return deltas;
}

ParamSet Mlp::weight_gradients(const ForwardCache& cache,
                               const std::vector<Eigen::MatrixXd>& deltas,
                               const Eigen::VectorXd& sample_weights) const {
  ParamSet g = ParamSet::zeros(specs_);
  for (std::size_t l = 0; l < specs_.size(); ++l) {
    const Eigen::MatrixXd wb =
        (deltas[l] * sample_weights.asDiagonal()) * cache.inputs[l].transpose();
    g.layers[l].set_augmented(wb);
  }
  return g;
}

// ----------------------------------------------------------- distributions

double log_prob(const Distribution& dist, const Eigen::VectorXd& action) {
  if (const auto* g = std::get_if<GaussianDist>(&dist)) {
    if (!g->mean.allFinite() || !g->log_std.allFinite()) {
      throw NumericError("non-finite Gaussian parameters");
    }
    if (action.size() != g->mean.size()) throw ConfigError("action dimension mismatch");
    const Eigen::ArrayXd z = (action - g->mean).array() * (-g->log_std.array()).exp();
    return -0.5 * z.square().sum() - g->log_std.sum() -
           0.5 * kLogTwoPi * static_cast<double>(action.size());
  }
  const auto& c = std::get<CategoricalDist>(dist);
  if (!c.logits.allFinite()) throw NumericError("non-finite categorical logits");
  if (action.size() != 1) throw ConfigError("categorical action must be a single index");
  const auto idx = static_cast<Eigen::Index>(action(0));
  if (idx < 0 || idx >= c.logits.size()) throw ConfigError("categorical action out of range");
  return log_softmax(c.logits)(idx);
}

double kl(const Distribution& old_dist, const Distribution& new_dist) {
  if (old_dist.index() != new_dist.index()) {
    throw UsageError("KL between different distribution families");
  }
  if (const auto* p = std::get_if<GaussianDist>(&old_dist)) {
    const auto& q = std::get<GaussianDist>(new_dist);
    if (p->mean.size() != q.mean.size()) throw UsageError("KL dimension mismatch");
    const Eigen::ArrayXd var_p = (2.0 * p->log_std.array()).exp();
    const Eigen::ArrayXd var_q = (2.0 * q.log_std.array()).exp();
    const Eigen::ArrayXd diff = (p->mean - q.mean).array();
    return (q.log_std.array() - p->log_std.array() +
            (var_p + diff.square()) / (2.0 * var_q) - 0.5)
        .sum();
  }
  const auto& p = std::get<CategoricalDist>(old_dist);
  const auto& q = std::get<CategoricalDist>(new_dist);
  if (p.logits.size() != q.logits.size()) throw UsageError("KL dimension mismatch");
  const Eigen::VectorXd lp = log_softmax(p.logits);
  const Eigen::VectorXd lq = log_softmax(q.logits);
  return std::max(0.0, (lp.array().exp() * (lp - lq).array()).sum());
}

Eigen::VectorXd sample(const Distribution& dist, Rng& rng) {
  if (const auto* g = std::get_if<GaussianDist>(&dist)) {
    Eigen::VectorXd a(g->mean.size());
    for (Eigen::Index i = 0; i < a.size(); ++i) {
      a(i) = g->mean(i) + std::exp(g->log_std(i)) * rng.normal();
    }
    return a;
  }
  const auto& c = std::get<CategoricalDist>(dist);
  const Eigen::VectorXd probs = log_softmax(c.logits).array().exp();
  const double u = rng.uniform();
  double acc = 0.0;
  Eigen::Index idx = probs.size() - 1;
  for (Eigen::Index i = 0; i < probs.size(); ++i) {
    acc += probs(i);
    if (u < acc) {
      idx = i;
      break;
    }
  }
  return Eigen::VectorXd::Constant(1, static_cast<double>(idx));
}

Eigen::VectorXd mode(const Distribution& dist) {
  if (const auto* g = std::get_if<GaussianDist>(&dist)) return g->mean;
  Eigen::Index idx = 0;
  std::get<CategoricalDist>(dist).logits.maxCoeff(&idx);
  return Eigen::VectorXd::Constant(1, static_cast<double>(idx));
}

// --------------------------------------------------------------- PolicyNet

PolicyNet::PolicyNet(std::vector<LayerSpec> specs, DistKind kind)
    : net_(std::move(specs)), kind_(kind) {}

ParamSet PolicyNet::init(Rng& rng, double output_gain, double log_std_init) const {
  InitOptions opts;
  opts.output_gain = output_gain;
  opts.log_std_init = log_std_init;
  opts.log_std_dim = log_std_dim();
  return init_params(net_.specs(), opts, rng);
}

Distribution PolicyNet::distribution_from_output(const ParamSet& params,
                                                 const Eigen::VectorXd& output) const {
  if (kind_ == DistKind::kGaussian) return GaussianDist{output, params.log_std};
  return CategoricalDist{output};
}

Distribution PolicyNet::distribution(const ParamSet& params,
                                     const Eigen::VectorXd& obs) const {
  return distribution_from_output(params, net_.forward(params, obs, nullptr));
}

ScoreGradient PolicyNet::backward_log_prob(const ParamSet& params,
                                           const ForwardCache& cache,
                                           const Distribution& dist,
                                           const Eigen::VectorXd& action) const {
  if (cache.output.cols() != 1) throw UsageError("backward_log_prob expects a single sample");
  Eigen::MatrixXd out_grad(action_size(), 1);
  ScoreGradient result;
  if (const auto* g = std::get_if<GaussianDist>(&dist)) {
    if (action.size() != g->mean.size()) throw ConfigError("action dimension mismatch");
    const Eigen::ArrayXd inv_var = (-2.0 * g->log_std.array()).exp();
    const Eigen::ArrayXd diff = (action - g->mean).array();
    out_grad.col(0) = (diff * inv_var).matrix();
    result.grads.log_std = (diff.square() * inv_var - 1.0).matrix();
  } else {
    const auto& c = std::get<CategoricalDist>(dist);
    const Eigen::VectorXd probs = log_softmax(c.logits).array().exp();
    out_grad.col(0) = -probs;
    out_grad(static_cast<Eigen::Index>(action(0)), 0) += 1.0;
  }
  const auto deltas = net_.backward(params, cache, out_grad);
  ParamSet weights = net_.weight_gradients(cache, deltas, Eigen::VectorXd::Ones(1));
  result.grads.layers = std::move(weights.layers);
  if (kind_ == DistKind::kCategorical) result.grads.log_std = Eigen::VectorXd();
  for (std::size_t l = 0; l < deltas.size(); ++l) {
    result.stats.push_back({cache.inputs[l], deltas[l]});
  }
  return result;
}

std::vector<LayerStats> ScoreBatch::layer_stats() const {
  std::vector<LayerStats> stats;
  stats.reserve(deltas.size());
  for (std::size_t l = 0; l < deltas.size(); ++l) {
    stats.push_back({cache.inputs[l], deltas[l]});
  }
  return stats;
}

ScoreBatch PolicyNet::score(const ParamSet& params, const Eigen::MatrixXd& obs,
                            const Eigen::MatrixXd& actions) const {
  if (actions.cols() != obs.cols() || actions.rows() != action_width()) {
    throw ConfigError("action batch shape mismatch");
  }
  ScoreBatch batch;
  batch.cache = net_.forward(params, obs);
  const Eigen::MatrixXd& out = batch.cache.output;
  const Eigen::Index n = obs.cols();
  Eigen::MatrixXd out_grad(out.rows(), n);
  batch.log_probs.resize(n);
  if (kind_ == DistKind::kGaussian) {
    if (!params.log_std.allFinite()) throw NumericError("non-finite log_std");
    const Eigen::ArrayXd inv_std = (-params.log_std.array()).exp();
    const double norm = -params.log_std.sum() - 0.5 * kLogTwoPi * static_cast<double>(out.rows());
    const Eigen::ArrayXXd z = (actions - out).array().colwise() * inv_std;
    out_grad = (z.colwise() * inv_std).matrix();
    batch.log_probs = (-0.5 * z.square().colwise().sum() + norm).transpose().matrix();
    batch.log_std_scores = (z.square() - 1.0).matrix();
  } else {
    for (Eigen::Index j = 0; j < n; ++j) {
      const Eigen::VectorXd ls = log_softmax(out.col(j));
      const auto idx = static_cast<Eigen::Index>(actions(0, j));
      if (idx < 0 || idx >= ls.size()) throw ConfigError("categorical action out of range");
      batch.log_probs(j) = ls(idx);
      out_grad.col(j) = -ls.array().exp().matrix();
      out_grad(idx, j) += 1.0;
    }
  }
  if (!batch.log_probs.allFinite()) throw NumericError("non-finite log-probabilities");
  batch.deltas = net_.backward(params, batch.cache, out_grad);
  return batch;
}

ParamSet PolicyNet::weighted_gradient(const ScoreBatch& batch,
                                      const Eigen::VectorXd& weights) const {
  ParamSet g = net_.weight_gradients(batch.cache, batch.deltas, weights);
  if (kind_ == DistKind::kGaussian) g.log_std = batch.log_std_scores * weights;
  return g;
}

Eigen::VectorXd PolicyNet::log_probs(const ParamSet& params, const Eigen::MatrixXd& obs,
                                     const Eigen::MatrixXd& actions) const {
  const ForwardCache cache = net_.forward(params, obs);
  Eigen::VectorXd lp(obs.cols());
  for (Eigen::Index j = 0; j < obs.cols(); ++j) {
    lp(j) = log_prob(distribution_from_output(params, cache.output.col(j)),
                     actions.col(j));
  }
  return lp;
}

double PolicyNet::mean_kl(const ParamSet& old_params, const ParamSet& new_params,
                          const Eigen::MatrixXd& obs, KlDirection direction) const {
  if (obs.cols() == 0) throw DegenerateInputError("KL over an empty batch");
  const Eigen::MatrixXd out_old = net_.forward(old_params, obs).output;
  const Eigen::MatrixXd out_new = net_.forward(new_params, obs).output;
  double total = 0.0;
  for (Eigen::Index j = 0; j < obs.cols(); ++j) {
    const Distribution p = distribution_from_output(old_params, out_old.col(j));
    const Distribution q = distribution_from_output(new_params, out_new.col(j));
    total += direction == KlDirection::kOldNew ? kl(p, q) : kl(q, p);
  }
  return total / static_cast<double>(obs.cols());
}

}  // namespace kfcpo
