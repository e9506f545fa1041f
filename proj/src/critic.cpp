#include "kfcpo/critic.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "kfcpo/errors.hpp"

namespace kfcpo {

void AdamState::apply(ParamSet& params, const ParamSet& grad, double lr) {
  ++step;
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
  auto update = [&](auto& p, auto& m1, auto& m2, const auto& g) {
    m1 = beta1 * m1 + (1.0 - beta1) * g;
    m2 = beta2 * m2 + (1.0 - beta2) * g.cwiseAbs2();
    p.array() -= lr * (m1.array() / c1) / ((m2.array() / c2).sqrt() + eps);
  };
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    update(params.layers[l].weight, m.layers[l].weight, v.layers[l].weight, grad.layers[l].weight);
    update(params.layers[l].bias, m.layers[l].bias, v.layers[l].bias, grad.layers[l].bias);
  }
}

ValueCritic::ValueCritic(Mlp network, Rng& rng) : net(std::move(network)) {
  InitOptions opts;
  opts.output_gain = 1.0;
  params = init_params(net.specs(), opts, rng);
  adam = AdamState(params);
}

Eigen::VectorXd ValueCritic::predict(const Eigen::MatrixXd& obs) const {
  return net.forward(params, obs).output.row(0).transpose();
}

double ValueCritic::predict(const Eigen::VectorXd& obs) const {
  return net.forward(params, obs, nullptr)(0);
}

double ValueCritic::mse(const Eigen::MatrixXd& obs, const Eigen::VectorXd& targets) const {
  return (predict(obs) - targets).squaredNorm() / static_cast<double>(targets.size());
}

void ValueCritic::fit(const Eigen::MatrixXd& obs, const Eigen::VectorXd& targets,
                      const CriticConfig& cfg, Rng& rng) {
  const Eigen::Index n = targets.size();
  if (obs.cols() != n) throw ConfigError("critic obs/target count mismatch");
  if (cfg.iterations == 0 || n == 0) return;
  const Eigen::Index mb = std::min<Eigen::Index>(cfg.minibatch, n);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  Eigen::Index cursor = n;  // forces a shuffle on the first iteration
  Eigen::MatrixXd x(obs.rows(), mb);
  Eigen::VectorXd y(mb);
  for (int it = 0; it < cfg.iterations; ++it) {
    if (cursor + mb > n) {
      // Fisher-Yates with the portable generator
      for (Eigen::Index i = n - 1; i > 0; --i) {
        const auto j = static_cast<Eigen::Index>(rng.uniform_index(static_cast<std::uint64_t>(i + 1)));
        std::swap(order[i], order[j]);
      }
      cursor = 0;
    }
    for (Eigen::Index k = 0; k < mb; ++k) {
      x.col(k) = obs.col(order[cursor + k]);
      y(k) = targets(order[cursor + k]);
    }
    cursor += mb;
    const ForwardCache cache = net.forward(params, x);
    const Eigen::RowVectorXd err = cache.output.row(0) - y.transpose();
    if (!err.allFinite()) throw NumericError("critic loss diverged");
    const Eigen::MatrixXd out_grad = (2.0 / static_cast<double>(mb)) * err;
    const auto deltas = net.backward(params, cache, out_grad);
    const ParamSet grad = net.weight_gradients(cache, deltas, Eigen::VectorXd::Ones(mb));
    adam.apply(params, grad, cfg.lr);
  }
  if (!params.all_finite()) throw NumericError("critic parameters diverged");
}

void update_critics(const RolloutBatch& batch, ValueCritic& reward_critic,
                    ValueCritic& cost_critic, const CriticConfig& cfg, Rng& rng) {
  if (batch.reward_returns.size() != batch.size() || batch.cost_returns.size() != batch.size()) {
    throw UsageError("update_critics needs returns computed for the batch");
  }
  reward_critic.fit(batch.obs, batch.reward_returns, cfg, rng);
  cost_critic.fit(batch.obs, batch.cost_returns, cfg, rng);
}

}  // namespace kfcpo
