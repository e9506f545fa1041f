#ifndef KFCPO_CRITIC_HPP_
#define KFCPO_CRITIC_HPP_

#include <Eigen/Dense>

#include "kfcpo/config.hpp"
#include "kfcpo/nn.hpp"
#include "kfcpo/random.hpp"
#include "kfcpo/rollout.hpp"

namespace kfcpo {

// Adam over a ParamSet.
struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  ParamSet m;
  ParamSet v;
  long step = 0;

  AdamState() = default;
  explicit AdamState(const ParamSet& like) : m(like.zeros_like()), v(like.zeros_like()) {}

  void apply(ParamSet& params, const ParamSet& grad, double lr);
};

// Scalar state-value network regressed by mean-squared error.
struct ValueCritic {
  Mlp net;
  ParamSet params;
  AdamState adam;

  ValueCritic() = default;
  ValueCritic(Mlp net, Rng& rng);

  Eigen::VectorXd predict(const Eigen::MatrixXd& obs) const;
  double predict(const Eigen::VectorXd& obs) const;
  double mse(const Eigen::MatrixXd& obs, const Eigen::VectorXd& targets) const;
  // Iterations of Adam on shuffled minibatches. Throws NumericError if the
  // loss or parameters stop being finite.
  void fit(const Eigen::MatrixXd& obs, const Eigen::VectorXd& targets,
           const CriticConfig& cfg, Rng& rng);
};

// Regresses both critics toward the batch's reward and cost returns.
void update_critics(const RolloutBatch& batch, ValueCritic& reward_critic,
                    ValueCritic& cost_critic, const CriticConfig& cfg, Rng& rng);

}  // namespace kfcpo

#endif  // KFCPO_CRITIC_HPP_
