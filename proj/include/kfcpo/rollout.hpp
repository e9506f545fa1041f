#ifndef KFCPO_ROLLOUT_HPP_
#define KFCPO_ROLLOUT_HPP_

#include <Eigen/Dense>

#include <cstdint>
#include <memory>
#include <vector>

#include "kfcpo/cmdp.hpp"
#include "kfcpo/nn.hpp"
#include "kfcpo/random.hpp"

namespace kfcpo {

struct EpisodeSpan {
  Eigen::Index start = 0;
  Eigen::Index length = 0;
  // Ended by the environment (goal or horizon) rather than the batch limit.
  bool complete = false;
  // Ended in a terminal state; tails of other episodes are bootstrapped.
  bool terminal = false;
  Eigen::VectorXd final_obs;  // observation after the last step
  double reward_sum = 0.0;
  double cost_sum = 0.0;
};

// Steps are stored column-wise in collection order.
struct RolloutBatch {
  Eigen::MatrixXd obs;      // obs_dim x N
  Eigen::MatrixXd actions;  // action_width x N
  Eigen::VectorXd old_log_probs;
  Eigen::VectorXd rewards;
  Eigen::VectorXd costs;
  std::vector<EpisodeSpan> episodes;

  Eigen::VectorXd reward_advantages;
  Eigen::VectorXd cost_advantages;
  Eigen::VectorXd reward_returns;
  Eigen::VectorXd cost_returns;
  double episodic_cost = 0.0;

  Eigen::Index size() const { return rewards.size(); }
  // Index of the episode holding each step.
  std::vector<int> episode_of_step() const;
};

// Samples actions from the policy and records exactly `steps` transitions,
// fanned out over independent workers. Every batch starts fresh episodes;
// the trailing unfinished episode of each worker is kept for advantage
// estimation but marked incomplete.
class RolloutCollector {
 public:
  RolloutCollector(const Environment& prototype, int workers, std::uint64_t seed);

  RolloutBatch collect(const PolicyNet& policy, const ParamSet& params,
                       Eigen::Index steps);

  int workers() const { return static_cast<int>(envs_.size()); }
  std::vector<std::string> rng_states() const;
  void set_rng_states(const std::vector<std::string>& states);

 private:
  std::vector<std::unique_ptr<Environment>> envs_;
  std::vector<Rng> rngs_;
};

struct GaeResult {
  Eigen::VectorXd advantages;
  Eigen::VectorXd returns;
};

// delta_t = r_t + gamma V_{t+1} - V_t, adv_t = delta_t + gamma lambda adv_{t+1},
// restarted at every episode. bootstrap[e] is the value after episode e's
// last step (0 for terminal episodes).
GaeResult compute_gae(const Eigen::VectorXd& values, const Eigen::VectorXd& signal,
                      const std::vector<double>& bootstrap,
                      const std::vector<EpisodeSpan>& episodes, double gamma,
                      double lambda);

// In place to zero mean and unit (population) variance.
void normalize_advantages(Eigen::VectorXd& adv);

// Mean undiscounted cost over complete episodes.
double episodic_cost(const RolloutBatch& batch);
// Mean undiscounted return over complete episodes.
double episodic_return(const RolloutBatch& batch);

}  // namespace kfcpo

#endif  // KFCPO_ROLLOUT_HPP_
