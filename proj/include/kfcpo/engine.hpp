#ifndef KFCPO_ENGINE_HPP_
#define KFCPO_ENGINE_HPP_

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "kfcpo/cmdp.hpp"
#include "kfcpo/config.hpp"
#include "kfcpo/critic.hpp"
#include "kfcpo/kfac.hpp"
#include "kfcpo/nn.hpp"
#include "kfcpo/random.hpp"
#include "kfcpo/rollout.hpp"
#include "kfcpo/safegrad.hpp"
#include "kfcpo/trust.hpp"

namespace kfcpo {

struct Checkpoint;

struct EpochMetrics {
  int epoch = 0;
  double return_mean = 0.0;
  double return_std = 0.0;
  double cost_ep_mean = 0.0;
  double cost_ep_std = 0.0;
  double w_r = 0.0;
  double w_c = 0.0;
  double conflict_frac = 0.0;
  int rollbacks = 0;
  int updates = 0;  // minibatch updates attempted
  double kl_mean = 0.0;  // over committed updates
  double kl_max = 0.0;
  double nu_mean = 0.0;
  double nu_min = 0.0;
  double nu_max = 0.0;
  int fisher_refreshes = 0;
  double seconds = 0.0;
};

// One minibatch update as seen by the engine; for instrumentation.
struct UpdateRecord {
  int epoch = 0;
  long step = 0;
  bool skipped = false;  // both directions vanished
  bool committed = false;
  bool conflict = false;
  double kl = 0.0;
  double nu = 0.0;
  int staleness = 0;  // stats updates since the eigenbasis in use was computed
  bool momentum_cleared = false;
};

// Loss-convention gradients for one minibatch: reward_loss = -grad J_r and
// cost_loss = +grad J_c of the importance-weighted surrogates
// mean(exp(log pi - log pi_old) A), so the step theta - alpha m descends both.
struct MinibatchGradients {
  ScoreBatch score;
  Eigen::VectorXd ratios;
  ParamSet reward_loss;
  ParamSet cost_loss;
};

MinibatchGradients minibatch_gradients(const PolicyNet& policy, const ParamSet& params,
                                       const Eigen::MatrixXd& obs,
                                       const Eigen::MatrixXd& actions,
                                       const Eigen::VectorXd& old_log_probs,
                                       const Eigen::VectorXd& reward_adv,
                                       const Eigen::VectorXd& cost_adv);

// mean(exp(log pi - log pi_old) * adv)
double surrogate(const PolicyNet& policy, const ParamSet& params, const Eigen::MatrixXd& obs,
                 const Eigen::MatrixXd& actions, const Eigen::VectorXd& old_log_probs,
                 const Eigen::VectorXd& adv);

PolicyNet make_policy(const TrainConfig& cfg, const Environment& env);
Mlp make_critic_net(const TrainConfig& cfg, const Environment& env);

// Owns all mutable training state: policy, critics, curvature, momentum and
// the generators. Only train_epoch mutates it.
class Trainer {
 public:
  explicit Trainer(TrainConfig cfg);
  // Restores from a checkpoint; cfg must describe the same networks.
  Trainer(TrainConfig cfg, const Checkpoint& ckpt);

  EpochMetrics train_epoch();

  // Fills advantages and returns with the current critics.
  void compute_advantages(RolloutBatch& batch) const;

  int epoch() const { return epoch_; }
  long global_step() const { return global_step_; }
  const TrainConfig& config() const { return cfg_; }
  const Environment& environment() const { return *env_; }
  const PolicyNet& policy() const { return policy_; }
  const ParamSet& policy_params() const { return theta_; }
  void set_policy_params(const ParamSet& p);
  const ValueCritic& reward_critic() const { return reward_critic_; }
  const ValueCritic& cost_critic() const { return cost_critic_; }
  const CurvatureSet& reward_curvature() const { return reward_fisher_; }
  const CurvatureSet& cost_curvature() const { return cost_fisher_; }
  const MomentumState& momentum() const { return momentum_; }
  const RolloutBatch& last_batch() const { return last_batch_; }

  void set_update_observer(std::function<void(const UpdateRecord&)> observer) {
    observer_ = std::move(observer);
  }

  Checkpoint checkpoint() const;

 private:
  void build();
  BlendWeights weights_for(double episodic_cost) const;
  double minibatch_episodic_cost(const RolloutBatch& batch, const std::vector<int>& owner,
                                 std::span<const Eigen::Index> idx, double fallback) const;

  TrainConfig cfg_;
  std::unique_ptr<Environment> env_;
  PolicyNet policy_;
  ParamSet theta_;
  ValueCritic reward_critic_;
  ValueCritic cost_critic_;
  CurvatureSet reward_fisher_;
  CurvatureSet cost_fisher_;
  MomentumState momentum_;
  std::unique_ptr<RolloutCollector> collector_;
  Rng rng_;
  int epoch_ = 0;
  long global_step_ = 0;
  int consecutive_rollbacks_ = 0;
  RolloutBatch last_batch_;
  std::function<void(const UpdateRecord&)> observer_;
};

// ------------------------------------------------------------- run & CLI

inline constexpr const char* kMetricsHeader =
    "epoch,return_mean,return_std,cost_ep_mean,cost_ep_std,w_r,w_c,conflict_frac,"
    "rollbacks,kl_mean,nu_mean,fisher_refreshes,seconds";

// One CSV row in kMetricsHeader order; numbers use shortest round-trip form.
std::string metrics_row(const EpochMetrics& m, bool wall_clock);

struct RunOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  std::optional<std::string> resume;
};

struct RunSummary {
  int epochs_run = 0;
  double final_return = 0.0;  // mean over the final (up to) 10 epochs
  double final_cost = 0.0;
  std::string metrics_path;
  std::string checkpoint_path;
};

// Full training loop: metrics CSV per epoch, checkpoints every
// train.checkpoint_interval epochs and at the end.
RunSummary run_training(const TrainConfig& cfg, const RunOptions& opts, std::ostream& log);
// CLI entry: returns a process exit status, diagnostics go to err.
int run(const RunOptions& opts, std::ostream& out, std::ostream& err);

struct EvalResult {
  double return_mean = 0.0;
  double cost_mean = 0.0;
  std::vector<double> returns;
  std::vector<double> costs;
};

EvalResult evaluate(const PolicyNet& policy, const ParamSet& params, Environment& env,
                    int episodes, bool deterministic, std::uint64_t seed);

// Reads a metrics CSV and writes it back as csv or json.
void export_metrics(const std::string& csv_path, const std::string& format, std::ostream& out);

// Mean of the last `window` epochs' columns as (return_mean, cost_ep_mean).
std::pair<double, double> final_averages(const std::vector<EpochMetrics>& history,
                                         std::size_t window = 10);

}  // namespace kfcpo

#endif  // KFCPO_ENGINE_HPP_
