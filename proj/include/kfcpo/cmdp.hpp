#ifndef KFCPO_CMDP_HPP_
#define KFCPO_CMDP_HPP_

#include <Eigen/Dense>

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "kfcpo/random.hpp"

namespace kfcpo {

struct StepResult {
  Eigen::VectorXd obs;
  double reward = 0.0;
  double cost = 0.0;  // always >= 0
  bool done = false;
  bool truncated = false;
};

struct ActionSpace {
  bool discrete = false;
  int size = 1;  // dimension, or number of discrete actions
};

// Constrained MDP with a reward and a nonnegative per-step cost.
class Environment {
 public:
  virtual ~Environment() = default;

  virtual std::string name() const = 0;
  virtual int obs_dim() const = 0;
  virtual ActionSpace action_space() const = 0;
  virtual int horizon() const = 0;
  // Deterministic in the seed.
  virtual Eigen::VectorXd reset(std::uint64_t seed) = 0;
  // Throws UsageError once the episode has ended until the next reset.
  virtual StepResult step(const Eigen::VectorXd& action) = 0;
  virtual std::unique_ptr<Environment> clone() const = 0;
};

struct PointHazardConfig {
  int hazards = 4;
  double hazard_radius = 0.15;
  double goal_radius = 0.1;
  double box = 1.0;          // positions live in [-box, box]^2
  double dt = 0.05;
  double force_scale = 5.0;
  double drag = 5.0;         // velocity damping per second
  double dense_coeff = 1.0;  // reward per unit of distance closed
  double goal_bonus = 1.0;
  int nearest_hazards = 4;   // hazards reported in the observation
  int horizon = 400;
};

// Point mass in a box that collects goals while hazards charge cost.
class PointHazardEnv : public Environment {
 public:
  explicit PointHazardEnv(PointHazardConfig cfg = {});

  std::string name() const override { return "point_hazard"; }
  int obs_dim() const override { return 4 + 2 * cfg_.nearest_hazards; }
  ActionSpace action_space() const override { return {false, 2}; }
  int horizon() const override { return cfg_.horizon; }
  Eigen::VectorXd reset(std::uint64_t seed) override;
  StepResult step(const Eigen::VectorXd& action) override;
  std::unique_ptr<Environment> clone() const override {
    return std::make_unique<PointHazardEnv>(*this);
  }

  const PointHazardConfig& config() const { return cfg_; }
  const Eigen::Vector2d& position() const { return pos_; }
  const Eigen::Vector2d& velocity() const { return vel_; }
  const Eigen::Vector2d& goal() const { return goal_; }
  const std::vector<Eigen::Vector2d>& hazard_centers() const { return hazards_; }
  bool in_hazard(const Eigen::Vector2d& p) const;
  // Test hook: moves the agent without touching the layout.
  void set_state(const Eigen::Vector2d& pos, const Eigen::Vector2d& vel);
  Eigen::VectorXd observe() const;

 private:
  Eigen::Vector2d sample_goal();

  PointHazardConfig cfg_;
  Rng rng_;
  Eigen::Vector2d pos_ = Eigen::Vector2d::Zero();
  Eigen::Vector2d vel_ = Eigen::Vector2d::Zero();
  Eigen::Vector2d goal_ = Eigen::Vector2d::Zero();
  std::vector<Eigen::Vector2d> hazards_;
  int t_ = 0;
  bool active_ = false;
};

struct HazardChainConfig {
  int length = 8;
  std::vector<int> hazard_states = {2, 3, 4, 5};
  double slip = 0.1;
  double step_penalty = 0.01;
  double goal_reward = 1.0;
  int horizon = 200;
};

// Chain 0..L-1 starting at 0 with the goal at L-1. Actions: 0 left, 1 right;
// with probability slip the chosen action is flipped.
class HazardChainEnv : public Environment {
 public:
  explicit HazardChainEnv(HazardChainConfig cfg = {});

  std::string name() const override { return "hazard_chain"; }
  int obs_dim() const override { return cfg_.length; }
  ActionSpace action_space() const override { return {true, 2}; }
  int horizon() const override { return cfg_.horizon; }
  Eigen::VectorXd reset(std::uint64_t seed) override;
  StepResult step(const Eigen::VectorXd& action) override;
  std::unique_ptr<Environment> clone() const override {
    return std::make_unique<HazardChainEnv>(*this);
  }

  const HazardChainConfig& config() const { return cfg_; }
  int state() const { return state_; }
  int goal_state() const { return cfg_.length - 1; }
  bool is_hazard(int s) const;
  // Deterministic transition used when no slip occurs.
  int next_state(int s, int action) const;

 private:
  HazardChainConfig cfg_;
  std::vector<bool> hazard_mask_;
  Rng rng_;
  int state_ = 0;
  int t_ = 0;
  bool active_ = false;
};

struct EnvConfig {
  std::string name = "hazard_chain";
  std::uint64_t seed = 0;
  double cost_limit = 25.0;
  int horizon = 0;  // 0 keeps the environment's own default
  PointHazardConfig point;
  HazardChainConfig chain;
};

// Throws ConfigError for unknown names or invalid geometry.
std::unique_ptr<Environment> make_environment(const EnvConfig& cfg);

}  // namespace kfcpo

#endif  // KFCPO_CMDP_HPP_
