#include "kfcpo/cmdp.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "kfcpo/errors.hpp"

namespace kfcpo {

namespace {

constexpr int kMaxPlacementTries = 100000;
constexpr double kSpawnClearance = 0.05;
constexpr double kMinGoalDistance = 0.3;

Eigen::Vector2d uniform_point(Rng& rng, double half_width) {
  const double x = rng.uniform(-half_width, half_width);
  const double y = rng.uniform(-half_width, half_width);
  return {x, y};
}

}  // namespace

// ------------------------------------------------------------ PointHazard

PointHazardEnv::PointHazardEnv(PointHazardConfig cfg) : cfg_(cfg) {
  if (cfg_.hazards < 0) throw ConfigError("env.hazards must be >= 0");
  if (cfg_.nearest_hazards < 0 || cfg_.nearest_hazards > cfg_.hazards) {
    throw ConfigError("nearest hazard count must lie in [0, env.hazards]");
  }
  if (!(cfg_.hazard_radius > 0.0) || !(cfg_.goal_radius > 0.0) || !(cfg_.box > 0.0)) {
    throw ConfigError("point env radii and box must be > 0");
  }
  if (!(cfg_.dt > 0.0) || cfg_.horizon < 1) throw ConfigError("env.dt and env.horizon must be > 0");
  if (cfg_.hazard_radius >= cfg_.box) throw ConfigError("env.hazard_radius too large for box");
}

bool PointHazardEnv::in_hazard(const Eigen::Vector2d& p) const {
  return std::any_of(hazards_.begin(), hazards_.end(), [&](const Eigen::Vector2d& h) {
    return (p - h).norm() < cfg_.hazard_radius;
  });
}

Eigen::Vector2d PointHazardEnv::sample_goal() {
  const double inner = cfg_.box - cfg_.goal_radius;
  for (int i = 0; i < kMaxPlacementTries; ++i) {
    const Eigen::Vector2d g = uniform_point(rng_, inner);
    if ((g - pos_).norm() < kMinGoalDistance) continue;
    const bool clear = std::all_of(hazards_.begin(), hazards_.end(), [&](const Eigen::Vector2d& h) {
      return (g - h).norm() >= cfg_.hazard_radius + cfg_.goal_radius;
    });
    if (clear) return g;
  }
  throw ConfigError("cannot place goal; hazards cover too much of the box");
}

Eigen::VectorXd PointHazardEnv::reset(std::uint64_t seed) {
  rng_ = Rng(seed);
  hazards_.clear();
  const double inner = cfg_.box - cfg_.hazard_radius;
  int tries = 0;
  while (static_cast<int>(hazards_.size()) < cfg_.hazards) {
    if (++tries > kMaxPlacementTries) throw ConfigError("cannot place hazards");
    const Eigen::Vector2d c = uniform_point(rng_, inner);
    const bool apart = std::all_of(hazards_.begin(), hazards_.end(), [&](const Eigen::Vector2d& h) {
      return (c - h).norm() >= 2.0 * cfg_.hazard_radius;
    });
    if (apart) hazards_.push_back(c);
  }
  tries = 0;
  while (true) {
    if (++tries > kMaxPlacementTries) throw ConfigError("cannot place agent spawn");
    pos_ = uniform_point(rng_, cfg_.box);
    const bool clear = std::all_of(hazards_.begin(), hazards_.end(), [&](const Eigen::Vector2d& h) {
      return (pos_ - h).norm() >= cfg_.hazard_radius + kSpawnClearance;
    });
    if (clear) break;
  }
  vel_.setZero();
  goal_ = sample_goal();
  t_ = 0;
  active_ = true;
  return observe();
}

void PointHazardEnv::set_state(const Eigen::Vector2d& pos, const Eigen::Vector2d& vel) {
  pos_ = pos;
  vel_ = vel;
}

Eigen::VectorXd PointHazardEnv::observe() const {
  Eigen::VectorXd obs(obs_dim());
  obs.segment<2>(0) = vel_;
  obs.segment<2>(2) = goal_ - pos_;
  std::vector<int> order(hazards_.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return (hazards_[a] - pos_).squaredNorm() < (hazards_[b] - pos_).squaredNorm();
  });
  for (int k = 0; k < cfg_.nearest_hazards; ++k) {
    obs.segment<2>(4 + 2 * k) = hazards_[order[k]] - pos_;
  }
  return obs;
}

StepResult PointHazardEnv::step(const Eigen::VectorXd& action) {
  if (!active_) throw UsageError("step on a finished episode; call reset first");
  if (action.size() != 2) throw UsageError("point env expects a 2-D action");
  Eigen::Vector2d force = action.head<2>().cwiseMax(-1.0).cwiseMin(1.0);
  if (!force.allFinite()) throw UsageError("non-finite action");

  const double prev_dist = (goal_ - pos_).norm();
  vel_ += (cfg_.force_scale * force - cfg_.drag * vel_) * cfg_.dt;
  pos_ += vel_ * cfg_.dt;
  for (int i = 0; i < 2; ++i) {
    if (pos_(i) > cfg_.box) {
      pos_(i) = cfg_.box;
      vel_(i) = std::min(vel_(i), 0.0);
    } else if (pos_(i) < -cfg_.box) {
      pos_(i) = -cfg_.box;
      vel_(i) = std::max(vel_(i), 0.0);
    }
  }
  const double new_dist = (goal_ - pos_).norm();

  StepResult r;
  r.reward = cfg_.dense_coeff * (prev_dist - new_dist);
  if (new_dist <= cfg_.goal_radius) {
    r.reward += cfg_.goal_bonus;
    goal_ = sample_goal();
  }
  r.cost = in_hazard(pos_) ? 1.0 : 0.0;
  ++t_;
  r.truncated = t_ >= cfg_.horizon;
  active_ = !r.truncated;
  r.obs = observe();
  return r;
}

// ----------------------------------------------------------- HazardChain

HazardChainEnv::HazardChainEnv(HazardChainConfig cfg) : cfg_(std::move(cfg)) {
  if (cfg_.length < 2) throw ConfigError("env.length must be >= 2");
  if (cfg_.horizon < 1) throw ConfigError("env.horizon must be >= 1");
  if (!(cfg_.slip >= 0.0 && cfg_.slip <= 1.0)) throw ConfigError("env.slip must lie in [0, 1]");
  hazard_mask_.assign(cfg_.length, false);
  for (int s : cfg_.hazard_states) {
    if (s < 0 || s >= cfg_.length) throw ConfigError("hazard state out of range");
    if (s == cfg_.length - 1) throw ConfigError("goal state cannot be a hazard");
    hazard_mask_[s] = true;
  }
}

bool HazardChainEnv::is_hazard(int s) const { return hazard_mask_.at(s); }

int HazardChainEnv::next_state(int s, int action) const {
  return action == 1 ? std::min(s + 1, cfg_.length - 1) : std::max(s - 1, 0);
}

Eigen::VectorXd HazardChainEnv::reset(std::uint64_t seed) {
  rng_ = Rng(seed);
  state_ = 0;
  t_ = 0;
  active_ = true;
  Eigen::VectorXd obs = Eigen::VectorXd::Zero(cfg_.length);
  obs(0) = 1.0;
  return obs;
}

StepResult HazardChainEnv::step(const Eigen::VectorXd& action) {
  if (!active_) throw UsageError("step on a finished episode; call reset first");
  if (action.size() != 1) throw UsageError("chain env expects a single action index");
  int a = static_cast<int>(action(0));
  if (a != 0 && a != 1) throw UsageError("chain action must be 0 or 1");
  // the slip draw happens every step so trajectories depend only on the seed
  if (rng_.bernoulli(cfg_.slip)) a = 1 - a;
  state_ = next_state(state_, a);
  ++t_;

  StepResult r;
  r.cost = is_hazard(state_) ? 1.0 : 0.0;
  r.done = state_ == goal_state();
  r.reward = r.done ? cfg_.goal_reward : -cfg_.step_penalty;
  r.truncated = !r.done && t_ >= cfg_.horizon;
  active_ = !(r.done || r.truncated);
  r.obs = Eigen::VectorXd::Zero(cfg_.length);
  r.obs(state_) = 1.0;
  return r;
}

std::unique_ptr<Environment> make_environment(const EnvConfig& cfg) {
  if (cfg.horizon < 0) throw ConfigError("env.horizon must be >= 0");
  if (cfg.name == "point_hazard") {
    PointHazardConfig point = cfg.point;
    if (cfg.horizon > 0) point.horizon = cfg.horizon;
    return std::make_unique<PointHazardEnv>(point);
  }
  if (cfg.name == "hazard_chain") {
    HazardChainConfig chain = cfg.chain;
    if (cfg.horizon > 0) chain.horizon = cfg.horizon;
    return std::make_unique<HazardChainEnv>(chain);
  }
  throw ConfigError("unknown env.name '" + cfg.name + "'");
}

}  // namespace kfcpo
