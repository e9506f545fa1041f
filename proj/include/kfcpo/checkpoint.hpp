#ifndef KFCPO_CHECKPOINT_HPP_
#define KFCPO_CHECKPOINT_HPP_

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <vector>

#include "kfcpo/kfac.hpp"
#include "kfcpo/nn.hpp"

namespace kfcpo {

inline constexpr int kCheckpointVersion = 1;

struct CurvatureSnapshot {
  struct Layer {
    Eigen::MatrixXd a;
    Eigen::MatrixXd g;
    int stats_step = 0;
    int updates_since_refresh = 0;
    bool has_eig = false;
  };
  std::vector<Layer> layers;

  static CurvatureSnapshot capture(const CurvatureSet& set);
  // Writes factors and counters back; eigenbases are recomputed.
  void restore(CurvatureSet& set) const;
};

struct AdamSnapshot {
  Eigen::VectorXd m;
  Eigen::VectorXd v;
  long step = 0;
};

// Single-file training state. Parameters are stored as 64-bit doubles in
// shortest round-trip decimal form, so reloading is bit-exact.
struct Checkpoint {
  int version = kCheckpointVersion;
  std::string config_text;
  std::vector<LayerSpec> policy_specs;
  std::vector<LayerSpec> critic_specs;
  Eigen::VectorXd policy;
  Eigen::VectorXd reward_critic;
  Eigen::VectorXd cost_critic;
  Eigen::VectorXd momentum;
  Eigen::VectorXd prev_momentum;
  AdamSnapshot reward_adam;
  AdamSnapshot cost_adam;
  int epoch = 0;
  long global_step = 0;
  int consecutive_rollbacks = 0;
  std::string rng_state;
  std::vector<std::string> worker_rng_states;
  std::optional<CurvatureSnapshot> reward_curvature;
  std::optional<CurvatureSnapshot> cost_curvature;
};

void write_checkpoint(const Checkpoint& ckpt, const std::string& path);
// Throws ConfigError on a missing file, bad tag or unsupported version.
Checkpoint read_checkpoint(const std::string& path);

}  // namespace kfcpo

#endif  // KFCPO_CHECKPOINT_HPP_
