#ifndef KFCPO_KFAC_HPP_
#define KFCPO_KFAC_HPP_

#include <Eigen/Dense>

#include <span>
#include <vector>

#include "kfcpo/nn.hpp"

namespace kfcpo {

struct KfacOptions {
  double decay = 0.95;    // weight on the newest minibatch statistics
  double damping = 1e-3;  // added to every factor eigenvalue before inversion
  // Stats updates tolerated between a refresh and a use of the inverse.
  int max_stale_updates = 10;
};

// Kronecker factors of one affine layer. A covers the bias-augmented inputs,
// G the pre-activation gradients; the layer's Fisher block is A (x) G.
struct KfacLayerState {
  Eigen::MatrixXd a;  // (in_dim + 1)^2
  Eigen::MatrixXd g;  // out_dim^2
  Eigen::MatrixXd q_a;
  Eigen::VectorXd lambda_a;
  Eigen::MatrixXd q_g;
  Eigen::VectorXd lambda_g;
  int stats_step = 0;
  int updates_since_refresh = 0;
  bool has_eig = false;
  bool eig_stale = false;

  KfacLayerState() = default;
  KfacLayerState(int in_dim, int out_dim);

  int in_dim() const { return static_cast<int>(a.rows()) - 1; }
  int out_dim() const { return static_cast<int>(g.rows()); }
};

enum class ObjectiveTag { kReward, kCost };

// Per-objective curvature for the whole policy. The Gaussian log-std block,
// when present, uses its exact Fisher 2 I instead of Kronecker factors.
class CurvatureSet {
 public:
  CurvatureSet() = default;
  CurvatureSet(std::span<const LayerSpec> specs, int log_std_dim, ObjectiveTag tag,
               KfacOptions options = {});

  // EMA update: A <- (1 - decay) A + decay * mean(a a^T), likewise for G.
  void update_stats(std::span<const LayerStats> batch_stats);
  // Symmetric eigendecomposition of every factor.
  void refresh_eig();
  // (G + dI)^-1 V (A + dI)^-1 per layer. Throws StaleStateError when no
  // decomposition exists or it is older than max_stale_updates.
  ParamSet apply_inverse(const ParamSet& grads) const;
  // sum_l vec(V_l)^T (A_l (x) G_l) vec(V_l) with undamped factors.
  double quadratic_form(const ParamSet& v) const;

  const std::vector<KfacLayerState>& layers() const { return layers_; }
  std::vector<KfacLayerState>& mutable_layers() { return layers_; }
  ObjectiveTag tag() const { return tag_; }
  const KfacOptions& options() const { return options_; }
  int log_std_dim() const { return log_std_dim_; }
  bool ready() const;
  // Largest number of stats updates since the last refresh over all layers.
  int staleness() const;

  static constexpr double kLogStdFisher = 2.0;

 private:
  void check_shape(const ParamSet& p) const;

  std::vector<KfacLayerState> layers_;
  int log_std_dim_ = 0;
  ObjectiveTag tag_ = ObjectiveTag::kReward;
  KfacOptions options_;
};

}  // namespace kfcpo

#endif  // KFCPO_KFAC_HPP_
