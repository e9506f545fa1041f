#ifndef KFCPO_TRUST_HPP_
#define KFCPO_TRUST_HPP_

#include <Eigen/Dense>

#include "kfcpo/kfac.hpp"
#include "kfcpo/nn.hpp"

namespace kfcpo {

struct TrustConfig {
  double kl_target = 0.005;    // delta in the step-size rule
  double kl_rollback = 0.01;   // minibatch KL above this rejects the update
  double nu_max = 1.0;
  double momentum = 0.9;       // beta
  double learning_rate = 0.1;  // effective rate is lr * (1 - beta)
  KlDirection kl_direction = KlDirection::kOldNew;
  // After this many consecutive rollbacks the momentum buffer is cleared;
  // 0 never clears it.
  int stall_reset = 16;

  double effective_rate() const { return learning_rate * (1.0 - momentum); }
  void validate() const;
};

struct MomentumState {
  ParamSet m;
  ParamSet prev_m;

  MomentumState() = default;
  explicit MomentumState(const ParamSet& like)
      : m(like.zeros_like()), prev_m(like.zeros_like()) {}

  // Undo the last momentum_step.
  void restore() { m = prev_m; }
};

// Quadratic values at or below this are treated as a flat direction.
inline constexpr double kQuadraticFloor = 1e-12;

// min(nu_max, (|B| / N) * sqrt(2 delta / quadratic)).
double scale_factor(double quadratic, double kl_target, Eigen::Index minibatch_size,
                    Eigen::Index epoch_size, double nu_max);
double scale_factor(const ParamSet& direction, const CurvatureSet& curvature,
                    double kl_target, Eigen::Index minibatch_size,
                    Eigen::Index epoch_size, double nu_max);

// m <- beta m + nu * direction; returns the parameter delta -lr (1 - beta) m.
ParamSet momentum_step(MomentumState& state, const ParamSet& direction, double nu,
                       const TrustConfig& cfg);

struct RollbackDecision {
  bool commit = true;
  double kl = 0.0;
};

// Mean minibatch KL between old and candidate policies. A non-finite KL
// counts as a violation.
RollbackDecision rollback_check(const PolicyNet& policy, const ParamSet& old_params,
                                const ParamSet& candidate, const Eigen::MatrixXd& obs,
                                double kl_rollback,
                                KlDirection direction = KlDirection::kOldNew);

}  // namespace kfcpo

#endif  // KFCPO_TRUST_HPP_
