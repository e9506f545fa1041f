#include "kfcpo/trust.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "kfcpo/errors.hpp"

namespace kfcpo {

void TrustConfig::validate() const {
  if (!(kl_target > 0.0)) throw ConfigError("trust.kl_target must be > 0");
  if (!(kl_rollback >= 0.0)) throw ConfigError("trust.kl_rollback must be >= 0");
  if (!(nu_max > 0.0)) throw ConfigError("trust.nu_max must be > 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("trust.momentum must lie in [0, 1)");
  if (!(learning_rate > 0.0)) throw ConfigError("trust.lr must be > 0");
  if (kl_target > kl_rollback) {
    spdlog::warn("trust.kl_target {} exceeds trust.kl_rollback {}; most steps will roll back",
                 kl_target, kl_rollback);
  }
}

double scale_factor(double quadratic, double kl_target, Eigen::Index minibatch_size,
                    Eigen::Index epoch_size, double nu_max) {
  if (minibatch_size <= 0 || epoch_size <= 0 || minibatch_size > epoch_size) {
    throw ConfigError("scale_factor needs 0 < |B| <= N");
  }
  if (!(quadratic > kQuadraticFloor)) {
    spdlog::debug("curvature quadratic {} at or below floor, using nu_max", quadratic);
    return nu_max;
  }
  const double ratio = static_cast<double>(minibatch_size) / static_cast<double>(epoch_size);
  return std::min(nu_max, ratio * std::sqrt(2.0 * kl_target / quadratic));
}

double scale_factor(const ParamSet& direction, const CurvatureSet& curvature,
                    double kl_target, Eigen::Index minibatch_size,
                    Eigen::Index epoch_size, double nu_max) {
  return scale_factor(curvature.quadratic_form(direction), kl_target, minibatch_size,
                      epoch_size, nu_max);
}

ParamSet momentum_step(MomentumState& state, const ParamSet& direction, double nu,
                       const TrustConfig& cfg) {
  if (!state.m.same_shape(direction)) throw ConfigError("momentum buffer shape mismatch");
  state.prev_m = state.m;
  state.m *= cfg.momentum;
  axpy(nu, direction, state.m);
  return -cfg.effective_rate() * state.m;
}

RollbackDecision rollback_check(const PolicyNet& policy, const ParamSet& old_params,
                                const ParamSet& candidate, const Eigen::MatrixXd& obs,
                                double kl_rollback, KlDirection direction) {
  RollbackDecision d;
  if (!candidate.all_finite()) {
    d.kl = std::numeric_limits<double>::infinity();
    d.commit = false;
    return d;
  }
  d.kl = policy.mean_kl(old_params, candidate, obs, direction);
  d.commit = std::isfinite(d.kl) && d.kl <= kl_rollback;
  return d;
}

}  // namespace kfcpo
