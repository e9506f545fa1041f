#include "kfcpo/safegrad.hpp"

#include <algorithm>
#include <cmath>

#include "kfcpo/errors.hpp"

namespace kfcpo {

void MarginConfig::validate() const {
  if (!(cost_limit > 0.0)) throw ConfigError("margin cost limit must be > 0");
  if (!(margin_coeff > 0.0 && margin_coeff < 1.0)) {
    throw ConfigError("margin.lambda must lie in (0, 1)");
  }
  if (!(steepness > 0.0)) throw ConfigError("margin.k must be > 0");
  if (!(projection_eps > 0.0)) throw ConfigError("margin.projection_eps must be > 0");
}

BlendWeights blend_weights(double episodic_cost, const MarginConfig& cfg) {
  // |exponent| <= 700 keeps exp finite; the sigmoid is saturated long before
  const double x = std::clamp(-cfg.steepness * (episodic_cost - cfg.center()), -700.0, 700.0);
  BlendWeights w;
  w.cost = 1.0 / (1.0 + std::exp(x));
  w.reward = 1.0 - w.cost;
  return w;
}

SafetyZone classify_zone(double episodic_cost, const MarginConfig& cfg) {
  if (episodic_cost < cfg.center()) return SafetyZone::kSafe;
  if (episodic_cost <= cfg.cost_limit) return SafetyZone::kMargin;
  return SafetyZone::kUnsafe;
}

ParamSet project_conflict(const ParamSet& g_cost, const ParamSet& g_reward,
                          double projection_eps) {
  const double coeff = dot(g_cost, g_reward) / (squared_norm(g_reward) + projection_eps);
  ParamSet out = g_cost;
  axpy(-coeff, g_reward, out);
  return out;
}

BlendDecision combine(const ParamSet& g_reward, const ParamSet& g_cost,
                      const BlendWeights& weights, double projection_eps) {
  if (!g_reward.same_shape(g_cost)) throw ConfigError("gradient shapes differ");
  if (squared_norm(g_reward) == 0.0 && squared_norm(g_cost) == 0.0) {
    throw DegenerateInputError("reward and cost directions are both zero");
  }
  BlendDecision d;
  d.weights = weights;
  // tie at zero goes to the direct blend, where projection would be a no-op
  d.conflict = dot(g_reward, g_cost) < 0.0;
  d.direction = weights.reward * g_reward;
  if (d.conflict) {
    axpy(weights.cost, project_conflict(g_cost, g_reward, projection_eps), d.direction);
  } else {
    axpy(weights.cost, g_cost, d.direction);
  }
  return d;
}

BlendDecision combine(const ParamSet& g_reward, const ParamSet& g_cost,
                      double episodic_cost, const MarginConfig& cfg) {
  BlendDecision d = combine(g_reward, g_cost, blend_weights(episodic_cost, cfg),
                            cfg.projection_eps);
  d.zone = classify_zone(episodic_cost, cfg);
  return d;
}

const char* zone_name(SafetyZone zone) {
  switch (zone) {
    case SafetyZone::kSafe:
      return "safe";
    case SafetyZone::kMargin:
      return "margin";
    case SafetyZone::kUnsafe:
      return "unsafe";
  }
  return "unknown";
}

}  // namespace kfcpo
