#ifndef KFCPO_SAFEGRAD_HPP_
#define KFCPO_SAFEGRAD_HPP_

#include "kfcpo/nn.hpp"

namespace kfcpo {

struct MarginConfig {
  double cost_limit = 25.0;       // C
  double margin_coeff = 0.8;      // lambda, margin center at lambda * C
  double steepness = 0.5;         // k, per unit of cost
  double projection_eps = 1e-8;

  double center() const { return margin_coeff * cost_limit; }
  // Throws ConfigError on out-of-range fields.
  void validate() const;
};

enum class SafetyZone { kSafe, kMargin, kUnsafe };

struct BlendWeights {
  double reward = 0.5;
  double cost = 0.5;
};

struct BlendDecision {
  BlendWeights weights;
  bool conflict = false;
  SafetyZone zone = SafetyZone::kSafe;
  ParamSet direction;
};

// Sigmoid in episodic cost centered on the margin center.
BlendWeights blend_weights(double episodic_cost, const MarginConfig& cfg);

SafetyZone classify_zone(double episodic_cost, const MarginConfig& cfg);

// g_c - <g_c, g_r> / (|g_r|^2 + eps) * g_r
ParamSet project_conflict(const ParamSet& g_cost, const ParamSet& g_reward,
                          double projection_eps);

// Blends reward and cost directions with the weights for episodic_cost,
// projecting the cost direction off the reward direction when the two have
// a negative inner product. Throws DegenerateInputError if both are zero.
BlendDecision combine(const ParamSet& g_reward, const ParamSet& g_cost,
                      double episodic_cost, const MarginConfig& cfg);
BlendDecision combine(const ParamSet& g_reward, const ParamSet& g_cost,
                      const BlendWeights& weights, double projection_eps);

const char* zone_name(SafetyZone zone);

}  // namespace kfcpo

#endif  // KFCPO_SAFEGRAD_HPP_
