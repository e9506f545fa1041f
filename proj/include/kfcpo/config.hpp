#ifndef KFCPO_CONFIG_HPP_
#define KFCPO_CONFIG_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "kfcpo/cmdp.hpp"
#include "kfcpo/safegrad.hpp"
#include "kfcpo/trust.hpp"

namespace kfcpo {

struct KfacSchedule {
  double decay = 0.95;
  double damping = 1e-3;
  int stats_interval = 1;     // T_s, in minibatch steps
  int refresh_interval = 10;  // T_f, in minibatch steps
};

struct CriticConfig {
  double lr = 1e-3;
  int iterations = 40;  // Adam steps per epoch
  int minibatch = 256;
};

// Every knob of a training run. Keys in the text format are listed in
// config_keys(); N, B, K and epochs defaults are chosen for desk-scale runs.
struct TrainConfig {
  EnvConfig env;
  std::vector<int> hidden = {64, 64};
  std::vector<int> critic_hidden = {64, 64};
  double output_gain = 0.01;
  double log_std_init = -0.5;

  KfacSchedule kfac;
  TrustConfig trust;
  MarginConfig margin;  // cost_limit mirrors env.cost_limit
  bool margin_enabled = true;
  bool margin_per_minibatch = false;

  int steps_per_epoch = 4000;
  double gamma = 0.99;
  double gae_lambda = 0.97;
  int workers = 1;

  int epochs = 250;
  int minibatch = 0;  // 0 picks 800 for point_hazard, 500 otherwise
  int passes = 4;     // K
  std::uint64_t seed = 0;
  CriticConfig critic;
  int checkpoint_interval = 10;
  std::string out_dir = "runs";
  bool wall_clock = true;  // false writes 0 in the seconds column
  bool checkpoint_curvature = false;

  int resolved_minibatch() const;
  // Throws ConfigError naming the offending key.
  void validate() const;
};

// Flat `key = value` text with dotted sections; '#' starts a comment.
// Unknown keys and malformed values throw ConfigError naming the key.
TrainConfig parse_config(const std::string& text);
TrainConfig load_config(const std::string& path);
// Applies one key; the same path parse_config uses for each line.
void set_config_value(TrainConfig& cfg, const std::string& key, const std::string& value);
// Snapshot that parses back to an equal config.
std::string to_text(const TrainConfig& cfg);
std::vector<std::string> config_keys();

}  // namespace kfcpo

#endif  // KFCPO_CONFIG_HPP_
