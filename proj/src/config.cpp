#include "kfcpo/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>
#include <system_error>

#include "kfcpo/errors.hpp"

namespace kfcpo {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value,
                            const std::string& expected) {
  throw ConfigError("config key '" + key + "': cannot parse '" + value + "' as " + expected);
}

double parse_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size()) bad_value(key, v, "a number");
  return out;
}

template <typename Int>
Int parse_int(const std::string& key, const std::string& v) {
  Int out = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size()) bad_value(key, v, "an integer");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  bad_value(key, v, "a boolean");
}

std::vector<int> parse_int_list(const std::string& key, const std::string& v) {
  std::vector<int> out;
  if (v.empty() || v == "none") return out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_int<int>(key, trim(item)));
  return out;
}

std::string format_double(double x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

std::string format_list(const std::vector<int>& v) {
  if (v.empty()) return "none";
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i > 0) out += ',';
    out += std::to_string(v[i]);
  }
  return out;
}

struct KeyHandler {
  const char* key;
  std::function<void(TrainConfig&, const std::string& key, const std::string& value)> set;
  std::function<std::string(const TrainConfig&)> get;
};

#define KFCPO_DOUBLE(name, field)                                                          \
  KeyHandler {                                                                             \
    name, [](TrainConfig& c, const std::string& k, const std::string& v) {                  \
      c.field = parse_double(k, v);                                                         \
    },                                                                                       \
        [](const TrainConfig& c) { return format_double(c.field); }                         \
  }
#define KFCPO_INT(name, field, type)                                                       \
  KeyHandler {                                                                             \
    name, [](TrainConfig& c, const std::string& k, const std::string& v) {                  \
      c.field = parse_int<type>(k, v);                                                      \
    },                                                                                       \
        [](const TrainConfig& c) { return std::to_string(c.field); }                        \
  }
#define KFCPO_BOOL(name, field)                                                            \
  KeyHandler {                                                                             \
    name, [](TrainConfig& c, const std::string& k, const std::string& v) {                  \
      c.field = parse_bool(k, v);                                                           \
    },                                                                                       \
        [](const TrainConfig& c) { return std::string(c.field ? "true" : "false"); }        \
  }
#define KFCPO_LIST(name, field)                                                            \
  KeyHandler {                                                                             \
    name, [](TrainConfig& c, const std::string& k, const std::string& v) {                  \
      c.field = parse_int_list(k, v);                                                       \
    },                                                                                       \
        [](const TrainConfig& c) { return format_list(c.field); }                           \
  }

const std::vector<KeyHandler>& handlers() {
  static const std::vector<KeyHandler> table = {
      {"env.name", [](TrainConfig& c, const std::string&, const std::string& v) { c.env.name = v; },
       [](const TrainConfig& c) { return c.env.name; }},
      KFCPO_INT("env.seed", env.seed, std::uint64_t),
      KFCPO_DOUBLE("env.cost_limit", env.cost_limit),
      KFCPO_INT("env.horizon", env.horizon, int),
      KFCPO_INT("env.hazards", env.point.hazards, int),
      KFCPO_DOUBLE("env.hazard_radius", env.point.hazard_radius),
      KFCPO_DOUBLE("env.goal_radius", env.point.goal_radius),
      KFCPO_DOUBLE("env.dt", env.point.dt),
      KFCPO_DOUBLE("env.force_scale", env.point.force_scale),
      KFCPO_DOUBLE("env.drag", env.point.drag),
      KFCPO_DOUBLE("env.dense_coeff", env.point.dense_coeff),
      KFCPO_DOUBLE("env.goal_bonus", env.point.goal_bonus),
      KFCPO_INT("env.nearest_hazards", env.point.nearest_hazards, int),
      KFCPO_INT("env.length", env.chain.length, int),
      KFCPO_LIST("env.hazard_states", env.chain.hazard_states),
      KFCPO_DOUBLE("env.slip", env.chain.slip),
      KFCPO_DOUBLE("env.step_penalty", env.chain.step_penalty),
      KFCPO_DOUBLE("env.goal_reward", env.chain.goal_reward),

      KFCPO_LIST("net.hidden", hidden),
      KFCPO_LIST("net.critic_hidden", critic_hidden),
      KFCPO_DOUBLE("net.output_gain", output_gain),
      KFCPO_DOUBLE("net.log_std_init", log_std_init),

      KFCPO_DOUBLE("kfac.decay", kfac.decay),
      KFCPO_DOUBLE("kfac.damping", kfac.damping),
      KFCPO_INT("kfac.stats_interval", kfac.stats_interval, int),
      KFCPO_INT("kfac.refresh_interval", kfac.refresh_interval, int),

      KFCPO_DOUBLE("trust.kl_target", trust.kl_target),
      KFCPO_DOUBLE("trust.kl_rollback", trust.kl_rollback),
      KFCPO_DOUBLE("trust.nu_max", trust.nu_max),
      KFCPO_DOUBLE("trust.momentum", trust.momentum),
      KFCPO_DOUBLE("trust.lr", trust.learning_rate),
      KFCPO_INT("trust.stall_reset", trust.stall_reset, int),
      {"trust.kl_direction",
       [](TrainConfig& c, const std::string& k, const std::string& v) {
         if (v == "old_new") {
           c.trust.kl_direction = KlDirection::kOldNew;
         } else if (v == "new_old") {
           c.trust.kl_direction = KlDirection::kNewOld;
         } else {
           bad_value(k, v, "old_new or new_old");
         }
       },
       [](const TrainConfig& c) {
         return std::string(c.trust.kl_direction == KlDirection::kOldNew ? "old_new" : "new_old");
       }},

      KFCPO_BOOL("margin.enabled", margin_enabled),
      KFCPO_DOUBLE("margin.lambda", margin.margin_coeff),
      KFCPO_DOUBLE("margin.k", margin.steepness),
      KFCPO_DOUBLE("margin.projection_eps", margin.projection_eps),
      KFCPO_BOOL("margin.per_minibatch", margin_per_minibatch),

      KFCPO_INT("rollout.steps_per_epoch", steps_per_epoch, int),
      KFCPO_DOUBLE("rollout.gamma", gamma),
      KFCPO_DOUBLE("rollout.lambda", gae_lambda),
      KFCPO_INT("rollout.workers", workers, int),

      KFCPO_INT("train.epochs", epochs, int),
      KFCPO_INT("train.minibatch", minibatch, int),
      KFCPO_INT("train.passes", passes, int),
      KFCPO_INT("train.seed", seed, std::uint64_t),
      KFCPO_DOUBLE("train.critic_lr", critic.lr),
      KFCPO_INT("train.critic_iters", critic.iterations, int),
      KFCPO_INT("train.critic_minibatch", critic.minibatch, int),
      KFCPO_INT("train.checkpoint_interval", checkpoint_interval, int),
      {"train.out_dir", [](TrainConfig& c, const std::string&, const std::string& v) { c.out_dir = v; },
       [](const TrainConfig& c) { return c.out_dir; }},
      KFCPO_BOOL("train.wall_clock", wall_clock),
      KFCPO_BOOL("train.checkpoint_curvature", checkpoint_curvature),
  };
  return table;
}

#undef KFCPO_DOUBLE
#undef KFCPO_INT
#undef KFCPO_BOOL
#undef KFCPO_LIST

}  // namespace

int TrainConfig::resolved_minibatch() const {
  if (minibatch > 0) return minibatch;
  return env.name == "point_hazard" ? 800 : 500;
}

void TrainConfig::validate() const {
  auto require = [](bool ok, const std::string& key, const std::string& what) {
    if (!ok) throw ConfigError("config key '" + key + "': " + what);
  };
  require(env.name == "point_hazard" || env.name == "hazard_chain", "env.name",
          "expected point_hazard or hazard_chain");
  require(env.cost_limit > 0.0, "env.cost_limit", "must be > 0");
  require(env.horizon >= 0, "env.horizon", "must be >= 0");
  for (int h : hidden) require(h > 0, "net.hidden", "sizes must be positive");
  for (int h : critic_hidden) require(h > 0, "net.critic_hidden", "sizes must be positive");
  require(output_gain > 0.0, "net.output_gain", "must be > 0");
  require(kfac.decay > 0.0 && kfac.decay < 1.0, "kfac.decay", "must lie in (0, 1)");
  require(kfac.damping >= 0.0, "kfac.damping", "must be >= 0");
  require(kfac.stats_interval >= 1, "kfac.stats_interval", "must be >= 1");
  require(kfac.refresh_interval >= kfac.stats_interval, "kfac.refresh_interval",
          "must be >= kfac.stats_interval");
  require(trust.kl_target > 0.0, "trust.kl_target", "must be > 0");
  require(trust.kl_rollback >= 0.0, "trust.kl_rollback", "must be >= 0");
  require(trust.nu_max > 0.0, "trust.nu_max", "must be > 0");
  require(trust.momentum >= 0.0 && trust.momentum < 1.0, "trust.momentum", "must lie in [0, 1)");
  require(trust.learning_rate > 0.0, "trust.lr", "must be > 0");
  require(trust.stall_reset >= 0, "trust.stall_reset", "must be >= 0");
  require(margin.margin_coeff > 0.0 && margin.margin_coeff < 1.0, "margin.lambda",
          "must lie in (0, 1)");
  require(margin.steepness > 0.0, "margin.k", "must be > 0");
  require(margin.projection_eps > 0.0, "margin.projection_eps", "must be > 0");
  require(steps_per_epoch >= 1, "rollout.steps_per_epoch", "must be >= 1");
  require(gamma >= 0.0 && gamma < 1.0, "rollout.gamma", "must lie in [0, 1)");
  require(gae_lambda >= 0.0 && gae_lambda <= 1.0, "rollout.lambda", "must lie in [0, 1]");
  require(workers >= 1, "rollout.workers", "must be >= 1");
  require(epochs >= 0, "train.epochs", "must be >= 0");
  require(minibatch >= 0, "train.minibatch", "must be >= 0");
  require(resolved_minibatch() <= steps_per_epoch, "train.minibatch",
          "must not exceed rollout.steps_per_epoch");
  require(passes >= 1, "train.passes", "must be >= 1");
  require(critic.lr > 0.0, "train.critic_lr", "must be > 0");
  require(critic.iterations >= 0, "train.critic_iters", "must be >= 0");
  require(critic.minibatch >= 1, "train.critic_minibatch", "must be >= 1");
  require(checkpoint_interval >= 0, "train.checkpoint_interval", "must be >= 0");
}

void set_config_value(TrainConfig& cfg, const std::string& key, const std::string& value) {
  for (const auto& h : handlers()) {
    if (key == h.key) {
      h.set(cfg, key, value);
      if (key == "env.cost_limit") cfg.margin.cost_limit = cfg.env.cost_limit;
      return;
    }
  }
  throw ConfigError("unknown config key '" + key + "'");
}

TrainConfig parse_config(const std::string& text) {
  TrainConfig cfg;
  cfg.margin.cost_limit = cfg.env.cost_limit;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    }
    set_config_value(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  cfg.validate();
  return cfg;
}

TrainConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string to_text(const TrainConfig& cfg) {
  std::string out;
  for (const auto& h : handlers()) {
    out += h.key;
    out += " = ";
    out += h.get(cfg);
    out += '\n';
  }
  return out;
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& h : handlers()) keys.emplace_back(h.key);
  return keys;
}

}  // namespace kfcpo
