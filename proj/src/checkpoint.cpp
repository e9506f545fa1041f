#include "kfcpo/checkpoint.hpp"

#include <json.hpp>

#include <fstream>
#include <sstream>

#include "kfcpo/errors.hpp"

namespace kfcpo {

namespace {

using nlohmann::json;

constexpr const char* kFormatTag = "kfcpo-checkpoint";

json vec_to_json(const Eigen::VectorXd& v) {
  return json(std::vector<double>(v.data(), v.data() + v.size()));
}

Eigen::VectorXd vec_from_json(const json& j) {
  const auto values = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
}

json mat_to_json(const Eigen::MatrixXd& m) {
  return json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", vec_to_json(m.reshaped())}};
}

Eigen::MatrixXd mat_from_json(const json& j) {
  const Eigen::VectorXd flat = vec_from_json(j.at("data"));
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  if (rows * cols != flat.size()) throw ConfigError("checkpoint matrix size mismatch");
  return flat.reshaped(rows, cols);
}

json specs_to_json(const std::vector<LayerSpec>& specs) {
  json arr = json::array();
  for (const auto& s : specs) {
    arr.push_back({{"in", s.in_dim},
                   {"out", s.out_dim},
                   {"activation", s.activation == Activation::kRelu ? "relu" : "identity"}});
  }
  return arr;
}

std::vector<LayerSpec> specs_from_json(const json& arr) {
  std::vector<LayerSpec> specs;
  for (const auto& j : arr) {
    LayerSpec s;
    s.in_dim = j.at("in").get<int>();
    s.out_dim = j.at("out").get<int>();
    const auto act = j.at("activation").get<std::string>();
    if (act == "relu") {
      s.activation = Activation::kRelu;
    } else if (act == "identity") {
      s.activation = Activation::kIdentity;
    } else {
      throw ConfigError("checkpoint has unknown activation '" + act + "'");
    }
    specs.push_back(s);
  }
  return specs;
}

json adam_to_json(const AdamSnapshot& a) {
  return json{{"m", vec_to_json(a.m)}, {"v", vec_to_json(a.v)}, {"step", a.step}};
}

AdamSnapshot adam_from_json(const json& j) {
  return AdamSnapshot{vec_from_json(j.at("m")), vec_from_json(j.at("v")), j.at("step").get<long>()};
}

json curvature_to_json(const CurvatureSnapshot& c) {
  json arr = json::array();
  for (const auto& l : c.layers) {
    arr.push_back({{"a", mat_to_json(l.a)},
                   {"g", mat_to_json(l.g)},
                   {"stats_step", l.stats_step},
                   {"updates_since_refresh", l.updates_since_refresh},
                   {"has_eig", l.has_eig}});
  }
  return arr;
}

CurvatureSnapshot curvature_from_json(const json& arr) {
  CurvatureSnapshot c;
  for (const auto& j : arr) {
    c.layers.push_back({mat_from_json(j.at("a")), mat_from_json(j.at("g")),
                        j.at("stats_step").get<int>(), j.at("updates_since_refresh").get<int>(),
                        j.at("has_eig").get<bool>()});
  }
  return c;
}

}  // namespace

CurvatureSnapshot CurvatureSnapshot::capture(const CurvatureSet& set) {
  CurvatureSnapshot snap;
  for (const auto& l : set.layers()) {
    snap.layers.push_back({l.a, l.g, l.stats_step, l.updates_since_refresh, l.has_eig});
  }
  return snap;
}

void CurvatureSnapshot::restore(CurvatureSet& set) const {
  auto& layers_out = set.mutable_layers();
  if (layers_out.size() != layers.size()) throw ConfigError("checkpoint curvature layer count mismatch");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (layers_out[i].a.rows() != layers[i].a.rows() || layers_out[i].g.rows() != layers[i].g.rows()) {
      throw ConfigError("checkpoint curvature shape mismatch");
    }
    layers_out[i].a = layers[i].a;
    layers_out[i].g = layers[i].g;
    layers_out[i].stats_step = layers[i].stats_step;
  }
  // the eigensolver is deterministic, so recomputing reproduces the saved basis
  bool any_eig = false;
  for (const auto& l : layers) any_eig = any_eig || l.has_eig;
  if (any_eig) set.refresh_eig();
  for (std::size_t i = 0; i < layers.size(); ++i) {
    layers_out[i].updates_since_refresh = layers[i].updates_since_refresh;
    layers_out[i].has_eig = layers[i].has_eig;
    layers_out[i].eig_stale = layers[i].updates_since_refresh > 0 || !layers[i].has_eig;
  }
}

void write_checkpoint(const Checkpoint& c, const std::string& path) {
  json j;
  j["format"] = kFormatTag;
  j["version"] = c.version;
  j["config"] = c.config_text;
  j["policy_specs"] = specs_to_json(c.policy_specs);
  j["critic_specs"] = specs_to_json(c.critic_specs);
  j["policy"] = vec_to_json(c.policy);
  j["reward_critic"] = vec_to_json(c.reward_critic);
  j["cost_critic"] = vec_to_json(c.cost_critic);
  j["momentum"] = vec_to_json(c.momentum);
  j["prev_momentum"] = vec_to_json(c.prev_momentum);
  j["reward_adam"] = adam_to_json(c.reward_adam);
  j["cost_adam"] = adam_to_json(c.cost_adam);
  j["epoch"] = c.epoch;
  j["global_step"] = c.global_step;
  j["consecutive_rollbacks"] = c.consecutive_rollbacks;
  j["rng"] = c.rng_state;
  j["worker_rngs"] = c.worker_rng_states;
  if (c.reward_curvature) j["reward_curvature"] = curvature_to_json(*c.reward_curvature);
  if (c.cost_curvature) j["cost_curvature"] = curvature_to_json(*c.cost_curvature);

  // write then rename so an interrupted save never leaves a truncated file
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write checkpoint '" + path + "'");
    out << j.dump();
    if (!out) throw std::runtime_error("short write on checkpoint '" + path + "'");
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    throw std::runtime_error("cannot move checkpoint into place at '" + path + "'");
  }
}

Checkpoint read_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open checkpoint '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("checkpoint '" + path + "' is not valid: " + e.what());
  }
  if (j.value("format", "") != kFormatTag) throw ConfigError("'" + path + "' is not a kfcpo checkpoint");
  Checkpoint c;
  try {
    c.version = j.at("version").get<int>();
    if (c.version != kCheckpointVersion) {
      throw ConfigError("unsupported checkpoint version " + std::to_string(c.version));
    }
    c.config_text = j.at("config").get<std::string>();
    c.policy_specs = specs_from_json(j.at("policy_specs"));
    c.critic_specs = specs_from_json(j.at("critic_specs"));
    c.policy = vec_from_json(j.at("policy"));
    c.reward_critic = vec_from_json(j.at("reward_critic"));
    c.cost_critic = vec_from_json(j.at("cost_critic"));
    c.momentum = vec_from_json(j.at("momentum"));
    c.prev_momentum = vec_from_json(j.at("prev_momentum"));
    c.reward_adam = adam_from_json(j.at("reward_adam"));
    c.cost_adam = adam_from_json(j.at("cost_adam"));
    c.epoch = j.at("epoch").get<int>();
    c.global_step = j.at("global_step").get<long>();
    c.consecutive_rollbacks = j.value("consecutive_rollbacks", 0);
    c.rng_state = j.at("rng").get<std::string>();
    c.worker_rng_states = j.at("worker_rngs").get<std::vector<std::string>>();
    if (j.contains("reward_curvature")) c.reward_curvature = curvature_from_json(j["reward_curvature"]);
    if (j.contains("cost_curvature")) c.cost_curvature = curvature_from_json(j["cost_curvature"]);
  } catch (const json::exception& e) {
    throw ConfigError("checkpoint '" + path + "' is malformed: " + e.what());
  }
  return c;
}

}  // namespace kfcpo
