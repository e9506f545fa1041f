#include "kfcpo/engine.hpp"

#include <spdlog/spdlog.h>

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "kfcpo/checkpoint.hpp"
#include "kfcpo/errors.hpp"

namespace kfcpo {

namespace {

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
};

MeanStd complete_episode_stats(const RolloutBatch& batch, bool cost) {
  std::vector<double> xs;
  for (const auto& ep : batch.episodes) {
    if (ep.complete) xs.push_back(cost ? ep.cost_sum : ep.reward_sum);
  }
  if (xs.empty()) return {};
  MeanStd s;
  s.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
  double var = 0.0;
  for (double x : xs) var += (x - s.mean) * (x - s.mean);
  s.std = std::sqrt(var / static_cast<double>(xs.size()));
  return s;
}

std::string fmt_double(double x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

// Gathers the columns listed in idx.
Eigen::MatrixXd take_cols(const Eigen::MatrixXd& m, std::span<const Eigen::Index> idx) {
  Eigen::MatrixXd out(m.rows(), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t k = 0; k < idx.size(); ++k) out.col(static_cast<Eigen::Index>(k)) = m.col(idx[k]);
  return out;
}

Eigen::VectorXd take(const Eigen::VectorXd& v, std::span<const Eigen::Index> idx) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t k = 0; k < idx.size(); ++k) out(static_cast<Eigen::Index>(k)) = v(idx[k]);
  return out;
}

void shuffle(std::vector<Eigen::Index>& order, Rng& rng) {
  for (std::size_t i = order.size(); i-- > 1;) {
    const auto j = static_cast<std::size_t>(rng.uniform_index(i + 1));
    std::swap(order[i], order[j]);
  }
}

std::uint64_t rollout_seed(const TrainConfig& cfg) {
  return Rng::derive_seed(cfg.seed, cfg.env.seed + 0x51ed);
}

}  // namespace

// ------------------------------------------------------ gradient plumbing

MinibatchGradients minibatch_gradients(const PolicyNet& policy, const ParamSet& params,
                                       const Eigen::MatrixXd& obs,
                                       const Eigen::MatrixXd& actions,
                                       const Eigen::VectorXd& old_log_probs,
                                       const Eigen::VectorXd& reward_adv,
                                       const Eigen::VectorXd& cost_adv) {
  MinibatchGradients g;
  g.score = policy.score(params, obs, actions);
  g.ratios = (g.score.log_probs - old_log_probs).array().exp();
  const double inv_n = 1.0 / static_cast<double>(obs.cols());
  // d/dtheta mean(ratio * A) = mean(ratio * A * grad log pi)
  g.reward_loss = policy.weighted_gradient(g.score, -inv_n * g.ratios.cwiseProduct(reward_adv));
  g.cost_loss = policy.weighted_gradient(g.score, inv_n * g.ratios.cwiseProduct(cost_adv));
  return g;
}

double surrogate(const PolicyNet& policy, const ParamSet& params, const Eigen::MatrixXd& obs,
                 const Eigen::MatrixXd& actions, const Eigen::VectorXd& old_log_probs,
                 const Eigen::VectorXd& adv) {
  const Eigen::VectorXd lp = policy.log_probs(params, obs, actions);
  return (lp - old_log_probs).array().exp().matrix().dot(adv) / static_cast<double>(adv.size());
}

PolicyNet make_policy(const TrainConfig& cfg, const Environment& env) {
  const ActionSpace space = env.action_space();
  return PolicyNet(make_mlp_specs(env.obs_dim(), cfg.hidden, space.size),
                   space.discrete ? DistKind::kCategorical : DistKind::kGaussian);
}

Mlp make_critic_net(const TrainConfig& cfg, const Environment& env) {
  return Mlp(make_mlp_specs(env.obs_dim(), cfg.critic_hidden, 1));
}

// ----------------------------------------------------------------- Trainer

Trainer::Trainer(TrainConfig cfg) : cfg_(std::move(cfg)) {
  build();
  Rng init_rng(Rng::derive_seed(cfg_.seed, 0));
  theta_ = policy_.init(init_rng, cfg_.output_gain, cfg_.log_std_init);
  reward_critic_ = ValueCritic(make_critic_net(cfg_, *env_), init_rng);
  cost_critic_ = ValueCritic(make_critic_net(cfg_, *env_), init_rng);
  momentum_ = MomentumState(theta_);
}

Trainer::Trainer(TrainConfig cfg, const Checkpoint& ckpt) : cfg_(std::move(cfg)) {
  build();
  if (ckpt.policy_specs != policy_.net().specs()) {
    throw ConfigError("checkpoint policy layers do not match the config");
  }
  const Mlp critic_net = make_critic_net(cfg_, *env_);
  if (ckpt.critic_specs != critic_net.specs()) {
    throw ConfigError("checkpoint critic layers do not match the config");
  }
  theta_ = ParamSet::zeros(policy_.net().specs(), policy_.log_std_dim());
  theta_.assign(ckpt.policy);
  auto load_critic = [&](ValueCritic& c, const Eigen::VectorXd& flat, const AdamSnapshot& adam) {
    c.net = critic_net;
    c.params = ParamSet::zeros(critic_net.specs());
    c.params.assign(flat);
    c.adam = AdamState(c.params);
    c.adam.m.assign(adam.m);
    c.adam.v.assign(adam.v);
    c.adam.step = adam.step;
  };
  load_critic(reward_critic_, ckpt.reward_critic, ckpt.reward_adam);
  load_critic(cost_critic_, ckpt.cost_critic, ckpt.cost_adam);
  momentum_ = MomentumState(theta_);
  momentum_.m.assign(ckpt.momentum);
  momentum_.prev_m.assign(ckpt.prev_momentum);
  epoch_ = ckpt.epoch;
  global_step_ = ckpt.global_step;
  consecutive_rollbacks_ = ckpt.consecutive_rollbacks;
  rng_.set_state(ckpt.rng_state);
  collector_->set_rng_states(ckpt.worker_rng_states);
  if (ckpt.reward_curvature) ckpt.reward_curvature->restore(reward_fisher_);
  if (ckpt.cost_curvature) ckpt.cost_curvature->restore(cost_fisher_);
}

void Trainer::build() {
  cfg_.margin.cost_limit = cfg_.env.cost_limit;
  cfg_.validate();
  cfg_.trust.validate();
  env_ = make_environment(cfg_.env);
  policy_ = make_policy(cfg_, *env_);
  KfacOptions kopts;
  kopts.decay = cfg_.kfac.decay;
  kopts.damping = cfg_.kfac.damping;
  kopts.max_stale_updates = cfg_.kfac.refresh_interval;
  reward_fisher_ = CurvatureSet(policy_.net().specs(), policy_.log_std_dim(),
                                ObjectiveTag::kReward, kopts);
  cost_fisher_ = CurvatureSet(policy_.net().specs(), policy_.log_std_dim(),
                              ObjectiveTag::kCost, kopts);
  collector_ = std::make_unique<RolloutCollector>(*env_, cfg_.workers, rollout_seed(cfg_));
  rng_ = Rng(Rng::derive_seed(cfg_.seed, 1));
  if (cfg_.steps_per_epoch % cfg_.resolved_minibatch() != 0) {
    spdlog::warn("train.minibatch {} does not divide rollout.steps_per_epoch {}; the trailing {} "
                 "samples of each pass are dropped",
                 cfg_.resolved_minibatch(), cfg_.steps_per_epoch,
                 cfg_.steps_per_epoch % cfg_.resolved_minibatch());
  }
}

void Trainer::set_policy_params(const ParamSet& p) {
  if (!p.same_shape(theta_)) throw ConfigError("policy parameter shape mismatch");
  theta_ = p;
}

BlendWeights Trainer::weights_for(double episodic_cost) const {
  if (!cfg_.margin_enabled) return {1.0, 0.0};
  return blend_weights(episodic_cost, cfg_.margin);
}

double Trainer::minibatch_episodic_cost(const RolloutBatch& batch, const std::vector<int>& owner,
                                        std::span<const Eigen::Index> idx,
                                        double fallback) const {
  std::set<int> seen;
  double sum = 0.0;
  for (Eigen::Index t : idx) {
    const int e = owner[static_cast<std::size_t>(t)];
    if (!batch.episodes[static_cast<std::size_t>(e)].complete) continue;
    if (seen.insert(e).second) sum += batch.episodes[static_cast<std::size_t>(e)].cost_sum;
  }
  return seen.empty() ? fallback : sum / static_cast<double>(seen.size());
}

void Trainer::compute_advantages(RolloutBatch& batch) const {
  const Eigen::VectorXd v_r = reward_critic_.predict(batch.obs);
  const Eigen::VectorXd v_c = cost_critic_.predict(batch.obs);
  std::vector<double> boot_r;
  std::vector<double> boot_c;
  for (const auto& ep : batch.episodes) {
    boot_r.push_back(ep.terminal ? 0.0 : reward_critic_.predict(ep.final_obs));
    boot_c.push_back(ep.terminal ? 0.0 : cost_critic_.predict(ep.final_obs));
  }
  GaeResult r = compute_gae(v_r, batch.rewards, boot_r, batch.episodes, cfg_.gamma, cfg_.gae_lambda);
  GaeResult c = compute_gae(v_c, batch.costs, boot_c, batch.episodes, cfg_.gamma, cfg_.gae_lambda);
  batch.reward_returns = std::move(r.returns);
  batch.cost_returns = std::move(c.returns);
  batch.reward_advantages = std::move(r.advantages);
  batch.cost_advantages = std::move(c.advantages);
  normalize_advantages(batch.reward_advantages);
}

EpochMetrics Trainer::train_epoch() {
  const auto t0 = std::chrono::steady_clock::now();
  const ValueCritic critic_r_backup = reward_critic_;
  const ValueCritic critic_c_backup = cost_critic_;
  const MomentumState momentum_backup = momentum_;
  const int stall_backup = consecutive_rollbacks_;

  EpochMetrics m;
  m.epoch = epoch_ + 1;
  try {
    RolloutBatch batch = collector_->collect(policy_, theta_, cfg_.steps_per_epoch);

    // critic targets from the pre-update critics, advantages from the updated ones
    compute_advantages(batch);
    update_critics(batch, reward_critic_, cost_critic_, cfg_.critic, rng_);
    compute_advantages(batch);
    batch.episodic_cost = episodic_cost(batch);

    const MeanStd ret = complete_episode_stats(batch, false);
    const MeanStd cst = complete_episode_stats(batch, true);
    m.return_mean = ret.mean;
    m.return_std = ret.std;
    m.cost_ep_mean = cst.mean;
    m.cost_ep_std = cst.std;

    const BlendWeights epoch_weights = weights_for(batch.episodic_cost);
    m.w_r = epoch_weights.reward;
    m.w_c = epoch_weights.cost;

    const Eigen::Index n = batch.size();
    const Eigen::Index mb = cfg_.resolved_minibatch();
    const Eigen::Index minibatches = n / mb;
    const std::vector<int> owner =
        cfg_.margin_per_minibatch ? batch.episode_of_step() : std::vector<int>{};
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);

    int conflicts = 0;
    int committed = 0;
    double kl_sum = 0.0;
    double nu_sum = 0.0;
    m.nu_min = std::numeric_limits<double>::infinity();
    m.nu_max = 0.0;

    for (int pass = 0; pass < cfg_.passes; ++pass) {
      shuffle(order, rng_);
      for (Eigen::Index b = 0; b < minibatches; ++b) {
        const std::span<const Eigen::Index> idx(order.data() + b * mb, static_cast<std::size_t>(mb));
        const Eigen::MatrixXd obs = take_cols(batch.obs, idx);
        const Eigen::MatrixXd actions = take_cols(batch.actions, idx);
        const MinibatchGradients grads =
            minibatch_gradients(policy_, theta_, obs, actions, take(batch.old_log_probs, idx),
                                take(batch.reward_advantages, idx), take(batch.cost_advantages, idx));
        ++global_step_;
        ++m.updates;
        UpdateRecord rec;
        rec.epoch = m.epoch;
        rec.step = global_step_;

        if (global_step_ % cfg_.kfac.stats_interval == 0) {
          const auto stats = grads.score.layer_stats();
          reward_fisher_.update_stats(stats);
          cost_fisher_.update_stats(stats);
        }
        if (!reward_fisher_.ready()) {
          reward_fisher_.refresh_eig();
          ++m.fisher_refreshes;
        }
        if (!cost_fisher_.ready()) {
          cost_fisher_.refresh_eig();
          ++m.fisher_refreshes;
        }
        rec.staleness = std::max(reward_fisher_.staleness(), cost_fisher_.staleness());

        const ParamSet nat_r = reward_fisher_.apply_inverse(grads.reward_loss);
        const ParamSet nat_c = cost_fisher_.apply_inverse(grads.cost_loss);
        BlendWeights weights = epoch_weights;
        if (cfg_.margin_per_minibatch && cfg_.margin_enabled) {
          weights = weights_for(minibatch_episodic_cost(batch, owner, idx, batch.episodic_cost));
        }

        bool have_direction = true;
        BlendDecision decision;
        try {
          decision = combine(nat_r, nat_c, weights, cfg_.margin.projection_eps);
        } catch (const DegenerateInputError&) {
          have_direction = false;
        }

        if (have_direction) {
          conflicts += decision.conflict ? 1 : 0;
          rec.conflict = decision.conflict;
          const double nu = scale_factor(decision.direction, reward_fisher_, cfg_.trust.kl_target,
                                         mb, n, cfg_.trust.nu_max);
          rec.nu = nu;
          nu_sum += nu;
          m.nu_min = std::min(m.nu_min, nu);
          m.nu_max = std::max(m.nu_max, nu);
          if (cfg_.trust.stall_reset > 0 && consecutive_rollbacks_ >= cfg_.trust.stall_reset) {
            // restored momentum alone can keep every step outside the trust region
            spdlog::info("step {}: {} consecutive rollbacks, clearing momentum", global_step_,
                         consecutive_rollbacks_);
            momentum_.m = momentum_.m.zeros_like();
            consecutive_rollbacks_ = 0;
            rec.momentum_cleared = true;
          }
          ParamSet candidate = theta_;
          candidate += momentum_step(momentum_, decision.direction, nu, cfg_.trust);
          const RollbackDecision rb = rollback_check(policy_, theta_, candidate, obs,
                                                     cfg_.trust.kl_rollback, cfg_.trust.kl_direction);
          rec.kl = rb.kl;
          if (rb.commit) {
            theta_ = std::move(candidate);
            rec.committed = true;
            ++committed;
            kl_sum += rb.kl;
            m.kl_max = std::max(m.kl_max, rb.kl);
            consecutive_rollbacks_ = 0;
          } else {
            momentum_.restore();
            ++m.rollbacks;
            ++consecutive_rollbacks_;
          }
        } else {
          rec.skipped = true;
        }
        if (observer_) observer_(rec);

        // refresh regardless of the rollback outcome so no basis is used
        // more than T_f steps after it was computed
        if (global_step_ % cfg_.kfac.refresh_interval == 0) {
          reward_fisher_.refresh_eig();
          cost_fisher_.refresh_eig();
          m.fisher_refreshes += 2;
        }
      }
    }
    const int attempted = m.updates;
    m.conflict_frac = attempted > 0 ? static_cast<double>(conflicts) / attempted : 0.0;
    m.kl_mean = committed > 0 ? kl_sum / committed : 0.0;
    const int scaled = attempted;
    m.nu_mean = scaled > 0 ? nu_sum / scaled : 0.0;
    if (!std::isfinite(m.nu_min)) m.nu_min = 0.0;
    last_batch_ = std::move(batch);
  } catch (const std::exception& e) {
    reward_critic_ = critic_r_backup;
    cost_critic_ = critic_c_backup;
    momentum_ = momentum_backup;
    consecutive_rollbacks_ = stall_backup;
    throw NumericError("epoch " + std::to_string(m.epoch) + " aborted: " + e.what());
  }
  ++epoch_;
  m.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return m;
}

Checkpoint Trainer::checkpoint() const {
  Checkpoint c;
  c.config_text = to_text(cfg_);
  c.policy_specs = policy_.net().specs();
  c.critic_specs = reward_critic_.net.specs();
  c.policy = theta_.flatten();
  c.reward_critic = reward_critic_.params.flatten();
  c.cost_critic = cost_critic_.params.flatten();
  c.momentum = momentum_.m.flatten();
  c.prev_momentum = momentum_.prev_m.flatten();
  c.reward_adam = {reward_critic_.adam.m.flatten(), reward_critic_.adam.v.flatten(),
                   reward_critic_.adam.step};
  c.cost_adam = {cost_critic_.adam.m.flatten(), cost_critic_.adam.v.flatten(),
                 cost_critic_.adam.step};
  c.epoch = epoch_;
  c.global_step = global_step_;
  c.consecutive_rollbacks = consecutive_rollbacks_;
  c.rng_state = rng_.state();
  c.worker_rng_states = collector_->rng_states();
  if (cfg_.checkpoint_curvature) {
    c.reward_curvature = CurvatureSnapshot::capture(reward_fisher_);
    c.cost_curvature = CurvatureSnapshot::capture(cost_fisher_);
  }
  return c;
}

// ------------------------------------------------------------------- run

std::string metrics_row(const EpochMetrics& m, bool wall_clock) {
  std::string row = std::to_string(m.epoch);
  for (double x : {m.return_mean, m.return_std, m.cost_ep_mean, m.cost_ep_std, m.w_r, m.w_c,
                   m.conflict_frac}) {
    row += ',' + fmt_double(x);
  }
  row += ',' + std::to_string(m.rollbacks);
  row += ',' + fmt_double(m.kl_mean);
  row += ',' + fmt_double(m.nu_mean);
  row += ',' + std::to_string(m.fisher_refreshes);
  row += ',' + fmt_double(wall_clock ? m.seconds : 0.0);
  return row;
}

std::pair<double, double> final_averages(const std::vector<EpochMetrics>& history,
                                         std::size_t window) {
  if (history.empty()) return {0.0, 0.0};
  const std::size_t k = std::min(window, history.size());
  double r = 0.0;
  double c = 0.0;
  for (std::size_t i = history.size() - k; i < history.size(); ++i) {
    r += history[i].return_mean;
    c += history[i].cost_ep_mean;
  }
  return {r / static_cast<double>(k), c / static_cast<double>(k)};
}

namespace {

std::vector<std::vector<std::string>> read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open metrics file '" + path + "'");
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    rows.push_back(std::move(cells));
  }
  return rows;
}

std::vector<EpochMetrics> history_from_csv(const std::string& path) {
  std::vector<EpochMetrics> history;
  const auto rows = read_csv(path);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].size() < 4) continue;
    EpochMetrics m;
    m.epoch = std::stoi(rows[i][0]);
    m.return_mean = std::stod(rows[i][1]);
    m.cost_ep_mean = std::stod(rows[i][3]);
    history.push_back(m);
  }
  return history;
}

}  // namespace

RunSummary run_training(const TrainConfig& cfg_in, const RunOptions& opts, std::ostream& log) {
  TrainConfig cfg = cfg_in;
  if (opts.seed) cfg.seed = *opts.seed;
  if (opts.out_dir) cfg.out_dir = *opts.out_dir;
  namespace fs = std::filesystem;
  fs::create_directories(cfg.out_dir);

  std::unique_ptr<Trainer> trainer;
  if (opts.resume) {
    trainer = std::make_unique<Trainer>(cfg, read_checkpoint(*opts.resume));
  } else {
    trainer = std::make_unique<Trainer>(cfg);
  }

  RunSummary summary;
  summary.metrics_path = (fs::path(cfg.out_dir) / "metrics.csv").string();
  std::vector<EpochMetrics> history;
  const bool append = opts.resume.has_value() && fs::exists(summary.metrics_path);
  if (append) history = history_from_csv(summary.metrics_path);
  std::ofstream csv(summary.metrics_path, append ? std::ios::app : std::ios::trunc);
  if (!csv) throw std::runtime_error("cannot write metrics file '" + summary.metrics_path + "'");
  if (!append) csv << kMetricsHeader << '\n' << std::flush;

  auto save = [&](const std::string& name) {
    const std::string path = (fs::path(cfg.out_dir) / name).string();
    write_checkpoint(trainer->checkpoint(), path);
    return path;
  };

  while (trainer->epoch() < cfg.epochs) {
    const EpochMetrics m = trainer->train_epoch();
    history.push_back(m);
    csv << metrics_row(m, cfg.wall_clock) << '\n' << std::flush;
    if (!csv) throw std::runtime_error("write to metrics file failed");
    ++summary.epochs_run;
    log << "epoch " << m.epoch << " return " << m.return_mean << " cost " << m.cost_ep_mean
        << " w_c " << m.w_c << " rollbacks " << m.rollbacks << "/" << m.updates << '\n';
    if (cfg.checkpoint_interval > 0 && m.epoch % cfg.checkpoint_interval == 0) {
      char name[64];
      std::snprintf(name, sizeof(name), "ckpt_%05d.json", m.epoch);
      save(name);
    }
  }
  summary.checkpoint_path = save("final.json");
  const auto [r, c] = final_averages(history);
  summary.final_return = r;
  summary.final_cost = c;
  log << "final " << std::min<std::size_t>(10, history.size()) << "-epoch averages: return "
      << r << " cost " << c << '\n';
  return summary;
}

int run(const RunOptions& opts, std::ostream& out, std::ostream& err) {
  try {
    const TrainConfig cfg = load_config(opts.config_path);
    run_training(cfg, opts, out);
    return 0;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

EvalResult evaluate(const PolicyNet& policy, const ParamSet& params, Environment& env,
                    int episodes, bool deterministic, std::uint64_t seed) {
  if (episodes < 1) throw ConfigError("evaluation needs at least one episode");
  Rng rng(seed);
  EvalResult res;
  for (int e = 0; e < episodes; ++e) {
    Eigen::VectorXd obs = env.reset(rng.next_u64());
    double ret = 0.0;
    double cost = 0.0;
    while (true) {
      const Distribution dist = policy.distribution(params, obs);
      const Eigen::VectorXd action = deterministic ? mode(dist) : sample(dist, rng);
      StepResult r = env.step(action);
      ret += r.reward;
      cost += r.cost;
      obs = std::move(r.obs);
      if (r.done || r.truncated) break;
    }
    res.returns.push_back(ret);
    res.costs.push_back(cost);
  }
  res.return_mean = std::accumulate(res.returns.begin(), res.returns.end(), 0.0) / episodes;
  res.cost_mean = std::accumulate(res.costs.begin(), res.costs.end(), 0.0) / episodes;
  return res;
}

void export_metrics(const std::string& csv_path, const std::string& format, std::ostream& out) {
  const auto rows = read_csv(csv_path);
  if (rows.empty()) throw ConfigError("metrics file '" + csv_path + "' is empty");
  const auto& header = rows.front();
  if (format == "csv") {
    for (const auto& row : rows) {
      for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << row[i];
      out << '\n';
    }
    return;
  }
  if (format != "json") throw ConfigError("unknown export format '" + format + "'");
  nlohmann::json arr = nlohmann::json::array();
  for (std::size_t r = 1; r < rows.size(); ++r) {
    if (rows[r].size() != header.size()) {
      throw ConfigError("metrics row " + std::to_string(r) + " has the wrong column count");
    }
    nlohmann::json obj = nlohmann::json::object();
    for (std::size_t i = 0; i < header.size(); ++i) obj[header[i]] = std::stod(rows[r][i]);
    arr.push_back(std::move(obj));
  }
  out << arr.dump(2) << '\n';
}

}  // namespace kfcpo
