#include "kfcpo/rollout.hpp"

#include <cmath>
#include <string>
#include <thread>

#include "kfcpo/errors.hpp"

namespace kfcpo {

namespace {

struct WorkerOutput {
  RolloutBatch batch;
  std::exception_ptr error;
};

void run_worker(Environment& env, Rng& rng, const PolicyNet& policy, const ParamSet& params,
                Eigen::Index steps, WorkerOutput& out) {
  try {
    RolloutBatch& b = out.batch;
    b.obs.resize(policy.obs_dim(), steps);
    b.actions.resize(policy.action_width(), steps);
    b.old_log_probs.resize(steps);
    b.rewards.resize(steps);
    b.costs.resize(steps);

    Eigen::VectorXd obs = env.reset(rng.next_u64());
    EpisodeSpan ep;
    for (Eigen::Index t = 0; t < steps; ++t) {
      const Distribution dist = policy.distribution(params, obs);
      const Eigen::VectorXd action = sample(dist, rng);
      b.obs.col(t) = obs;
      b.actions.col(t) = action;
      b.old_log_probs(t) = log_prob(dist, action);
      StepResult r = env.step(action);
      b.rewards(t) = r.reward;
      b.costs(t) = r.cost;
      ++ep.length;
      ep.reward_sum += r.reward;
      ep.cost_sum += r.cost;
      obs = std::move(r.obs);
      const bool ended = r.done || r.truncated;
      if (ended || t + 1 == steps) {
        ep.complete = ended;
        ep.terminal = r.done;
        ep.final_obs = obs;
        b.episodes.push_back(ep);
        ep = EpisodeSpan{};
        ep.start = t + 1;
        if (ended && t + 1 < steps) obs = env.reset(rng.next_u64());
      }
    }
  } catch (...) {
    out.error = std::current_exception();
  }
}

}  // namespace

std::vector<int> RolloutBatch::episode_of_step() const {
  std::vector<int> owner(static_cast<std::size_t>(size()), -1);
  for (std::size_t e = 0; e < episodes.size(); ++e) {
    for (Eigen::Index t = 0; t < episodes[e].length; ++t) {
      owner[static_cast<std::size_t>(episodes[e].start + t)] = static_cast<int>(e);
    }
  }
  return owner;
}

RolloutCollector::RolloutCollector(const Environment& prototype, int workers,
                                   std::uint64_t seed) {
  if (workers < 1) throw ConfigError("rollout.workers must be >= 1");
  for (int w = 0; w < workers; ++w) {
    envs_.push_back(prototype.clone());
    rngs_.emplace_back(Rng::derive_seed(seed, static_cast<std::uint64_t>(w)));
  }
}

RolloutBatch RolloutCollector::collect(const PolicyNet& policy, const ParamSet& params,
                                       Eigen::Index steps) {
  const auto workers = static_cast<Eigen::Index>(envs_.size());
  if (steps / workers < envs_.front()->horizon()) {
    throw ConfigError("rollout.steps_per_epoch per worker (" + std::to_string(steps / workers) +
                      ") is shorter than one episode horizon (" +
                      std::to_string(envs_.front()->horizon()) + ")");
  }
  if (envs_.front()->obs_dim() != policy.obs_dim()) {
    throw ConfigError("policy input does not match environment observation");
  }
  std::vector<WorkerOutput> outputs(envs_.size());
  std::vector<Eigen::Index> counts(envs_.size(), steps / workers);
  for (Eigen::Index w = 0; w < steps % workers; ++w) ++counts[w];

  if (workers == 1) {
    run_worker(*envs_[0], rngs_[0], policy, params, counts[0], outputs[0]);
  } else {
    std::vector<std::thread> threads;
    for (std::size_t w = 0; w < envs_.size(); ++w) {
      threads.emplace_back(run_worker, std::ref(*envs_[w]), std::ref(rngs_[w]),
                           std::cref(policy), std::cref(params), counts[w],
                           std::ref(outputs[w]));
    }
    for (auto& t : threads) t.join();
  }
  for (const auto& o : outputs) {
    if (o.error) std::rethrow_exception(o.error);
  }
  if (workers == 1) return std::move(outputs[0].batch);

  RolloutBatch merged;
  merged.obs.resize(policy.obs_dim(), steps);
  merged.actions.resize(policy.action_width(), steps);
  merged.old_log_probs.resize(steps);
  merged.rewards.resize(steps);
  merged.costs.resize(steps);
  Eigen::Index offset = 0;
  for (auto& o : outputs) {
    const Eigen::Index n = o.batch.size();
    merged.obs.middleCols(offset, n) = o.batch.obs;
    merged.actions.middleCols(offset, n) = o.batch.actions;
    merged.old_log_probs.segment(offset, n) = o.batch.old_log_probs;
    merged.rewards.segment(offset, n) = o.batch.rewards;
    merged.costs.segment(offset, n) = o.batch.costs;
    for (auto ep : o.batch.episodes) {
      ep.start += offset;
      merged.episodes.push_back(std::move(ep));
    }
    offset += n;
  }
  return merged;
}

std::vector<std::string> RolloutCollector::rng_states() const {
  std::vector<std::string> s;
  for (const auto& r : rngs_) s.push_back(r.state());
  return s;
}

void RolloutCollector::set_rng_states(const std::vector<std::string>& states) {
  if (states.size() != rngs_.size()) throw ConfigError("worker RNG state count mismatch");
  for (std::size_t i = 0; i < states.size(); ++i) rngs_[i].set_state(states[i]);
}

GaeResult compute_gae(const Eigen::VectorXd& values, const Eigen::VectorXd& signal,
                      const std::vector<double>& bootstrap,
                      const std::vector<EpisodeSpan>& episodes, double gamma,
                      double lambda) {
  if (values.size() != signal.size()) throw ConfigError("GAE values/signal length mismatch");
  if (bootstrap.size() != episodes.size()) throw ConfigError("GAE bootstrap count mismatch");
  GaeResult out;
  out.advantages = Eigen::VectorXd::Zero(signal.size());
  Eigen::Index covered = 0;
  for (std::size_t e = 0; e < episodes.size(); ++e) {
    const auto& ep = episodes[e];
    if (ep.start < 0 || ep.start + ep.length > signal.size()) {
      throw ConfigError("episode span outside the batch");
    }
    double next_value = ep.terminal ? 0.0 : bootstrap[e];
    double running = 0.0;
    for (Eigen::Index t = ep.start + ep.length - 1; t >= ep.start; --t) {
      const double delta = signal(t) + gamma * next_value - values(t);
      running = delta + gamma * lambda * running;
      out.advantages(t) = running;
      next_value = values(t);
    }
    covered += ep.length;
  }
  if (covered != signal.size()) throw ConfigError("episodes do not partition the batch");
  out.returns = out.advantages + values;
  return out;
}

void normalize_advantages(Eigen::VectorXd& adv) {
  if (adv.size() == 0) return;
  const double mean = adv.mean();
  adv.array() -= mean;
  const double std = std::sqrt(adv.squaredNorm() / static_cast<double>(adv.size()));
  if (std > 0.0) adv /= std;
}

namespace {

template <typename F>
double mean_over_complete(const RolloutBatch& batch, F&& value) {
  double sum = 0.0;
  int count = 0;
  for (const auto& ep : batch.episodes) {
    if (!ep.complete) continue;
    sum += value(ep);
    ++count;
  }
  if (count == 0) throw DegenerateInputError("batch holds no complete episode");
  return sum / count;
}

}  // namespace

double episodic_cost(const RolloutBatch& batch) {
  return mean_over_complete(batch, [](const EpisodeSpan& ep) { return ep.cost_sum; });
}

double episodic_return(const RolloutBatch& batch) {
  return mean_over_complete(batch, [](const EpisodeSpan& ep) { return ep.reward_sum; });
}

}  // namespace kfcpo
