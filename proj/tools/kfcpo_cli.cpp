#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include <iostream>

#include "kfcpo/checkpoint.hpp"
#include "kfcpo/engine.hpp"
#include "kfcpo/errors.hpp"

using namespace kfcpo;

namespace {

int eval_command(const std::string& ckpt_path, int episodes, bool deterministic,
                 std::uint64_t seed) {
  const Checkpoint ckpt = read_checkpoint(ckpt_path);
  const TrainConfig cfg = parse_config(ckpt.config_text);
  auto env = make_environment(cfg.env);
  const PolicyNet policy = make_policy(cfg, *env);
  if (ckpt.policy_specs != policy.net().specs()) {
    throw ConfigError("checkpoint layers do not match its stored config");
  }
  ParamSet params = ParamSet::zeros(policy.net().specs(), policy.log_std_dim());
  params.assign(ckpt.policy);
  const EvalResult res = evaluate(policy, params, *env, episodes, deterministic, seed);
  std::cout << "episodes " << episodes << " return_mean " << res.return_mean << " cost_mean "
            << res.cost_mean << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"K-FAC constrained policy optimization"};
  app.require_subcommand(1);
  std::string log_level = "warn";
  app.add_option("--log-level", log_level, "trace|debug|info|warn|error|off");

  RunOptions run_opts;
  std::uint64_t seed = 0;
  std::string out_dir;
  std::string resume;
  auto* train = app.add_subcommand("train", "train a policy");
  train->add_option("--config", run_opts.config_path, "config file")->required();
  auto* seed_opt = train->add_option("--seed", seed, "override train.seed");
  auto* out_opt = train->add_option("--out", out_dir, "override train.out_dir");
  auto* resume_opt = train->add_option("--resume", resume, "checkpoint to resume from");

  std::string ckpt_path;
  int episodes = 10;
  bool deterministic = false;
  std::uint64_t eval_seed = 12345;
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  eval->add_option("--ckpt", ckpt_path, "checkpoint file")->required();
  eval->add_option("--episodes", episodes, "number of episodes")->check(CLI::PositiveNumber);
  eval->add_flag("--deterministic", deterministic, "act with the distribution mode");
  eval->add_option("--seed", eval_seed, "evaluation seed");

  std::string metrics_path;
  std::string format = "csv";
  auto* exp = app.add_subcommand("export", "re-emit a metrics file");
  exp->add_option("--metrics", metrics_path, "metrics csv")->required();
  exp->add_option("--format", format, "csv or json")->check(CLI::IsMember({"csv", "json"}));

  CLI11_PARSE(app, argc, argv);
  spdlog::set_level(spdlog::level::from_str(log_level));

  try {
    if (*train) {
      if (*seed_opt) run_opts.seed = seed;
      if (*out_opt) run_opts.out_dir = out_dir;
      if (*resume_opt) run_opts.resume = resume;
      return run(run_opts, std::cout, std::cerr);
    }
    if (*eval) return eval_command(ckpt_path, episodes, deterministic, eval_seed);
    if (*exp) {
      export_metrics(metrics_path, format, std::cout);
      return 0;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
