#include "sagin/baselines.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <map>

namespace sagin::baselines {

std::string to_string(BaselineKind kind) {
  switch (kind) {
    case BaselineKind::NaiveMaddpg:
      return "maddpg";
    case BaselineKind::Maac:
      return "maac";
    case BaselineKind::GreedyNearest:
      return "greedy";
    case BaselineKind::RandomOffload:
      return "random";
    case BaselineKind::LocalOnly:
      return "local";
  }
  return "unknown";
}

std::vector<double> greedy_estimates(const env::Observation& obs, const env::QueueSnapshot& snapshot,
                                     const env::EnvConfig& cfg) {
  const int n = cfg.device_count();
  if (static_cast<int>(snapshot.capacity_hz.size()) != n || static_cast<int>(obs.rates.size()) != cfg.n_bs + 1)
    throw ContractViolation("snapshot or observation does not match the device count");
  const double workload = obs.task_bits * obs.task_cycles_per_bit;
  std::vector<double> est(static_cast<std::size_t>(n), std::numeric_limits<double>::infinity());
  for (int a = 0; a < n; ++a) {
    const auto i = static_cast<std::size_t>(a);
    double transfer = 0.0;
    if (a > 0) {
      const double rate = obs.rates[i - 1];
      if (!(rate > 0.0)) continue;
      transfer = obs.task_bits / rate + snapshot.propagation_seconds[i];
    }
    est[i] = transfer + workload / snapshot.capacity_hz[i] + snapshot.backlog_seconds[i];
  }
  return est;
}

env::Action heuristic_action(BaselineKind kind, const env::Observation& obs, const env::QueueSnapshot& snapshot,
                             const env::EnvConfig& cfg, Rng& rng) {
  env::Action act;
  switch (kind) {
    case BaselineKind::LocalOnly:
      act.device = DeviceId::local();
      act.priority = 0.5;
      return act;
    case BaselineKind::RandomOffload: {
      std::uniform_int_distribution<int> pick(0, cfg.device_count() - 1);
      act.device = DeviceId::from_action_index(pick(rng), cfg.n_bs);
      act.priority = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
      return act;
    }
    case BaselineKind::GreedyNearest: {
      const auto est = greedy_estimates(obs, snapshot, cfg);
      std::size_t best = 0;
      for (std::size_t i = 1; i < est.size(); ++i)
        if (est[i] < est[best]) best = i;
      act.device = DeviceId::from_action_index(static_cast<int>(best), cfg.n_bs);
      const double dmax = cfg.tasks.max_deadline;
      act.priority = dmax > 0.0 ? std::clamp(1.0 - obs.task_deadline / dmax, 0.0, 1.0) : 0.5;
      return act;
    }
    case BaselineKind::NaiveMaddpg:
    case BaselineKind::Maac:
      break;
  }
  throw ContractViolation("heuristic_action needs a heuristic kind, got " + to_string(kind));
}

marl::RunArtifacts naive_maddpg_run(const env::EnvConfig& env_cfg, const marl::TrainConfig& train_cfg,
                                    const marl::RunOptions& options) {
  return marl::run_marl(env_cfg, cluster::ClusterConfig{}, train_cfg, marl::RunMode::PerUav, options);
}

marl::RunArtifacts maac_run(const env::EnvConfig& env_cfg, const marl::TrainConfig& train_cfg,
                            const marl::RunOptions& options) {
  return marl::run_marl(env_cfg, cluster::ClusterConfig{}, train_cfg, marl::RunMode::PerUavIndependent, options);
}

marl::RunArtifacts heuristic_run(BaselineKind kind, const env::EnvConfig& env_cfg, const marl::RunOptions& options) {
  if (kind == BaselineKind::NaiveMaddpg || kind == BaselineKind::Maac)
    throw ContractViolation("heuristic_run needs a heuristic kind");
  if (options.episodes < 0) throw ContractViolation("episodes must be non-negative");
  marl::RunArtifacts art;
  env::Environment env(env_cfg);
  Rng rng(marl::derive_seed(options.seed, 6));
  for (int ep = 0; ep < options.episodes; ++ep) {
    const auto start = std::chrono::steady_clock::now();
    env.reset(marl::episode_seed(options.seed, ep));
    while (!env.terminated()) {
      const std::int64_t slot = env.slot();
      std::map<std::uint64_t, env::Action> actions;
      for (const auto& task : env.surfaced_tasks()) {
        const auto obs = env::standalone_observation(env.topology(), task.origin_uav, task, env_cfg);
        actions[task.id] = heuristic_action(kind, obs, env.queue_snapshot(task.origin_uav), env_cfg, rng);
      }
      const int spawned = static_cast<int>(actions.size());
      const auto outcome = env.step(actions);
      art.slots.push_back(marl::summarize_step(ep, slot, outcome, env_cfg, 0, spawned));
      if (options.on_slot) options.on_slot(art.slots.back());
    }
    if (options.trace_out != nullptr) env::write_trace(*options.trace_out, env.trace(), false);
    art.agent_counts.push_back(0);
    art.episode_train_seconds.push_back(0.0);
    art.episode_wall_seconds.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
    art.episode_counters.push_back(env.counters());
  }
  return art;
}

}  // namespace sagin::baselines
