#pragma once

// Comparison schedulers: per-UAV MADDPG, independent-critic actor-critic, and
// three fixed heuristics, all on the same observation/action contract.

#include <string>

#include "sagin/env.hpp"
#include "sagin/marl.hpp"

namespace sagin::baselines {

enum class BaselineKind : std::uint8_t { NaiveMaddpg, Maac, GreedyNearest, RandomOffload, LocalOnly };

std::string to_string(BaselineKind kind);

/// Estimated total delay of `obs`'s task on each action index, or +inf where
/// the device is unreachable. Transmission + computing + current backlog.
std::vector<double> greedy_estimates(const env::Observation& obs, const env::QueueSnapshot& snapshot,
                                     const env::EnvConfig& cfg);

/// Fixed-rule decision for `kind` in {GreedyNearest, RandomOffload, LocalOnly}.
env::Action heuristic_action(BaselineKind kind, const env::Observation& obs, const env::QueueSnapshot& snapshot,
                             const env::EnvConfig& cfg, Rng& rng);

/// One agent per UAV with a shared critic.
marl::RunArtifacts naive_maddpg_run(const env::EnvConfig& env_cfg, const marl::TrainConfig& train_cfg,
                                    const marl::RunOptions& options);

/// One agent per UAV, each with a critic over its own observation and action.
marl::RunArtifacts maac_run(const env::EnvConfig& env_cfg, const marl::TrainConfig& train_cfg,
                            const marl::RunOptions& options);

/// Episode loop for a heuristic; every UAV decides with its standalone
/// observation.
marl::RunArtifacts heuristic_run(BaselineKind kind, const env::EnvConfig& env_cfg, const marl::RunOptions& options);

}  // namespace sagin::baselines
