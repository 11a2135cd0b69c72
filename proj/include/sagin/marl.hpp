#pragma once

// Centralized-training / distributed-execution actor-critic engine and the
// episode driver that couples it with dynamic clustering.
//
// Each cluster head runs an actor on its own normalized observation; one
// critic (held by the satellite) scores joint observations and actions.
// Joint vectors are padded to a fixed number of agent slots and carry a
// presence mask, so the critic shape survives changes in the head set.

#include <cstdint>
#include <deque>
#include <functional>
#include <limits>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sagin/clustering.hpp"
#include "sagin/env.hpp"
#include "sagin/nn.hpp"

namespace sagin::marl {

/// Sizes of the padded joint vectors.
struct JointLayout {
  int max_agents{1};
  int obs_dim{1};
  int act_dim{1};

  int joint_obs_dim() const { return max_agents * obs_dim; }
  int joint_act_dim() const { return max_agents * act_dim; }
  /// [joint observation | joint action | presence mask]
  int critic_input_dim() const { return max_agents * (obs_dim + act_dim + 1); }
};

struct Transition {
  std::vector<double> joint_observation;
  std::vector<double> joint_action;
  std::vector<double> mask;
  double reward{};
  std::vector<double> next_joint_observation;
  std::vector<double> next_mask;
  bool done{};
};

class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);

  void push(Transition t);
  std::size_t size() const { return ring_.size(); }
  std::size_t capacity() const { return capacity_; }
  /// 0 = oldest surviving transition.
  const Transition& at(std::size_t i) const;
  /// Uniform draw of `batch` distinct transitions.
  std::vector<const Transition*> sample(std::size_t batch, Rng& rng) const;

 private:
  std::size_t capacity_;
  std::vector<Transition> ring_;
  std::size_t head_{0};  // index of the oldest once full
};

/// Euler-discretized Ornstein-Uhlenbeck process, dt = 1.
class OUNoise {
 public:
  OUNoise(int dim, std::uint64_t seed, double sigma = 0.3, double theta = 0.15, double mean = 0.0);

  const std::vector<double>& sample();
  void reset();
  const std::vector<double>& state() const { return state_; }
  double sigma() const { return sigma_; }
  double theta() const { return theta_; }

 private:
  std::vector<double> state_;
  double sigma_;
  double theta_;
  double mean_;
  Rng rng_;
};

struct TrainConfig {
  double gamma{0.95};
  double tau{0.01};
  int batch_size{64};
  int update_period{10};  // slots between train cycles
  int warmup_transitions{1000};
  std::size_t buffer_capacity{100000};
  double actor_learning_rate{0.01};
  double critic_learning_rate{0.001};
  std::vector<int> actor_hidden{128, 128};
  std::vector<int> critic_hidden{256, 128};
  double noise_sigma{0.3};
  double noise_theta{0.15};
  double reward_scale{1e-9};  // profit (cycles) -> learner units
  double logit_penalty{1e-3}; // L2 weight on the actor's pre-head outputs
  int max_agents{0};          // 0: derived from the run mode
};

void validate(const TrainConfig& cfg);

struct AgentBundle {
  int id{};  // head UAV id
  nn::DenseNet actor;
  nn::DenseNet target_actor;
  nn::AdamState actor_optimizer;
  OUNoise noise;
};

/// Softmax over device logits followed by a sigmoid priority unit.
nn::DenseNet make_actor(int obs_dim, int n_devices, const std::vector<int>& hidden, Rng& rng);
AgentBundle make_agent(int id, int obs_dim, int n_devices, const TrainConfig& cfg, Rng& init_rng,
                       std::uint64_t noise_seed);

struct Critic {
  nn::DenseNet net;
  nn::DenseNet target;
  nn::AdamState optimizer;
};

Critic make_critic(const JointLayout& layout, const TrainConfig& cfg, Rng& rng);

struct SelectedAction {
  env::Action action;
  std::vector<double> encoding;  // device probabilities, then priority
};

/// Deterministic actor output, optionally perturbed by the agent's OU noise
/// (on device logits and the pre-sigmoid priority). The executed device is the
/// argmax logit.
SelectedAction select_action(AgentBundle& agent, std::span<const double> observation, bool explore, int n_bs);

using Batch = std::vector<const Transition*>;

/// Critic input columns for a batch. With `next`, the next observations and
/// masks are filled and the action rows are left zero.
nn::Matrix critic_input(const JointLayout& layout, const Batch& batch, bool next = false);

/// y = r + gamma * (1 - done) * Q'(o', mu'(o')) per sample.
std::vector<double> critic_target(const Critic& critic, std::span<const AgentBundle* const> agents, const Batch& batch,
                                  const JointLayout& layout, const TrainConfig& cfg);

/// One Adam step on the mean squared TD error; returns the pre-step loss.
double critic_update(Critic& critic, const Batch& batch, std::span<const double> targets, const JointLayout& layout);

struct ActorGradient {
  nn::Gradients gradients;  // of the loss -mean(Q) + logit_penalty * mean |z|^2
  double objective{std::numeric_limits<double>::quiet_NaN()};  // mean Q before the step
  int samples{};
};

/// Gradient of the actor loss for the agent in `slot`, chained through the
/// critic, over the samples where that agent was present.
ActorGradient actor_gradient(const nn::DenseNet& actor, int slot, const Critic& critic, const Batch& batch,
                             const JointLayout& layout, double logit_penalty = 0.0);

/// One ascent step on mean Q (less `logit_penalty` times the mean squared
/// pre-head output) for the agent in `slot`, using only samples where it was
/// present; returns the pre-step mean Q (NaN when it had no samples).
double actor_update(AgentBundle& agent, int slot, const Critic& critic, const Batch& batch, const JointLayout& layout,
                    double logit_penalty = 0.0);

struct TrainMetrics {
  bool trained{false};
  double critic_loss{std::numeric_limits<double>::quiet_NaN()};
  double actor_objective{std::numeric_limits<double>::quiet_NaN()};
};

/// Sample, critic target, critic step, per-agent actor steps, soft updates.
/// Skips (trained = false) while the buffer holds fewer than
/// max(warmup, batch) transitions.
TrainMetrics train_cycle(std::span<AgentBundle* const> agents, Critic& critic, const ReplayBuffer& buffer,
                         const TrainConfig& cfg, const JointLayout& layout, Rng& rng);

// ---------------------------------------------------------------------------
// Episode driver

enum class RunMode : std::uint8_t {
  Clustered,        // one agent per cluster head, shared critic (CMADDPG)
  PerUav,           // one agent per UAV, shared critic (naive MADDPG)
  PerUavIndependent // one agent per UAV, private critic each (MAAC)
};

/// Per-slot record consumed by the metrics layer.
struct SlotRecord {
  int episode{};
  std::int64_t slot{};
  double reward{};
  int spawned{};
  int on_time{};
  int late{};
  double short_deadline_profit{};  // on-time profit from tasks with deadline <= short band
  std::vector<double> device_cycles;  // cycles finished per queue index (BSs, satellite, UAV CPUs)
  int cluster_count{};
  double critic_loss{std::numeric_limits<double>::quiet_NaN()};
  double actor_objective{std::numeric_limits<double>::quiet_NaN()};
};

struct RunArtifacts {
  std::vector<SlotRecord> slots;
  std::vector<int> agent_counts;          // per episode (max over slots)
  std::vector<double> episode_train_seconds;
  std::vector<double> episode_wall_seconds;
  int train_cycles{};
  std::vector<std::pair<std::string, nn::DenseNet>> networks;  // final parameters for checkpointing
  std::vector<env::EpisodeCounters> episode_counters;
};

struct RunOptions {
  std::uint64_t seed{1};
  int episodes{1};
  bool explore{true};
  bool train{true};
  std::ostream* cluster_log{nullptr};
  std::ostream* trace_out{nullptr};  // per-task trace of every episode
  std::function<void(const SlotRecord&)> on_slot;  // called as each slot finishes
};

/// Builds a per-slot record from a finished step.
SlotRecord summarize_step(int episode, std::int64_t slot, const env::StepOutcome& outcome, const env::EnvConfig& cfg,
                          int cluster_count, int spawned);

/// Deterministic seed for episode `episode` of a run seeded with `seed`.
std::uint64_t episode_seed(std::uint64_t seed, int episode);
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

RunArtifacts run_marl(const env::EnvConfig& env_cfg, const cluster::ClusterConfig& cluster_cfg,
                      const TrainConfig& train_cfg, RunMode mode, const RunOptions& options);

/// CMADDPG: clustered agents, global critic.
RunArtifacts cmaddpg_run(const env::EnvConfig& env_cfg, const cluster::ClusterConfig& cluster_cfg,
                         const TrainConfig& train_cfg, const RunOptions& options);

}  // namespace sagin::marl
