#include "sagin/marl.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>

#include "sagin/baselines.hpp"

namespace sagin::marl {

// ---------------------------------------------------------------------------
// Replay buffer

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw ContractViolation("replay buffer capacity must be positive");
}

void ReplayBuffer::push(Transition t) {
  if (ring_.size() < capacity_) {
    ring_.push_back(std::move(t));
    return;
  }
  ring_[head_] = std::move(t);
  head_ = (head_ + 1) % capacity_;
}

const Transition& ReplayBuffer::at(std::size_t i) const {
  if (i >= ring_.size()) throw std::out_of_range("replay index " + std::to_string(i));
  return ring_[(head_ + i) % ring_.size()];
}

std::vector<const Transition*> ReplayBuffer::sample(std::size_t batch, Rng& rng) const {
  if (batch > ring_.size())
    throw ContractViolation("batch of " + std::to_string(batch) + " exceeds buffer size " +
                            std::to_string(ring_.size()));
  // Partial Fisher-Yates over indices.
  std::vector<std::size_t> idx(ring_.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::vector<const Transition*> out;
  out.reserve(batch);
  for (std::size_t i = 0; i < batch; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, idx.size() - 1);
    std::swap(idx[i], idx[pick(rng)]);
    out.push_back(&ring_[idx[i]]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// OU noise

OUNoise::OUNoise(int dim, std::uint64_t seed, double sigma, double theta, double mean)
    : state_(static_cast<std::size_t>(dim), mean), sigma_(sigma), theta_(theta), mean_(mean), rng_(seed) {
  if (dim <= 0) throw ContractViolation("noise dimension must be positive");
  if (!(sigma >= 0.0) || !(theta >= 0.0)) throw ContractViolation("noise sigma and theta must be non-negative");
}

const std::vector<double>& OUNoise::sample() {
  std::normal_distribution<double> normal(0.0, 1.0);
  for (auto& x : state_) x += theta_ * (mean_ - x) + sigma_ * normal(rng_);
  return state_;
}

void OUNoise::reset() { std::fill(state_.begin(), state_.end(), mean_); }

// ---------------------------------------------------------------------------
// Networks

void validate(const TrainConfig& c) {
  auto require = [](bool ok, const char* key, const std::string& why) {
    if (!ok) throw ContractViolation(std::string(key) + ": " + why);
  };
  require(c.gamma >= 0.0 && c.gamma < 1.0, "gamma", "must lie in [0, 1)");
  require(c.tau > 0.0 && c.tau <= 1.0, "tau", "must lie in (0, 1]");
  require(c.batch_size > 0, "batch_size", "must be positive");
  require(c.update_period > 0, "update_period", "must be positive");
  require(c.warmup_transitions >= 0, "warmup_transitions", "must be non-negative");
  require(c.buffer_capacity >= static_cast<std::size_t>(c.batch_size), "buffer_capacity", "must hold one batch");
  require(c.actor_learning_rate > 0.0, "actor_learning_rate", "must be positive");
  require(c.critic_learning_rate > 0.0, "critic_learning_rate", "must be positive");
  for (int w : c.actor_hidden) require(w > 0, "actor_hidden", "widths must be positive");
  for (int w : c.critic_hidden) require(w > 0, "critic_hidden", "widths must be positive");
  require(c.noise_sigma >= 0.0, "noise_sigma", "must be non-negative");
  require(c.noise_theta >= 0.0, "noise_theta", "must be non-negative");
  require(c.reward_scale > 0.0, "reward_scale", "must be positive");
  require(c.logit_penalty >= 0.0, "logit_penalty", "must be non-negative");
  require(c.max_agents >= 0, "max_agents", "must be non-negative");
}

nn::DenseNet make_actor(int obs_dim, int n_devices, const std::vector<int>& hidden, Rng& rng) {
  std::vector<int> widths{obs_dim};
  widths.insert(widths.end(), hidden.begin(), hidden.end());
  widths.push_back(n_devices + 1);
  return nn::DenseNet(widths, {{nn::HeadKind::Softmax, 0, n_devices}, {nn::HeadKind::Sigmoid, n_devices, 1}}, rng);
}

AgentBundle make_agent(int id, int obs_dim, int n_devices, const TrainConfig& cfg, Rng& init_rng,
                       std::uint64_t noise_seed) {
  nn::DenseNet actor = make_actor(obs_dim, n_devices, cfg.actor_hidden, init_rng);
  nn::DenseNet target = actor;
  auto opt = nn::AdamState::for_net(actor, cfg.actor_learning_rate);
  return AgentBundle{id, std::move(actor), std::move(target), std::move(opt),
                     OUNoise(n_devices + 1, noise_seed, cfg.noise_sigma, cfg.noise_theta)};
}

Critic make_critic(const JointLayout& layout, const TrainConfig& cfg, Rng& rng) {
  std::vector<int> widths{layout.critic_input_dim()};
  widths.insert(widths.end(), cfg.critic_hidden.begin(), cfg.critic_hidden.end());
  widths.push_back(1);
  nn::DenseNet net(widths, {{nn::HeadKind::Identity, 0, 1}}, rng);
  nn::DenseNet target = net;
  auto opt = nn::AdamState::for_net(net, cfg.critic_learning_rate);
  return Critic{std::move(net), std::move(target), std::move(opt)};
}

SelectedAction select_action(AgentBundle& agent, std::span<const double> observation, bool explore, int n_bs) {
  const int n_dev = n_bs + 2;
  if (agent.actor.output_size() != n_dev + 1)
    throw ContractViolation("actor output size does not match the device count");
  if (static_cast<int>(observation.size()) != agent.actor.input_size())
    throw ContractViolation("observation size does not match the actor input");

  nn::Matrix in = Eigen::Map<const nn::Vector>(observation.data(), static_cast<Eigen::Index>(observation.size()));
  const nn::Cache cache = nn::forward(agent.actor, in);
  nn::Vector z = cache.logits.col(0);
  if (explore) {
    const auto& noise = agent.noise.sample();
    for (Eigen::Index i = 0; i < z.size(); ++i) z[i] += noise[static_cast<std::size_t>(i)];
  }
  if (!z.allFinite()) throw nn::NumericalError("actor produced a non-finite output for agent " + std::to_string(agent.id));

  SelectedAction out;
  Eigen::Index best = 0;
  z.head(n_dev).maxCoeff(&best);
  out.action.device = DeviceId::from_action_index(static_cast<int>(best), n_bs);
  const double top = z.head(n_dev).maxCoeff();
  nn::Vector e = (z.head(n_dev).array() - top).exp().matrix();
  e /= e.sum();
  out.encoding.assign(e.data(), e.data() + e.size());
  const double priority = std::clamp(1.0 / (1.0 + std::exp(-z[n_dev])), 0.0, 1.0);
  out.encoding.push_back(priority);
  out.action.priority = priority;
  return out;
}

// ---------------------------------------------------------------------------
// Update rules

namespace {

void check_transition(const JointLayout& layout, const Transition& t) {
  if (static_cast<int>(t.joint_observation.size()) != layout.joint_obs_dim() ||
      static_cast<int>(t.next_joint_observation.size()) != layout.joint_obs_dim() ||
      static_cast<int>(t.joint_action.size()) != layout.joint_act_dim() ||
      static_cast<int>(t.mask.size()) != layout.max_agents || static_cast<int>(t.next_mask.size()) != layout.max_agents)
    throw ContractViolation("transition dimensions do not match the joint layout");
}

// Observation rows of agent `slot` for the given columns of the batch.
nn::Matrix slot_observations(const JointLayout& layout, const Batch& batch, const std::vector<int>& cols, int slot,
                             bool next) {
  nn::Matrix out(layout.obs_dim, static_cast<Eigen::Index>(cols.size()));
  for (std::size_t c = 0; c < cols.size(); ++c) {
    const auto& src = next ? batch[static_cast<std::size_t>(cols[c])]->next_joint_observation
                           : batch[static_cast<std::size_t>(cols[c])]->joint_observation;
    for (int r = 0; r < layout.obs_dim; ++r)
      out(r, static_cast<Eigen::Index>(c)) = src[static_cast<std::size_t>(slot * layout.obs_dim + r)];
  }
  return out;
}

std::vector<int> present_columns(const Batch& batch, int slot, bool next) {
  std::vector<int> cols;
  for (std::size_t s = 0; s < batch.size(); ++s) {
    const auto& m = next ? batch[s]->next_mask : batch[s]->mask;
    if (m[static_cast<std::size_t>(slot)] > 0.0) cols.push_back(static_cast<int>(s));
  }
  return cols;
}

}  // namespace

nn::Matrix critic_input(const JointLayout& layout, const Batch& batch, bool next) {
  const int od = layout.joint_obs_dim();
  const int ad = layout.joint_act_dim();
  nn::Matrix in = nn::Matrix::Zero(layout.critic_input_dim(), static_cast<Eigen::Index>(batch.size()));
  for (std::size_t s = 0; s < batch.size(); ++s) {
    const Transition& t = *batch[s];
    check_transition(layout, t);
    const auto col = static_cast<Eigen::Index>(s);
    const auto& obs = next ? t.next_joint_observation : t.joint_observation;
    const auto& mask = next ? t.next_mask : t.mask;
    for (int r = 0; r < od; ++r) in(r, col) = obs[static_cast<std::size_t>(r)];
    if (!next)
      for (int r = 0; r < ad; ++r) in(od + r, col) = t.joint_action[static_cast<std::size_t>(r)];
    for (int r = 0; r < layout.max_agents; ++r) in(od + ad + r, col) = mask[static_cast<std::size_t>(r)];
  }
  return in;
}

std::vector<double> critic_target(const Critic& critic, std::span<const AgentBundle* const> agents, const Batch& batch,
                                  const JointLayout& layout, const TrainConfig& cfg) {
  if (static_cast<int>(agents.size()) > layout.max_agents) throw ContractViolation("more agents than joint slots");
  std::vector<double> y(batch.size());
  if (batch.empty()) return y;

  nn::Matrix in = critic_input(layout, batch, true);
  const int od = layout.joint_obs_dim();
  for (std::size_t j = 0; j < agents.size(); ++j) {
    if (agents[j] == nullptr) continue;
    const auto cols = present_columns(batch, static_cast<int>(j), true);
    if (cols.empty()) continue;
    const nn::Matrix obs = slot_observations(layout, batch, cols, static_cast<int>(j), true);
    const nn::Matrix act = nn::forward(agents[j]->target_actor, obs).output;
    if (act.rows() != layout.act_dim) throw ContractViolation("target actor output does not match act_dim");
    for (std::size_t c = 0; c < cols.size(); ++c)
      in.block(od + static_cast<Eigen::Index>(j) * layout.act_dim, cols[c], layout.act_dim, 1) =
          act.col(static_cast<Eigen::Index>(c));
  }
  const nn::Matrix q = nn::forward(critic.target, in).output;
  for (std::size_t s = 0; s < batch.size(); ++s) {
    const double cont = batch[s]->done ? 0.0 : 1.0;
    y[s] = batch[s]->reward + cfg.gamma * cont * q(0, static_cast<Eigen::Index>(s));
  }
  return y;
}

double critic_update(Critic& critic, const Batch& batch, std::span<const double> targets, const JointLayout& layout) {
  if (targets.size() != batch.size()) throw ContractViolation("one target per sample required");
  if (batch.empty()) return 0.0;
  const nn::Matrix in = critic_input(layout, batch);
  const nn::Cache cache = nn::forward(critic.net, in);
  const auto n = static_cast<double>(batch.size());
  nn::Matrix grad(1, in.cols());
  double loss = 0.0;
  for (Eigen::Index s = 0; s < in.cols(); ++s) {
    const double err = cache.output(0, s) - targets[static_cast<std::size_t>(s)];
    loss += err * err;
    grad(0, s) = 2.0 * err / n;
  }
  loss /= n;
  if (!std::isfinite(loss)) throw nn::NumericalError("critic loss is not finite");
  const nn::Gradients g = nn::backward(critic.net, cache, grad);
  nn::adam_step(critic.optimizer, critic.net, g);
  return loss;
}

ActorGradient actor_gradient(const nn::DenseNet& actor, int slot, const Critic& critic, const Batch& batch,
                             const JointLayout& layout, double logit_penalty) {
  if (!(logit_penalty >= 0.0)) throw ContractViolation("logit_penalty must be >= 0");
  if (slot < 0 || slot >= layout.max_agents) throw ContractViolation("agent slot out of range");
  ActorGradient out;
  const auto cols = present_columns(batch, slot, false);
  if (cols.empty()) return out;

  Batch sub;
  sub.reserve(cols.size());
  for (int c : cols) sub.push_back(batch[static_cast<std::size_t>(c)]);
  std::vector<int> all(cols.size());
  std::iota(all.begin(), all.end(), 0);

  const nn::Matrix obs = slot_observations(layout, sub, all, slot, false);
  const nn::Cache actor_cache = nn::forward(actor, obs);
  if (actor_cache.output.rows() != layout.act_dim) throw ContractViolation("actor output does not match act_dim");

  nn::Matrix in = critic_input(layout, sub);
  const Eigen::Index row = layout.joint_obs_dim() + static_cast<Eigen::Index>(slot) * layout.act_dim;
  in.middleRows(row, layout.act_dim) = actor_cache.output;
  const nn::Cache critic_cache = nn::forward(critic.net, in);
  const auto n = static_cast<double>(sub.size());
  out.objective = critic_cache.output.sum() / n;
  if (!std::isfinite(out.objective)) throw nn::NumericalError("actor objective is not finite");

  // Descend on -mean(Q): dL/dQ = -1/n per sample.
  const nn::Matrix dq = nn::Matrix::Constant(1, in.cols(), -1.0 / n);
  const nn::Gradients critic_grads = nn::backward(critic.net, critic_cache, dq);
  const nn::Matrix da = critic_grads.input.middleRows(row, layout.act_dim);
  const nn::Matrix dz = (2.0 * logit_penalty / n) * actor_cache.logits;
  out.gradients = nn::backward(actor, actor_cache, da, logit_penalty > 0.0 ? &dz : nullptr);
  out.samples = static_cast<int>(sub.size());
  return out;
}

double actor_update(AgentBundle& agent, int slot, const Critic& critic, const Batch& batch, const JointLayout& layout,
                    double logit_penalty) {
  const ActorGradient g = actor_gradient(agent.actor, slot, critic, batch, layout, logit_penalty);
  if (g.samples == 0) return g.objective;
  nn::adam_step(agent.actor_optimizer, agent.actor, g.gradients);
  return g.objective;
}

TrainMetrics train_cycle(std::span<AgentBundle* const> agents, Critic& critic, const ReplayBuffer& buffer,
                         const TrainConfig& cfg, const JointLayout& layout, Rng& rng) {
  TrainMetrics m;
  const auto need = static_cast<std::size_t>(std::max(cfg.warmup_transitions, cfg.batch_size));
  if (buffer.size() < need) return m;

  const Batch batch = buffer.sample(static_cast<std::size_t>(cfg.batch_size), rng);
  std::vector<const AgentBundle*> view(agents.begin(), agents.end());
  const auto y = critic_target(critic, view, batch, layout, cfg);
  m.critic_loss = critic_update(critic, batch, y, layout);

  double sum = 0.0;
  int count = 0;
  for (std::size_t j = 0; j < agents.size(); ++j) {
    if (agents[j] == nullptr) continue;
    const double obj = actor_update(*agents[j], static_cast<int>(j), critic, batch, layout, cfg.logit_penalty);
    if (std::isfinite(obj)) {
      sum += obj;
      ++count;
    }
  }
  if (count > 0) m.actor_objective = sum / count;

  nn::soft_update(critic.target, critic.net, cfg.tau);
  for (auto* a : agents)
    if (a != nullptr) nn::soft_update(a->target_actor, a->actor, cfg.tau);
  m.trained = true;
  return m;
}

// ---------------------------------------------------------------------------
// Episode driver

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 over a stream-tagged state
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

std::uint64_t episode_seed(std::uint64_t seed, int episode) {
  return derive_seed(derive_seed(seed, 1), static_cast<std::uint64_t>(episode));
}

SlotRecord summarize_step(int episode, std::int64_t slot, const env::StepOutcome& outcome, const env::EnvConfig& cfg,
                          int cluster_count, int spawned) {
  SlotRecord r;
  r.episode = episode;
  r.slot = slot;
  r.reward = outcome.reward;
  r.spawned = spawned;
  r.on_time = static_cast<int>(outcome.completed.size());
  r.late = static_cast<int>(outcome.violated.size());
  r.cluster_count = cluster_count;
  r.device_cycles.assign(static_cast<std::size_t>(cfg.n_bs + 1 + cfg.n_uavs), 0.0);
  auto account = [&](const env::Completion& c) {
    r.device_cycles.at(static_cast<std::size_t>(c.queue_index)) += c.job.task.workload();
  };
  for (const auto& c : outcome.completed) {
    account(c);
    if (c.job.task.deadline <= cfg.tasks.short_deadline) r.short_deadline_profit += c.profit;
  }
  for (const auto& c : outcome.violated) account(c);
  return r;
}

namespace {

enum Stream : std::uint64_t { kInit = 2, kCluster = 3, kSample = 4, kNoise = 100 };

struct PendingRound {
  Transition t;
  int unresolved{};
  bool next_known{};
  std::vector<int> agents;  // slots present, for the per-agent buffers
};

class Driver {
 public:
  Driver(const env::EnvConfig& env_cfg, const cluster::ClusterConfig& cluster_cfg, const TrainConfig& train_cfg,
         RunMode mode, const RunOptions& options)
      : env_cfg_(env_cfg),
        cluster_cfg_(cluster_cfg),
        cfg_(train_cfg),
        mode_(mode),
        opt_(options),
        env_(env_cfg),
        init_rng_(derive_seed(options.seed, kInit)),
        cluster_rng_(derive_seed(options.seed, kCluster)),
        sample_rng_(derive_seed(options.seed, kSample)),
        heuristic_rng_(derive_seed(options.seed, 5)) {
    validate(train_cfg);
    cluster::validate(cluster_cfg);
    n_bs_ = env_cfg.n_bs;
    n_dev_ = env_cfg.device_count();
    const double area = env_cfg.area_side * env_cfg.area_side;
    target_clusters_ = cluster::optimal_cluster_count(env_cfg.n_uavs, area, cluster_cfg).count;
    int slots = mode == RunMode::Clustered ? target_clusters_ : env_cfg.n_uavs;
    if (train_cfg.max_agents > 0) {
      if (train_cfg.max_agents < slots)
        throw ContractViolation("max_agents (" + std::to_string(train_cfg.max_agents) + ") is below the " +
                                std::to_string(slots) + " agents this run needs");
      slots = train_cfg.max_agents;
    }
    layout_ = JointLayout{slots, env::Observation::dimension(n_bs_), n_dev_ + 1};

    const bool independent = mode == RunMode::PerUavIndependent;
    const JointLayout critic_layout = independent ? single_layout() : layout_;
    const int n_critics = independent ? env_cfg.n_uavs : 1;
    for (int i = 0; i < n_critics; ++i) critics_.push_back(make_critic(critic_layout, cfg_, init_rng_));
    for (int i = 0; i < n_critics; ++i) buffers_.emplace_back(cfg_.buffer_capacity);

    if (mode != RunMode::Clustered)
      for (int u = 0; u < env_cfg.n_uavs; ++u)
        agents_.push_back(make_agent(u, layout_.obs_dim, n_dev_, cfg_, init_rng_, noise_seed(u)));
  }

  RunArtifacts run() {
    RunArtifacts art;
    for (int ep = 0; ep < opt_.episodes; ++ep) run_episode(ep, art);
    for (std::size_t i = 0; i < critics_.size(); ++i) {
      const std::string suffix = critics_.size() > 1 ? "_" + std::to_string(i) : "";
      art.networks.emplace_back("critic" + suffix, critics_[i].net);
      art.networks.emplace_back("critic_target" + suffix, critics_[i].target);
    }
    for (std::size_t j = 0; j < agents_.size(); ++j) {
      art.networks.emplace_back("actor_" + std::to_string(j), agents_[j].actor);
      art.networks.emplace_back("actor_target_" + std::to_string(j), agents_[j].target_actor);
    }
    art.train_cycles = train_cycles_;
    return art;
  }

 private:
  JointLayout single_layout() const { return JointLayout{1, layout_.obs_dim, layout_.act_dim}; }
  std::uint64_t noise_seed(int slot) const {
    return derive_seed(opt_.seed, kNoise + static_cast<std::uint64_t>(slot));
  }

  // New heads (sorted by id) inherit the actor of the nearest previous head.
  void rebuild_agents(const cluster::ClusterState& state, std::span<const Position> positions) {
    std::vector<AgentBundle> next;
    next.reserve(state.clusters.size());
    for (std::size_t j = 0; j < state.clusters.size(); ++j) {
      const int head = state.clusters[j].head;
      if (agents_.empty()) {
        next.push_back(make_agent(head, layout_.obs_dim, n_dev_, cfg_, init_rng_, noise_seed(static_cast<int>(j))));
        continue;
      }
      std::size_t best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (std::size_t p = 0; p < agents_.size(); ++p) {
        const double d = distance(positions[static_cast<std::size_t>(head)],
                                  positions[static_cast<std::size_t>(agents_[p].id)]);
        if (d < best_d) {
          best_d = d;
          best = p;
        }
      }
      const AgentBundle& src = agents_[best];
      OUNoise noise = j < agents_.size() ? agents_[j].noise
                                         : OUNoise(n_dev_ + 1, noise_seed(static_cast<int>(j)), cfg_.noise_sigma,
                                                   cfg_.noise_theta);
      next.push_back(AgentBundle{head, src.actor, src.target_actor, src.actor_optimizer, std::move(noise)});
    }
    agents_ = std::move(next);
  }

  void update_clusters(std::int64_t slot) {
    const auto positions = env_.topology().uav_positions();
    if (mode_ != RunMode::Clustered) {
      state_ = cluster::singleton_clusters(positions);
      return;
    }
    if (cluster::should_recluster(slot, cluster_cfg_)) {
      auto km = cluster::kmeans_cluster(positions, target_clusters_, cluster_rng_, cluster_cfg_);
      state_ = std::move(km.state);
      std::sort(state_.clusters.begin(), state_.clusters.end(),
                [](const cluster::Cluster& a, const cluster::Cluster& b) { return a.head < b.head; });
      state_.timestamp = slot;
      rebuild_agents(state_, positions);
    } else {
      state_ = cluster::maintenance_step(state_, positions, cluster_cfg_).first;
      state_.timestamp = slot;
      for (std::size_t j = 0; j < state_.clusters.size() && j < agents_.size(); ++j)
        agents_[j].id = state_.clusters[j].head;
    }
    if (agents_.size() != state_.clusters.size())
      throw ContractViolation("agent set out of step with the cluster set");
    if (opt_.cluster_log != nullptr) cluster::write_snapshot(*opt_.cluster_log, slot, state_);
  }

  void flush_ready(bool all) {
    while (!pending_.empty()) {
      PendingRound& front = pending_.front();
      if (!all && (front.unresolved > 0 || !front.next_known)) break;
      store(front);
      pending_.pop_front();
      ++pending_base_;
    }
  }

  void store(PendingRound& round) {
    if (!opt_.train) return;
    if (mode_ != RunMode::PerUavIndependent) {
      buffers_[0].push(std::move(round.t));
      return;
    }
    const int od = layout_.obs_dim;
    const int ad = layout_.act_dim;
    for (int j : round.agents) {
      Transition t;
      const auto o = static_cast<std::ptrdiff_t>(j * od);
      const auto a = static_cast<std::ptrdiff_t>(j * ad);
      t.joint_observation.assign(round.t.joint_observation.begin() + o, round.t.joint_observation.begin() + o + od);
      t.joint_action.assign(round.t.joint_action.begin() + a, round.t.joint_action.begin() + a + ad);
      t.mask = {1.0};
      t.reward = round.t.reward;
      t.next_joint_observation.assign(round.t.next_joint_observation.begin() + o,
                                      round.t.next_joint_observation.begin() + o + od);
      t.next_mask = {round.t.next_mask[static_cast<std::size_t>(j)]};
      t.done = round.t.done;
      buffers_[static_cast<std::size_t>(j)].push(std::move(t));
    }
  }

  void link_next(const std::vector<double>& obs, const std::vector<double>& mask) {
    for (auto& p : pending_)
      if (!p.next_known) {
        p.t.next_joint_observation = obs;
        p.t.next_mask = mask;
        p.next_known = true;
      }
  }

  TrainMetrics train() {
    if (!opt_.train) return {};
    TrainMetrics total;
    if (mode_ != RunMode::PerUavIndependent) {
      std::vector<AgentBundle*> view;
      for (auto& a : agents_) view.push_back(&a);
      total = train_cycle(view, critics_[0], buffers_[0], cfg_, layout_, sample_rng_);
    } else {
      const JointLayout single = single_layout();
      double loss = 0.0, obj = 0.0;
      int n_loss = 0, n_obj = 0;
      for (std::size_t i = 0; i < agents_.size(); ++i) {
        AgentBundle* one[] = {&agents_[i]};
        const auto m = train_cycle(one, critics_[i], buffers_[i], cfg_, single, sample_rng_);
        if (!m.trained) continue;
        total.trained = true;
        loss += m.critic_loss;
        ++n_loss;
        if (std::isfinite(m.actor_objective)) {
          obj += m.actor_objective;
          ++n_obj;
        }
      }
      if (n_loss > 0) total.critic_loss = loss / n_loss;
      if (n_obj > 0) total.actor_objective = obj / n_obj;
    }
    if (total.trained) ++train_cycles_;
    return total;
  }

  void run_episode(int ep, RunArtifacts& art) {
    const auto wall_start = std::chrono::steady_clock::now();
    double train_seconds = 0.0;
    env_.reset(episode_seed(opt_.seed, ep));
    for (auto& a : agents_) a.noise.reset();
    if (opt_.cluster_log != nullptr && mode_ == RunMode::Clustered) *opt_.cluster_log << "episode=" << ep << '\n';
    pending_.clear();
    task_round_.clear();
    pending_base_ = 0;
    int max_agents_seen = 0;

    while (!env_.terminated()) {
      const std::int64_t slot = env_.slot();
      update_clusters(slot);
      max_agents_seen = std::max(max_agents_seen, static_cast<int>(agents_.size()));

      const auto& tasks = env_.surfaced_tasks();
      std::map<std::uint64_t, env::Action> actions;
      std::vector<std::vector<const Task*>> per_agent(agents_.size());
      for (const auto& task : tasks) {
        const int c = state_.cluster_of(task.origin_uav);
        if (c < 0) {
          // Isolated UAVs fall back to the greedy rule.
          const auto obs = env::standalone_observation(env_.topology(), task.origin_uav, task, env_cfg_);
          actions[task.id] = baselines::heuristic_action(baselines::BaselineKind::GreedyNearest, obs,
                                                         env_.queue_snapshot(task.origin_uav), env_cfg_,
                                                         heuristic_rng_);
          continue;
        }
        per_agent[static_cast<std::size_t>(c)].push_back(&task);
      }

      std::size_t rounds = 0;
      for (const auto& v : per_agent) rounds = std::max(rounds, v.size());
      for (std::size_t r = 0; r < rounds; ++r) {
        PendingRound round;
        round.t.joint_observation.assign(static_cast<std::size_t>(layout_.joint_obs_dim()), 0.0);
        round.t.joint_action.assign(static_cast<std::size_t>(layout_.joint_act_dim()), 0.0);
        round.t.mask.assign(static_cast<std::size_t>(layout_.max_agents), 0.0);
        for (std::size_t j = 0; j < agents_.size(); ++j) {
          if (r >= per_agent[j].size()) continue;
          const Task& task = *per_agent[j][r];
          const auto obs = env::build_observation(static_cast<int>(j), state_, env_.topology(), task.origin_uav, task,
                                                  env_cfg_)
                               .normalized(env_cfg_);
          auto sel = select_action(agents_[j], obs, opt_.explore, n_bs_);
          actions[task.id] = sel.action;
          std::copy(obs.begin(), obs.end(),
                    round.t.joint_observation.begin() + static_cast<std::ptrdiff_t>(j) * layout_.obs_dim);
          std::copy(sel.encoding.begin(), sel.encoding.end(),
                    round.t.joint_action.begin() + static_cast<std::ptrdiff_t>(j) * layout_.act_dim);
          round.t.mask[j] = 1.0;
          round.agents.push_back(static_cast<int>(j));
          task_round_[task.id] = pending_base_ + pending_.size();
          ++round.unresolved;
        }
        link_next(round.t.joint_observation, round.t.mask);
        pending_.push_back(std::move(round));
      }

      const int spawned = static_cast<int>(tasks.size());
      const env::StepOutcome outcome = env_.step(actions);
      auto resolve = [&](const env::Completion& c) {
        auto it = task_round_.find(c.job.task.id);
        if (it == task_round_.end()) return;
        PendingRound& p = pending_[it->second - pending_base_];
        p.t.reward += c.profit * cfg_.reward_scale;
        --p.unresolved;
        task_round_.erase(it);
      };
      for (const auto& c : outcome.completed) resolve(c);
      for (const auto& c : outcome.violated) resolve(c);

      if (outcome.terminated) {
        // Unfinished tasks earn nothing; the last round closes the episode.
        link_next(std::vector<double>(static_cast<std::size_t>(layout_.joint_obs_dim()), 0.0),
                  std::vector<double>(static_cast<std::size_t>(layout_.max_agents), 0.0));
        if (!pending_.empty()) pending_.back().t.done = true;
        flush_ready(true);
        task_round_.clear();
      } else {
        flush_ready(false);
      }

      SlotRecord rec =
          summarize_step(ep, slot, outcome, env_cfg_, static_cast<int>(state_.clusters.size()), spawned);
      if ((global_slot_ + 1) % cfg_.update_period == 0) {
        const auto t0 = std::chrono::steady_clock::now();
        const auto m = train();
        train_seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        rec.critic_loss = m.critic_loss;
        rec.actor_objective = m.actor_objective;
      }
      ++global_slot_;
      if (opt_.on_slot) opt_.on_slot(rec);
      art.slots.push_back(std::move(rec));
    }
    if (opt_.trace_out != nullptr) env::write_trace(*opt_.trace_out, env_.trace(), false);
    art.agent_counts.push_back(max_agents_seen);
    art.episode_train_seconds.push_back(train_seconds);
    art.episode_wall_seconds.push_back(
        std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start).count());
    art.episode_counters.push_back(env_.counters());
  }

  env::EnvConfig env_cfg_;
  cluster::ClusterConfig cluster_cfg_;
  TrainConfig cfg_;
  RunMode mode_;
  RunOptions opt_;
  env::Environment env_;
  Rng init_rng_;
  Rng cluster_rng_;
  Rng sample_rng_;
  Rng heuristic_rng_;
  int n_bs_{};
  int n_dev_{};
  int target_clusters_{1};
  JointLayout layout_;
  std::vector<Critic> critics_;
  std::vector<ReplayBuffer> buffers_;
  std::vector<AgentBundle> agents_;
  cluster::ClusterState state_;
  std::deque<PendingRound> pending_;
  std::size_t pending_base_{0};
  std::map<std::uint64_t, std::size_t> task_round_;
  std::int64_t global_slot_{0};
  int train_cycles_{0};
};

}  // namespace

RunArtifacts run_marl(const env::EnvConfig& env_cfg, const cluster::ClusterConfig& cluster_cfg,
                      const TrainConfig& train_cfg, RunMode mode, const RunOptions& options) {
  if (options.episodes < 0) throw ContractViolation("episodes must be non-negative");
  Driver driver(env_cfg, cluster_cfg, train_cfg, mode, options);
  return driver.run();
}

RunArtifacts cmaddpg_run(const env::EnvConfig& env_cfg, const cluster::ClusterConfig& cluster_cfg,
                         const TrainConfig& train_cfg, const RunOptions& options) {
  return run_marl(env_cfg, cluster_cfg, train_cfg, RunMode::Clustered, options);
}

}  // namespace sagin::marl
