#pragma once

// Discrete-time SAGIN environment: UAV mobility, Poisson task arrivals,
// serialized UAV uplinks, non-preemptive priority queues on every compute
// device, realized-profit reward, and a constraint auditor over the episode
// trace.

#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "sagin/clustering.hpp"
#include "sagin/core.hpp"

namespace sagin::env {

struct ScenarioPreset {
  std::string name{"balanced"};
  double delay_sensitive_fraction{0.0};  // share of tasks forced into the short-deadline band
  double delay_weight_scale{1.0};        // multiplier on the profit delay sensitivity
  double workload_scale{1.0};            // multiplier on the workload distribution

  static ScenarioPreset balanced();
  static ScenarioPreset delay_sensitive();
  static ScenarioPreset compute_intensive();
  /// Accepts balanced|delay|delay_sensitive|compute|compute_intensive.
  static ScenarioPreset by_name(const std::string& name);
};

void validate(const ScenarioPreset& preset);

struct TaskDistribution {
  double arrival_rate{25.0};  // tasks per second, whole network
  double min_bits{10e6};
  double max_bits{90e6};
  double min_workload{1000e6};  // cycles
  double max_workload{3000e6};
  double min_deadline{0.0};
  double max_deadline{0.2};
  double short_deadline{0.02};  // upper edge of the delay-sensitive band
};

struct EnvConfig {
  double area_side{5000.0};
  int n_uavs{40};
  int n_bs{25};
  double bs_capacity_min{20e9};
  double bs_capacity_max{40e9};
  double satellite_capacity{100e9};
  double uav_capacity{2e9};
  double uav_altitude{100.0};
  double satellite_altitude{780e3};
  double speed_mean{10.0};
  double speed_sd{2.0};
  double max_turn{kPi / 6.0};
  double slot_seconds{0.1};
  int episode_slots{200};
  double bs_coverage_radius{1000.0};
  ChannelParams bs_channel{};
  ChannelParams sat_channel{100e6, 1.0, 10.0, 3162.2776601683795, 4e-13, 2.0, 1.0, 2.0e9, 2.0, kSpeedOfLight};
  ProfitParams profit{};
  TaskDistribution tasks{};
  ScenarioPreset scenario{};
  bool deterministic_channel{false};

  /// Profit parameters with the scenario's delay weight applied.
  ProfitParams effective_profit() const;
  int device_count() const { return n_bs + 2; }  // local + base stations + satellite
};

void validate(const EnvConfig& cfg);

struct Topology {
  std::vector<MobilityState> uavs;
  std::vector<ComputeDevice> base_stations;  // ids BaseStation(1..n_bs)
  ComputeDevice satellite;
  /// Shadowing draw per UAV towards each remote device (base stations, then satellite).
  std::vector<std::vector<double>> shadowing_db;

  std::vector<Position> uav_positions() const;
};

// ---------------------------------------------------------------------------
// Observation / action contract

struct Observation {
  std::vector<double> resources;  // cycles/s visible per remote device (BSs, then satellite)
  MobilityState mobility;
  std::vector<double> rates;  // bits/s from the UAV to each remote device (BSs, then satellite)
  double task_bits{};
  double task_cycles_per_bit{};
  double task_deadline{};
  int uav{};  // UAV under decision

  static int dimension(int n_bs) { return 2 * (n_bs + 1) + 4 + 3; }
  /// Learner input: every field divided by its configured maximum.
  std::vector<double> normalized(const EnvConfig& cfg) const;
};

struct Action {
  DeviceId device = DeviceId::local();
  double priority{0.5};
};

/// Observation of `member`'s task as seen by the head of `cluster_index`.
/// Base stations whose coverage disc contains several cluster centroids are
/// split evenly between those clusters; the satellite is split between all
/// clusters.
Observation build_observation(int cluster_index, const cluster::ClusterState& clusters, const Topology& topology,
                              int member, const Task& task, const EnvConfig& cfg);

/// Observation of a UAV acting alone (its own singleton cluster, sharing the
/// satellite with nobody).
Observation standalone_observation(const Topology& topology, int uav, const Task& task, const EnvConfig& cfg);

// ---------------------------------------------------------------------------
// Tasks

std::vector<Task> spawn_tasks(std::int64_t slot, Rng& rng, const EnvConfig& cfg, std::uint64_t& next_id);

// ---------------------------------------------------------------------------
// Queues

struct QueuedTask {
  Task task;
  DeviceId device = DeviceId::local();
  double priority{};
  std::int64_t decision_slot{};
  double release_time{};    // slot start of the task's arrival slot
  double upload_start{};
  double transmission{};    // upload + propagation
  double device_arrival{};
};

struct Completion {
  QueuedTask job;
  int queue_index{};
  double service_start{};
  double finish{};
  double queueing{};
  double computing{};
  double total{};
  bool on_time{};
  double profit{};  // realized; zero when late
};

class DeviceQueue {
 public:
  explicit DeviceQueue(ComputeDevice device) : device_(device) {}

  const ComputeDevice& device() const { return device_; }
  /// Registers a task that will reach the device at job.device_arrival.
  void admit(const QueuedTask& job);
  /// Serves non-preemptively up to `until`; appends finished jobs.
  void advance(double until, int queue_index, const ProfitParams& profit, std::vector<Completion>& out);
  /// Seconds of committed work ahead of a newcomer at time `now`.
  double backlog_seconds(double now) const;
  double backlog_cycles(double now) const { return backlog_seconds(now) * device_.capacity_hz; }
  const std::vector<QueuedTask>& pending() const { return pending_; }
  std::size_t outstanding() const;
  double busy_until() const { return busy_until_; }

 private:
  struct InService {
    QueuedTask job;
    double start;
    double finish;
  };
  void pull_arrivals(double now);

  ComputeDevice device_;
  std::vector<QueuedTask> in_transit_;  // sorted by device_arrival
  std::vector<QueuedTask> pending_;     // priority desc, then arrival slot, then id
  std::optional<InService> in_service_;
  double busy_until_{0.0};
  double clock_{0.0};
};

/// Every queue of the network plus the per-UAV uplink clocks.
/// Queue index: 0..n_bs-1 base stations, n_bs satellite, n_bs+1+u local CPU of UAV u.
struct QueueSet {
  int n_bs{};
  std::vector<DeviceQueue> queues;
  std::vector<double> uplink_free;

  int index_of(DeviceId device, int uav) const;
};

QueueSet make_queues(const Topology& topology, const EnvConfig& cfg);

struct Dispatch {
  Task task;
  Action action;
  double transmission{};  // upload + propagation; ignored for local
};

/// Admits decided tasks in order. Uploads from one UAV are serialized; a task
/// reaches its device when its upload completes.
void apply_actions(std::span<const Dispatch> dispatches, QueueSet& queues, std::int64_t slot, double slot_seconds);

std::vector<Completion> run_queues(QueueSet& queues, double until, const ProfitParams& profit);

// ---------------------------------------------------------------------------
// Reward, trace, audit

double compute_reward(std::span<const Completion> completions);

struct DecisionRecord {
  std::int64_t slot{};
  std::uint64_t task_id{};
  int origin_uav{};
  std::vector<int> alpha;  // one entry per action index (local, BSs, satellite)
};

struct SlotLoad {
  std::int64_t slot{};
  int queue_index{};
  double capacity_hz{};
  double backlog_cycles{};   // committed work at slot start
  double admitted_cycles{};  // work admitted during the slot
};

struct ScheduleTrace {
  double slot_seconds{};
  std::vector<Task> spawned;
  std::vector<DecisionRecord> decisions;
  std::vector<SlotLoad> loads;
  std::vector<Completion> completions;
};

struct AuditReport {
  int c1_breaches{};   // tasks without exactly one destination
  int c2_misses{};     // completions past deadline (legal, unprofitable)
  int c3_breaches{};   // non-binary decision entries
  int c4_flags{};      // slot/device pairs admitted beyond the rolling budget
  double on_time_profit{};
};

AuditReport audit_constraints(const ScheduleTrace& trace, const ProfitParams& profit);

/// Line format per finished task:
/// slot,task_id,origin,device,priority,queueing,transmission,computing,total,profit,on_time
void write_trace(std::ostream& out, const ScheduleTrace& trace, bool header = true);

// ---------------------------------------------------------------------------

struct StepOutcome {
  double reward{};
  std::vector<Completion> completed;  // on time
  std::vector<Completion> violated;   // finished past deadline
  std::vector<Task> spawned;          // tasks surfaced for the next slot
  bool terminated{};
};

struct QueueSnapshot {
  /// Per action index (local, BSs, satellite).
  std::vector<double> capacity_hz;
  std::vector<double> backlog_seconds;
  std::vector<double> propagation_seconds;
};

struct EpisodeCounters {
  std::int64_t spawned{};
  std::int64_t on_time{};
  std::int64_t late{};
  std::int64_t unfinished{};
};

class Environment {
 public:
  explicit Environment(EnvConfig cfg);

  void reset(std::uint64_t seed);
  /// Tasks that need an action in the current slot, in arrival order.
  const std::vector<Task>& surfaced_tasks() const { return surfaced_; }
  /// Applies one action per surfaced task and advances one slot.
  StepOutcome step(const std::map<std::uint64_t, Action>& actions);

  bool terminated() const { return terminated_; }
  std::int64_t slot() const { return slot_; }
  const EnvConfig& config() const { return cfg_; }
  const Topology& topology() const { return topology_; }
  const QueueSet& queues() const { return queues_; }
  const ScheduleTrace& trace() const { return trace_; }
  const EpisodeCounters& counters() const { return counters_; }
  ProfitParams profit() const { return cfg_.effective_profit(); }

  double rate_to(int uav, DeviceId device) const;
  double distance_to(int uav, DeviceId device) const;
  double transmission_delay_for(const Task& task, DeviceId device) const;
  QueueSnapshot queue_snapshot(int uav) const;

 private:
  void draw_shadowing();

  EnvConfig cfg_;
  Topology topology_;
  QueueSet queues_;
  ScheduleTrace trace_;
  EpisodeCounters counters_;
  std::vector<Task> surfaced_;
  Rng mobility_rng_;
  Rng task_rng_;
  Rng channel_rng_;
  std::uint64_t next_task_id_{0};
  std::int64_t slot_{0};
  bool terminated_{true};
};

}  // namespace sagin::env
