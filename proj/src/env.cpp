#include "sagin/env.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <set>

namespace sagin::env {

ScenarioPreset ScenarioPreset::balanced() { return {"balanced", 0.0, 1.0, 1.0}; }
ScenarioPreset ScenarioPreset::delay_sensitive() { return {"delay_sensitive", 0.3, 2.0, 1.0}; }
ScenarioPreset ScenarioPreset::compute_intensive() { return {"compute_intensive", 0.0, 0.5, 1.5}; }

ScenarioPreset ScenarioPreset::by_name(const std::string& name) {
  if (name == "balanced") return balanced();
  if (name == "delay" || name == "delay_sensitive") return delay_sensitive();
  if (name == "compute" || name == "compute_intensive") return compute_intensive();
  throw ContractViolation("unknown scenario '" + name + "'");
}

void validate(const ScenarioPreset& p) {
  if (!(p.delay_sensitive_fraction >= 0.0 && p.delay_sensitive_fraction <= 1.0))
    throw ContractViolation("scenario.delay_sensitive_fraction must lie in [0, 1]");
  if (!(p.delay_weight_scale > 0.0)) throw ContractViolation("scenario.delay_weight_scale must be > 0");
  if (!(p.workload_scale > 0.0)) throw ContractViolation("scenario.workload_scale must be > 0");
}

ProfitParams EnvConfig::effective_profit() const {
  return {profit.delay_sensitivity * scenario.delay_weight_scale};
}

void validate(const EnvConfig& c) {
  auto positive = [](double v, const char* key) {
    if (!(v > 0.0)) throw ContractViolation(std::string(key) + " must be > 0");
  };
  positive(c.area_side, "area_side");
  if (c.n_uavs < 1) throw ContractViolation("n_uavs must be >= 1");
  if (c.n_bs < 1) throw ContractViolation("n_bs must be >= 1");
  positive(c.bs_capacity_min, "bs_capacity_range");
  if (c.bs_capacity_max < c.bs_capacity_min) throw ContractViolation("bs_capacity_range must be ordered");
  positive(c.satellite_capacity, "satellite_capacity");
  positive(c.uav_capacity, "uav_capacity");
  if (!(c.uav_altitude >= 0.0)) throw ContractViolation("uav_altitude must be >= 0");
  positive(c.satellite_altitude, "satellite_altitude");
  if (!(c.speed_mean >= 0.0 && c.speed_sd >= 0.0)) throw ContractViolation("speed must be >= 0");
  if (!(c.max_turn >= 0.0)) throw ContractViolation("max_turn must be >= 0");
  positive(c.slot_seconds, "slot_seconds");
  if (c.episode_slots < 1) throw ContractViolation("episode_slots must be >= 1");
  positive(c.bs_coverage_radius, "bs_coverage_radius");
  validate(c.bs_channel);
  validate(c.sat_channel);
  if (!(c.profit.delay_sensitivity >= 0.0)) throw ContractViolation("delay_sensitivity must be >= 0");
  if (!(c.tasks.arrival_rate >= 0.0)) throw ContractViolation("arrival_rate must be >= 0");
  positive(c.tasks.min_bits, "task_size_range");
  if (c.tasks.max_bits < c.tasks.min_bits) throw ContractViolation("task_size_range must be ordered");
  positive(c.tasks.min_workload, "workload_range");
  if (c.tasks.max_workload < c.tasks.min_workload) throw ContractViolation("workload_range must be ordered");
  if (!(c.tasks.min_deadline >= 0.0) || c.tasks.max_deadline < c.tasks.min_deadline)
    throw ContractViolation("deadline_range must be ordered and >= 0");
  if (!(c.tasks.short_deadline >= 0.0)) throw ContractViolation("short_deadline must be >= 0");
  validate(c.scenario);
}

std::vector<Position> Topology::uav_positions() const {
  std::vector<Position> out;
  out.reserve(uavs.size());
  for (const auto& u : uavs) out.push_back(u.position);
  return out;
}

std::vector<double> Observation::normalized(const EnvConfig& cfg) const {
  std::vector<double> v;
  v.reserve(static_cast<std::size_t>(dimension(cfg.n_bs)));
  const std::size_t n_bs = static_cast<std::size_t>(cfg.n_bs);
  for (std::size_t i = 0; i < resources.size(); ++i)
    v.push_back(resources[i] / (i < n_bs ? cfg.bs_capacity_max : cfg.satellite_capacity));
  v.push_back(mobility.position.x / cfg.area_side);
  v.push_back(mobility.position.y / cfg.area_side);
  v.push_back(mobility.heading / kTwoPi);
  v.push_back(mobility.speed / (cfg.speed_mean + 3.0 * cfg.speed_sd + 1e-9));
  for (double r : rates) v.push_back(r / 1e9);
  v.push_back(task_bits / cfg.tasks.max_bits);
  const double max_cpb = cfg.tasks.max_workload * cfg.scenario.workload_scale / cfg.tasks.min_bits;
  v.push_back(task_cycles_per_bit / max_cpb);
  v.push_back(cfg.tasks.max_deadline > 0.0 ? task_deadline / cfg.tasks.max_deadline : 0.0);
  return v;
}

namespace {

double remote_rate(const Topology& topo, const EnvConfig& cfg, int uav, std::size_t remote) {
  const auto& pos = topo.uavs[static_cast<std::size_t>(uav)].position;
  const std::size_t n_bs = topo.base_stations.size();
  const bool sat = remote == n_bs;
  const auto& device = sat ? topo.satellite : topo.base_stations[remote];
  const auto& channel = sat ? cfg.sat_channel : cfg.bs_channel;
  const double shadow = topo.shadowing_db[static_cast<std::size_t>(uav)][remote];
  return data_rate(path_loss_db(std::max(distance(pos, device.position), 1e-9), channel, shadow), channel);
}

}  // namespace

Observation build_observation(int cluster_index, const cluster::ClusterState& clusters, const Topology& topology,
                              int member, const Task& task, const EnvConfig& cfg) {
  if (cluster_index < 0 || cluster_index >= static_cast<int>(clusters.clusters.size()))
    throw ContractViolation("unknown cluster index " + std::to_string(cluster_index));
  const auto& own = clusters.clusters[static_cast<std::size_t>(cluster_index)];
  if (!own.members.contains(member))
    throw ContractViolation("UAV " + std::to_string(member) + " is not a member of cluster headed by " +
                            std::to_string(own.head));

  Observation obs;
  obs.uav = member;
  const std::size_t n_bs = topology.base_stations.size();
  obs.resources.assign(n_bs + 1, 0.0);
  for (std::size_t b = 0; b < n_bs; ++b) {
    const auto& bs = topology.base_stations[b];
    if (horizontal_distance(own.centroid, bs.position) > cfg.bs_coverage_radius) continue;
    int covering = 0;
    for (const auto& c : clusters.clusters)
      if (horizontal_distance(c.centroid, bs.position) <= cfg.bs_coverage_radius) ++covering;
    obs.resources[b] = bs.capacity_hz / covering;
  }
  obs.resources[n_bs] = topology.satellite.capacity_hz / static_cast<double>(clusters.clusters.size());

  obs.mobility = topology.uavs[static_cast<std::size_t>(member)];
  obs.rates.resize(n_bs + 1);
  for (std::size_t r = 0; r <= n_bs; ++r) obs.rates[r] = remote_rate(topology, cfg, member, r);
  obs.task_bits = task.data_bits;
  obs.task_cycles_per_bit = task.cycles_per_bit;
  obs.task_deadline = task.deadline;
  return obs;
}

Observation standalone_observation(const Topology& topology, int uav, const Task& task, const EnvConfig& cfg) {
  cluster::ClusterState alone;
  cluster::Cluster c;
  c.head = uav;
  c.members = {uav};
  c.centroid = topology.uavs.at(static_cast<std::size_t>(uav)).position;
  alone.clusters.push_back(std::move(c));
  return build_observation(0, alone, topology, uav, task, cfg);
}

std::vector<Task> spawn_tasks(std::int64_t slot, Rng& rng, const EnvConfig& cfg, std::uint64_t& next_id) {
  std::vector<Task> out;
  const double mean = cfg.tasks.arrival_rate * cfg.slot_seconds;
  if (!(mean > 0.0)) return out;
  std::poisson_distribution<int> count(mean);
  const int n = count(rng);
  const auto& d = cfg.tasks;
  const auto& sc = cfg.scenario;
  std::uniform_int_distribution<int> origin(0, cfg.n_uavs - 1);
  std::uniform_real_distribution<double> bits(d.min_bits, d.max_bits);
  std::uniform_real_distribution<double> work(d.min_workload * sc.workload_scale, d.max_workload * sc.workload_scale);
  std::uniform_real_distribution<double> deadline(d.min_deadline, d.max_deadline);
  std::uniform_real_distribution<double> short_deadline(d.min_deadline, std::max(d.min_deadline, d.short_deadline));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    Task t;
    t.id = next_id++;
    t.origin_uav = origin(rng);
    t.data_bits = bits(rng);
    t.cycles_per_bit = work(rng) / t.data_bits;
    const bool urgent = sc.delay_sensitive_fraction > 0.0 && unit(rng) < sc.delay_sensitive_fraction;
    t.deadline = urgent ? short_deadline(rng) : deadline(rng);
    t.arrival_slot = slot;
    out.push_back(t);
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

bool served_before(const QueuedTask& a, const QueuedTask& b) {
  if (a.priority != b.priority) return a.priority > b.priority;
  if (a.task.arrival_slot != b.task.arrival_slot) return a.task.arrival_slot < b.task.arrival_slot;
  return a.task.id < b.task.id;
}

}  // namespace

void DeviceQueue::admit(const QueuedTask& job) {
  auto pos = std::upper_bound(in_transit_.begin(), in_transit_.end(), job, [](const QueuedTask& a, const QueuedTask& b) {
    return a.device_arrival < b.device_arrival;
  });
  in_transit_.insert(pos, job);
}

void DeviceQueue::pull_arrivals(double now) {
  auto it = in_transit_.begin();
  for (; it != in_transit_.end() && it->device_arrival <= now; ++it) {
    auto pos = std::upper_bound(pending_.begin(), pending_.end(), *it, served_before);
    pending_.insert(pos, *it);
  }
  in_transit_.erase(in_transit_.begin(), it);
}

void DeviceQueue::advance(double until, int queue_index, const ProfitParams& profit, std::vector<Completion>& out) {
  for (;;) {
    if (in_service_) {
      if (in_service_->finish > until) return;
      const auto& s = *in_service_;
      Completion c;
      c.job = s.job;
      c.queue_index = queue_index;
      c.service_start = s.start;
      c.finish = s.finish;
      c.computing = computing_delay(s.job.task, device_);
      c.queueing = (s.job.upload_start - s.job.release_time) + (s.start - s.job.device_arrival);
      c.total = total_delay(c.queueing, s.job.transmission, c.computing);
      c.on_time = c.total <= s.job.task.deadline;
      c.profit = c.on_time ? task_profit(s.job.task, profit) : 0.0;
      out.push_back(c);
      clock_ = s.finish;
      in_service_.reset();
    }
    pull_arrivals(clock_);
    if (pending_.empty()) {
      if (in_transit_.empty() || in_transit_.front().device_arrival > until) {
        clock_ = std::max(clock_, until);
        return;
      }
      clock_ = std::max(clock_, in_transit_.front().device_arrival);
      pull_arrivals(clock_);
    }
    QueuedTask next = pending_.front();
    pending_.erase(pending_.begin());
    const double start = clock_;
    const double finish = start + computing_delay(next.task, device_);
    in_service_ = InService{next, start, finish};
    busy_until_ = finish;
  }
}

double DeviceQueue::backlog_seconds(double now) const {
  double s = in_service_ ? std::max(0.0, in_service_->finish - now) : 0.0;
  for (const auto& j : pending_) s += computing_delay(j.task, device_);
  for (const auto& j : in_transit_) s += computing_delay(j.task, device_);
  return s;
}

std::size_t DeviceQueue::outstanding() const { return pending_.size() + in_transit_.size() + (in_service_ ? 1 : 0); }

int QueueSet::index_of(DeviceId device, int uav) const {
  switch (device.kind()) {
    case DeviceId::Kind::BaseStation:
      if (device.bs_index() < 1 || device.bs_index() > n_bs)
        throw ContractViolation("base station index " + std::to_string(device.bs_index()) + " out of range");
      return device.bs_index() - 1;
    case DeviceId::Kind::Satellite:
      return n_bs;
    case DeviceId::Kind::Local:
      if (uav < 0 || static_cast<std::size_t>(uav) >= uplink_free.size())
        throw ContractViolation("unknown UAV " + std::to_string(uav));
      return n_bs + 1 + uav;
  }
  return -1;
}

QueueSet make_queues(const Topology& topology, const EnvConfig& cfg) {
  QueueSet qs;
  qs.n_bs = static_cast<int>(topology.base_stations.size());
  for (const auto& bs : topology.base_stations) qs.queues.emplace_back(bs);
  qs.queues.emplace_back(topology.satellite);
  for (const auto& u : topology.uavs) qs.queues.emplace_back(ComputeDevice{DeviceId::local(), u.position, cfg.uav_capacity});
  qs.uplink_free.assign(topology.uavs.size(), 0.0);
  return qs;
}

void apply_actions(std::span<const Dispatch> dispatches, QueueSet& queues, std::int64_t slot, double slot_seconds) {
  std::set<std::uint64_t> seen;
  for (const auto& d : dispatches)
    if (!seen.insert(d.task.id).second)
      throw ContractViolation("task " + std::to_string(d.task.id) + " received more than one action");

  const double slot_start = static_cast<double>(slot) * slot_seconds;
  for (const auto& d : dispatches) {
    validate(d.task);
    const int q = queues.index_of(d.action.device, d.task.origin_uav);
    QueuedTask job;
    job.task = d.task;
    job.device = d.action.device;
    job.priority = std::clamp(d.action.priority, 0.0, 1.0);
    job.decision_slot = slot;
    job.release_time = static_cast<double>(d.task.arrival_slot) * slot_seconds;
    if (d.action.device.is_local()) {
      job.upload_start = std::max(slot_start, job.release_time);
      job.transmission = 0.0;
      job.device_arrival = job.upload_start;
    } else {
      auto& uplink = queues.uplink_free[static_cast<std::size_t>(d.task.origin_uav)];
      job.upload_start = std::max({slot_start, job.release_time, uplink});
      job.transmission = d.transmission;
      job.device_arrival = job.upload_start + job.transmission;
      uplink = job.device_arrival;
    }
    queues.queues[static_cast<std::size_t>(q)].admit(job);
  }
}

std::vector<Completion> run_queues(QueueSet& queues, double until, const ProfitParams& profit) {
  std::vector<Completion> out;
  for (std::size_t i = 0; i < queues.queues.size(); ++i) queues.queues[i].advance(until, static_cast<int>(i), profit, out);
  std::sort(out.begin(), out.end(), [](const Completion& a, const Completion& b) {
    if (a.finish != b.finish) return a.finish < b.finish;
    return a.job.task.id < b.job.task.id;
  });
  return out;
}

double compute_reward(std::span<const Completion> completions) {
  double sum = 0.0;
  for (const auto& c : completions)
    if (c.on_time) sum += c.profit;
  return sum;
}

AuditReport audit_constraints(const ScheduleTrace& trace, const ProfitParams& profit) {
  AuditReport report;
  std::map<std::uint64_t, int> destinations;
  for (const auto& t : trace.spawned) destinations[t.id] = 0;
  for (const auto& d : trace.decisions) {
    int sum = 0;
    for (int a : d.alpha) {
      if (a != 0 && a != 1) ++report.c3_breaches;
      sum += a;
    }
    destinations[d.task_id] += sum;
  }
  for (const auto& [id, count] : destinations)
    if (count != 1) ++report.c1_breaches;

  for (const auto& l : trace.loads) {
    const double budget = l.capacity_hz * trace.slot_seconds - l.backlog_cycles;
    if (l.admitted_cycles > budget) ++report.c4_flags;
  }
  for (const auto& c : trace.completions) {
    const bool on_time = c.total <= c.job.task.deadline;
    if (!on_time)
      ++report.c2_misses;
    else
      report.on_time_profit += task_profit(c.job.task, profit);
  }
  return report;
}

void write_trace(std::ostream& out, const ScheduleTrace& trace, bool header) {
  if (header) out << "slot,task_id,origin,device,priority,queueing,transmission,computing,total,profit,on_time\n";
  const auto old_precision = out.precision(17);
  for (const auto& c : trace.completions) {
    out << c.job.decision_slot << ',' << c.job.task.id << ',' << c.job.task.origin_uav << ','
        << c.job.device.to_string() << ',' << c.job.priority << ',' << c.queueing << ',' << c.job.transmission << ','
        << c.computing << ',' << c.total << ',' << c.profit << ',' << (c.on_time ? 1 : 0) << '\n';
  }
  out.precision(old_precision);
}

// ---------------------------------------------------------------------------

Environment::Environment(EnvConfig cfg) : cfg_(std::move(cfg)) { validate(cfg_); }

void Environment::draw_shadowing() {
  const std::size_t n_remote = static_cast<std::size_t>(cfg_.n_bs) + 1;
  topology_.shadowing_db.assign(topology_.uavs.size(), std::vector<double>(n_remote, 0.0));
  if (cfg_.deterministic_channel) return;
  for (auto& row : topology_.shadowing_db) {
    for (std::size_t r = 0; r < n_remote; ++r) {
      const double sigma = r < n_remote - 1 ? cfg_.bs_channel.shadowing_sigma_db : cfg_.sat_channel.shadowing_sigma_db;
      if (sigma > 0.0) row[r] = std::normal_distribution<double>(0.0, sigma)(channel_rng_);
    }
  }
}

void Environment::reset(std::uint64_t seed) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), 0x5A61u};
  std::array<std::uint64_t, 4> streams{};
  {
    std::vector<std::uint32_t> words(8);
    seq.generate(words.begin(), words.end());
    for (std::size_t i = 0; i < 4; ++i) streams[i] = (std::uint64_t{words[2 * i]} << 32) | words[2 * i + 1];
  }
  Rng topo_rng(streams[0]);
  mobility_rng_.seed(streams[1]);
  task_rng_.seed(streams[2]);
  channel_rng_.seed(streams[3]);

  const double side = cfg_.area_side;
  std::uniform_real_distribution<double> coord(0.0, side);
  std::uniform_real_distribution<double> capacity(cfg_.bs_capacity_min, cfg_.bs_capacity_max);
  std::uniform_real_distribution<double> heading(0.0, kTwoPi);

  topology_ = Topology{};
  for (int b = 0; b < cfg_.n_bs; ++b) {
    ComputeDevice bs;
    bs.id = DeviceId::base_station(b + 1);
    bs.position = {coord(topo_rng), coord(topo_rng), 0.0};
    bs.capacity_hz = capacity(topo_rng);
    topology_.base_stations.push_back(bs);
  }
  topology_.satellite = {DeviceId::satellite(), {side / 2.0, side / 2.0, cfg_.satellite_altitude}, cfg_.satellite_capacity};
  for (int u = 0; u < cfg_.n_uavs; ++u) {
    MobilityState m;
    m.position = {coord(topo_rng), coord(topo_rng), cfg_.uav_altitude};
    m.heading = wrap_angle(heading(topo_rng));
    m.speed = draw_speed(topo_rng, cfg_.speed_mean, cfg_.speed_sd);
    topology_.uavs.push_back(m);
  }
  draw_shadowing();

  queues_ = make_queues(topology_, cfg_);
  trace_ = ScheduleTrace{};
  trace_.slot_seconds = cfg_.slot_seconds;
  counters_ = EpisodeCounters{};
  next_task_id_ = 0;
  slot_ = 0;
  terminated_ = false;
  surfaced_ = spawn_tasks(slot_, task_rng_, cfg_, next_task_id_);
  trace_.spawned.insert(trace_.spawned.end(), surfaced_.begin(), surfaced_.end());
  counters_.spawned += static_cast<std::int64_t>(surfaced_.size());
}

double Environment::distance_to(int uav, DeviceId device) const {
  const auto& pos = topology_.uavs.at(static_cast<std::size_t>(uav)).position;
  switch (device.kind()) {
    case DeviceId::Kind::Local:
      return 0.0;
    case DeviceId::Kind::BaseStation:
      return distance(pos, topology_.base_stations.at(static_cast<std::size_t>(device.bs_index() - 1)).position);
    case DeviceId::Kind::Satellite:
      return distance(pos, topology_.satellite.position);
  }
  return 0.0;
}

double Environment::rate_to(int uav, DeviceId device) const {
  if (device.is_local()) return 0.0;
  validate(device, cfg_.n_bs);
  const std::size_t remote = device.is_satellite() ? static_cast<std::size_t>(cfg_.n_bs)
                                                   : static_cast<std::size_t>(device.bs_index() - 1);
  return remote_rate(topology_, cfg_, uav, remote);
}

double Environment::transmission_delay_for(const Task& task, DeviceId device) const {
  if (device.is_local()) return 0.0;
  const auto& channel = device.is_satellite() ? cfg_.sat_channel : cfg_.bs_channel;
  return transmission_delay(task, rate_to(task.origin_uav, device), device, distance_to(task.origin_uav, device),
                            channel);
}

QueueSnapshot Environment::queue_snapshot(int uav) const {
  QueueSnapshot snap;
  const int n = cfg_.device_count();
  const double now = static_cast<double>(slot_) * cfg_.slot_seconds;
  snap.capacity_hz.resize(static_cast<std::size_t>(n));
  snap.backlog_seconds.resize(static_cast<std::size_t>(n));
  snap.propagation_seconds.resize(static_cast<std::size_t>(n));
  for (int a = 0; a < n; ++a) {
    const DeviceId dev = DeviceId::from_action_index(a, cfg_.n_bs);
    const auto& q = queues_.queues[static_cast<std::size_t>(queues_.index_of(dev, uav))];
    snap.capacity_hz[static_cast<std::size_t>(a)] = q.device().capacity_hz;
    snap.backlog_seconds[static_cast<std::size_t>(a)] = q.backlog_seconds(now);
    snap.propagation_seconds[static_cast<std::size_t>(a)] =
        propagation_delay(dev, distance_to(uav, dev), dev.is_satellite() ? cfg_.sat_channel : cfg_.bs_channel);
  }
  return snap;
}

StepOutcome Environment::step(const std::map<std::uint64_t, Action>& actions) {
  if (terminated_) throw ContractViolation("step() called on a terminated episode; call reset()");
  if (actions.size() != surfaced_.size())
    throw ContractViolation("expected " + std::to_string(surfaced_.size()) + " actions, got " +
                            std::to_string(actions.size()));

  const double slot_start = static_cast<double>(slot_) * cfg_.slot_seconds;
  std::vector<double> backlog(queues_.queues.size());
  for (std::size_t i = 0; i < queues_.queues.size(); ++i) backlog[i] = queues_.queues[i].backlog_cycles(slot_start);
  std::vector<double> admitted(queues_.queues.size(), 0.0);

  std::vector<Dispatch> dispatches;
  dispatches.reserve(surfaced_.size());
  const int n_actions = cfg_.device_count();
  for (const auto& task : surfaced_) {
    auto it = actions.find(task.id);
    if (it == actions.end()) throw ContractViolation("no action for task " + std::to_string(task.id));
    validate(it->second.device, cfg_.n_bs);
    Dispatch d{task, it->second, transmission_delay_for(task, it->second.device)};
    dispatches.push_back(d);

    DecisionRecord rec{slot_, task.id, task.origin_uav, std::vector<int>(static_cast<std::size_t>(n_actions), 0)};
    rec.alpha[static_cast<std::size_t>(it->second.device.action_index(cfg_.n_bs))] = 1;
    trace_.decisions.push_back(std::move(rec));
    admitted[static_cast<std::size_t>(queues_.index_of(it->second.device, task.origin_uav))] += task.workload();
  }
  apply_actions(dispatches, queues_, slot_, cfg_.slot_seconds);
  for (std::size_t i = 0; i < admitted.size(); ++i)
    if (admitted[i] > 0.0)
      trace_.loads.push_back({slot_, static_cast<int>(i), queues_.queues[i].device().capacity_hz, backlog[i], admitted[i]});

  StepOutcome outcome;
  const double slot_end = static_cast<double>(slot_ + 1) * cfg_.slot_seconds;
  auto finished = run_queues(queues_, slot_end, profit());
  for (auto& c : finished) {
    trace_.completions.push_back(c);
    if (c.on_time) {
      ++counters_.on_time;
      outcome.completed.push_back(c);
    } else {
      ++counters_.late;
      outcome.violated.push_back(c);
    }
  }
  outcome.reward = compute_reward(outcome.completed);

  const AreaBounds area = AreaBounds::square(cfg_.area_side);
  for (auto& u : topology_.uavs) u = advance_mobility(u, cfg_.slot_seconds, cfg_.max_turn, mobility_rng_, area);
  draw_shadowing();
  ++slot_;

  if (slot_ >= cfg_.episode_slots) {
    terminated_ = true;
    surfaced_.clear();
    std::int64_t left = 0;
    for (const auto& q : queues_.queues) left += static_cast<std::int64_t>(q.outstanding());
    counters_.unfinished = left;
  } else {
    surfaced_ = spawn_tasks(slot_, task_rng_, cfg_, next_task_id_);
    trace_.spawned.insert(trace_.spawned.end(), surfaced_.begin(), surfaced_.end());
    counters_.spawned += static_cast<std::int64_t>(surfaced_.size());
  }
  outcome.spawned = surfaced_;
  outcome.terminated = terminated_;
  return outcome;
}

}  // namespace sagin::env
