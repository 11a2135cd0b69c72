#include "sagin/harness.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <future>
#include <iomanip>
#include <istream>
#include <map>
#include <sstream>

namespace sagin::harness {

using nlohmann::json;

Algorithm parse_algorithm(const std::string& name) {
  if (name == "cmaddpg") return Algorithm::Cmaddpg;
  if (name == "maddpg") return Algorithm::NaiveMaddpg;
  if (name == "maac") return Algorithm::Maac;
  if (name == "greedy") return Algorithm::GreedyNearest;
  if (name == "random") return Algorithm::RandomOffload;
  if (name == "local") return Algorithm::LocalOnly;
  throw ConfigError("algorithm: unknown value '" + name + "' (expected cmaddpg|maddpg|maac|greedy|random|local)");
}

std::string to_string(Algorithm a) {
  switch (a) {
    case Algorithm::Cmaddpg:
      return "cmaddpg";
    case Algorithm::NaiveMaddpg:
      return "maddpg";
    case Algorithm::Maac:
      return "maac";
    case Algorithm::GreedyNearest:
      return "greedy";
    case Algorithm::RandomOffload:
      return "random";
    case Algorithm::LocalOnly:
      return "local";
  }
  return "unknown";
}

void apply_desk_preset(RunConfig& cfg) {
  cfg.env.n_uavs = 12;
  cfg.env.n_bs = 6;
  cfg.env.area_side = 1250.0;
  cfg.cluster.comm_radius = 500.0;
}

// ---------------------------------------------------------------------------
// JSON mapping

namespace {

json channel_json(const ChannelParams& c) {
  return {{"bandwidth", c.bandwidth},
          {"tx_power", c.tx_power},
          {"tx_gain", c.tx_gain},
          {"rx_gain", c.rx_gain},
          {"noise_power", c.noise_power},
          {"path_loss_exponent", c.path_loss_exponent},
          {"reference_distance", c.reference_distance},
          {"carrier_frequency", c.carrier_frequency},
          {"shadowing_sigma_db", c.shadowing_sigma_db}};
}

json scenario_json(const env::ScenarioPreset& s) {
  return {{"name", s.name},
          {"delay_sensitive_fraction", s.delay_sensitive_fraction},
          {"delay_weight_scale", s.delay_weight_scale},
          {"workload_scale", s.workload_scale}};
}

std::string join(const std::string& prefix, const std::string& key) {
  return prefix.empty() ? key : prefix + "." + key;
}

template <typename T>
T read(const json& v, const std::string& path) {
  try {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ConfigError(path + ": expected a boolean");
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer() && !(v.is_number_float() && std::floor(v.get<double>()) == v.get<double>()))
        throw ConfigError(path + ": expected an integer");
      if constexpr (std::is_unsigned_v<T>) {
        if (v.get<double>() < 0) throw ConfigError(path + ": must be >= 0");
      }
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw ConfigError(path + ": expected a number");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw ConfigError(path + ": expected a string");
    }
    if constexpr (std::is_integral_v<T> && !std::is_same_v<T, bool>) {
      return v.is_number_float() ? static_cast<T>(v.get<double>()) : v.get<T>();
    } else {
      return v.get<T>();
    }
  } catch (const json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

std::pair<double, double> read_range(const json& v, const std::string& path) {
  if (!v.is_array() || v.size() != 2) throw ConfigError(path + ": expected [min, max]");
  return {read<double>(v[0], path + "[0]"), read<double>(v[1], path + "[1]")};
}

std::vector<int> read_widths(const json& v, const std::string& path) {
  if (!v.is_array()) throw ConfigError(path + ": expected an array of layer widths");
  std::vector<int> out;
  for (std::size_t i = 0; i < v.size(); ++i) out.push_back(read<int>(v[i], path + "[" + std::to_string(i) + "]"));
  return out;
}

void require_object(const json& v, const std::string& path) {
  if (!v.is_object()) throw ConfigError((path.empty() ? std::string("<root>") : path) + ": expected an object");
}

[[noreturn]] void unknown(const std::string& path) { throw ConfigError(path + ": unknown key"); }

void read_channel(const json& j, ChannelParams& c, const std::string& prefix) {
  require_object(j, prefix);
  for (const auto& [k, v] : j.items()) {
    const auto p = join(prefix, k);
    if (k == "bandwidth") c.bandwidth = read<double>(v, p);
    else if (k == "tx_power") c.tx_power = read<double>(v, p);
    else if (k == "tx_gain") c.tx_gain = read<double>(v, p);
    else if (k == "rx_gain") c.rx_gain = read<double>(v, p);
    else if (k == "noise_power") c.noise_power = read<double>(v, p);
    else if (k == "path_loss_exponent") c.path_loss_exponent = read<double>(v, p);
    else if (k == "reference_distance") c.reference_distance = read<double>(v, p);
    else if (k == "carrier_frequency") c.carrier_frequency = read<double>(v, p);
    else if (k == "shadowing_sigma_db") c.shadowing_sigma_db = read<double>(v, p);
    else unknown(p);
  }
}

void read_scenario(const json& j, env::ScenarioPreset& s, const std::string& prefix) {
  if (j.is_string()) {
    try {
      s = env::ScenarioPreset::by_name(j.get<std::string>());
    } catch (const ContractViolation& e) {
      throw ConfigError(prefix + ": " + e.what());
    }
    return;
  }
  require_object(j, prefix);
  if (j.contains("name")) read_scenario(j.at("name"), s, join(prefix, "name"));
  for (const auto& [k, v] : j.items()) {
    const auto p = join(prefix, k);
    if (k == "name") continue;
    if (k == "delay_sensitive_fraction") s.delay_sensitive_fraction = read<double>(v, p);
    else if (k == "delay_weight_scale") s.delay_weight_scale = read<double>(v, p);
    else if (k == "workload_scale") s.workload_scale = read<double>(v, p);
    else unknown(p);
  }
}

void read_cluster(const json& j, cluster::ClusterConfig& c, const std::string& prefix) {
  require_object(j, prefix);
  for (const auto& [k, v] : j.items()) {
    const auto p = join(prefix, k);
    if (k == "comm_radius") c.comm_radius = read<double>(v, p);
    else if (k == "logistic_steepness") c.logistic_steepness = read<double>(v, p);
    else if (k == "coverage_threshold") c.coverage_threshold = read<double>(v, p);
    else if (k == "recluster_period") c.recluster_period = read<int>(v, p);
    else if (k == "reelect_threshold") c.reelect_threshold = read<int>(v, p);
    else if (k == "kmeans_max_iters") c.kmeans_max_iters = read<int>(v, p);
    else if (k == "kmeans_tolerance") c.kmeans_tolerance = read<double>(v, p);
    else if (k == "isolation_floor") c.isolation_floor = read<double>(v, p);
    else unknown(p);
  }
}

void read_train(const json& j, marl::TrainConfig& c, const std::string& prefix) {
  require_object(j, prefix);
  for (const auto& [k, v] : j.items()) {
    const auto p = join(prefix, k);
    if (k == "gamma") c.gamma = read<double>(v, p);
    else if (k == "tau") c.tau = read<double>(v, p);
    else if (k == "batch_size") c.batch_size = read<int>(v, p);
    else if (k == "update_period") c.update_period = read<int>(v, p);
    else if (k == "warmup_transitions") c.warmup_transitions = read<int>(v, p);
    else if (k == "buffer_capacity") c.buffer_capacity = read<std::size_t>(v, p);
    else if (k == "actor_learning_rate") c.actor_learning_rate = read<double>(v, p);
    else if (k == "critic_learning_rate") c.critic_learning_rate = read<double>(v, p);
    else if (k == "actor_hidden") c.actor_hidden = read_widths(v, p);
    else if (k == "critic_hidden") c.critic_hidden = read_widths(v, p);
    else if (k == "noise_sigma") c.noise_sigma = read<double>(v, p);
    else if (k == "noise_theta") c.noise_theta = read<double>(v, p);
    else if (k == "reward_scale") c.reward_scale = read<double>(v, p);
    else if (k == "max_agents") c.max_agents = read<int>(v, p);
    else if (k == "logit_penalty") c.logit_penalty = read<double>(v, p);
    else unknown(p);
  }
}

}  // namespace

json to_json(const RunConfig& cfg) {
  const auto& e = cfg.env;
  json seeds = json::array();
  for (auto s : cfg.seeds) seeds.push_back(s);
  return {
      {"algorithm", to_string(cfg.algorithm)},
      {"episodes", cfg.episodes},
      {"seeds", seeds},
      {"final_window", cfg.final_window},
      {"convergence_window", cfg.convergence_window},
      {"convergence_fraction", cfg.convergence_fraction},
      {"jobs", cfg.jobs},
      {"write_trace", cfg.write_trace},
      {"save_checkpoints", cfg.save_checkpoints},
      {"area_side", e.area_side},
      {"n_uavs", e.n_uavs},
      {"n_bs", e.n_bs},
      {"bs_capacity_range", {e.bs_capacity_min, e.bs_capacity_max}},
      {"satellite_capacity", e.satellite_capacity},
      {"uav_capacity", e.uav_capacity},
      {"uav_altitude", e.uav_altitude},
      {"satellite_altitude", e.satellite_altitude},
      {"speed_mean", e.speed_mean},
      {"speed_sd", e.speed_sd},
      {"max_turn", e.max_turn},
      {"slot_seconds", e.slot_seconds},
      {"episode_slots", e.episode_slots},
      {"bs_coverage_radius", e.bs_coverage_radius},
      {"arrival_rate", e.tasks.arrival_rate},
      {"task_size_range", {e.tasks.min_bits, e.tasks.max_bits}},
      {"workload_range", {e.tasks.min_workload, e.tasks.max_workload}},
      {"deadline_range", {e.tasks.min_deadline, e.tasks.max_deadline}},
      {"short_deadline", e.tasks.short_deadline},
      {"delay_sensitivity", e.profit.delay_sensitivity},
      {"deterministic_channel", e.deterministic_channel},
      {"scenario", scenario_json(e.scenario)},
      {"bs_channel", channel_json(e.bs_channel)},
      {"sat_channel", channel_json(e.sat_channel)},
      {"cluster",
       {{"comm_radius", cfg.cluster.comm_radius},
        {"logistic_steepness", cfg.cluster.logistic_steepness},
        {"coverage_threshold", cfg.cluster.coverage_threshold},
        {"recluster_period", cfg.cluster.recluster_period},
        {"reelect_threshold", cfg.cluster.reelect_threshold},
        {"kmeans_max_iters", cfg.cluster.kmeans_max_iters},
        {"kmeans_tolerance", cfg.cluster.kmeans_tolerance},
        {"isolation_floor", cfg.cluster.isolation_floor}}},
      {"train",
       {{"gamma", cfg.train.gamma},
        {"tau", cfg.train.tau},
        {"batch_size", cfg.train.batch_size},
        {"update_period", cfg.train.update_period},
        {"warmup_transitions", cfg.train.warmup_transitions},
        {"buffer_capacity", cfg.train.buffer_capacity},
        {"actor_learning_rate", cfg.train.actor_learning_rate},
        {"critic_learning_rate", cfg.train.critic_learning_rate},
        {"actor_hidden", cfg.train.actor_hidden},
        {"critic_hidden", cfg.train.critic_hidden},
        {"noise_sigma", cfg.train.noise_sigma},
        {"noise_theta", cfg.train.noise_theta},
        {"reward_scale", cfg.train.reward_scale},
        {"max_agents", cfg.train.max_agents},
        {"logit_penalty", cfg.train.logit_penalty}}},
  };
}

RunConfig from_json(const json& j, const RunConfig& base) {
  RunConfig cfg = base;
  require_object(j, "");
  // Presets first so explicit keys in the same document win.
  if (j.contains("desk")) {
    if (read<bool>(j.at("desk"), "desk")) apply_desk_preset(cfg);
  }
  auto& e = cfg.env;
  for (const auto& [k, v] : j.items()) {
    const std::string& p = k;
    if (k == "desk") continue;
    if (k == "algorithm") cfg.algorithm = parse_algorithm(read<std::string>(v, p));
    else if (k == "episodes") cfg.episodes = read<int>(v, p);
    else if (k == "seed") cfg.seeds = {read<std::uint64_t>(v, p)};
    else if (k == "seeds") {
      if (!v.is_array() || v.empty()) throw ConfigError("seeds: expected a non-empty array");
      cfg.seeds.clear();
      for (std::size_t i = 0; i < v.size(); ++i)
        cfg.seeds.push_back(read<std::uint64_t>(v[i], "seeds[" + std::to_string(i) + "]"));
    } else if (k == "final_window") cfg.final_window = read<int>(v, p);
    else if (k == "convergence_window") cfg.convergence_window = read<int>(v, p);
    else if (k == "convergence_fraction") cfg.convergence_fraction = read<double>(v, p);
    else if (k == "jobs") cfg.jobs = read<int>(v, p);
    else if (k == "write_trace") cfg.write_trace = read<bool>(v, p);
    else if (k == "save_checkpoints") cfg.save_checkpoints = read<bool>(v, p);
    else if (k == "area_side") e.area_side = read<double>(v, p);
    else if (k == "n_uavs") e.n_uavs = read<int>(v, p);
    else if (k == "n_bs") e.n_bs = read<int>(v, p);
    else if (k == "bs_capacity_range") std::tie(e.bs_capacity_min, e.bs_capacity_max) = read_range(v, p);
    else if (k == "satellite_capacity") e.satellite_capacity = read<double>(v, p);
    else if (k == "uav_capacity") e.uav_capacity = read<double>(v, p);
    else if (k == "uav_altitude") e.uav_altitude = read<double>(v, p);
    else if (k == "satellite_altitude") e.satellite_altitude = read<double>(v, p);
    else if (k == "speed_mean") e.speed_mean = read<double>(v, p);
    else if (k == "speed_sd") e.speed_sd = read<double>(v, p);
    else if (k == "max_turn") e.max_turn = read<double>(v, p);
    else if (k == "slot_seconds") e.slot_seconds = read<double>(v, p);
    else if (k == "episode_slots") e.episode_slots = read<int>(v, p);
    else if (k == "bs_coverage_radius") e.bs_coverage_radius = read<double>(v, p);
    else if (k == "arrival_rate") e.tasks.arrival_rate = read<double>(v, p);
    else if (k == "task_size_range") std::tie(e.tasks.min_bits, e.tasks.max_bits) = read_range(v, p);
    else if (k == "workload_range") std::tie(e.tasks.min_workload, e.tasks.max_workload) = read_range(v, p);
    else if (k == "deadline_range") std::tie(e.tasks.min_deadline, e.tasks.max_deadline) = read_range(v, p);
    else if (k == "short_deadline") e.tasks.short_deadline = read<double>(v, p);
    else if (k == "delay_sensitivity") e.profit.delay_sensitivity = read<double>(v, p);
    else if (k == "deterministic_channel") e.deterministic_channel = read<bool>(v, p);
    else if (k == "scenario") read_scenario(v, e.scenario, p);
    else if (k == "bs_channel") read_channel(v, e.bs_channel, p);
    else if (k == "sat_channel") read_channel(v, e.sat_channel, p);
    else if (k == "cluster") read_cluster(v, cfg.cluster, p);
    else if (k == "train") read_train(v, cfg.train, p);
    else unknown(p);
  }
  return cfg;
}

void validate(const RunConfig& cfg) {
  auto check = [](bool ok, const std::string& msg) {
    if (!ok) throw ConfigError(msg);
  };
  check(cfg.episodes >= 0, "episodes: must be >= 0");
  check(!cfg.seeds.empty(), "seeds: at least one seed required");
  check(cfg.final_window > 0, "final_window: must be > 0");
  check(cfg.convergence_window > 0, "convergence_window: must be > 0");
  check(cfg.convergence_fraction > 0.0 && cfg.convergence_fraction <= 1.0,
        "convergence_fraction: must lie in (0, 1]");
  check(cfg.jobs >= 1, "jobs: must be >= 1");
  try {
    env::validate(cfg.env);
  } catch (const ContractViolation& e) {
    throw ConfigError(e.what());
  }
  try {
    cluster::validate(cfg.cluster);
  } catch (const ContractViolation& e) {
    throw ConfigError(std::string("cluster.") + e.what());
  }
  try {
    marl::validate(cfg.train);
  } catch (const ContractViolation& e) {
    throw ConfigError(std::string("train.") + e.what());
  }
}

void apply_override(json& j, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "': expected key=value");
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;

  json* node = &j;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ConfigError("override '" + assignment + "': empty key segment");
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    json& child = (*node)[part];
    if (child.is_null()) child = json::object();
    if (!child.is_object()) throw ConfigError(key.substr(0, dot) + ": is not a section");
    node = &child;
    start = dot + 1;
  }
}

RunConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
  json doc = json::object();
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw ConfigError(path.string() + ": cannot open config file");
    std::stringstream buf;
    buf << in.rdbuf();
    const std::string text = buf.str();
    if (text.find_first_not_of(" \t\r\n") != std::string::npos) {
      try {
        doc = json::parse(text);
      } catch (const json::parse_error& e) {
        throw ConfigError(path.string() + ": parse error: " + e.what());
      }
    }
    require_object(doc, "");
  }
  for (const auto& o : overrides) apply_override(doc, o);
  RunConfig cfg = from_json(doc);
  validate(cfg);
  return cfg;
}

// ---------------------------------------------------------------------------
// Metrics

double jain_index(std::span<const double> u) {
  double sum = 0.0;
  double sq = 0.0;
  for (double x : u) {
    sum += x;
    sq += x * x;
  }
  if (u.empty() || sq == 0.0) return 1.0;
  return sum * sum / (static_cast<double>(u.size()) * sq);
}

MetricsRow MetricsAccumulator::push(const marl::SlotRecord& r) {
  if (r.episode != episode_) {
    episode_ = r.episode;
    spawned_ = 0;
    on_time_ = 0;
    cycles_.assign(r.device_cycles.size(), 0.0);
  }
  if (cycles_.size() != r.device_cycles.size()) throw ContractViolation("device count changed within an episode");
  for (std::size_t i = 0; i < cycles_.size(); ++i) cycles_[i] += r.device_cycles[i];
  cumulative_profit_ += r.reward;
  spawned_ += r.spawned;
  on_time_ += r.on_time;

  MetricsRow row;
  row.episode = r.episode;
  row.slot = r.slot;
  row.reward = r.reward;
  row.cumulative_profit = cumulative_profit_;
  row.completion_rate = spawned_ > 0 ? std::min(1.0, static_cast<double>(on_time_) / static_cast<double>(spawned_)) : 0.0;
  row.jain_index = jain_index(cycles_);
  row.cluster_count = r.cluster_count;
  row.critic_loss = r.critic_loss;
  row.actor_objective = r.actor_objective;
  row.spawned = r.spawned;
  row.on_time = r.on_time;
  row.late = r.late;
  row.short_deadline_profit = r.short_deadline_profit;
  return row;
}

std::vector<MetricsRow> compute_metrics(std::span<const marl::SlotRecord> records) {
  MetricsAccumulator acc;
  std::vector<MetricsRow> rows;
  rows.reserve(records.size());
  for (const auto& r : records) rows.push_back(acc.push(r));
  return rows;
}

const std::vector<std::string>& metrics_header() {
  static const std::vector<std::string> h{"episode",       "slot",          "reward",          "cumulative_profit",
                                          "completion_rate", "jain_index",  "cluster_count",   "critic_loss",
                                          "actor_objective", "spawned",     "on_time",         "late",
                                          "short_deadline_profit"};
  return h;
}

void write_metrics_header(std::ostream& out) {
  const auto& h = metrics_header();
  for (std::size_t i = 0; i < h.size(); ++i) out << (i ? "," : "") << h[i];
  out << '\n';
}

namespace {

// Shortest text that parses back to the same double; empty for NaN.
std::string real(double v) {
  if (std::isnan(v)) return "";
  char buf[32];
  for (int prec = 1; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

double parse_real(const std::string& s) {
  if (s.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::size_t used = 0;
  const double v = std::stod(s, &used);
  if (used != s.size()) throw std::invalid_argument("bad number '" + s + "'");
  return v;
}

}  // namespace

void write_metrics_row(std::ostream& out, const MetricsRow& r) {
  out << r.episode << ',' << r.slot << ',' << real(r.reward) << ',' << real(r.cumulative_profit) << ','
      << real(r.completion_rate) << ',' << real(r.jain_index) << ',' << r.cluster_count << ','
      << real(r.critic_loss) << ',' << real(r.actor_objective) << ',' << r.spawned << ',' << r.on_time << ','
      << r.late << ',' << real(r.short_deadline_profit) << '\n';
}

std::vector<MetricsRow> read_metrics_csv(std::istream& in) {
  std::vector<MetricsRow> rows;
  std::string line;
  if (!std::getline(in, line)) return rows;
  std::string expected;
  {
    std::ostringstream h;
    write_metrics_header(h);
    expected = h.str();
    expected.pop_back();
  }
  if (line != expected) throw ContractViolation("metrics.csv header mismatch");
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (!line.empty() && line.back() == ',') f.emplace_back();
    if (f.size() != metrics_header().size()) throw ContractViolation("metrics.csv row has wrong field count");
    MetricsRow r;
    r.episode = std::stoi(f[0]);
    r.slot = std::stoll(f[1]);
    r.reward = parse_real(f[2]);
    r.cumulative_profit = parse_real(f[3]);
    r.completion_rate = parse_real(f[4]);
    r.jain_index = parse_real(f[5]);
    r.cluster_count = std::stoi(f[6]);
    r.critic_loss = parse_real(f[7]);
    r.actor_objective = parse_real(f[8]);
    r.spawned = std::stoi(f[9]);
    r.on_time = std::stoi(f[10]);
    r.late = std::stoi(f[11]);
    r.short_deadline_profit = parse_real(f[12]);
    rows.push_back(r);
  }
  return rows;
}

std::vector<EpisodeSummary> summarize_episodes(std::span<const MetricsRow> rows) {
  std::vector<EpisodeSummary> out;
  for (const auto& r : rows) {
    if (out.empty() || out.back().episode != r.episode) out.push_back(EpisodeSummary{r.episode});
    auto& e = out.back();
    e.profit += r.reward;
    e.spawned += r.spawned;
    e.on_time += r.on_time;
    e.late += r.late;
    e.short_deadline_profit += r.short_deadline_profit;
  }
  return out;
}

int convergence_episode(std::span<const double> p, int window, double fraction) {
  if (p.empty()) return -1;
  const auto n = static_cast<int>(p.size());
  const int w = std::min(window, n);
  std::vector<double> ma(p.size());
  double run = 0.0;
  for (int i = 0; i < n; ++i) {
    run += p[static_cast<std::size_t>(i)];
    if (i >= w) run -= p[static_cast<std::size_t>(i - w)];
    ma[static_cast<std::size_t>(i)] = run / std::min(i + 1, w);
  }
  const double final_value = ma.back();
  const double threshold = final_value - (1.0 - fraction) * std::abs(final_value);
  for (int i = w - 1; i < n; ++i)
    if (ma[static_cast<std::size_t>(i)] >= threshold) return i;
  return n - 1;
}

RunTotals compute_totals(std::span<const MetricsRow> rows, int final_window, int convergence_window,
                         double convergence_fraction) {
  RunTotals t;
  const auto eps = summarize_episodes(rows);
  t.episodes = static_cast<int>(eps.size());
  if (eps.empty()) return t;
  std::vector<double> profit;
  std::int64_t spawned = 0, on_time = 0;
  for (const auto& e : eps) {
    profit.push_back(e.profit);
    t.total_profit += e.profit;
    spawned += e.spawned;
    on_time += e.on_time;
  }
  t.completion_rate = spawned > 0 ? static_cast<double>(on_time) / static_cast<double>(spawned) : 0.0;
  const std::size_t w = std::min<std::size_t>(static_cast<std::size_t>(final_window), eps.size());
  double fp = 0.0, fs = 0.0;
  std::int64_t fspawned = 0, fon = 0;
  for (std::size_t i = eps.size() - w; i < eps.size(); ++i) {
    fp += eps[i].profit;
    fs += eps[i].short_deadline_profit;
    fspawned += eps[i].spawned;
    fon += eps[i].on_time;
  }
  t.mean_final_profit = fp / static_cast<double>(w);
  t.final_completion_rate = fspawned > 0 ? static_cast<double>(fon) / static_cast<double>(fspawned) : 0.0;
  t.short_deadline_share = fp > 0.0 ? fs / fp : 0.0;
  t.convergence_episode = convergence_episode(profit, convergence_window, convergence_fraction);
  return t;
}

// ---------------------------------------------------------------------------
// Runs

marl::RunArtifacts execute(const RunConfig& cfg, std::uint64_t seed, const marl::RunOptions& base_options) {
  marl::RunOptions opt = base_options;
  opt.seed = seed;
  opt.episodes = cfg.episodes;
  switch (cfg.algorithm) {
    case Algorithm::Cmaddpg:
      return marl::cmaddpg_run(cfg.env, cfg.cluster, cfg.train, opt);
    case Algorithm::NaiveMaddpg:
      return baselines::naive_maddpg_run(cfg.env, cfg.train, opt);
    case Algorithm::Maac:
      return baselines::maac_run(cfg.env, cfg.train, opt);
    case Algorithm::GreedyNearest:
      return baselines::heuristic_run(baselines::BaselineKind::GreedyNearest, cfg.env, opt);
    case Algorithm::RandomOffload:
      return baselines::heuristic_run(baselines::BaselineKind::RandomOffload, cfg.env, opt);
    case Algorithm::LocalOnly:
      return baselines::heuristic_run(baselines::BaselineKind::LocalOnly, cfg.env, opt);
  }
  throw ContractViolation("unhandled algorithm");
}

namespace {

std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error(p.string() + ": cannot open for writing");
  return out;
}

json totals_json(const RunTotals& t) {
  return {{"episodes", t.episodes},
          {"total_profit", t.total_profit},
          {"mean_final_profit", t.mean_final_profit},
          {"final_completion_rate", t.final_completion_rate},
          {"completion_rate", t.completion_rate},
          {"short_deadline_share", t.short_deadline_share},
          {"convergence_episode", t.convergence_episode}};
}

void save_networks(const marl::RunArtifacts& art, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  json manifest = {{"format", "sagin-densenet-v1"}, {"networks", json::array()}};
  for (const auto& [name, net] : art.networks) {
    nn::save_checkpoint(net, dir / name);
    manifest["networks"].push_back({{"name", name},
                                    {"bin", name + ".bin"},
                                    {"desc", name + ".desc"},
                                    {"parameters", net.parameter_count()}});
  }
  auto out = open_out(dir / "manifest.json");
  out << manifest.dump(2) << '\n';
}

}  // namespace

RunResult run_single(const RunConfig& cfg, std::uint64_t seed, const std::filesystem::path& out_dir) {
  validate(cfg);
  std::filesystem::create_directories(out_dir);
  const auto start = std::chrono::steady_clock::now();

  RunResult res;
  res.seed = seed;
  res.directory = out_dir;

  auto metrics = open_out(out_dir / "metrics.csv");
  write_metrics_header(metrics);
  auto clusters = open_out(out_dir / "clusters.log");
  std::ofstream trace;
  if (cfg.write_trace) {
    trace = open_out(out_dir / "trace.csv");
    trace << "slot,task_id,origin,device,priority,queueing,transmission,computing,total,profit,on_time\n";
  }

  MetricsAccumulator acc;
  marl::RunOptions opt;
  opt.cluster_log = cfg.algorithm == Algorithm::Cmaddpg ? &clusters : nullptr;
  opt.trace_out = cfg.write_trace ? &trace : nullptr;
  opt.on_slot = [&](const marl::SlotRecord& r) {
    res.rows.push_back(acc.push(r));
    write_metrics_row(metrics, res.rows.back());
  };
  try {
    res.artifacts = execute(cfg, seed, opt);
  } catch (const std::exception& e) {
    metrics << "# truncated: " << e.what() << '\n';
    throw;
  }
  metrics.close();

  if (cfg.save_checkpoints) save_networks(res.artifacts, out_dir / "checkpoints");
  res.totals = compute_totals(res.rows, cfg.final_window, cfg.convergence_window, cfg.convergence_fraction);
  res.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  const auto& a = res.artifacts;
  auto mean = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
  };
  int max_agents = 0;
  for (int c : a.agent_counts) max_agents = std::max(max_agents, c);
  json run = {{"config", to_json(cfg)},
              {"seed", seed},
              {"algorithm", to_string(cfg.algorithm)},
              {"totals", totals_json(res.totals)},
              {"agent_count", max_agents},
              {"train_cycles", a.train_cycles},
              {"wall_seconds", res.wall_seconds},
              {"mean_episode_wall_seconds", mean(a.episode_wall_seconds)},
              {"mean_episode_train_seconds", mean(a.episode_train_seconds)}};
  auto out = open_out(out_dir / "run.json");
  out << run.dump(2) << '\n';
  return res;
}

std::vector<RunResult> run_experiment(const RunConfig& cfg, const std::filesystem::path& out_dir) {
  validate(cfg);
  if (cfg.seeds.size() == 1) return {run_single(cfg, cfg.seeds.front(), out_dir)};

  std::vector<RunResult> results(cfg.seeds.size());
  auto dir_for = [&](std::uint64_t s) { return out_dir / ("seed_" + std::to_string(s)); };
  std::size_t next = 0;
  while (next < cfg.seeds.size()) {
    std::vector<std::future<RunResult>> batch;
    const std::size_t end = std::min(cfg.seeds.size(), next + static_cast<std::size_t>(cfg.jobs));
    for (std::size_t i = next; i < end; ++i)
      batch.push_back(std::async(std::launch::async, [&, i] { return run_single(cfg, cfg.seeds[i], dir_for(cfg.seeds[i])); }));
    for (std::size_t i = next; i < end; ++i) results[i] = batch[i - next].get();
    next = end;
  }

  json sweep = {{"algorithm", to_string(cfg.algorithm)}, {"runs", json::array()}};
  double sum = 0.0;
  for (const auto& r : results) {
    sum += r.totals.mean_final_profit;
    sweep["runs"].push_back({{"seed", r.seed}, {"directory", r.directory.filename().string()},
                             {"totals", totals_json(r.totals)}});
  }
  sweep["mean_final_profit"] = sum / static_cast<double>(results.size());
  auto out = open_out(out_dir / "sweep.json");
  out << sweep.dump(2) << '\n';
  return results;
}

}  // namespace sagin::harness
