#include "sagin/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace sagin::cluster {

namespace {

double squared_distance(const Position& a, const Position& b) {
  const double dx = a.x - b.x;
  const double dy = a.y - b.y;
  const double dz = a.z - b.z;
  return dx * dx + dy * dy + dz * dz;
}

Position mean_of(const std::set<int>& ids, std::span<const Position> positions) {
  Position c;
  for (int id : ids) {
    c.x += positions[id].x;
    c.y += positions[id].y;
    c.z += positions[id].z;
  }
  const double n = static_cast<double>(ids.size());
  return {c.x / n, c.y / n, c.z / n};
}

// Member closest to `centroid`; std::set iteration order gives lowest id on ties.
int closest_member(const std::set<int>& ids, const Position& centroid, std::span<const Position> positions) {
  int best = -1;
  double best_d = std::numeric_limits<double>::infinity();
  for (int id : ids) {
    const double d = squared_distance(positions[id], centroid);
    if (d < best_d) {
      best_d = d;
      best = id;
    }
  }
  return best;
}

double uniform_coverage(double density_term, int count) { return 1.0 - std::pow(1.0 - density_term, count); }

}  // namespace

void validate(const ClusterConfig& cfg) {
  if (!(cfg.coverage_threshold > 0.0 && cfg.coverage_threshold < 1.0))
    throw ContractViolation("cluster.coverage_threshold must lie in (0, 1)");
  if (!(cfg.comm_radius > 0.0)) throw ContractViolation("cluster.comm_radius must be > 0");
  if (!(cfg.logistic_steepness > 0.0)) throw ContractViolation("cluster.logistic_steepness must be > 0");
  if (cfg.recluster_period < 1) throw ContractViolation("cluster.recluster_period must be >= 1");
  if (cfg.reelect_threshold < 1) throw ContractViolation("cluster.reelect_threshold must be >= 1");
  if (cfg.kmeans_max_iters < 1) throw ContractViolation("cluster.kmeans_max_iters must be >= 1");
  if (!(cfg.isolation_floor >= 0.0 && cfg.isolation_floor < 1.0))
    throw ContractViolation("cluster.isolation_floor must lie in [0, 1)");
}

int ClusterState::cluster_of(int uav) const {
  for (std::size_t i = 0; i < clusters.size(); ++i)
    if (clusters[i].members.contains(uav)) return static_cast<int>(i);
  return -1;
}

std::vector<int> ClusterState::heads() const {
  std::vector<int> out;
  out.reserve(clusters.size());
  for (const auto& c : clusters) out.push_back(c.head);
  return out;
}

void check_invariants(const ClusterState& state, int n_uavs) {
  std::vector<int> seen(static_cast<std::size_t>(n_uavs), 0);
  auto mark = [&](int id) {
    if (id < 0 || id >= n_uavs) throw ContractViolation("unknown UAV id " + std::to_string(id));
    if (++seen[static_cast<std::size_t>(id)] > 1)
      throw ContractViolation("UAV " + std::to_string(id) + " appears in more than one group");
  };
  std::set<int> heads;
  for (const auto& c : state.clusters) {
    if (!c.members.contains(c.head)) throw ContractViolation("head " + std::to_string(c.head) + " not in own cluster");
    if (!heads.insert(c.head).second) throw ContractViolation("duplicate head " + std::to_string(c.head));
    for (int m : c.members) mark(m);
  }
  for (int id : state.isolated) mark(id);
  for (int i = 0; i < n_uavs; ++i)
    if (seen[static_cast<std::size_t>(i)] != 1) throw ContractViolation("UAV " + std::to_string(i) + " unassigned");
  for (const auto& [id, count] : state.head_offcenter_counters) {
    if (!heads.contains(id)) throw ContractViolation("counter kept for non-head " + std::to_string(id));
    if (count < 0) throw ContractViolation("negative off-center counter");
  }
}

double coverage_probability(const Position& uav, const Position& head, const ClusterConfig& cfg) {
  const double d = distance(uav, head);
  return 1.0 / (1.0 + std::exp(cfg.logistic_steepness * (d - cfg.comm_radius)));
}

double expected_cluster_size(std::span<const Position> members, const Position& head, const ClusterConfig& cfg) {
  if (members.empty()) throw ContractViolation("expected_cluster_size needs at least one UAV");
  double sum = 0.0;
  for (const auto& p : members) sum += coverage_probability(p, head, cfg);
  return sum;
}

double max_coverage_probability(const Position& uav, std::span<const Position> heads, const ClusterConfig& cfg) {
  if (heads.empty()) throw ContractViolation("max_coverage_probability needs at least one head");
  double miss = 1.0;
  for (const auto& h : heads) miss *= 1.0 - coverage_probability(uav, h, cfg);
  return 1.0 - miss;
}

ClusterCount optimal_cluster_count(int n_uavs, double area, const ClusterConfig& cfg) {
  if (n_uavs < 1) throw ContractViolation("optimal_cluster_count needs n_uavs >= 1");
  if (!(area > 0.0)) throw ContractViolation("optimal_cluster_count needs a positive area");
  const double density = n_uavs / area;
  const double term = density * kPi * cfg.comm_radius * cfg.comm_radius / n_uavs;
  if (term >= 1.0) return {1, true};

  const double raw = std::log(1.0 - cfg.coverage_threshold) / std::log(1.0 - term);
  double c = std::ceil(raw);
  if (!std::isfinite(c) || c > n_uavs) c = n_uavs;
  int count = std::max(1, static_cast<int>(c));
  // ceil() of a rounded quotient can land one off at exact boundaries
  while (count > 1 && uniform_coverage(term, count - 1) >= cfg.coverage_threshold) --count;
  while (count < n_uavs && uniform_coverage(term, count) < cfg.coverage_threshold) ++count;
  return {count, false};
}

KMeansResult kmeans_cluster(std::span<const Position> positions, int k, Rng& rng, const ClusterConfig& cfg) {
  const int n = static_cast<int>(positions.size());
  if (k < 1 || k > n) throw ContractViolation("kmeans_cluster needs 1 <= k <= number of UAVs");

  // Farthest-point seeding.
  std::vector<Position> centroids;
  centroids.reserve(static_cast<std::size_t>(k));
  std::uniform_int_distribution<int> first(0, n - 1);
  centroids.push_back(positions[static_cast<std::size_t>(first(rng))]);
  std::vector<double> nearest(static_cast<std::size_t>(n), std::numeric_limits<double>::infinity());
  while (static_cast<int>(centroids.size()) < k) {
    int far = 0;
    double far_d = -1.0;
    for (int i = 0; i < n; ++i) {
      auto& d = nearest[static_cast<std::size_t>(i)];
      d = std::min(d, squared_distance(positions[static_cast<std::size_t>(i)], centroids.back()));
      if (d > far_d) {
        far_d = d;
        far = i;
      }
    }
    centroids.push_back(positions[static_cast<std::size_t>(far)]);
  }

  KMeansResult result;
  std::vector<int> assign(static_cast<std::size_t>(n), -1);
  std::vector<int> previous;

  auto assign_all = [&] {
    double objective = 0.0;
    for (int i = 0; i < n; ++i) {
      int best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (int c = 0; c < k; ++c) {
        const double d = squared_distance(positions[static_cast<std::size_t>(i)], centroids[static_cast<std::size_t>(c)]);
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      assign[static_cast<std::size_t>(i)] = best;
      objective += best_d;
    }
    result.objective_history.push_back(objective);
  };

  for (int iter = 0; iter < cfg.kmeans_max_iters; ++iter) {
    assign_all();
    result.iterations = iter + 1;
    if (assign == previous) break;
    previous = assign;

    std::vector<Position> sums(static_cast<std::size_t>(k));
    std::vector<int> counts(static_cast<std::size_t>(k), 0);
    for (int i = 0; i < n; ++i) {
      const auto c = static_cast<std::size_t>(assign[static_cast<std::size_t>(i)]);
      sums[c].x += positions[static_cast<std::size_t>(i)].x;
      sums[c].y += positions[static_cast<std::size_t>(i)].y;
      sums[c].z += positions[static_cast<std::size_t>(i)].z;
      ++counts[c];
    }
    double max_shift = 0.0;
    for (int c = 0; c < k; ++c) {
      const auto ci = static_cast<std::size_t>(c);
      Position updated;
      if (counts[ci] > 0) {
        updated = {sums[ci].x / counts[ci], sums[ci].y / counts[ci], sums[ci].z / counts[ci]};
      } else {
        // Empty cluster: move its centroid onto the point farthest from its own centroid.
        int far = 0;
        double far_d = -1.0;
        for (int i = 0; i < n; ++i) {
          const double d = squared_distance(positions[static_cast<std::size_t>(i)],
                                            centroids[static_cast<std::size_t>(assign[static_cast<std::size_t>(i)])]);
          if (d > far_d) {
            far_d = d;
            far = i;
          }
        }
        updated = positions[static_cast<std::size_t>(far)];
      }
      max_shift = std::max(max_shift, distance(updated, centroids[ci]));
      centroids[ci] = updated;
    }
    if (max_shift < cfg.kmeans_tolerance) {
      assign_all();
      result.iterations = iter + 2;
      break;
    }
  }

  std::vector<std::set<int>> groups(static_cast<std::size_t>(k));
  for (int i = 0; i < n; ++i) groups[static_cast<std::size_t>(assign[static_cast<std::size_t>(i)])].insert(i);
  for (auto& members : groups) {
    if (members.empty()) continue;  // only possible with coincident UAVs
    Cluster cl;
    cl.centroid = mean_of(members, positions);
    cl.head = closest_member(members, cl.centroid, positions);
    cl.members = std::move(members);
    result.state.head_offcenter_counters[cl.head] = 0;
    result.state.clusters.push_back(std::move(cl));
  }
  return result;
}

std::pair<ClusterState, std::vector<MaintenanceEvent>> maintenance_step(const ClusterState& state,
                                                                        std::span<const Position> positions,
                                                                        const ClusterConfig& cfg) {
  ClusterState next = state;
  next.timestamp = state.timestamp + 1;
  std::vector<MaintenanceEvent> events;
  const int n = static_cast<int>(positions.size());

  std::set<int> heads;
  for (const auto& c : state.clusters) heads.insert(c.head);

  // Membership: every non-head UAV follows the head with the highest coverage.
  for (int uav = 0; uav < n; ++uav) {
    if (heads.contains(uav)) continue;
    const int current = next.cluster_of(uav);
    int best = -1;
    double best_p = -1.0;
    for (std::size_t c = 0; c < next.clusters.size(); ++c) {
      const double p = coverage_probability(positions[static_cast<std::size_t>(uav)],
                                            positions[static_cast<std::size_t>(next.clusters[c].head)], cfg);
      if (p > best_p || (p == best_p && static_cast<int>(c) == current)) {
        best_p = p;
        best = static_cast<int>(c);
      }
    }
    if (best < 0 || best_p < cfg.isolation_floor) {
      if (current >= 0) {
        next.clusters[static_cast<std::size_t>(current)].members.erase(uav);
        next.isolated.insert(uav);
        events.emplace_back(event::Isolated{uav});
      }
      continue;
    }
    if (current < 0) {
      next.isolated.erase(uav);
      next.clusters[static_cast<std::size_t>(best)].members.insert(uav);
      events.emplace_back(event::JoinRequest{uav, next.clusters[static_cast<std::size_t>(best)].head});
    } else if (best != current) {
      next.clusters[static_cast<std::size_t>(current)].members.erase(uav);
      next.clusters[static_cast<std::size_t>(best)].members.insert(uav);
      events.emplace_back(event::LeaveNotice{uav, next.clusters[static_cast<std::size_t>(current)].head});
      events.emplace_back(event::JoinRequest{uav, next.clusters[static_cast<std::size_t>(best)].head});
    }
  }

  // Re-election: a head that is off-centre for t_ele consecutive slots hands over.
  for (auto& cl : next.clusters) {
    cl.centroid = mean_of(cl.members, positions);
    const int closest = closest_member(cl.members, cl.centroid, positions);
    int& counter = next.head_offcenter_counters[cl.head];
    if (closest == cl.head) {
      counter = 0;
      continue;
    }
    ++counter;
    if (counter >= cfg.reelect_threshold) {
      const int old = cl.head;
      next.head_offcenter_counters.erase(old);
      next.head_offcenter_counters[closest] = 0;
      cl.head = closest;
      events.emplace_back(event::HeadReplaced{old, closest});
      events.emplace_back(event::HeadBroadcast{closest, positions[static_cast<std::size_t>(closest)], next.timestamp});
    }
  }
  return {std::move(next), std::move(events)};
}

bool should_recluster(std::int64_t slot, const ClusterConfig& cfg) {
  if (slot < 0) throw ContractViolation("slot must be >= 0");
  return slot % cfg.recluster_period == 0;
}

ClusterState singleton_clusters(std::span<const Position> positions) {
  ClusterState state;
  for (int i = 0; i < static_cast<int>(positions.size()); ++i) {
    Cluster c;
    c.head = i;
    c.members = {i};
    c.centroid = positions[static_cast<std::size_t>(i)];
    state.clusters.push_back(std::move(c));
    state.head_offcenter_counters[i] = 0;
  }
  return state;
}

void write_snapshot(std::ostream& out, std::int64_t slot, const ClusterState& state) {
  auto join = [](const std::set<int>& ids) {
    std::ostringstream s;
    bool first = true;
    for (int id : ids) {
      if (!first) s << ',';
      s << id;
      first = false;
    }
    return s.str();
  };
  for (const auto& c : state.clusters) out << "slot=" << slot << " head=" << c.head << " members=" << join(c.members) << '\n';
  if (!state.isolated.empty()) out << "slot=" << slot << " isolated=" << join(state.isolated) << '\n';
}

}  // namespace sagin::cluster
