#pragma once

// Dynamic UAV clustering: satellite-side K-Means seeding with an analytically
// sized cluster count, and the per-slot distributed maintenance protocol
// (join/leave, isolation, cluster-head re-election).

#include <cstdint>
#include <map>
#include <ostream>
#include <set>
#include <span>
#include <variant>
#include <vector>

#include "sagin/core.hpp"

namespace sagin::cluster {

struct ClusterConfig {
  double comm_radius{1000.0};        // R, m
  double logistic_steepness{0.01};   // zeta, 1/m
  double coverage_threshold{0.9};    // target P_max
  int recluster_period{50};          // T_cls, slots
  int reelect_threshold{5};          // t_ele, slots
  int kmeans_max_iters{100};
  double kmeans_tolerance{1e-6};     // m
  double isolation_floor{1e-3};
};

void validate(const ClusterConfig& cfg);

struct Cluster {
  int head{};
  std::set<int> members;  // includes the head
  Position centroid;
};

struct ClusterState {
  std::vector<Cluster> clusters;
  std::set<int> isolated;
  std::map<int, int> head_offcenter_counters;
  std::int64_t timestamp{};

  /// Index into `clusters` of the cluster containing `uav`, or -1 if isolated
  /// or unknown.
  int cluster_of(int uav) const;
  std::vector<int> heads() const;
};

/// Throws ContractViolation when the partition/counter invariants fail for
/// UAV ids 0..n_uavs-1.
void check_invariants(const ClusterState& state, int n_uavs);

namespace event {
struct HeadBroadcast {
  int head;
  Position position;
  std::int64_t timestamp;
};
struct JoinRequest {
  int member;
  int head;
};
struct LeaveNotice {
  int member;
  int head;
};
struct HeadReplaced {
  int old_head;
  int new_head;
};
struct Isolated {
  int member;
};
}  // namespace event

using MaintenanceEvent =
    std::variant<event::HeadBroadcast, event::JoinRequest, event::LeaveNotice, event::HeadReplaced, event::Isolated>;

// ---------------------------------------------------------------------------

/// Logistic coverage 1 / (1 + exp(zeta * (d - R))); decreasing in distance.
double coverage_probability(const Position& uav, const Position& head, const ClusterConfig& cfg);

double expected_cluster_size(std::span<const Position> members, const Position& head, const ClusterConfig& cfg);

/// 1 - prod_l (1 - P_il).
double max_coverage_probability(const Position& uav, std::span<const Position> heads, const ClusterConfig& cfg);

struct ClusterCount {
  int count{1};
  bool degenerate{false};  // density term >= 1; a single cluster covers everything
};

/// Smallest cluster count whose uniform-density coverage reaches the target,
/// clamped to [1, n_uavs].
ClusterCount optimal_cluster_count(int n_uavs, double area, const ClusterConfig& cfg);

struct KMeansResult {
  ClusterState state;
  /// Sum of squared member-to-centroid distances after each assignment pass.
  std::vector<double> objective_history;
  int iterations{};
};

/// Lloyd's algorithm with farthest-point seeding (first seed drawn from `rng`).
/// Positions are indexed by UAV id. Each cluster's head is the member closest
/// to its centroid, lowest id on ties.
KMeansResult kmeans_cluster(std::span<const Position> positions, int k, Rng& rng, const ClusterConfig& cfg);

/// One synchronous round of the maintenance protocol.
std::pair<ClusterState, std::vector<MaintenanceEvent>> maintenance_step(const ClusterState& state,
                                                                        std::span<const Position> positions,
                                                                        const ClusterConfig& cfg);

bool should_recluster(std::int64_t slot, const ClusterConfig& cfg);

/// Singleton clusters: every UAV heads its own cluster. Used when running
/// without clustering.
ClusterState singleton_clusters(std::span<const Position> positions);

/// Line format: `slot=<n> head=<id> members=<a,b,...>` per cluster, followed by
/// `slot=<n> isolated=<a,b,...>` when any UAV is isolated.
void write_snapshot(std::ostream& out, std::int64_t slot, const ClusterState& state);

}  // namespace sagin::cluster
