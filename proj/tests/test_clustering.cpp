#include <doctest.h>

#include <cmath>
#include <sstream>
#include <variant>

#include "oracles.hpp"
#include "sagin/clustering.hpp"

using namespace sagin;
using namespace sagin::cluster;

TEST_CASE("coverage probability") {
  ClusterConfig cfg;
  const Position head{0, 0, 0};
  CHECK(coverage_probability({cfg.comm_radius, 0, 0}, head, cfg) == doctest::Approx(0.5));
  CHECK(coverage_probability({cfg.comm_radius + 100.0, 0, 0}, head, cfg) ==
        doctest::Approx(1.0 / (1.0 + std::exp(1.0))).epsilon(1e-12));
  double prev = 0.0;
  for (double d = 2000.0; d >= 0.0; d -= 100.0) {
    const double p = coverage_probability({d, 0, 0}, head, cfg);
    CHECK(p > prev);
    prev = p;
  }
  CHECK(prev > 0.9999);
}

TEST_CASE("expected cluster size") {
  ClusterConfig cfg;
  std::vector<Position> ring;
  for (int i = 0; i < 8; ++i) {
    const double a = kTwoPi * i / 8;
    ring.push_back({cfg.comm_radius * std::cos(a), cfg.comm_radius * std::sin(a), 0});
  }
  CHECK(expected_cluster_size(ring, {0, 0, 0}, cfg) == doctest::Approx(4.0));
  const std::vector<Position> one{{0, 0, 0}};
  CHECK(expected_cluster_size(one, {0, 0, 0}, cfg) == doctest::Approx(1.0).epsilon(1e-4));
}

TEST_CASE("expected cluster size matches the uniform-density value") {
  // Monte Carlo over uniform layouts around a central head; the logistic edge
  // is symmetric so the mean count approaches density * pi * R^2.
  ClusterConfig cfg;
  cfg.comm_radius = 300.0;
  cfg.logistic_steepness = 0.2;
  const double side = 2000.0;
  const int n = 50;
  Rng rng(17);
  std::uniform_real_distribution<double> coord(-side / 2, side / 2);
  double sum = 0.0;
  const int layouts = 100000;
  std::vector<Position> pts(n);
  for (int k = 0; k < layouts; ++k) {
    for (auto& p : pts) p = {coord(rng), coord(rng), 0.0};
    sum += expected_cluster_size(pts, {0, 0, 0}, cfg);
  }
  const double expected = n / (side * side) * kPi * cfg.comm_radius * cfg.comm_radius;
  CHECK(sum / layouts == doctest::Approx(expected).epsilon(0.01));
}

TEST_CASE("maximum coverage probability") {
  ClusterConfig cfg;
  const Position uav{0, 0, 0};
  const std::vector<Position> one{{cfg.comm_radius, 0, 0}};
  CHECK(max_coverage_probability(uav, one, cfg) == doctest::Approx(0.5));
  const std::vector<Position> two{{cfg.comm_radius, 0, 0}, {0, cfg.comm_radius, 0}};
  CHECK(max_coverage_probability(uav, two, cfg) == doctest::Approx(0.75));
  ClusterConfig sharp = cfg;
  sharp.logistic_steepness = 10.0;
  const std::vector<Position> near{{0, 0, 0}, {5000, 0, 0}};
  CHECK(max_coverage_probability(uav, near, sharp) == 1.0);
}

TEST_CASE("optimal cluster count") {
  ClusterConfig cfg;
  cfg.coverage_threshold = 0.9;
  cfg.comm_radius = 100.0;
  // density * pi * R^2 = 20 with N = 40 gives term 0.5.
  const double area20 = 40.0 * kPi * 100.0 * 100.0 / 20.0;
  CHECK(optimal_cluster_count(40, area20, cfg).count == 4);
  const double area8 = 40.0 * kPi * 100.0 * 100.0 / 8.0;
  CHECK(optimal_cluster_count(40, area8, cfg).count == 11);
  cfg.coverage_threshold = 1e-9;
  CHECK(optimal_cluster_count(40, area8, cfg).count == 1);
  cfg.coverage_threshold = 0.9;
  const auto degenerate = optimal_cluster_count(10, 100.0, cfg);
  CHECK(degenerate.count == 1);
  CHECK(degenerate.degenerate);

  const auto r = oracle::cluster_count(99, 200);
  INFO(r.detail);
  CHECK(r.pass);
}

TEST_CASE("k-means") {
  Rng rng(5);
  ClusterConfig cfg;
  SUBCASE("k = N") {
    std::vector<Position> pts{{0, 0, 0}, {100, 0, 0}, {0, 100, 0}, {300, 300, 0}};
    const auto res = kmeans_cluster(pts, 4, rng, cfg);
    CHECK(res.objective_history.back() == 0.0);
    CHECK(res.state.clusters.size() == 4);
    for (const auto& c : res.state.clusters) CHECK(c.members.size() == 1);
  }
  SUBCASE("two separated groups") {
    std::vector<Position> pts{{0, 0, 0}, {10, 0, 0}, {0, 10, 0}, {1000, 1000, 0}, {1010, 1000, 0}, {1000, 1010, 0}};
    const auto res = kmeans_cluster(pts, 2, rng, cfg);
    REQUIRE(res.state.clusters.size() == 2);
    std::set<std::set<int>> groups;
    for (const auto& c : res.state.clusters) groups.insert(c.members);
    CHECK(groups == std::set<std::set<int>>{{0, 1, 2}, {3, 4, 5}});
  }
  SUBCASE("k = 1 head is nearest the global centroid") {
    std::vector<Position> pts{{0, 0, 0}, {100, 0, 0}, {40, 10, 0}, {90, 90, 0}};
    const auto res = kmeans_cluster(pts, 1, rng, cfg);
    REQUIRE(res.state.clusters.size() == 1);
    CHECK(res.state.clusters[0].head == 2);
  }
  CHECK_THROWS_AS(kmeans_cluster(std::vector<Position>{{0, 0, 0}}, 2, rng, cfg), ContractViolation);

  const auto r = oracle::kmeans_monotone(7, 50);
  INFO(r.detail);
  CHECK(r.pass);
}

TEST_CASE("maintenance protocol") {
  ClusterConfig cfg;
  SUBCASE("fixed point") {
    std::vector<Position> pts{{0, 0, 0}, {10, 0, 0}, {-10, 0, 0}};
    ClusterState s;
    s.clusters.push_back({0, {0, 1, 2}, {0, 0, 0}});
    s.head_offcenter_counters[0] = 0;
    auto [next, events] = maintenance_step(s, pts, cfg);
    CHECK(events.empty());
    CHECK(next.head_offcenter_counters.at(0) == 0);
    CHECK(next.timestamp == 1);
  }
  SUBCASE("isolation") {
    std::vector<Position> pts{{0, 0, 0}, {10, 0, 0}, {50000, 0, 0}};
    ClusterState s;
    s.clusters.push_back({0, {0, 1, 2}, {0, 0, 0}});
    s.head_offcenter_counters[0] = 0;
    auto [next, events] = maintenance_step(s, pts, cfg);
    CHECK(next.isolated == std::set<int>{2});
    CHECK_FALSE(next.clusters[0].members.contains(2));
    bool saw = false;
    for (const auto& e : events)
      if (auto* iso = std::get_if<event::Isolated>(&e)) saw = saw || iso->member == 2;
    CHECK(saw);
    check_invariants(next, 3);
    // Coming back in range rejoins.
    pts[2] = {20, 0, 0};
    auto [back, ev2] = maintenance_step(next, pts, cfg);
    CHECK(back.isolated.empty());
    CHECK(back.clusters[0].members.contains(2));
  }
  SUBCASE("re-election timing") {
    for (int t : {1, 5, 9}) {
      const auto r = oracle::reelection_timing(t);
      INFO(r.detail);
      CHECK(r.pass);
    }
  }
}

TEST_CASE("partition invariant over a long random walk") {
  const auto r = oracle::partition_invariant(21, 10000, 20);
  INFO(r.detail);
  CHECK(r.pass);
}

TEST_CASE("recluster schedule and snapshots") {
  ClusterConfig cfg;
  CHECK(should_recluster(0, cfg));
  CHECK(should_recluster(50, cfg));
  CHECK_FALSE(should_recluster(51, cfg));
  std::vector<Position> pts{{0, 0, 0}, {1, 0, 0}};
  auto s = singleton_clusters(pts);
  s.isolated.clear();
  std::ostringstream out;
  write_snapshot(out, 7, s);
  CHECK(out.str() == "slot=7 head=0 members=0\nslot=7 head=1 members=1\n");
  ClusterState bad;
  bad.clusters.push_back({0, {0, 1}, {}});
  bad.clusters.push_back({1, {1}, {}});
  CHECK_THROWS_AS(check_invariants(bad, 2), ContractViolation);
}
