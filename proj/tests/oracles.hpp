#pragma once

// Independent reference computations and the property checks built on them.
// Unit tests and the acceptance runner share these so both judge the library
// against the same oracles.

#include <cstdint>
#include <string>
#include <vector>

#include "sagin/core.hpp"

namespace oracle {

struct CheckResult {
  bool pass{true};
  std::string detail;
  int cases{};

  void fail(const std::string& why) {
    if (pass) detail = why;
    pass = false;
  }
};

// Tolerances.
inline constexpr double kFormulaRelTol = 1e-9;
inline constexpr double kGradientRelTol = 1e-4;
inline constexpr double kBowlTol = 0.01;
inline constexpr int kBowlMaxUpdates = 2000;

// Straight-line long double versions of the closed-form models.
long double profit(long double bits, long double cpb, long double lambda, long double deadline);
long double path_loss_db(long double d, long double d0, long double n, long double carrier, long double light,
                         long double shadow);
long double rate(long double pl_db, long double bandwidth, long double pt, long double gt, long double gr,
                 long double pn);
long double propagation(bool satellite, long double d, long double light);
long double transmission(long double bits, long double rate, bool local, bool satellite, long double d,
                         long double light);
long double computing(long double workload, long double capacity);
long double total(long double q, long double t, long double c);

/// Minimal c with 1 - (1 - term)^c >= threshold by linear search, where
/// term = density * pi * R^2 / N; 1 when term >= 1; capped at N.
int cluster_count_by_search(int n_uavs, long double area, long double radius, long double threshold);

CheckResult formulas(std::uint64_t seed, int samples);
CheckResult cluster_count(std::uint64_t seed, int draws);
CheckResult kmeans_monotone(std::uint64_t seed, int runs);
CheckResult partition_invariant(std::uint64_t seed, int steps, int n_uavs);
CheckResult reelection_timing(int threshold);
CheckResult queue_oracle(std::uint64_t seed, int scenarios);
CheckResult gradient_check(std::uint64_t seed, int nets);
CheckResult chained_gradient(std::uint64_t seed, int trials);
CheckResult soft_update_blend(std::uint64_t seed);
CheckResult myopic_target(std::uint64_t seed);
CheckResult zero_loss_critic(std::uint64_t seed);
CheckResult quadratic_bowl(std::uint64_t seed);

}  // namespace oracle
