#pragma once

// Domain types and closed-form models shared by every layer of the simulator:
// geometry, UAV mobility, the task profit model, and the wireless link/delay
// model. Everything here is a pure function of its arguments (plus an
// explicitly passed random stream where noted).

#include <compare>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace sagin {

using Rng = std::mt19937_64;

/// Raised when a caller breaks a documented precondition.
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Raised when a link cannot carry data (non-positive rate).
class UnreachableLink : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kTwoPi = 2.0 * kPi;
inline constexpr double kSpeedOfLight = 299792458.0;

struct Position {
  double x{};
  double y{};
  double z{};

  friend bool operator==(const Position&, const Position&) = default;
};

double distance(const Position& a, const Position& b);
double horizontal_distance(const Position& a, const Position& b);

/// Axis-aligned rectangle in the ground plane.
struct AreaBounds {
  double min_x{};
  double max_x{};
  double min_y{};
  double max_y{};

  static AreaBounds square(double side) { return {0.0, side, 0.0, side}; }
  double area() const { return (max_x - min_x) * (max_y - min_y); }
  bool contains(const Position& p) const {
    return p.x >= min_x && p.x <= max_x && p.y >= min_y && p.y <= max_y;
  }
};

struct MobilityState {
  Position position;
  double heading{};  // radians in [0, 2pi)
  double speed{};    // m/s
};

struct Task {
  std::uint64_t id{};
  int origin_uav{};
  double data_bits{};       // phi
  double cycles_per_bit{};  // rho
  double deadline{};        // delta, seconds
  std::int64_t arrival_slot{};

  /// Total CPU cycles needed (phi * rho).
  double workload() const { return data_bits * cycles_per_bit; }
};

/// Throws ContractViolation unless the task satisfies its invariants.
void validate(const Task& task);

struct ProfitParams {
  double delay_sensitivity{5.0};  // 1/s
};

struct ChannelParams {
  double bandwidth{100e6};       // Hz
  double tx_power{1.0};          // W
  double tx_gain{10.0};          // linear
  double rx_gain{1.0};           // linear
  double noise_power{4e-13};     // W
  double path_loss_exponent{3.0};
  double reference_distance{1.0};   // m
  double carrier_frequency{3.5e9};  // Hz
  double shadowing_sigma_db{4.0};
  double light_speed{kSpeedOfLight};

  double wavelength() const { return light_speed / carrier_frequency; }
};

void validate(const ChannelParams& params);

/// Destination of a task: the UAV itself, one of the base stations
/// (1-based index), or the satellite.
class DeviceId {
 public:
  enum class Kind : std::uint8_t { Local, BaseStation, Satellite };

  static constexpr DeviceId local() { return DeviceId(Kind::Local, 0); }
  static constexpr DeviceId base_station(int index) { return DeviceId(Kind::BaseStation, index); }
  static constexpr DeviceId satellite() { return DeviceId(Kind::Satellite, 0); }

  constexpr Kind kind() const { return kind_; }
  /// 1-based base-station index; 0 for other kinds.
  constexpr int bs_index() const { return index_; }
  constexpr bool is_local() const { return kind_ == Kind::Local; }
  constexpr bool is_satellite() const { return kind_ == Kind::Satellite; }
  constexpr bool is_base_station() const { return kind_ == Kind::BaseStation; }

  /// Dense index in the action space: 0 = Local, 1..n_bs = base stations,
  /// n_bs + 1 = satellite.
  int action_index(int n_bs) const;
  static DeviceId from_action_index(int index, int n_bs);

  std::string to_string() const;

  friend constexpr auto operator<=>(const DeviceId&, const DeviceId&) = default;

 private:
  constexpr DeviceId(Kind kind, int index) : kind_(kind), index_(index) {}
  Kind kind_;
  int index_;
};

/// Throws ContractViolation if a base-station index lies outside 1..n_bs.
void validate(DeviceId id, int n_bs);

struct ComputeDevice {
  DeviceId id = DeviceId::local();
  Position position;
  double capacity_hz{};
};

// ---------------------------------------------------------------------------
// Task model

/// phi * rho * exp(-lambda * delta).
double task_profit(const Task& task, const ProfitParams& params);

// ---------------------------------------------------------------------------
// Mobility

/// One slot of the random-heading mobility model. The heading is perturbed by
/// a uniform draw in [-max_turn, +max_turn], the UAV moves speed * slot_seconds
/// along it, and the position is mirrored back into `area` at the edges
/// (reflecting the heading accordingly). Altitude is untouched.
MobilityState advance_mobility(const MobilityState& state, double slot_seconds, double max_turn, Rng& rng,
                               const AreaBounds& area);

/// Episode-reset speed draw: Normal(mean, sd) clamped at zero.
double draw_speed(Rng& rng, double mean, double sd);

double wrap_angle(double radians);

// ---------------------------------------------------------------------------
// Link model

/// Log-distance path loss in dB with a free-space reference term at d0.
/// Distances below d0 are clamped to d0.
double path_loss_db(double distance, const ChannelParams& params, double shadowing_db = 0.0);

/// Shannon rate B*log2(1 + PT*GT*GR / (PN * PL_linear)).
double data_rate(double pl_db, const ChannelParams& params);

/// distance / c for the satellite, zero for every other device.
double propagation_delay(DeviceId device, double distance, const ChannelParams& params);

/// phi / rate + propagation delay; zero for local processing.
double transmission_delay(const Task& task, double rate, DeviceId device, double distance,
                          const ChannelParams& params);

/// Total cycle demand over device speed.
double computing_delay(const Task& task, const ComputeDevice& device);

double total_delay(double queueing, double transmission, double computing);

}  // namespace sagin
