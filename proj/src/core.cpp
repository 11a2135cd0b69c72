#include "sagin/core.hpp"

#include <algorithm>
#include <cmath>

namespace sagin {

double distance(const Position& a, const Position& b) {
  const double dx = a.x - b.x;
  const double dy = a.y - b.y;
  const double dz = a.z - b.z;
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

double horizontal_distance(const Position& a, const Position& b) { return std::hypot(a.x - b.x, a.y - b.y); }

void validate(const Task& task) {
  if (!(task.data_bits > 0.0)) throw ContractViolation("task " + std::to_string(task.id) + ": data_bits must be > 0");
  if (!(task.cycles_per_bit > 0.0))
    throw ContractViolation("task " + std::to_string(task.id) + ": cycles_per_bit must be > 0");
  if (!(task.deadline >= 0.0)) throw ContractViolation("task " + std::to_string(task.id) + ": deadline must be >= 0");
}

void validate(const ChannelParams& p) {
  if (!(p.bandwidth > 0 && p.tx_power > 0 && p.tx_gain > 0 && p.rx_gain > 0 && p.noise_power > 0 &&
        p.path_loss_exponent > 0 && p.reference_distance > 0 && p.carrier_frequency > 0 && p.light_speed > 0))
    throw ContractViolation("channel parameters must all be positive");
  if (!(p.shadowing_sigma_db >= 0)) throw ContractViolation("shadowing_sigma_db must be >= 0");
}

int DeviceId::action_index(int n_bs) const {
  switch (kind_) {
    case Kind::Local:
      return 0;
    case Kind::BaseStation:
      return index_;
    case Kind::Satellite:
      return n_bs + 1;
  }
  return 0;
}

DeviceId DeviceId::from_action_index(int index, int n_bs) {
  if (index < 0 || index > n_bs + 1)
    throw ContractViolation("device action index " + std::to_string(index) + " out of range");
  if (index == 0) return local();
  if (index == n_bs + 1) return satellite();
  return base_station(index);
}

std::string DeviceId::to_string() const {
  switch (kind_) {
    case Kind::Local:
      return "local";
    case Kind::BaseStation:
      return "bs" + std::to_string(index_);
    case Kind::Satellite:
      return "sat";
  }
  return "?";
}

void validate(DeviceId id, int n_bs) {
  if (id.is_base_station() && (id.bs_index() < 1 || id.bs_index() > n_bs))
    throw ContractViolation("base station index " + std::to_string(id.bs_index()) + " outside 1.." +
                            std::to_string(n_bs));
}

double task_profit(const Task& task, const ProfitParams& params) {
  return task.data_bits * task.cycles_per_bit * std::exp(-params.delay_sensitivity * task.deadline);
}

double wrap_angle(double radians) {
  double a = std::fmod(radians, kTwoPi);
  if (a < 0.0) a += kTwoPi;
  // fmod can land exactly on 2pi after the correction above for tiny negatives
  if (a >= kTwoPi) a = 0.0;
  return a;
}

MobilityState advance_mobility(const MobilityState& state, double slot_seconds, double max_turn, Rng& rng,
                               const AreaBounds& area) {
  if (!(slot_seconds > 0.0)) throw ContractViolation("slot_seconds must be > 0");
  MobilityState next = state;
  std::uniform_real_distribution<double> turn(-max_turn, max_turn);
  double heading = state.heading + (max_turn > 0.0 ? turn(rng) : 0.0);

  const double step = state.speed * slot_seconds;
  double x = state.position.x + step * std::cos(heading);
  double y = state.position.y + step * std::sin(heading);

  // Mirror until inside; a single step can cross the area more than once.
  bool flip_x = false;
  bool flip_y = false;
  for (int guard = 0; guard < 64 && (x < area.min_x || x > area.max_x); ++guard) {
    x = x < area.min_x ? 2.0 * area.min_x - x : 2.0 * area.max_x - x;
    flip_x = !flip_x;
  }
  for (int guard = 0; guard < 64 && (y < area.min_y || y > area.max_y); ++guard) {
    y = y < area.min_y ? 2.0 * area.min_y - y : 2.0 * area.max_y - y;
    flip_y = !flip_y;
  }
  x = std::clamp(x, area.min_x, area.max_x);
  y = std::clamp(y, area.min_y, area.max_y);
  if (flip_x) heading = kPi - heading;
  if (flip_y) heading = -heading;

  next.position.x = x;
  next.position.y = y;
  next.heading = wrap_angle(heading);
  return next;
}

double draw_speed(Rng& rng, double mean, double sd) {
  std::normal_distribution<double> dist(mean, sd);
  return std::max(0.0, dist(rng));
}

double path_loss_db(double distance, const ChannelParams& params, double shadowing_db) {
  if (!(distance > 0.0)) throw ContractViolation("path loss needs a positive distance");
  const double d0 = params.reference_distance;
  const double d = std::max(distance, d0);
  const double reference = 20.0 * std::log10(4.0 * kPi * d0 / params.wavelength());
  return reference + 10.0 * params.path_loss_exponent * std::log10(d / d0) + shadowing_db;
}

double data_rate(double pl_db, const ChannelParams& params) {
  const double pl_linear = std::pow(10.0, pl_db / 10.0);
  const double snr = params.tx_power * params.tx_gain * params.rx_gain / (params.noise_power * pl_linear);
  return params.bandwidth * std::log2(1.0 + snr);
}

double propagation_delay(DeviceId device, double distance, const ChannelParams& params) {
  if (!(distance >= 0.0)) throw ContractViolation("propagation distance must be >= 0");
  return device.is_satellite() ? distance / params.light_speed : 0.0;
}

double transmission_delay(const Task& task, double rate, DeviceId device, double distance,
                          const ChannelParams& params) {
  if (device.is_local()) return 0.0;
  if (!(rate > 0.0)) throw UnreachableLink("no usable link to " + device.to_string());
  return task.data_bits / rate + propagation_delay(device, distance, params);
}

double computing_delay(const Task& task, const ComputeDevice& device) {
  if (!(device.capacity_hz > 0.0)) throw ContractViolation("device capacity must be > 0");
  return task.workload() / device.capacity_hz;
}

double total_delay(double queueing, double transmission, double computing) {
  if (queueing < 0.0 || transmission < 0.0 || computing < 0.0)
    throw ContractViolation("delay components must be non-negative");
  return queueing + transmission + computing;
}

}  // namespace sagin
