#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "sagin/core.hpp"

using namespace sagin;

TEST_CASE("closed-form models agree with the long double oracle") {
  const auto r = oracle::formulas(20240601, 200);
  INFO(r.detail);
  CHECK(r.pass);
  CHECK(r.cases >= 100);
}

TEST_CASE("task profit") {
  Task t{0, 0, 100.0, 10.0, 5.0, 0};
  CHECK(task_profit(t, {0.0}) == 1000.0);
  t.deadline = 0.2;
  CHECK(task_profit(t, {5.0}) == doctest::Approx(367.879441171).epsilon(1e-10));
  Task z{0, 0, 90e6, 12.5, 0.0, 0};
  CHECK(task_profit(z, {5.0}) == 90e6 * 12.5);
}

TEST_CASE("task validation") {
  CHECK_THROWS_AS(validate(Task{0, 0, 0.0, 1.0, 0.1, 0}), ContractViolation);
  CHECK_THROWS_AS(validate(Task{0, 0, 1.0, 0.0, 0.1, 0}), ContractViolation);
  CHECK_THROWS_AS(validate(Task{0, 0, 1.0, 1.0, -0.1, 0}), ContractViolation);
  CHECK_NOTHROW(validate(Task{0, 0, 1.0, 1.0, 0.0, 0}));
}

TEST_CASE("mobility") {
  Rng rng(3);
  const auto area = AreaBounds::square(100.0);
  SUBCASE("zero speed keeps the position") {
    MobilityState s{{50, 50, 100}, 1.0, 0.0};
    const auto n = advance_mobility(s, 0.1, kPi / 6, rng, area);
    CHECK(n.position == s.position);
  }
  SUBCASE("straight line") {
    MobilityState s{{10, 50, 100}, 0.0, 10.0};
    const auto n = advance_mobility(s, 1.0, 0.0, rng, area);
    CHECK(n.position.x == 20.0);
    CHECK(n.position.y == 50.0);
    CHECK(n.heading == 0.0);
  }
  SUBCASE("reflection at the edge") {
    MobilityState s{{98, 50, 100}, 0.0, 10.0};
    const auto n = advance_mobility(s, 1.0, 0.0, rng, area);
    CHECK(area.contains(n.position));
    CHECK(n.position.x == doctest::Approx(92.0));
    CHECK(n.heading == doctest::Approx(kPi));
  }
  SUBCASE("always inside") {
    MobilityState s{{1, 1, 100}, 4.0, 300.0};
    for (int i = 0; i < 1000; ++i) {
      s = advance_mobility(s, 0.1, kPi / 6, rng, area);
      REQUIRE(area.contains(s.position));
      REQUIRE(s.heading >= 0.0);
      REQUIRE(s.heading < kTwoPi);
    }
  }
  CHECK(draw_speed(rng, -5.0, 0.0) == 0.0);
}

TEST_CASE("link model corner cases") {
  ChannelParams ch;
  const double ref = 20.0 * std::log10(4.0 * kPi * ch.reference_distance / ch.wavelength());
  CHECK(path_loss_db(ch.reference_distance, ch) == doctest::Approx(ref).epsilon(1e-12));
  CHECK(path_loss_db(0.1, ch) == path_loss_db(ch.reference_distance, ch));
  CHECK(path_loss_db(ch.reference_distance, ch, 3.0) == doctest::Approx(ref + 3.0));
  CHECK_THROWS_AS(path_loss_db(0.0, ch), ContractViolation);

  const double pl1 = 10.0 * std::log10(ch.tx_power * ch.tx_gain * ch.rx_gain / ch.noise_power);
  CHECK(data_rate(pl1, ch) == doctest::Approx(ch.bandwidth).epsilon(1e-12));
  ChannelParams narrow = ch;
  narrow.bandwidth = 10e6;
  const double pl10 = 10.0 * std::log10(ch.tx_power * ch.tx_gain * ch.rx_gain / (ch.noise_power * 10.0));
  CHECK(data_rate(pl10, narrow) == doctest::Approx(34.594e6).epsilon(1e-4));

  CHECK(propagation_delay(DeviceId::base_station(3), 5000.0, ch) == 0.0);
  CHECK(propagation_delay(DeviceId::satellite(), 780e3, ch) == doctest::Approx(2.602e-3).epsilon(1e-3));
  Task t{0, 0, 10e6, 1.0, 1.0, 0};
  CHECK_THROWS_AS(transmission_delay(t, 0.0, DeviceId::base_station(1), 10.0, ch), UnreachableLink);
  CHECK_THROWS_AS(transmission_delay(t, -1.0, DeviceId::satellite(), 10.0, ch), UnreachableLink);
  CHECK(transmission_delay(t, 0.0, DeviceId::local(), 0.0, ch) == 0.0);
  CHECK_THROWS_AS(total_delay(-1.0, 0.0, 0.0), ContractViolation);
}

TEST_CASE("device ids") {
  CHECK(DeviceId::local().action_index(4) == 0);
  CHECK(DeviceId::base_station(2).action_index(4) == 2);
  CHECK(DeviceId::satellite().action_index(4) == 5);
  for (int i = 0; i <= 5; ++i) CHECK(DeviceId::from_action_index(i, 4).action_index(4) == i);
  CHECK_THROWS_AS(DeviceId::from_action_index(6, 4), ContractViolation);
  CHECK_THROWS_AS(validate(DeviceId::base_station(5), 4), ContractViolation);
  CHECK(DeviceId::base_station(3).to_string() == "bs3");
}
