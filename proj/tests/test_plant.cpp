#include <cmath>
#include <vector>

#include "doctest.h"
#include "mlmpc/plant.hpp"
#include "mlmpc/rng.hpp"

using namespace mlmpc;

TEST_SUITE_BEGIN("plant");

TEST_CASE("pendulum rest position is an exact fixed point") {
  const PendulumState next = pendulum_step({0.0, 0.0}, 0.0, PendulumParams{});
  CHECK(next.angle == 0.0);
  CHECK(next.velocity == 0.0);
}

TEST_CASE("pendulum single euler step matches the hand-computed value") {
  // m=1, l=1, b=0.1, g=9.81, tau=0.05, from (0.1, 0) with u=0.
  const PendulumState next = pendulum_step({0.1, 0.0}, 0.0, PendulumParams{});
  CHECK(next.velocity == doctest::Approx(-0.048968290865269215).epsilon(1e-14));
  CHECK(next.angle == doctest::Approx(0.097551585456736548).epsilon(1e-14));
}

TEST_CASE("pendulum step is odd under sign flip of state and input") {
  Rng rng(11);
  const PendulumParams p{};
  for (int i = 0; i < 200; ++i) {
    const PendulumState s{rng.uniform(-3, 3), rng.uniform(-5, 5)};
    const double u = rng.uniform(-10, 10);
    const PendulumState a = pendulum_step(s, u, p);
    const PendulumState b = pendulum_step({-s.angle, -s.velocity}, -u, p);
    CHECK(b.angle == doctest::Approx(-a.angle).epsilon(1e-12));
    CHECK(b.velocity == doctest::Approx(-a.velocity).epsilon(1e-12));
  }
}

TEST_CASE("pendulum rejects invalid parameters and non-finite results") {
  PendulumParams bad;
  bad.tau = 0.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = PendulumParams{};
  bad.mass = -1.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  CHECK_THROWS_AS(
      pendulum_step({0.0, 0.0}, std::numeric_limits<double>::infinity(), PendulumParams{}),
      SimulationError);
}

TEST_CASE("cartpole upright unforced pole has zero accelerations") {
  const CartpoleAccel a = cartpole_accel({1.0, 2.0, 0.0, 0.0}, 0.0, CartpoleParams{});
  CHECK(a.angular == 0.0);
  CHECK(a.linear == 0.0);
}

TEST_CASE("cartpole accelerations match the hand-computed values") {
  const CartpoleParams p{};  // m_c=1.0, m_p=0.1, l_p=0.5, g=9.81, total-mass divisor
  const CartpoleAccel a = cartpole_accel({0.0, 0.0, 0.0, 0.0}, 10.0, p);
  CHECK(a.angular == doctest::Approx(-14.634146341463413).epsilon(1e-14));
  CHECK(a.linear == doctest::Approx(9.7560975609756095).epsilon(1e-14));

  CartpoleParams product = p;
  product.denominator = CartpoleDenominator::product;
  const CartpoleAccel ap = cartpole_accel({0.0, 0.0, 0.0, 0.0}, 10.0, product);
  CHECK(ap.angular == doctest::Approx(-600.0).epsilon(1e-12));
  CHECK(ap.linear == doctest::Approx(400.0).epsilon(1e-12));
}

TEST_CASE("cartpole euler step uses old-state derivatives") {
  const CartpoleState next = cartpole_step({0.0, 0.0, 0.0, 0.0}, 10.0, CartpoleParams{});
  CHECK(next.position == 0.0);  // x' = x + tau * old velocity = 0
  CHECK(next.angle == 0.0);
  CHECK(next.velocity == doctest::Approx(0.1951219512195122).epsilon(1e-14));
  CHECK(next.angular_velocity == doctest::Approx(-0.29268292682926828).epsilon(1e-14));
}

TEST_CASE("cartpole all-zero state is a fixed point") {
  const CartpoleState next = cartpole_step({0.0, 0.0, 0.0, 0.0}, 0.0, CartpoleParams{});
  CHECK(next == CartpoleState{0.0, 0.0, 0.0, 0.0});
  // Any cart position with everything else at rest stays put.
  const CartpoleState offset = cartpole_step({3.7, 0.0, 0.0, 0.0}, 0.0, CartpoleParams{});
  CHECK(offset == CartpoleState{3.7, 0.0, 0.0, 0.0});
}

TEST_CASE("cartpole step is odd under sign flip, both denominator modes") {
  Rng rng(12);
  for (CartpoleDenominator mode :
       {CartpoleDenominator::total_mass, CartpoleDenominator::product}) {
    CartpoleParams p{};
    p.denominator = mode;
    for (int i = 0; i < 200; ++i) {
      const CartpoleState s{rng.uniform(-2, 2), rng.uniform(-3, 3), rng.uniform(-1, 1),
                            rng.uniform(-4, 4)};
      const double f = rng.uniform(-20, 20);
      const CartpoleState a = cartpole_step(s, f, p);
      const CartpoleState b = cartpole_step(
          {-s.position, -s.velocity, -s.angle, -s.angular_velocity}, -f, p);
      CHECK(b.position == doctest::Approx(-a.position).epsilon(1e-12));
      CHECK(b.velocity == doctest::Approx(-a.velocity).epsilon(1e-12));
      CHECK(b.angle == doctest::Approx(-a.angle).epsilon(1e-12));
      CHECK(b.angular_velocity == doctest::Approx(-a.angular_velocity).epsilon(1e-12));
    }
  }
}

TEST_CASE("tank flows: empty system, antisymmetry, hand value") {
  const ThreeTankParams p{};
  const TankFlows none = tank_flows({0.0, 0.0, 0.0}, p);
  CHECK(none.q12 == 0.0);
  CHECK(none.q23 == 0.0);
  CHECK(none.q_out == 0.0);

  // Swapping the connected levels negates the pipe flow exactly.
  const TankFlows fwd = tank_flows({0.5, 0.2, 0.0}, p);
  const TankFlows rev = tank_flows({0.2, 0.5, 0.0}, p);
  CHECK(fwd.q12 == -rev.q12);
  CHECK(fwd.q12 == doctest::Approx(6.0652699857467187e-05).epsilon(1e-14));

  // Equal levels: sign(0) = 0, no chatter.
  const TankFlows flat = tank_flows({0.3, 0.3, 0.3}, p);
  CHECK(flat.q12 == 0.0);
  CHECK(flat.q23 == 0.0);
  CHECK(flat.q_out > 0.0);
}

TEST_CASE("tank step: fixed point, hand euler step, clamping") {
  const ThreeTankParams p{};
  const TankState still = tank_step({0.0, 0.0, 0.0}, {0.0, 0.0}, p);
  CHECK(still == TankState{0.0, 0.0, 0.0});

  const TankState next = tank_step({0.5, 0.2, 0.1}, {0.0, 0.0}, p);
  CHECK(next.level1 == doctest::Approx(0.49606151299626838).epsilon(1e-14));
  CHECK(next.level2 == doctest::Approx(0.20166460047192736).epsilon(1e-14));
  CHECK(next.level3 == doctest::Approx(0.10000000000000001).epsilon(1e-14));

  // A huge outlet pipe would drive level 3 negative in one Euler step; the
  // step clamps it at zero instead.
  ThreeTankParams wide = p;
  wide.pipe_out = 1.0;
  const TankState clamped = tank_step({0.0, 0.0, 0.05}, {0.0, 0.0}, wide);
  CHECK(clamped.level3 == 0.0);
}

TEST_CASE("tank levels never go negative under random stepping") {
  Rng rng(13);
  const ThreeTankParams p{};
  TankState s{0.0, 0.0, 0.0};
  for (int i = 0; i < 2000; ++i) {
    s = tank_step(s, {rng.uniform(0, 1e-4), rng.uniform(0, 1e-4)}, p);
    CHECK(s.level1 >= 0.0);
    CHECK(s.level2 >= 0.0);
    CHECK(s.level3 >= 0.0);
  }
}

TEST_CASE("tank volume bookkeeping: per-step identity and sealed conservation") {
  ThreeTankParams p{};
  const double in1 = 4e-5, in3 = 2e-5;
  TankState s{0.3, 0.2, 0.15};
  for (int i = 0; i < 50; ++i) {
    const TankFlows q = tank_flows(s, p);
    const TankState next = tank_step(s, {in1, in3}, p);
    const double lhs = p.area1 * (next.level1 - s.level1) + p.area2 * (next.level2 - s.level2) +
                       p.area3 * (next.level3 - s.level3);
    const double rhs = p.tau * (in1 + in3 - q.q_out);
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
    s = next;
  }

  // Sealed system: no inflows, outlet closed. Total volume must not drift.
  ThreeTankParams sealed = p;
  sealed.outflow_out = 0.0;
  TankState t{0.5, 0.2, 0.1};
  const double volume0 = sealed.area1 * t.level1 + sealed.area2 * t.level2 + sealed.area3 * t.level3;
  for (int i = 0; i < 10000; ++i) t = tank_step(t, {0.0, 0.0}, sealed);
  const double volume1 = sealed.area1 * t.level1 + sealed.area2 * t.level2 + sealed.area3 * t.level3;
  CHECK(std::fabs(volume1 - volume0) / volume0 <= 1e-9);
}

TEST_CASE("plant dimensions match the per-plant channel layout") {
  CHECK(Plant::pendulum().input_dim() == 1);
  CHECK(Plant::pendulum().output_dim() == 1);
  CHECK(Plant::cartpole().input_dim() == 1);
  CHECK(Plant::cartpole().output_dim() == 2);
  CHECK(Plant::three_tank().input_dim() == 2);
  CHECK(Plant::three_tank().output_dim() == 3);
}

TEST_CASE("observe projects the designated state components in order") {
  Plant pend = Plant::pendulum();
  pend.set_state(PendulumState{0.3, 7.0});
  CHECK(pend.observe() == std::vector<double>{0.3});

  Plant cart = Plant::cartpole();
  cart.set_state(CartpoleState{1.0, 2.0, 0.1, 3.0});
  CHECK(cart.observe() == std::vector<double>{1.0, 0.1});

  Plant tanks = Plant::three_tank();
  tanks.set_state(TankState{0.2, 0.3, 0.1});
  CHECK(tanks.observe() == std::vector<double>{0.2, 0.3, 0.1});
}

TEST_CASE("snapshot/restore is an exact round trip") {
  Rng rng(14);
  Plant plant = Plant::pendulum();
  for (int i = 0; i < 10; ++i) plant.apply(std::vector<double>{rng.uniform(-10, 10)});
  const Plant::Snapshot snap = plant.snapshot();
  const PendulumState before = plant.pendulum_state();

  for (int i = 0; i < 100; ++i) plant.apply(std::vector<double>{rng.uniform(-10, 10)});
  CHECK(plant.pendulum_state() != before);
  plant.restore(snap);
  CHECK(plant.pendulum_state() == before);
}

TEST_CASE("restore rejects snapshots from another kind or other parameters") {
  Plant pend = Plant::pendulum();
  Plant cart = Plant::cartpole();
  CHECK_THROWS_AS(pend.restore(cart.snapshot()), SimulationError);

  PendulumParams other{};
  other.mass = 2.0;
  Plant heavy = Plant::pendulum(other);
  CHECK_THROWS_AS(pend.restore(heavy.snapshot()), SimulationError);
}

TEST_CASE("interleaved snapshot/rollout/restore cycles are deterministic") {
  auto rollout = [](Plant& plant, std::uint64_t seed) {
    const Plant::Snapshot snap = plant.snapshot();
    Rng rng(seed);
    std::vector<double> trace;
    for (int i = 0; i < 50; ++i) {
      plant.apply(std::vector<double>{rng.uniform(-10, 10)});
      trace.push_back(plant.observe()[0]);
    }
    plant.restore(snap);
    return trace;
  };
  Plant plant = Plant::pendulum();
  plant.apply(std::vector<double>{3.0});
  const auto first_a = rollout(plant, 21);
  const auto first_b = rollout(plant, 22);
  const auto second_a = rollout(plant, 21);
  const auto second_b = rollout(plant, 22);
  CHECK(first_a == second_a);
  CHECK(first_b == second_b);
}

TEST_CASE("repeated steps from identical state are bit-identical") {
  for (auto make : {+[] { return Plant::pendulum(); }, +[] { return Plant::cartpole(); },
                    +[] { return Plant::three_tank(); }}) {
    Plant a = make();
    Plant b = make();
    Rng rng(15);
    for (int i = 0; i < 100; ++i) {
      std::vector<double> u(a.input_dim());
      for (double& v : u) v = rng.uniform(0, 1e-4);
      a.apply(u);
      b.apply(u);
      CHECK(a.observe() == b.observe());
    }
  }
}

TEST_SUITE_END();
