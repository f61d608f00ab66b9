#pragma once

#include <cmath>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "mlmpc/errors.hpp"

namespace mlmpc {

// ---------------------------------------------------------------------------
// Pendulum: bob of mass m on a rigid massless rod, one rotational degree of
// freedom, viscous friction b, torque-equivalent input u.
// ---------------------------------------------------------------------------

struct PendulumParams {
  double mass = 1.0;      // m [kg]
  double length = 1.0;    // l [m]
  double friction = 0.1;  // b [N*m*s]
  double gravity = 9.81;  // g [m/s^2]
  double tau = 0.05;      // step size [s]

  void validate() const {
    if (!(mass > 0) || !(length > 0) || !(friction >= 0) || !(gravity > 0) || !(tau > 0)) {
      throw ConfigError("pendulum params: need m>0, l>0, b>=0, g>0, tau>0");
    }
  }
  friend bool operator==(const PendulumParams&, const PendulumParams&) = default;
};

struct PendulumState {
  double angle = 0.0;     // phi [rad], not wrapped to a principal range
  double velocity = 0.0;  // phi_dot [rad/s]

  friend bool operator==(const PendulumState&, const PendulumState&) = default;
};

namespace detail {
inline void require_finite(double v, const char* what, const std::string& context) {
  if (!std::isfinite(v)) {
    throw SimulationError(context + ": non-finite " + what + " (" + std::to_string(v) + ")");
  }
}
}  // namespace detail

// One discrete step. The total angular acceleration is the sum of the friction,
// gravity and input terms; integration is semi-implicit Euler (velocity first,
// then position with the new velocity).
inline PendulumState pendulum_step(const PendulumState& s, double u, const PendulumParams& p) {
  const double inertia = p.mass * p.length * p.length;
  const double accel = -(p.friction / inertia) * s.velocity -
                       (p.gravity / p.length) * std::sin(s.angle) + u / inertia;
  PendulumState next;
  next.velocity = s.velocity + p.tau * accel;
  next.angle = s.angle + p.tau * next.velocity;
  detail::require_finite(next.velocity, "velocity", "pendulum_step(u=" + std::to_string(u) + ")");
  detail::require_finite(next.angle, "angle", "pendulum_step(u=" + std::to_string(u) + ")");
  return next;
}

// ---------------------------------------------------------------------------
// Cartpole: cart of mass m_c on a frictionless track, pole of mass m_p and
// length l_p hinged on top, horizontal input force F.
// ---------------------------------------------------------------------------

// The mass divisor in the pole/cart acceleration formulas. total_mass is the
// physically consistent choice and the default; product is kept selectable.
enum class CartpoleDenominator { total_mass, product };

struct CartpoleParams {
  double cart_mass = 1.0;    // m_c [kg]
  double pole_mass = 0.1;    // m_p [kg]
  double pole_length = 0.5;  // l_p [m]
  double gravity = 9.81;     // g [m/s^2]
  double tau = 0.02;         // step size [s]
  CartpoleDenominator denominator = CartpoleDenominator::total_mass;

  double mass_divisor() const {
    return denominator == CartpoleDenominator::total_mass ? pole_mass + cart_mass
                                                          : pole_mass * cart_mass;
  }
  void validate() const {
    if (!(cart_mass > 0) || !(pole_mass > 0) || !(pole_length > 0) || !(gravity > 0) ||
        !(tau > 0)) {
      throw ConfigError("cartpole params: need m_c>0, m_p>0, l_p>0, g>0, tau>0");
    }
  }
  friend bool operator==(const CartpoleParams&, const CartpoleParams&) = default;
};

struct CartpoleState {
  double position = 0.0;          // x [m]
  double velocity = 0.0;          // x_dot [m/s]
  double angle = 0.0;             // theta [rad], 0 = upright
  double angular_velocity = 0.0;  // theta_dot [rad/s]

  friend bool operator==(const CartpoleState&, const CartpoleState&) = default;
};

struct CartpoleAccel {
  double angular = 0.0;  // theta_ddot [rad/s^2]
  double linear = 0.0;   // x_ddot [m/s^2]
};

inline CartpoleAccel cartpole_accel(const CartpoleState& s, double force,
                                    const CartpoleParams& p) {
  const double divisor = p.mass_divisor();
  const double sin_th = std::sin(s.angle);
  const double cos_th = std::cos(s.angle);
  const double temp =
      (force + p.pole_mass * p.pole_length * s.angular_velocity * s.angular_velocity * sin_th) /
      divisor;
  const double denom =
      p.pole_length * (4.0 / 3.0 - p.pole_mass * cos_th * cos_th / divisor);
  if (!(denom > 0)) {
    throw SimulationError("cartpole_accel: non-positive denominator " + std::to_string(denom));
  }
  CartpoleAccel a;
  a.angular = (p.gravity * sin_th - cos_th * temp) / denom;
  a.linear = temp - p.pole_mass * p.pole_length * a.angular * cos_th / divisor;
  detail::require_finite(a.angular, "angular acceleration", "cartpole_accel");
  detail::require_finite(a.linear, "linear acceleration", "cartpole_accel");
  return a;
}

// Explicit Euler with the accelerations evaluated at the old state.
inline CartpoleState cartpole_step(const CartpoleState& s, double force, const CartpoleParams& p) {
  const CartpoleAccel a = cartpole_accel(s, force, p);
  CartpoleState next;
  next.position = s.position + p.tau * s.velocity;
  next.velocity = s.velocity + p.tau * a.linear;
  next.angle = s.angle + p.tau * s.angular_velocity;
  next.angular_velocity = s.angular_velocity + p.tau * a.angular;
  detail::require_finite(next.position, "position", "cartpole_step");
  detail::require_finite(next.angle, "angle", "cartpole_step");
  return next;
}

// ---------------------------------------------------------------------------
// Three-tank system: tank 1 and tank 3 each have an input valve, tank 2 sits
// between them, the only outlet drains tank 3. Levels are the state; the
// connecting pipes are quasi-static (Torricelli flow).
// ---------------------------------------------------------------------------

struct ThreeTankParams {
  double area1 = 0.0154;   // A1 [m^2]
  double area2 = 0.0154;   // A2 [m^2]
  double area3 = 0.0154;   // A3 [m^2]
  double pipe12 = 5e-5;    // a12 [m^2]
  double pipe23 = 5e-5;    // a23 [m^2]
  double pipe_out = 5e-5;  // a3 [m^2]
  double outflow12 = 0.5;  // alpha12 [-]
  double outflow23 = 0.5;  // alpha23 [-]
  double outflow_out = 0.5;  // alpha3 [-]
  double gravity = 9.81;     // g [m/s^2]
  double tau = 1.0;          // step size [s]

  void validate() const {
    if (!(area1 > 0) || !(area2 > 0) || !(area3 > 0) || !(pipe12 > 0) || !(pipe23 > 0) ||
        !(pipe_out > 0) || !(tau > 0) || !(gravity > 0)) {
      throw ConfigError("three-tank params: areas, pipe sections, g and tau must be > 0");
    }
    for (double alpha : {outflow12, outflow23, outflow_out}) {
      if (!(alpha >= 0.0 && alpha <= 1.0)) {
        throw ConfigError("three-tank params: outflow constants must lie in [0, 1]");
      }
    }
  }
  friend bool operator==(const ThreeTankParams&, const ThreeTankParams&) = default;
};

struct TankState {
  double level1 = 0.0;  // x1 [m]
  double level2 = 0.0;  // x2 [m]
  double level3 = 0.0;  // x3 [m]

  friend bool operator==(const TankState&, const TankState&) = default;
};

struct TankFlows {
  double q12 = 0.0;    // tank1 -> tank2 [m^3/s], negative = backflow
  double q23 = 0.0;    // tank2 -> tank3 [m^3/s]
  double q_out = 0.0;  // tank3 -> outside [m^3/s]
};

// sign(0) = 0: zero head difference drives zero flow.
inline double head_flow(double alpha, double section, double level_i, double level_j,
                        double gravity) {
  const double diff = level_i - level_j;
  const double sgn = diff > 0 ? 1.0 : (diff < 0 ? -1.0 : 0.0);
  return alpha * section * sgn * std::sqrt(2.0 * gravity * std::fabs(diff));
}

inline TankFlows tank_flows(const TankState& s, const ThreeTankParams& p) {
  TankFlows q;
  q.q12 = head_flow(p.outflow12, p.pipe12, s.level1, s.level2, p.gravity);
  q.q23 = head_flow(p.outflow23, p.pipe23, s.level2, s.level3, p.gravity);
  q.q_out = p.outflow_out * p.pipe_out * std::sqrt(2.0 * p.gravity * s.level3);
  return q;
}

struct TankInflows {
  double into_tank1 = 0.0;  // q_in1 [m^3/s]
  double into_tank3 = 0.0;  // q_in3 [m^3/s]
};

// Explicit Euler on the level balance; levels clamp at zero afterwards since
// the outlet flow is undefined for negative levels.
inline TankState tank_step(const TankState& s, const TankInflows& in, const ThreeTankParams& p) {
  const TankFlows q = tank_flows(s, p);
  TankState next;
  next.level1 = s.level1 + p.tau * (in.into_tank1 - q.q12) / p.area1;
  next.level2 = s.level2 + p.tau * (q.q12 - q.q23) / p.area2;
  next.level3 = s.level3 + p.tau * (in.into_tank3 + q.q23 - q.q_out) / p.area3;
  detail::require_finite(next.level1, "level1", "tank_step");
  detail::require_finite(next.level2, "level2", "tank_step");
  detail::require_finite(next.level3, "level3", "tank_step");
  next.level1 = std::max(next.level1, 0.0);
  next.level2 = std::max(next.level2, 0.0);
  next.level3 = std::max(next.level3, 0.0);
  return next;
}

// ---------------------------------------------------------------------------
// Plant: one object usable both as the controlled system and, via
// snapshot/restore, as a perfect prediction model of itself.
// ---------------------------------------------------------------------------

enum class PlantKind { pendulum, cartpole, three_tank };

inline const char* to_string(PlantKind k) {
  switch (k) {
    case PlantKind::pendulum: return "pendulum";
    case PlantKind::cartpole: return "cartpole";
    case PlantKind::three_tank: return "three-tank";
  }
  return "?";
}

class Plant {
 public:
  struct Snapshot {
    PlantKind kind;
    std::variant<PendulumState, CartpoleState, TankState> state;
    std::variant<PendulumParams, CartpoleParams, ThreeTankParams> params;
  };

  static Plant pendulum(const PendulumParams& p = {}) {
    p.validate();
    return Plant(PlantKind::pendulum, Pendulum{p, {}});
  }
  static Plant cartpole(const CartpoleParams& p = {}) {
    p.validate();
    return Plant(PlantKind::cartpole, Cartpole{p, {}});
  }
  static Plant three_tank(const ThreeTankParams& p = {}) {
    p.validate();
    return Plant(PlantKind::three_tank, Tanks{p, {}});
  }

  PlantKind kind() const { return kind_; }

  std::size_t input_dim() const { return kind_ == PlantKind::three_tank ? 2 : 1; }
  std::size_t output_dim() const {
    switch (kind_) {
      case PlantKind::pendulum: return 1;
      case PlantKind::cartpole: return 2;
      case PlantKind::three_tank: return 3;
    }
    return 0;
  }

  // Default initial state: pendulum at rest, cartpole upright at the origin,
  // tanks empty.
  void reset() {
    std::visit([](auto& sim) { sim.state = {}; }, sim_);
  }

  // One simulation step with the given input vector.
  void apply(std::span<const double> input) {
    if (input.size() != input_dim()) {
      throw SimulationError(std::string("Plant::apply: expected ") +
                            std::to_string(input_dim()) + " input channel(s), got " +
                            std::to_string(input.size()));
    }
    std::visit([&](auto& sim) { sim.step(input); }, sim_);
  }

  // Observable output per plant: pendulum [angle]; cartpole [position, angle];
  // tanks [level1, level2, level3].
  std::vector<double> observe() const {
    std::vector<double> out(output_dim());
    observe_into(out);
    return out;
  }

  void observe_into(std::span<double> out) const {
    std::visit([&](const auto& sim) { sim.observe(out); }, sim_);
  }

  Snapshot snapshot() const {
    return std::visit(
        [&](const auto& sim) {
          return Snapshot{kind_, sim.state, sim.params};
        },
        sim_);
  }

  void restore(const Snapshot& snap) {
    if (snap.kind != kind_) {
      throw SimulationError(std::string("Plant::restore: snapshot is for a ") +
                            to_string(snap.kind) + " plant, this is a " + to_string(kind_));
    }
    std::visit(
        [&](auto& sim) {
          using SimT = std::decay_t<decltype(sim)>;
          const auto& params = std::get<typename SimT::Params>(snap.params);
          if (!(params == sim.params)) {
            throw SimulationError("Plant::restore: snapshot taken under different parameters");
          }
          sim.state = std::get<typename SimT::State>(snap.state);
        },
        sim_);
  }

  const PendulumParams& pendulum_params() const { return std::get<Pendulum>(sim_).params; }
  const CartpoleParams& cartpole_params() const { return std::get<Cartpole>(sim_).params; }
  const ThreeTankParams& tank_params() const { return std::get<Tanks>(sim_).params; }

  double tau() const {
    return std::visit([](const auto& sim) { return sim.params.tau; }, sim_);
  }

  const PendulumState& pendulum_state() const { return std::get<Pendulum>(sim_).state; }
  const CartpoleState& cartpole_state() const { return std::get<Cartpole>(sim_).state; }
  const TankState& tank_state() const { return std::get<Tanks>(sim_).state; }

  void set_state(const PendulumState& s) { std::get<Pendulum>(sim_).state = s; }
  void set_state(const CartpoleState& s) { std::get<Cartpole>(sim_).state = s; }
  void set_state(const TankState& s) { std::get<Tanks>(sim_).state = s; }

 private:
  struct Pendulum {
    using Params = PendulumParams;
    using State = PendulumState;
    PendulumParams params;
    PendulumState state;
    void step(std::span<const double> u) { state = pendulum_step(state, u[0], params); }
    void observe(std::span<double> out) const { out[0] = state.angle; }
  };
  struct Cartpole {
    using Params = CartpoleParams;
    using State = CartpoleState;
    CartpoleParams params;
    CartpoleState state;
    void step(std::span<const double> u) { state = cartpole_step(state, u[0], params); }
    void observe(std::span<double> out) const {
      out[0] = state.position;
      out[1] = state.angle;
    }
  };
  struct Tanks {
    using Params = ThreeTankParams;
    using State = TankState;
    ThreeTankParams params;
    TankState state;
    void step(std::span<const double> u) { state = tank_step(state, {u[0], u[1]}, params); }
    void observe(std::span<double> out) const {
      out[0] = state.level1;
      out[1] = state.level2;
      out[2] = state.level3;
    }
  };

  template <typename Sim>
  Plant(PlantKind kind, Sim sim) : kind_(kind), sim_(std::move(sim)) {}

  PlantKind kind_;
  std::variant<Pendulum, Cartpole, Tanks> sim_;
};

}  // namespace mlmpc
