#pragma once

// Single antagonistic PAM pair driving one rotational degree of freedom.
//
// Conventions: the agonist pulls the joint towards positive angles and
// contracts as the angle grows; the antagonist mirrors it. Pressures are in
// bar, forces in N, torques in N·m.

#include <algorithm>
#include <cmath>
#include <utility>

#include "pamsim/error.hpp"

namespace pamsim {

enum class ForceLaw {
  // F = f0·p·max(0, a·(1 − ε/ε_max)² − b)
  Quadratic,
  // First-order expansion of the quadratic law around (linearize_pressure,
  // ε_max/2); used as the "linear muscle" reference plant.
  Linearized,
};

struct MuscleParams {
  double p_min = 0.0;
  double p_max = 5.0;
  double tau = 0.1;
  double f0 = 800.0;
  double a = 1.0;
  double b = 0.05;
  double eps_max = 0.3;
  ForceLaw force_law = ForceLaw::Quadratic;
  double linearize_pressure = 2.5;

  void validate() const {
    if (!(p_min < p_max)) throw Error(ErrorKind::Config, "muscle: p_min must be < p_max");
    if (!(tau > 0)) throw Error(ErrorKind::Config, "muscle: tau must be > 0");
    if (!(f0 > 0)) throw Error(ErrorKind::Config, "muscle: f0 must be > 0");
    if (!(a > b && b >= 0)) throw Error(ErrorKind::Config, "muscle: need a > b >= 0");
    if (!(eps_max > 0 && eps_max < 1)) throw Error(ErrorKind::Config, "muscle: need 0 < eps_max < 1");
  }
};

struct MuscleState {
  double pressure_obs = 0.0;
  double pressure_des = 0.0;
  double contraction = 0.0;

  friend bool operator==(const MuscleState&, const MuscleState&) = default;
};

struct JointParams {
  double inertia = 0.1;
  double pulley_radius = 0.02;
  double viscous_friction = 0.3;
  double coulomb_friction = 0.001;
  double gravity_torque_amplitude = 0.0;
  double limit_lo = -1.2;
  double limit_hi = 1.2;
  double limit_stiffness = 200.0;
  // Reference tendon length that converts pulley travel into contraction.
  double tendon_length = 0.2;

  void validate() const {
    if (!(inertia > 0)) throw Error(ErrorKind::Config, "joint: inertia must be > 0");
    if (!(pulley_radius > 0)) throw Error(ErrorKind::Config, "joint: pulley_radius must be > 0");
    if (!(limit_lo < limit_hi)) throw Error(ErrorKind::Config, "joint: limit_lo must be < limit_hi");
    if (!(viscous_friction >= 0 && coulomb_friction >= 0))
      throw Error(ErrorKind::Config, "joint: friction terms must be >= 0");
    if (!(limit_stiffness >= 0)) throw Error(ErrorKind::Config, "joint: limit_stiffness must be >= 0");
    if (!(tendon_length > 0)) throw Error(ErrorKind::Config, "joint: tendon_length must be > 0");
  }
};

struct JointState {
  double angle = 0.0;
  double velocity = 0.0;
  MuscleState agonist;
  MuscleState antagonist;

  friend bool operator==(const JointState&, const JointState&) = default;
};

// Velocity scale of the tanh-smoothed Coulomb term.
inline constexpr double kCoulombVelocityEps = 1e-3;

inline double clamp_pressure(double p, const MuscleParams& params) {
  return std::clamp(p, params.p_min, params.p_max);
}

// Targets are clamped to the admissible range on ingestion.
inline void ingest_target(MuscleState& muscle, double target, const MuscleParams& params) {
  if (!std::isfinite(target)) throw Error(ErrorKind::InvalidState, "non-finite pressure target");
  muscle.pressure_des = clamp_pressure(target, params);
}

inline MuscleState step_pressure(const MuscleState& state, const MuscleParams& params, double dt) {
  if (!std::isfinite(state.pressure_obs) || !std::isfinite(state.pressure_des) ||
      !std::isfinite(state.contraction) || !std::isfinite(dt)) {
    throw Error(ErrorKind::InvalidState, "step_pressure: non-finite input");
  }
  if (!(dt > 0) || dt > params.tau / 10.0) {
    throw Error(ErrorKind::Domain, "step_pressure: dt must lie in (0, tau/10]");
  }
  MuscleState next = state;
  next.pressure_des = clamp_pressure(state.pressure_des, params);
  next.pressure_obs = state.pressure_obs + dt * (next.pressure_des - state.pressure_obs) / params.tau;
  next.pressure_obs = clamp_pressure(next.pressure_obs, params);
  return next;
}

// Normalized actuation duty exposed on the valve channel.
inline double valve_position(const MuscleState& state, const MuscleParams& params) {
  return std::clamp((state.pressure_des - state.pressure_obs) / (params.p_max - params.p_min), -1.0, 1.0);
}

inline double muscle_force(double pressure, double contraction, const MuscleParams& params) {
  if (!(contraction >= 0.0 && contraction <= params.eps_max)) {
    throw Error(ErrorKind::Domain, "muscle_force: contraction outside [0, eps_max]");
  }
  const double s = 1.0 - contraction / params.eps_max;
  switch (params.force_law) {
    case ForceLaw::Quadratic:
      return params.f0 * pressure * std::max(0.0, params.a * s * s - params.b);
    case ForceLaw::Linearized: {
      constexpr double s0 = 0.5;
      const double p0 = params.linearize_pressure;
      const double shape0 = params.a * s0 * s0 - params.b;
      const double f_at_0 = params.f0 * p0 * shape0;
      const double df_dp = params.f0 * shape0;
      const double df_deps = -2.0 * params.f0 * p0 * params.a * s0 / params.eps_max;
      const double eps0 = 0.5 * params.eps_max;
      return std::max(0.0, f_at_0 + df_dp * (pressure - p0) + df_deps * (contraction - eps0));
    }
  }
  return 0.0;
}

// Tendon length conservation over the pulley: returns (agonist, antagonist).
inline std::pair<double, double> muscle_kinematics(double angle, const JointParams& jp, const MuscleParams& mp) {
  const double mid = 0.5 * mp.eps_max;
  const double shift = jp.pulley_radius * angle / jp.tendon_length;
  return {std::clamp(mid + shift, 0.0, mp.eps_max), std::clamp(mid - shift, 0.0, mp.eps_max)};
}

inline void update_contractions(JointState& state, const JointParams& jp, const MuscleParams& mp) {
  const auto [ag, ant] = muscle_kinematics(state.angle, jp, mp);
  state.agonist.contraction = ag;
  state.antagonist.contraction = ant;
}

inline double limit_torque(double angle, const JointParams& jp) {
  if (angle > jp.limit_hi) return -jp.limit_stiffness * (angle - jp.limit_hi);
  if (angle < jp.limit_lo) return -jp.limit_stiffness * (angle - jp.limit_lo);
  return 0.0;
}

// Torque delivered by the muscle pair alone.
inline double drive_torque(const JointState& state, const MuscleParams& mp, const JointParams& jp) {
  const double f_ag = muscle_force(state.agonist.pressure_obs, state.agonist.contraction, mp);
  const double f_ant = muscle_force(state.antagonist.pressure_obs, state.antagonist.contraction, mp);
  return jp.pulley_radius * (f_ag - f_ant);
}

inline double joint_torque(const JointState& state, const MuscleParams& mp, const JointParams& jp) {
  return drive_torque(state, mp, jp) - jp.viscous_friction * state.velocity -
         jp.coulomb_friction * std::tanh(state.velocity / kCoulombVelocityEps) -
         jp.gravity_torque_amplitude * std::sin(state.angle) + limit_torque(state.angle, jp);
}

}  // namespace pamsim
