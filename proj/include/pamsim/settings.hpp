#pragma once

// Project-wide settings resolved from one key = value file. Every key has an
// embedded default, so an empty file (or none) is a valid configuration.
//
//   muscle.{p_min,p_max,tau,f0,a,b,eps_max}      muscle.force_law = quadratic|linearized
//   pressure.{medium,minimum}
//   joint.<field> for all joints, jointN.<field> (N = 1..4) for one joint; fields:
//     inertia pulley_radius viscous_friction coulomb_friction
//     gravity_torque_amplitude limit_lo limit_hi limit_stiffness tendon_length
//   pid.{kp,ki,kd}   sim.collision_threshold
//   service.mode = pressure|position   service.watchdog_ms
//   sysid.{amplitude,realizations,periods,discard,period_s,line_step,line_max}
//   forcemap.{joint,lever_arm,effective_mass,engage_position,observe_s,timeout_s,drive_free}
//   longrun.{multisine_duration,reset_dwell,slow_dwell,fast_dwell,amplitude}

#include <cmath>
#include <cstdint>
#include <string>

#include "pamsim/config.hpp"
#include "pamsim/error.hpp"
#include "pamsim/forcemap.hpp"
#include "pamsim/longrun.hpp"
#include "pamsim/service.hpp"
#include "pamsim/simulator.hpp"
#include "pamsim/sysid.hpp"

namespace pamsim {

struct SysidSettings {
  double amplitude = sysid::ExcitationDesign::standard().amplitude;
  std::size_t realizations = 10;
  std::size_t periods = 10;
  std::size_t discard = 2;
  double period_s = 10.0;
  double line_step = 0.1;
  double line_max = 10.0;

  // Lines are k·line_step for k = 1 … line_max/line_step.
  sysid::ExcitationDesign design() const {
    sysid::ExcitationDesign d;
    const auto count = static_cast<int>(std::llround(line_max / line_step));
    const auto denom = std::llround(1.0 / line_step);
    for (int k = 1; k <= count; ++k) {
      d.lines.push_back(std::abs(1.0 / line_step - static_cast<double>(denom)) < 1e-9
                            ? static_cast<double>(k) / static_cast<double>(denom)
                            : k * line_step);
    }
    d.amplitude = amplitude;
    d.realizations = realizations;
    d.periods = periods;
    d.discard = discard;
    d.sample_rate = kSampleRate;
    d.period_samples = static_cast<std::size_t>(std::llround(period_s * kSampleRate));
    return d;
  }
};

struct LongrunSettings {
  double multisine_duration = 30.0;
  double reset_dwell = 2.0;
  double slow_dwell = 3.0;
  double fast_dwell = 0.5;
  double amplitude = sysid::ExcitationDesign::standard().amplitude;

  longrun::EpisodeSpec episode() const {
    auto s = longrun::EpisodeSpec::standard(0);
    s.multisine_duration = multisine_duration;
    s.reset_dwell = reset_dwell;
    s.slow_dwell = slow_dwell;
    s.fast_dwell = fast_dwell;
    s.multisine.amplitude = amplitude;
    return s;
  }
};

struct Settings {
  SimConfig sim;
  ControlMode service_mode = ControlMode::PressureTarget;
  double watchdog_ms = 500.0;
  SysidSettings sysid;
  forcemap::ImpactConfig impact;
  LongrunSettings longrun;
  std::string config_hash = KeyValueConfig{}.hash();

  std::uint64_t watchdog_ticks() const { return static_cast<std::uint64_t>(std::llround(watchdog_ms * 1e-3 * kSampleRate)); }
};

namespace detail {

inline void read_joint(const KeyValueConfig& cfg, const std::string& prefix, JointParams& j) {
  cfg.get(prefix + "inertia", j.inertia);
  cfg.get(prefix + "pulley_radius", j.pulley_radius);
  cfg.get(prefix + "viscous_friction", j.viscous_friction);
  cfg.get(prefix + "coulomb_friction", j.coulomb_friction);
  cfg.get(prefix + "gravity_torque_amplitude", j.gravity_torque_amplitude);
  cfg.get(prefix + "limit_lo", j.limit_lo);
  cfg.get(prefix + "limit_hi", j.limit_hi);
  cfg.get(prefix + "limit_stiffness", j.limit_stiffness);
  cfg.get(prefix + "tendon_length", j.tendon_length);
}

}  // namespace detail

inline Settings resolve_settings(const KeyValueConfig& cfg) {
  Settings s;
  auto& m = s.sim.muscle;
  cfg.get("muscle.p_min", m.p_min);
  cfg.get("muscle.p_max", m.p_max);
  cfg.get("muscle.tau", m.tau);
  cfg.get("muscle.f0", m.f0);
  cfg.get("muscle.a", m.a);
  cfg.get("muscle.b", m.b);
  cfg.get("muscle.eps_max", m.eps_max);
  std::string law = "quadratic";
  cfg.get("muscle.force_law", law);
  if (law == "quadratic") {
    m.force_law = ForceLaw::Quadratic;
  } else if (law == "linearized") {
    m.force_law = ForceLaw::Linearized;
  } else {
    throw Error(ErrorKind::Config, "muscle.force_law must be quadratic or linearized");
  }
  cfg.get("pressure.medium", s.sim.medium_pressure);
  cfg.get("pressure.minimum", s.sim.minimum_pressure);
  m.linearize_pressure = s.sim.medium_pressure;

  for (std::size_t j = 0; j < kNumJoints; ++j) {
    detail::read_joint(cfg, "joint.", s.sim.joints[j]);
    detail::read_joint(cfg, "joint" + std::to_string(j + 1) + ".", s.sim.joints[j]);
  }

  cfg.get("pid.kp", s.sim.pid.kp);
  cfg.get("pid.ki", s.sim.pid.ki);
  cfg.get("pid.kd", s.sim.pid.kd);
  cfg.get("sim.collision_threshold", s.sim.collision_threshold);

  std::string mode = "pressure";
  cfg.get("service.mode", mode);
  s.service_mode = service::parse_mode(mode);
  cfg.get("service.watchdog_ms", s.watchdog_ms);

  cfg.get("sysid.amplitude", s.sysid.amplitude);
  cfg.get("sysid.realizations", s.sysid.realizations);
  cfg.get("sysid.periods", s.sysid.periods);
  cfg.get("sysid.discard", s.sysid.discard);
  cfg.get("sysid.period_s", s.sysid.period_s);
  cfg.get("sysid.line_step", s.sysid.line_step);
  cfg.get("sysid.line_max", s.sysid.line_max);

  std::size_t fm_joint = s.impact.joint + 1;
  cfg.get("forcemap.joint", fm_joint);
  if (fm_joint < 1 || fm_joint > kNumJoints) throw Error(ErrorKind::Config, "forcemap.joint must be 1..4");
  s.impact.joint = fm_joint - 1;
  cfg.get("forcemap.lever_arm", s.impact.lever_arm);
  cfg.get("forcemap.effective_mass", s.impact.effective_mass);
  cfg.get("forcemap.engage_position", s.impact.engage_position);
  cfg.get("forcemap.observe_s", s.impact.observe_s);
  cfg.get("forcemap.timeout_s", s.impact.timeout_s);
  cfg.get("forcemap.drive_free", s.impact.drive_free);

  cfg.get("longrun.multisine_duration", s.longrun.multisine_duration);
  cfg.get("longrun.reset_dwell", s.longrun.reset_dwell);
  cfg.get("longrun.slow_dwell", s.longrun.slow_dwell);
  cfg.get("longrun.fast_dwell", s.longrun.fast_dwell);
  cfg.get("longrun.amplitude", s.longrun.amplitude);

  if (const auto unknown = cfg.unused_keys(); !unknown.empty()) {
    throw Error(ErrorKind::Config, "unknown configuration key '" + unknown.front() + "'");
  }
  s.sim.validate();
  s.impact.probe(1.0).validate();
  s.config_hash = cfg.hash();
  return s;
}

inline Settings load_settings(const std::string& path) {
  if (path.empty()) return resolve_settings(KeyValueConfig{});
  return resolve_settings(KeyValueConfig::load(path));
}

}  // namespace pamsim
