#pragma once

// Collision force maps: a joint is driven into a spring probe by ramping its
// target pressures, and the peak probe force is compared with the pain
// threshold of each body region.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "pamsim/error.hpp"
#include "pamsim/simulator.hpp"

namespace pamsim::forcemap {

struct ContactCondition {
  int index = 0;
  std::string_view body_part;
  double stiffness = 0.0;  // N/mm
  double hardness = 0.0;   // Shore A
  double pain_threshold = 0.0;  // N

  double stiffness_n_per_m() const { return stiffness * 1000.0; }
};

inline constexpr std::array<ContactCondition, 10> kContactConditions{{
    {1, "Skull", 150, 70, 130},
    {2, "Face/hand", 75, 70, 65},
    {3, "Lower legs", 60, 30, 260},
    {4, "Thighs", 50, 30, 300},
    {5, "Neck", 50, 70, 440},
    {6, "Lower arms", 40, 70, 320},
    {7, "Back", 35, 30, 420},
    {8, "Upper arms", 30, 30, 300},
    {9, "Chest", 25, 70, 280},
    {10, "Abdomen", 10, 10, 220},
}};

inline const std::array<ContactCondition, 10>& contact_conditions() { return kContactConditions; }

inline const ContactCondition& contact_condition(int index) {
  if (index < 1 || index > 10) throw Error(ErrorKind::Domain, "contact condition index must be 1..10");
  return kContactConditions[static_cast<std::size_t>(index - 1)];
}

struct ForceMapEntry {
  int condition = 0;
  double target_velocity = 0.0;    // m/s
  double achieved_velocity = 0.0;  // m/s at first contact
  double peak_force = 0.0;         // N
  bool exceeds_pain_threshold = false;
};

struct ImpactConfig {
  std::size_t joint = 0;
  double lever_arm = 0.5;        // m
  double effective_mass = 1.3;   // kg
  double engage_position = 0.6;  // rad
  double observe_s = 0.5;
  double timeout_s = 10.0;
  bool drive_free = false;

  SpringProbe probe(double stiffness_n_per_m) const {
    SpringProbe p;
    p.stiffness = stiffness_n_per_m;
    p.engage_position = engage_position;
    p.attached_joint = joint;
    p.effective_mass = effective_mass;
    p.lever_arm = lever_arm;
    p.drive_free = drive_free;
    return p;
  }
};

struct ImpactResult {
  double achieved_velocity = 0.0;
  double peak_force = 0.0;
  bool collision_detected = false;
};

// Ramps the attached joint's agonist up and antagonist down at `ramp_rate`
// bar/s from the medium pressure. When the velocity jump detector fires the
// targets are frozen where they are. The peak force is taken over
// `observe_s` after first contact. A zero ramp rate places the joint at rest
// on the probe surface with medium pressures.
inline ImpactResult simulate_impact(double stiffness_n_per_m, double ramp_rate, const ImpactConfig& cfg,
                                    const SimConfig& sim) {
  if (!(ramp_rate >= 0)) throw Error(ErrorKind::Domain, "ramp_rate must be >= 0");
  if (cfg.joint >= kNumJoints) throw Error(ErrorKind::Config, "impact joint out of range");
  Session session(sim);
  session.attach_probe(cfg.probe(stiffness_n_per_m));
  const std::uint64_t observe_ticks = static_cast<std::uint64_t>(std::llround(cfg.observe_s * kSampleRate));
  ImpactResult out;

  if (ramp_rate == 0.0) {
    ArmState s = session.state();
    s.joints[cfg.joint].angle = cfg.engage_position;
    update_contractions(s.joints[cfg.joint], sim.joints[cfg.joint], sim.muscle);
    Session resting(sim, s);
    resting.attach_probe(cfg.probe(stiffness_n_per_m));
    const Command hold = Command::uniform_pressure(sim.medium_pressure);
    for (std::uint64_t t = 0; t < observe_ticks; ++t) {
      out.peak_force = std::max(out.peak_force, resting.advance(hold).probe_force);
    }
    return out;
  }

  const std::uint64_t timeout_ticks = static_cast<std::uint64_t>(std::llround(cfg.timeout_s * kSampleRate));
  VelocityRing ring(2);
  ring.push(session.state().joints[cfg.joint].velocity);
  Command cmd = Command::uniform_pressure(sim.medium_pressure);
  bool frozen = false;
  std::optional<std::uint64_t> contact_tick;
  for (std::uint64_t t = 0;; ++t) {
    if (!contact_tick && t >= timeout_ticks) throw Error(ErrorKind::NoContact, "probe not reached within timeout");
    if (contact_tick && t >= *contact_tick + observe_ticks) break;
    if (!frozen) {
      const double dp = ramp_rate * static_cast<double>(t + 1) * kTickSeconds;
      cmd.targets[2 * cfg.joint] = sim.medium_pressure + dp;
      cmd.targets[2 * cfg.joint + 1] = sim.medium_pressure - dp;
    }
    const StepResult r = session.advance(cmd);
    if (r.contact_velocity && !contact_tick) {
      contact_tick = t;
      out.achieved_velocity = *r.contact_velocity;
    }
    if (contact_tick) out.peak_force = std::max(out.peak_force, r.probe_force);
    ring.push(r.state.joints[cfg.joint].velocity);
    if (!frozen && detect_collision(ring, sim.collision_threshold)) {
      frozen = true;
      out.collision_detected = true;
      for (std::size_t m = 0; m < kNumMuscles; ++m) cmd.targets[m] = r.state.muscle(m).pressure_des;
    }
  }
  return out;
}

inline ForceMapEntry run_impact(const ContactCondition& condition, double ramp_rate, const ImpactConfig& cfg,
                                const SimConfig& sim) {
  const ImpactResult r = simulate_impact(condition.stiffness_n_per_m(), ramp_rate, cfg, sim);
  ForceMapEntry e;
  e.condition = condition.index;
  e.achieved_velocity = r.achieved_velocity;
  e.peak_force = r.peak_force;
  e.exceeds_pain_threshold = e.peak_force > condition.pain_threshold;
  return e;
}

struct FreeImpact {
  double contact_velocity = 0.0;
  double peak_force = 0.0;
};

// The tip arrives at the probe with speed `speed` and every torque other than
// the probe spring is removed during contact. Runs until the tip leaves the
// probe again.
inline FreeImpact drive_free_impact(double stiffness_n_per_m, double speed, double effective_mass, const SimConfig& sim,
                                    const ImpactConfig& base = {}) {
  ImpactConfig cfg = base;
  cfg.effective_mass = effective_mass;
  cfg.drive_free = true;
  ArmState s = make_rest_state(sim);
  JointState& j = s.joints[cfg.joint];
  j.velocity = speed / cfg.lever_arm;
  // Start half a micro-step of travel short of the surface.
  j.angle = cfg.engage_position - j.velocity * (kTickSeconds / (kSubsteps * kProbeMicrosteps)) * 0.5;
  update_contractions(j, sim.joints[cfg.joint], sim.muscle);
  Session session(sim, s);
  session.attach_probe(cfg.probe(stiffness_n_per_m));
  const Command hold = Command::uniform_pressure(sim.medium_pressure);
  FreeImpact out;
  bool touched = false;
  for (int t = 0; t < 5000; ++t) {
    const StepResult r = session.advance(hold);
    if (r.contact_velocity && !touched) {
      touched = true;
      out.contact_velocity = *r.contact_velocity;
    }
    out.peak_force = std::max(out.peak_force, r.probe_force);
    if (touched && session.probe()->penetration(r.state.joints[cfg.joint].angle) <= 0.0) break;
  }
  if (!touched) throw Error(ErrorKind::NoContact, "free impact never reached the probe");
  return out;
}

// Largest tip speed whose drive-free peak force stays at or below
// `threshold`, by bisection on the simulated impact.
inline double max_safe_velocity(double threshold, double stiffness_n_per_m, double effective_mass, const SimConfig& sim,
                                const ImpactConfig& base = {}) {
  double lo = 0.0, hi = 1.0;
  while (drive_free_impact(stiffness_n_per_m, hi, effective_mass, sim, base).peak_force <= threshold) {
    hi *= 2.0;
    if (hi > 1e3) throw Error(ErrorKind::Domain, "threshold not reachable");
  }
  for (int i = 0; i < 60 && hi - lo > 1e-9; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (drive_free_impact(stiffness_n_per_m, mid, effective_mass, sim, base).peak_force <= threshold) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return lo;
}

inline double max_safe_velocity(const ContactCondition& c, double effective_mass, const SimConfig& sim,
                                const ImpactConfig& base = {}) {
  return max_safe_velocity(c.pain_threshold, c.stiffness_n_per_m(), effective_mass, sim, base);
}

// Contact speed reached with a given ramp rate. Independent of the probe
// stiffness, since it is measured before the spring acts.
inline double approach_velocity(double ramp_rate, const ImpactConfig& cfg, const SimConfig& sim) {
  return simulate_impact(1000.0, ramp_rate, cfg, sim).achieved_velocity;
}

// Ramp rate (bar/s) whose approach speed matches `target` m/s. Targets above
// the fastest reachable speed return the largest rate searched.
inline double calibrate_ramp_rate(double target, const ImpactConfig& cfg, const SimConfig& sim,
                                  double max_rate = 1000.0) {
  if (target <= 0.0) return 0.0;
  double lo = 0.0, hi = max_rate;
  if (approach_velocity(hi, cfg, sim) <= target) return hi;
  // Slow ramps can stall short of the probe; treat those as too slow.
  auto speed = [&](double rate) {
    try {
      return approach_velocity(rate, cfg, sim);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::NoContact) throw;
      return 0.0;
    }
  };
  for (int i = 0; i < 50 && hi - lo > 1e-6 * hi; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (speed(mid) < target) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return hi;
}

struct VelocityGrid {
  double start = 0.12;
  double stop = 1.94;
  std::size_t count = 14;

  // Parses "start:stop:count".
  static VelocityGrid parse(const std::string& text) {
    VelocityGrid g;
    const auto a = text.find(':');
    const auto b = a == std::string::npos ? a : text.find(':', a + 1);
    if (a == std::string::npos || b == std::string::npos) {
      throw Error(ErrorKind::Config, "velocity grid must be start:stop:count");
    }
    try {
      g.start = std::stod(text.substr(0, a));
      g.stop = std::stod(text.substr(a + 1, b - a - 1));
      const long long n = std::stoll(text.substr(b + 1));
      if (n < 1) throw std::out_of_range("count");
      g.count = static_cast<std::size_t>(n);
    } catch (const std::exception&) {
      throw Error(ErrorKind::Config, "invalid velocity grid '" + text + "'");
    }
    if (g.start < 0 || g.stop < g.start) throw Error(ErrorKind::Config, "velocity grid needs 0 <= start <= stop");
    return g;
  }

  std::vector<double> values() const {
    std::vector<double> v;
    for (std::size_t i = 0; i < count; ++i) {
      v.push_back(count == 1 ? start : start + (stop - start) * static_cast<double>(i) / static_cast<double>(count - 1));
    }
    return v;
  }
};

// One entry per (condition, velocity), ordered by condition then velocity.
inline std::vector<ForceMapEntry> build_force_map(const std::vector<double>& velocities,
                                                  std::span<const ContactCondition> conditions,
                                                  const ImpactConfig& cfg, const SimConfig& sim) {
  if (velocities.empty()) throw Error(ErrorKind::Domain, "velocity grid is empty");
  std::vector<double> rates;
  rates.reserve(velocities.size());
  for (double v : velocities) rates.push_back(calibrate_ramp_rate(v, cfg, sim));
  std::vector<ForceMapEntry> out;
  for (const auto& c : conditions) {
    for (std::size_t i = 0; i < velocities.size(); ++i) {
      ForceMapEntry e = run_impact(c, rates[i], cfg, sim);
      e.target_velocity = velocities[i];
      out.push_back(e);
    }
  }
  return out;
}

inline void write_force_map_csv(const std::string& path, std::span<const ForceMapEntry> entries) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path);
  out << "condition,body_part,velocity,peak_force,pain_threshold,exceeds\n";
  char buf[64];
  for (const auto& e : entries) {
    const auto& c = contact_condition(e.condition);
    out << e.condition << ',' << c.body_part << ',';
    std::snprintf(buf, sizeof buf, "%.6g,%.6f,%g,", e.target_velocity, e.peak_force, c.pain_threshold);
    out << buf << (e.exceeds_pain_threshold ? "true" : "false") << '\n';
  }
  if (!out) throw Error(ErrorKind::Io, "write to " + path + " failed");
}

}  // namespace pamsim::forcemap
