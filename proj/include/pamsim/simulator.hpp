#pragma once

// Fixed-rate integrator for four decoupled antagonistic joints.
//
// One tick is 2 ms (500 Hz) split into four semi-implicit Euler substeps.
// The engine has no clock: time is a pure function of the tick count.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "pamsim/error.hpp"
#include "pamsim/plant.hpp"

namespace pamsim {

inline constexpr std::size_t kNumJoints = 4;
inline constexpr std::size_t kNumMuscles = 2 * kNumJoints;
inline constexpr std::uint64_t kTickNs = 2'000'000;
inline constexpr double kTickSeconds = 0.002;
inline constexpr double kSampleRate = 500.0;
inline constexpr int kSubsteps = 4;
inline constexpr int kProbeMicrosteps = 16;

enum class ControlMode : std::uint8_t { PressureTarget = 0, PositionTarget = 1 };

struct PidGains {
  double kp = 3.0;   // bar/rad
  double ki = 40.0;  // bar/(rad·s)
  double kd = 0.5;   // bar·s/rad
};

struct SimConfig {
  MuscleParams muscle;
  std::array<JointParams, kNumJoints> joints{};
  PidGains pid;
  double medium_pressure = 2.5;
  double minimum_pressure = 0.0;
  // rad/s change between consecutive ticks.
  double collision_threshold = 0.2;

  SimConfig() {
    joints[1].gravity_torque_amplitude = 0.5;
    joints[3].gravity_torque_amplitude = 0.2;
  }

  void validate() const {
    muscle.validate();
    for (const auto& j : joints) j.validate();
    if (medium_pressure < muscle.p_min || medium_pressure > muscle.p_max ||
        minimum_pressure < muscle.p_min || minimum_pressure > muscle.p_max) {
      throw Error(ErrorKind::Config, "medium/minimum pressure outside [p_min, p_max]");
    }
    if (!(collision_threshold > 0)) throw Error(ErrorKind::Config, "collision_threshold must be > 0");
    if (kTickSeconds / kSubsteps > muscle.tau / 10.0) {
      throw Error(ErrorKind::Config, "muscle tau too small for the fixed substep");
    }
  }
};

// Per-tick command: eight target pressures (agonist, antagonist per joint) in
// pressure mode, or four target angles followed by four zeros in position mode.
struct Command {
  ControlMode mode = ControlMode::PressureTarget;
  std::array<double, kNumMuscles> targets{};

  static Command pressures(const std::array<double, kNumMuscles>& p) {
    return Command{ControlMode::PressureTarget, p};
  }
  static Command uniform_pressure(double p) {
    Command c;
    c.targets.fill(p);
    return c;
  }
  static Command positions(const std::array<double, kNumJoints>& q) {
    Command c{ControlMode::PositionTarget, {}};
    for (std::size_t j = 0; j < kNumJoints; ++j) c.targets[j] = q[j];
    return c;
  }

  friend bool operator==(const Command&, const Command&) = default;
};

struct ArmState {
  std::array<JointState, kNumJoints> joints{};
  std::array<double, kNumJoints> pid_integral{};
  std::uint64_t tick = 0;
  std::uint64_t time_ns = 0;

  friend bool operator==(const ArmState&, const ArmState&) = default;

  const MuscleState& muscle(std::size_t index) const {
    const auto& j = joints[index / 2];
    return index % 2 == 0 ? j.agonist : j.antagonist;
  }
  MuscleState& muscle(std::size_t index) {
    auto& j = joints[index / 2];
    return index % 2 == 0 ? j.agonist : j.antagonist;
  }
};

// Virtual spring probe standing in for a body-region measurement device. The
// probe surface sits at engage_position on the attached joint; penetration is
// measured along the tip arc (lever_arm · angle). While a probe is attached the
// joint's inertia is the effective tip mass reflected through the lever arm.
struct SpringProbe {
  double stiffness = 150'000.0;  // N/m
  double engage_position = 0.6;  // rad
  std::size_t attached_joint = 0;
  double effective_mass = 1.3;  // kg
  double lever_arm = 0.5;       // m
  // Removes drive, friction, gravity and limit torques while in contact.
  bool drive_free = false;

  double joint_inertia() const { return effective_mass * lever_arm * lever_arm; }
  double penetration(double angle) const { return std::max(0.0, lever_arm * (angle - engage_position)); }

  void validate() const {
    if (!(stiffness > 0)) throw Error(ErrorKind::Config, "probe: stiffness must be > 0");
    if (!(effective_mass > 0)) throw Error(ErrorKind::Config, "probe: effective_mass must be > 0");
    if (!(lever_arm > 0)) throw Error(ErrorKind::Config, "probe: lever_arm must be > 0");
    if (attached_joint >= kNumJoints) throw Error(ErrorKind::Config, "probe: attached_joint out of range");
  }
};

struct StepResult {
  ArmState state;
  // Largest probe force seen over the micro-steps of this tick, N.
  double probe_force = 0.0;
  // Tip speed (m/s) at the micro-step where the probe was first penetrated.
  std::optional<double> contact_velocity;
};

// State at rest at angle zero with every muscle settled at `pressure`.
inline ArmState make_rest_state(const SimConfig& config, double pressure) {
  ArmState s;
  for (auto& j : s.joints) {
    j.agonist.pressure_obs = j.agonist.pressure_des = pressure;
    j.antagonist.pressure_obs = j.antagonist.pressure_des = pressure;
  }
  for (std::size_t j = 0; j < kNumJoints; ++j) update_contractions(s.joints[j], config.joints[j], config.muscle);
  return s;
}

inline ArmState make_rest_state(const SimConfig& config) { return make_rest_state(config, config.medium_pressure); }

namespace detail {

inline bool finite_state(const JointState& j) {
  return std::isfinite(j.angle) && std::isfinite(j.velocity) && std::isfinite(j.agonist.pressure_obs) &&
         std::isfinite(j.antagonist.pressure_obs);
}

inline void apply_command(ArmState& s, const Command& cmd, const SimConfig& config) {
  for (double t : cmd.targets) {
    if (!std::isfinite(t)) throw Error(ErrorKind::InvalidState, "non-finite command target");
  }
  if (cmd.mode == ControlMode::PressureTarget) {
    for (std::size_t m = 0; m < kNumMuscles; ++m) ingest_target(s.muscle(m), cmd.targets[m], config.muscle);
    return;
  }
  for (std::size_t j = 0; j < kNumJoints; ++j) {
    auto& joint = s.joints[j];
    const double error = cmd.targets[j] - joint.angle;
    s.pid_integral[j] += error * kTickSeconds;
    // Derivative acts on the measurement so setpoint jumps do not kick.
    const double dp = config.pid.kp * error + config.pid.ki * s.pid_integral[j] - config.pid.kd * joint.velocity;
    ingest_target(joint.agonist, config.medium_pressure + 0.5 * dp, config.muscle);
    ingest_target(joint.antagonist, config.medium_pressure - 0.5 * dp, config.muscle);
  }
}

}  // namespace detail

inline StepResult step(const ArmState& state, const Command& cmd, const SimConfig& config,
                       const SpringProbe* probe = nullptr) {
  StepResult out{state, 0.0, std::nullopt};
  ArmState& s = out.state;
  detail::apply_command(s, cmd, config);

  constexpr double h = kTickSeconds / kSubsteps;
  for (int sub = 0; sub < kSubsteps; ++sub) {
    for (std::size_t j = 0; j < kNumJoints; ++j) {
      const JointParams& jp = config.joints[j];
      JointState& joint = s.joints[j];
      joint.agonist = step_pressure(joint.agonist, config.muscle, h);
      joint.antagonist = step_pressure(joint.antagonist, config.muscle, h);

      const bool probed = probe != nullptr && probe->attached_joint == j;
      if (!probed) {
        joint.velocity += h * joint_torque(joint, config.muscle, jp) / jp.inertia;
        joint.angle += h * joint.velocity;
        update_contractions(joint, jp, config.muscle);
      } else {
        // The probe spring is far stiffer than the arm, so the probed joint
        // takes finer steps.
        const double hm = h / kProbeMicrosteps;
        for (int micro = 0; micro < kProbeMicrosteps; ++micro) {
          const bool in_contact = probe->penetration(joint.angle) > 0.0;
          double torque = 0.0;
          if (!(in_contact && probe->drive_free)) torque = joint_torque(joint, config.muscle, jp);
          if (in_contact) torque -= probe->lever_arm * probe->stiffness * probe->penetration(joint.angle);
          joint.velocity += hm * torque / probe->joint_inertia();
          joint.angle += hm * joint.velocity;
          update_contractions(joint, jp, config.muscle);

          const double force = probe->stiffness * probe->penetration(joint.angle);
          out.probe_force = std::max(out.probe_force, force);
          if (!in_contact && force > 0.0 && !out.contact_velocity) {
            out.contact_velocity = joint.velocity * probe->lever_arm;
          }
        }
      }
      if (!detail::finite_state(joint)) {
        throw Error(ErrorKind::IntegrationDiverged, "joint " + std::to_string(j) + " state became non-finite");
      }
    }
  }
  s.tick += 1;
  s.time_ns = s.tick * kTickNs;
  return out;
}

// Fixed-capacity history of joint velocities, one sample per tick.
class VelocityRing {
 public:
  explicit VelocityRing(std::size_t capacity = 2) : buffer_(capacity < 2 ? 2 : capacity) {}

  void push(double v) {
    buffer_[head_] = v;
    head_ = (head_ + 1) % buffer_.size();
    if (size_ < buffer_.size()) ++size_;
  }

  std::size_t size() const { return size_; }
  void clear() { size_ = head_ = 0; }

  // Oldest-first copy of the stored samples.
  std::vector<double> samples() const {
    std::vector<double> out;
    out.reserve(size_);
    const std::size_t start = (head_ + buffer_.size() - size_) % buffer_.size();
    for (std::size_t i = 0; i < size_; ++i) out.push_back(buffer_[(start + i) % buffer_.size()]);
    return out;
  }

 private:
  std::vector<double> buffer_;
  std::size_t head_ = 0;
  std::size_t size_ = 0;
};

// True iff any pair of consecutive samples differs by more than `threshold`.
inline bool detect_collision(std::span<const double> history, double threshold) {
  for (std::size_t i = 1; i < history.size(); ++i) {
    if (std::abs(history[i] - history[i - 1]) > threshold) return true;
  }
  return false;
}

inline bool detect_collision(const VelocityRing& ring, double threshold) {
  const auto s = ring.samples();
  return detect_collision(std::span<const double>(s), threshold);
}

// Convenience wrapper owning a state and its configuration.
class Session {
 public:
  explicit Session(SimConfig config) : config_(std::move(config)), state_(make_rest_state(config_)) {
    config_.validate();
  }
  Session(SimConfig config, ArmState initial) : config_(std::move(config)), state_(initial) { config_.validate(); }

  const ArmState& state() const { return state_; }
  const SimConfig& config() const { return config_; }

  void attach_probe(const SpringProbe& probe) {
    probe.validate();
    probe_ = probe;
  }
  void detach_probe() { probe_.reset(); }
  const std::optional<SpringProbe>& probe() const { return probe_; }

  StepResult advance(const Command& cmd) {
    StepResult r = step(state_, cmd, config_, probe_ ? &*probe_ : nullptr);
    state_ = r.state;
    return r;
  }

 private:
  SimConfig config_;
  ArmState state_;
  std::optional<SpringProbe> probe_;
};

}  // namespace pamsim
