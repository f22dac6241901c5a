#pragma once

// Drives a plant with a multisine design and reduces the logs to a BLA.
// The input is the target-pressure difference of one antagonistic pair
// around the medium pressure; the output is that joint's angle.

#include <chrono>
#include <cstddef>
#include <functional>
#include <future>
#include <optional>
#include <stop_token>
#include <string>
#include <thread>
#include <vector>

#include "pamsim/dataset.hpp"
#include "pamsim/error.hpp"
#include "pamsim/protocol.hpp"
#include "pamsim/service.hpp"
#include "pamsim/simulator.hpp"
#include "pamsim/sysid.hpp"

namespace pamsim::sysid {

enum class Transport { InProcess, Udp };

inline Transport parse_transport(const std::string& s) {
  if (s == "inproc" || s == "inprocess") return Transport::InProcess;
  if (s == "udp") return Transport::Udp;
  throw Error(ErrorKind::Config, "transport must be inproc or udp, got '" + s + "'");
}

struct RealizationLog {
  // Applied pressure difference (agonist − antagonist target), bar.
  std::vector<double> u;
  // Joint angle at the end of each tick, rad.
  std::vector<double> y;
  std::vector<dataset::Record> records;
};

struct SessionResult {
  std::vector<double> lines;
  std::vector<FrfEstimate> frfs;
  BlaResult bla;
  std::vector<RealizationLog> logs;
};

class SessionError : public Error {
 public:
  SessionError(const std::string& what, std::vector<RealizationLog> partial)
      : Error(ErrorKind::Session, what), partial_(std::move(partial)) {}
  const std::vector<RealizationLog>& partial_logs() const { return partial_; }

 private:
  std::vector<RealizationLog> partial_;
};

struct SessionOptions {
  std::size_t dof = 0;
  SimConfig sim;
  Transport transport = Transport::InProcess;
  std::chrono::milliseconds udp_timeout{2000};
};

inline Command excitation_command(const SimConfig& sim, std::size_t dof, double u) {
  Command c = Command::uniform_pressure(sim.medium_pressure);
  c.targets[2 * dof] = sim.medium_pressure + 0.5 * u;
  c.targets[2 * dof + 1] = sim.medium_pressure - 0.5 * u;
  return c;
}

namespace detail {

inline void log_state(RealizationLog& log, const ArmState& s, std::size_t dof) {
  log.u.push_back(s.joints[dof].agonist.pressure_des - s.joints[dof].antagonist.pressure_des);
  log.y.push_back(s.joints[dof].angle);
  log.records.push_back(dataset::record_from_state(s));
}

inline void run_in_process(const SessionOptions& opt, std::span<const double> signal, RealizationLog& log) {
  Session session(opt.sim);
  for (double u : signal) {
    session.advance(excitation_command(opt.sim, opt.dof, u));
    log_state(log, session.state(), opt.dof);
  }
}

// Rebuilds the arm state fields the log needs from a state packet.
inline ArmState state_from_packet(const protocol::StatePacket& p) {
  ArmState s;
  for (std::size_t j = 0; j < kNumJoints; ++j) {
    s.joints[j].angle = p.joint_pos[j];
    s.joints[j].velocity = p.joint_vel[j];
  }
  for (std::size_t m = 0; m < kNumMuscles; ++m) {
    s.muscle(m).pressure_obs = p.pressure_obs[m];
    s.muscle(m).pressure_des = p.pressure_des[m];
  }
  s.time_ns = p.timestamp_ns;
  s.tick = p.timestamp_ns / kTickNs;
  return s;
}

// Hosts a fresh unpaced lockstep service on loopback for one realization.
inline void run_over_udp(const SessionOptions& opt, std::span<const double> signal, RealizationLog& log) {
  service::ServeOptions so;
  so.bind = {"127.0.0.1", 0};
  so.sim = opt.sim;
  so.mode = ControlMode::PressureTarget;
  so.pacing = service::Pacing::Unpaced;
  so.max_ticks = signal.size();
  service::Service server(so);
  const net::Endpoint ep{"127.0.0.1", server.port()};
  std::jthread host([&server](std::stop_token st) { server.run(st); });
  service::LockstepClient client(ep, opt.udp_timeout);
  std::uint64_t seq = 0;
  for (double u : signal) {
    const auto cmd = protocol::CommandPacket::from_command(excitation_command(opt.sim, opt.dof, u), seq++);
    const auto reply = client.exchange(cmd);
    if (reply.error_code != 0) {
      throw Error(ErrorKind::Session, "service reported error code " + std::to_string(reply.error_code));
    }
    log_state(log, state_from_packet(reply), opt.dof);
  }
}

}  // namespace detail

// Transient periods are dropped before the spectra are averaged.
inline SessionResult run_sysid_session(const SessionOptions& opt, const ExcitationDesign& design) {
  if (opt.dof >= kNumJoints) throw Error(ErrorKind::Config, "dof out of range");
  design.validate();
  if (design.averaged_periods() < 2) throw Error(ErrorKind::Design, "need at least two periods after discarding");
  const auto signals = design_multisine(design);
  SessionResult result;
  result.lines = design.lines;
  result.logs.resize(design.realizations);

  if (opt.transport == Transport::InProcess) {
    std::vector<std::future<void>> jobs;
    for (std::size_t l = 0; l < design.realizations; ++l) {
      jobs.push_back(std::async(std::launch::async, [&, l] {
        detail::run_in_process(opt, signals[l], result.logs[l]);
      }));
    }
    for (auto& j : jobs) j.get();
  } else {
    for (std::size_t l = 0; l < design.realizations; ++l) {
      try {
        detail::run_over_udp(opt, signals[l], result.logs[l]);
      } catch (const Error& e) {
        throw SessionError(std::string("realization ") + std::to_string(l) + ": " + e.what(), result.logs);
      }
    }
  }

  const auto bins = design.bins();
  const std::size_t skip = design.discard * design.period_samples;
  for (const auto& log : result.logs) {
    result.frfs.push_back(estimate_frf(std::span<const double>(log.u).subspan(skip),
                                       std::span<const double>(log.y).subspan(skip), design.period_samples, bins));
  }
  result.bla = estimate_bla(std::span<const FrfEstimate>(result.frfs));
  return result;
}

// Same reduction for the analytic reference plant; `u` is the designed signal.
inline SessionResult run_reference_session(const SecondOrderPlant& plant, const ExcitationDesign& design) {
  design.validate();
  const auto signals = design_multisine(design);
  const auto bins = design.bins();
  const std::size_t skip = design.discard * design.period_samples;
  SessionResult result;
  result.lines = design.lines;
  for (std::size_t l = 0; l < design.realizations; ++l) {
    RealizationLog log;
    log.u = signals[l];
    log.y = plant.simulate(design, l);
    result.frfs.push_back(estimate_frf(std::span<const double>(log.u).subspan(skip),
                                       std::span<const double>(log.y).subspan(skip), design.period_samples, bins));
    result.logs.push_back(std::move(log));
  }
  result.bla = estimate_bla(std::span<const FrfEstimate>(result.frfs));
  return result;
}

}  // namespace pamsim::sysid
