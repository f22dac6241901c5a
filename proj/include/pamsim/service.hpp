#pragma once

// PLC-side emulation: a ticker steps the simulator at 500 Hz and answers the
// most recent commander with one state packet per tick. Commands land in a
// single-slot mailbox (latest command wins); a command arriving mid-tick
// takes effect on the next tick.

#include <atomic>
#include <chrono>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <stop_token>
#include <string>
#include <thread>
#include <vector>

#include "pamsim/dataset.hpp"
#include "pamsim/error.hpp"
#include "pamsim/protocol.hpp"
#include "pamsim/simulator.hpp"
#include "pamsim/udp.hpp"

namespace pamsim::service {

enum class Pacing { RealTime, Unpaced };

inline Pacing parse_pacing(const std::string& s) {
  if (s == "realtime") return Pacing::RealTime;
  if (s == "unpaced") return Pacing::Unpaced;
  throw Error(ErrorKind::Config, "pacing must be realtime or unpaced, got '" + s + "'");
}

inline ControlMode parse_mode(const std::string& s) {
  if (s == "pressure") return ControlMode::PressureTarget;
  if (s == "position") return ControlMode::PositionTarget;
  throw Error(ErrorKind::Config, "mode must be pressure or position, got '" + s + "'");
}

// 500 ms at 500 Hz.
inline constexpr std::uint64_t kDefaultWatchdogTicks = 250;

// What the receiver hands to the ticker. Taking empties the slot.
struct MailboxContents {
  std::optional<protocol::CommandPacket> command;
  bool malformed = false;
  std::optional<sockaddr_in> sender;
};

class Mailbox {
 public:
  void post(const protocol::CommandPacket& cmd, const sockaddr_in& from) {
    std::lock_guard lock(mutex_);
    slot_.command = cmd;
    slot_.sender = from;
  }
  void post_malformed(const sockaddr_in& from) {
    std::lock_guard lock(mutex_);
    slot_.malformed = true;
    slot_.sender = from;
  }
  MailboxContents take() {
    std::lock_guard lock(mutex_);
    return std::exchange(slot_, MailboxContents{});
  }

 private:
  std::mutex mutex_;
  MailboxContents slot_;
};

// Transport-free control loop: command latching, watchdog, error reporting
// and sequence numbering. Time advances only through tick().
class ControlLoop {
 public:
  ControlLoop(SimConfig config, ControlMode session_mode, std::uint64_t watchdog_ticks = kDefaultWatchdogTicks)
      : session_(std::move(config)), mode_(session_mode), watchdog_ticks_(watchdog_ticks) {}

  // Stores the command for the next tick; a later submit before that tick
  // replaces it.
  void submit(const protocol::CommandPacket& cmd) {
    try {
      protocol::check_session_mode(cmd, mode_);
      pending_ = cmd;
    } catch (const Error&) {
      mode_error_ = true;
    }
  }

  void report_malformed() { malformed_ = true; }

  protocol::StatePacket tick() {
    if (pending_) {
      active_ = pending_->to_command();
      pending_.reset();
      silent_ticks_ = 0;
      watchdog_ = false;
    }
    if (!diverged_) {
      try {
        session_.advance(watchdog_ || !active_ ? hold_command() : *active_);
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::IntegrationDiverged && e.kind() != ErrorKind::InvalidState) throw;
        diverged_ = true;
      }
      ++silent_ticks_;
      if (silent_ticks_ > watchdog_ticks_) watchdog_ = true;
    }
    protocol::ErrorCode code = protocol::ErrorCode::Ok;
    if (diverged_) {
      code = protocol::ErrorCode::IntegrationDiverged;
    } else if (mode_error_) {
      code = protocol::ErrorCode::ModeMismatch;
    } else if (malformed_) {
      code = protocol::ErrorCode::MalformedCommand;
    } else if (watchdog_) {
      code = protocol::ErrorCode::Watchdog;
    }
    mode_error_ = malformed_ = false;
    return protocol::make_state_packet(session_.state(), session_.config().muscle, mode_, seq_++, code);
  }

  const ArmState& state() const { return session_.state(); }
  ControlMode mode() const { return mode_; }
  bool watchdog_active() const { return watchdog_; }
  bool diverged() const { return diverged_; }
  std::uint64_t next_seq() const { return seq_; }

 private:
  // Keeps every pressure_des where it is.
  Command hold_command() const {
    Command c;
    for (std::size_t m = 0; m < kNumMuscles; ++m) c.targets[m] = session_.state().muscle(m).pressure_des;
    return c;
  }

  Session session_;
  ControlMode mode_;
  std::uint64_t watchdog_ticks_;
  std::optional<protocol::CommandPacket> pending_;
  std::optional<Command> active_;
  std::uint64_t silent_ticks_ = 0;
  std::uint64_t seq_ = 0;
  bool watchdog_ = false;
  bool mode_error_ = false;
  bool malformed_ = false;
  bool diverged_ = false;
};

// Tick-stamped command list for deterministic replay.
//
//   # comment
//   <tick> pressure p0 p1 p2 p3 p4 p5 p6 p7
//   <tick> position q0 q1 q2 q3
//   end <tick>
//
// Ticks count tick() calls from zero; a command at tick t is in the mailbox
// when tick t is computed. Several commands at one tick: the last one wins.
struct Script {
  std::multimap<std::uint64_t, protocol::CommandPacket> commands;
  std::uint64_t end_tick = 0;

  static Script parse(const std::string& text) {
    Script s;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    std::optional<std::uint64_t> explicit_end;
    std::uint64_t seq = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      std::istringstream fields(line);
      std::string first;
      if (!(fields >> first)) continue;
      const auto fail = [&](const std::string& why) {
        return Error(ErrorKind::Config, "script line " + std::to_string(line_no) + ": " + why);
      };
      if (first == "end") {
        std::uint64_t t = 0;
        if (!(fields >> t)) throw fail("end needs a tick");
        explicit_end = t;
        continue;
      }
      std::uint64_t tick = 0;
      try {
        std::size_t used = 0;
        tick = std::stoull(first, &used);
        if (used != first.size()) throw std::invalid_argument(first);
      } catch (const std::exception&) {
        throw fail("expected a tick number");
      }
      std::string mode_name;
      if (!(fields >> mode_name)) throw fail("missing mode");
      const ControlMode mode = parse_mode(mode_name);
      protocol::CommandPacket cmd;
      cmd.mode = static_cast<std::uint8_t>(mode);
      cmd.seq = seq++;
      const std::size_t count = mode == ControlMode::PressureTarget ? kNumMuscles : kNumJoints;
      for (std::size_t i = 0; i < count; ++i) {
        if (!(fields >> cmd.targets[i])) throw fail("expected " + std::to_string(count) + " targets");
      }
      std::string extra;
      if (fields >> extra) throw fail("trailing field '" + extra + "'");
      s.commands.emplace(tick, cmd);
    }
    s.end_tick = explicit_end ? *explicit_end : (s.commands.empty() ? 0 : s.commands.rbegin()->first + 1);
    return s;
  }

  static Script load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::Config, "cannot open script " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse(buf.str());
  }
};

// Runs a script against a fresh loop without any transport.
inline std::vector<protocol::StatePacket> run_script(const Script& script, const SimConfig& config, ControlMode mode,
                                                     std::uint64_t watchdog_ticks = kDefaultWatchdogTicks) {
  ControlLoop loop(config, mode, watchdog_ticks);
  std::vector<protocol::StatePacket> out;
  out.reserve(script.end_tick);
  auto it = script.commands.begin();
  for (std::uint64_t t = 0; t < script.end_tick; ++t) {
    for (; it != script.commands.end() && it->first == t; ++it) loop.submit(it->second);
    out.push_back(loop.tick());
  }
  return out;
}

struct ServeOptions {
  net::Endpoint bind{"127.0.0.1", 0};
  SimConfig sim;
  ControlMode mode = ControlMode::PressureTarget;
  Pacing pacing = Pacing::RealTime;
  std::optional<Script> script;
  // Extra destination for every state packet (besides the last commander).
  std::optional<net::Endpoint> emit;
  // Stop after this many ticks; unbounded when empty (scripted runs stop at
  // the script's end tick).
  std::optional<std::uint64_t> max_ticks;
  std::uint64_t watchdog_ticks = kDefaultWatchdogTicks;
  // Observes every emitted packet on the ticker thread.
  std::function<void(const protocol::StatePacket&)> on_state;
};

struct ServeReport {
  std::uint64_t ticks = 0;
  std::uint64_t packets_sent = 0;
  std::uint64_t malformed = 0;
  std::uint64_t send_failures = 0;
};

class Service {
 public:
  explicit Service(ServeOptions options)
      : options_(std::move(options)),
        socket_(net::UdpSocket::bound(options_.bind)),
        loop_(options_.sim, options_.mode, options_.watchdog_ticks) {
    if (options_.emit) emit_addr_ = options_.emit->resolve();
  }

  std::uint16_t port() const { return socket_.local_port(); }

  ServeReport run(std::stop_token stop = {}) {
    if (options_.pacing == Pacing::RealTime) return run_realtime(stop);
    if (options_.script) return run_scripted(stop);
    return run_lockstep(stop);
  }

 private:
  bool reached_limit() const { return options_.max_ticks && report_.ticks >= *options_.max_ticks; }

  // Decodes one datagram into the mailbox slot semantics.
  void ingest(const net::Datagram& d, MailboxContents& into) {
    into.sender = d.from;
    try {
      into.command = protocol::decode_command(d.bytes);
    } catch (const Error&) {
      into.malformed = true;
      ++report_.malformed;
    }
  }

  void apply(const MailboxContents& mail) {
    if (mail.sender) reply_to_ = mail.sender;
    if (mail.malformed) loop_.report_malformed();
    if (mail.command) loop_.submit(*mail.command);
  }

  void tick_and_send() {
    const protocol::StatePacket p = loop_.tick();
    ++report_.ticks;
    if (options_.on_state) options_.on_state(p);
    const auto bytes = protocol::encode_state(p);
    auto send = [&](const sockaddr_in& to) {
      if (socket_.send_to(bytes, to)) {
        ++report_.packets_sent;
      } else {
        ++report_.send_failures;
      }
    };
    if (reply_to_) send(*reply_to_);
    if (emit_addr_ && !(reply_to_ && net::same_address(*reply_to_, *emit_addr_))) send(*emit_addr_);
  }

  ServeReport run_realtime(std::stop_token stop) {
    using clock = std::chrono::steady_clock;
    Mailbox mailbox;
    std::jthread receiver([this, &mailbox](std::stop_token st) {
      while (!st.stop_requested()) {
        auto d = socket_.receive(std::chrono::milliseconds(20));
        if (!d) continue;
        MailboxContents one;
        try {
          one.command = protocol::decode_command(d->bytes);
          mailbox.post(*one.command, d->from);
        } catch (const Error&) {
          malformed_count_.fetch_add(1, std::memory_order_relaxed);
          mailbox.post_malformed(d->from);
        }
      }
    });
    const auto period = std::chrono::nanoseconds(kTickNs);
    auto deadline = clock::now();
    auto script_it = options_.script ? options_.script->commands.begin() : decltype(options_.script->commands.begin()){};
    while (!stop.stop_requested() && !reached_limit()) {
      if (options_.script && report_.ticks >= options_.script->end_tick) break;
      deadline += period;
      std::this_thread::sleep_until(deadline);
      // After a long stall resynchronize instead of bursting.
      if (clock::now() - deadline > 50 * period) deadline = clock::now();
      apply(mailbox.take());
      if (options_.script) {
        for (; script_it != options_.script->commands.end() && script_it->first == report_.ticks; ++script_it) {
          loop_.submit(script_it->second);
        }
      }
      tick_and_send();
    }
    receiver.request_stop();
    receiver.join();
    report_.malformed = malformed_count_.load();
    return report_;
  }

  // One tick per received datagram, replying to its sender.
  ServeReport run_lockstep(std::stop_token stop) {
    while (!stop.stop_requested() && !reached_limit()) {
      auto d = socket_.receive(std::chrono::milliseconds(20));
      if (!d) continue;
      MailboxContents mail;
      ingest(*d, mail);
      apply(mail);
      tick_and_send();
    }
    return report_;
  }

  // As fast as possible through the script; network commands are drained
  // before the script entries of the same tick.
  ServeReport run_scripted(std::stop_token stop) {
    const Script& script = *options_.script;
    auto it = script.commands.begin();
    while (!stop.stop_requested() && !reached_limit() && report_.ticks < script.end_tick) {
      while (auto d = socket_.receive(std::chrono::milliseconds(0))) {
        MailboxContents mail;
        ingest(*d, mail);
        apply(mail);
      }
      for (; it != script.commands.end() && it->first == report_.ticks; ++it) loop_.submit(it->second);
      tick_and_send();
    }
    return report_;
  }

  ServeOptions options_;
  net::UdpSocket socket_;
  ControlLoop loop_;
  std::optional<sockaddr_in> reply_to_;
  std::optional<sockaddr_in> emit_addr_;
  std::atomic<std::uint64_t> malformed_count_{0};
  ServeReport report_;
};

// Client side of the lockstep exchange: one command out, one state back.
class LockstepClient {
 public:
  LockstepClient(const net::Endpoint& server, std::chrono::milliseconds timeout)
      : socket_(net::UdpSocket::bound({"127.0.0.1", 0})), server_(server.resolve()), timeout_(timeout) {}

  protocol::StatePacket exchange(const protocol::CommandPacket& cmd) {
    const auto bytes = protocol::encode_command(cmd);
    if (!socket_.send_to(bytes, server_)) throw Error(ErrorKind::Session, "send failed");
    const auto deadline = std::chrono::steady_clock::now() + timeout_;
    while (true) {
      const auto left =
          std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
      if (left.count() <= 0) throw Error(ErrorKind::Session, "timed out waiting for state packet");
      auto d = socket_.receive(left);
      if (!d) continue;
      try {
        auto p = protocol::decode_state(d->bytes);
        if (last_seq_ && p.seq <= *last_seq_) continue;
        last_seq_ = p.seq;
        return p;
      } catch (const Error&) {
        continue;
      }
    }
  }

 private:
  net::UdpSocket socket_;
  sockaddr_in server_;
  std::chrono::milliseconds timeout_;
  std::optional<std::uint64_t> last_seq_;
};

inline protocol::StatePacket state_packet_from_record(const dataset::Record& r, const MuscleParams& mp,
                                                      std::uint64_t seq) {
  protocol::StatePacket p;
  p.seq = seq;
  p.timestamp_ns = r.timestamp_ns;
  for (std::size_t j = 0; j < kNumJoints; ++j) {
    p.joint_pos[j] = r.joint_pos[j];
    p.joint_vel[j] = r.joint_vel[j];
  }
  for (std::size_t m = 0; m < kNumMuscles; ++m) {
    p.pressure_obs[m] = r.pressure_obs[m];
    p.pressure_des[m] = r.pressure_des[m];
    MuscleState ms{p.pressure_obs[m], p.pressure_des[m], 0.0};
    p.valve[m] = valve_position(ms, mp);
  }
  return p;
}

// Re-emits a recorded dataset as state packets, paced at 500 Hz unless
// Unpaced. Returns the number of packets sent.
inline std::uint64_t replay(const dataset::Contents& data, const net::Endpoint& to, Pacing pacing,
                            const MuscleParams& mp, std::stop_token stop = {}) {
  net::UdpSocket socket = net::UdpSocket::bound({"0.0.0.0", 0});
  const sockaddr_in addr = to.resolve();
  using clock = std::chrono::steady_clock;
  auto deadline = clock::now();
  std::uint64_t sent = 0;
  for (const auto& r : data.records) {
    if (stop.stop_requested()) break;
    if (pacing == Pacing::RealTime) {
      deadline += std::chrono::nanoseconds(kTickNs);
      std::this_thread::sleep_until(deadline);
    }
    const auto bytes = protocol::encode_state(state_packet_from_record(r, mp, sent));
    if (socket.send_to(bytes, addr)) ++sent;
  }
  return sent;
}

}  // namespace pamsim::service
