#pragma once

// Fixed-layout little-endian UDP messages of the PLC emulation.
//
//   StatePacket   280 bytes  magic u32 | version u8 | msg_type u8 = 0x01 | mode u8 |
//                            error_code u8 | seq u64 | timestamp_ns u64 |
//                            joint_pos 4×f64 | joint_vel 4×f64 | pressure_obs 8×f64 |
//                            pressure_des 8×f64 | valve 8×f64
//   CommandPacket  80 bytes  magic u32 | version u8 | msg_type u8 = 0x02 | mode u8 |
//                            pad u8 = 0 | seq u64 | targets 8×f64

#include <array>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <vector>

#include "pamsim/error.hpp"
#include "pamsim/simulator.hpp"

namespace pamsim::protocol {

inline constexpr std::uint32_t kMagic = 0x50414D32;  // "2MAP" on the wire
inline constexpr std::uint8_t kVersion = 1;
inline constexpr std::uint8_t kStateType = 0x01;
inline constexpr std::uint8_t kCommandType = 0x02;
inline constexpr std::size_t kStateSize = 280;
inline constexpr std::size_t kCommandSize = 80;

enum class ErrorCode : std::uint8_t {
  Ok = 0,
  Watchdog = 1,
  ModeMismatch = 2,
  IntegrationDiverged = 3,
  MalformedCommand = 4,
};

struct StatePacket {
  std::uint8_t mode = 0;
  std::uint8_t error_code = 0;
  std::uint64_t seq = 0;
  std::uint64_t timestamp_ns = 0;
  std::array<double, kNumJoints> joint_pos{};
  std::array<double, kNumJoints> joint_vel{};
  std::array<double, kNumMuscles> pressure_obs{};
  std::array<double, kNumMuscles> pressure_des{};
  std::array<double, kNumMuscles> valve{};

  // Compares bit patterns so NaN payloads round-trip as equal.
  friend bool operator==(const StatePacket& a, const StatePacket& b) {
    return a.mode == b.mode && a.error_code == b.error_code && a.seq == b.seq &&
           a.timestamp_ns == b.timestamp_ns && bits_equal(a.joint_pos, b.joint_pos) &&
           bits_equal(a.joint_vel, b.joint_vel) && bits_equal(a.pressure_obs, b.pressure_obs) &&
           bits_equal(a.pressure_des, b.pressure_des) && bits_equal(a.valve, b.valve);
  }

 private:
  template <std::size_t N>
  static bool bits_equal(const std::array<double, N>& x, const std::array<double, N>& y) {
    return std::memcmp(x.data(), y.data(), sizeof(double) * N) == 0;
  }
};

struct CommandPacket {
  std::uint8_t mode = 0;
  std::uint64_t seq = 0;
  std::array<double, kNumMuscles> targets{};

  friend bool operator==(const CommandPacket& a, const CommandPacket& b) {
    return a.mode == b.mode && a.seq == b.seq &&
           std::memcmp(a.targets.data(), b.targets.data(), sizeof(double) * kNumMuscles) == 0;
  }

  ControlMode control_mode() const { return static_cast<ControlMode>(mode); }
  Command to_command() const { return Command{control_mode(), targets}; }
  static CommandPacket from_command(const Command& cmd, std::uint64_t seq) {
    return CommandPacket{static_cast<std::uint8_t>(cmd.mode), seq, cmd.targets};
  }
};

namespace detail {

class Writer {
 public:
  explicit Writer(std::span<std::byte> out) : out_(out) {}
  void u8(std::uint8_t v) { out_[pos_++] = static_cast<std::byte>(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  template <std::size_t N>
  void f64s(const std::array<double, N>& values) {
    for (double v : values) f64(v);
  }
  std::size_t written() const { return pos_; }

 private:
  std::span<std::byte> out_;
  std::size_t pos_ = 0;
};

class Reader {
 public:
  explicit Reader(std::span<const std::byte> in) : in_(in) {}
  std::uint8_t u8() { return static_cast<std::uint8_t>(in_[pos_++]); }
  std::uint32_t u32() {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(u8()) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(u8()) << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  template <std::size_t N>
  void f64s(std::array<double, N>& values) {
    for (double& v : values) v = f64();
  }

 private:
  std::span<const std::byte> in_;
  std::size_t pos_ = 0;
};

inline void check_header(Reader& r, std::size_t size, std::size_t expected, std::uint8_t type) {
  if (size != expected) {
    throw Error(ErrorKind::Framing, "expected " + std::to_string(expected) + " bytes, got " + std::to_string(size));
  }
  if (r.u32() != kMagic) throw Error(ErrorKind::Protocol, "bad magic");
  if (r.u8() != kVersion) throw Error(ErrorKind::Version, "unsupported protocol version");
  if (r.u8() != type) throw Error(ErrorKind::Protocol, "unexpected message type");
}

}  // namespace detail

inline std::array<std::byte, kStateSize> encode_state(const StatePacket& p) {
  std::array<std::byte, kStateSize> out{};
  detail::Writer w(out);
  w.u32(kMagic);
  w.u8(kVersion);
  w.u8(kStateType);
  w.u8(p.mode);
  w.u8(p.error_code);
  w.u64(p.seq);
  w.u64(p.timestamp_ns);
  w.f64s(p.joint_pos);
  w.f64s(p.joint_vel);
  w.f64s(p.pressure_obs);
  w.f64s(p.pressure_des);
  w.f64s(p.valve);
  return out;
}

inline StatePacket decode_state(std::span<const std::byte> bytes) {
  detail::Reader r(bytes);
  detail::check_header(r, bytes.size(), kStateSize, kStateType);
  StatePacket p;
  p.mode = r.u8();
  p.error_code = r.u8();
  p.seq = r.u64();
  p.timestamp_ns = r.u64();
  r.f64s(p.joint_pos);
  r.f64s(p.joint_vel);
  r.f64s(p.pressure_obs);
  r.f64s(p.pressure_des);
  r.f64s(p.valve);
  return p;
}

inline std::array<std::byte, kCommandSize> encode_command(const CommandPacket& p) {
  std::array<std::byte, kCommandSize> out{};
  detail::Writer w(out);
  w.u32(kMagic);
  w.u8(kVersion);
  w.u8(kCommandType);
  w.u8(p.mode);
  w.u8(0);
  w.u64(p.seq);
  w.f64s(p.targets);
  return out;
}

inline CommandPacket decode_command(std::span<const std::byte> bytes) {
  detail::Reader r(bytes);
  detail::check_header(r, bytes.size(), kCommandSize, kCommandType);
  CommandPacket p;
  p.mode = r.u8();
  const std::uint8_t pad = r.u8();
  p.seq = r.u64();
  r.f64s(p.targets);
  if (p.mode > 1) throw Error(ErrorKind::Protocol, "unknown control mode");
  if (pad != 0) throw Error(ErrorKind::Protocol, "nonzero pad byte");
  for (double t : p.targets) {
    if (!std::isfinite(t)) throw Error(ErrorKind::Protocol, "non-finite target");
  }
  if (p.control_mode() == ControlMode::PositionTarget) {
    for (std::size_t i = kNumJoints; i < kNumMuscles; ++i) {
      if (p.targets[i] != 0.0) throw Error(ErrorKind::Protocol, "position command with nonzero tail");
    }
  }
  return p;
}

// Rejects a well-formed command whose mode differs from the session's.
inline void check_session_mode(const CommandPacket& p, ControlMode session_mode) {
  if (p.control_mode() != session_mode) throw Error(ErrorKind::ModeMismatch, "command mode differs from session mode");
}

inline StatePacket make_state_packet(const ArmState& s, const MuscleParams& mp, ControlMode mode,
                                     std::uint64_t seq, ErrorCode error) {
  StatePacket p;
  p.mode = static_cast<std::uint8_t>(mode);
  p.error_code = static_cast<std::uint8_t>(error);
  p.seq = seq;
  p.timestamp_ns = s.time_ns;
  for (std::size_t j = 0; j < kNumJoints; ++j) {
    p.joint_pos[j] = s.joints[j].angle;
    p.joint_vel[j] = s.joints[j].velocity;
  }
  for (std::size_t m = 0; m < kNumMuscles; ++m) {
    p.pressure_obs[m] = s.muscle(m).pressure_obs;
    p.pressure_des[m] = s.muscle(m).pressure_des;
    p.valve[m] = valve_position(s.muscle(m), mp);
  }
  return p;
}

}  // namespace pamsim::protocol
