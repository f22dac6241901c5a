#pragma once

// Append-only 500 Hz proprioceptive log.
//
//   header (16 B)  magic u32 = 0x50414D44 | version u8 | sample_rate u16 |
//                  num_muscles u8 | num_joints u8 | reserved 7 B
//   record (104 B) timestamp_ns u64 | pressure_obs 8×f32 | pressure_des 8×f32 |
//                  joint_pos 4×f32 | joint_vel 4×f32
//
// All fields little-endian. A record whose timestamp has every bit set marks
// a file closed after an aborted run.

#include <array>
#include <bit>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <span>
#include <type_traits>
#include <string>
#include <vector>

#include "pamsim/error.hpp"
#include "pamsim/simulator.hpp"

namespace pamsim::dataset {

inline constexpr std::uint32_t kMagic = 0x50414D44;
inline constexpr std::uint8_t kVersion = 1;
inline constexpr std::size_t kHeaderSize = 16;
inline constexpr std::size_t kRecordSize = 104;
inline constexpr std::uint64_t kErrorMarker = std::numeric_limits<std::uint64_t>::max();

struct Header {
  std::uint8_t version = kVersion;
  std::uint16_t sample_rate = 500;
  std::uint8_t num_muscles = kNumMuscles;
  std::uint8_t num_joints = kNumJoints;

  friend bool operator==(const Header&, const Header&) = default;
};

struct Record {
  std::uint64_t timestamp_ns = 0;
  std::array<float, kNumMuscles> pressure_obs{};
  std::array<float, kNumMuscles> pressure_des{};
  std::array<float, kNumJoints> joint_pos{};
  std::array<float, kNumJoints> joint_vel{};

  bool is_error_marker() const { return timestamp_ns == kErrorMarker; }

  // Bitwise comparison; the format is required to round-trip exactly.
  friend bool operator==(const Record& a, const Record& b) {
    return a.timestamp_ns == b.timestamp_ns && std::memcmp(&a.pressure_obs, &b.pressure_obs, sizeof a.pressure_obs) == 0 &&
           std::memcmp(&a.pressure_des, &b.pressure_des, sizeof a.pressure_des) == 0 &&
           std::memcmp(&a.joint_pos, &b.joint_pos, sizeof a.joint_pos) == 0 &&
           std::memcmp(&a.joint_vel, &b.joint_vel, sizeof a.joint_vel) == 0;
  }

  static Record error_marker() {
    Record r;
    r.timestamp_ns = kErrorMarker;
    return r;
  }
};

inline Record record_from_state(const ArmState& s) {
  Record r;
  r.timestamp_ns = s.time_ns;
  for (std::size_t m = 0; m < kNumMuscles; ++m) {
    r.pressure_obs[m] = static_cast<float>(s.muscle(m).pressure_obs);
    r.pressure_des[m] = static_cast<float>(s.muscle(m).pressure_des);
  }
  for (std::size_t j = 0; j < kNumJoints; ++j) {
    r.joint_pos[j] = static_cast<float>(s.joints[j].angle);
    r.joint_vel[j] = static_cast<float>(s.joints[j].velocity);
  }
  return r;
}

namespace detail {

template <typename T>
void put_le(std::byte*& out, T value) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                               std::conditional_t<sizeof(T) == 4, std::uint32_t,
                                                  std::conditional_t<sizeof(T) == 2, std::uint16_t, std::uint8_t>>>;
  const U bits = std::bit_cast<U>(value);
  for (std::size_t i = 0; i < sizeof(T); ++i) *out++ = static_cast<std::byte>((bits >> (8 * i)) & 0xff);
}

template <typename T>
T get_le(const std::byte*& in) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                               std::conditional_t<sizeof(T) == 4, std::uint32_t,
                                                  std::conditional_t<sizeof(T) == 2, std::uint16_t, std::uint8_t>>>;
  U bits = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) bits |= static_cast<U>(static_cast<U>(*in++) << (8 * i));
  return std::bit_cast<T>(bits);
}

}  // namespace detail

inline std::array<std::byte, kHeaderSize> encode_header(const Header& h) {
  std::array<std::byte, kHeaderSize> out{};
  std::byte* p = out.data();
  detail::put_le(p, kMagic);
  detail::put_le(p, h.version);
  detail::put_le(p, h.sample_rate);
  detail::put_le(p, h.num_muscles);
  detail::put_le(p, h.num_joints);
  return out;
}

inline Header decode_header(std::span<const std::byte> bytes) {
  if (bytes.size() < kHeaderSize) throw Error(ErrorKind::Format, "file shorter than the dataset header");
  const std::byte* p = bytes.data();
  if (detail::get_le<std::uint32_t>(p) != kMagic) throw Error(ErrorKind::Format, "bad dataset magic");
  Header h;
  h.version = detail::get_le<std::uint8_t>(p);
  h.sample_rate = detail::get_le<std::uint16_t>(p);
  h.num_muscles = detail::get_le<std::uint8_t>(p);
  h.num_joints = detail::get_le<std::uint8_t>(p);
  if (h.version != kVersion) throw Error(ErrorKind::Format, "unsupported dataset version");
  if (h.num_muscles != kNumMuscles || h.num_joints != kNumJoints) {
    throw Error(ErrorKind::Format, "unsupported channel layout");
  }
  return h;
}

inline std::array<std::byte, kRecordSize> encode_record(const Record& r) {
  std::array<std::byte, kRecordSize> out{};
  std::byte* p = out.data();
  detail::put_le(p, r.timestamp_ns);
  for (float v : r.pressure_obs) detail::put_le(p, v);
  for (float v : r.pressure_des) detail::put_le(p, v);
  for (float v : r.joint_pos) detail::put_le(p, v);
  for (float v : r.joint_vel) detail::put_le(p, v);
  return out;
}

inline Record decode_record(std::span<const std::byte> bytes) {
  const std::byte* p = bytes.data();
  Record r;
  r.timestamp_ns = detail::get_le<std::uint64_t>(p);
  for (float& v : r.pressure_obs) v = detail::get_le<float>(p);
  for (float& v : r.pressure_des) v = detail::get_le<float>(p);
  for (float& v : r.joint_pos) v = detail::get_le<float>(p);
  for (float& v : r.joint_vel) v = detail::get_le<float>(p);
  return r;
}

// Single-writer streaming recorder. The header is written on open.
class Writer {
 public:
  explicit Writer(const std::string& path, Header header = {}) : path_(path), out_(path, std::ios::binary | std::ios::trunc) {
    if (!out_) throw Error(ErrorKind::Io, "cannot open " + path + " for writing");
    const auto h = encode_header(header);
    out_.write(reinterpret_cast<const char*>(h.data()), h.size());
  }

  Writer(const Writer&) = delete;
  Writer& operator=(const Writer&) = delete;
  ~Writer() { out_.close(); }

  void append(const Record& r) {
    const auto bytes = encode_record(r);
    out_.write(reinterpret_cast<const char*>(bytes.data()), bytes.size());
    ++count_;
  }
  void append(const ArmState& s) { append(record_from_state(s)); }

  void write_error_marker() {
    append(Record::error_marker());
    flush();
  }

  void flush() {
    out_.flush();
    if (!out_) throw Error(ErrorKind::Io, "write to " + path_ + " failed");
  }

  std::size_t count() const { return count_; }
  const std::string& path() const { return path_; }

 private:
  std::string path_;
  std::ofstream out_;
  std::size_t count_ = 0;
};

struct Contents {
  Header header;
  std::vector<Record> records;
  // Set when the file ended in a partial record; `records` holds every
  // complete one.
  bool truncated = false;
  // Set when the file ends with the error marker (not included in records).
  bool aborted = false;
  std::vector<std::string> warnings;
};

inline Contents decode(std::span<const std::byte> bytes) {
  Contents c;
  c.header = decode_header(bytes);
  const std::size_t body = bytes.size() - kHeaderSize;
  const std::size_t n = body / kRecordSize;
  c.records.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Record r = decode_record(bytes.subspan(kHeaderSize + i * kRecordSize, kRecordSize));
    if (r.is_error_marker()) {
      c.aborted = true;
      if (i + 1 != n) c.warnings.push_back("records after the error marker were ignored");
      break;
    }
    if (!c.records.empty() && r.timestamp_ns <= c.records.back().timestamp_ns) {
      throw Error(ErrorKind::Format, "timestamps not strictly increasing at record " + std::to_string(i));
    }
    c.records.push_back(r);
  }
  if (body % kRecordSize != 0) {
    c.truncated = true;
    c.warnings.push_back("truncated trailing record (" + std::to_string(body % kRecordSize) + " bytes)");
  }
  return c;
}

inline std::vector<std::byte> read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path);
  in.seekg(0, std::ios::end);
  const auto size = static_cast<std::size_t>(in.tellg());
  in.seekg(0);
  std::vector<std::byte> bytes(size);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(size));
  return bytes;
}

inline Contents read(const std::string& path) {
  const auto bytes = read_bytes(path);
  return decode(bytes);
}

inline void write(const std::string& path, std::span<const Record> records, Header header = {}) {
  Writer w(path, header);
  for (const auto& r : records) w.append(r);
  w.flush();
}

}  // namespace pamsim::dataset
