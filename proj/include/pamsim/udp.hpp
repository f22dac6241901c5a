#pragma once

// Minimal RAII wrapper over an IPv4 POSIX datagram socket.

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "pamsim/error.hpp"

namespace pamsim::net {

struct Endpoint {
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;

  // Accepts "host:port"; an empty host means all interfaces.
  static Endpoint parse(const std::string& text) {
    const auto colon = text.rfind(':');
    if (colon == std::string::npos) throw Error(ErrorKind::Config, "expected host:port, got '" + text + "'");
    Endpoint ep;
    ep.host = text.substr(0, colon);
    const std::string port = text.substr(colon + 1);
    try {
      std::size_t used = 0;
      const int value = std::stoi(port, &used);
      if (used != port.size() || value < 0 || value > 65535) throw std::out_of_range(port);
      ep.port = static_cast<std::uint16_t>(value);
    } catch (const std::exception&) {
      throw Error(ErrorKind::Config, "invalid port in '" + text + "'");
    }
    if (ep.host.empty()) ep.host = "0.0.0.0";
    return ep;
  }

  sockaddr_in resolve() const {
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(port);
    if (inet_pton(AF_INET, host.c_str(), &addr.sin_addr) == 1) return addr;
    addrinfo hints{};
    hints.ai_family = AF_INET;
    hints.ai_socktype = SOCK_DGRAM;
    addrinfo* found = nullptr;
    if (getaddrinfo(host.c_str(), nullptr, &hints, &found) != 0 || found == nullptr) {
      throw Error(ErrorKind::Io, "cannot resolve host '" + host + "'");
    }
    addr.sin_addr = reinterpret_cast<sockaddr_in*>(found->ai_addr)->sin_addr;
    freeaddrinfo(found);
    return addr;
  }

  std::string to_string() const { return host + ":" + std::to_string(port); }
};

inline bool same_address(const sockaddr_in& a, const sockaddr_in& b) {
  return a.sin_addr.s_addr == b.sin_addr.s_addr && a.sin_port == b.sin_port;
}

struct Datagram {
  std::vector<std::byte> bytes;
  sockaddr_in from{};
};

class UdpSocket {
 public:
  UdpSocket() : fd_(::socket(AF_INET, SOCK_DGRAM, 0)) {
    if (fd_ < 0) throw Error(ErrorKind::Io, std::string("socket: ") + std::strerror(errno));
  }

  static UdpSocket bound(const Endpoint& ep) {
    UdpSocket s;
    const int one = 1;
    ::setsockopt(s.fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    // Unpaced senders burst; the kernel clamps this to net.core.rmem_max.
    s.set_receive_buffer(4 << 20);
    const sockaddr_in addr = ep.resolve();
    if (::bind(s.fd_, reinterpret_cast<const sockaddr*>(&addr), sizeof addr) != 0) {
      throw Error(ErrorKind::Io, "bind " + ep.to_string() + ": " + std::strerror(errno));
    }
    return s;
  }

  UdpSocket(const UdpSocket&) = delete;
  UdpSocket& operator=(const UdpSocket&) = delete;
  UdpSocket(UdpSocket&& other) noexcept : fd_(std::exchange(other.fd_, -1)) {}
  UdpSocket& operator=(UdpSocket&& other) noexcept {
    if (this != &other) {
      close();
      fd_ = std::exchange(other.fd_, -1);
    }
    return *this;
  }
  ~UdpSocket() { close(); }

  std::uint16_t local_port() const {
    sockaddr_in addr{};
    socklen_t len = sizeof addr;
    ::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len);
    return ntohs(addr.sin_port);
  }

  // Returns false on a transient send failure; the caller decides whether to retry.
  bool send_to(std::span<const std::byte> bytes, const sockaddr_in& to) const {
    const auto n = ::sendto(fd_, bytes.data(), bytes.size(), 0, reinterpret_cast<const sockaddr*>(&to), sizeof to);
    return n == static_cast<ssize_t>(bytes.size());
  }

  // Waits up to `timeout` for one datagram. A zero timeout polls.
  std::optional<Datagram> receive(std::chrono::milliseconds timeout) const {
    pollfd pfd{fd_, POLLIN, 0};
    const int ready = ::poll(&pfd, 1, static_cast<int>(timeout.count()));
    if (ready <= 0) return std::nullopt;
    Datagram d;
    d.bytes.resize(kMaxDatagram);
    socklen_t len = sizeof d.from;
    const auto n = ::recvfrom(fd_, d.bytes.data(), d.bytes.size(), 0, reinterpret_cast<sockaddr*>(&d.from), &len);
    if (n < 0) return std::nullopt;
    d.bytes.resize(static_cast<std::size_t>(n));
    return d;
  }

  void set_receive_buffer(int bytes) const { ::setsockopt(fd_, SOL_SOCKET, SO_RCVBUF, &bytes, sizeof bytes); }

  int native_handle() const { return fd_; }

 private:
  static constexpr std::size_t kMaxDatagram = 65536;

  void close() {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
  }

  int fd_ = -1;
};

}  // namespace pamsim::net
