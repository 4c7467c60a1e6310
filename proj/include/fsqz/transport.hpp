// Copyright 2026 The fsqz Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Length-prefixed message framing over two interchangeable backends: an
// in-process byte pipe and blocking TCP sockets. A frame is a u32
// little-endian byte count followed by that many body bytes.

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <cstring>
#include <deque>
#include <exception>
#include <functional>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "fsqz/error.hpp"

namespace fsqz {

using Bytes = std::vector<std::uint8_t>;

inline constexpr std::size_t kDefaultMaxFrame = std::size_t{256} << 20;
inline constexpr std::size_t kFramePrefixBytes = 4;

struct EndpointCounters {
  std::uint64_t frames_sent = 0;
  std::uint64_t bytes_sent = 0;  // including length prefixes
  std::uint64_t frames_received = 0;
  std::uint64_t bytes_received = 0;

  EndpointCounters& operator+=(const EndpointCounters& o) {
    frames_sent += o.frames_sent;
    bytes_sent += o.bytes_sent;
    frames_received += o.frames_received;
    bytes_received += o.bytes_received;
    return *this;
  }
  bool operator==(const EndpointCounters&) const = default;
};

/// One end of a message channel. Not safe for concurrent use; may be moved
/// between threads.
class Endpoint {
 public:
  explicit Endpoint(std::size_t max_frame) : max_frame_(max_frame) {}
  virtual ~Endpoint() = default;
  Endpoint(const Endpoint&) = delete;
  Endpoint& operator=(const Endpoint&) = delete;

  /// Writes exactly one frame.
  void send_message(std::span<const std::uint8_t> body) {
    if (body.size() > max_frame_)
      throw FrameSizeError("frame of " + std::to_string(body.size()) + " bytes exceeds limit " + std::to_string(max_frame_));
    Bytes frame(kFramePrefixBytes + body.size());
    const auto len = static_cast<std::uint32_t>(body.size());
    for (std::size_t i = 0; i < 4; ++i) frame[i] = static_cast<std::uint8_t>(len >> (8 * i));
    std::copy(body.begin(), body.end(), frame.begin() + kFramePrefixBytes);
    write_all(frame);
    counters_.frames_sent += 1;
    counters_.bytes_sent += frame.size();
  }

  /// Blocks for one full frame. Throws ConnectionClosed on a clean close at
  /// a frame boundary and TruncationError on a close mid-frame.
  Bytes recv_message() {
    std::uint8_t prefix[kFramePrefixBytes];
    const std::size_t got = read_exact(prefix);
    if (got == 0) throw ConnectionClosed("peer closed the connection");
    if (got < kFramePrefixBytes) throw TruncationError("peer closed inside a length prefix");
    std::uint32_t len = 0;
    for (std::size_t i = 0; i < 4; ++i) len |= std::uint32_t{prefix[i]} << (8 * i);
    if (len > max_frame_) {
      close();
      throw FrameSizeError("incoming frame of " + std::to_string(len) + " bytes exceeds limit " + std::to_string(max_frame_));
    }
    Bytes body(len);
    if (read_exact(body) < len)
      throw TruncationError("peer closed after " + std::to_string(len) + "-byte frame was announced");
    counters_.frames_received += 1;
    counters_.bytes_received += kFramePrefixBytes + len;
    return body;
  }

  virtual void close() = 0;

  const EndpointCounters& counters() const { return counters_; }
  std::size_t max_frame() const { return max_frame_; }

 protected:
  virtual void write_all(std::span<const std::uint8_t> bytes) = 0;
  /// Fills `out` unless the peer closes first; returns the bytes read.
  virtual std::size_t read_exact(std::span<std::uint8_t> out) = 0;

 private:
  std::size_t max_frame_;
  EndpointCounters counters_;
};

// ---------------------------------------------------------------------------
// In-process backend

namespace detail {

class BytePipe {
 public:
  void write(std::span<const std::uint8_t> bytes) {
    {
      std::lock_guard lock(mu_);
      if (closed_) throw TransportError("write to closed in-process channel");
      buf_.insert(buf_.end(), bytes.begin(), bytes.end());
    }
    cv_.notify_all();
  }

  std::size_t read(std::span<std::uint8_t> out) {
    std::size_t got = 0;
    std::unique_lock lock(mu_);
    while (got < out.size()) {
      cv_.wait(lock, [&] { return !buf_.empty() || closed_; });
      if (buf_.empty()) break;
      const std::size_t n = std::min(out.size() - got, buf_.size());
      std::copy_n(buf_.begin(), n, out.begin() + static_cast<std::ptrdiff_t>(got));
      buf_.erase(buf_.begin(), buf_.begin() + static_cast<std::ptrdiff_t>(n));
      got += n;
    }
    return got;
  }

  void close() {
    {
      std::lock_guard lock(mu_);
      closed_ = true;
    }
    cv_.notify_all();
  }

  bool closed() const {
    std::lock_guard lock(mu_);
    return closed_;
  }

 private:
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::deque<std::uint8_t> buf_;
  bool closed_ = false;
};

}  // namespace detail

class InProcEndpoint final : public Endpoint {
 public:
  InProcEndpoint(std::shared_ptr<detail::BytePipe> out, std::shared_ptr<detail::BytePipe> in, std::size_t max_frame)
      : Endpoint(max_frame), out_(std::move(out)), in_(std::move(in)) {}
  ~InProcEndpoint() override { close(); }

  void close() override {
    out_->close();
    in_->close();
  }

  /// Raw write below the framing layer, for exercising malformed streams.
  void write_raw(std::span<const std::uint8_t> bytes) { out_->write(bytes); }
  std::size_t read_raw(std::span<std::uint8_t> out) { return in_->read(out); }

 protected:
  void write_all(std::span<const std::uint8_t> bytes) override { out_->write(bytes); }
  std::size_t read_exact(std::span<std::uint8_t> out) override { return in_->read(out); }

 private:
  std::shared_ptr<detail::BytePipe> out_;
  std::shared_ptr<detail::BytePipe> in_;
};

inline std::pair<std::unique_ptr<InProcEndpoint>, std::unique_ptr<InProcEndpoint>> make_inproc_pair(
    std::size_t max_frame = kDefaultMaxFrame) {
  auto a_to_b = std::make_shared<detail::BytePipe>();
  auto b_to_a = std::make_shared<detail::BytePipe>();
  return {std::make_unique<InProcEndpoint>(a_to_b, b_to_a, max_frame),
          std::make_unique<InProcEndpoint>(b_to_a, a_to_b, max_frame)};
}

// ---------------------------------------------------------------------------
// TCP backend

struct SocketAddress {
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;

  /// "host:port"; a bare ":port" or "port" binds/connects to loopback.
  static SocketAddress parse(const std::string& text) {
    SocketAddress a;
    const auto colon = text.rfind(':');
    std::string port_text = text;
    if (colon != std::string::npos) {
      if (colon > 0) a.host = text.substr(0, colon);
      port_text = text.substr(colon + 1);
    }
    try {
      std::size_t used = 0;
      const unsigned long p = std::stoul(port_text, &used);
      if (used != port_text.size() || p > 65535) throw std::out_of_range("port");
      a.port = static_cast<std::uint16_t>(p);
    } catch (const std::exception&) {
      throw ConfigError("invalid address '" + text + "' (expected host:port)");
    }
    return a;
  }

  std::string str() const { return host + ":" + std::to_string(port); }
};

namespace detail {

inline sockaddr_in resolve(const SocketAddress& addr) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (getaddrinfo(addr.host.c_str(), nullptr, &hints, &res) != 0 || res == nullptr)
    throw TransportError("cannot resolve host " + addr.host);
  sockaddr_in sa{};
  std::memcpy(&sa, res->ai_addr, sizeof(sa));
  freeaddrinfo(res);
  sa.sin_port = htons(addr.port);
  return sa;
}

class Socket {
 public:
  Socket() = default;
  explicit Socket(int fd) : fd_(fd) {}
  ~Socket() { reset(); }
  Socket(Socket&& o) noexcept : fd_(std::exchange(o.fd_, -1)) {}
  Socket& operator=(Socket&& o) noexcept {
    if (this != &o) {
      reset();
      fd_ = std::exchange(o.fd_, -1);
    }
    return *this;
  }

  int fd() const { return fd_; }
  bool valid() const { return fd_ >= 0; }
  void reset() {
    if (fd_ >= 0) ::close(std::exchange(fd_, -1));
  }
  void shutdown_both() {
    if (fd_ >= 0) ::shutdown(fd_, SHUT_RDWR);
  }

 private:
  int fd_ = -1;
};

}  // namespace detail

class TcpEndpoint final : public Endpoint {
 public:
  TcpEndpoint(detail::Socket sock, std::size_t max_frame) : Endpoint(max_frame), sock_(std::move(sock)) {
    int one = 1;
    ::setsockopt(sock_.fd(), IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
  }
  ~TcpEndpoint() override { close(); }

  void close() override {
    sock_.shutdown_both();
    sock_.reset();
  }

 protected:
  void write_all(std::span<const std::uint8_t> bytes) override {
    if (!sock_.valid()) throw TransportError("send on closed connection");
    std::size_t off = 0;
    while (off < bytes.size()) {
      const ssize_t n = ::send(sock_.fd(), bytes.data() + off, bytes.size() - off, MSG_NOSIGNAL);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw TransportError(std::string("send failed: ") + std::strerror(errno));
      }
      off += static_cast<std::size_t>(n);
    }
  }

  std::size_t read_exact(std::span<std::uint8_t> out) override {
    if (!sock_.valid()) throw TransportError("recv on closed connection");
    std::size_t off = 0;
    while (off < out.size()) {
      const ssize_t n = ::recv(sock_.fd(), out.data() + off, out.size() - off, 0);
      if (n == 0) break;
      if (n < 0) {
        if (errno == EINTR) continue;
        if (errno == ECONNRESET) break;
        throw TransportError(std::string("recv failed: ") + std::strerror(errno));
      }
      off += static_cast<std::size_t>(n);
    }
    return off;
  }

 private:
  detail::Socket sock_;
};

class TcpListener {
 public:
  explicit TcpListener(const SocketAddress& addr, std::size_t max_frame = kDefaultMaxFrame) : max_frame_(max_frame) {
    sock_ = detail::Socket(::socket(AF_INET, SOCK_STREAM, 0));
    if (!sock_.valid()) throw TransportError("socket() failed");
    int one = 1;
    ::setsockopt(sock_.fd(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
    sockaddr_in sa = detail::resolve(addr);
    if (::bind(sock_.fd(), reinterpret_cast<sockaddr*>(&sa), sizeof(sa)) != 0)
      throw TransportError("bind " + addr.str() + " failed: " + std::strerror(errno));
    if (::listen(sock_.fd(), 128) != 0) throw TransportError("listen failed");
    socklen_t len = sizeof(sa);
    ::getsockname(sock_.fd(), reinterpret_cast<sockaddr*>(&sa), &len);
    address_ = SocketAddress{addr.host, ntohs(sa.sin_port)};
  }

  const SocketAddress& address() const { return address_; }

  std::unique_ptr<TcpEndpoint> accept() {
    for (;;) {
      const int fd = ::accept(sock_.fd(), nullptr, nullptr);
      if (fd >= 0) return std::make_unique<TcpEndpoint>(detail::Socket(fd), max_frame_);
      if (errno != EINTR) throw TransportError(std::string("accept failed: ") + std::strerror(errno));
    }
  }

  void close() {
    sock_.shutdown_both();
    sock_.reset();
  }

 private:
  detail::Socket sock_;
  SocketAddress address_;
  std::size_t max_frame_;
};

/// Connects with bounded exponential backoff between attempts.
inline std::unique_ptr<TcpEndpoint> connect(const SocketAddress& addr, int attempts = 3,
                                            std::chrono::milliseconds backoff = std::chrono::milliseconds(50),
                                            std::size_t max_frame = kDefaultMaxFrame) {
  const sockaddr_in sa = detail::resolve(addr);
  std::string last_error;
  for (int attempt = 0; attempt < attempts; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(backoff);
      backoff *= 2;
    }
    detail::Socket sock(::socket(AF_INET, SOCK_STREAM, 0));
    if (!sock.valid()) throw TransportError("socket() failed");
    if (::connect(sock.fd(), reinterpret_cast<const sockaddr*>(&sa), sizeof(sa)) == 0)
      return std::make_unique<TcpEndpoint>(std::move(sock), max_frame);
    last_error = std::strerror(errno);
  }
  throw TransportError("connect " + addr.str() + " failed after " + std::to_string(attempts) + " attempts: " + last_error);
}

struct ServeReport {
  std::size_t accepted = 0;
  std::size_t failed = 0;  // handlers that threw
  EndpointCounters counters;
  std::vector<std::string> errors;
};

/// Accepts `connections` clients and runs `handler` for each on its own
/// thread. Returns once every handler has finished and its endpoint is closed.
inline ServeReport serve(TcpListener& listener, std::size_t connections, const std::function<void(Endpoint&)>& handler) {
  ServeReport report;
  std::vector<std::unique_ptr<TcpEndpoint>> endpoints;
  std::vector<std::string> errors(connections);
  std::vector<std::jthread> workers;
  for (std::size_t i = 0; i < connections; ++i) {
    endpoints.push_back(listener.accept());
    ++report.accepted;
    workers.emplace_back([&, i, ep = endpoints.back().get()] {
      try {
        handler(*ep);
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
      ep->close();
    });
  }
  workers.clear();
  for (std::size_t i = 0; i < connections; ++i) {
    report.counters += endpoints[i]->counters();
    if (!errors[i].empty()) {
      ++report.failed;
      report.errors.push_back(errors[i]);
    }
  }
  return report;
}

}  // namespace fsqz
