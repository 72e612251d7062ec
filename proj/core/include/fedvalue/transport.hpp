#pragma once

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "fedvalue/wire.hpp"

namespace fedvalue {

/// Role addressing: 0 and 1 are the servers, 2 is the task party (which also
/// orchestrates), 2 + d is data party d.
using RoleId = std::uint16_t;
inline constexpr RoleId kComputationServerRole = 0;
inline constexpr RoleId kValidationServerRole = 1;
inline constexpr RoleId kTaskPartyRole = 2;

inline RoleId party_role(int party_id) {
  return static_cast<RoleId>(2 + party_id);
}

/// Duplex message fabric: one FIFO channel per ordered (from, to) pair.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual void send(RoleId from, RoleId to, const ProtocolMessage& msg) = 0;
  /// Blocks until a message from `from` addressed to `self` arrives.
  virtual ProtocolMessage recv(RoleId self, RoleId from) = 0;
};

/// Lossless in-memory transport; the test default. Optionally captures the
/// encoded frames sent to selected roles so tests can scan traffic.
class InProcessTransport : public Transport {
 public:
  void send(RoleId from, RoleId to, const ProtocolMessage& msg) override;
  ProtocolMessage recv(RoleId self, RoleId from) override;

  void capture_traffic_to(RoleId role);
  /// Concatenated encoded frames sent to `role` since capture was enabled.
  std::vector<std::uint8_t> captured_bytes(RoleId role) const;

 private:
  struct Channel {
    std::deque<ProtocolMessage> queue;
    std::mutex mutex;
    std::condition_variable cv;
  };
  Channel& channel(RoleId from, RoleId to);

  std::map<std::pair<RoleId, RoleId>, std::unique_ptr<Channel>> channels_;
  mutable std::mutex table_mutex_;
  std::map<RoleId, std::vector<std::uint8_t>> captured_;
};

/// Message router for TCP mode. Clients attach with a Hello envelope naming
/// their role; the hub then forwards (from, to, frame) envelopes between
/// them. Envelope layout on the socket: 4-byte big-endian length of the rest,
/// 2-byte from, 2-byte to, then one protocol frame.
class TcpHub {
 public:
  ~TcpHub();

  /// Binds and starts accepting; port 0 picks an ephemeral port. Returns the
  /// bound port.
  std::uint16_t start(const std::string& host, std::uint16_t port);
  void stop();

 private:
  void accept_loop();
  void client_loop(int fd);

  int listen_fd_ = -1;
  std::thread accept_thread_;
  std::vector<std::thread> client_threads_;
  std::map<RoleId, int> role_fds_;
  std::mutex mutex_;
  bool stopping_ = false;
};

/// One role's connection to a TcpHub; implements the Transport interface for
/// that single role.
class TcpRoleClient : public Transport {
 public:
  TcpRoleClient(const std::string& host, std::uint16_t port, RoleId self);
  ~TcpRoleClient() override;

  void send(RoleId from, RoleId to, const ProtocolMessage& msg) override;
  ProtocolMessage recv(RoleId self, RoleId from) override;

 private:
  void reader_loop();

  RoleId self_;
  int fd_ = -1;
  std::thread reader_;
  std::map<RoleId, std::deque<ProtocolMessage>> inbox_;
  std::mutex mutex_;
  std::condition_variable cv_;
  bool closed_ = false;
};

/// Splits "host:port"; throws TransportError on a malformed address.
std::pair<std::string, std::uint16_t> parse_address(const std::string& addr);

}  // namespace fedvalue
