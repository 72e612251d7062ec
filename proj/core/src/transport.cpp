#include "fedvalue/transport.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <charconv>
#include <cstring>

namespace fedvalue {

// ---------------- InProcessTransport ----------------

InProcessTransport::Channel& InProcessTransport::channel(RoleId from,
                                                         RoleId to) {
  std::lock_guard lock(table_mutex_);
  auto& slot = channels_[{from, to}];
  if (!slot) slot = std::make_unique<Channel>();
  return *slot;
}

void InProcessTransport::send(RoleId from, RoleId to,
                              const ProtocolMessage& msg) {
  {
    std::lock_guard lock(table_mutex_);
    auto it = captured_.find(to);
    if (it != captured_.end()) {
      auto frame = encode_frame(msg);
      it->second.insert(it->second.end(), frame.begin(), frame.end());
    }
  }
  Channel& ch = channel(from, to);
  {
    std::lock_guard lock(ch.mutex);
    ch.queue.push_back(msg);
  }
  ch.cv.notify_one();
}

ProtocolMessage InProcessTransport::recv(RoleId self, RoleId from) {
  Channel& ch = channel(from, self);
  std::unique_lock lock(ch.mutex);
  ch.cv.wait(lock, [&] { return !ch.queue.empty(); });
  ProtocolMessage msg = std::move(ch.queue.front());
  ch.queue.pop_front();
  return msg;
}

void InProcessTransport::capture_traffic_to(RoleId role) {
  std::lock_guard lock(table_mutex_);
  captured_.try_emplace(role);
}

std::vector<std::uint8_t> InProcessTransport::captured_bytes(
    RoleId role) const {
  std::lock_guard lock(table_mutex_);
  auto it = captured_.find(role);
  return it == captured_.end() ? std::vector<std::uint8_t>{} : it->second;
}

// ---------------- socket helpers ----------------

namespace {

void send_all(int fd, const std::uint8_t* data, std::size_t len) {
  while (len > 0) {
    ssize_t n = ::send(fd, data, len, MSG_NOSIGNAL);
    if (n <= 0) throw TransportError("socket send failed");
    data += n;
    len -= static_cast<std::size_t>(n);
  }
}

bool recv_all(int fd, std::uint8_t* data, std::size_t len) {
  while (len > 0) {
    ssize_t n = ::recv(fd, data, len, 0);
    if (n <= 0) return false;
    data += n;
    len -= static_cast<std::size_t>(n);
  }
  return true;
}

std::uint32_t read_be32(const std::uint8_t* p) {
  return (std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) |
         (std::uint32_t(p[2]) << 8) | std::uint32_t(p[3]);
}

// envelope: 4B BE length of (from + to + frame), 2B from, 2B to, frame
std::vector<std::uint8_t> make_envelope(RoleId from, RoleId to,
                                        const std::vector<std::uint8_t>& frame) {
  std::vector<std::uint8_t> env;
  const std::uint32_t body = static_cast<std::uint32_t>(4 + frame.size());
  env.reserve(4 + body);
  for (int i = 3; i >= 0; --i) env.push_back((body >> (8 * i)) & 0xff);
  env.push_back((from >> 8) & 0xff);
  env.push_back(from & 0xff);
  env.push_back((to >> 8) & 0xff);
  env.push_back(to & 0xff);
  env.insert(env.end(), frame.begin(), frame.end());
  return env;
}

bool read_envelope(int fd, RoleId& from, RoleId& to,
                   std::vector<std::uint8_t>& frame) {
  std::uint8_t head[4];
  if (!recv_all(fd, head, 4)) return false;
  const std::uint32_t body = read_be32(head);
  if (body < 4 || body > (64u << 20)) return false;
  std::vector<std::uint8_t> buf(body);
  if (!recv_all(fd, buf.data(), body)) return false;
  from = static_cast<RoleId>((buf[0] << 8) | buf[1]);
  to = static_cast<RoleId>((buf[2] << 8) | buf[3]);
  frame.assign(buf.begin() + 4, buf.end());
  return true;
}

}  // namespace

// ---------------- TcpHub ----------------

TcpHub::~TcpHub() { stop(); }

std::uint16_t TcpHub::start(const std::string& host, std::uint16_t port) {
  listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (listen_fd_ < 0) throw TransportError("socket() failed");
  int one = 1;
  ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));

  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
    throw TransportError("bad hub address: " + host);
  }
  if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
    throw TransportError("bind failed on " + host);
  }
  if (::listen(listen_fd_, 32) != 0) throw TransportError("listen failed");

  sockaddr_in bound{};
  socklen_t len = sizeof(bound);
  ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&bound), &len);

  accept_thread_ = std::thread([this] { accept_loop(); });
  return ntohs(bound.sin_port);
}

void TcpHub::stop() {
  {
    std::lock_guard lock(mutex_);
    if (stopping_) return;
    stopping_ = true;
  }
  if (listen_fd_ >= 0) {
    ::shutdown(listen_fd_, SHUT_RDWR);
    ::close(listen_fd_);
    listen_fd_ = -1;
  }
  {
    std::lock_guard lock(mutex_);
    for (auto& [role, fd] : role_fds_) {
      ::shutdown(fd, SHUT_RDWR);
      ::close(fd);
    }
    role_fds_.clear();
  }
  if (accept_thread_.joinable()) accept_thread_.join();
  for (auto& t : client_threads_) {
    if (t.joinable()) t.join();
  }
  client_threads_.clear();
}

void TcpHub::accept_loop() {
  while (true) {
    int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) return;
    int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
    std::lock_guard lock(mutex_);
    if (stopping_) {
      ::close(fd);
      return;
    }
    client_threads_.emplace_back([this, fd] { client_loop(fd); });
  }
}

void TcpHub::client_loop(int fd) {
  // First envelope must be a Hello carrying the client's role.
  RoleId from, to;
  std::vector<std::uint8_t> frame;
  if (!read_envelope(fd, from, to, frame)) {
    ::close(fd);
    return;
  }
  try {
    ProtocolMessage hello = decode_frame(frame);
    if (hello.tag != MsgTag::Hello || hello.payload.size() != 1 ||
        hello.payload[0] != kProtocolVersion) {
      ::close(fd);
      return;
    }
  } catch (const ProtocolError&) {
    ::close(fd);
    return;
  }
  {
    std::lock_guard lock(mutex_);
    role_fds_[from] = fd;
  }

  while (read_envelope(fd, from, to, frame)) {
    int dest = -1;
    for (int wait_ms = 0; wait_ms < 5000; wait_ms += 10) {
      {
        std::lock_guard lock(mutex_);
        auto it = role_fds_.find(to);
        if (it != role_fds_.end()) {
          dest = it->second;
          break;
        }
        if (stopping_) return;
      }
      // destination not attached yet
      std::this_thread::sleep_for(std::chrono::milliseconds(10));
    }
    if (dest < 0) return;
    auto env = make_envelope(from, to, frame);
    std::lock_guard lock(mutex_);
    try {
      send_all(dest, env.data(), env.size());
    } catch (const TransportError&) {
      return;
    }
  }
}

// ---------------- TcpRoleClient ----------------

TcpRoleClient::TcpRoleClient(const std::string& host, std::uint16_t port,
                             RoleId self)
    : self_(self) {
  fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd_ < 0) throw TransportError("socket() failed");
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
    throw TransportError("bad address: " + host);
  }
  if (::connect(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
    ::close(fd_);
    throw TransportError("connect failed to " + host + ":" +
                         std::to_string(port));
  }
  int one = 1;
  ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));

  ProtocolMessage hello{MsgTag::Hello, 0, {kProtocolVersion}};
  auto env = make_envelope(self_, self_, encode_frame(hello));
  send_all(fd_, env.data(), env.size());

  reader_ = std::thread([this] { reader_loop(); });
}

TcpRoleClient::~TcpRoleClient() {
  ::shutdown(fd_, SHUT_RDWR);
  if (reader_.joinable()) reader_.join();
  ::close(fd_);
}

void TcpRoleClient::reader_loop() {
  RoleId from, to;
  std::vector<std::uint8_t> frame;
  while (read_envelope(fd_, from, to, frame)) {
    try {
      ProtocolMessage msg = decode_frame(frame);
      {
        std::lock_guard lock(mutex_);
        inbox_[from].push_back(std::move(msg));
      }
      cv_.notify_all();
    } catch (const ProtocolError&) {
      break;
    }
  }
  {
    std::lock_guard lock(mutex_);
    closed_ = true;
  }
  cv_.notify_all();
}

void TcpRoleClient::send(RoleId from, RoleId to, const ProtocolMessage& msg) {
  if (from != self_) throw TransportError("client can only send as its own role");
  auto env = make_envelope(from, to, encode_frame(msg));
  send_all(fd_, env.data(), env.size());
}

ProtocolMessage TcpRoleClient::recv(RoleId self, RoleId from) {
  if (self != self_) throw TransportError("client can only receive as its own role");
  std::unique_lock lock(mutex_);
  cv_.wait(lock, [&] { return closed_ || !inbox_[from].empty(); });
  auto& q = inbox_[from];
  if (q.empty()) throw TransportError("connection closed");
  ProtocolMessage msg = std::move(q.front());
  q.pop_front();
  return msg;
}

std::pair<std::string, std::uint16_t> parse_address(const std::string& addr) {
  auto colon = addr.rfind(':');
  if (colon == std::string::npos || colon == 0 || colon + 1 == addr.size()) {
    throw TransportError("expected host:port, got " + addr);
  }
  const std::string host = addr.substr(0, colon);
  const std::string port_str = addr.substr(colon + 1);
  int port = 0;
  auto [ptr, ec] = std::from_chars(port_str.data(),
                                   port_str.data() + port_str.size(), port);
  if (ec != std::errc() || ptr != port_str.data() + port_str.size()) {
    throw TransportError("invalid port in " + addr);
  }
  if (port < 0 || port > 65535) throw TransportError("port out of range");
  return {host, static_cast<std::uint16_t>(port)};
}

}  // namespace fedvalue
