#include "redf/protocol.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <random>
#include <set>

#include "redf/error.hpp"

namespace redf {

namespace {

const std::set<std::string>& known_types() {
  static const std::set<std::string> types = {frame_type::kPublish, frame_type::kFetch,
                                              frame_type::kForecastReq, frame_type::kForecastResp,
                                              frame_type::kError};
  return types;
}

sockaddr_in resolve(const Address& address) {
  sockaddr_in sa{};
  sa.sin_family = AF_INET;
  sa.sin_port = htons(address.port);
  const std::string host = address.host.empty() ? "127.0.0.1" : address.host;
  if (host == "0.0.0.0" || host == "*") {
    sa.sin_addr.s_addr = htonl(INADDR_ANY);
    return sa;
  }
  if (inet_pton(AF_INET, host.c_str(), &sa.sin_addr) == 1) return sa;
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (getaddrinfo(host.c_str(), nullptr, &hints, &res) != 0 || res == nullptr) {
    throw ConnectError("cannot resolve host '" + host + "'");
  }
  sa.sin_addr = reinterpret_cast<sockaddr_in*>(res->ai_addr)->sin_addr;
  freeaddrinfo(res);
  return sa;
}

int remaining_ms(std::chrono::steady_clock::time_point deadline) {
  const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
      deadline - std::chrono::steady_clock::now());
  return left.count() < 0 ? 0 : static_cast<int>(left.count());
}

}  // namespace

std::string encode_frame(const Json& body) {
  const std::string text = body.dump();
  if (text.size() > kMaxFrameBytes) throw ProtocolError("frame_too_large");
  const auto n = static_cast<std::uint32_t>(text.size());
  std::string out;
  out.reserve(4 + text.size());
  out.push_back(static_cast<char>((n >> 24) & 0xFF));
  out.push_back(static_cast<char>((n >> 16) & 0xFF));
  out.push_back(static_cast<char>((n >> 8) & 0xFF));
  out.push_back(static_cast<char>(n & 0xFF));
  out += text;
  return out;
}

Json error_frame(const std::string& id, const std::string& code, const std::string& message) {
  return Json{{"type", frame_type::kError}, {"id", id}, {"code", code}, {"message", message}};
}

void validate_frame(const Json& body) {
  if (!body.is_object()) throw ProtocolError("frame body must be a JSON object");
  if (!body.contains("type") || !body["type"].is_string()) throw ProtocolError("missing string field 'type'");
  if (!body.contains("id") || !body["id"].is_string()) throw ProtocolError("missing string field 'id'");
  if (!known_types().count(body["type"].get<std::string>())) {
    throw ProtocolError("unknown frame type '" + body["type"].get<std::string>() + "'");
  }
}

Address Address::parse(const std::string& text) {
  const auto colon = text.rfind(':');
  if (colon == std::string::npos) throw ConfigError("address '" + text + "' must be host:port");
  Address a;
  if (colon > 0) a.host = text.substr(0, colon);
  const std::string port = text.substr(colon + 1);
  try {
    std::size_t used = 0;
    const int p = std::stoi(port, &used);
    if (used != port.size() || p < 0 || p > 65535) throw std::out_of_range("port");
    a.port = static_cast<std::uint16_t>(p);
  } catch (const std::exception&) {
    throw ConfigError("address '" + text + "' has an invalid port");
  }
  return a;
}

std::string Address::str() const { return host + ":" + std::to_string(port); }

Socket& Socket::operator=(Socket&& other) noexcept {
  if (this != &other) {
    close();
    fd_ = other.release();
  }
  return *this;
}

void Socket::close() noexcept {
  if (fd_ >= 0) {
    ::close(fd_);
    fd_ = -1;
  }
}

void Socket::shutdown() noexcept {
  if (fd_ >= 0) ::shutdown(fd_, SHUT_RDWR);
}

FrameConnection FrameConnection::connect(const Address& address, std::chrono::milliseconds timeout) {
  const sockaddr_in sa = resolve(address);
  Socket s(::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0));
  if (!s.valid()) throw ConnectError(std::string("socket: ") + std::strerror(errno));
  const int flags = fcntl(s.fd(), F_GETFL, 0);
  fcntl(s.fd(), F_SETFL, flags | O_NONBLOCK);
  int rc = ::connect(s.fd(), reinterpret_cast<const sockaddr*>(&sa), sizeof sa);
  if (rc != 0 && errno != EINPROGRESS) {
    throw ConnectError("connect to " + address.str() + ": " + std::strerror(errno));
  }
  if (rc != 0) {
    pollfd pfd{s.fd(), POLLOUT, 0};
    rc = ::poll(&pfd, 1, static_cast<int>(timeout.count()));
    if (rc == 0) throw ConnectError("connect to " + address.str() + " timed out");
    int err = 0;
    socklen_t len = sizeof err;
    getsockopt(s.fd(), SOL_SOCKET, SO_ERROR, &err, &len);
    if (rc < 0 || err != 0) {
      throw ConnectError("connect to " + address.str() + ": " + std::strerror(err != 0 ? err : errno));
    }
  }
  fcntl(s.fd(), F_SETFL, flags);
  const int one = 1;
  setsockopt(s.fd(), IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  return FrameConnection(std::move(s));
}

void FrameConnection::send(const Json& body) {
  const std::string bytes = encode_frame(body);
  std::lock_guard lock(send_mutex_);
  std::size_t off = 0;
  while (off < bytes.size()) {
    const ssize_t n = ::send(socket_.fd(), bytes.data() + off, bytes.size() - off, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw ProtocolError(std::string("send failed: ") + std::strerror(errno));
    }
    off += static_cast<std::size_t>(n);
  }
}

bool FrameConnection::read_exact(char* dst, std::size_t n, std::chrono::steady_clock::time_point deadline,
                                 bool has_deadline, FrameRead::Status& status) {
  std::size_t got = 0;
  while (got < n) {
    pollfd pfd{socket_.fd(), POLLIN, 0};
    const int rc = ::poll(&pfd, 1, has_deadline ? remaining_ms(deadline) : -1);
    if (rc < 0) {
      if (errno == EINTR) continue;
      status = FrameRead::Status::Closed;
      return false;
    }
    if (rc == 0) {
      status = FrameRead::Status::Timeout;
      return false;
    }
    const ssize_t r = ::recv(socket_.fd(), dst + got, n - got, 0);
    if (r <= 0) {
      if (r < 0 && errno == EINTR) continue;
      status = FrameRead::Status::Closed;
      return false;
    }
    got += static_cast<std::size_t>(r);
  }
  return true;
}

FrameRead FrameConnection::receive(std::chrono::milliseconds timeout) {
  const bool has_deadline = timeout.count() >= 0;
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  FrameRead out;
  unsigned char header[4];
  if (!read_exact(reinterpret_cast<char*>(header), 4, deadline, has_deadline, out.status)) return out;
  const std::uint32_t len = (std::uint32_t{header[0]} << 24) | (std::uint32_t{header[1]} << 16) |
                            (std::uint32_t{header[2]} << 8) | std::uint32_t{header[3]};
  if (len > kMaxFrameBytes) {
    out.status = FrameRead::Status::Oversized;
    out.error = "frame of " + std::to_string(len) + " bytes exceeds the 16 MiB limit";
    return out;
  }
  std::string text(len, '\0');
  // Once a header has arrived the body is awaited without the caller's deadline
  // so a slow sender cannot desynchronise the stream.
  if (!read_exact(text.data(), len, deadline, false, out.status)) return out;
  try {
    out.body = Json::parse(text);
  } catch (const Json::parse_error& e) {
    out.status = FrameRead::Status::Malformed;
    out.error = std::string("malformed JSON: ") + e.what();
    return out;
  }
  out.status = FrameRead::Status::Ok;
  return out;
}

void TcpServer::start(const Address& address, Handler handler) {
  if (running_) throw ConfigError("server already running");
  handler_ = std::move(handler);
  const sockaddr_in sa = resolve(address);
  Socket s(::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0));
  if (!s.valid()) throw ConnectError(std::string("socket: ") + std::strerror(errno));
  const int one = 1;
  setsockopt(s.fd(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  if (::bind(s.fd(), reinterpret_cast<const sockaddr*>(&sa), sizeof sa) != 0) {
    throw ConnectError("bind " + address.str() + ": " + std::strerror(errno));
  }
  if (::listen(s.fd(), 128) != 0) throw ConnectError(std::string("listen: ") + std::strerror(errno));
  sockaddr_in bound{};
  socklen_t len = sizeof bound;
  getsockname(s.fd(), reinterpret_cast<sockaddr*>(&bound), &len);
  port_ = ntohs(bound.sin_port);
  listener_ = std::move(s);
  running_ = true;
  accept_thread_ = std::thread([this] { accept_loop(); });
}

void TcpServer::accept_loop() {
  while (running_) {
    pollfd pfd{listener_.fd(), POLLIN, 0};
    const int rc = ::poll(&pfd, 1, 100);
    if (rc <= 0) continue;
    const int fd = ::accept4(listener_.fd(), nullptr, nullptr, SOCK_CLOEXEC);
    if (fd < 0) continue;
    const int one = 1;
    setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    auto conn = std::make_shared<FrameConnection>(Socket(fd));
    auto done = std::make_shared<std::atomic<bool>>(false);
    std::lock_guard lock(conn_mutex_);
    if (!running_) break;
    reap_finished();
    std::thread t([this, conn, done] {
      try {
        handler_(*conn);
      } catch (const std::exception&) {
        // Connection-level failure; the peer sees the socket close.
      }
      conn->shutdown();
      done->store(true);
    });
    workers_.push_back({std::move(t), conn, done});
  }
}

void TcpServer::reap_finished() {
  for (auto it = workers_.begin(); it != workers_.end();) {
    if (it->done->load()) {
      it->thread.join();
      it = workers_.erase(it);
    } else {
      ++it;
    }
  }
}

void TcpServer::stop() {
  if (!running_.exchange(false)) return;
  if (accept_thread_.joinable()) accept_thread_.join();
  std::vector<Worker> workers;
  {
    std::lock_guard lock(conn_mutex_);
    for (auto& w : workers_) w.connection->shutdown();
    workers.swap(workers_);
  }
  for (auto& w : workers) {
    if (w.thread.joinable()) w.thread.join();
  }
  listener_.close();
}

std::string make_request_id() {
  static std::atomic<std::uint64_t> counter{0};
  static const std::uint64_t salt = [] {
    std::random_device rd;
    return (std::uint64_t{rd()} << 32) ^ rd();
  }();
  char buf[48];
  std::snprintf(buf, sizeof buf, "%016llx-%llu", static_cast<unsigned long long>(salt),
                static_cast<unsigned long long>(counter.fetch_add(1)));
  return buf;
}

}  // namespace redf
