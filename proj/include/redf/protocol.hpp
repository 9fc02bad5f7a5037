#pragma once

#include <atomic>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

namespace redf {

using Json = nlohmann::json;

// Wire format: 4-byte big-endian body length, then a UTF-8 JSON object with
// at least "type" and "id" string fields.
inline constexpr std::size_t kMaxFrameBytes = 16u * 1024u * 1024u;

namespace frame_type {
inline constexpr const char* kPublish = "PUBLISH";
inline constexpr const char* kFetch = "FETCH";
inline constexpr const char* kForecastReq = "FORECAST_REQ";
inline constexpr const char* kForecastResp = "FORECAST_RESP";
inline constexpr const char* kError = "ERROR";
}  // namespace frame_type

std::string encode_frame(const Json& body);
Json error_frame(const std::string& id, const std::string& code, const std::string& message);
// Throws ProtocolError with a code-like message if `body` is not a valid frame.
void validate_frame(const Json& body);

struct Address {
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;

  // "host:port" or ":port"; throws ConfigError.
  static Address parse(const std::string& text);
  std::string str() const;
};

// Owns one file descriptor.
class Socket {
 public:
  Socket() = default;
  explicit Socket(int fd) : fd_(fd) {}
  Socket(Socket&& other) noexcept : fd_(other.release()) {}
  Socket& operator=(Socket&& other) noexcept;
  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;
  ~Socket() { close(); }

  int fd() const noexcept { return fd_; }
  bool valid() const noexcept { return fd_ >= 0; }
  int release() noexcept {
    const int f = fd_;
    fd_ = -1;
    return f;
  }
  void close() noexcept;
  // Unblocks any thread reading the socket without closing the descriptor.
  void shutdown() noexcept;

 private:
  int fd_ = -1;
};

// Result of reading one frame.
struct FrameRead {
  enum class Status { Ok, Closed, Timeout, Oversized, Malformed };
  Status status = Status::Closed;
  Json body;
  std::string error;
};

// Framed JSON connection over TCP. Sends are serialised by an internal
// mutex; reads must come from one thread at a time.
class FrameConnection {
 public:
  explicit FrameConnection(Socket socket) : socket_(std::move(socket)) {}

  static FrameConnection connect(const Address& address, std::chrono::milliseconds timeout);

  void send(const Json& body);
  // A negative timeout waits indefinitely.
  FrameRead receive(std::chrono::milliseconds timeout = std::chrono::milliseconds(-1));
  void shutdown() noexcept { socket_.shutdown(); }
  int fd() const noexcept { return socket_.fd(); }

 private:
  bool read_exact(char* dst, std::size_t n, std::chrono::steady_clock::time_point deadline,
                  bool has_deadline, FrameRead::Status& status);

  Socket socket_;
  std::mutex send_mutex_;
};

// Accept loop with one thread per connection. The handler returns when the
// connection should be closed.
class TcpServer {
 public:
  using Handler = std::function<void(FrameConnection&)>;

  TcpServer() = default;
  ~TcpServer() { stop(); }
  TcpServer(const TcpServer&) = delete;
  TcpServer& operator=(const TcpServer&) = delete;

  // Binds and starts accepting; port 0 picks an ephemeral port.
  void start(const Address& address, Handler handler);
  void stop();
  std::uint16_t port() const noexcept { return port_; }
  bool running() const noexcept { return running_; }

 private:
  void accept_loop();
  void reap_finished();

  struct Worker {
    std::thread thread;
    std::shared_ptr<FrameConnection> connection;
    std::shared_ptr<std::atomic<bool>> done;
  };

  Socket listener_;
  Handler handler_;
  std::uint16_t port_ = 0;
  std::atomic<bool> running_{false};
  std::thread accept_thread_;
  std::mutex conn_mutex_;
  std::vector<Worker> workers_;
};

// Process-unique request id.
std::string make_request_id();

}  // namespace redf
