#pragma once

#include <chrono>
#include <condition_variable>
#include <cstddef>
#include <deque>
#include <map>
#include <mutex>
#include <optional>
#include <string>

#include "redf/protocol.hpp"

namespace redf {

// In-memory topic queues. Topics are created on first use; each topic is a
// FIFO and fetch pops the oldest message.
class TopicStore {
 public:
  void publish(const std::string& topic, Json payload);
  // Waits up to `timeout` for a message; nullopt when the wait expires or
  // the store is closed.
  std::optional<Json> fetch(const std::string& topic, std::chrono::milliseconds timeout);
  std::size_t depth(const std::string& topic) const;
  void close();

 private:
  mutable std::mutex mutex_;
  std::condition_variable ready_;
  std::map<std::string, std::deque<Json>> topics_;
  bool closed_ = false;
};

// Answers PUBLISH and FETCH frames.
//
//   PUBLISH {topic, payload}        -> PUBLISH {topic, status: "ok"}
//   FETCH   {topic, timeout_ms}     -> FETCH {topic, payload} or FETCH {topic, empty: true}
//
// Malformed JSON yields an ERROR frame and the connection stays open; an
// oversized frame yields an ERROR frame and the connection is closed.
class Broker {
 public:
  Broker() = default;
  ~Broker() { stop(); }

  void start(const Address& address);
  void stop();
  std::uint16_t port() const noexcept { return server_.port(); }
  TopicStore& store() noexcept { return store_; }

  // Handles one frame; exposed for tests that bypass the socket layer.
  Json handle(const Json& frame);

 private:
  void serve(FrameConnection& conn);

  TopicStore store_;
  TcpServer server_;
};

// Client side of the broker protocol over one connection.
class BrokerClient {
 public:
  BrokerClient(const Address& address, std::chrono::milliseconds connect_timeout);

  void publish(const std::string& topic, const Json& payload);
  // nullopt when the topic stayed empty for `wait`.
  std::optional<Json> fetch(const std::string& topic, std::chrono::milliseconds wait);

 private:
  Json round_trip(const Json& request, std::chrono::milliseconds wait);

  FrameConnection conn_;
};

}  // namespace redf
