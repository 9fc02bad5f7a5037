#include "redf/broker.hpp"

#include "redf/error.hpp"

namespace redf {

void TopicStore::publish(const std::string& topic, Json payload) {
  {
    std::lock_guard lock(mutex_);
    topics_[topic].push_back(std::move(payload));
  }
  ready_.notify_all();
}

std::optional<Json> TopicStore::fetch(const std::string& topic, std::chrono::milliseconds timeout) {
  std::unique_lock lock(mutex_);
  auto& queue = topics_[topic];
  const bool ready = ready_.wait_for(lock, timeout, [&] { return closed_ || !queue.empty(); });
  if (!ready || queue.empty()) return std::nullopt;
  Json out = std::move(queue.front());
  queue.pop_front();
  return out;
}

std::size_t TopicStore::depth(const std::string& topic) const {
  std::lock_guard lock(mutex_);
  const auto it = topics_.find(topic);
  return it == topics_.end() ? 0 : it->second.size();
}

void TopicStore::close() {
  {
    std::lock_guard lock(mutex_);
    closed_ = true;
  }
  ready_.notify_all();
}

void Broker::start(const Address& address) {
  server_.start(address, [this](FrameConnection& conn) { serve(conn); });
}

void Broker::stop() {
  store_.close();
  server_.stop();
}

Json Broker::handle(const Json& frame) {
  const std::string id = frame.value("id", "");
  try {
    validate_frame(frame);
  } catch (const ProtocolError& e) {
    return error_frame(id, "bad_request", e.what());
  }
  const std::string type = frame["type"];
  if (!frame.contains("topic") || !frame["topic"].is_string() || frame["topic"].get<std::string>().empty()) {
    return error_frame(id, "bad_request", "missing string field 'topic'");
  }
  const std::string topic = frame["topic"];
  if (type == frame_type::kPublish) {
    if (!frame.contains("payload")) return error_frame(id, "bad_request", "missing field 'payload'");
    store_.publish(topic, frame["payload"]);
    return Json{{"type", frame_type::kPublish}, {"id", id}, {"topic", topic}, {"status", "ok"}};
  }
  if (type == frame_type::kFetch) {
    const auto wait = frame.value("timeout_ms", 0);
    if (wait < 0) return error_frame(id, "bad_request", "timeout_ms must be non-negative");
    auto payload = store_.fetch(topic, std::chrono::milliseconds(wait));
    Json reply{{"type", frame_type::kFetch}, {"id", id}, {"topic", topic}};
    if (payload) {
      reply["payload"] = std::move(*payload);
    } else {
      reply["empty"] = true;
    }
    return reply;
  }
  return error_frame(id, "unsupported_type", "broker does not handle " + type + " frames");
}

void Broker::serve(FrameConnection& conn) {
  for (;;) {
    FrameRead in = conn.receive();
    switch (in.status) {
      case FrameRead::Status::Ok:
        conn.send(handle(in.body));
        break;
      case FrameRead::Status::Malformed:
        conn.send(error_frame("", "malformed_json", in.error));
        break;
      case FrameRead::Status::Oversized:
        conn.send(error_frame("", "frame_too_large", in.error));
        return;
      case FrameRead::Status::Closed:
      case FrameRead::Status::Timeout:
        return;
    }
  }
}

BrokerClient::BrokerClient(const Address& address, std::chrono::milliseconds connect_timeout)
    : conn_(FrameConnection::connect(address, connect_timeout)) {}

Json BrokerClient::round_trip(const Json& request, std::chrono::milliseconds wait) {
  conn_.send(request);
  FrameRead in = conn_.receive(wait);
  if (in.status == FrameRead::Status::Timeout) throw TimeoutError("broker did not answer in time");
  if (in.status != FrameRead::Status::Ok) throw ProtocolError("broker connection failed: " + in.error);
  if (in.body.value("type", "") == frame_type::kError) {
    throw RemoteError(in.body.value("code", "error"), in.body.value("message", ""));
  }
  return in.body;
}

void BrokerClient::publish(const std::string& topic, const Json& payload) {
  const Json req{{"type", frame_type::kPublish}, {"id", make_request_id()}, {"topic", topic},
                 {"payload", payload}};
  round_trip(req, std::chrono::milliseconds(10000));
}

std::optional<Json> BrokerClient::fetch(const std::string& topic, std::chrono::milliseconds wait) {
  const Json req{{"type", frame_type::kFetch}, {"id", make_request_id()}, {"topic", topic},
                 {"timeout_ms", wait.count()}};
  Json reply = round_trip(req, wait + std::chrono::milliseconds(10000));
  if (reply.value("empty", false) || !reply.contains("payload")) return std::nullopt;
  return std::move(reply["payload"]);
}

}  // namespace redf
