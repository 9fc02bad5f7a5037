#include "redf/client.hpp"

#include "redf/broker.hpp"
#include "redf/error.hpp"
#include "redf/model_server.hpp"

namespace redf {

namespace {

using Clock = std::chrono::steady_clock;

std::chrono::milliseconds left_until(Clock::time_point deadline) {
  const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now());
  return left.count() < 0 ? std::chrono::milliseconds(0) : left;
}

}  // namespace

Json make_forecast_request(const std::string& id, const std::string& model, std::span<const double> history,
                           std::size_t horizon) {
  return Json{{"type", frame_type::kForecastReq},
              {"id", id},
              {"model", model},
              {"horizon", horizon},
              {"history", std::vector<double>(history.begin(), history.end())}};
}

ForecastResponse parse_forecast_response(const Json& frame) {
  validate_frame(frame);
  const std::string type = frame["type"];
  if (type == frame_type::kError) {
    throw RemoteError(frame.value("code", "error"), frame.value("message", ""));
  }
  if (type != frame_type::kForecastResp) throw ProtocolError("unexpected " + type + " frame");
  if (!frame.contains("forecast") || !frame["forecast"].is_array()) {
    throw ProtocolError("FORECAST_RESP without a forecast array");
  }
  ForecastResponse out;
  out.id = frame["id"];
  out.model_version = frame.value("model_version", "");
  for (const auto& v : frame["forecast"]) {
    if (!v.is_number()) throw ProtocolError("non-numeric forecast value");
    out.forecast.push_back(v.get<double>());
  }
  return out;
}

ForecastResponse client_request(const Address& address, const std::string& model, std::span<const double> history,
                                std::size_t horizon, std::chrono::milliseconds timeout) {
  const auto deadline = Clock::now() + timeout;
  auto conn = FrameConnection::connect(address, timeout);
  const std::string id = make_request_id();
  conn.send(make_forecast_request(id, model, history, horizon));
  for (;;) {
    FrameRead in = conn.receive(left_until(deadline));
    if (in.status == FrameRead::Status::Timeout) {
      throw TimeoutError("no response from " + address.str() + " within " + std::to_string(timeout.count()) + " ms");
    }
    if (in.status != FrameRead::Status::Ok) throw ProtocolError("connection to " + address.str() + " failed");
    const std::string got = in.body.is_object() ? in.body.value("id", "") : "";
    // Connection-level errors carry an empty id.
    if (got == id || (got.empty() && in.body.value("type", "") == frame_type::kError)) {
      return parse_forecast_response(in.body);
    }
  }
}

ForecastResponse client_request_via_broker(const Address& broker, const std::string& model,
                                           std::span<const double> history, std::size_t horizon,
                                           std::chrono::milliseconds timeout) {
  const auto deadline = Clock::now() + timeout;
  BrokerClient client(broker, timeout);
  const std::string id = make_request_id();
  const std::string reply_topic = "forecast.replies." + id;
  Json request = make_forecast_request(id, model, history, horizon);
  request["reply_to"] = reply_topic;
  client.publish(kRequestTopic, request);
  for (;;) {
    const auto wait = left_until(deadline);
    auto reply = client.fetch(reply_topic, wait);
    if (!reply) {
      throw TimeoutError("no reply on " + reply_topic + " within " + std::to_string(timeout.count()) + " ms");
    }
    if (reply->is_object() && reply->value("id", "") == id) return parse_forecast_response(*reply);
  }
}

}  // namespace redf
