#include "redf/model_server.hpp"

#include <cmath>
#include <cstdio>

#include "redf/broker.hpp"
#include "redf/error.hpp"

namespace redf {

LoadedModel make_loaded_model(std::string name, ModelParams params, Scaler scaler) {
  const auto bytes = encode_artifact(params, scaler);
  const std::uint32_t crc = crc32_of(std::span(bytes).first(bytes.size() - 4));
  char version[32];
  std::snprintf(version, sizeof version, "%u:%08x", static_cast<unsigned>(kArtifactVersion), crc);
  return LoadedModel{std::move(name), std::move(params), scaler, version};
}

LoadedModel load_model(const std::filesystem::path& path, std::string name) {
  ModelArtifact art = deserialize(path);
  if (name.empty()) name = path.stem().string();
  return make_loaded_model(std::move(name), std::move(art.params), art.scaler);
}

std::vector<double> forecast(const LoadedModel& model, std::span<const double> history_mw, std::size_t horizon) {
  const std::size_t steps = model.params.hyper.timesteps;
  if (model.params.hyper.features != 1) throw ConfigError("only univariate models can be served");
  if (history_mw.size() < steps) {
    throw WindowError("history has " + std::to_string(history_mw.size()) + " values, model needs " +
                      std::to_string(steps));
  }
  Matrix window(1, steps);
  const auto recent = history_mw.last(steps);
  for (std::size_t t = 0; t < steps; ++t) window(0, t) = model.scaler.apply(recent[t]);

  std::vector<double> out;
  out.reserve(horizon);
  for (std::size_t k = 0; k < horizon; ++k) {
    const double next = predict(model.params, window)(0, 0);
    out.push_back(model.scaler.invert(next));
    for (std::size_t t = 0; t + 1 < steps; ++t) window(0, t) = window(0, t + 1);
    window(0, steps - 1) = next;
  }
  return out;
}

void ModelRegistry::add(LoadedModel model) {
  const std::string name = model.name;
  models_[name] = std::make_shared<const LoadedModel>(std::move(model));
}

const LoadedModel* ModelRegistry::find(const std::string& name) const {
  const auto it = models_.find(name);
  return it == models_.end() ? nullptr : it->second.get();
}

std::vector<std::string> ModelRegistry::names() const {
  std::vector<std::string> out;
  for (const auto& [name, _] : models_) out.push_back(name);
  return out;
}

Json handle_forecast_request(const ModelRegistry& registry, const Json& request) {
  const std::string id = request.is_object() && request.contains("id") && request["id"].is_string()
                             ? request["id"].get<std::string>()
                             : std::string();
  try {
    validate_frame(request);
  } catch (const ProtocolError& e) {
    return error_frame(id, "bad_request", e.what());
  }
  if (request["type"] != frame_type::kForecastReq) {
    return error_frame(id, "bad_request", "expected FORECAST_REQ, got " + request["type"].get<std::string>());
  }
  if (!request.contains("model") || !request["model"].is_string()) {
    return error_frame(id, "bad_request", "missing string field 'model'");
  }
  const std::string name = request["model"];
  const LoadedModel* model = registry.find(name);
  if (model == nullptr) return error_frame(id, "unknown_model", "no model named '" + name + "'");

  if (!request.contains("horizon") || !request["horizon"].is_number_integer()) {
    return error_frame(id, "invalid_horizon", "horizon must be a positive integer");
  }
  const auto horizon = request["horizon"].get<std::int64_t>();
  if (horizon < 1 || horizon > static_cast<std::int64_t>(kMaxHorizon)) {
    return error_frame(id, "invalid_horizon",
                       "horizon must lie in [1, " + std::to_string(kMaxHorizon) + "]");
  }

  if (!request.contains("history") || !request["history"].is_array()) {
    return error_frame(id, "bad_request", "missing array field 'history'");
  }
  const Json& raw = request["history"];
  std::vector<double> history;
  history.reserve(raw.size());
  for (const auto& v : raw) {
    if (!v.is_number()) return error_frame(id, "invalid_values", "history contains a non-numeric value");
    const double x = v.get<double>();
    if (!std::isfinite(x)) return error_frame(id, "invalid_values", "history contains a non-finite value");
    history.push_back(x);
  }
  const std::size_t steps = model->params.hyper.timesteps;
  if (history.size() < steps) {
    return error_frame(id, "insufficient_history",
                       "model '" + name + "' needs " + std::to_string(steps) + " values, got " +
                           std::to_string(history.size()));
  }

  const auto values = forecast(*model, history, static_cast<std::size_t>(horizon));
  for (double v : values) {
    if (!std::isfinite(v)) return error_frame(id, "invalid_values", "model produced a non-finite forecast");
  }
  return Json{{"type", frame_type::kForecastResp},
              {"id", id},
              {"model", name},
              {"forecast", values},
              {"model_version", model->version}};
}

void ModelServer::listen(const Address& address) {
  server_.start(address, [this](FrameConnection& conn) { serve(conn); });
}

void ModelServer::attach_broker(const Address& broker, std::size_t workers) {
  // Fail fast on an unreachable broker before spawning workers.
  BrokerClient probe(broker, std::chrono::milliseconds(2000));
  for (std::size_t k = 0; k < std::max<std::size_t>(workers, 1); ++k) {
    workers_.emplace_back([this, broker] { broker_loop(broker); });
  }
}

void ModelServer::stop() {
  stopping_ = true;
  server_.stop();
  for (auto& t : workers_) {
    if (t.joinable()) t.join();
  }
  workers_.clear();
}

void ModelServer::serve(FrameConnection& conn) {
  for (;;) {
    FrameRead in = conn.receive();
    switch (in.status) {
      case FrameRead::Status::Ok:
        conn.send(handle_forecast_request(registry_, in.body));
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

void ModelServer::broker_loop(Address broker) {
  while (!stopping_) {
    try {
      BrokerClient client(broker, std::chrono::milliseconds(2000));
      while (!stopping_) {
        auto request = client.fetch(kRequestTopic, std::chrono::milliseconds(100));
        if (!request) continue;
        if (!request->is_object() || !request->contains("reply_to") || !(*request)["reply_to"].is_string()) {
          continue;  // nowhere to send an answer
        }
        client.publish((*request)["reply_to"].get<std::string>(), handle_forecast_request(registry_, *request));
      }
    } catch (const Error&) {
      // Broker went away; retry until stopped.
      std::this_thread::sleep_for(std::chrono::milliseconds(200));
    }
  }
}

}  // namespace redf
