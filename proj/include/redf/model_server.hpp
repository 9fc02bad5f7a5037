#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "redf/artifact.hpp"
#include "redf/protocol.hpp"

namespace redf {

// Topic the model server drains in broker mode.
inline constexpr const char* kRequestTopic = "forecast.requests";

struct LoadedModel {
  std::string name;
  ModelParams params;
  Scaler scaler;
  std::string version;  // "<format version>:<crc32 hex>"
};

LoadedModel make_loaded_model(std::string name, ModelParams params, Scaler scaler);
// The model name defaults to the file stem.
LoadedModel load_model(const std::filesystem::path& path, std::string name = {});

// Autoregressive rollout: scale the last `timesteps` MW values, predict one
// step, append the prediction to the window and repeat `horizon` times.
// Results are converted back to MW.
std::vector<double> forecast(const LoadedModel& model, std::span<const double> history_mw, std::size_t horizon);

inline constexpr std::size_t kMaxHorizon = 10000;

// Models are immutable after registration, so lookups may run concurrently
// once serving has started.
class ModelRegistry {
 public:
  void add(LoadedModel model);
  const LoadedModel* find(const std::string& name) const;
  std::vector<std::string> names() const;
  bool empty() const noexcept { return models_.empty(); }

 private:
  std::map<std::string, std::shared_ptr<const LoadedModel>> models_;
};

// FORECAST_REQ {id, model, horizon, history} -> FORECAST_RESP {id, model,
// forecast, model_version} or ERROR {id, code, message}. Codes: bad_request,
// unknown_model, insufficient_history, invalid_values, invalid_horizon.
Json handle_forecast_request(const ModelRegistry& registry, const Json& request);

class ModelServer {
 public:
  explicit ModelServer(ModelRegistry registry) : registry_(std::move(registry)) {}
  ~ModelServer() { stop(); }
  ModelServer(const ModelServer&) = delete;
  ModelServer& operator=(const ModelServer&) = delete;

  // Answers FORECAST_REQ frames on its own socket.
  void listen(const Address& address);
  // Drains kRequestTopic on a broker and publishes each reply to the
  // request's reply_to topic.
  void attach_broker(const Address& broker, std::size_t workers = 2);
  void stop();

  std::uint16_t port() const noexcept { return server_.port(); }
  const ModelRegistry& registry() const noexcept { return registry_; }

 private:
  void serve(FrameConnection& conn);
  void broker_loop(Address broker);

  ModelRegistry registry_;
  TcpServer server_;
  std::atomic<bool> stopping_{false};
  std::vector<std::thread> workers_;
};

}  // namespace redf
