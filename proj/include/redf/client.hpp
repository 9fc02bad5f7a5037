#pragma once

#include <chrono>
#include <span>
#include <string>
#include <vector>

#include "redf/protocol.hpp"

namespace redf {

struct ForecastResponse {
  std::string id;
  std::vector<double> forecast;  // MW
  std::string model_version;
};

Json make_forecast_request(const std::string& id, const std::string& model, std::span<const double> history,
                           std::size_t horizon);
// Converts a FORECAST_RESP frame; an ERROR frame becomes RemoteError.
ForecastResponse parse_forecast_response(const Json& frame);

// Direct request to a model server. Throws ConnectError, TimeoutError or
// RemoteError (carrying the server's error code).
ForecastResponse client_request(const Address& address, const std::string& model, std::span<const double> history,
                                std::size_t horizon, std::chrono::milliseconds timeout);

// Same request routed through a broker: published to the request topic
// with a private reply topic that is then fetched.
ForecastResponse client_request_via_broker(const Address& broker, const std::string& model,
                                           std::span<const double> history, std::size_t horizon,
                                           std::chrono::milliseconds timeout);

}  // namespace redf
