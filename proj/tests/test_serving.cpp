#include <doctest.h>

#include <sys/socket.h>

#include <chrono>
#include <cstring>
#include <thread>

#include "redf/artifact.hpp"
#include "redf/broker.hpp"
#include "redf/client.hpp"
#include "redf/error.hpp"
#include "redf/model_server.hpp"
#include "support.hpp"

using namespace redf;
using namespace std::chrono_literals;

namespace {

LoadedModel sample_model(std::size_t steps = 6, std::uint64_t seed = 3) {
  HyperParams hp;
  hp.units = 5;
  hp.timesteps = steps;
  Rng rng(seed);
  ModelParams p = ModelParams::initialize(hp, rng);
  Scaler s;
  s.kind = ScalerKind::MinMax;
  s.a = 900.0;
  s.b = 2400.0;
  return make_loaded_model("demo", std::move(p), s);
}

std::vector<double> history(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> h(n);
  for (double& v : h) v = rng.uniform(1000.0, 2300.0);
  return h;
}

Address local(std::uint16_t port) {
  Address a;
  a.port = port;
  return a;
}

// Sends raw bytes on a fresh connection and returns the socket.
FrameConnection raw_connect(std::uint16_t port) { return FrameConnection::connect(local(port), 2000ms); }

void send_raw(const FrameConnection& conn, const std::string& bytes) {
  std::size_t off = 0;
  while (off < bytes.size()) {
    const auto n = ::send(conn.fd(), bytes.data() + off, bytes.size() - off, MSG_NOSIGNAL);
    REQUIRE(n > 0);
    off += static_cast<std::size_t>(n);
  }
}

std::string header(std::uint32_t n) {
  std::string h(4, '\0');
  h[0] = static_cast<char>(n >> 24);
  h[1] = static_cast<char>(n >> 16);
  h[2] = static_cast<char>(n >> 8);
  h[3] = static_cast<char>(n);
  return h;
}

}  // namespace

TEST_SUITE("serving") {

TEST_CASE("artifact round trip is exact") {
  const LoadedModel m = sample_model();
  const auto bytes = encode_artifact(m.params, m.scaler);
  const ModelArtifact back = decode_artifact(bytes);
  CHECK(back.params == m.params);
  CHECK(back.scaler == m.scaler);
  CHECK(back.params.hyper.timesteps == m.params.hyper.timesteps);
  CHECK(encode_artifact(back.params, back.scaler) == bytes);

  testing::TempDir dir;
  serialize(m.params, m.scaler, dir / "m.redf");
  const ModelArtifact file = deserialize(dir / "m.redf");
  const Matrix x = Matrix(3, 6, 0.25);
  CHECK(predict(file.params, x) == predict(m.params, x));
}

TEST_CASE("artifact layout starts with magic and version") {
  const LoadedModel m = sample_model();
  const auto bytes = encode_artifact(m.params, m.scaler);
  CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "REDF");
  CHECK(bytes[4] == 1);
  CHECK(bytes[5] == 0);
  std::uint32_t crc = 0;
  for (int k = 0; k < 4; ++k) crc |= static_cast<std::uint32_t>(bytes[bytes.size() - 4 + k]) << (8 * k);
  CHECK(crc == crc32_of(std::span(bytes).first(bytes.size() - 4)));
  // Standard CRC-32 check value.
  const std::string check = "123456789";
  CHECK(crc32_of(std::span(reinterpret_cast<const std::uint8_t*>(check.data()), check.size())) == 0xCBF43926u);
}

TEST_CASE("artifact corruption names the failed check") {
  const LoadedModel m = sample_model();
  const auto good = encode_artifact(m.params, m.scaler);
  auto check_of = [](const std::vector<std::uint8_t>& b) {
    try {
      decode_artifact(b);
    } catch (const ArtifactError& e) {
      return e.check();
    }
    FAIL("decode accepted corrupt bytes");
    return ArtifactError::Check::Io;
  };
  auto flipped = good;
  flipped[good.size() / 2] ^= 0x01;
  CHECK(check_of(flipped) == ArtifactError::Check::Checksum);
  auto magic = good;
  magic[0] = 'X';
  CHECK(check_of(magic) == ArtifactError::Check::Magic);
  auto version = good;
  version[4] = 2;
  CHECK(check_of(version) == ArtifactError::Check::Version);
  auto truncated = good;
  truncated.resize(good.size() - 9);
  CHECK(check_of(truncated) == ArtifactError::Check::Shape);
  auto extended = good;
  extended.push_back(0);
  CHECK(check_of(extended) == ArtifactError::Check::Shape);
  CHECK(check_of({}) == ArtifactError::Check::Magic);
  CHECK_THROWS_AS(deserialize("/nonexistent/model.redf"), ArtifactError);
}

TEST_CASE("random truncations never crash") {
  const LoadedModel m = sample_model();
  const auto good = encode_artifact(m.params, m.scaler);
  Rng rng(5);
  for (int k = 0; k < 100; ++k) {
    std::vector<std::uint8_t> cut(good.begin(), good.begin() + static_cast<std::ptrdiff_t>(rng.below(good.size())));
    CHECK_THROWS_AS(decode_artifact(cut), ArtifactError);
  }
}

TEST_CASE("frames") {
  const Json body = {{"type", "PUBLISH"}, {"id", "x"}};
  const std::string f = encode_frame(body);
  CHECK(f.substr(0, 4) == header(static_cast<std::uint32_t>(body.dump().size())));
  CHECK(f.substr(4) == body.dump());
  CHECK_NOTHROW(validate_frame(body));
  CHECK_THROWS_AS(validate_frame(Json::array()), ProtocolError);
  CHECK_THROWS_AS(validate_frame(Json{{"type", "PUBLISH"}}), ProtocolError);
  CHECK_THROWS_AS(validate_frame(Json{{"type", "NOPE"}, {"id", "1"}}), ProtocolError);
  CHECK(Address::parse("10.0.0.1:8080").port == 8080);
  CHECK(Address::parse(":7").host == "127.0.0.1");
  CHECK_THROWS_AS(Address::parse("nohost"), ConfigError);
  CHECK_THROWS_AS(Address::parse("h:99999"), ConfigError);
  CHECK(make_request_id() != make_request_id());
}

TEST_CASE("topic store is FIFO per topic") {
  TopicStore store;
  store.publish("t", "a");
  store.publish("t", "b");
  store.publish("u", "z");
  CHECK(store.fetch("t", 0ms) == Json("a"));
  CHECK(store.fetch("t", 0ms) == Json("b"));
  CHECK_FALSE(store.fetch("t", 0ms).has_value());
  CHECK(store.depth("u") == 1);
}

TEST_CASE("broker publish and fetch over tcp") {
  Broker broker;
  broker.start(local(0));
  BrokerClient client(local(broker.port()), 2000ms);
  client.publish("a-topic", "a");
  CHECK(client.fetch("a-topic", 100ms) == Json("a"));
  client.publish("t", "a");
  client.publish("t", Json{{"k", 1}});
  CHECK(client.fetch("t", 100ms) == Json("a"));
  CHECK(client.fetch("t", 100ms) == Json{{"k", 1}});

  const auto start = std::chrono::steady_clock::now();
  CHECK_FALSE(client.fetch("empty", 50ms).has_value());
  const auto waited = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start);
  CHECK(waited.count() >= 50);
  CHECK(waited.count() <= 70);
}

TEST_CASE("broker keeps order under concurrent publishers and drains fully") {
  Broker broker;
  broker.start(local(0));
  const int producers = 4, per = 50;
  std::vector<std::thread> threads;
  for (int p = 0; p < producers; ++p) {
    threads.emplace_back([&, p] {
      BrokerClient c(local(broker.port()), 2000ms);
      for (int k = 0; k < per; ++k) c.publish("q", Json{{"p", p}, {"k", k}});
    });
  }
  for (auto& t : threads) t.join();
  BrokerClient reader(local(broker.port()), 2000ms);
  std::vector<int> last(producers, -1);
  int total = 0;
  while (auto m = reader.fetch("q", 20ms)) {
    const int p = (*m)["p"], k = (*m)["k"];
    CHECK(k == last[p] + 1);
    last[p] = k;
    ++total;
  }
  CHECK(total == producers * per);
}

TEST_CASE("broker answers malformed json and keeps the connection") {
  Broker broker;
  broker.start(local(0));
  auto conn = raw_connect(broker.port());
  const std::string junk = "{not json";
  send_raw(conn, header(static_cast<std::uint32_t>(junk.size())) + junk);
  auto r = conn.receive(2000ms);
  REQUIRE(r.status == FrameRead::Status::Ok);
  CHECK(r.body["type"] == "ERROR");
  CHECK(r.body["code"] == "malformed_json");
  conn.send(Json{{"type", "PUBLISH"}, {"id", "1"}, {"topic", "t"}, {"payload", 5}});
  r = conn.receive(2000ms);
  REQUIRE(r.status == FrameRead::Status::Ok);
  CHECK(r.body["status"] == "ok");
  conn.send(Json{{"type", "PUBLISH"}, {"id", "2"}});
  r = conn.receive(2000ms);
  CHECK(r.body["code"] == "bad_request");
}

TEST_CASE("broker rejects an oversized frame and closes") {
  Broker broker;
  broker.start(local(0));
  auto conn = raw_connect(broker.port());
  send_raw(conn, header(static_cast<std::uint32_t>(kMaxFrameBytes + 1)));
  auto r = conn.receive(2000ms);
  REQUIRE(r.status == FrameRead::Status::Ok);
  CHECK(r.body["code"] == "frame_too_large");
  r = conn.receive(2000ms);
  CHECK(r.status == FrameRead::Status::Closed);
}

TEST_CASE("forecast matches a hand rollout") {
  const LoadedModel m = sample_model(4);
  const auto h = history(10, 1);
  const auto f = forecast(m, h, 2);
  REQUIRE(f.size() == 2);
  Matrix w(1, 4);
  for (std::size_t t = 0; t < 4; ++t) w(0, t) = m.scaler.apply(h[6 + t]);
  Rng rng(0);
  const double y1 = forward(m.params, w, false, rng).predictions(0, 0);
  CHECK(f[0] == m.scaler.invert(y1));
  Matrix w2(1, 4);
  for (std::size_t t = 0; t < 3; ++t) w2(0, t) = w(0, t + 1);
  w2(0, 3) = y1;
  const double y2 = forward(m.params, w2, false, rng).predictions(0, 0);
  CHECK(f[1] == m.scaler.invert(y2));
}

TEST_CASE("request validation codes") {
  ModelRegistry reg;
  reg.add(sample_model(24));
  auto code = [&](const Json& req) {
    const Json r = handle_forecast_request(reg, req);
    return r["type"] == "ERROR" ? r["code"].get<std::string>() : std::string("ok");
  };
  const auto h = history(30, 2);
  CHECK(code(make_forecast_request("1", "demo", h, 1)) == "ok");
  CHECK(code(make_forecast_request("1", "nope", h, 1)) == "unknown_model");
  CHECK(code(make_forecast_request("1", "demo", std::vector<double>{1, 2, 3}, 1)) == "insufficient_history");
  CHECK(code(make_forecast_request("1", "demo", h, 0)) == "invalid_horizon");
  Json bad = make_forecast_request("1", "demo", h, 1);
  bad["history"][3] = nullptr;
  CHECK(code(bad) == "invalid_values");
  bad["history"][3] = "12";
  CHECK(code(bad) == "invalid_values");
  CHECK(code(Json{{"type", "FORECAST_REQ"}, {"id", "1"}}) == "bad_request");
  const Json ok = handle_forecast_request(reg, make_forecast_request("abc", "demo", h, 3));
  CHECK(ok["id"] == "abc");
  CHECK(ok["forecast"].size() == 3);
  CHECK(ok["model_version"].get<std::string>().rfind("1:", 0) == 0);
}

TEST_CASE("served forecast equals the in-process forecast, direct and via broker") {
  const LoadedModel m = sample_model(6, 9);
  ModelRegistry reg;
  reg.add(m);
  Broker broker;
  broker.start(local(0));
  ModelServer server(std::move(reg));
  server.listen(local(0));
  server.attach_broker(local(broker.port()), 1);
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto h = history(6 + seed, seed);
    const auto expect = forecast(m, h, 3);
    const auto direct = client_request(local(server.port()), "demo", h, 3, 5000ms);
    const auto brokered = client_request_via_broker(local(broker.port()), "demo", h, 3, 5000ms);
    CHECK(direct.forecast == expect);
    CHECK(brokered.forecast == expect);
    CHECK(direct.model_version == m.version);
  }
  try {
    client_request(local(server.port()), "demo", std::vector<double>{1, 2}, 1, 5000ms);
    FAIL("expected RemoteError");
  } catch (const RemoteError& e) {
    CHECK(e.code() == "insufficient_history");
  }
}

TEST_CASE("client errors: refused and silent servers") {
  TcpServer probe;
  probe.start(local(0), [](FrameConnection&) {});
  const std::uint16_t port = probe.port();
  probe.stop();
  CHECK_THROWS_AS(client_request(local(port), "demo", std::vector<double>{1}, 1, 1000ms), ConnectError);

  TcpServer silent;
  silent.start(local(0), [](FrameConnection& c) { c.receive(); c.receive(); });
  const auto start = std::chrono::steady_clock::now();
  CHECK_THROWS_AS(client_request(local(silent.port()), "demo", std::vector<double>{1}, 1, 200ms), TimeoutError);
  CHECK(std::chrono::steady_clock::now() - start < 2s);
}

}  // TEST_SUITE
