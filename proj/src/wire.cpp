#include "facet/wire.hpp"

#include <array>

#include <httplib.h>
#include <json.hpp>

#include "facet/error.hpp"

namespace facet {

using nlohmann::json;

namespace {

constexpr char kAlphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

int decode_char(char c) {
  if (c >= 'A' && c <= 'Z') return c - 'A';
  if (c >= 'a' && c <= 'z') return c - 'a' + 26;
  if (c >= '0' && c <= '9') return c - '0' + 52;
  if (c == '+') return 62;
  if (c == '/') return 63;
  return -1;
}

}  // namespace

std::string base64_encode(std::span<const unsigned char> bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < bytes.size(); i += 3) {
    const std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8) | bytes[i + 2];
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += kAlphabet[(v >> 6) & 63];
    out += kAlphabet[v & 63];
  }
  if (const std::size_t rest = bytes.size() - i; rest > 0) {
    const std::uint32_t v = (bytes[i] << 16) | (rest == 2 ? bytes[i + 1] << 8 : 0);
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += rest == 2 ? kAlphabet[(v >> 6) & 63] : '=';
    out += '=';
  }
  return out;
}

std::vector<unsigned char> base64_decode(std::string_view text) {
  if (text.size() % 4 != 0) throw FormatError("base64 length is not a multiple of 4");
  std::vector<unsigned char> out;
  out.reserve(text.size() / 4 * 3);
  for (std::size_t i = 0; i < text.size(); i += 4) {
    std::array<int, 4> q{};
    int pad = 0;
    for (int j = 0; j < 4; ++j) {
      const char c = text[i + j];
      if (c == '=') {
        if (i + 4 != text.size() || j < 2) throw FormatError("misplaced base64 padding");
        ++pad;
        q[j] = 0;
      } else {
        if (pad > 0) throw FormatError("misplaced base64 padding");
        q[j] = decode_char(c);
        if (q[j] < 0) throw FormatError("invalid base64 character");
      }
    }
    const std::uint32_t v = (q[0] << 18) | (q[1] << 12) | (q[2] << 6) | q[3];
    out.push_back(static_cast<unsigned char>(v >> 16));
    if (pad < 2) out.push_back(static_cast<unsigned char>((v >> 8) & 0xff));
    if (pad < 1) out.push_back(static_cast<unsigned char>(v & 0xff));
  }
  return out;
}

namespace {

json optional_count(std::optional<std::uint64_t> v) { return v ? json(*v) : json(nullptr); }

void send_error(httplib::Response& res, int status, const std::string& code, const std::string& message,
                json extra = json::object()) {
  json err = {{"code", code}, {"message", message}};
  err.update(extra);
  res.status = status;
  res.set_content(json{{"error", err}}.dump(), "application/json");
}

// Parses and checks the envelope shared by all POST bodies.
std::optional<json> parse_body(const httplib::Request& req, httplib::Response& res) {
  json body = json::parse(req.body, nullptr, false);
  if (body.is_discarded() || !body.is_object()) {
    send_error(res, 400, "malformed_request", "body is not a JSON object");
    return std::nullopt;
  }
  if (!body.contains("protocol_version") || !body["protocol_version"].is_number_integer()) {
    send_error(res, 400, "malformed_request", "missing integer protocol_version");
    return std::nullopt;
  }
  if (body["protocol_version"].get<int>() != kProtocolVersion) {
    send_error(res, 400, "unsupported_protocol",
               "protocol_version " + body["protocol_version"].dump() + " not supported");
    return std::nullopt;
  }
  if (!body.contains("id") || !body["id"].is_string()) {
    send_error(res, 400, "malformed_request", "missing string id");
    return std::nullopt;
  }
  return body;
}

std::optional<Image> decode_payload(const json& item, const Geometry& geometry, std::size_t index,
                                    httplib::Response& res) {
  if (!item.is_string()) {
    send_error(res, 400, "decode_error", "image " + std::to_string(index) + " is not a base64 string");
    return std::nullopt;
  }
  Image img;
  try {
    img = decode_netpbm(base64_decode(item.get<std::string>()));
  } catch (const Error& e) {
    send_error(res, 400, "decode_error", "image " + std::to_string(index) + ": " + e.what());
    return std::nullopt;
  }
  if (img.geometry() != geometry) {
    send_error(res, 400, "geometry_mismatch",
               "image " + std::to_string(index) + " is " + img.geometry().to_string() + ", service expects " +
                   geometry.to_string());
    return std::nullopt;
  }
  return img;
}

std::pair<std::string, int> split_host_port(std::string address) {
  if (auto pos = address.find("://"); pos != std::string::npos) {
    if (address.substr(0, pos) != "http") throw UsageError("only http:// endpoints are supported");
    address = address.substr(pos + 3);
  }
  while (!address.empty() && address.back() == '/') address.pop_back();
  const auto colon = address.rfind(':');
  if (colon == std::string::npos || colon == 0) throw UsageError("address must be host:port, got '" + address + "'");
  const std::string host = address.substr(0, colon);
  int port = 0;
  try {
    std::size_t used = 0;
    port = std::stoi(address.substr(colon + 1), &used);
    if (used != address.size() - colon - 1) throw std::invalid_argument("trailing");
  } catch (const std::exception&) {
    throw UsageError("invalid port in '" + address + "'");
  }
  if (port < 0 || port > 65535) throw UsageError("port out of range in '" + address + "'");
  return {host, port};
}

}  // namespace

ScoringService::ScoringService(std::shared_ptr<SimilarityOracle> oracle, const std::string& host, int port)
    : oracle_(std::move(oracle)), server_(std::make_unique<httplib::Server>()), host_(host) {
  if (!oracle_) throw UsageError("scoring service needs an oracle");
  install_routes();
  if (port == 0) {
    port_ = server_->bind_to_any_port(host);
    if (port_ < 0) throw TransportError("cannot bind " + host + " to any port");
  } else {
    if (!server_->bind_to_port(host, port)) {
      throw TransportError("cannot bind " + host + ":" + std::to_string(port));
    }
    port_ = port;
  }
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
}

ScoringService::~ScoringService() {
  stop();
  if (thread_.joinable()) thread_.join();
}

std::string ScoringService::endpoint() const { return "http://" + host_ + ":" + std::to_string(port_); }

void ScoringService::stop() { server_->stop(); }

void ScoringService::wait() {
  if (thread_.joinable()) thread_.join();
}

void ScoringService::install_routes() {
  server_->Get("/v1/health", [this](const httplib::Request&, httplib::Response& res) {
    const Geometry g = oracle_->geometry();
    json body = {{"protocol_version", kProtocolVersion},
                 {"width", g.width},
                 {"height", g.height},
                 {"channels", g.channels},
                 {"queries_used", oracle_->queries_used()},
                 {"budget_limit", optional_count(oracle_->budget())},
                 {"budget_remaining", optional_count(oracle_->budget_remaining())}};
    res.set_content(body.dump(), "application/json");
  });

  server_->Post("/v1/enroll", [this](const httplib::Request& req, httplib::Response& res) {
    auto body = parse_body(req, res);
    if (!body) return;
    if (!body->contains("image")) return send_error(res, 400, "malformed_request", "missing image");
    auto img = decode_payload((*body)["image"], oracle_->geometry(), 0, res);
    if (!img) return;
    const std::string id = (*body)["id"].get<std::string>();
    oracle_->enroll(id, *img);
    res.set_content(json{{"enrolled", id}}.dump(), "application/json");
  });

  server_->Post("/v1/score", [this](const httplib::Request& req, httplib::Response& res) {
    auto body = parse_body(req, res);
    if (!body) return;
    if (!body->contains("images") || !(*body)["images"].is_array()) {
      return send_error(res, 400, "malformed_request", "missing images array");
    }
    const json& items = (*body)["images"];
    if (items.empty()) return send_error(res, 400, "empty_batch", "score request carries no images");
    std::vector<Image> images;
    images.reserve(items.size());
    for (std::size_t i = 0; i < items.size(); ++i) {
      auto img = decode_payload(items[i], oracle_->geometry(), i, res);
      if (!img) return;
      images.push_back(std::move(*img));
    }
    try {
      const auto scores = oracle_->score_batch(images, (*body)["id"].get<std::string>());
      json out = {{"scores", scores},
                  {"queries_used", oracle_->queries_used()},
                  {"budget_remaining", optional_count(oracle_->budget_remaining())}};
      res.set_content(out.dump(), "application/json");
    } catch (const UnknownIdentityError& e) {
      send_error(res, 404, "unknown_identity", e.what(), {{"id", e.id()}});
    } catch (const BudgetExhaustedError& e) {
      send_error(res, 429, "budget_exhausted", e.what(),
                 {{"used", e.used()}, {"limit", e.limit()}, {"attempted", e.attempted()}});
    }
  });

  server_->set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    try {
      std::rethrow_exception(ep);
    } catch (const std::exception& e) {
      send_error(res, 500, "internal_error", e.what());
    } catch (...) {
      send_error(res, 500, "internal_error", "unknown failure");
    }
  });
}

std::unique_ptr<ScoringService> serve(std::shared_ptr<SimilarityOracle> oracle, const std::string& bind_address,
                                      const Geometry& geometry) {
  if (!oracle) throw UsageError("serve needs an oracle");
  if (oracle->geometry() != geometry) {
    throw DimensionError("oracle geometry " + oracle->geometry().to_string() + " does not match service geometry " +
                         geometry.to_string());
  }
  auto [host, port] = split_host_port(bind_address);
  return std::make_unique<ScoringService>(std::move(oracle), host, port);
}

RemoteOracle::RemoteOracle(const std::string& endpoint) {
  std::tie(host_, port_) = split_host_port(endpoint);
  httplib::Client client(host_, port_);
  client.set_connection_timeout(5);
  auto res = client.Get("/v1/health");
  if (!res) {
    throw TransportError("cannot reach scoring service at " + endpoint + ": " + httplib::to_string(res.error()));
  }
  if (res->status != 200) throw TransportError("health check failed with HTTP " + std::to_string(res->status));
  json body = json::parse(res->body, nullptr, false);
  if (body.is_discarded() || !body.is_object()) throw TransportError("health response is not JSON");
  try {
    if (body.at("protocol_version").get<int>() != kProtocolVersion) {
      throw ProtocolError("unsupported_protocol", "service speaks protocol " + body.at("protocol_version").dump());
    }
    geometry_ = Geometry{body.at("height").get<int>(), body.at("width").get<int>(), body.at("channels").get<int>()};
    used_ = body.at("queries_used").get<std::uint64_t>();
    if (!body.at("budget_limit").is_null()) limit_ = body.at("budget_limit").get<std::uint64_t>();
    if (!body.at("budget_remaining").is_null()) remaining_ = body.at("budget_remaining").get<std::int64_t>();
  } catch (const json::exception& e) {
    throw TransportError(std::string("malformed health response: ") + e.what());
  }
}

RemoteOracle::~RemoteOracle() = default;

std::optional<std::uint64_t> RemoteOracle::budget_remaining() const {
  const auto r = remaining_.load();
  if (r < 0) return std::nullopt;
  return static_cast<std::uint64_t>(r);
}

std::string RemoteOracle::post(const std::string& path, const std::string& body, int& status) {
  httplib::Client client(host_, port_);
  client.set_connection_timeout(5);
  client.set_read_timeout(300);
  auto res = client.Post(path, body, "application/json");
  if (!res) {
    throw TransportError("request to " + host_ + ":" + std::to_string(port_) + path +
                         " failed: " + httplib::to_string(res.error()));
  }
  status = res->status;
  return res->body;
}

namespace {

[[noreturn]] void raise_remote_error(int status, const std::string& text) {
  json body = json::parse(text, nullptr, false);
  if (body.is_discarded() || !body.contains("error")) {
    throw TransportError("HTTP " + std::to_string(status) + " with unparseable body");
  }
  const json& err = body["error"];
  const std::string code = err.value("code", "unknown");
  const std::string message = err.value("message", "");
  if (status == 429) {
    throw BudgetExhaustedError(err.value("used", std::uint64_t{0}), err.value("limit", std::uint64_t{0}),
                               err.value("attempted", std::uint64_t{0}));
  }
  if (status == 404 && code == "unknown_identity") throw UnknownIdentityError(err.value("id", std::string{}));
  if (status >= 500) throw TransportError("service error: " + message);
  throw ProtocolError(code, message);
}

}  // namespace

void RemoteOracle::enroll(const std::string& id, const Image& image) {
  if (image.geometry() != geometry_) {
    throw DimensionError("image geometry " + image.geometry().to_string() + " does not match service " +
                         geometry_.to_string());
  }
  json req = {{"protocol_version", kProtocolVersion}, {"id", id}, {"image", base64_encode(encode_netpbm(image))}};
  int status = 0;
  const std::string text = post("/v1/enroll", req.dump(), status);
  if (status != 200) raise_remote_error(status, text);
}

std::vector<double> RemoteOracle::do_score_batch(std::span<const Image> images, const std::string& id) {
  json payloads = json::array();
  for (const Image& img : images) payloads.push_back(base64_encode(encode_netpbm(img)));
  json req = {{"protocol_version", kProtocolVersion}, {"id", id}, {"images", std::move(payloads)}};
  int status = 0;
  const std::string text = post("/v1/score", req.dump(), status);
  if (status != 200) raise_remote_error(status, text);
  json body = json::parse(text, nullptr, false);
  try {
    auto scores = body.at("scores").get<std::vector<double>>();
    used_ = body.at("queries_used").get<std::uint64_t>();
    const json& rem = body.at("budget_remaining");
    remaining_ = rem.is_null() ? -1 : rem.get<std::int64_t>();
    return scores;
  } catch (const json::exception& e) {
    throw TransportError(std::string("malformed score response: ") + e.what());
  }
}

std::unique_ptr<RemoteOracle> connect(const std::string& endpoint) { return std::make_unique<RemoteOracle>(endpoint); }

}  // namespace facet
