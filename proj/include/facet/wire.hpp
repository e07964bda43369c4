#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "facet/image.hpp"
#include "facet/oracle.hpp"

namespace httplib {
class Server;
class Client;
}  // namespace httplib

namespace facet {

// HTTP/1.1 + JSON scoring protocol.
//
//   GET  /v1/health  -> {"protocol_version":1,"width":W,"height":H,"channels":C,
//                        "queries_used":n,"budget_limit":n|null,"budget_remaining":n|null}
//   POST /v1/score   {"protocol_version":1,"id":"...","images":["<base64 netpbm>",...]}
//                    -> {"scores":[...],"queries_used":n,"budget_remaining":n|null}
//   POST /v1/enroll  {"protocol_version":1,"id":"...","image":"<base64 netpbm>"}
//                    -> {"enrolled":"..."}
//
// Errors are {"error":{"code":"...","message":"..."}} with status 400 (malformed_request,
// unsupported_protocol, empty_batch, decode_error, geometry_mismatch), 404
// (unknown_identity) or 429 (budget_exhausted; the error object also carries used,
// limit and attempted). Images travel as 8-bit P5/P6 files.
inline constexpr int kProtocolVersion = 1;

std::string base64_encode(std::span<const unsigned char> bytes);
// Throws FormatError on characters outside the standard alphabet or bad padding.
std::vector<unsigned char> base64_decode(std::string_view text);

class ScoringService {
 public:
  // Binds immediately; throws TransportError if the address cannot be bound. Port 0
  // picks a free port. Requests are served on a background thread until stop().
  ScoringService(std::shared_ptr<SimilarityOracle> oracle, const std::string& host, int port);
  ~ScoringService();
  ScoringService(const ScoringService&) = delete;
  ScoringService& operator=(const ScoringService&) = delete;

  int port() const noexcept { return port_; }
  const std::string& host() const noexcept { return host_; }
  std::string endpoint() const;

  void stop();
  // Blocks until the service stops.
  void wait();

 private:
  void install_routes();

  std::shared_ptr<SimilarityOracle> oracle_;
  std::unique_ptr<httplib::Server> server_;
  std::string host_;
  int port_ = 0;
  std::thread thread_;
};

// bind_address is "host:port". The oracle must have the given geometry.
std::unique_ptr<ScoringService> serve(std::shared_ptr<SimilarityOracle> oracle, const std::string& bind_address,
                                      const Geometry& geometry);

// Client side of the protocol. queries_used() mirrors the server's count as of the last
// response. A retried batch is billed again by the server; nothing is retried implicitly.
class RemoteOracle final : public SimilarityOracle {
 public:
  explicit RemoteOracle(const std::string& endpoint);
  ~RemoteOracle() override;

  Geometry geometry() const override { return geometry_; }
  void enroll(const std::string& id, const Image& image) override;
  std::uint64_t queries_used() const override { return used_.load(); }
  std::optional<std::uint64_t> budget_remaining() const override;
  std::optional<std::uint64_t> budget() const override { return limit_; }

 protected:
  std::vector<double> do_score_batch(std::span<const Image> images, const std::string& id) override;

 private:
  std::string post(const std::string& path, const std::string& body, int& status);

  std::string host_;
  int port_ = 0;
  Geometry geometry_;
  std::optional<std::uint64_t> limit_;
  std::atomic<std::uint64_t> used_{0};
  std::atomic<std::int64_t> remaining_{-1};
};

// endpoint is "http://host:port" (scheme optional). Performs a health check; throws
// TransportError when the service is unreachable.
std::unique_ptr<RemoteOracle> connect(const std::string& endpoint);

}  // namespace facet
