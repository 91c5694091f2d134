#pragma once

#include <httplib.h>
#include <json.hpp>

#include <chrono>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <utility>

#include "pffl/errors.hpp"
#include "pffl/oracle.hpp"
#include "pffl/tensor_format.hpp"

namespace pffl {

inline constexpr std::size_t kMaxWireBodyBytes = 64ull * 1024 * 1024;

struct BindAddress {
  std::string host;
  int port = 0;  // 0 picks an ephemeral port
};

inline BindAddress parse_bind_address(const std::string& s) {
  const auto colon = s.rfind(':');
  if (colon == std::string::npos || colon == 0 || colon + 1 >= s.size())
    throw InvalidArgumentError("bind address must be host:port, got '" + s + "'");
  BindAddress a;
  a.host = s.substr(0, colon);
  try {
    a.port = std::stoi(s.substr(colon + 1));
  } catch (const std::exception&) {
    throw InvalidArgumentError("bad port in bind address '" + s + "'");
  }
  if (a.port < 0 || a.port > 65535)
    throw InvalidArgumentError("port out of range in '" + s + "'");
  return a;
}

// Serves one oracle over HTTP: POST /classify with a binary tensor body
// returns {"label": k}. Malformed or mismatched bodies get 400, oversize
// bodies 413, server-side budget exhaustion 503.
class OracleService {
public:
  explicit OracleService(Oracle& oracle) : oracle_(oracle) {
    server_.set_payload_max_length(kMaxWireBodyBytes);
    server_.Post("/classify", [this](const httplib::Request& req, httplib::Response& res) {
      nlohmann::json j;
      try {
        const Image img = tensor_from_bytes(req.body);
        j["label"] = oracle_.classify(img);
        res.set_content(j.dump(), "application/json");
        return;
      } catch (const BudgetExhaustedError& e) {
        res.status = 503;
        j["error"] = e.what();
      } catch (const Error& e) {
        res.status = 400;
        j["error"] = e.what();
      }
      res.set_content(j.dump(), "application/json");
    });
  }

  ~OracleService() { stop(); }
  OracleService(const OracleService&) = delete;
  OracleService& operator=(const OracleService&) = delete;

  // Binds and starts the listener thread; returns the bound port.
  int start(const std::string& host, int port) {
    if (thread_.joinable()) throw InvalidArgumentError("service already started");
    host_ = host;
    if (port == 0) {
      port_ = server_.bind_to_any_port(host.c_str());
      if (port_ < 0) throw BindFailureError("cannot bind to " + host);
    } else {
      if (!server_.bind_to_port(host.c_str(), port))
        throw BindFailureError("cannot bind to " + host + ":" + std::to_string(port));
      port_ = port;
    }
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
    return port_;
  }

  void stop() {
    if (server_.is_running()) server_.stop();
    if (thread_.joinable()) thread_.join();
  }

  int port() const { return port_; }
  std::string url() const { return "http://" + host_ + ":" + std::to_string(port_); }

private:
  Oracle& oracle_;
  httplib::Server server_;
  std::thread thread_;
  std::string host_;
  int port_ = 0;
};

inline std::unique_ptr<OracleService> serve(Oracle& oracle, const std::string& bind) {
  auto svc = std::make_unique<OracleService>(oracle);
  const BindAddress a = parse_bind_address(bind);
  svc->start(a.host, a.port);
  return svc;
}

// Client-side oracle speaking the same protocol. Transport failures are
// retried up to max_retries times with exponential backoff; a classification
// counts exactly once on the local ledger once a response arrives, no matter
// how many transport retries it took. Non-200 responses and malformed bodies
// are protocol errors (never retried); spent retries raise
// RemoteUnavailableError.
class RemoteOracle : public Oracle {
public:
  RemoteOracle(const std::string& url, Shape shape, int classes = -1,
               std::optional<std::uint64_t> budget = std::nullopt,
               int max_retries = 3, int initial_backoff_ms = 100)
      : Oracle(budget), url_(normalize_url(url)), shape_(shape), classes_(classes),
        max_retries_(max_retries), backoff_ms_(initial_backoff_ms),
        client_(std::make_unique<httplib::Client>(url_)) {
    client_->set_connection_timeout(10, 0);
    client_->set_read_timeout(30, 0);
    client_->set_write_timeout(30, 0);
  }

  Shape input_shape() const override { return shape_; }
  int num_classes() const override { return classes_; }
  const std::string& url() const { return url_; }

  Label classify(const Image& img) override {
    check_shape(img);
    if (ledger_.at_budget())
      throw BudgetExhaustedError("query budget of " +
                                 std::to_string(*ledger_.budget()) + " exhausted");
    const Label l = post_classify(img);
    ledger_.charge();
    return l;
  }

protected:
  Label predict(const Image& img) const override { return post_classify(img); }

private:
  static std::string normalize_url(const std::string& url) {
    if (url.rfind("http://", 0) == 0 || url.rfind("https://", 0) == 0) return url;
    return "http://" + url;
  }

  Label post_classify(const Image& img) const {
    const std::string body = tensor_to_bytes(img);
    std::lock_guard<std::mutex> lock(mu_);
    for (int attempt = 0; attempt <= max_retries_; ++attempt) {
      if (attempt > 0)
        std::this_thread::sleep_for(
            std::chrono::milliseconds(backoff_ms_ << (attempt - 1)));
      auto res = client_->Post("/classify", body, "application/octet-stream");
      if (!res) continue;  // transport error
      if (res->status != 200)
        throw ProtocolError("server returned status " + std::to_string(res->status) +
                            ": " + res->body.substr(0, 200));
      const auto j = nlohmann::json::parse(res->body, nullptr, false);
      if (j.is_discarded() || !j.contains("label") ||
          !j["label"].is_number_integer())
        throw ProtocolError("malformed classification response");
      return j["label"].get<int>();
    }
    throw RemoteUnavailableError("no response from " + url_ + " after " +
                                 std::to_string(max_retries_ + 1) + " attempts");
  }

  std::string url_;
  Shape shape_;
  int classes_;
  int max_retries_;
  int backoff_ms_;
  mutable std::mutex mu_;
  mutable std::unique_ptr<httplib::Client> client_;
};

inline std::unique_ptr<RemoteOracle> remote_oracle(
    const std::string& url, Shape shape, int classes = -1,
    std::optional<std::uint64_t> budget = std::nullopt, int max_retries = 3,
    int initial_backoff_ms = 100) {
  return std::make_unique<RemoteOracle>(url, shape, classes, budget, max_retries,
                                        initial_backoff_ms);
}

}  // namespace pffl
