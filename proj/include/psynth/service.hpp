#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>

#include <json.hpp>

#include "psynth/checkpoint.hpp"

namespace httplib {
class Server;
}

namespace psynth {

struct ServiceConfig {
  std::string host = "0.0.0.0";
  int port = 8080;
  std::optional<std::filesystem::path> checkpoint;
  std::string cors_origin;  // empty disables CORS headers
  std::size_t max_json_bytes = 1 << 20;
  double max_upload_seconds = 10.0;
  std::size_t max_upload_bytes = 32u << 20;
  std::size_t preview_points = 200;
};

// Keys: host, port, checkpoint, cors_origin, max_json_bytes, max_upload_seconds, max_upload_bytes.
ServiceConfig service_config_from_json(const nlohmann::json& j);
// PSYNTH_PORT and PSYNTH_CKPT override the corresponding fields.
void apply_env_overrides(ServiceConfig& cfg);

struct HttpResponse {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;
  std::map<std::string, std::string> headers;
};

/// Request handling without the network layer; the HTTP server routes into these.
class SynthService {
 public:
  explicit SynthService(ServiceConfig cfg = {});

  // Atomically replaces the checkpoint; in-flight requests keep their snapshot.
  void set_checkpoint(std::shared_ptr<const Checkpoint> ckpt);
  void reload(const std::filesystem::path& path);
  std::shared_ptr<const Checkpoint> checkpoint() const;

  HttpResponse healthz() const;
  HttpResponse model() const;
  HttpResponse synthesize(const std::string& body) const;
  // `requested` optionally carries a features object compared against the measurement.
  HttpResponse analyze(const std::string& wav_bytes, const std::string& requested = {}) const;
  HttpResponse envelope_preview(const std::map<std::string, std::string>& query) const;

  const ServiceConfig& config() const noexcept { return cfg_; }

 private:
  ServiceConfig cfg_;
  mutable std::mutex mu_;
  std::shared_ptr<const Checkpoint> ckpt_;
};

/// HTTP front end. listen() blocks until stop() is called from another thread.
class HttpServer {
 public:
  explicit HttpServer(SynthService& service);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  // Binds host:port (port 0 picks a free port) and returns the bound port.
  int bind();
  void listen_after_bind();
  void stop();
  void wait_until_ready() const;

 private:
  SynthService& service_;
  std::unique_ptr<httplib::Server> server_;
};

// Points sampled at indices round(i * (n - 1) / (points - 1)).
std::vector<std::size_t> preview_indices(std::size_t n, std::size_t points);

}  // namespace psynth
