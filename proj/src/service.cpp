#include <cmath>
#include <cstdlib>

#include <fmt/format.h>
#include <httplib.h>
#include <spdlog/spdlog.h>

#include "psynth/dataset.hpp"
#include "psynth/error.hpp"
#include "psynth/service.hpp"
#include "psynth/synthesis_request.hpp"

namespace psynth {
namespace {

HttpResponse json_response(int status, const nlohmann::ordered_json& j) {
  HttpResponse r;
  r.status = status;
  r.body = j.dump();
  return r;
}

HttpResponse error_response(int status, std::string_view code, const std::string& message, const std::string& field = {}) {
  nlohmann::ordered_json j = {{"error", code}, {"message", message}};
  if (!field.empty()) j["field"] = field;
  return json_response(status, j);
}

HttpResponse no_checkpoint() { return error_response(503, "NoCheckpoint", "no checkpoint is loaded"); }

}  // namespace

ServiceConfig service_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw Error(ErrorCode::InvalidConfig, "service config must be a JSON object");
  ServiceConfig c;
  try {
    c.host = j.value("host", c.host);
    c.port = j.value("port", c.port);
    if (j.contains("checkpoint") && !j.at("checkpoint").is_null()) {
      c.checkpoint = j.at("checkpoint").get<std::string>();
    }
    c.cors_origin = j.value("cors_origin", c.cors_origin);
    c.max_json_bytes = j.value("max_json_bytes", c.max_json_bytes);
    c.max_upload_seconds = j.value("max_upload_seconds", c.max_upload_seconds);
    c.max_upload_bytes = j.value("max_upload_bytes", c.max_upload_bytes);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("service config: ") + e.what());
  }
  if (c.port < 0 || c.port > 65535) throw Error(ErrorCode::InvalidConfig, "port must lie in [0, 65535]");
  return c;
}

void apply_env_overrides(ServiceConfig& cfg) {
  if (const char* port = std::getenv("PSYNTH_PORT"); port && *port) {
    char* end = nullptr;
    const long p = std::strtol(port, &end, 10);
    if (*end != '\0' || p < 0 || p > 65535) {
      throw Error(ErrorCode::InvalidConfig, std::string("PSYNTH_PORT is not a port: ") + port);
    }
    cfg.port = static_cast<int>(p);
  }
  if (const char* ckpt = std::getenv("PSYNTH_CKPT"); ckpt && *ckpt) cfg.checkpoint = ckpt;
}

std::vector<std::size_t> preview_indices(std::size_t n, std::size_t points) {
  std::vector<std::size_t> idx;
  if (n == 0 || points == 0) return idx;
  if (points == 1) return {0};
  idx.reserve(points);
  for (std::size_t i = 0; i < points; ++i) {
    idx.push_back(static_cast<std::size_t>(
        std::llround(static_cast<double>(i) * static_cast<double>(n - 1) / static_cast<double>(points - 1))));
  }
  return idx;
}

SynthService::SynthService(ServiceConfig cfg) : cfg_(std::move(cfg)) {}

void SynthService::set_checkpoint(std::shared_ptr<const Checkpoint> ckpt) {
  std::lock_guard lock(mu_);
  ckpt_ = std::move(ckpt);
}

void SynthService::reload(const std::filesystem::path& path) {
  auto fresh = std::make_shared<const Checkpoint>(load_checkpoint(path));
  spdlog::info("loaded checkpoint {} ({})", path.string(), fresh->hash);
  set_checkpoint(std::move(fresh));
}

std::shared_ptr<const Checkpoint> SynthService::checkpoint() const {
  std::lock_guard lock(mu_);
  return ckpt_;
}

HttpResponse SynthService::healthz() const {
  HttpResponse r;
  r.content_type = "text/plain";
  r.body = "ok";
  return r;
}

HttpResponse SynthService::model() const {
  const auto ckpt = checkpoint();
  if (!ckpt) return no_checkpoint();
  auto names = nlohmann::ordered_json::array();
  for (auto n : kFeatureNames) names.push_back(n);
  nlohmann::ordered_json j = {{"config", to_json(ckpt->config)},
                              {"checkpoint_hash", ckpt->hash},
                              {"feature_names", names},
                              {"normalizer", to_json(ckpt->normalizer)},
                              {"loss_mode", to_string(ckpt->loss.mode)},
                              {"loss", to_json(ckpt->loss)},
                              {"parameter_count", ckpt->params.size()},
                              {"metadata", ckpt->metadata}};
  return json_response(200, j);
}

HttpResponse SynthService::synthesize(const std::string& body) const {
  const auto ckpt = checkpoint();
  if (!ckpt) return no_checkpoint();
  if (body.size() > cfg_.max_json_bytes) {
    return error_response(413, "PayloadTooLarge", "request body exceeds " + std::to_string(cfg_.max_json_bytes) + " bytes");
  }
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(body);
  } catch (const nlohmann::json::parse_error& e) {
    return error_response(400, "InvalidJson", e.what());
  }
  const auto req = parse_synthesis_request(j);
  if (!req) return error_response(422, "ValidationError", req.error.field + " " + req.error.message, req.error.field);
  try {
    const Waveform y = psynth::synthesize(*ckpt, *req.value);
    const auto bytes = encode_wav(y);
    HttpResponse r;
    r.content_type = "audio/wav";
    r.body.assign(bytes.begin(), bytes.end());
    r.headers["X-Checkpoint-Hash"] = ckpt->hash;
    return r;
  } catch (const Error& e) {
    return error_response(500, to_string(e.code()), e.what());
  }
}

HttpResponse SynthService::analyze(const std::string& wav_bytes, const std::string& requested) const {
  const auto ckpt = checkpoint();
  if (!ckpt) return no_checkpoint();
  if (wav_bytes.size() > cfg_.max_upload_bytes) {
    return error_response(413, "PayloadTooLarge", "upload exceeds " + std::to_string(cfg_.max_upload_bytes) + " bytes");
  }

  std::optional<TimbralVector> wanted;
  if (!requested.empty()) {
    nlohmann::json rj;
    try {
      rj = nlohmann::json::parse(requested);
    } catch (const nlohmann::json::parse_error& e) {
      return error_response(400, "InvalidJson", std::string("requested: ") + e.what(), "requested");
    }
    const auto fs = parse_features(rj);
    if (!fs) return error_response(422, "ValidationError", fs.error.field + " " + fs.error.message, fs.error.field);
    wanted = *fs.value;
  }

  std::pair<Waveform, AudioFileMeta> decoded;
  try {
    decoded = decode_wav(std::vector<std::uint8_t>(wav_bytes.begin(), wav_bytes.end()), "upload");
  } catch (const Error& e) {
    return error_response(415, to_string(e.code()), e.what());
  }
  const auto& [raw, meta] = decoded;
  const double duration = meta.original_rate > 0 ? static_cast<double>(meta.original_length) / meta.original_rate : 0.0;
  if (duration > cfg_.max_upload_seconds) {
    return error_response(413, "TooLong", fmt::format("upload lasts {:.2f} s, limit {} s", duration, cfg_.max_upload_seconds));
  }

  try {
    const PreprocessParams pp;
    Warnings warnings;
    Waveform x = preprocess(raw, pp, &warnings);
    const TrainingRecord rec = make_record("upload", std::move(x), pp);
    const TimbralVector fs = normalize(ckpt->normalizer, rec.fs_raw);

    auto preview = nlohmann::ordered_json::array();
    const auto idx = preview_indices(rec.e.size(), cfg_.preview_points);
    for (auto i : idx) preview.push_back(rec.e.values[i]);
    nlohmann::ordered_json j = {{"features_raw", to_json(rec.fs_raw)},
                                {"features_normalized", to_json(fs)},
                                {"envelope_preview", preview},
                                {"envelope_preview_indices", idx},
                                {"duration_s", duration},
                                {"sample_rate", meta.original_rate},
                                {"warnings", warnings},
                                {"checkpoint_hash", ckpt->hash}};
    if (wanted) {
      nlohmann::ordered_json diff;
      for (std::size_t i = 0; i < kFeatureCount; ++i) diff[std::string(kFeatureNames[i])] = fs[i] - (*wanted)[i];
      j["diagnostics"] = {{"requested", to_json(*wanted)}, {"measured_minus_requested", diff}};
    }
    return json_response(200, j);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::NoSignal || e.code() == ErrorCode::SilentInput) {
      return error_response(422, "SilentInput", e.what());
    }
    return error_response(422, to_string(e.code()), e.what());
  }
}

HttpResponse SynthService::envelope_preview(const std::map<std::string, std::string>& query) const {
  nlohmann::json spec = {{"kind", "ad"}, {"attack_ms", 5.0}, {"decay_ms", 50.0}, {"amplitude", 1.0}};
  std::size_t points = cfg_.preview_points;
  for (const auto& [key, text] : query) {
    char* end = nullptr;
    const double v = std::strtod(text.c_str(), &end);
    if (text.empty() || *end != '\0') return error_response(422, "ValidationError", key + " must be a number", key);
    if (key == "points") {
      if (v < 2 || v > static_cast<double>(kSoundLength) || v != std::floor(v)) {
        return error_response(422, "ValidationError", "points must be an integer in [2, 16000]", key);
      }
      points = static_cast<std::size_t>(v);
    } else {
      spec[key] = v;
    }
  }
  const auto env = parse_envelope(spec);
  if (!env) return error_response(422, "ValidationError", env.error.field + " " + env.error.message, env.error.field);
  const Envelope e = build_envelope(*env.value);
  const auto idx = preview_indices(e.size(), points);
  auto values = nlohmann::ordered_json::array();
  for (auto i : idx) values.push_back(e.values[i]);
  return json_response(200, {{"envelope", to_json(*env.value)},
                             {"sample_rate", e.sample_rate},
                             {"length", e.size()},
                             {"indices", idx},
                             {"values", values}});
}

HttpServer::HttpServer(SynthService& service) : service_(service), server_(std::make_unique<httplib::Server>()) {
  auto& srv = *server_;
  const std::string origin = service_.config().cors_origin;
  srv.set_payload_max_length(service_.config().max_upload_bytes);

  auto send = [origin](httplib::Response& res, const HttpResponse& r) {
    res.status = r.status;
    for (const auto& [k, v] : r.headers) res.set_header(k, v);
    if (!origin.empty()) {
      res.set_header("Access-Control-Allow-Origin", origin);
      res.set_header("Access-Control-Expose-Headers", "X-Checkpoint-Hash");
    }
    res.set_content(r.body, r.content_type);
  };

  srv.Get("/healthz", [this, send](const httplib::Request&, httplib::Response& res) { send(res, service_.healthz()); });
  srv.Get("/api/v1/model", [this, send](const httplib::Request&, httplib::Response& res) { send(res, service_.model()); });
  srv.Post("/api/v1/synthesize",
           [this, send](const httplib::Request& req, httplib::Response& res) { send(res, service_.synthesize(req.body)); });
  srv.Post("/api/v1/analyze", [this, send](const httplib::Request& req, httplib::Response& res) {
    std::string requested = req.get_param_value("requested");
    if (req.is_multipart_form_data()) {
      if (!req.has_file("file")) {
        send(res, error_response(422, "ValidationError", "multipart upload needs a 'file' part", "file"));
        return;
      }
      if (req.has_file("requested")) requested = req.get_file_value("requested").content;
      send(res, service_.analyze(req.get_file_value("file").content, requested));
    } else {
      send(res, service_.analyze(req.body, requested));
    }
  });
  srv.Get("/api/v1/envelope", [this, send](const httplib::Request& req, httplib::Response& res) {
    std::map<std::string, std::string> q;
    for (const auto& [k, v] : req.params) q[k] = v;
    send(res, service_.envelope_preview(q));
  });
  if (!origin.empty()) {
    srv.Options(R"(/.*)", [origin](const httplib::Request&, httplib::Response& res) {
      res.status = 204;
      res.set_header("Access-Control-Allow-Origin", origin);
      res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
      res.set_header("Access-Control-Allow-Headers", "Content-Type");
      res.set_header("Access-Control-Max-Age", "600");
    });
  }
  srv.set_error_handler([send](const httplib::Request&, httplib::Response& res) {
    if (res.status == 413) {
      send(res, error_response(413, "PayloadTooLarge", "request body too large"));
    } else if (res.status == 404) {
      send(res, error_response(404, "NotFound", "no such endpoint"));
    }
  });
  srv.set_logger([](const httplib::Request& req, const httplib::Response& res) {
    spdlog::info("{} {} -> {}", req.method, req.path, res.status);
  });
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind() {
  const auto& cfg = service_.config();
  if (cfg.port == 0) {
    const int port = server_->bind_to_any_port(cfg.host);
    if (port < 0) throw Error(ErrorCode::IoError, "cannot bind " + cfg.host);
    return port;
  }
  if (!server_->bind_to_port(cfg.host, cfg.port)) {
    throw Error(ErrorCode::IoError, fmt::format("cannot bind {}:{}", cfg.host, cfg.port));
  }
  return cfg.port;
}

void HttpServer::listen_after_bind() { server_->listen_after_bind(); }

void HttpServer::stop() {
  if (server_) server_->stop();
}

void HttpServer::wait_until_ready() const { server_->wait_until_ready(); }

}  // namespace psynth
