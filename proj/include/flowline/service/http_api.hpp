#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include <httplib.h>
// <resolv.h>, pulled in by httplib, defines _res, which Eigen uses as a parameter name.
#ifdef _res
#undef _res
#endif
#include <nlohmann/json.hpp>

#include "flowline/core/error.hpp"
#include "flowline/core/flo_io.hpp"
#include "flowline/core/image_io.hpp"
#include "flowline/etf.hpp"
#include "flowline/render.hpp"
#include "flowline/service/session_store.hpp"
#include "flowline/version.hpp"

namespace flowline::service {

struct ServiceConfig {
  std::size_t cache_bytes = std::size_t{512} << 20;
  std::size_t max_pixels = std::size_t{2048} * 2048;
  std::size_t max_body_bytes = std::size_t{64} << 20;
  std::filesystem::path static_dir;  ///< served under "/" when set
  EtfParams etf;
};

/// Transport-independent result of one API call.
struct ApiResponse {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;

  static ApiResponse json(int status, const nlohmann::json& j) { return {status, "application/json", j.dump()}; }
  static ApiResponse error(int status, const std::string& message) { return json(status, {{"error", message}}); }
  static ApiResponse binary(const Bytes& b, std::string type) {
    return {200, std::move(type), std::string(b.begin(), b.end())};
  }
};

/// Endpoint logic over a session store.
class Api {
 public:
  explicit Api(ServiceConfig config) : config_(std::move(config)), store_(config_.cache_bytes, config_.etf) {}

  /// POST /api/images
  ApiResponse upload_image(const std::string& body) {
    ImageBuf img;
    try {
      img = decode_image(as_bytes(body));
    } catch (const DecodeError& e) {
      return ApiResponse::error(400, e.what());
    }
    if (img.pixel_count() > config_.max_pixels)
      return ApiResponse::error(413, "image has " + std::to_string(img.pixel_count()) + " pixels, limit is " +
                                         std::to_string(config_.max_pixels));
    if (img.width() < 3 || img.height() < 3) return ApiResponse::error(400, "image must be at least 3x3");
    const int w = img.width(), h = img.height();
    const std::string id = store_.put_image(std::move(img), Bytes(body.begin(), body.end()));
    return ApiResponse::json(200, {{"image_id", id}, {"width", w}, {"height", h}});
  }

  /// GET /api/images/{id}
  ApiResponse get_image(const std::string& id) {
    auto entry = store_.image(id);
    if (!entry) return ApiResponse::error(404, "unknown image id");
    return ApiResponse::binary(entry->png, "image/png");
  }

  /// GET /api/images/{id}/etf?format=png|flo
  ApiResponse get_etf(const std::string& id, const std::string& format) {
    if (format != "png" && format != "flo") return ApiResponse::error(400, "format must be png or flo");
    auto field = store_.etf(id);
    if (!field) return ApiResponse::error(404, "unknown image id");
    if (format == "flo") return ApiResponse::binary(encode_flo(*field), "application/octet-stream");
    return ApiResponse::binary(encode_png(visualize_field(*field)), "image/png");
  }

  /// POST /api/lcm?image_id=...
  ApiResponse upload_lcm(const std::string& image_id, const std::string& body) {
    if (image_id.empty()) return ApiResponse::error(400, "image_id query parameter is required");
    auto img = store_.image(image_id);
    if (!img) return ApiResponse::error(404, "unknown image id");
    ImageBuf raster;
    try {
      raster = decode_image(as_bytes(body));
    } catch (const DecodeError& e) {
      return ApiResponse::error(400, e.what());
    }
    if (raster.width() != img->image.width() || raster.height() != img->image.height())
      return ApiResponse::error(400, "LCM dimensions differ from the image");
    const std::string id = store_.put_lcm(LineControlMatrix::from_image(raster), image_id);
    return ApiResponse::json(200, {{"lcm_id", id}});
  }

  /// POST /api/render {image_id, alpha?, lcm_id?, passes?}
  ApiResponse render(const std::string& body) {
    nlohmann::json req;
    try {
      req = nlohmann::json::parse(body);
    } catch (const nlohmann::json::exception&) {
      return ApiResponse::error(400, "body is not valid JSON");
    }
    if (!req.is_object()) return ApiResponse::error(400, "body must be a JSON object");
    if (!req.contains("image_id") || !req["image_id"].is_string())
      return ApiResponse::error(400, "image_id (string) is required");
    const bool has_alpha = req.contains("alpha") && !req["alpha"].is_null();
    const bool has_lcm = req.contains("lcm_id") && !req["lcm_id"].is_null();
    if (has_alpha == has_lcm) return ApiResponse::error(400, "exactly one of alpha and lcm_id is required");
    if (has_alpha && !req["alpha"].is_number()) return ApiResponse::error(400, "alpha must be a number");
    if (has_lcm && !req["lcm_id"].is_string()) return ApiResponse::error(400, "lcm_id must be a string");
    int passes = 2;
    if (req.contains("passes")) {
      if (!req["passes"].is_number_integer()) return ApiResponse::error(400, "passes must be an integer");
      passes = req["passes"].get<int>();
    }
    const double alpha = has_alpha ? req["alpha"].get<double>() : 0.5;
    try {
      check_render_args(alpha, passes);
    } catch (const ParameterError& e) {
      return ApiResponse::error(422, e.what());
    }

    const std::string image_id = req["image_id"].get<std::string>();
    auto img = store_.image(image_id);
    if (!img) return ApiResponse::error(404, "unknown image id");
    std::shared_ptr<const LcmEntry> lcm;
    if (has_lcm) {
      lcm = store_.lcm(req["lcm_id"].get<std::string>());
      if (!lcm) return ApiResponse::error(404, "unknown lcm id");
      if (lcm->lcm.width() != img->image.width() || lcm->lcm.height() != img->image.height())
        return ApiResponse::error(400, "LCM dimensions differ from the image");
    }
    auto field = store_.etf(image_id);
    if (!field) return ApiResponse::error(404, "unknown image id");
    const Bytes png = has_lcm ? render_png(img->image, *field, lcm->lcm, passes) : render_png(img->image, *field, alpha, passes);
    return ApiResponse::binary(png, "image/png");
  }

  ApiResponse health() const { return ApiResponse::json(200, {{"status", "ok"}, {"version", kVersion}}); }

  SessionStore& store() { return store_; }
  const ServiceConfig& config() const { return config_; }

 private:
  static std::span<const std::uint8_t> as_bytes(const std::string& s) {
    return {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()};
  }

  ServiceConfig config_;
  SessionStore store_;
};

/// HTTP/1.1 binding of Api on cpp-httplib's threaded server.
class HttpServer {
 public:
  explicit HttpServer(ServiceConfig config) : api_(std::move(config)) {
    server_.set_payload_max_length(api_.config().max_body_bytes);
    auto send = [](httplib::Response& res, const ApiResponse& r) {
      res.status = r.status;
      res.set_content(r.body, r.content_type);
    };
    auto guarded = [send](auto fn) {
      return [send, fn](const httplib::Request& req, httplib::Response& res) {
        try {
          send(res, fn(req));
        } catch (const std::exception& e) {
          send(res, ApiResponse::error(500, e.what()));
        }
      };
    };
    server_.Get("/api/health", guarded([this](const httplib::Request&) { return api_.health(); }));
    server_.Post("/api/images", guarded([this](const httplib::Request& r) { return api_.upload_image(r.body); }));
    server_.Get(R"(/api/images/([0-9a-f]+))",
                guarded([this](const httplib::Request& r) { return api_.get_image(r.matches[1]); }));
    server_.Get(R"(/api/images/([0-9a-f]+)/etf)", guarded([this](const httplib::Request& r) {
                  const std::string fmt = r.has_param("format") ? r.get_param_value("format") : "png";
                  return api_.get_etf(r.matches[1], fmt);
                }));
    server_.Post("/api/lcm", guarded([this](const httplib::Request& r) {
                   return api_.upload_lcm(r.has_param("image_id") ? r.get_param_value("image_id") : "", r.body);
                 }));
    server_.Post("/api/render", guarded([this](const httplib::Request& r) { return api_.render(r.body); }));
    if (!api_.config().static_dir.empty()) server_.set_mount_point("/", api_.config().static_dir.string());
  }

  /// Binds and serves until stop(). Returns false if the port cannot be bound.
  bool listen(const std::string& host, int port) { return server_.listen(host, port); }

  /// Binds an ephemeral port; serve with listen_after_bind().
  int bind_any(const std::string& host) { return server_.bind_to_any_port(host); }
  bool listen_after_bind() { return server_.listen_after_bind(); }
  void wait_until_ready() const { server_.wait_until_ready(); }
  void stop() { server_.stop(); }

  Api& api() { return api_; }

 private:
  Api api_;
  httplib::Server server_;
};

}  // namespace flowline::service
