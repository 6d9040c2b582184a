#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>

#include "scalepart/inference.hpp"
#include "scalepart/mesh.hpp"
#include "scalepart/model_bundle.hpp"

namespace httplib {
class Server;
}

namespace scalepart::service {

struct Response {
  int status = 200;
  std::string body;  // JSON
};

// Registered shape with lazily computed per-model features.
struct ShapeSession {
  std::string id;
  data::AnnotatedCloud cloud;
  std::chrono::system_clock::time_point created;
  std::mutex feature_mutex;
  std::map<std::string, std::shared_ptr<const PreparedShape>> features;  // keyed by model id
};

// Transport-independent request handling. Every non-2xx response carries
// {"error": {"code": ..., "message": ...}} with code NOT_FOUND, INVALID_PROMPT, INVALID_SCALE,
// MODEL_NOT_LOADED or BAD_FORMAT.
class Service {
 public:
  struct Options {
    std::size_t synthetic_points = 2048;
    std::optional<std::filesystem::path> shape_dir;  // registered uploads are also written here
  };

  Service() : Service(Options{}) {}
  explicit Service(Options opts);

  Response handle(const std::string& method, const std::string& path, const std::string& body,
                  const std::string& content_type = "application/json");

  // Loads a bundle directly (used by `serve --model`); throws on failure.
  std::string load_model(const std::filesystem::path& path);
  std::string register_shape(data::AnnotatedCloud cloud);

 private:
  struct LoadedModel {
    std::string id;
    std::shared_ptr<const SegmentationModel> model;
  };

  Response load_model_request(const std::string& body);
  Response create_shape(const std::string& body, const std::string& content_type);
  Response get_shape(const std::string& id);
  Response segment(const std::string& id, const std::string& body);
  Response full_segment(const std::string& id, const std::string& body);

  std::shared_ptr<ShapeSession> find_shape(const std::string& id);
  LoadedModel current_model();
  std::shared_ptr<const PreparedShape> features_for(ShapeSession& shape, const LoadedModel& model);

  Options opts_;
  std::shared_mutex model_mutex_;
  LoadedModel model_;
  std::uint64_t model_counter_ = 0;
  std::mutex registry_mutex_;
  std::map<std::string, std::shared_ptr<ShapeSession>> shapes_;
  std::uint64_t shape_counter_ = 0;
};

// Routes every /api endpoint of `service` on `server`, with CORS headers.
void mount(httplib::Server& server, Service& service);

// Standard base64 (RFC 4648) decoding; whitespace is ignored. Throws FormatError on bad input.
std::string base64_decode(const std::string& in);

}  // namespace scalepart::service
