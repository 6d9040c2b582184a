#include "scalepart/service.hpp"

#include <httplib.h>
#include <json.hpp>

#include <cmath>

#include "scalepart/dataset_io.hpp"
#include "scalepart/error.hpp"
#include "scalepart/synthetic.hpp"

namespace scalepart::service {

namespace {

using json = nlohmann::json;

struct ApiError {
  int status;
  std::string code;
  std::string message;
};

[[noreturn]] void fail(int status, std::string code, std::string message) {
  throw ApiError{status, std::move(code), std::move(message)};
}

Response reply(const json& j, int status = 200) { return {status, j.dump()}; }

Response error_reply(const ApiError& e) {
  return reply(json{{"error", {{"code", e.code}, {"message", e.message}}}}, e.status);
}

json parse_body(const std::string& body) {
  if (body.empty()) return json::object();
  try {
    json j = json::parse(body);
    if (!j.is_object()) fail(400, "BAD_FORMAT", "request body must be a JSON object");
    return j;
  } catch (const json::parse_error& e) {
    fail(400, "BAD_FORMAT", std::string("malformed JSON: ") + e.what());
  }
}

double number_or(const json& j, const char* key, double fallback, const char* code = "BAD_FORMAT") {
  if (!j.contains(key) || j[key].is_null()) return fallback;
  if (!j[key].is_number()) fail(400, code, std::string(key) + " must be a number");
  return j[key].get<double>();
}

}  // namespace

std::string base64_decode(const std::string& in) {
  auto value = [](char c) -> int {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+' || c == '-') return 62;
    if (c == '/' || c == '_') return 63;
    return -1;
  };
  std::string out;
  std::uint32_t acc = 0;
  int bits = 0;
  bool padding = false;
  for (char c : in) {
    if (c == ' ' || c == '\n' || c == '\r' || c == '\t') continue;
    if (c == '=') {
      padding = true;
      continue;
    }
    const int v = value(c);
    if (v < 0 || padding) throw FormatError("invalid base64 payload");
    acc = (acc << 6) | std::uint32_t(v);
    bits += 6;
    if (bits >= 8) {
      bits -= 8;
      out.push_back(static_cast<char>((acc >> bits) & 0xff));
    }
  }
  if (bits >= 6) throw FormatError("truncated base64 payload");
  return out;
}

Service::Service(Options opts) : opts_(std::move(opts)) {}

std::string Service::load_model(const std::filesystem::path& path) {
  auto model = std::make_shared<const SegmentationModel>(scalepart::load_model(path));
  if (!model->decoder) throw FormatError("bundle has no decoder tensors");
  std::unique_lock lock(model_mutex_);
  model_.id = "model-" + std::to_string(++model_counter_);
  model_.model = std::move(model);
  return model_.id;
}

std::string Service::register_shape(data::AnnotatedCloud cloud) {
  auto session = std::make_shared<ShapeSession>();
  session->created = std::chrono::system_clock::now();
  {
    std::lock_guard lock(registry_mutex_);
    session->id = "shape-" + std::to_string(++shape_counter_);
    cloud.source_id = session->id;
    session->cloud = std::move(cloud);
    shapes_[session->id] = session;
  }
  if (opts_.shape_dir) {
    std::filesystem::create_directories(*opts_.shape_dir);
    data::dataset_write({session->cloud}, *opts_.shape_dir / (session->id + ".pcpd"));
  }
  return session->id;
}

std::shared_ptr<ShapeSession> Service::find_shape(const std::string& id) {
  std::lock_guard lock(registry_mutex_);
  auto it = shapes_.find(id);
  if (it == shapes_.end()) fail(404, "NOT_FOUND", "unknown shape id '" + id + "'");
  return it->second;
}

Service::LoadedModel Service::current_model() {
  std::shared_lock lock(model_mutex_);
  if (!model_.model) fail(503, "MODEL_NOT_LOADED", "no model loaded; POST /api/models/load first");
  return model_;
}

std::shared_ptr<const PreparedShape> Service::features_for(ShapeSession& shape, const LoadedModel& model) {
  std::lock_guard lock(shape.feature_mutex);
  auto it = shape.features.find(model.id);
  if (it != shape.features.end()) return it->second;
  auto prepared = std::make_shared<const PreparedShape>(
      prepare_shape(model.model->encoder, *model.model->decoder, shape.cloud.points));
  shape.features[model.id] = prepared;
  return prepared;
}

Response Service::load_model_request(const std::string& body) {
  const json j = parse_body(body);
  if (!j.contains("path") || !j["path"].is_string()) fail(400, "BAD_FORMAT", "path must be a string");
  const std::filesystem::path path = j["path"].get<std::string>();
  std::error_code ec;
  if (!std::filesystem::is_regular_file(path, ec)) fail(404, "NOT_FOUND", "no bundle at " + path.string());
  std::string id;
  try {
    id = load_model(path);
  } catch (const FormatError& e) {
    fail(400, "BAD_FORMAT", e.what());
  }
  std::shared_lock lock(model_mutex_);
  return reply({{"model_id", id}, {"tensor_count", model_.model->tensor_count}});
}

Response Service::create_shape(const std::string& body, const std::string& content_type) {
  data::AnnotatedCloud cloud;
  std::string payload;
  bool upload = content_type.rfind("application/octet-stream", 0) == 0;
  if (upload) {
    payload = body;
  } else {
    const json j = parse_body(body);
    const std::string source = j.value("source", "");
    if (source == "synthetic") {
      data::SyntheticConfig cfg;
      if (j.contains("parts") && !j["parts"].is_null()) {
        if (!j["parts"].is_number_integer() || j["parts"].get<long long>() < 2 || j["parts"].get<long long>() > 50)
          fail(400, "BAD_FORMAT", "parts must be an integer in [2, 50]");
        cfg.min_parts = cfg.max_parts = j["parts"].get<std::uint32_t>();
      }
      std::uint64_t seed = 0;
      if (j.contains("seed")) {
        if (!j["seed"].is_number_integer() || j["seed"].get<long long>() < 0)
          fail(400, "BAD_FORMAT", "seed must be a non-negative integer");
        seed = j["seed"].get<std::uint64_t>();
      }
      cloud = data::synthetic_cloud(seed, opts_.synthetic_points, cfg);
    } else if (source == "upload") {
      if (!j.contains("pcpd") || !j["pcpd"].is_string()) fail(400, "BAD_FORMAT", "pcpd must be a base64 string");
      try {
        payload = base64_decode(j["pcpd"].get<std::string>());
      } catch (const FormatError& e) {
        fail(400, "BAD_FORMAT", e.what());
      }
      upload = true;
    } else {
      fail(400, "BAD_FORMAT", "source must be \"synthetic\" or \"upload\"");
    }
  }
  if (upload) {
    std::vector<data::AnnotatedCloud> records;
    try {
      records = data::decode_dataset(std::vector<std::uint8_t>(payload.begin(), payload.end()));
    } catch (const FormatError& e) {
      fail(400, "BAD_FORMAT", e.what());
    }
    if (records.size() != 1) fail(400, "BAD_FORMAT", "upload must contain exactly one cloud");
    cloud = std::move(records.front());
    if (cloud.points.empty()) fail(400, "BAD_FORMAT", "uploaded cloud has no points");
    try {
      cloud.points = normalize_unit_sphere(cloud.points.coords);
    } catch (const ValidationError& e) {
      fail(400, "BAD_FORMAT", e.what());
    }
  }
  const bool labeled = cloud.labeled();
  const std::uint32_t parts = cloud.labels.part_count;
  const std::size_t n = cloud.size();
  json out{{"shape_id", register_shape(std::move(cloud))}, {"n", n}};
  if (labeled) out["part_count"] = parts;
  return reply(out, 201);
}

Response Service::get_shape(const std::string& id) {
  const auto shape = find_shape(id);
  const auto& c = shape->cloud;
  json points = json::array();
  for (const auto& p : c.points.coords) points.push_back({p.x, p.y, p.z});
  json out{{"shape_id", id}, {"n", c.size()}, {"points", std::move(points)}};
  if (c.labeled()) {
    out["labels"] = c.labels.labels;
    out["part_count"] = c.labels.part_count;
  }
  return reply(out);
}

Response Service::segment(const std::string& id, const std::string& body) {
  const auto shape = find_shape(id);
  const json j = parse_body(body);
  if (!j.contains("prompt_index") || !j["prompt_index"].is_number_integer())
    fail(400, "INVALID_PROMPT", "prompt_index must be an integer");
  const long long prompt = j["prompt_index"].get<long long>();
  if (prompt < 0 || std::size_t(prompt) >= shape->cloud.size())
    fail(400, "INVALID_PROMPT", "prompt_index " + std::to_string(prompt) + " outside [0, " +
                                    std::to_string(shape->cloud.size()) + ")");
  std::optional<float> scale;
  if (j.contains("scale") && !j["scale"].is_null()) {
    const double s = number_or(j, "scale", 0.0, "INVALID_SCALE");
    if (!(s >= 0.0 && s <= 1.0)) fail(400, "INVALID_SCALE", "scale must lie in [0, 1]");
    scale = static_cast<float>(s);
  }
  const double theta = number_or(j, "threshold", kDefaultThreshold);
  if (!(theta >= 0.0 && theta <= 1.0)) fail(400, "BAD_FORMAT", "threshold must lie in [0, 1]");
  const LoadedModel model = current_model();
  const auto prepared = features_for(*shape, model);
  const MaskPrediction p = interactive_segment(*model.model->decoder, *prepared, {std::size_t(prompt), scale},
                                               static_cast<float>(theta));
  json mask = json::array();
  for (auto m : p.mask) mask.push_back(m != 0);
  return reply({{"shape_id", id},
                {"model_id", model.id},
                {"prompt_index", prompt},
                {"scale", scale ? json(*scale) : json(nullptr)},
                {"threshold", theta},
                {"probabilities", p.probabilities},
                {"mask", std::move(mask)},
                {"pi", p.positive_ratio}});
}

Response Service::full_segment(const std::string& id, const std::string& body) {
  const auto shape = find_shape(id);
  const json j = parse_body(body);
  const auto& cloud = shape->cloud;
  if (!cloud.labeled())
    fail(400, "INVALID_PROMPT", "full segmentation derives one prompt per labeled part; this shape has no labels");
  FullSegConfig cfg;
  cfg.theta = static_cast<float>(number_or(j, "theta", cfg.theta));
  cfg.alpha_conf = number_or(j, "alpha_conf", cfg.alpha_conf);
  if (!(cfg.theta >= 0.0f && cfg.theta <= 1.0f)) fail(400, "BAD_FORMAT", "theta must lie in [0, 1]");
  if (!(cfg.alpha_conf >= 0.0 && cfg.alpha_conf <= 1.0)) fail(400, "BAD_FORMAT", "alpha_conf must lie in [0, 1]");
  if (j.contains("k") && !j["k"].is_null()) {
    if (!j["k"].is_number_integer() || j["k"].get<long long>() < 1) fail(400, "BAD_FORMAT", "k must be a positive integer");
    cfg.k = j["k"].get<std::size_t>();
  }
  const bool use_scale = j.value("use_scale", false);
  const LoadedModel model = current_model();
  const auto prepared = features_for(*shape, model);
  std::vector<PromptQuery> prompts;
  for (std::uint32_t k = 0; k < cloud.labels.part_count; ++k) {
    PromptQuery q{select_prompt_point(cloud.labels, k, cloud.points), std::nullopt};
    if (use_scale) q.scale = static_cast<float>(part_scale(cloud.labels, k));
    prompts.push_back(q);
  }
  const FullSegResult r = scalepart::full_segment(*model.model->decoder, *prepared, prompts, cfg);
  return reply({{"shape_id", id},
                {"model_id", model.id},
                {"labels", r.labels},
                {"mask_count", prompts.size()},
                {"confidence_fallback", r.confidence_fallback}});
}

Response Service::handle(const std::string& method, const std::string& path, const std::string& body,
                         const std::string& content_type) {
  try {
    static const std::string kShapes = "/api/shapes";
    if (method == "POST" && path == "/api/models/load") return load_model_request(body);
    if (method == "POST" && path == kShapes) return create_shape(body, content_type);
    if (path.rfind(kShapes + "/", 0) == 0) {
      const std::string rest = path.substr(kShapes.size() + 1);
      const auto slash = rest.find('/');
      const std::string id = rest.substr(0, slash);
      const std::string action = slash == std::string::npos ? "" : rest.substr(slash + 1);
      if (!id.empty()) {
        if (method == "GET" && action.empty()) return get_shape(id);
        if (method == "POST" && action == "segment") return segment(id, body);
        if (method == "POST" && action == "full-segment") return full_segment(id, body);
      }
    }
    fail(404, "NOT_FOUND", "no route for " + method + " " + path);
  } catch (const ApiError& e) {
    return error_reply(e);
  } catch (const ValidationError& e) {
    return error_reply({400, "BAD_FORMAT", e.what()});
  } catch (const json::exception& e) {
    return error_reply({400, "BAD_FORMAT", e.what()});
  }
}

void mount(httplib::Server& server, Service& service) {
  server.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                              {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
                              {"Access-Control-Allow-Headers", "Content-Type"}});
  auto dispatch = [&service](const httplib::Request& req, httplib::Response& res) {
    const Response r = service.handle(req.method, req.path, req.body, req.get_header_value("Content-Type"));
    res.status = r.status;
    res.set_content(r.body, "application/json");
  };
  server.Get(R"(/api/.*)", dispatch);
  server.Post(R"(/api/.*)", dispatch);
  server.Options(R"(/api/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
}

}  // namespace scalepart::service
