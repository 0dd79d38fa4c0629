#include "objbias/review_server.hpp"

#include <httplib.h>

#include <mutex>
#include <set>
#include <shared_mutex>
#include <thread>
#include <tuple>

#include "objbias/analysis.hpp"
#include "objbias/errors.hpp"
#include "objbias/util.hpp"

namespace objbias {

using nlohmann::json;

ApiSnapshot load_snapshot(const std::filesystem::path& root, const AuditConfig& config) {
  ApiSnapshot s;
  s.root = root;
  s.config = config;
  s.matrix = build_matrix(config);
  s.manifest = load_manifest(root);
  std::string digest_input = sha256_hex(read_file_bytes(root / manifest_files::kRecords));
  std::set<std::pair<std::string, std::string>> pairs;
  for (const auto& r : s.manifest.records) pairs.emplace(r.backend_id, object_of_condition(r.condition_id));
  for (const auto& [backend, object] : pairs) {
    const auto path = artifact_paths::attributes(root, backend, object);
    if (!std::filesystem::exists(path)) continue;
    digest_input += sha256_hex(read_file_bytes(path));
    for (auto& rec : load_attribute_records(path)) s.attributes[rec.image_id] = std::move(rec);
  }
  const auto report_path = bias_report_path(root);
  if (std::filesystem::exists(report_path)) {
    const auto text = read_file_text(report_path);
    digest_input += sha256_hex(text);
    s.bias_report = json::parse(text);
  }
  s.digest = sha256_hex(digest_input);
  return s;
}

struct ReviewServer::Impl {
  std::filesystem::path root;
  AuditConfig config;
  httplib::Server server;
  std::thread thread;

  mutable std::mutex snapshot_mutex;
  std::shared_ptr<const ApiSnapshot> current;

  // Annotation state: single writer, readers copy under the shared lock.
  mutable std::shared_mutex annotations_mutex;
  std::vector<Annotation> log;
  std::unique_ptr<JsonlAppender> writer;

  std::shared_ptr<const ApiSnapshot> snap() const {
    std::lock_guard lock(snapshot_mutex);
    return current;
  }

  void load() {
    auto next = std::make_shared<const ApiSnapshot>(load_snapshot(root, config));
    std::unique_lock alock(annotations_mutex);
    log = load_annotations(root / kAnnotationsFile);
    writer = std::make_unique<JsonlAppender>(root / kAnnotationsFile);
    std::lock_guard lock(snapshot_mutex);
    current = std::move(next);
  }

  static void send_json(httplib::Response& res, const json& body, int status = 200) {
    res.status = status;
    res.set_content(body.dump(), "application/json; charset=utf-8");
  }

  static void send_error(httplib::Response& res, int status, const std::string& message) {
    send_json(res, {{"error", message}}, status);
  }

  static int int_param(const httplib::Request& req, const char* name, int fallback) {
    if (!req.has_param(name)) return fallback;
    try {
      return std::stoi(req.get_param_value(name));
    } catch (const std::exception&) {
      throw ValidationError(std::string("query parameter '") + name + "' must be an integer");
    }
  }

  static bool condition_matches(const ImageRecord& r, const std::string& wanted) {
    if (wanted.empty() || r.condition_id == wanted) return true;
    const auto group = group_of_condition(r.condition_id);
    if (group == wanted) return true;
    auto slug = group;
    std::replace(slug.begin(), slug.end(), ':', '-');
    return slug == wanted;
  }

  json meta() const {
    const auto s = snap();
    json objects = json::array();
    for (const auto& o : s->config.objects) {
      objects.push_back({{"id", o.id}, {"display_name", o.display_name}, {"phrase", o.phrase}});
    }
    std::vector<std::string> models;
    for (const auto& b : s->config.backends) models.push_back(b.id);
    for (const auto& r : s->manifest.records) {
      if (std::find(models.begin(), models.end(), r.backend_id) == models.end()) models.push_back(r.backend_id);
    }
    std::set<std::string> present;
    for (const auto& r : s->manifest.records) present.insert(r.backend_id);
    std::erase_if(models, [&](const std::string& m) { return !present.contains(m); });
    json conditions = json::array();
    for (const auto& c : s->matrix) {
      conditions.push_back({{"id", c.id},
                            {"object", c.object_id},
                            {"slug", c.slug()},
                            {"dimension", c.group ? json(c.group->dimension_id) : json(nullptr)},
                            {"group", c.group ? json(c.group->group_id) : json(nullptr)},
                            {"prompt", c.prompt_text}});
    }
    json dims = json::array();
    for (const auto& d : s->config.dimensions) {
      json groups = json::array();
      for (const auto& g : d.groups) groups.push_back(g.id);
      dims.push_back({{"id", d.id}, {"groups", groups}});
    }
    return {{"digest", s->digest},
            {"config_digest", s->manifest.config_digest},
            {"objects", objects},
            {"models", models},
            {"dimensions", dims},
            {"conditions", conditions},
            {"image_count", s->manifest.records.size()},
            {"has_stats", s->bias_report.has_value()}};
  }

  json image_json(const ApiSnapshot& s, const ImageRecord& r) const {
    json j = to_json(r);
    if (auto it = s.attributes.find(r.image_id); it != s.attributes.end()) {
      j["attributes"] = it->second.values;
      j["flags"] = it->second.flags;
    } else {
      j["attributes"] = nullptr;
      j["flags"] = json::array();
    }
    return j;
  }

  void routes() {
    server.Get("/api/meta", [this](const httplib::Request&, httplib::Response& res) { send_json(res, meta()); });

    server.Get("/api/images", [this](const httplib::Request& req, httplib::Response& res) {
      const auto s = snap();
      const auto object = req.get_param_value("object");
      const auto model = req.get_param_value("model");
      const auto condition = req.get_param_value("condition");
      const int page = int_param(req, "page", 1);
      const int per_page = int_param(req, "per_page", 50);
      if (page < 1 || per_page < 1 || per_page > 1000) throw ValidationError("page >= 1 and 1 <= per_page <= 1000");
      std::vector<const ImageRecord*> hits;
      for (const auto& r : s->manifest.records) {
        if (!object.empty() && object_of_condition(r.condition_id) != object) continue;
        if (!model.empty() && r.backend_id != model) continue;
        if (!condition_matches(r, condition)) continue;
        hits.push_back(&r);
      }
      json items = json::array();
      const std::size_t begin = static_cast<std::size_t>(page - 1) * per_page;
      for (std::size_t i = begin; i < hits.size() && i < begin + per_page; ++i) items.push_back(image_json(*s, *hits[i]));
      send_json(res, {{"total", hits.size()}, {"page", page}, {"per_page", per_page}, {"items", items}});
    });

    server.Get(R"(/images/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
      const auto s = snap();
      const auto* r = s->manifest.find(req.matches[1].str());
      if (r == nullptr) return send_error(res, 404, "unknown image " + req.matches[1].str());
      const auto path = s->root / r->file_path;
      if (!std::filesystem::exists(path)) return send_error(res, 404, "image file missing: " + r->file_path);
      const auto bytes = read_file_bytes(path);
      if (sha256_hex(bytes) != r->content_hash) {
        return send_error(res, 500, "image file " + r->file_path + " does not match its content hash");
      }
      res.set_content(std::string(bytes.begin(), bytes.end()), "image/png");
    });

    server.Get("/api/stats", [this](const httplib::Request&, httplib::Response& res) {
      const auto s = snap();
      if (!s->bias_report) return send_error(res, 404, "no bias report; run the analyze stage");
      send_json(res, *s->bias_report);
    });

    server.Get("/api/annotations", [this](const httplib::Request& req, httplib::Response& res) {
      std::vector<Annotation> view;
      std::size_t log_size = 0;
      {
        std::shared_lock lock(annotations_mutex);
        view = req.get_param_value("all") == "1" ? log : effective_annotations(log);
        log_size = log.size();
      }
      const auto image = req.get_param_value("image_id");
      json list = json::array();
      for (const auto& a : view) {
        if (image.empty() || a.image_id == image) list.push_back(to_json(a));
      }
      send_json(res, {{"annotations", list}, {"log_size", log_size}});
    });

    server.Post("/api/annotations", [this](const httplib::Request& req, httplib::Response& res) {
      const json body = json::parse(req.body, nullptr, false);
      if (body.is_discarded()) return send_error(res, 422, "request body is not JSON");
      Annotation a;
      try {
        a = annotation_from_json(body);
      } catch (const ValidationError& e) {
        return send_error(res, 422, e.what());
      }
      const bool supersede = body.is_object() && body.value("supersede", false);
      const auto s = snap();
      if (s->manifest.find(a.image_id) == nullptr) return send_error(res, 422, "unknown image_id " + a.image_id);
      if (a.auto_value.empty()) {
        if (auto it = s->attributes.find(a.image_id); it != s->attributes.end()) {
          if (auto v = it->second.values.find(a.attribute); v != it->second.values.end()) a.auto_value = v->second;
        }
      }
      if (a.created_at.empty()) a.created_at = utc_now_iso8601();
      std::unique_lock lock(annotations_mutex);
      const bool duplicate = std::any_of(log.begin(), log.end(), [&](const Annotation& x) {
        return std::tie(x.image_id, x.attribute, x.annotator) == std::tie(a.image_id, a.attribute, a.annotator);
      });
      if (duplicate && !supersede) {
        return send_error(res, 409, "annotation exists for this image, attribute and annotator; set supersede");
      }
      writer->append(to_json(a));
      log.push_back(a);
      send_json(res, to_json(a), 201);
    });

    server.Get("/api/validation-sample", [this](const httplib::Request& req, httplib::Response& res) {
      const auto s = snap();
      const int seed = int_param(req, "seed", static_cast<int>(s->config.seeds.validation));
      const int per = int_param(req, "per", s->config.validation_per_condition);
      json ids = json::array();
      for (const auto& r : stratified_sample(s->manifest, per, seed)) ids.push_back(r.image_id);
      send_json(res, {{"seed", seed}, {"per", per}, {"image_ids", ids}});
    });

    server.Post("/api/reload", [this](const httplib::Request&, httplib::Response& res) {
      load();
      send_json(res, {{"digest", snap()->digest}});
    });

    server.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
      try {
        std::rethrow_exception(ep);
      } catch (const ValidationError& e) {
        send_error(res, 422, e.what());
      } catch (const MissingArtifactError& e) {
        send_error(res, 404, e.what());
      } catch (const std::exception& e) {
        send_error(res, 500, e.what());
      } catch (...) {
        send_error(res, 500, "unknown error");
      }
    });
  }
};

ReviewServer::ReviewServer(std::filesystem::path root, AuditConfig config) : impl_(std::make_unique<Impl>()) {
  impl_->root = std::move(root);
  impl_->config = std::move(config);
  impl_->load();
  impl_->routes();
}

ReviewServer::~ReviewServer() {
  stop();
  wait();
}

void ReviewServer::set_static_dir(std::filesystem::path dir) {
  if (!impl_->server.set_mount_point("/", dir.string())) {
    throw ConfigError("static directory does not exist: " + dir.string());
  }
}

int ReviewServer::start(const std::string& host, int port) {
  int bound = port;
  if (port == 0) {
    bound = impl_->server.bind_to_any_port(host);
    if (bound < 0) throw Error("cannot bind " + host);
  } else if (!impl_->server.bind_to_port(host, port)) {
    throw Error("cannot bind " + host + ":" + std::to_string(port));
  }
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return bound;
}

void ReviewServer::wait() {
  if (impl_->thread.joinable()) impl_->thread.join();
}

void ReviewServer::stop() {
  if (impl_->server.is_running()) impl_->server.stop();
}

void ReviewServer::reload() { impl_->load(); }

std::shared_ptr<const ApiSnapshot> ReviewServer::snapshot() const { return impl_->snap(); }

}  // namespace objbias
