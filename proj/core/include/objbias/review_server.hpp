#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "objbias/config.hpp"
#include "objbias/manifest.hpp"
#include "objbias/prompt_matrix.hpp"
#include "objbias/taxonomy.hpp"
#include "objbias/validation.hpp"

namespace objbias {

/// Read-only view of the audit artifacts at load time.
struct ApiSnapshot {
  std::filesystem::path root;
  AuditConfig config;
  std::vector<PromptCondition> matrix;
  Manifest manifest;
  std::map<std::string, AttributeRecord> attributes;  // by image_id
  std::optional<nlohmann::json> bias_report;
  /// SHA-256 over the manifest, attribute and report files.
  std::string digest;
};

/// Loads whatever artifacts exist under `root`; the manifest is required.
ApiSnapshot load_snapshot(const std::filesystem::path& root, const AuditConfig& config);

/// HTTP service for the review UI. Routes:
///   GET  /api/meta
///   GET  /api/images?object=&model=&condition=&page=&per_page=
///   GET  /images/{image_id}
///   GET  /api/stats
///   GET  /api/annotations[?image_id=]
///   POST /api/annotations          (422 malformed, 409 duplicate unless "supersede": true)
///   GET  /api/validation-sample?seed=&per=
///   POST /api/reload
class ReviewServer {
 public:
  ReviewServer(std::filesystem::path root, AuditConfig config);
  ~ReviewServer();
  ReviewServer(const ReviewServer&) = delete;
  ReviewServer& operator=(const ReviewServer&) = delete;

  /// Serves static files (the built review UI) at "/" when set before start().
  void set_static_dir(std::filesystem::path dir);

  /// Binds and serves on a background thread; returns the bound port
  /// (pass 0 for an ephemeral one). Throws Error if binding fails.
  int start(const std::string& host = "127.0.0.1", int port = 8080);
  /// Blocks until stop() is called from elsewhere.
  void wait();
  void stop();

  /// Re-reads the artifacts from disk.
  void reload();
  std::shared_ptr<const ApiSnapshot> snapshot() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace objbias
