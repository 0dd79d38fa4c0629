#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace objbias {

/// One generated image and its provenance.
struct ImageRecord {
  std::string image_id;
  std::string backend_id;
  std::string condition_id;
  int replicate_index = 0;
  std::string prompt_text;
  std::string file_path;  // relative to the audit output root
  std::string content_hash;
  std::optional<std::int64_t> seed;
  std::string created_at;
  std::map<std::string, std::string> backend_meta;

  friend bool operator==(const ImageRecord&, const ImageRecord&) = default;
};

struct Manifest {
  std::vector<ImageRecord> records;
  std::string config_digest;

  const ImageRecord* find(std::string_view image_id) const;
};

nlohmann::json to_json(const ImageRecord& r);
ImageRecord image_record_from_json(const nlohmann::json& j);

namespace manifest_files {
inline constexpr const char* kRecords = "manifest.jsonl";
inline constexpr const char* kHeader = "manifest.header.json";
inline constexpr const char* kFailures = "failures.jsonl";
}  // namespace manifest_files

/// Reads manifest.jsonl and its header sidecar from `root`. Throws
/// MissingArtifactError when the manifest file does not exist.
Manifest load_manifest(const std::filesystem::path& root);

/// Canonical rewrite: records in the given order, header sidecar alongside.
void save_manifest(const std::filesystem::path& root, const Manifest& manifest);

std::string image_id_for(std::string_view backend_id, std::string_view object_id,
                         std::string_view condition_slug, int replicate_index);

std::string image_path_for(std::string_view backend_id, std::string_view object_id,
                           std::string_view condition_slug, int replicate_index);

/// "car/gender:women" -> "car"
std::string object_of_condition(std::string_view condition_id);

}  // namespace objbias
