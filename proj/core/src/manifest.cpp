#include "objbias/manifest.hpp"

#include <algorithm>

#include "objbias/errors.hpp"
#include "objbias/util.hpp"

namespace objbias {

using nlohmann::json;

const ImageRecord* Manifest::find(std::string_view image_id) const {
  auto it = std::find_if(records.begin(), records.end(),
                         [&](const ImageRecord& r) { return r.image_id == image_id; });
  return it == records.end() ? nullptr : &*it;
}

json to_json(const ImageRecord& r) {
  return {{"image_id", r.image_id},
          {"backend_id", r.backend_id},
          {"condition_id", r.condition_id},
          {"replicate_index", r.replicate_index},
          {"prompt_text", r.prompt_text},
          {"file_path", r.file_path},
          {"content_hash", r.content_hash},
          {"seed", r.seed ? json(*r.seed) : json(nullptr)},
          {"created_at", r.created_at},
          {"backend_meta", r.backend_meta}};
}

ImageRecord image_record_from_json(const json& j) {
  try {
    ImageRecord r;
    r.image_id = j.at("image_id").get<std::string>();
    r.backend_id = j.at("backend_id").get<std::string>();
    r.condition_id = j.at("condition_id").get<std::string>();
    r.replicate_index = j.at("replicate_index").get<int>();
    r.prompt_text = j.at("prompt_text").get<std::string>();
    r.file_path = j.at("file_path").get<std::string>();
    r.content_hash = j.at("content_hash").get<std::string>();
    if (auto it = j.find("seed"); it != j.end() && !it->is_null()) r.seed = it->get<std::int64_t>();
    r.created_at = j.value("created_at", "");
    if (auto it = j.find("backend_meta"); it != j.end() && it->is_object()) {
      r.backend_meta = it->get<std::map<std::string, std::string>>();
    }
    return r;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed image record: ") + e.what());
  }
}

Manifest load_manifest(const std::filesystem::path& root) {
  const auto path = root / manifest_files::kRecords;
  if (!std::filesystem::exists(path)) throw MissingArtifactError(path.string());
  Manifest m;
  for (const auto& line : read_jsonl(path)) m.records.push_back(image_record_from_json(line));
  const auto header = root / manifest_files::kHeader;
  if (std::filesystem::exists(header)) {
    m.config_digest = json::parse(read_file_text(header)).value("config_digest", "");
  }
  return m;
}

void save_manifest(const std::filesystem::path& root, const Manifest& manifest) {
  std::vector<json> lines;
  lines.reserve(manifest.records.size());
  for (const auto& r : manifest.records) lines.push_back(to_json(r));
  write_jsonl(root / manifest_files::kRecords, lines);
  json header = {{"format", "objbias-manifest/1"}, {"config_digest", manifest.config_digest}};
  write_file_atomic(root / manifest_files::kHeader, header.dump(2) + "\n");
}

std::string image_id_for(std::string_view backend_id, std::string_view object_id,
                         std::string_view condition_slug, int replicate_index) {
  return std::string(backend_id) + "." + std::string(object_id) + "." + std::string(condition_slug) +
         "." + std::to_string(replicate_index);
}

std::string image_path_for(std::string_view backend_id, std::string_view object_id,
                           std::string_view condition_slug, int replicate_index) {
  return "corpus/" + std::string(backend_id) + "/" + std::string(object_id) + "/" +
         std::string(condition_slug) + "/" + std::to_string(replicate_index) + ".png";
}

std::string object_of_condition(std::string_view condition_id) {
  return std::string(condition_id.substr(0, condition_id.find('/')));
}

}  // namespace objbias
