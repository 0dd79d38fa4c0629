#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace objbias {

enum class AttributeScope { kProduct, kBackground };
enum class ValueMode { kClosed, kOpen };
enum class AttributeOrigin { kFixed, kDiscovered };

/// Value recorded when a response gives no usable value for an attribute.
inline constexpr std::string_view kUnparseable = "unparseable";

struct AttributeSpec {
  std::string name;
  AttributeScope scope = AttributeScope::kProduct;
  ValueMode mode = ValueMode::kClosed;
  std::vector<std::string> allowed_values;  // closed mode only
  AttributeOrigin origin = AttributeOrigin::kDiscovered;

  friend bool operator==(const AttributeSpec&, const AttributeSpec&) = default;
};

/// The four attributes every object is classified on.
const std::vector<AttributeSpec>& fixed_attributes();
bool is_fixed_attribute_name(std::string_view name);

struct AttributeTaxonomy {
  std::string backend_id;
  std::string object_id;
  std::vector<AttributeSpec> attributes;

  const AttributeSpec* find(std::string_view name) const;
  std::vector<std::string> names() const;
  /// SHA-256 of the canonical JSON form.
  std::string digest() const;

  friend bool operator==(const AttributeTaxonomy&, const AttributeTaxonomy&) = default;
};

/// Fixed attributes followed by `discovered`, grouped product-first.
AttributeTaxonomy make_taxonomy(std::string backend_id, std::string object_id,
                                std::vector<AttributeSpec> discovered);

/// Enforces: the 4 fixed attributes present, discovered = 3 product + 1
/// background, unique names, closed attributes with >= 2 allowed values.
void validate_taxonomy(const AttributeTaxonomy& taxonomy);

struct AttributeRecord {
  std::string image_id;
  std::map<std::string, std::string> values;
  std::string raw_response;
  /// Earlier responses that could not be parsed and triggered a re-prompt.
  std::vector<std::string> rejected_responses;
  std::string model_id;
  std::string prompt_digest;
  std::string taxonomy_digest;
  /// Attributes whose value is kUnparseable; nonempty means the record is flagged.
  std::vector<std::string> flags;

  bool flagged() const noexcept { return !flags.empty(); }
  friend bool operator==(const AttributeRecord&, const AttributeRecord&) = default;
};

/// Lowercases, trims, folds runs of whitespace/hyphens to '_'. Closed mode
/// returns the matching allowed token verbatim (case-insensitive match after
/// the same folding). Throws ValidationError if empty or, for closed mode,
/// not an allowed value.
std::string normalize_value(std::string_view raw, const AttributeSpec& spec);

nlohmann::json to_json(const AttributeSpec& spec);
AttributeSpec attribute_spec_from_json(const nlohmann::json& j);
nlohmann::json to_json(const AttributeTaxonomy& taxonomy);
AttributeTaxonomy taxonomy_from_json(const nlohmann::json& j);
nlohmann::json to_json(const AttributeRecord& record);
AttributeRecord attribute_record_from_json(const nlohmann::json& j);

std::string to_string(AttributeScope s);
std::string to_string(ValueMode m);

namespace artifact_paths {
std::filesystem::path taxonomy(const std::filesystem::path& root, std::string_view backend,
                               std::string_view object);
std::filesystem::path discovery_log(const std::filesystem::path& root, std::string_view backend,
                                    std::string_view object);
std::filesystem::path attributes(const std::filesystem::path& root, std::string_view backend,
                                 std::string_view object);
}  // namespace artifact_paths

AttributeTaxonomy load_taxonomy(const std::filesystem::path& path);
void save_taxonomy(const std::filesystem::path& path, const AttributeTaxonomy& taxonomy);
std::vector<AttributeRecord> load_attribute_records(const std::filesystem::path& path);
void save_attribute_records(const std::filesystem::path& path, const std::vector<AttributeRecord>& records);

}  // namespace objbias
