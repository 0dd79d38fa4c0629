#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "objbias/manifest.hpp"
#include "objbias/taxonomy.hpp"

namespace objbias {

enum class Verdict { kAppropriate, kIncorrect, kAmbiguous };

std::string to_string(Verdict v);
std::optional<Verdict> parse_verdict(std::string_view s);

/// A human judgement of one automatically extracted attribute value.
struct Annotation {
  std::string image_id;
  std::string attribute;
  std::string auto_value;
  Verdict verdict = Verdict::kAppropriate;
  std::string annotator;
  std::string created_at;

  friend bool operator==(const Annotation&, const Annotation&) = default;
};

nlohmann::json to_json(const Annotation& a);
/// Throws ValidationError on missing fields or a verdict outside the closed set.
Annotation annotation_from_json(const nlohmann::json& j);

inline constexpr const char* kAnnotationsFile = "annotations.jsonl";

/// Reads an append-only annotation log in file order.
std::vector<Annotation> load_annotations(const std::filesystem::path& path);

/// Collapses a log so each (image, attribute, annotator) keeps its latest
/// verdict, positioned where that key first appeared.
std::vector<Annotation> effective_annotations(const std::vector<Annotation>& log);

/// `per_condition` images from every (backend, condition) cell of the
/// manifest, sampled uniformly without replacement with a seeded RNG. Cells
/// follow manifest order; images within a cell are ordered by replicate index.
/// Throws ValidationError naming the first undersized cell.
std::vector<ImageRecord> stratified_sample(const Manifest& manifest, int per_condition, std::int64_t seed);

struct VerdictCounts {
  std::size_t total = 0;
  std::size_t appropriate = 0;
  std::size_t incorrect = 0;
  std::size_t ambiguous = 0;

  double agreement_rate() const;
  double incorrect_rate() const;
  double ambiguous_rate() const;
};

struct AgreementStats : VerdictCounts {
  /// Keyed by demographic group ("dimension:group", or "base").
  std::map<std::string, VerdictCounts> per_group;
  std::map<std::string, VerdictCounts> per_attribute;
};

/// Agreement over the effective annotations. Throws ValidationError for an
/// empty set or an image_id absent from `records`. Per-group counts need
/// `manifest` to map images to conditions.
AgreementStats compute_agreement(const std::vector<Annotation>& annotations,
                                 const std::vector<AttributeRecord>& records, const Manifest* manifest = nullptr);

nlohmann::json to_json(const AgreementStats& stats);
AgreementStats agreement_from_json(const nlohmann::json& j);
std::string agreement_csv(const AgreementStats& stats);

/// "car/gender:women" -> "gender:women"; "car/base" -> "base".
std::string group_of_condition(std::string_view condition_id);

}  // namespace objbias
