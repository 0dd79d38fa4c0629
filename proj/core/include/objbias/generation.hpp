#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "objbias/backends.hpp"
#include "objbias/config.hpp"
#include "objbias/manifest.hpp"
#include "objbias/prompt_matrix.hpp"

namespace objbias {

struct MissingEntry {
  std::string backend_id;
  std::string condition_id;
  int replicate_index = 0;

  friend bool operator==(const MissingEntry&, const MissingEntry&) = default;
};

struct HashMismatch {
  std::string image_id;
  std::string file_path;
  std::string expected_hash;
  std::string actual_hash;  // empty when the file is missing
};

struct CompletenessReport {
  std::vector<MissingEntry> missing;
  std::vector<HashMismatch> hash_mismatches;
  /// Records whose (backend, condition, index) key appears more than once or
  /// lies outside the expected grid.
  std::vector<std::string> unexpected;

  bool empty() const noexcept { return missing.empty() && hash_mismatches.empty() && unexpected.empty(); }
};

nlohmann::json to_json(const CompletenessReport& report);

/// Report-only: never throws on defects, lists them.
CompletenessReport validate_manifest(const Manifest& manifest,
                                     const std::vector<PromptCondition>& matrix,
                                     const std::vector<std::string>& backend_ids, int n_per_condition,
                                     const std::filesystem::path& root);

struct FailureRecord {
  std::string backend_id;
  std::string condition_id;
  int replicate_index = 0;
  int round = 0;
  std::string kind;  // "transient", "content_policy", "error"
  std::string reason;
};

struct GenerationOptions {
  std::filesystem::path root;
  int n_per_condition = 20;
  bool resume = false;
  GapMode gap_mode = GapMode::kRetryUntilN;
  int max_rounds = 3;
  int max_in_flight = 4;
  std::int64_t base_seed = 0;
  bool reproducible = false;
  std::string config_digest;
};

struct GenerationResult {
  Manifest manifest;
  std::vector<FailureRecord> failures;
  CompletenessReport gaps;
  int generated = 0;
  int skipped = 0;
};

/// Fills `root/corpus/...` and `root/manifest.jsonl`. Credentials of every
/// backend are checked before the first request. Each successful record is
/// appended and flushed immediately; on return the manifest is rewritten in
/// canonical (backend, condition, index) order.
GenerationResult generate_corpus(const std::vector<PromptCondition>& matrix,
                                 const std::vector<std::shared_ptr<ImageBackend>>& backends,
                                 const GenerationOptions& options);

}  // namespace objbias
