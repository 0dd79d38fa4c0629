#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "objbias/config.hpp"
#include "objbias/manifest.hpp"
#include "objbias/stats.hpp"
#include "objbias/taxonomy.hpp"
#include "objbias/validation.hpp"

namespace objbias {

struct DimensionLayout {
  std::string id;
  std::vector<std::string> groups;
};

/// Every metric computed for one corpus.
struct BiasReport {
  std::string config_digest;
  double alpha = 0.01;
  int n_permutations = 1000;
  std::int64_t permutation_seed = 0;
  std::size_t segregation_min_count = 20;
  double shift_threshold = 0.75;

  std::vector<std::string> backends;
  std::vector<ObjectCategory> objects;
  std::vector<DimensionLayout> dimensions;

  std::vector<BdsResult> bds;
  std::vector<CdsResult> cds;
  std::vector<VacResult> vac;
  std::vector<SegregationCase> segregation;
  std::vector<ShiftRecord> shifts;
  /// Unparseable values per "backend/object".
  std::map<std::string, std::size_t> exclusions;
  /// Cells that could not be computed, with the reason.
  std::vector<std::string> notes;
  std::optional<AgreementStats> agreement;
};

nlohmann::json to_json(const BiasReport& report);
BiasReport bias_report_from_json(const nlohmann::json& j);

struct AnalysisOptions {
  double alpha = 0.01;
  int n_permutations = 1000;
  std::int64_t seed = 0;
  std::size_t segregation_min_count = 20;
  double shift_threshold = 0.75;
  int workers = 0;  // 0 = hardware concurrency

  static AnalysisOptions from_config(const AuditConfig& config);
};

/// Records of one backend-object pair, keyed "backend/object".
using RecordsByPair = std::map<std::string, std::vector<AttributeRecord>>;

/// Computes BDS with permutation p-values for every demographic condition,
/// CDS per dimension, VAC per condition, segregation over demographic
/// conditions and base-to-group shifts. Each permutation test is seeded from
/// `options.seed` and the cell identity, so results do not depend on scheduling.
BiasReport analyze(const AuditConfig& config, const std::vector<std::string>& backend_ids,
                   const Manifest& manifest, const std::vector<AttributeTaxonomy>& taxonomies,
                   const RecordsByPair& records, const AnalysisOptions& options);

/// Loads manifest, taxonomies and attribute records from `root`. Throws
/// MissingArtifactError naming the first absent file.
BiasReport run_analysis(const std::filesystem::path& root, const AuditConfig& config,
                        const std::vector<std::string>& backend_ids, const AnalysisOptions& options);

std::filesystem::path bias_report_path(const std::filesystem::path& root);
BiasReport load_bias_report(const std::filesystem::path& path);
void save_bias_report(const std::filesystem::path& path, const BiasReport& report);

std::uint64_t cell_seed(std::int64_t base, std::string_view backend_id, std::string_view condition_id);

}  // namespace objbias
