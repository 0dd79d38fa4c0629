#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace objbias {

/// Suffix every rendered prompt ends with.
inline constexpr std::string_view kConstraintSuffix = "one product only, no people";

struct ObjectCategory {
  std::string id;            // lowercase token, e.g. "teddy_bear"
  std::string display_name;  // "Teddy Bear"
  std::string phrase;        // text placed in the {object} slot
};

struct DemographicGroup {
  std::string id;
  std::string phrase;
};

struct DemographicDimension {
  std::string id;
  std::vector<DemographicGroup> groups;
  std::string prompt_template;  // contains {object} and {group} exactly once each
};

enum class BackendKind { kRemoteHttp, kMock };

struct BackendSpec {
  std::string id;
  BackendKind kind = BackendKind::kMock;
  std::string endpoint;
  std::string auth_env;
  /// Request/response shape of the remote API:
  /// "generic", "openai", "google-predict" or "replicate".
  std::string api_style = "generic";
  bool supports_seed = false;
  std::map<std::string, std::string> params;
};

struct VlmClientSpec {
  BackendKind kind = BackendKind::kMock;
  std::string endpoint;
  std::string auth_env;
  /// "generic" or "openai-chat".
  std::string api_style = "generic";
  double temperature = 0.0;
  std::string model_id = "mock-vlm";
  int max_reprompts = 2;
  /// Optional JSON file of per-cell categorical distributions for the mock extractor.
  std::string mock_fixture;
};

struct SeedConfig {
  std::int64_t generation = 0;
  std::int64_t discovery = 0;
  std::int64_t extraction = 0;
  std::int64_t permutation = 0;
  std::int64_t validation = 0;
};

struct RateLimitConfig {
  double requests_per_minute = 30.0;  // one call every 2 s
  int max_in_flight = 4;
  int max_attempts = 3;
  int backoff_initial_ms = 500;
};

enum class GapMode { kRetryUntilN, kAcceptGaps };

struct AuditConfig {
  std::vector<ObjectCategory> objects;
  std::vector<DemographicDimension> dimensions;
  std::vector<BackendSpec> backends;
  VlmClientSpec vlm;
  int n_per_condition = 20;
  int n_permutations = 1000;
  double alpha = 0.01;
  SeedConfig seeds;
  std::string output_root = "audit-out";
  RateLimitConfig rate_limits;
  GapMode gap_mode = GapMode::kRetryUntilN;
  int max_rounds = 3;
  int segregation_min_count = 20;
  double shift_dominance_threshold = 0.75;
  int validation_per_condition = 2;
  int cds_top_k = 10;

  const ObjectCategory* find_object(std::string_view id) const;
  const DemographicDimension* find_dimension(std::string_view id) const;
  const BackendSpec* find_backend(std::string_view id) const;
};

/// The experimental design of the original study: 5 objects, 3 dimensions
/// (8 groups), 3 remote backends, 20 images per condition.
AuditConfig default_config();

/// Fields absent from `j` keep their default_config() value.
AuditConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const AuditConfig& config);

/// Loads and validates; throws ConfigError.
AuditConfig load_config(const std::filesystem::path& path);

/// Throws ConfigError describing the first violated invariant.
void validate_config(const AuditConfig& config);

/// SHA-256 of the canonical JSON form without output_root and rate_limits,
/// which do not affect any artifact's content.
std::string config_digest(const AuditConfig& config);

bool is_token(std::string_view s);

std::string to_string(BackendKind kind);

}  // namespace objbias
