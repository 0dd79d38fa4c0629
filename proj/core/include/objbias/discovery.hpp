#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "objbias/manifest.hpp"
#include "objbias/prompt_matrix.hpp"
#include "objbias/taxonomy.hpp"
#include "objbias/vlm_client.hpp"

namespace objbias {

/// Seeded sample without replacement of `per_condition` images from every
/// condition of (backend, object) in `matrix` order: 2 + 2 x 8 = 18 for the
/// default design. Throws ValidationError naming the first short condition.
std::vector<ImageRecord> select_discovery_sample(const Manifest& manifest,
                                                 const std::vector<PromptCondition>& matrix,
                                                 const std::string& backend_id,
                                                 const std::string& object_id, std::int64_t seed,
                                                 int per_condition = 2);

std::string build_discovery_prompt(const std::string& object_phrase, std::size_t n_images,
                                   std::size_t n_base_images);

/// Parses a discovery answer into 4 discovered specs (3 product + 1 background).
/// Throws ResponseFormatError on malformed JSON, wrong cardinality, fewer than
/// 2 values, or a name colliding with a fixed attribute or another proposal.
std::vector<AttributeSpec> parse_discovery_response(const std::string& raw);

struct DiscoveryResult {
  AttributeTaxonomy taxonomy;
  std::string prompt;
  /// Every raw answer in order; the last one produced the taxonomy.
  std::vector<std::string> responses;
};

/// Runs discovery with up to `max_reprompts` extra attempts. On exhaustion
/// throws ResponseFormatError carrying the last raw answer.
DiscoveryResult discover_attributes(const std::vector<ImageRecord>& sample, VlmClient& client,
                                    const std::string& backend_id, const ObjectCategory& object,
                                    const std::filesystem::path& root, int max_reprompts = 2);

/// Strips a surrounding markdown code fence (``` or ```json) if present.
std::string strip_code_fences(const std::string& text);

}  // namespace objbias
