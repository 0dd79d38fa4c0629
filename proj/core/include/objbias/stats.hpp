#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "objbias/taxonomy.hpp"

namespace objbias {

/// Empirical categorical distribution of one attribute. Unparseable values
/// are not part of the support; their count is kept in `exclusions`.
struct Distribution {
  std::string attribute;
  std::vector<std::string> support;  // sorted, unique
  std::vector<double> probs;
  std::size_t n = 0;
  std::size_t exclusions = 0;

  double prob(const std::string& value) const;

  /// Builds from explicit weights (normalized; zero weights dropped).
  static Distribution from_weights(std::string attribute, const std::map<std::string, double>& weights);
};

/// Throws ValidationError when no record has a parseable value.
Distribution estimate_distribution(const std::vector<AttributeRecord>& records, const std::string& attribute);

/// Jensen-Shannon divergence, base 2, in [0,1]. Throws ValidationError on
/// attribute mismatch.
double js_divergence(const Distribution& p, const Distribution& q);

/// Shannon entropy in bits.
double entropy_bits(const std::vector<double>& probs);

/// 1 - H/log2(k); 1 when k <= 1.
double concentration_term(const std::vector<double>& probs, std::size_t k);

struct BdsResult {
  std::string backend_id;
  std::string object_id;
  std::string condition_id;  // the demographic condition
  std::string dimension_id;
  std::string group_id;
  double score = 0.0;
  std::map<std::string, double> per_attribute;
  /// Attributes without parseable values on one side, left out of the mean.
  std::vector<std::string> dropped_attributes;
  double p_value = 1.0;
  bool significant = false;
};

/// Unweighted mean over taxonomy attributes of JS(base, group).
/// Throws ValidationError if either side is empty or every attribute is dropped.
BdsResult bds(const std::vector<AttributeRecord>& base, const std::vector<AttributeRecord>& group,
              const AttributeTaxonomy& taxonomy);

struct CdsResult {
  std::string backend_id;
  std::string object_id;
  std::string dimension_id;
  std::map<std::string, double> per_attribute;  // mean JS over group pairs
  double score = 0.0;
  std::size_t pair_count = 0;
  std::vector<std::string> dropped_attributes;
};

/// Throws ValidationError with fewer than 2 groups.
CdsResult cds(const std::map<std::string, std::vector<AttributeRecord>>& groups, const AttributeTaxonomy& taxonomy);

struct VacResult {
  std::string backend_id;
  std::string object_id;
  std::string condition_id;
  double score = 0.0;
  std::map<std::string, double> per_attribute;
  std::vector<std::string> dropped_attributes;
};

/// Value-set sizes for open attributes: attribute -> distinct observed values
/// across every condition of one backend-object pair.
using OpenCardinality = std::map<std::string, std::size_t>;
OpenCardinality open_cardinality(const std::vector<std::vector<AttributeRecord>>& conditions,
                                 const AttributeTaxonomy& taxonomy);

/// Open attributes missing from `open_k` use the distinct values in `records`.
/// Throws ValidationError on empty input.
VacResult vac(const std::vector<AttributeRecord>& records, const AttributeTaxonomy& taxonomy,
              const OpenCardinality& open_k = {});

/// Pools both sets, splits at random into the original sizes `n_iter` times
/// and returns (1 + #{split BDS >= observed}) / (1 + n_iter).
/// Throws ValidationError for empty sets or n_iter < 1.
double permutation_test(const std::vector<AttributeRecord>& base, const std::vector<AttributeRecord>& group,
                        const AttributeTaxonomy& taxonomy, int n_iter, std::uint64_t seed);

struct SegregationCase {
  std::string backend_id;
  std::string object_id;
  std::string condition_id;
  std::string attribute;
  std::string value;
  std::size_t count = 0;
};

/// One case per (condition, attribute) whose parseable values are all equal
/// and number at least `min_count`. Conditions are visited in key order.
std::vector<SegregationCase> detect_segregation(const std::map<std::string, std::vector<AttributeRecord>>& conditions,
                                                const AttributeTaxonomy& taxonomy, std::size_t min_count = 20);

struct ShiftRecord {
  std::string backend_id;
  std::string object_id;
  std::string condition_id;
  std::string attribute;
  std::string base_value;
  std::string demo_value;
  double base_dominance = 0.0;
  double demo_dominance = 0.0;
  /// A mode was chosen lexicographically among tied values.
  bool tie_broken = false;
};

std::vector<ShiftRecord> detect_shifts(const std::vector<AttributeRecord>& base,
                                       const std::vector<AttributeRecord>& group,
                                       const AttributeTaxonomy& taxonomy, double dominance_threshold = 0.75,
                                       const std::string& condition_id = "");

}  // namespace objbias
