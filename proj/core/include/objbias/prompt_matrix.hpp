#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "objbias/config.hpp"

namespace objbias {

struct GroupRef {
  std::string dimension_id;
  std::string group_id;

  friend bool operator==(const GroupRef&, const GroupRef&) = default;
};

/// One cell of the audit matrix: an object under the base prompt or under one
/// demographic group.
struct PromptCondition {
  std::string id;  // "{object}/base" or "{object}/{dimension}:{group}"
  std::string object_id;
  std::optional<GroupRef> group;  // empty for the base condition
  std::string prompt_text;

  bool is_base() const noexcept { return !group.has_value(); }
  /// Path-safe label: "base" or "{dimension}-{group}".
  std::string slug() const;
};

std::string condition_id(std::string_view object_id, const std::optional<GroupRef>& group);

/// Base prompt: "{phrase}, one product only, no people".
std::string render_prompt(const ObjectCategory& object);

/// Substitutes {object} and {group} in `prompt_template`. Throws ValidationError
/// if a slot is missing or any `{...}` slot survives substitution.
std::string render_prompt(const ObjectCategory& object, const DemographicGroup& group,
                          std::string_view prompt_template);

/// Objects in config order; per object the base condition first, then each
/// dimension's groups in config order. Throws ConfigError on an empty object
/// list, a dimension with fewer than two groups, or a duplicate condition id.
std::vector<PromptCondition> build_matrix(const AuditConfig& config);

}  // namespace objbias
