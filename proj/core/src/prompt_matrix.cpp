#include "objbias/prompt_matrix.hpp"

#include <set>

#include "objbias/errors.hpp"

namespace objbias {

namespace {

bool replace_once(std::string& text, std::string_view slot, std::string_view value) {
  const auto pos = text.find(slot);
  if (pos == std::string::npos) return false;
  text.replace(pos, slot.size(), value);
  return true;
}

}  // namespace

std::string PromptCondition::slug() const {
  return group ? group->dimension_id + "-" + group->group_id : std::string("base");
}

std::string condition_id(std::string_view object_id, const std::optional<GroupRef>& group) {
  std::string id(object_id);
  if (group) {
    id += "/" + group->dimension_id + ":" + group->group_id;
  } else {
    id += "/base";
  }
  return id;
}

std::string render_prompt(const ObjectCategory& object) {
  return object.phrase + ", " + std::string(kConstraintSuffix);
}

std::string render_prompt(const ObjectCategory& object, const DemographicGroup& group,
                          std::string_view prompt_template) {
  std::string text(prompt_template);
  // Substitute into a template copy before inserting user text, so phrases
  // containing braces are never mistaken for slots.
  const auto obj_pos = text.find("{object}");
  const auto grp_pos = text.find("{group}");
  if (obj_pos == std::string::npos || grp_pos == std::string::npos) {
    throw ValidationError("template '" + std::string(prompt_template) +
                          "' lacks an {object} or {group} slot");
  }
  std::string probe = text;
  replace_once(probe, "{object}", "");
  replace_once(probe, "{group}", "");
  if (const auto open = probe.find('{'); open != std::string::npos && probe.find('}', open) != std::string::npos) {
    throw ValidationError("unresolved slot in template '" + std::string(prompt_template) + "'");
  }
  if (obj_pos < grp_pos) {
    text.replace(grp_pos, 7, group.phrase);
    text.replace(obj_pos, 8, object.phrase);
  } else {
    text.replace(obj_pos, 8, object.phrase);
    text.replace(grp_pos, 7, group.phrase);
  }
  return text;
}

std::vector<PromptCondition> build_matrix(const AuditConfig& config) {
  if (config.objects.empty()) throw ConfigError("cannot build a prompt matrix with no objects");
  for (const auto& dim : config.dimensions) {
    if (dim.groups.size() < 2) {
      throw ConfigError("dimension '" + dim.id + "' has fewer than 2 groups");
    }
  }

  std::vector<PromptCondition> out;
  std::set<std::string> ids;
  auto push = [&](PromptCondition c) {
    if (!c.prompt_text.ends_with(kConstraintSuffix)) {
      throw ConfigError("prompt for " + c.id + " does not end with \"" +
                        std::string(kConstraintSuffix) + "\"");
    }
    if (!ids.insert(c.id).second) throw ConfigError("duplicate condition id '" + c.id + "'");
    out.push_back(std::move(c));
  };

  for (const auto& object : config.objects) {
    push({condition_id(object.id, std::nullopt), object.id, std::nullopt, render_prompt(object)});
    for (const auto& dim : config.dimensions) {
      for (const auto& group : dim.groups) {
        GroupRef ref{dim.id, group.id};
        push({condition_id(object.id, ref), object.id, ref,
              render_prompt(object, group, dim.prompt_template)});
      }
    }
  }
  return out;
}

}  // namespace objbias
