#include "objbias/taxonomy.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include "objbias/errors.hpp"
#include "objbias/util.hpp"

namespace objbias {

using nlohmann::json;

namespace {

std::string fold(std::string_view raw) {
  const std::string t = trim(raw);
  std::string out;
  bool pending_sep = false;
  for (char ch : t) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c) || ch == '-' || ch == '_') {
      pending_sep = true;
      continue;
    }
    if (pending_sep && !out.empty()) out.push_back('_');
    pending_sep = false;
    out.push_back(static_cast<char>(std::tolower(c)));
  }
  return out;
}

}  // namespace

std::string to_string(AttributeScope s) { return s == AttributeScope::kProduct ? "product" : "background"; }
std::string to_string(ValueMode m) { return m == ValueMode::kClosed ? "closed" : "open"; }

const std::vector<AttributeSpec>& fixed_attributes() {
  static const std::vector<AttributeSpec> kFixed = {
      {"product_color", AttributeScope::kProduct, ValueMode::kOpen, {}, AttributeOrigin::kFixed},
      {"text_presence", AttributeScope::kProduct, ValueMode::kClosed, {"absent", "present"},
       AttributeOrigin::kFixed},
      {"background_color", AttributeScope::kBackground, ValueMode::kOpen, {}, AttributeOrigin::kFixed},
      {"background_text_presence", AttributeScope::kBackground, ValueMode::kClosed,
       {"absent", "present"}, AttributeOrigin::kFixed},
  };
  return kFixed;
}

bool is_fixed_attribute_name(std::string_view name) {
  const auto& f = fixed_attributes();
  return std::any_of(f.begin(), f.end(), [&](const AttributeSpec& s) { return s.name == name; });
}

const AttributeSpec* AttributeTaxonomy::find(std::string_view name) const {
  auto it = std::find_if(attributes.begin(), attributes.end(),
                         [&](const AttributeSpec& a) { return a.name == name; });
  return it == attributes.end() ? nullptr : &*it;
}

std::vector<std::string> AttributeTaxonomy::names() const {
  std::vector<std::string> out;
  for (const auto& a : attributes) out.push_back(a.name);
  return out;
}

std::string AttributeTaxonomy::digest() const { return sha256_hex(to_json(*this).dump()); }

AttributeTaxonomy make_taxonomy(std::string backend_id, std::string object_id,
                                std::vector<AttributeSpec> discovered) {
  AttributeTaxonomy t{std::move(backend_id), std::move(object_id), {}};
  for (const auto scope : {AttributeScope::kProduct, AttributeScope::kBackground}) {
    for (const auto& f : fixed_attributes()) {
      if (f.scope == scope) t.attributes.push_back(f);
    }
    for (auto& d : discovered) {
      if (d.scope == scope) {
        d.origin = AttributeOrigin::kDiscovered;
        t.attributes.push_back(d);
      }
    }
  }
  return t;
}

void validate_taxonomy(const AttributeTaxonomy& t) {
  const std::string where = "taxonomy " + t.backend_id + "/" + t.object_id + ": ";
  std::set<std::string> names;
  int product = 0, background = 0;
  for (const auto& a : t.attributes) {
    if (a.name.empty()) throw ValidationError(where + "attribute with empty name");
    if (!names.insert(a.name).second) throw ValidationError(where + "duplicate attribute '" + a.name + "'");
    if (a.mode == ValueMode::kClosed) {
      if (a.allowed_values.size() < 2) {
        throw ValidationError(where + "closed attribute '" + a.name + "' needs >= 2 allowed values");
      }
      std::set<std::string> folded;
      for (const auto& v : a.allowed_values) {
        if (fold(v).empty() || !folded.insert(fold(v)).second) {
          throw ValidationError(where + "attribute '" + a.name + "' has empty or duplicate value '" + v + "'");
        }
      }
    }
    if (a.origin == AttributeOrigin::kDiscovered) {
      if (is_fixed_attribute_name(a.name)) {
        throw ValidationError(where + "discovered attribute '" + a.name + "' collides with a fixed attribute");
      }
      (a.scope == AttributeScope::kProduct ? product : background) += 1;
    }
  }
  for (const auto& f : fixed_attributes()) {
    const auto* a = t.find(f.name);
    if (a == nullptr || a->origin != AttributeOrigin::kFixed) {
      throw ValidationError(where + "missing fixed attribute '" + f.name + "'");
    }
  }
  if (product != 3 || background != 1) {
    throw ValidationError(where + "expected 3 product + 1 background discovered attributes, got " +
                          std::to_string(product) + " + " + std::to_string(background));
  }
}

std::string normalize_value(std::string_view raw, const AttributeSpec& spec) {
  const std::string folded = fold(raw);
  if (folded.empty()) throw ValidationError("empty value for attribute '" + spec.name + "'");
  if (spec.mode == ValueMode::kOpen) return folded;
  for (const auto& allowed : spec.allowed_values) {
    if (fold(allowed) == folded) return allowed;
  }
  throw ValidationError("value '" + std::string(raw) + "' is not allowed for attribute '" + spec.name + "'");
}

json to_json(const AttributeSpec& s) {
  json j = {{"name", s.name},
            {"scope", to_string(s.scope)},
            {"value_mode", to_string(s.mode)},
            {"origin", s.origin == AttributeOrigin::kFixed ? "fixed" : "discovered"}};
  j["allowed_values"] = s.mode == ValueMode::kClosed ? json(s.allowed_values) : json::array();
  return j;
}

AttributeSpec attribute_spec_from_json(const json& j) {
  try {
    AttributeSpec s;
    s.name = j.at("name").get<std::string>();
    s.scope = j.value("scope", "product") == "background" ? AttributeScope::kBackground
                                                           : AttributeScope::kProduct;
    s.mode = j.value("value_mode", "closed") == "open" ? ValueMode::kOpen : ValueMode::kClosed;
    s.origin = j.value("origin", "discovered") == "fixed" ? AttributeOrigin::kFixed
                                                           : AttributeOrigin::kDiscovered;
    if (j.contains("allowed_values")) s.allowed_values = j["allowed_values"].get<std::vector<std::string>>();
    return s;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed attribute spec: ") + e.what());
  }
}

json to_json(const AttributeTaxonomy& t) {
  json attrs = json::array();
  for (const auto& a : t.attributes) attrs.push_back(to_json(a));
  return {{"backend_id", t.backend_id}, {"object_id", t.object_id}, {"attributes", attrs}};
}

AttributeTaxonomy taxonomy_from_json(const json& j) {
  try {
    AttributeTaxonomy t;
    t.backend_id = j.at("backend_id").get<std::string>();
    t.object_id = j.at("object_id").get<std::string>();
    for (const auto& a : j.at("attributes")) t.attributes.push_back(attribute_spec_from_json(a));
    return t;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed taxonomy: ") + e.what());
  }
}

json to_json(const AttributeRecord& r) {
  return {{"image_id", r.image_id},
          {"values", r.values},
          {"raw_response", r.raw_response},
          {"rejected_responses", r.rejected_responses},
          {"extractor_meta",
           {{"model_id", r.model_id},
            {"prompt_digest", r.prompt_digest},
            {"taxonomy_digest", r.taxonomy_digest}}},
          {"flagged", r.flagged()},
          {"flags", r.flags}};
}

AttributeRecord attribute_record_from_json(const json& j) {
  try {
    AttributeRecord r;
    r.image_id = j.at("image_id").get<std::string>();
    r.values = j.at("values").get<std::map<std::string, std::string>>();
    r.raw_response = j.value("raw_response", "");
    if (j.contains("rejected_responses")) {
      r.rejected_responses = j["rejected_responses"].get<std::vector<std::string>>();
    }
    if (auto it = j.find("extractor_meta"); it != j.end()) {
      r.model_id = it->value("model_id", "");
      r.prompt_digest = it->value("prompt_digest", "");
      r.taxonomy_digest = it->value("taxonomy_digest", "");
    }
    if (j.contains("flags")) r.flags = j["flags"].get<std::vector<std::string>>();
    return r;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed attribute record: ") + e.what());
  }
}

namespace artifact_paths {
std::filesystem::path taxonomy(const std::filesystem::path& root, std::string_view backend,
                               std::string_view object) {
  return root / "taxonomies" / std::string(backend) / (std::string(object) + ".json");
}
std::filesystem::path discovery_log(const std::filesystem::path& root, std::string_view backend,
                                    std::string_view object) {
  return root / "taxonomies" / std::string(backend) / (std::string(object) + ".discovery.jsonl");
}
std::filesystem::path attributes(const std::filesystem::path& root, std::string_view backend,
                                 std::string_view object) {
  return root / "attributes" / std::string(backend) / (std::string(object) + ".jsonl");
}
}  // namespace artifact_paths

AttributeTaxonomy load_taxonomy(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw MissingArtifactError(path.string());
  AttributeTaxonomy t = taxonomy_from_json(json::parse(read_file_text(path)));
  validate_taxonomy(t);
  return t;
}

void save_taxonomy(const std::filesystem::path& path, const AttributeTaxonomy& taxonomy) {
  write_file_atomic(path, to_json(taxonomy).dump(2) + "\n");
}

std::vector<AttributeRecord> load_attribute_records(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw MissingArtifactError(path.string());
  std::vector<AttributeRecord> out;
  for (const auto& j : read_jsonl(path)) out.push_back(attribute_record_from_json(j));
  return out;
}

void save_attribute_records(const std::filesystem::path& path, const std::vector<AttributeRecord>& records) {
  std::vector<json> lines;
  lines.reserve(records.size());
  for (const auto& r : records) lines.push_back(to_json(r));
  write_jsonl(path, lines);
}

}  // namespace objbias
