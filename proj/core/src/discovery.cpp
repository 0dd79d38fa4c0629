#include "objbias/discovery.hpp"

#include <algorithm>
#include <map>
#include <random>
#include <set>

#include "objbias/errors.hpp"

namespace objbias {

using nlohmann::json;

std::string strip_code_fences(const std::string& text) {
  std::string t = trim(text);
  if (t.rfind("```", 0) != 0) return t;
  auto first_nl = t.find('\n');
  if (first_nl == std::string::npos) return t;
  std::string body = t.substr(first_nl + 1);
  const auto close = body.rfind("```");
  if (close != std::string::npos) body = body.substr(0, close);
  return trim(body);
}

std::vector<ImageRecord> select_discovery_sample(const Manifest& manifest,
                                                 const std::vector<PromptCondition>& matrix,
                                                 const std::string& backend_id,
                                                 const std::string& object_id, std::int64_t seed,
                                                 int per_condition) {
  std::map<std::string, std::vector<const ImageRecord*>> by_condition;
  for (const auto& r : manifest.records) {
    if (r.backend_id == backend_id) by_condition[r.condition_id].push_back(&r);
  }
  std::vector<ImageRecord> out;
  std::mt19937_64 rng(static_cast<std::uint64_t>(seed) ^ stable_hash64(backend_id + "/" + object_id));
  bool any = false;
  for (const auto& cond : matrix) {
    if (cond.object_id != object_id) continue;
    any = true;
    auto& pool = by_condition[cond.id];
    if (static_cast<int>(pool.size()) < per_condition) {
      throw ValidationError("discovery sample: condition " + backend_id + ":" + cond.id + " has " +
                            std::to_string(pool.size()) + " image(s), needs " +
                            std::to_string(per_condition));
    }
    std::sort(pool.begin(), pool.end(), [](const ImageRecord* a, const ImageRecord* b) {
      return a->replicate_index < b->replicate_index;
    });
    std::vector<const ImageRecord*> picked;
    std::sample(pool.begin(), pool.end(), std::back_inserter(picked), per_condition, rng);
    for (const auto* r : picked) out.push_back(*r);
  }
  if (!any) throw ValidationError("discovery sample: object '" + object_id + "' is not in the matrix");
  return out;
}

std::string build_discovery_prompt(const std::string& object_phrase, std::size_t n_images,
                                   std::size_t n_base_images) {
  std::string p;
  p += "These " + std::to_string(n_images) + " images each show a " + object_phrase +
       " generated from different prompts: " + std::to_string(n_base_images) +
       " from a neutral prompt and the rest from prompts naming different demographic groups.\n\n";
  p += "Identify 4 distinguishable visual attributes that could differentiate between the "
       "demographic conditions for this object type: 3 attributes of the product itself and 1 "
       "attribute of the background. Do not propose color or text attributes; product_color, "
       "text_presence, background_color and background_text_presence are already covered.\n\n";
  p += "For each attribute give a snake_case name and 4 to 6 mutually exclusive snake_case values.\n\n";
  p += "Return ONLY valid JSON in this exact format:\n"
       "{\n"
       "  \"product_attributes\": [\n"
       "    {\"name\": \"attribute_name\", \"values\": [\"value_1\", \"value_2\", \"value_3\", \"value_4\"]},\n"
       "    {\"name\": \"attribute_name\", \"values\": [...]},\n"
       "    {\"name\": \"attribute_name\", \"values\": [...]}\n"
       "  ],\n"
       "  \"background_attributes\": [\n"
       "    {\"name\": \"attribute_name\", \"values\": [...]}\n"
       "  ]\n"
       "}\n\n"
       "Requirements:\n"
       "- Exactly 3 product attributes and exactly 1 background attribute\n"
       "- Each attribute must be visually checkable in a single image\n"
       "- Return ONLY the JSON, no additional text or formatting";
  return p;
}

std::vector<AttributeSpec> parse_discovery_response(const std::string& raw) {
  json j = json::parse(strip_code_fences(raw), nullptr, false);
  if (j.is_discarded() || !j.is_object()) {
    throw ResponseFormatError("discovery response is not a JSON object", raw);
  }
  std::vector<AttributeSpec> out;
  std::set<std::string> names;
  auto read_group = [&](const char* key, AttributeScope scope, std::size_t expected) {
    const auto it = j.find(key);
    if (it == j.end() || !it->is_array()) {
      throw ResponseFormatError(std::string("discovery response lacks array '") + key + "'", raw);
    }
    if (it->size() != expected) {
      throw ResponseFormatError(std::string("discovery response has ") + std::to_string(it->size()) +
                                    " " + key + ", expected " + std::to_string(expected),
                                raw);
    }
    for (const auto& item : *it) {
      if (!item.is_object() || !item.contains("name") || !item["name"].is_string()) {
        throw ResponseFormatError("discovery attribute without a name", raw);
      }
      AttributeSpec spec;
      try {
        spec.name = normalize_value(item["name"].get<std::string>(), {"name", scope, ValueMode::kOpen, {}, {}});
      } catch (const ValidationError&) {
        throw ResponseFormatError("discovery attribute with an empty name", raw);
      }
      spec.scope = scope;
      spec.origin = AttributeOrigin::kDiscovered;
      spec.mode = item.value("value_mode", "closed") == "open" ? ValueMode::kOpen : ValueMode::kClosed;
      if (is_fixed_attribute_name(spec.name)) {
        throw ResponseFormatError("discovered attribute '" + spec.name +
                                      "' collides with a fixed attribute name",
                                  raw);
      }
      if (!names.insert(spec.name).second) {
        throw ResponseFormatError("discovered attribute '" + spec.name + "' proposed twice", raw);
      }
      if (spec.mode == ValueMode::kClosed) {
        std::set<std::string> seen;
        for (const auto& v : item.value("values", json::array())) {
          if (!v.is_string()) continue;
          const std::string value = trim(v.get<std::string>());
          if (!value.empty() && seen.insert(to_lower(value)).second) spec.allowed_values.push_back(value);
        }
        if (spec.allowed_values.size() < 2) {
          throw ResponseFormatError("discovered attribute '" + spec.name + "' has fewer than 2 values", raw);
        }
      }
      out.push_back(std::move(spec));
    }
  };
  read_group("product_attributes", AttributeScope::kProduct, 3);
  read_group("background_attributes", AttributeScope::kBackground, 1);
  return out;
}

DiscoveryResult discover_attributes(const std::vector<ImageRecord>& sample, VlmClient& client,
                                    const std::string& backend_id, const ObjectCategory& object,
                                    const std::filesystem::path& root, int max_reprompts) {
  if (sample.empty()) throw ValidationError("discovery sample is empty");
  VlmRequest req;
  req.purpose = VlmPurpose::kDiscovery;
  req.backend_id = backend_id;
  req.object_id = object.id;
  std::size_t n_base = 0;
  for (const auto& r : sample) {
    if (r.condition_id.ends_with("/base")) ++n_base;
    req.images.push_back(read_file_bytes(root / r.file_path));
  }
  req.prompt = build_discovery_prompt(object.phrase, sample.size(), n_base);

  DiscoveryResult result;
  result.prompt = req.prompt;
  for (int attempt = 1;; ++attempt) {
    req.attempt = attempt;
    result.responses.push_back(client.complete(req));
    try {
      result.taxonomy = make_taxonomy(backend_id, object.id, parse_discovery_response(result.responses.back()));
      validate_taxonomy(result.taxonomy);
      return result;
    } catch (const ResponseFormatError& e) {
      if (attempt > max_reprompts) {
        throw ResponseFormatError(std::string("discovery for ") + backend_id + "/" + object.id +
                                      " failed after " + std::to_string(attempt) + " attempt(s): " + e.what(),
                                  e.raw());
      }
    } catch (const ValidationError& e) {
      if (attempt > max_reprompts) {
        throw ResponseFormatError(std::string("discovery for ") + backend_id + "/" + object.id + ": " + e.what(),
                                  result.responses.back());
      }
    }
  }
}

}  // namespace objbias
