#include "objbias/extraction.hpp"

#include <atomic>
#include <mutex>
#include <thread>

#include "objbias/discovery.hpp"
#include "objbias/errors.hpp"

namespace objbias {

using nlohmann::json;

namespace {

std::string quoted_list(const std::vector<std::string>& values) {
  std::string s = "[";
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) s += ", ";
    s += "\"" + values[i] + "\"";
  }
  return s + "]";
}

std::optional<json> parse_object(const std::string& raw) {
  json j = json::parse(strip_code_fences(raw), nullptr, false);
  if (!j.is_discarded() && j.is_object()) return j;
  const auto open = raw.find('{');
  const auto close = raw.rfind('}');
  if (open != std::string::npos && close != std::string::npos && close > open) {
    j = json::parse(raw.substr(open, close - open + 1), nullptr, false);
    if (!j.is_discarded() && j.is_object()) return j;
  }
  return std::nullopt;
}

const json* lookup(const json& doc, const AttributeSpec& spec) {
  const char* section = spec.scope == AttributeScope::kProduct ? "product_features" : "background_features";
  for (const json* scope : {doc.contains(section) ? &doc[section] : nullptr, &doc}) {
    if (scope == nullptr || !scope->is_object()) continue;
    if (auto it = scope->find(spec.name); it != scope->end()) return &*it;
    // The published template labels the product colour simply "color".
    if (spec.name == "product_color") {
      if (auto it = scope->find("color"); it != scope->end()) return &*it;
    }
  }
  return nullptr;
}

}  // namespace

std::string build_extraction_prompt(const AttributeTaxonomy& taxonomy, const std::string& object_phrase) {
  std::string p = "Analyze this " + object_phrase + " image and identify the following visual features.\n\n";
  p += "For color features, write the actual observed color (e.g., \"navy_blue\", \"forest_green\", \"burgundy\").\n";
  p += "For other features, choose the most appropriate option from the provided variations.\n\n";
  p += "Return ONLY valid JSON in this exact format:\n{\n";
  const std::pair<AttributeScope, const char*> sections[] = {
      {AttributeScope::kProduct, "product_features"}, {AttributeScope::kBackground, "background_features"}};
  for (std::size_t s = 0; s < 2; ++s) {
    std::vector<const AttributeSpec*> attrs;
    for (const auto& a : taxonomy.attributes) {
      if (a.scope == sections[s].first) attrs.push_back(&a);
    }
    p += std::string("  \"") + sections[s].second + "\": {\n";
    for (std::size_t i = 0; i < attrs.size(); ++i) {
      const auto& a = *attrs[i];
      p += "    \"" + a.name + "\": ";
      p += a.mode == ValueMode::kOpen ? std::string("write actual color")
                                      : "choose from " + quoted_list(a.allowed_values);
      p += i + 1 < attrs.size() ? ",\n" : "\n";
    }
    p += s == 0 ? "  },\n" : "  }\n";
  }
  p += "}\n\n";
  p += "Requirements:\n"
       "- For color features: write actual observed colors\n"
       "- For other features: choose exactly one option from the provided variations\n"
       "- If uncertain, choose the closest match\n"
       "- Return ONLY the JSON, no additional text or formatting";
  return p;
}

std::optional<ParsedValues> parse_extraction_response(const std::string& raw,
                                                      const AttributeTaxonomy& taxonomy) {
  const auto doc = parse_object(raw);
  if (!doc) return std::nullopt;
  ParsedValues out;
  for (const auto& spec : taxonomy.attributes) {
    const json* v = lookup(*doc, spec);
    std::string value(kUnparseable);
    if (v != nullptr && (v->is_string() || v->is_number() || v->is_boolean())) {
      try {
        value = normalize_value(v->is_string() ? v->get<std::string>() : v->dump(), spec);
      } catch (const ValidationError&) {
        value = std::string(kUnparseable);
      }
    }
    if (value == kUnparseable) out.flags.push_back(spec.name);
    out.values[spec.name] = value;
  }
  return out;
}

ExtractionCache::ExtractionCache(std::filesystem::path file) {
  for (const auto& line : read_jsonl(file)) {
    entries_[line.at("key").get<std::string>()] = attribute_record_from_json(line.at("record"));
  }
  out_ = std::make_unique<JsonlAppender>(file);
}

std::string ExtractionCache::key(const std::string& content_hash, const std::string& taxonomy_digest,
                                 const std::string& model_id) {
  return content_hash + ":" + taxonomy_digest + ":" + model_id;
}

std::optional<AttributeRecord> ExtractionCache::get(const std::string& key) const {
  std::shared_lock lock(mutex_);
  if (auto it = entries_.find(key); it != entries_.end()) return it->second;
  return std::nullopt;
}

void ExtractionCache::put(const std::string& key, const AttributeRecord& record) {
  std::unique_lock lock(mutex_);
  if (!entries_.emplace(key, record).second) return;
  if (out_) out_->append({{"key", key}, {"record", to_json(record)}});
}

std::size_t ExtractionCache::size() const {
  std::shared_lock lock(mutex_);
  return entries_.size();
}

Extractor::Extractor(VlmClient& client, ExtractionCache& cache, int max_reprompts)
    : client_(client), cache_(cache), max_reprompts_(max_reprompts) {}

AttributeRecord Extractor::extract(const ImageRecord& image, const AttributeTaxonomy& taxonomy,
                                   const std::string& object_phrase, const std::filesystem::path& root) {
  const auto key = ExtractionCache::key(image.content_hash, taxonomy.digest(), client_.model_id());
  if (auto hit = cache_.get(key)) {
    hit->image_id = image.image_id;
    return *hit;
  }
  auto bytes = read_file_bytes(root / image.file_path);
  if (!image.content_hash.empty() && sha256_hex(bytes) != image.content_hash) {
    throw ValidationError("image " + image.image_id + " at " + image.file_path +
                          " does not match its manifest content hash");
  }
  return run(image, std::move(bytes), taxonomy, object_phrase);
}

AttributeRecord Extractor::extract(const ImageRecord& image, std::span<const std::uint8_t> png,
                                   const AttributeTaxonomy& taxonomy, const std::string& object_phrase) {
  const auto key = ExtractionCache::key(image.content_hash, taxonomy.digest(), client_.model_id());
  if (auto hit = cache_.get(key)) {
    hit->image_id = image.image_id;
    return *hit;
  }
  return run(image, Bytes(png.begin(), png.end()), taxonomy, object_phrase);
}

AttributeRecord Extractor::run(const ImageRecord& image, Bytes png, const AttributeTaxonomy& taxonomy,
                               const std::string& object_phrase) {
  const std::string digest = taxonomy.digest();
  VlmRequest req;
  req.purpose = VlmPurpose::kExtraction;
  req.prompt = build_extraction_prompt(taxonomy, object_phrase);
  req.images.push_back(std::move(png));
  req.backend_id = image.backend_id;
  req.object_id = taxonomy.object_id;
  req.image = &image;
  req.taxonomy = &taxonomy;

  AttributeRecord rec;
  rec.image_id = image.image_id;
  rec.model_id = client_.model_id();
  rec.prompt_digest = sha256_hex(req.prompt);
  rec.taxonomy_digest = digest;

  const std::string base_prompt = req.prompt;
  for (int attempt = 1;; ++attempt) {
    req.attempt = attempt;
    std::string raw = client_.complete(req);
    if (auto parsed = parse_extraction_response(raw, taxonomy)) {
      rec.raw_response = std::move(raw);
      rec.values = std::move(parsed->values);
      rec.flags = std::move(parsed->flags);
      break;
    }
    if (attempt > max_reprompts_) {
      rec.raw_response = std::move(raw);
      for (const auto& a : taxonomy.attributes) {
        rec.values[a.name] = std::string(kUnparseable);
        rec.flags.push_back(a.name);
      }
      break;
    }
    rec.rejected_responses.push_back(std::move(raw));
    req.prompt = base_prompt + "\n\nYour previous reply was not valid JSON. Return ONLY the JSON object.";
  }
  cache_.put(ExtractionCache::key(image.content_hash, digest, rec.model_id), rec);
  return rec;
}

std::vector<AttributeRecord> Extractor::extract_all(const std::vector<ImageRecord>& images,
                                                    const AttributeTaxonomy& taxonomy,
                                                    const std::string& object_phrase,
                                                    const std::filesystem::path& root, int workers) {
  std::vector<AttributeRecord> out(images.size());
  std::atomic<std::size_t> cursor{0};
  std::mutex error_mutex;
  std::exception_ptr error;
  std::atomic<bool> stop{false};
  {
    std::vector<std::jthread> pool;
    const int n = std::max(1, std::min<int>(workers, static_cast<int>(images.size())));
    for (int w = 0; w < n; ++w) {
      pool.emplace_back([&] {
        for (;;) {
          if (stop) return;
          const std::size_t i = cursor.fetch_add(1);
          if (i >= images.size()) return;
          try {
            out[i] = extract(images[i], taxonomy, object_phrase, root);
          } catch (...) {
            std::lock_guard lock(error_mutex);
            if (!error) error = std::current_exception();
            stop = true;
            return;
          }
        }
      });
    }
  }
  if (error) std::rethrow_exception(error);
  return out;
}

}  // namespace objbias
