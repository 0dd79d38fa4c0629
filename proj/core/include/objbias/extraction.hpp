#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <vector>

#include "objbias/manifest.hpp"
#include "objbias/taxonomy.hpp"
#include "objbias/util.hpp"
#include "objbias/vlm_client.hpp"

namespace objbias {

/// Classification prompt derived from the taxonomy: a JSON skeleton with
/// product and background sections, "write actual color" for open attributes
/// and a choice list for closed ones.
std::string build_extraction_prompt(const AttributeTaxonomy& taxonomy, const std::string& object_phrase);

/// Interprets one response against the taxonomy. Returns nullopt when the
/// text is not a JSON object even after fence stripping. Missing or
/// out-of-set values become kUnparseable and are listed in `flags`.
struct ParsedValues {
  std::map<std::string, std::string> values;
  std::vector<std::string> flags;
};
std::optional<ParsedValues> parse_extraction_response(const std::string& raw,
                                                      const AttributeTaxonomy& taxonomy);

/// Results keyed by (content_hash, taxonomy digest, model id). Concurrent
/// lookups; inserts serialized and appended to a JSON-lines file when one is given.
class ExtractionCache {
 public:
  ExtractionCache() = default;
  explicit ExtractionCache(std::filesystem::path file);

  std::optional<AttributeRecord> get(const std::string& key) const;
  void put(const std::string& key, const AttributeRecord& record);
  std::size_t size() const;

  static std::string key(const std::string& content_hash, const std::string& taxonomy_digest,
                         const std::string& model_id);

 private:
  mutable std::shared_mutex mutex_;
  std::map<std::string, AttributeRecord> entries_;
  std::unique_ptr<JsonlAppender> out_;
};

class Extractor {
 public:
  Extractor(VlmClient& client, ExtractionCache& cache, int max_reprompts = 2);

  /// Reads the image from `root / image.file_path` unless the result is cached.
  /// Throws ValidationError if the bytes do not hash to `image.content_hash`.
  AttributeRecord extract(const ImageRecord& image, const AttributeTaxonomy& taxonomy,
                          const std::string& object_phrase, const std::filesystem::path& root);

  /// As above with the image bytes supplied by the caller.
  AttributeRecord extract(const ImageRecord& image, std::span<const std::uint8_t> png,
                          const AttributeTaxonomy& taxonomy, const std::string& object_phrase);

  /// Extracts every record on `workers` threads; output is in input order.
  std::vector<AttributeRecord> extract_all(const std::vector<ImageRecord>& images,
                                           const AttributeTaxonomy& taxonomy,
                                           const std::string& object_phrase,
                                           const std::filesystem::path& root, int workers = 4);

 private:
  AttributeRecord run(const ImageRecord& image, Bytes png, const AttributeTaxonomy& taxonomy,
                      const std::string& object_phrase);

  VlmClient& client_;
  ExtractionCache& cache_;
  int max_reprompts_;
};

}  // namespace objbias
