#pragma once

#include <atomic>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "objbias/config.hpp"
#include "objbias/http.hpp"
#include "objbias/manifest.hpp"
#include "objbias/taxonomy.hpp"
#include "objbias/util.hpp"

namespace objbias {

enum class VlmPurpose { kDiscovery, kExtraction };

struct VlmRequest {
  VlmPurpose purpose = VlmPurpose::kExtraction;
  std::string prompt;
  std::vector<Bytes> images;  // PNG bytes
  int attempt = 1;

  // Context used by offline clients only; remote clients see prompt + images.
  std::string backend_id;
  std::string object_id;
  const ImageRecord* image = nullptr;
  const AttributeTaxonomy* taxonomy = nullptr;
};

/// A vision-language model answering a text prompt about images. Must be
/// callable from several threads.
class VlmClient {
 public:
  virtual ~VlmClient() = default;
  virtual std::string complete(const VlmRequest& request) = 0;
  virtual std::string model_id() const = 0;
  virtual void check_credentials() const {}

  /// Number of complete() calls served so far.
  std::uint64_t call_count() const noexcept { return calls_.load(); }

 protected:
  void count_call() noexcept { ++calls_; }

 private:
  std::atomic<std::uint64_t> calls_{0};
};

/// HTTP client; temperature is always sent as 0.
class RemoteVlmClient final : public VlmClient {
 public:
  RemoteVlmClient(VlmClientSpec spec, http::RetryPolicy retry,
                  std::shared_ptr<http::RateLimiter> limiter);
  std::string complete(const VlmRequest& request) override;
  std::string model_id() const override { return spec_.model_id; }
  void check_credentials() const override;

 private:
  VlmClientSpec spec_;
  http::RetryPolicy retry_;
  std::shared_ptr<http::RateLimiter> limiter_;
};

/// Returns canned responses in order; throws once the script is exhausted.
class ScriptedVlmClient final : public VlmClient {
 public:
  explicit ScriptedVlmClient(std::vector<std::string> responses, std::string model = "scripted-vlm");
  std::string complete(const VlmRequest& request) override;
  std::string model_id() const override { return model_; }
  std::size_t remaining() const;

 private:
  mutable std::mutex mutex_;
  std::deque<std::string> responses_;
  std::string model_;
};

/// Per-cell categorical distributions that drive the mock extractor.
///
/// Cells are keyed by (backend, condition id, attribute); "*" matches any
/// backend or condition. Lookup prefers the most specific match.
class MockProfile {
 public:
  using Weights = std::map<std::string, double>;

  void set(const std::string& backend, const std::string& condition, const std::string& attribute,
           Weights weights);
  const Weights* find(const std::string& backend, const std::string& condition,
                      const std::string& attribute) const;

  /// Colour vocabulary sampled for open attributes without an explicit cell.
  const std::vector<std::string>& open_palette() const noexcept { return palette_; }
  void set_open_palette(std::vector<std::string> palette);

  static MockProfile from_json(const nlohmann::json& j);
  static MockProfile load(const std::filesystem::path& path);
  nlohmann::json to_json() const;

 private:
  std::map<std::string, Weights> cells_;
  std::vector<std::string> palette_ = {"black", "white", "silver", "red",
                                       "navy_blue", "forest_green", "beige", "pink"};
};

/// Offline stand-in for the VLM.
///
/// Discovery answers come from a built-in attribute catalog. Extraction
/// answers sample each attribute from the profile's distribution for the
/// image's (backend, condition), or from a condition-specific pseudo-random
/// distribution when the profile has no cell. Sampling is seeded by
/// (content_hash, taxonomy digest, seed, attribute), so the response is a
/// pure function of those inputs.
class MockVlmClient final : public VlmClient {
 public:
  MockVlmClient(std::string model_id, std::int64_t seed, MockProfile profile = {});
  std::string complete(const VlmRequest& request) override;
  std::string model_id() const override { return model_; }

  /// The JSON document (not text) an extraction call would answer with.
  nlohmann::json sample_extraction(const ImageRecord& image, const AttributeTaxonomy& taxonomy) const;

 private:
  std::string discovery_answer(const std::string& backend_id, const std::string& object_id) const;

  std::string model_;
  std::int64_t seed_;
  MockProfile profile_;
};

/// Discovered attributes the mock proposes for (backend, object). Mirrors the
/// published taxonomies for the default backends and objects; other pairs get
/// a generic set.
std::vector<AttributeSpec> mock_discovered_attributes(const std::string& backend_id,
                                                      const std::string& object_id);

std::unique_ptr<VlmClient> make_vlm_client(const VlmClientSpec& spec, const RateLimitConfig& limits,
                                           std::int64_t seed, bool force_mock = false);

}  // namespace objbias
