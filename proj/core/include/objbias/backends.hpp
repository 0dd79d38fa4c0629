#pragma once

#include <atomic>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>

#include "objbias/config.hpp"
#include "objbias/http.hpp"
#include "objbias/util.hpp"

namespace objbias {

struct GeneratedImage {
  Bytes png;
  std::map<std::string, std::string> meta;
};

/// An image generation service. Implementations must be safe to call from
/// several worker threads at once.
class ImageBackend {
 public:
  explicit ImageBackend(BackendSpec spec) : spec_(std::move(spec)) {}
  virtual ~ImageBackend() = default;

  const BackendSpec& spec() const noexcept { return spec_; }
  const std::string& id() const noexcept { return spec_.id; }
  virtual bool supports_seed() const { return spec_.supports_seed; }

  /// Throws CredentialError before any request is made if auth is missing.
  virtual void check_credentials() const {}

  /// Returns decodable PNG bytes. Throws TransientError (exhausted retries),
  /// ContentPolicyError, CredentialError, or Error.
  virtual GeneratedImage generate_image(std::string_view prompt,
                                        const std::map<std::string, std::string>& params,
                                        std::optional<std::int64_t> seed) = 0;

  std::uint64_t call_count() const noexcept { return calls_.load(); }

 protected:
  void count_call() noexcept { ++calls_; }

 private:
  BackendSpec spec_;
  std::atomic<std::uint64_t> calls_{0};
};

/// Pure function of (prompt, seed): a solid-colour placeholder with a barcode label.
class MockBackend final : public ImageBackend {
 public:
  explicit MockBackend(BackendSpec spec);
  bool supports_seed() const override { return true; }
  GeneratedImage generate_image(std::string_view prompt,
                                const std::map<std::string, std::string>& params,
                                std::optional<std::int64_t> seed) override;
};

/// HTTP adapter; the request/response shape is chosen by spec.api_style.
class RemoteBackend final : public ImageBackend {
 public:
  RemoteBackend(BackendSpec spec, http::RetryPolicy retry,
                std::shared_ptr<http::RateLimiter> limiter);

  void check_credentials() const override;
  GeneratedImage generate_image(std::string_view prompt,
                                const std::map<std::string, std::string>& params,
                                std::optional<std::int64_t> seed) override;

 private:
  std::string credential() const;
  http::Headers auth_headers(const std::string& key) const;
  Bytes fetch_replicate_output(const nlohmann::json& body, const http::Headers& headers);

  http::RetryPolicy retry_;
  std::shared_ptr<http::RateLimiter> limiter_;
};

/// Builds the adapter for `spec`; `force_mock` swaps any remote backend for a mock.
std::unique_ptr<ImageBackend> make_backend(const BackendSpec& spec, const RateLimitConfig& limits,
                                           bool force_mock = false);

}  // namespace objbias
