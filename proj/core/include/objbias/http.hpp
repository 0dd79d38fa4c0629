#pragma once

#include <chrono>
#include <condition_variable>
#include <functional>
#include <mutex>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "objbias/errors.hpp"

namespace objbias::http {

using Headers = std::vector<std::pair<std::string, std::string>>;

struct Response {
  int status = 0;
  std::string body;
  std::string content_type;
};

/// Throws TransientError when no response was received (DNS, connect, timeout).
Response post(const std::string& url, const std::string& body, const std::string& content_type,
              const Headers& headers, std::chrono::seconds timeout = std::chrono::seconds(120));
Response get(const std::string& url, const Headers& headers,
             std::chrono::seconds timeout = std::chrono::seconds(120));

struct RetryPolicy {
  int max_attempts = 3;
  std::chrono::milliseconds initial_backoff{500};
  std::chrono::milliseconds max_backoff{30000};
};

/// Calls `fn` until it returns without throwing TransientError, sleeping with
/// exponential backoff between attempts. Other exceptions propagate at once.
template <typename Fn>
auto with_retry(const RetryPolicy& policy, Fn&& fn) -> decltype(fn(1)) {
  auto delay = policy.initial_backoff;
  for (int attempt = 1;; ++attempt) {
    try {
      return fn(attempt);
    } catch (const TransientError&) {
      if (attempt >= policy.max_attempts) throw;
    }
    std::this_thread::sleep_for(delay);
    delay = std::min(delay * 2, policy.max_backoff);
  }
}

/// Token bucket shared by every request to one service.
class RateLimiter {
 public:
  explicit RateLimiter(double requests_per_minute, double burst = 1.0);

  /// Blocks until a token is available.
  void acquire();
  double requests_per_minute() const noexcept { return rate_per_sec_ * 60.0; }

 private:
  using Clock = std::chrono::steady_clock;
  std::mutex mutex_;
  double rate_per_sec_;
  double capacity_;
  double tokens_;
  Clock::time_point last_;
};

/// Classifies a non-2xx status: 401/403 -> CredentialError naming `auth_env`,
/// 408/429/5xx -> TransientError, a policy refusal -> ContentPolicyError,
/// anything else -> Error.
[[noreturn]] void raise_for_status(const Response& r, const std::string& service,
                                   const std::string& auth_env);

}  // namespace objbias::http
