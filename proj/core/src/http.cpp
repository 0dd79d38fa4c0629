#include "objbias/http.hpp"

#include <httplib.h>

#include <algorithm>

#include "objbias/util.hpp"

namespace objbias::http {

namespace {

struct SplitUrl {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

SplitUrl split(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw Error("invalid URL '" + url + "'");
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

httplib::Headers to_httplib(const Headers& headers) {
  httplib::Headers out;
  for (const auto& [k, v] : headers) out.emplace(k, v);
  return out;
}

Response convert(const httplib::Result& res, const std::string& url) {
  if (!res) {
    throw TransientError("request to " + url + " failed: " + httplib::to_string(res.error()));
  }
  return {res->status, res->body, res->get_header_value("Content-Type")};
}

httplib::Client make_client(const std::string& origin, std::chrono::seconds timeout) {
  httplib::Client cli(origin);
  cli.set_connection_timeout(std::chrono::seconds(10));
  cli.set_read_timeout(timeout);
  cli.set_write_timeout(timeout);
  cli.set_follow_location(true);
  return cli;
}

}  // namespace

Response post(const std::string& url, const std::string& body, const std::string& content_type,
              const Headers& headers, std::chrono::seconds timeout) {
  const auto parts = split(url);
  auto cli = make_client(parts.origin, timeout);
  return convert(cli.Post(parts.path, to_httplib(headers), body, content_type), url);
}

Response get(const std::string& url, const Headers& headers, std::chrono::seconds timeout) {
  const auto parts = split(url);
  auto cli = make_client(parts.origin, timeout);
  return convert(cli.Get(parts.path, to_httplib(headers)), url);
}

RateLimiter::RateLimiter(double requests_per_minute, double burst)
    : rate_per_sec_(requests_per_minute / 60.0),
      capacity_(std::max(1.0, burst)),
      tokens_(capacity_),
      last_(Clock::now()) {
  if (requests_per_minute <= 0.0) throw ConfigError("rate limit must be positive");
}

void RateLimiter::acquire() {
  std::unique_lock lock(mutex_);
  for (;;) {
    const auto now = Clock::now();
    const double elapsed = std::chrono::duration<double>(now - last_).count();
    tokens_ = std::min(capacity_, tokens_ + elapsed * rate_per_sec_);
    last_ = now;
    if (tokens_ >= 1.0) {
      tokens_ -= 1.0;
      return;
    }
    const double wait_s = (1.0 - tokens_) / rate_per_sec_;
    // Sleeps with the lock held: other callers queue behind this one.
    std::this_thread::sleep_for(std::chrono::duration<double>(wait_s));
  }
}

void raise_for_status(const Response& r, const std::string& service, const std::string& auth_env) {
  const std::string prefix = service + " returned HTTP " + std::to_string(r.status);
  std::string snippet = r.body.substr(0, 300);
  if (r.status == 401 || r.status == 403) {
    throw CredentialError(auth_env, prefix + ": credential from environment variable " + auth_env +
                                        " was rejected");
  }
  if (r.status == 408 || r.status == 429 || r.status >= 500) {
    throw TransientError(prefix + ": " + snippet);
  }
  const std::string lower = to_lower(r.body);
  if (lower.find("content_policy") != std::string::npos ||
      lower.find("safety") != std::string::npos ||
      lower.find("moderation") != std::string::npos) {
    throw ContentPolicyError(prefix + " (content policy): " + snippet);
  }
  throw Error(prefix + ": " + snippet);
}

}  // namespace objbias::http
