#include "objbias/backends.hpp"

#include <cstdlib>

#include "objbias/errors.hpp"
#include "objbias/png.hpp"

namespace objbias {

using nlohmann::json;

namespace {

/// Numeric and boolean parameter strings travel as JSON numbers/booleans.
json param_value(const std::string& v) {
  if (v == "true") return true;
  if (v == "false") return false;
  char* end = nullptr;
  const long long i = std::strtoll(v.c_str(), &end, 10);
  if (!v.empty() && end && *end == '\0') return i;
  const double d = std::strtod(v.c_str(), &end);
  if (!v.empty() && end && *end == '\0') return d;
  return v;
}

json params_json(const std::map<std::string, std::string>& params) {
  json out = json::object();
  for (const auto& [k, v] : params) out[k] = param_value(v);
  return out;
}

Bytes decode_b64_field(const json& j, const char* field) {
  if (!j.is_string()) throw Error(std::string("response field '") + field + "' is not a string");
  return base64_decode(j.get<std::string>());
}

}  // namespace

MockBackend::MockBackend(BackendSpec spec) : ImageBackend(std::move(spec)) {}

GeneratedImage MockBackend::generate_image(std::string_view prompt,
                                           const std::map<std::string, std::string>& /*params*/,
                                           std::optional<std::int64_t> seed) {
  if (prompt.empty()) throw ValidationError("prompt must be nonempty");
  count_call();
  return {png::placeholder(prompt, seed), {{"generator", "mock-placeholder"}, {"size", "64x64"}}};
}

RemoteBackend::RemoteBackend(BackendSpec spec, http::RetryPolicy retry,
                             std::shared_ptr<http::RateLimiter> limiter)
    : ImageBackend(std::move(spec)), retry_(retry), limiter_(std::move(limiter)) {
  const auto& style = this->spec().api_style;
  if (style != "generic" && style != "openai" && style != "google-predict" && style != "replicate") {
    throw ConfigError("backend '" + this->spec().id + "': unknown api_style '" + style + "'");
  }
}

std::string RemoteBackend::credential() const {
  const char* v = std::getenv(spec().auth_env.c_str());
  if (v == nullptr || *v == '\0') {
    throw CredentialError(spec().auth_env, "backend '" + spec().id + "': environment variable " +
                                               spec().auth_env + " is not set");
  }
  return v;
}

void RemoteBackend::check_credentials() const { (void)credential(); }

http::Headers RemoteBackend::auth_headers(const std::string& key) const {
  if (spec().api_style == "google-predict") return {{"x-goog-api-key", key}};
  http::Headers h{{"Authorization", "Bearer " + key}};
  if (spec().api_style == "replicate") h.emplace_back("Prefer", "wait");
  return h;
}

Bytes RemoteBackend::fetch_replicate_output(const json& body, const http::Headers& headers) {
  json prediction = body;
  // Replicate answers synchronously under "Prefer: wait" unless the run is slow;
  // then it must be polled through urls.get.
  for (int poll = 0; poll < 120; ++poll) {
    const std::string status = prediction.value("status", "succeeded");
    if (status == "failed" || status == "canceled") {
      const std::string err = prediction.contains("error") ? prediction["error"].dump() : status;
      if (to_lower(err).find("nsfw") != std::string::npos) {
        throw ContentPolicyError("replicate prediction rejected: " + err);
      }
      throw Error("replicate prediction " + status + ": " + err);
    }
    if (status == "succeeded" || (prediction.contains("output") && !prediction["output"].is_null())) {
      break;
    }
    const std::string poll_url = prediction.at("urls").at("get").get<std::string>();
    std::this_thread::sleep_for(std::chrono::seconds(1));
    limiter_->acquire();
    const auto r = http::get(poll_url, headers);
    if (r.status / 100 != 2) http::raise_for_status(r, spec().id, spec().auth_env);
    prediction = json::parse(r.body);
  }
  const json& out = prediction.at("output");
  const std::string url = out.is_array() ? out.at(0).get<std::string>() : out.get<std::string>();
  if (url.rfind("data:", 0) == 0) return base64_decode(url.substr(url.find(',') + 1));
  limiter_->acquire();
  const auto r = http::get(url, headers);
  if (r.status / 100 != 2) http::raise_for_status(r, spec().id, spec().auth_env);
  return Bytes(r.body.begin(), r.body.end());
}

GeneratedImage RemoteBackend::generate_image(std::string_view prompt,
                                             const std::map<std::string, std::string>& params,
                                             std::optional<std::int64_t> seed) {
  if (prompt.empty()) throw ValidationError("prompt must be nonempty");
  const std::string key = credential();
  const auto headers = auth_headers(key);
  const auto& style = spec().api_style;

  json request;
  if (style == "openai") {
    request = params_json(params);
    request["prompt"] = prompt;
    request["n"] = 1;
  } else if (style == "google-predict") {
    json parameters = params_json(params);
    parameters["sampleCount"] = 1;
    if (seed && supports_seed()) parameters["seed"] = *seed;
    request = {{"instances", json::array({{{"prompt", prompt}}})}, {"parameters", parameters}};
  } else if (style == "replicate") {
    auto input = params_json(params);
    input.erase("version");
    input["prompt"] = prompt;
    if (seed && supports_seed()) input["seed"] = *seed;
    request = {{"input", input}};
    if (auto v = params.find("version"); v != params.end()) request["version"] = v->second;
  } else {
    request = params_json(params);
    request["prompt"] = prompt;
    if (seed && supports_seed()) request["seed"] = *seed;
  }
  const std::string body = request.dump();

  return http::with_retry(retry_, [&](int attempt) {
    count_call();
    limiter_->acquire();
    const auto r = http::post(spec().endpoint, body, "application/json", headers);
    if (r.status / 100 != 2) http::raise_for_status(r, spec().id, spec().auth_env);

    GeneratedImage img;
    img.meta["http_status"] = std::to_string(r.status);
    img.meta["attempts"] = std::to_string(attempt);
    if (r.content_type.rfind("image/", 0) == 0) {
      img.png.assign(r.body.begin(), r.body.end());
    } else {
      json j;
      try {
        j = json::parse(r.body);
      } catch (const json::parse_error&) {
        throw Error(spec().id + ": response is neither an image nor JSON");
      }
      if (style == "openai") {
        img.png = decode_b64_field(j.at("data").at(0).at("b64_json"), "data[0].b64_json");
        if (j["data"][0].contains("revised_prompt")) {
          img.meta["revised_prompt"] = j["data"][0]["revised_prompt"].get<std::string>();
        }
      } else if (style == "google-predict") {
        const auto& preds = j.value("predictions", json::array());
        if (preds.empty()) throw ContentPolicyError(spec().id + ": no image returned (filtered)");
        img.png = decode_b64_field(preds.at(0).at("bytesBase64Encoded"), "bytesBase64Encoded");
      } else if (style == "replicate") {
        img.png = fetch_replicate_output(j, headers);
        if (j.contains("id")) img.meta["prediction_id"] = j["id"].get<std::string>();
      } else if (j.contains("image_base64")) {
        img.png = decode_b64_field(j["image_base64"], "image_base64");
      } else if (j.contains("b64_json")) {
        img.png = decode_b64_field(j["b64_json"], "b64_json");
      } else if (j.contains("data")) {
        img.png = decode_b64_field(j["data"].at(0).at("b64_json"), "data[0].b64_json");
      } else {
        throw Error(spec().id + ": JSON response carries no image field");
      }
    }
    if (!png::inspect(img.png)) throw Error(spec().id + ": returned bytes are not a decodable PNG");
    return img;
  });
}

std::unique_ptr<ImageBackend> make_backend(const BackendSpec& spec, const RateLimitConfig& limits,
                                           bool force_mock) {
  if (force_mock || spec.kind == BackendKind::kMock) {
    BackendSpec mock = spec;
    mock.kind = BackendKind::kMock;
    return std::make_unique<MockBackend>(mock);
  }
  http::RetryPolicy retry;
  retry.max_attempts = limits.max_attempts;
  retry.initial_backoff = std::chrono::milliseconds(limits.backoff_initial_ms);
  auto limiter = std::make_shared<http::RateLimiter>(limits.requests_per_minute);
  return std::make_unique<RemoteBackend>(spec, retry, std::move(limiter));
}

}  // namespace objbias
