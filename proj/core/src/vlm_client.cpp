#include "objbias/vlm_client.hpp"

#include <cstdlib>
#include <random>

#include "objbias/errors.hpp"

namespace objbias {

using nlohmann::json;

namespace {

std::string cell_key(const std::string& b, const std::string& c, const std::string& a) {
  return b + "\x1f" + c + "\x1f" + a;
}

/// Uniform double in [0, 1) from the top 53 bits; identical on every platform.
double unit_interval(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

std::string sample(const MockProfile::Weights& weights, std::mt19937_64& rng) {
  double total = 0.0;
  for (const auto& [v, w] : weights) total += std::max(0.0, w);
  if (total <= 0.0) throw ValidationError("mock distribution has no positive weight");
  double u = unit_interval(rng) * total;
  for (const auto& [v, w] : weights) {
    if (w <= 0.0) continue;
    if (u < w) return v;
    u -= w;
  }
  for (auto it = weights.rbegin(); it != weights.rend(); ++it) {
    if (it->second > 0.0) return it->first;
  }
  return weights.begin()->first;
}

struct CatalogEntry {
  std::vector<std::pair<std::string, std::vector<std::string>>> product;
  std::pair<std::string, std::vector<std::string>> background;
};

const std::vector<std::string> kLighting = {"bright", "moderate", "dim", "dramatic"};
const std::vector<std::string> kIntensity = {"soft", "moderate", "bright", "dim"};
const std::vector<std::string> kKeyboard = {"full_size", "compact", "chiclet", "backlit"};
const std::vector<std::string> kBezel = {"thin", "medium", "thick"};
const std::vector<std::string> kHinge = {"standard", "convertible_360", "detachable", "hidden"};
const std::vector<std::string> kBodyType = {"sedan", "SUV", "hatchback", "pickup_truck", "sports_car"};
const std::vector<std::string> kBodyStyle = {"sedan", "SUV", "hatchback", "coupe", "convertible"};
const std::vector<std::string> kHeadlight = {"circular", "sleek", "angular", "LED_strip"};
const std::vector<std::string> kWheel = {"alloy", "steel", "sporty", "classic"};
const std::vector<std::string> kEnvironment = {"studio", "urban", "nature", "showroom"};
const std::vector<std::string> kHandle = {"single_handle", "double_handle", "no_handle"};
const std::vector<std::string> kCupShape = {"cylindrical", "tapered", "rounded", "sippy_cup", "mug"};
const std::vector<std::string> kSurface = {"wood", "marble", "fabric", "plain"};
const std::vector<std::string> kCompartment = {"single", "multiple", "laptop_sleeve", "minimal"};
const std::vector<std::string> kStrap = {"padded", "thin", "adjustable", "convertible"};
const std::vector<std::string> kFur = {"plush", "curly", "smooth", "shaggy"};
const std::vector<std::string> kAccessory = {"bow", "scarf", "clothing", "none"};
const std::vector<std::string> kPose = {"sitting", "standing", "lying", "waving"};

const std::map<std::string, std::map<std::string, CatalogEntry>>& catalog() {
  static const std::map<std::string, std::map<std::string, CatalogEntry>> kCatalog = {
      {"gpt-image",
       {{"laptop",
         {{{"keyboard_layout", kKeyboard},
           {"screen_bezel_thickness", kBezel},
           {"laptop_material", {"metal", "plastic", "carbon_fiber", "wood_finish"}}},
          {"lighting_condition", kLighting}}},
        {"car",
         {{{"body_type", kBodyType}, {"headlight_design", kHeadlight}, {"wheel_design", kWheel}},
          {"background_lighting", kLighting}}},
        {"cup",
         {{{"cup_shape", kCupShape},
           {"handle_design", kHandle},
           {"material_texture", {"glossy", "matte", "textured", "transparent"}}},
          {"surface_material", kSurface}}},
        {"backpack",
         {{{"closure_type", {"zipper", "drawstring", "buckle", "flap"}},
           {"strap_style", kStrap},
           {"compartment_design", kCompartment}},
          {"lighting_condition", kLighting}}},
        {"teddy_bear",
         {{{"fur_texture", kFur},
           {"accessory_type", kAccessory},
           {"facial_expression", {"smiling", "neutral", "sleepy", "surprised"}}},
          {"lighting_intensity", kIntensity}}}}},
      {"imagen",
       {{"laptop",
         {{{"keyboard_layout", kKeyboard}, {"screen_bezel_thickness", kBezel}, {"hinge_design", kHinge}},
          {"surface_material", {"wood", "desk_mat", "glass", "plain"}}}},
        {"car",
         {{{"body_style", kBodyStyle},
           {"wheel_design", kWheel},
           {"headlight_shape", {"round", "rectangular", "slim", "angular"}}},
          {"environment_type", kEnvironment}}},
        {"cup",
         {{{"handle_design", kHandle},
           {"surface_texture", {"glossy", "matte", "ribbed", "speckled"}},
           {"rim_shape", {"straight", "flared", "rolled", "tapered"}}},
          {"lighting_intensity", kIntensity}}},
        {"backpack",
         {{{"material_type", {"nylon", "canvas", "leather", "polyester"}},
           {"compartment_structure", kCompartment},
           {"strap_design", {"padded", "thin", "adjustable", "chest_strap"}}},
          {"lighting_condition", kLighting}}},
        {"teddy_bear",
         {{{"material_texture", {"plush", "knitted", "velvet", "shaggy"}},
           {"accessory_type", kAccessory},
           {"pose", kPose}},
          {"lighting_condition", kLighting}}}}},
      {"sdxl",
       {{"laptop",
         {{{"bezel_thickness", kBezel}, {"keyboard_layout", kKeyboard}, {"hinge_design", kHinge}},
          {"background_setting", {"desk", "studio", "office", "outdoor"}}}},
        {"car",
         {{{"body_style", kBodyStyle}, {"headlight_design", kHeadlight}, {"wheel_design", kWheel}},
          {"environment_type", kEnvironment}}},
        {"cup",
         {{{"handle_design", kHandle},
           {"rim_detail", {"plain", "gold_trim", "rolled", "decorated"}},
           {"cup_shape", kCupShape}},
          {"surface_material", kSurface}}},
        {"backpack",
         {{{"material_texture", {"smooth", "textured", "quilted", "woven"}},
           {"compartment_design", kCompartment},
           {"strap_style", kStrap}},
          {"lighting_condition", kLighting}}},
        {"teddy_bear",
         {{{"fur_texture", kFur},
           {"eye_style", {"button", "embroidered", "glass", "cartoon"}},
           {"pose", kPose}},
          {"lighting", kIntensity}}}}},
  };
  return kCatalog;
}

const CatalogEntry& generic_entry() {
  static const CatalogEntry kGeneric = {
      {{"overall_shape", {"boxy", "rounded", "angular", "organic"}},
       {"surface_finish", {"glossy", "matte", "textured", "metallic"}},
       {"design_style", {"minimalist", "classic", "playful", "futuristic"}}},
      {"lighting_condition", kLighting}};
  return kGeneric;
}

}  // namespace

// ---------------------------------------------------------------------------

RemoteVlmClient::RemoteVlmClient(VlmClientSpec spec, http::RetryPolicy retry,
                                 std::shared_ptr<http::RateLimiter> limiter)
    : spec_(std::move(spec)), retry_(retry), limiter_(std::move(limiter)) {
  if (spec_.temperature != 0.0) throw ConfigError("vlm temperature must be 0");
  if (spec_.api_style != "generic" && spec_.api_style != "openai-chat") {
    throw ConfigError("unknown vlm api_style '" + spec_.api_style + "'");
  }
}

void RemoteVlmClient::check_credentials() const {
  const char* v = std::getenv(spec_.auth_env.c_str());
  if (v == nullptr || *v == '\0') {
    throw CredentialError(spec_.auth_env, "vlm: environment variable " + spec_.auth_env + " is not set");
  }
}

std::string RemoteVlmClient::complete(const VlmRequest& request) {
  check_credentials();
  const std::string key = std::getenv(spec_.auth_env.c_str());
  json body;
  if (spec_.api_style == "openai-chat") {
    json content = json::array({{{"type", "text"}, {"text", request.prompt}}});
    for (const auto& img : request.images) {
      content.push_back({{"type", "image_url"},
                         {"image_url", {{"url", "data:image/png;base64," + base64_encode(img)}}}});
    }
    body = {{"model", spec_.model_id},
            {"temperature", 0},
            {"messages", json::array({{{"role", "user"}, {"content", content}}})}};
  } else {
    json images = json::array();
    for (const auto& img : request.images) images.push_back(base64_encode(img));
    body = {{"model", spec_.model_id}, {"temperature", 0}, {"prompt", request.prompt}, {"images", images}};
  }
  const std::string payload = body.dump();
  const http::Headers headers{{"Authorization", "Bearer " + key}};

  return http::with_retry(retry_, [&](int) {
    count_call();
    limiter_->acquire();
    const auto r = http::post(spec_.endpoint, payload, "application/json", headers);
    if (r.status / 100 != 2) http::raise_for_status(r, "vlm", spec_.auth_env);
    if (spec_.api_style == "openai-chat") {
      try {
        return json::parse(r.body).at("choices").at(0).at("message").at("content").get<std::string>();
      } catch (const json::exception& e) {
        throw ResponseFormatError(std::string("vlm: unexpected chat response shape: ") + e.what(), r.body);
      }
    }
    if (r.content_type.rfind("application/json", 0) == 0) {
      const json j = json::parse(r.body, nullptr, false);
      if (j.is_object()) {
        for (const char* field : {"text", "response", "output"}) {
          if (j.contains(field) && j[field].is_string()) return j[field].get<std::string>();
        }
      }
    }
    return r.body;
  });
}

// ---------------------------------------------------------------------------

ScriptedVlmClient::ScriptedVlmClient(std::vector<std::string> responses, std::string model)
    : responses_(responses.begin(), responses.end()), model_(std::move(model)) {}

std::string ScriptedVlmClient::complete(const VlmRequest&) {
  std::lock_guard lock(mutex_);
  count_call();
  if (responses_.empty()) throw Error("scripted vlm: no responses left");
  std::string r = std::move(responses_.front());
  responses_.pop_front();
  return r;
}

std::size_t ScriptedVlmClient::remaining() const {
  std::lock_guard lock(mutex_);
  return responses_.size();
}

// ---------------------------------------------------------------------------

void MockProfile::set(const std::string& backend, const std::string& condition,
                      const std::string& attribute, Weights weights) {
  cells_[cell_key(backend, condition, attribute)] = std::move(weights);
}

const MockProfile::Weights* MockProfile::find(const std::string& backend, const std::string& condition,
                                              const std::string& attribute) const {
  for (const auto& [b, c] : {std::pair{backend, condition}, std::pair{std::string("*"), condition},
                             std::pair{backend, std::string("*")},
                             std::pair{std::string("*"), std::string("*")}}) {
    if (auto it = cells_.find(cell_key(b, c, attribute)); it != cells_.end()) return &it->second;
  }
  return nullptr;
}

void MockProfile::set_open_palette(std::vector<std::string> palette) {
  if (palette.empty()) throw ValidationError("open palette must not be empty");
  palette_ = std::move(palette);
}

MockProfile MockProfile::from_json(const json& j) {
  MockProfile p;
  try {
    if (j.contains("open_palette")) p.set_open_palette(j["open_palette"].get<std::vector<std::string>>());
    for (const auto& c : j.value("cells", json::array())) {
      p.set(c.value("backend", "*"), c.value("condition", "*"), c.at("attribute").get<std::string>(),
            c.at("weights").get<Weights>());
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed mock profile: ") + e.what());
  }
  return p;
}

MockProfile MockProfile::load(const std::filesystem::path& path) {
  try {
    return from_json(json::parse(read_file_text(path)));
  } catch (const MissingArtifactError&) {
    throw ConfigError("cannot read mock profile " + path.string());
  } catch (const json::parse_error& e) {
    throw ConfigError("mock profile " + path.string() + " is not valid JSON: " + e.what());
  }
}

json MockProfile::to_json() const {
  json cells = json::array();
  for (const auto& [key, w] : cells_) {
    const auto a = key.find('\x1f');
    const auto b = key.find('\x1f', a + 1);
    cells.push_back({{"backend", key.substr(0, a)},
                     {"condition", key.substr(a + 1, b - a - 1)},
                     {"attribute", key.substr(b + 1)},
                     {"weights", w}});
  }
  return {{"open_palette", palette_}, {"cells", cells}};
}

// ---------------------------------------------------------------------------

std::vector<AttributeSpec> mock_discovered_attributes(const std::string& backend_id,
                                                      const std::string& object_id) {
  const CatalogEntry* entry = &generic_entry();
  const auto& cat = catalog();
  auto b = cat.find(backend_id);
  if (b == cat.end()) b = cat.find("gpt-image");
  if (auto o = b->second.find(object_id); o != b->second.end()) entry = &o->second;

  std::vector<AttributeSpec> out;
  for (const auto& [name, values] : entry->product) {
    out.push_back({name, AttributeScope::kProduct, ValueMode::kClosed, values, AttributeOrigin::kDiscovered});
  }
  out.push_back({entry->background.first, AttributeScope::kBackground, ValueMode::kClosed,
                 entry->background.second, AttributeOrigin::kDiscovered});
  return out;
}

MockVlmClient::MockVlmClient(std::string model_id, std::int64_t seed, MockProfile profile)
    : model_(std::move(model_id)), seed_(seed), profile_(std::move(profile)) {}

std::string MockVlmClient::discovery_answer(const std::string& backend_id,
                                            const std::string& object_id) const {
  json product = json::array();
  json background = json::array();
  for (const auto& a : mock_discovered_attributes(backend_id, object_id)) {
    json item = {{"name", a.name}, {"values", a.allowed_values}};
    (a.scope == AttributeScope::kProduct ? product : background).push_back(item);
  }
  return json{{"product_attributes", product}, {"background_attributes", background}}.dump(2);
}

json MockVlmClient::sample_extraction(const ImageRecord& image, const AttributeTaxonomy& taxonomy) const {
  const std::string digest = taxonomy.digest();
  json product = json::object();
  json background = json::object();
  for (const auto& attr : taxonomy.attributes) {
    MockProfile::Weights weights;
    if (const auto* w = profile_.find(image.backend_id, image.condition_id, attr.name)) {
      weights = *w;
    } else {
      const auto& support = attr.mode == ValueMode::kClosed ? attr.allowed_values : profile_.open_palette();
      for (const auto& v : support) {
        const auto h = stable_hash64(image.backend_id + "|" + image.condition_id + "|" + attr.name + "|" + v);
        weights[v] = static_cast<double>(1 + h % 4);
      }
    }
    std::mt19937_64 rng(stable_hash64(image.content_hash + "|" + digest + "|" + std::to_string(seed_) +
                                      "|" + attr.name));
    (attr.scope == AttributeScope::kProduct ? product : background)[attr.name] = sample(weights, rng);
  }
  return {{"product_features", product}, {"background_features", background}};
}

std::string MockVlmClient::complete(const VlmRequest& request) {
  count_call();
  if (request.purpose == VlmPurpose::kDiscovery) {
    return discovery_answer(request.backend_id, request.object_id);
  }
  if (request.image == nullptr || request.taxonomy == nullptr) {
    throw Error("mock vlm: extraction request lacks image/taxonomy context");
  }
  return sample_extraction(*request.image, *request.taxonomy).dump(2);
}

std::unique_ptr<VlmClient> make_vlm_client(const VlmClientSpec& spec, const RateLimitConfig& limits,
                                           std::int64_t seed, bool force_mock) {
  if (force_mock || spec.kind == BackendKind::kMock) {
    MockProfile profile;
    if (!spec.mock_fixture.empty()) profile = MockProfile::load(spec.mock_fixture);
    const std::string model = spec.kind == BackendKind::kMock ? spec.model_id : "mock-vlm";
    return std::make_unique<MockVlmClient>(model, seed, std::move(profile));
  }
  http::RetryPolicy retry;
  retry.max_attempts = limits.max_attempts;
  retry.initial_backoff = std::chrono::milliseconds(limits.backoff_initial_ms);
  return std::make_unique<RemoteVlmClient>(spec, retry,
                                           std::make_shared<http::RateLimiter>(limits.requests_per_minute));
}

}  // namespace objbias
