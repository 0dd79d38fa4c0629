#include "objbias/validation.hpp"

#include <algorithm>
#include <random>
#include <set>
#include <sstream>
#include <tuple>

#include "objbias/errors.hpp"
#include "objbias/util.hpp"

namespace objbias {

using nlohmann::json;

std::string to_string(Verdict v) {
  switch (v) {
    case Verdict::kAppropriate: return "appropriate";
    case Verdict::kIncorrect: return "incorrect";
    case Verdict::kAmbiguous: return "ambiguous";
  }
  return "ambiguous";
}

std::optional<Verdict> parse_verdict(std::string_view s) {
  if (s == "appropriate") return Verdict::kAppropriate;
  if (s == "incorrect") return Verdict::kIncorrect;
  if (s == "ambiguous") return Verdict::kAmbiguous;
  return std::nullopt;
}

json to_json(const Annotation& a) {
  return {{"image_id", a.image_id},   {"attribute", a.attribute}, {"auto_value", a.auto_value},
          {"verdict", to_string(a.verdict)}, {"annotator", a.annotator}, {"created_at", a.created_at}};
}

Annotation annotation_from_json(const json& j) {
  if (!j.is_object()) throw ValidationError("annotation must be a JSON object");
  auto text = [&](const char* key, bool required) -> std::string {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) {
      if (required) throw ValidationError(std::string("annotation is missing '") + key + "'");
      return {};
    }
    if (!it->is_string()) throw ValidationError(std::string("annotation field '") + key + "' must be a string");
    auto s = it->get<std::string>();
    if (required && s.empty()) throw ValidationError(std::string("annotation field '") + key + "' is empty");
    return s;
  };
  Annotation a;
  a.image_id = text("image_id", true);
  a.attribute = text("attribute", true);
  a.auto_value = text("auto_value", false);
  const auto verdict = text("verdict", true);
  const auto v = parse_verdict(verdict);
  if (!v) throw ValidationError("verdict must be appropriate, incorrect or ambiguous (got '" + verdict + "')");
  a.verdict = *v;
  a.annotator = text("annotator", true);
  a.created_at = text("created_at", false);
  return a;
}

std::vector<Annotation> load_annotations(const std::filesystem::path& path) {
  std::vector<Annotation> out;
  for (const auto& line : read_jsonl(path)) out.push_back(annotation_from_json(line));
  return out;
}

std::vector<Annotation> effective_annotations(const std::vector<Annotation>& log) {
  using Key = std::tuple<std::string, std::string, std::string>;
  std::map<Key, std::size_t> slot;
  std::vector<Annotation> out;
  for (const auto& a : log) {
    const Key k{a.image_id, a.attribute, a.annotator};
    if (auto it = slot.find(k); it != slot.end()) {
      out[it->second] = a;
    } else {
      slot.emplace(k, out.size());
      out.push_back(a);
    }
  }
  return out;
}

std::vector<ImageRecord> stratified_sample(const Manifest& manifest, int per_condition, std::int64_t seed) {
  if (per_condition < 0) throw ValidationError("per_condition must be >= 0");
  std::vector<std::pair<std::string, std::string>> order;
  std::map<std::pair<std::string, std::string>, std::vector<const ImageRecord*>> cells;
  for (const auto& r : manifest.records) {
    auto key = std::make_pair(r.backend_id, r.condition_id);
    auto [it, fresh] = cells.try_emplace(key);
    if (fresh) order.push_back(key);
    it->second.push_back(&r);
  }
  std::vector<ImageRecord> out;
  if (per_condition == 0) return out;
  std::mt19937_64 rng(static_cast<std::uint64_t>(seed));
  for (const auto& key : order) {
    auto& cell = cells[key];
    if (cell.size() < static_cast<std::size_t>(per_condition)) {
      throw ValidationError("cell " + key.first + " " + key.second + " has " + std::to_string(cell.size()) +
                            " images, fewer than " + std::to_string(per_condition));
    }
    std::sort(cell.begin(), cell.end(), [](const ImageRecord* a, const ImageRecord* b) {
      return std::tie(a->replicate_index, a->image_id) < std::tie(b->replicate_index, b->image_id);
    });
    std::vector<const ImageRecord*> picked;
    std::sample(cell.begin(), cell.end(), std::back_inserter(picked), per_condition, rng);
    for (const auto* r : picked) out.push_back(*r);
  }
  return out;
}

namespace {

double ratio(std::size_t a, std::size_t b) { return b == 0 ? 0.0 : static_cast<double>(a) / static_cast<double>(b); }

void tally(VerdictCounts& c, Verdict v) {
  ++c.total;
  switch (v) {
    case Verdict::kAppropriate: ++c.appropriate; break;
    case Verdict::kIncorrect: ++c.incorrect; break;
    case Verdict::kAmbiguous: ++c.ambiguous; break;
  }
}

json counts_json(const VerdictCounts& c) {
  return {{"total", c.total},
          {"appropriate", c.appropriate},
          {"incorrect", c.incorrect},
          {"ambiguous", c.ambiguous},
          {"agreement_rate", c.agreement_rate()},
          {"incorrect_rate", c.incorrect_rate()},
          {"ambiguous_rate", c.ambiguous_rate()}};
}

VerdictCounts counts_from_json(const json& j) {
  VerdictCounts c;
  c.total = j.at("total").get<std::size_t>();
  c.appropriate = j.at("appropriate").get<std::size_t>();
  c.incorrect = j.at("incorrect").get<std::size_t>();
  c.ambiguous = j.at("ambiguous").get<std::size_t>();
  return c;
}

}  // namespace

double VerdictCounts::agreement_rate() const { return ratio(appropriate, total); }
double VerdictCounts::incorrect_rate() const { return ratio(incorrect, total); }
double VerdictCounts::ambiguous_rate() const { return ratio(ambiguous, total); }

std::string group_of_condition(std::string_view condition_id) {
  const auto slash = condition_id.find('/');
  return std::string(slash == std::string_view::npos ? condition_id : condition_id.substr(slash + 1));
}

AgreementStats compute_agreement(const std::vector<Annotation>& annotations,
                                 const std::vector<AttributeRecord>& records, const Manifest* manifest) {
  if (annotations.empty()) throw ValidationError("no annotations to evaluate");
  std::set<std::string> known;
  for (const auto& r : records) known.insert(r.image_id);
  AgreementStats stats;
  for (const auto& a : effective_annotations(annotations)) {
    if (!known.contains(a.image_id)) {
      throw ValidationError("annotation references unknown image_id '" + a.image_id + "'");
    }
    tally(stats, a.verdict);
    tally(stats.per_attribute[a.attribute], a.verdict);
    if (manifest) {
      const auto* img = manifest->find(a.image_id);
      tally(stats.per_group[img ? group_of_condition(img->condition_id) : std::string("unknown")], a.verdict);
    }
  }
  return stats;
}

json to_json(const AgreementStats& stats) {
  json j = counts_json(stats);
  json groups = json::object();
  for (const auto& [g, c] : stats.per_group) groups[g] = counts_json(c);
  json attrs = json::object();
  for (const auto& [a, c] : stats.per_attribute) attrs[a] = counts_json(c);
  j["per_group"] = groups;
  j["per_attribute"] = attrs;
  return j;
}

AgreementStats agreement_from_json(const json& j) {
  AgreementStats s;
  static_cast<VerdictCounts&>(s) = counts_from_json(j);
  const json groups = j.value("per_group", json::object());
  const json attributes = j.value("per_attribute", json::object());
  for (const auto& [g, c] : groups.items()) s.per_group[g] = counts_from_json(c);
  for (const auto& [a, c] : attributes.items()) s.per_attribute[a] = counts_from_json(c);
  return s;
}

std::string agreement_csv(const AgreementStats& stats) {
  std::ostringstream out;
  out << "scope,key,total,appropriate,incorrect,ambiguous,agreement_rate\n";
  auto row = [&](const std::string& scope, const std::string& key, const VerdictCounts& c) {
    char rate[32];
    std::snprintf(rate, sizeof rate, "%.4f", c.agreement_rate());
    out << scope << ',' << key << ',' << c.total << ',' << c.appropriate << ',' << c.incorrect << ','
        << c.ambiguous << ',' << rate << '\n';
  };
  row("overall", "all", stats);
  for (const auto& [g, c] : stats.per_group) row("group", g, c);
  for (const auto& [a, c] : stats.per_attribute) row("attribute", a, c);
  return out.str();
}

}  // namespace objbias
