#include <catch_amalgamated.hpp>

#include <set>

#include "objbias/errors.hpp"
#include "objbias/util.hpp"
#include "objbias/validation.hpp"
#include "support.hpp"

using namespace objbias;
using Catch::Approx;

namespace {

/// Manifest with `n` images per (backend, condition) over the default matrix ids, no files.
Manifest synthetic_manifest(const std::vector<std::string>& backends, const std::vector<std::string>& conditions, int n) {
  Manifest m;
  for (const auto& b : backends) {
    for (const auto& c : conditions) {
      for (int i = 0; i < n; ++i) {
        ImageRecord r;
        r.backend_id = b;
        r.condition_id = c;
        r.replicate_index = i;
        r.image_id = b + "_" + c + "_" + std::to_string(i);
        m.records.push_back(r);
      }
    }
  }
  return m;
}

Annotation note(const std::string& image, const std::string& attr, Verdict v, const std::string& who = "ann") {
  return {image, attr, "v", v, who, "2025-01-01T00:00:00Z"};
}

std::vector<AttributeRecord> records_for(const Manifest& m) {
  std::vector<AttributeRecord> out;
  for (const auto& r : m.records) out.push_back(testsupport::record(r.image_id, {{"color", "v"}, {"shape", "v"}}));
  return out;
}

}  // namespace

TEST_CASE("stratified sample: 135 cells x 2 = 270") {
  std::vector<std::string> conditions;
  for (const char* o : {"car", "laptop", "backpack", "cup", "teddy_bear"}) {
    for (const char* g : {"base", "age:young_adults", "age:middle_aged", "age:elderly", "gender:men", "gender:women",
                          "ethnicity:white", "ethnicity:black", "ethnicity:asian"}) {
      conditions.push_back(std::string(o) + "/" + g);
    }
  }
  const auto m = synthetic_manifest({"gpt-image", "imagen", "sdxl"}, conditions, 20);
  const auto s = stratified_sample(m, 2, 42);
  CHECK(s.size() == 270);
  std::map<std::pair<std::string, std::string>, int> per_cell;
  std::set<std::string> ids;
  for (const auto& r : s) {
    ++per_cell[{r.backend_id, r.condition_id}];
    ids.insert(r.image_id);
  }
  CHECK(per_cell.size() == 135);
  for (const auto& [cell, n] : per_cell) CHECK(n == 2);
  CHECK(ids.size() == 270);
  CHECK(stratified_sample(m, 2, 42) == s);
  CHECK(stratified_sample(m, 2, 43) != s);
}

TEST_CASE("stratified sample edge cases") {
  const auto m = synthetic_manifest({"b"}, {"car/base", "car/gender:men"}, 3);
  CHECK(stratified_sample(m, 0, 1).empty());
  CHECK(stratified_sample(m, 3, 1).size() == 6);
  CHECK_THROWS_AS(stratified_sample(m, 4, 1), ValidationError);
}

TEST_CASE("agreement: all appropriate and the 2061/2161 fixture") {
  const auto m = synthetic_manifest({"b"}, {"car/base"}, 2);
  const auto recs = records_for(m);
  const auto all = compute_agreement({note(m.records[0].image_id, "color", Verdict::kAppropriate)}, recs);
  CHECK(all.agreement_rate() == 1.0);

  const auto big = synthetic_manifest({"b"}, {"car/base"}, 300);
  std::vector<AttributeRecord> big_recs;
  std::vector<Annotation> notes;
  for (const auto& r : big.records) {
    std::map<std::string, std::string> values;
    for (int a = 0; a < 8; ++a) values["a" + std::to_string(a)] = "v";
    big_recs.push_back(testsupport::record(r.image_id, values));
    for (int a = 0; a < 8 && notes.size() < 2161; ++a) {
      const auto i = notes.size();
      const auto v = i < 2061 ? Verdict::kAppropriate : i < 2104 ? Verdict::kIncorrect : Verdict::kAmbiguous;
      notes.push_back(note(r.image_id, "a" + std::to_string(a), v));
    }
  }
  const auto stats = compute_agreement(notes, big_recs);
  CHECK(stats.total == 2161);
  CHECK(stats.appropriate + stats.incorrect + stats.ambiguous == stats.total);
  CHECK(stats.incorrect == 43);
  CHECK(stats.ambiguous == 57);
  CHECK(stats.agreement_rate() == Approx(0.9537).margin(1e-4));
  CHECK(stats.agreement_rate() == Approx(2061.0 / 2161.0).margin(1e-15));
}

TEST_CASE("agreement errors") {
  const auto m = synthetic_manifest({"b"}, {"car/base"}, 1);
  CHECK_THROWS_AS(compute_agreement({}, records_for(m)), ValidationError);
  CHECK_THROWS_AS(compute_agreement({note("ghost", "color", Verdict::kAppropriate)}, records_for(m)), ValidationError);
}

TEST_CASE("later verdicts by the same annotator supersede earlier ones") {
  const auto m = synthetic_manifest({"b"}, {"car/base"}, 2);
  const auto id0 = m.records[0].image_id, id1 = m.records[1].image_id;
  const std::vector<Annotation> log{note(id0, "color", Verdict::kIncorrect), note(id1, "color", Verdict::kAppropriate),
                                    note(id0, "color", Verdict::kAppropriate), note(id0, "color", Verdict::kAmbiguous, "other")};
  const auto eff = effective_annotations(log);
  REQUIRE(eff.size() == 3);
  CHECK(eff[0].image_id == id0);
  CHECK(eff[0].verdict == Verdict::kAppropriate);
  CHECK(eff[2].annotator == "other");
  const auto stats = compute_agreement(log, records_for(m));
  CHECK(stats.total == 3);
  CHECK(stats.appropriate == 2);
  // Idempotent recomputation.
  CHECK(to_json(compute_agreement(log, records_for(m))) == to_json(stats));
}

TEST_CASE("per-group and per-attribute breakdowns") {
  const auto m = synthetic_manifest({"b"}, {"car/base", "car/gender:women"}, 2);
  const auto recs = records_for(m);
  std::vector<Annotation> log;
  for (const auto& r : m.records) {
    const bool women = r.condition_id == "car/gender:women";
    log.push_back(note(r.image_id, "color", women ? Verdict::kIncorrect : Verdict::kAppropriate));
    log.push_back(note(r.image_id, "shape", Verdict::kAppropriate));
  }
  const auto stats = compute_agreement(log, recs, &m);
  CHECK(stats.per_group.at("base").agreement_rate() == 1.0);
  CHECK(stats.per_group.at("gender:women").incorrect_rate() == 0.5);
  CHECK(stats.per_attribute.at("color").incorrect == 2);
  CHECK(stats.per_attribute.at("shape").appropriate == 4);

  const auto back = agreement_from_json(to_json(stats));
  CHECK(to_json(back) == to_json(stats));
  const auto csv = agreement_csv(stats);
  CHECK(csv.find("gender:women") != std::string::npos);
  CHECK(csv.find("0.5000") != std::string::npos);
}

TEST_CASE("annotation JSON schema") {
  const auto a = note("img", "color", Verdict::kAmbiguous);
  CHECK(annotation_from_json(to_json(a)) == a);
  auto bad = to_json(a);
  bad["verdict"] = "inappropriate";
  CHECK_THROWS_AS(annotation_from_json(bad), ValidationError);
  auto missing = to_json(a);
  missing.erase("attribute");
  CHECK_THROWS_AS(annotation_from_json(missing), ValidationError);
  CHECK(parse_verdict("appropriate") == Verdict::kAppropriate);
  CHECK_FALSE(parse_verdict("maybe"));
  CHECK(group_of_condition("car/gender:women") == "gender:women");
  CHECK(group_of_condition("car/base") == "base");
}

TEST_CASE("annotation log round-trips through the file") {
  testsupport::TempDir dir;
  {
    JsonlAppender out(dir / kAnnotationsFile);
    out.append(to_json(note("a", "color", Verdict::kAppropriate)));
    out.append(to_json(note("b", "color", Verdict::kIncorrect)));
  }
  const auto log = load_annotations(dir / kAnnotationsFile);
  REQUIRE(log.size() == 2);
  CHECK(log[1].verdict == Verdict::kIncorrect);
}
