#include <catch_amalgamated.hpp>

#include <set>

#include "objbias/config.hpp"
#include "objbias/errors.hpp"
#include "objbias/prompt_matrix.hpp"
#include "objbias/util.hpp"
#include "support.hpp"

using namespace objbias;

namespace {

std::size_t occurrences(const std::string& hay, const std::string& needle) {
  std::size_t n = 0;
  for (auto pos = hay.find(needle); pos != std::string::npos; pos = hay.find(needle, pos + needle.size())) ++n;
  return n;
}

AuditConfig tiny(int n_objects, int n_groups) {
  AuditConfig c = default_config();
  c.objects.resize(n_objects);
  c.dimensions.resize(n_groups > 0 ? 1 : 0);
  if (n_groups > 0) c.dimensions[0].groups.resize(n_groups);
  return c;
}

}  // namespace

TEST_CASE("default config yields 45 conditions, 9 per object") {
  const auto config = default_config();
  const auto m = build_matrix(config);
  REQUIRE(m.size() == 45);
  std::map<std::string, int> per_object;
  for (const auto& c : m) ++per_object[c.object_id];
  for (const auto& o : config.objects) CHECK(per_object[o.id] == 9);

  // Base first, then dimensions in config order.
  CHECK(m[0].id == "car/base");
  CHECK(m[1].id == "car/age:young_adults");
  CHECK(m[4].id == "car/gender:men");
  CHECK(m[6].id == "car/ethnicity:white");
  CHECK(m[9].id == "laptop/base");
}

TEST_CASE("matrix cardinality equals objects x (1 + sum of groups)") {
  CHECK(build_matrix(tiny(1, 0)).size() == 1);
  const auto two_by_two = build_matrix(tiny(2, 2));
  CHECK(two_by_two.size() == 6);
  std::size_t expected = 2 * (1 + 2);
  CHECK(two_by_two.size() == expected);
}

TEST_CASE("rendered prompts reproduce the published examples") {
  const auto config = default_config();
  const auto& car = *config.find_object("car");
  const auto& cup = *config.find_object("cup");
  CHECK(render_prompt(car) == "car, one product only, no people");
  const auto& gender = *config.find_dimension("gender");
  CHECK(render_prompt(car, gender.groups[1], gender.prompt_template) == "car for women, one product only, no people");
  const auto& eth = *config.find_dimension("ethnicity");
  CHECK(render_prompt(cup, eth.groups[2], eth.prompt_template) == "cup for Asian people, one product only, no people");
}

TEST_CASE("every prompt holds the object phrase and the suffix exactly once") {
  const auto config = default_config();
  for (const auto& c : build_matrix(config)) {
    const auto& phrase = config.find_object(c.object_id)->phrase;
    CHECK(occurrences(c.prompt_text, phrase) == 1);
    CHECK(occurrences(c.prompt_text, std::string(kConstraintSuffix)) == 1);
    CHECK(c.prompt_text.ends_with(kConstraintSuffix));
  }
}

TEST_CASE("render_prompt is pure") {
  const auto config = default_config();
  const auto& dim = config.dimensions[0];
  CHECK(render_prompt(config.objects[4], dim.groups[2], dim.prompt_template) ==
        render_prompt(config.objects[4], dim.groups[2], dim.prompt_template));
}

TEST_CASE("template errors") {
  const ObjectCategory car{"car", "Car", "car"};
  const DemographicGroup women{"women", "women"};
  CHECK_THROWS_AS(render_prompt(car, women, "{object} for everyone, one product only, no people"), ValidationError);
  CHECK_THROWS_AS(render_prompt(car, women, "{object} for {group} {size}, one product only, no people"),
                  ValidationError);
}

TEST_CASE("matrix precondition failures") {
  auto no_objects = default_config();
  no_objects.objects.clear();
  CHECK_THROWS_AS(build_matrix(no_objects), ConfigError);

  auto one_group = default_config();
  one_group.dimensions[1].groups.resize(1);
  CHECK_THROWS_AS(build_matrix(one_group), ConfigError);

  auto duplicate = default_config();
  duplicate.dimensions[0].groups[1].id = duplicate.dimensions[0].groups[0].id;
  CHECK_THROWS_AS(build_matrix(duplicate), ConfigError);
}

TEST_CASE("condition ids and slugs") {
  CHECK(condition_id("car", std::nullopt) == "car/base");
  CHECK(condition_id("car", GroupRef{"gender", "women"}) == "car/gender:women");
  const auto m = build_matrix(default_config());
  CHECK(m[0].slug() == "base");
  CHECK(m[5].slug() == "gender-women");
}

TEST_CASE("config round-trips through JSON and validates") {
  const auto config = default_config();
  validate_config(config);
  const auto back = config_from_json(config_to_json(config));
  CHECK(config_to_json(back) == config_to_json(config));
  CHECK(config_digest(back) == config_digest(config));
}

TEST_CASE("config digest ignores output location and rate limits only") {
  auto a = default_config();
  auto b = a;
  b.output_root = "elsewhere";
  b.rate_limits.requests_per_minute = 600;
  CHECK(config_digest(a) == config_digest(b));
  b.n_per_condition = 10;
  CHECK(config_digest(a) != config_digest(b));
}

TEST_CASE("config file loading and validation errors") {
  testsupport::TempDir dir;
  write_file_atomic(dir / "ok.json", R"({"n_per_condition": 5})");
  CHECK(load_config(dir / "ok.json").n_per_condition == 5);

  write_file_atomic(dir / "bad.json", "{not json");
  CHECK_THROWS_AS(load_config(dir / "bad.json"), ConfigError);
  CHECK_THROWS_AS(load_config(dir / "absent.json"), ConfigError);

  auto c = default_config();
  c.vlm.temperature = 0.5;
  CHECK_THROWS_AS(validate_config(c), ConfigError);
  c = default_config();
  c.backends[0].auth_env.clear();
  CHECK_THROWS_AS(validate_config(c), ConfigError);
  c = default_config();
  c.alpha = 1.5;
  CHECK_THROWS_AS(validate_config(c), ConfigError);
}
