#include <catch_amalgamated.hpp>

#include <sstream>

#include "objbias/errors.hpp"
#include "objbias/report.hpp"
#include "support.hpp"

using namespace objbias;
using Catch::Approx;

namespace {

BdsResult cell(const std::string& b, const std::string& o, const std::string& dim, const std::string& g, double score,
               double p) {
  BdsResult r;
  r.backend_id = b;
  r.object_id = o;
  r.dimension_id = dim;
  r.group_id = g;
  r.condition_id = o + "/" + dim + ":" + g;
  r.score = score;
  r.p_value = p;
  r.significant = p < 0.01;
  return r;
}

CdsResult cds_cell(const std::string& b, const std::string& o, const std::string& dim,
                   std::map<std::string, double> per_attribute) {
  CdsResult r;
  r.backend_id = b;
  r.object_id = o;
  r.dimension_id = dim;
  r.per_attribute = std::move(per_attribute);
  return r;
}

VacResult vac_cell(const std::string& b, const std::string& o, const std::string& c, double score) {
  VacResult r;
  r.backend_id = b;
  r.object_id = o;
  r.condition_id = c;
  r.score = score;
  return r;
}

BiasReport fixture_report() {
  BiasReport r;
  r.config_digest = "abc";
  r.backends = {"gpt-image", "sdxl"};
  r.objects = {{"car", "Car", "car"}, {"cup", "Cup", "cup"}};
  r.dimensions = {{"gender", {"men", "women"}}};
  r.bds = {cell("gpt-image", "car", "gender", "men", 0.2, 0.5), cell("gpt-image", "car", "gender", "women", 0.534, 0.001),
           cell("gpt-image", "cup", "gender", "men", 0.1, 0.2), cell("sdxl", "car", "gender", "men", 0.3, 0.009),
           cell("sdxl", "car", "gender", "women", 0.4, 0.0099)};
  r.cds = {cds_cell("gpt-image", "car", "gender", {{"body_type", 0.833}, {"product_color", 0.2}}),
           cds_cell("gpt-image", "cup", "gender", {{"product_color", 0.4}, {"handle_design", 0.1}})};
  r.vac = {vac_cell("gpt-image", "car", "car/base", 0.5), vac_cell("gpt-image", "car", "car/gender:men", 0.7),
           vac_cell("gpt-image", "cup", "cup/base", 0.2), vac_cell("sdxl", "car", "car/base", 0.9)};
  r.segregation = {{"imagen", "car", "car/gender:women", "product_color", "red", 20}};
  r.shifts = {{"gpt-image", "car", "car/gender:women", "body_type", "sedan", "hatchback", 1.0, 1.0, false}};
  return r;
}

std::vector<std::string> split_lines(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

}  // namespace

TEST_CASE("format3 prints three decimals, ties to even") {
  CHECK(format3(0.5341) == "0.534");
  CHECK(format3(0.125) == "0.125");
  CHECK(format3(0.0625) == "0.062");
  CHECK(format3(0.0) == "0.000");
  CHECK(format3(-0.0001) == "0.000");
  CHECK(format3(1.0) == "1.000");
  CHECK(round3(0.8334) == 0.833);
}

TEST_CASE("BDS matrix layout, significance and averages") {
  const auto r = fixture_report();
  const auto m = bds_matrix(r.bds, 0.01);
  REQUIRE(m.columns.size() == 2);
  REQUIRE(m.rows.size() == 3);
  CHECK(m.rows[0].backend_id == "gpt-image");
  CHECK(m.rows[2].backend_id == "sdxl");
  CHECK_FALSE(m.rows[1].cells[1].has_value());  // gpt-image/cup/women missing
  CHECK(m.rows[0].cells[1]->significant);
  CHECK_FALSE(m.rows[0].cells[0]->significant);
  CHECK(m.rows[2].cells[0]->significant);
  // Hand-computed column means over present cells.
  CHECK(*m.average[0] == Approx((0.2 + 0.1 + 0.3) / 3).margin(1e-12));
  CHECK(*m.average[1] == Approx((0.534 + 0.4) / 2).margin(1e-12));
  // Significance iff p < alpha.
  CHECK_FALSE(bds_matrix(r.bds, 0.001).rows[0].cells[1]->significant);
}

TEST_CASE("identical-distribution grid has zero cells and no flags") {
  std::vector<BdsResult> grid;
  for (const char* o : {"car", "cup"}) {
    for (const char* g : {"men", "women"}) grid.push_back(cell("b", o, "gender", g, 0.0, 1.0));
  }
  const auto m = bds_matrix(grid);
  for (const auto& row : m.rows) {
    for (const auto& c : row.cells) {
      CHECK(c->score == 0.0);
      CHECK_FALSE(c->significant);
    }
  }
  for (const auto& a : m.average) CHECK(*a == 0.0);
}

TEST_CASE("CDS ranking order and highlighting") {
  std::vector<CdsResult> results{
      cds_cell("b", "car", "age", {{"body_type", 0.3}, {"product_color", 0.1}}),
      cds_cell("b", "car", "gender", {{"body_type", 0.833}, {"product_color", 0.2}}),
      cds_cell("b", "cup", "gender", {{"product_color", 0.4}, {"handle_design", 0.05}}),
  };
  const auto r = cds_ranking(results, 10);
  REQUIRE(r.dimensions == std::vector<std::string>{"age", "gender"});
  REQUIRE(r.rows.size() == 3);
  // Sort oracle: totals body_type 1.133, product_color 0.1 + 0.3, handle_design 0.05.
  CHECK(r.rows[0].attribute == "body_type");
  CHECK(r.rows[0].total == Approx(1.133).margin(1e-12));
  CHECK(r.rows[0].highlight == 1);
  CHECK(r.rows[1].attribute == "product_color");
  CHECK(*r.rows[1].per_dimension[1] == Approx(0.3).margin(1e-12));
  CHECK(r.rows[1].objects == std::vector<std::string>{"car", "cup"});
  CHECK(r.rows[2].attribute == "handle_design");
  CHECK_FALSE(r.rows[2].per_dimension[0].has_value());
  CHECK(cds_ranking(results, 2).rows.size() == 2);

  const auto single = cds_ranking({cds_cell("b", "car", "gender", {{"only", 0.5}})});
  REQUIRE(single.rows.size() == 1);
  CHECK(single.rows[0].attribute == "only");
}

TEST_CASE("VAC table averages over conditions then objects") {
  const auto t = vac_table(fixture_report().vac);
  REQUIRE(t.objects == std::vector<std::string>{"car", "cup"});
  REQUIRE(t.rows.size() == 2);
  CHECK(*t.rows[0].cells[0] == Approx(0.6).margin(1e-12));
  CHECK(*t.rows[0].cells[1] == Approx(0.2).margin(1e-12));
  CHECK(*t.rows[0].average == Approx(0.4).margin(1e-12));
  CHECK_FALSE(t.rows[1].cells[1].has_value());
  CHECK(*t.rows[1].average == Approx(0.9).margin(1e-12));
}

TEST_CASE("CSV and JSON views agree to printed precision") {
  const auto r = fixture_report();
  const ReportSpec spec;
  const auto m = bds_matrix(r.bds, spec.alpha);
  const auto lines = split_lines(bds_matrix_csv(m));
  REQUIRE(lines.size() == 1 + 3 + 1);
  CHECK(lines[0] == "backend,object,gender:men,gender:men_p,gender:women,gender:women_p");
  CHECK(lines[1] == "gpt-image,car,0.200,0.500,0.534,0.001");
  CHECK(lines[2] == "gpt-image,cup,0.100,0.200,,");
  const auto j = render_json(r, spec);
  CHECK(j["format"] == "objbias-report/1");
  CHECK(j["bds_matrix"]["rows"][0]["cells"][1]["score"].get<double>() == 0.534);
  CHECK(j["bds_matrix"]["rows"][1]["cells"][1].is_null());
  CHECK(format3(j["bds_matrix"]["average"][0].get<double>()) == format3(*m.average[0]));
  CHECK(j["segregation"].size() == 1);
  CHECK(j["shifts"][0]["demo_value"] == "hatchback");
  CHECK(shifts_csv(r.shifts).find("sedan,hatchback,1.000,1.000") != std::string::npos);
  CHECK(segregation_csv(r.segregation).find("product_color,red,20") != std::string::npos);
}

TEST_CASE("HTML output") {
  const auto r = fixture_report();
  ReportSpec spec;
  const auto html = render_html(r, spec);
  CHECK(html == render_html(r, spec));
  for (const char* id : {"bds-matrix", "cds-ranking", "vac-table", "segregation", "shifts", "agreement"}) {
    CHECK(html.find(std::string("id=\"") + id + "\"") != std::string::npos);
  }
  CHECK(html.find("<script") == std::string::npos);
  CHECK(html.find("<td class=\"sig\" title=\"p=0.001\">0.534</td>") != std::string::npos);
  CHECK(html.find("<td title=\"p=0.500\">0.200</td>") != std::string::npos);

  const auto empty = render_html(BiasReport{}, spec);
  CHECK(empty.rfind("<!DOCTYPE html>", 0) == 0);
  CHECK(empty.find("id=\"bds-matrix\"") != std::string::npos);
  CHECK(empty.find("</html>") != std::string::npos);

  spec.shifts = false;
  CHECK(render_html(r, spec).find("id=\"shifts\"") == std::string::npos);
  spec.alpha = 1.0;
  CHECK_THROWS_AS(render_html(r, spec), ValidationError);
}

TEST_CASE("write_report produces all files") {
  testsupport::TempDir dir;
  auto r = fixture_report();
  auto files = write_report(dir.path(), r, ReportSpec{});
  CHECK(files.size() == 7);
  for (const char* f : {"report.html", "report.json", "bds_matrix.csv", "cds_ranking.csv", "vac_table.csv",
                        "segregation.csv", "shifts.csv"}) {
    CHECK(std::filesystem::exists(dir / f));
  }
  CHECK_FALSE(std::filesystem::exists(dir / "agreement.csv"));
  r.agreement = AgreementStats{};
  r.agreement->total = 2;
  r.agreement->appropriate = 2;
  files = write_report(dir.path(), r, ReportSpec{});
  CHECK(std::filesystem::exists(dir / "agreement.csv"));
}

TEST_CASE("bias report JSON round-trip") {
  const auto r = fixture_report();
  const auto back = bias_report_from_json(to_json(r));
  CHECK(to_json(back) == to_json(r));
  CHECK(back.bds.size() == r.bds.size());
  CHECK(back.shifts[0].demo_value == "hatchback");
}
