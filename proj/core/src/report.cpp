#include "objbias/report.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <map>
#include <set>
#include <sstream>

#include "objbias/errors.hpp"
#include "objbias/util.hpp"

namespace objbias {

using nlohmann::json;

void ReportSpec::validate() const {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ValidationError("report alpha must lie in (0, 1)");
}

std::string format3(double x) {
  // printf rounds the exact binary value; exact ties go to even.
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3f", x);
  std::string s(buf);
  if (s == "-0.000") s = "0.000";
  return s;
}

double round3(double x) { return std::strtod(format3(x).c_str(), nullptr); }

BdsMatrix bds_matrix(const std::vector<BdsResult>& results, double alpha) {
  BdsMatrix m;
  std::map<std::pair<std::string, std::string>, std::size_t> col_index, row_index;
  for (const auto& r : results) {
    auto ck = std::make_pair(r.dimension_id, r.group_id);
    if (col_index.emplace(ck, m.columns.size()).second) m.columns.push_back({r.dimension_id, r.group_id});
    auto rk = std::make_pair(r.backend_id, r.object_id);
    if (row_index.emplace(rk, m.rows.size()).second) m.rows.push_back({r.backend_id, r.object_id, {}});
  }
  for (auto& row : m.rows) row.cells.assign(m.columns.size(), std::nullopt);
  for (const auto& r : results) {
    auto& row = m.rows[row_index[{r.backend_id, r.object_id}]];
    row.cells[col_index[{r.dimension_id, r.group_id}]] = BdsCell{r.score, r.p_value, r.p_value < alpha};
  }
  m.average.assign(m.columns.size(), std::nullopt);
  for (std::size_t c = 0; c < m.columns.size(); ++c) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& row : m.rows) {
      if (row.cells[c]) {
        sum += row.cells[c]->score;
        ++n;
      }
    }
    if (n > 0) m.average[c] = sum / static_cast<double>(n);
  }
  return m;
}

CdsRanking cds_ranking(const std::vector<CdsResult>& results, std::size_t top_k) {
  CdsRanking ranking;
  std::map<std::string, std::size_t> dim_index;
  for (const auto& r : results) {
    if (dim_index.emplace(r.dimension_id, ranking.dimensions.size()).second) {
      ranking.dimensions.push_back(r.dimension_id);
    }
  }
  struct Acc {
    std::vector<double> sum;
    std::vector<std::size_t> n;
    std::vector<std::string> objects;
  };
  std::map<std::string, Acc> acc;
  for (const auto& r : results) {
    for (const auto& [attr, value] : r.per_attribute) {
      auto& a = acc[attr];
      if (a.sum.empty()) {
        a.sum.assign(ranking.dimensions.size(), 0.0);
        a.n.assign(ranking.dimensions.size(), 0);
      }
      const auto d = dim_index[r.dimension_id];
      a.sum[d] += value;
      ++a.n[d];
      if (std::find(a.objects.begin(), a.objects.end(), r.object_id) == a.objects.end()) {
        a.objects.push_back(r.object_id);
      }
    }
  }
  for (auto& [attr, a] : acc) {
    CdsRankingRow row;
    row.attribute = attr;
    row.objects = a.objects;
    double best = -1.0;
    for (std::size_t d = 0; d < a.sum.size(); ++d) {
      if (a.n[d] == 0) {
        row.per_dimension.push_back(std::nullopt);
        continue;
      }
      const double mean = a.sum[d] / static_cast<double>(a.n[d]);
      row.per_dimension.push_back(mean);
      row.total += mean;
      if (mean > best) {
        best = mean;
        row.highlight = d;
      }
    }
    ranking.rows.push_back(std::move(row));
  }
  std::sort(ranking.rows.begin(), ranking.rows.end(), [](const CdsRankingRow& a, const CdsRankingRow& b) {
    if (a.total != b.total) return a.total > b.total;
    return a.attribute < b.attribute;
  });
  if (ranking.rows.size() > top_k) ranking.rows.resize(top_k);
  return ranking;
}

VacTable vac_table(const std::vector<VacResult>& results) {
  VacTable t;
  std::map<std::string, std::size_t> obj_index, backend_index;
  for (const auto& r : results) {
    if (obj_index.emplace(r.object_id, t.objects.size()).second) t.objects.push_back(r.object_id);
    if (backend_index.emplace(r.backend_id, t.rows.size()).second) t.rows.push_back({r.backend_id, {}, {}});
  }
  std::vector<std::vector<double>> sums(t.rows.size(), std::vector<double>(t.objects.size(), 0.0));
  std::vector<std::vector<std::size_t>> counts(t.rows.size(), std::vector<std::size_t>(t.objects.size(), 0));
  for (const auto& r : results) {
    const auto b = backend_index[r.backend_id];
    const auto o = obj_index[r.object_id];
    sums[b][o] += r.score;
    ++counts[b][o];
  }
  for (std::size_t b = 0; b < t.rows.size(); ++b) {
    double total = 0.0;
    std::size_t n = 0;
    for (std::size_t o = 0; o < t.objects.size(); ++o) {
      if (counts[b][o] == 0) {
        t.rows[b].cells.push_back(std::nullopt);
        continue;
      }
      const double mean = sums[b][o] / static_cast<double>(counts[b][o]);
      t.rows[b].cells.push_back(mean);
      total += mean;
      ++n;
    }
    if (n > 0) t.rows[b].average = total / static_cast<double>(n);
  }
  return t;
}

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string opt3(const std::optional<double>& v) { return v ? format3(*v) : std::string(); }

json opt_json(const std::optional<double>& v) { return v ? json(round3(*v)) : json(nullptr); }

std::string html_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&#39;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string column_label(const BdsMatrix::Column& c) { return c.dimension_id + ":" + c.group_id; }

const char* kStyle =
    "body{font-family:Helvetica,Arial,sans-serif;margin:2em;color:#222}"
    "table{border-collapse:collapse;margin:1em 0}"
    "th,td{border:1px solid #bbb;padding:4px 8px;text-align:right}"
    "th{background:#f0f0f0}td.label{text-align:left}"
    "td.sig{background:#f4a6a6}td.max{font-weight:bold}"
    "tr.avg td{border-top:2px solid #555;font-weight:bold}"
    "p.meta{color:#555;font-size:0.9em}";

}  // namespace

std::string bds_matrix_csv(const BdsMatrix& m) {
  std::ostringstream out;
  out << "backend,object";
  for (const auto& c : m.columns) out << ',' << csv_field(column_label(c)) << ',' << csv_field(column_label(c) + "_p");
  out << '\n';
  for (const auto& row : m.rows) {
    out << csv_field(row.backend_id) << ',' << csv_field(row.object_id);
    for (const auto& cell : row.cells) {
      if (cell) {
        out << ',' << format3(cell->score) << ',' << format3(cell->p_value);
      } else {
        out << ",,";
      }
    }
    out << '\n';
  }
  out << "average,";
  for (const auto& a : m.average) out << ',' << opt3(a) << ',';
  out << '\n';
  return out.str();
}

std::string cds_ranking_csv(const CdsRanking& r) {
  std::ostringstream out;
  out << "rank,attribute,objects";
  for (const auto& d : r.dimensions) out << ',' << csv_field(d);
  out << ",total\n";
  for (std::size_t i = 0; i < r.rows.size(); ++i) {
    const auto& row = r.rows[i];
    std::string objects;
    for (std::size_t k = 0; k < row.objects.size(); ++k) objects += (k ? ";" : "") + row.objects[k];
    out << i + 1 << ',' << csv_field(row.attribute) << ',' << csv_field(objects);
    for (const auto& v : row.per_dimension) out << ',' << opt3(v);
    out << ',' << format3(row.total) << '\n';
  }
  return out.str();
}

std::string vac_table_csv(const VacTable& t) {
  std::ostringstream out;
  out << "backend";
  for (const auto& o : t.objects) out << ',' << csv_field(o);
  out << ",average\n";
  for (const auto& row : t.rows) {
    out << csv_field(row.backend_id);
    for (const auto& c : row.cells) out << ',' << opt3(c);
    out << ',' << opt3(row.average) << '\n';
  }
  return out.str();
}

std::string segregation_csv(const std::vector<SegregationCase>& cases) {
  std::ostringstream out;
  out << "backend,object,condition,attribute,value,count\n";
  for (const auto& c : cases) {
    out << csv_field(c.backend_id) << ',' << csv_field(c.object_id) << ',' << csv_field(c.condition_id) << ','
        << csv_field(c.attribute) << ',' << csv_field(c.value) << ',' << c.count << '\n';
  }
  return out.str();
}

std::string shifts_csv(const std::vector<ShiftRecord>& shifts) {
  std::ostringstream out;
  out << "backend,object,condition,attribute,base_value,demo_value,base_dominance,demo_dominance,tie_broken\n";
  for (const auto& s : shifts) {
    out << csv_field(s.backend_id) << ',' << csv_field(s.object_id) << ',' << csv_field(s.condition_id) << ','
        << csv_field(s.attribute) << ',' << csv_field(s.base_value) << ',' << csv_field(s.demo_value) << ','
        << format3(s.base_dominance) << ',' << format3(s.demo_dominance) << ',' << (s.tie_broken ? "true" : "false")
        << '\n';
  }
  return out.str();
}

json render_json(const BiasReport& report, const ReportSpec& spec) {
  spec.validate();
  json j = {{"format", "objbias-report/1"}, {"config_digest", report.config_digest}, {"alpha", spec.alpha}};
  if (spec.bds_matrix) {
    const auto m = bds_matrix(report.bds, spec.alpha);
    json cols = json::array(), rows = json::array();
    for (const auto& c : m.columns) cols.push_back({{"dimension", c.dimension_id}, {"group", c.group_id}});
    for (const auto& row : m.rows) {
      json cells = json::array();
      for (const auto& cell : row.cells) {
        cells.push_back(cell ? json{{"score", round3(cell->score)},
                                    {"p_value", round3(cell->p_value)},
                                    {"significant", cell->significant}}
                             : json(nullptr));
      }
      rows.push_back({{"backend", row.backend_id}, {"object", row.object_id}, {"cells", cells}});
    }
    json avg = json::array();
    for (const auto& a : m.average) avg.push_back(opt_json(a));
    j["bds_matrix"] = {{"columns", cols}, {"rows", rows}, {"average", avg}};
  }
  if (spec.cds_ranking) {
    const auto r = cds_ranking(report.cds, spec.cds_top_k);
    json rows = json::array();
    for (const auto& row : r.rows) {
      json vals = json::array();
      for (const auto& v : row.per_dimension) vals.push_back(opt_json(v));
      rows.push_back({{"attribute", row.attribute},
                      {"objects", row.objects},
                      {"per_dimension", vals},
                      {"total", round3(row.total)},
                      {"highlight", r.dimensions.empty() ? json(nullptr) : json(r.dimensions[row.highlight])}});
    }
    j["cds_ranking"] = {{"dimensions", r.dimensions}, {"rows", rows}};
  }
  if (spec.vac_table) {
    const auto t = vac_table(report.vac);
    json rows = json::array();
    for (const auto& row : t.rows) {
      json cells = json::array();
      for (const auto& c : row.cells) cells.push_back(opt_json(c));
      rows.push_back({{"backend", row.backend_id}, {"cells", cells}, {"average", opt_json(row.average)}});
    }
    j["vac_table"] = {{"objects", t.objects}, {"rows", rows}};
  }
  if (spec.segregation) {
    json cases = json::array();
    for (const auto& c : report.segregation) {
      cases.push_back({{"backend", c.backend_id}, {"object", c.object_id}, {"condition", c.condition_id},
                       {"attribute", c.attribute}, {"value", c.value}, {"count", c.count}});
    }
    j["segregation"] = cases;
  }
  if (spec.shifts) {
    json shifts = json::array();
    for (const auto& s : report.shifts) {
      shifts.push_back({{"backend", s.backend_id}, {"object", s.object_id}, {"condition", s.condition_id},
                        {"attribute", s.attribute}, {"base_value", s.base_value}, {"demo_value", s.demo_value},
                        {"base_dominance", round3(s.base_dominance)}, {"demo_dominance", round3(s.demo_dominance)},
                        {"tie_broken", s.tie_broken}});
    }
    j["shifts"] = shifts;
  }
  if (spec.agreement) {
    if (report.agreement) {
      const auto& a = *report.agreement;
      j["agreement"] = {{"total", a.total},
                        {"appropriate", a.appropriate},
                        {"incorrect", a.incorrect},
                        {"ambiguous", a.ambiguous},
                        {"agreement_rate", round3(a.agreement_rate())}};
    } else {
      j["agreement"] = nullptr;
    }
  }
  return j;
}

std::string render_html(const BiasReport& report, const ReportSpec& spec) {
  spec.validate();
  std::ostringstream h;
  h << "<!DOCTYPE html>\n<html lang=\"en\">\n<head>\n<meta charset=\"utf-8\">\n"
    << "<title>Object bias audit report</title>\n<style>" << kStyle << "</style>\n</head>\n<body>\n"
    << "<h1>Object bias audit report</h1>\n"
    << "<p class=\"meta\">config digest " << html_escape(report.config_digest) << "; alpha " << format3(spec.alpha)
    << "; " << report.n_permutations << " permutations</p>\n";

  if (spec.bds_matrix) {
    const auto m = bds_matrix(report.bds, spec.alpha);
    h << "<section id=\"bds-matrix\">\n<h2>Base vs. demographic divergence (BDS)</h2>\n"
      << "<p class=\"meta\">Shaded cells: permutation p &lt; " << format3(spec.alpha) << ".</p>\n"
      << "<table>\n<tr><th>Backend</th><th>Object</th>";
    for (const auto& c : m.columns) h << "<th>" << html_escape(column_label(c)) << "</th>";
    h << "</tr>\n";
    for (const auto& row : m.rows) {
      h << "<tr><td class=\"label\">" << html_escape(row.backend_id) << "</td><td class=\"label\">"
        << html_escape(row.object_id) << "</td>";
      for (const auto& cell : row.cells) {
        if (!cell) {
          h << "<td></td>";
        } else {
          h << (cell->significant ? "<td class=\"sig\"" : "<td") << " title=\"p=" << format3(cell->p_value) << "\">"
            << format3(cell->score) << "</td>";
        }
      }
      h << "</tr>\n";
    }
    h << "<tr class=\"avg\"><td class=\"label\">Overall average</td><td></td>";
    for (const auto& a : m.average) h << "<td>" << opt3(a) << "</td>";
    h << "</tr>\n</table>\n</section>\n";
  }

  if (spec.cds_ranking) {
    const auto r = cds_ranking(report.cds, spec.cds_top_k);
    h << "<section id=\"cds-ranking\">\n<h2>Cross-demographic disparity (CDS), top " << spec.cds_top_k
      << "</h2>\n<table>\n<tr><th>Attribute</th><th>Objects</th>";
    for (const auto& d : r.dimensions) h << "<th>" << html_escape(d) << "</th>";
    h << "</tr>\n";
    for (const auto& row : r.rows) {
      std::string objects;
      for (std::size_t k = 0; k < row.objects.size(); ++k) objects += (k ? ", " : "") + row.objects[k];
      h << "<tr><td class=\"label\">" << html_escape(row.attribute) << "</td><td class=\"label\">"
        << html_escape(objects) << "</td>";
      for (std::size_t d = 0; d < row.per_dimension.size(); ++d) {
        h << (row.per_dimension[d] && d == row.highlight ? "<td class=\"max\">" : "<td>") << opt3(row.per_dimension[d])
          << "</td>";
      }
      h << "</tr>\n";
    }
    h << "</table>\n</section>\n";
  }

  if (spec.vac_table) {
    const auto t = vac_table(report.vac);
    std::vector<std::optional<double>> col_max(t.objects.size());
    for (const auto& row : t.rows) {
      for (std::size_t o = 0; o < row.cells.size(); ++o) {
        if (row.cells[o] && (!col_max[o] || round3(*row.cells[o]) > *col_max[o])) col_max[o] = round3(*row.cells[o]);
      }
    }
    h << "<section id=\"vac-table\">\n<h2>Visual attribute concentration (VAC)</h2>\n<table>\n<tr><th>Backend</th>";
    for (const auto& o : t.objects) h << "<th>" << html_escape(o) << "</th>";
    h << "<th>Average</th></tr>\n";
    for (const auto& row : t.rows) {
      h << "<tr><td class=\"label\">" << html_escape(row.backend_id) << "</td>";
      for (std::size_t o = 0; o < row.cells.size(); ++o) {
        const bool is_max = row.cells[o] && col_max[o] && round3(*row.cells[o]) == *col_max[o];
        h << (is_max ? "<td class=\"max\">" : "<td>") << opt3(row.cells[o]) << "</td>";
      }
      h << "<td>" << opt3(row.average) << "</td></tr>\n";
    }
    h << "</table>\n</section>\n";
  }

  if (spec.segregation) {
    h << "<section id=\"segregation\">\n<h2>Perfect segregation (" << report.segregation.size()
      << " cases)</h2>\n<table>\n<tr><th>Backend</th><th>Object</th><th>Condition</th><th>Attribute</th>"
      << "<th>Value</th><th>Count</th></tr>\n";
    for (const auto& c : report.segregation) {
      h << "<tr><td class=\"label\">" << html_escape(c.backend_id) << "</td><td class=\"label\">"
        << html_escape(c.object_id) << "</td><td class=\"label\">" << html_escape(c.condition_id)
        << "</td><td class=\"label\">" << html_escape(c.attribute) << "</td><td class=\"label\">"
        << html_escape(c.value) << "</td><td>" << c.count << "</td></tr>\n";
    }
    h << "</table>\n</section>\n";
  }

  if (spec.shifts) {
    h << "<section id=\"shifts\">\n<h2>Base-to-demographic shifts (" << report.shifts.size()
      << ")</h2>\n<table>\n<tr><th>Backend</th><th>Object</th><th>Condition</th><th>Attribute</th>"
      << "<th>Base</th><th>Demographic</th><th>Base share</th><th>Demographic share</th></tr>\n";
    for (const auto& s : report.shifts) {
      h << "<tr><td class=\"label\">" << html_escape(s.backend_id) << "</td><td class=\"label\">"
        << html_escape(s.object_id) << "</td><td class=\"label\">" << html_escape(s.condition_id)
        << "</td><td class=\"label\">" << html_escape(s.attribute) << "</td><td class=\"label\">"
        << html_escape(s.base_value) << "</td><td class=\"label\">" << html_escape(s.demo_value) << "</td><td>"
        << format3(s.base_dominance) << "</td><td>" << format3(s.demo_dominance) << "</td></tr>\n";
    }
    h << "</table>\n</section>\n";
  }

  if (spec.agreement) {
    h << "<section id=\"agreement\">\n<h2>Human validation agreement</h2>\n";
    if (report.agreement) {
      const auto& a = *report.agreement;
      h << "<table>\n<tr><th>Total</th><th>Appropriate</th><th>Incorrect</th><th>Ambiguous</th><th>Agreement</th></tr>\n"
        << "<tr><td>" << a.total << "</td><td>" << a.appropriate << "</td><td>" << a.incorrect << "</td><td>"
        << a.ambiguous << "</td><td>" << format3(a.agreement_rate()) << "</td></tr>\n</table>\n";
    } else {
      h << "<p class=\"meta\">No annotations recorded.</p>\n";
    }
    h << "</section>\n";
  }
  h << "</body>\n</html>\n";
  return h.str();
}

std::vector<std::filesystem::path> write_report(const std::filesystem::path& dir, const BiasReport& report,
                                                const ReportSpec& spec) {
  spec.validate();
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> written;
  auto put = [&](const char* name, const std::string& text) {
    write_file_atomic(dir / name, text);
    written.push_back(dir / name);
  };
  put("report.html", render_html(report, spec));
  put("report.json", render_json(report, spec).dump(2) + "\n");
  if (spec.bds_matrix) put("bds_matrix.csv", bds_matrix_csv(bds_matrix(report.bds, spec.alpha)));
  if (spec.cds_ranking) put("cds_ranking.csv", cds_ranking_csv(cds_ranking(report.cds, spec.cds_top_k)));
  if (spec.vac_table) put("vac_table.csv", vac_table_csv(vac_table(report.vac)));
  if (spec.segregation) put("segregation.csv", segregation_csv(report.segregation));
  if (spec.shifts) put("shifts.csv", shifts_csv(report.shifts));
  if (spec.agreement && report.agreement) put("agreement.csv", agreement_csv(*report.agreement));
  return written;
}

}  // namespace objbias
