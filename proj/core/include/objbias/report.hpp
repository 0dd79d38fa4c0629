#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "objbias/analysis.hpp"

namespace objbias {

struct ReportSpec {
  double alpha = 0.01;
  std::size_t cds_top_k = 10;
  bool bds_matrix = true;
  bool cds_ranking = true;
  bool vac_table = true;
  bool segregation = true;
  bool shifts = true;
  bool agreement = true;

  /// Throws ValidationError unless 0 < alpha < 1.
  void validate() const;
};

/// Three decimals, ties rounded to even ("0.125" stays "0.125", 0.0625 -> "0.062").
std::string format3(double x);
/// The value format3 prints, as a number.
double round3(double x);

struct BdsCell {
  double score = 0.0;
  double p_value = 1.0;
  bool significant = false;
};

struct BdsMatrix {
  struct Column {
    std::string dimension_id;
    std::string group_id;
  };
  struct Row {
    std::string backend_id;
    std::string object_id;
    std::vector<std::optional<BdsCell>> cells;
  };
  std::vector<Column> columns;
  std::vector<Row> rows;
  /// Column means over present cells.
  std::vector<std::optional<double>> average;
};

/// Rows and columns follow first appearance in `results`; significance is p < alpha.
BdsMatrix bds_matrix(const std::vector<BdsResult>& results, double alpha = 0.01);

struct CdsRankingRow {
  std::string attribute;
  std::vector<std::string> objects;
  /// Mean CDS over backend-object pairs carrying the attribute, per dimension.
  std::vector<std::optional<double>> per_dimension;
  double total = 0.0;
  /// Index into per_dimension of the row maximum.
  std::size_t highlight = 0;
};

struct CdsRanking {
  std::vector<std::string> dimensions;
  std::vector<CdsRankingRow> rows;
};

/// Attributes ranked by CDS summed over dimensions (descending, then by name).
CdsRanking cds_ranking(const std::vector<CdsResult>& results, std::size_t top_k = 10);

struct VacTable {
  std::vector<std::string> objects;
  struct Row {
    std::string backend_id;
    std::vector<std::optional<double>> cells;  // mean over the pair's conditions
    std::optional<double> average;
  };
  std::vector<Row> rows;
};

VacTable vac_table(const std::vector<VacResult>& results);

std::string bds_matrix_csv(const BdsMatrix& m);
std::string cds_ranking_csv(const CdsRanking& r);
std::string vac_table_csv(const VacTable& t);
std::string segregation_csv(const std::vector<SegregationCase>& cases);
std::string shifts_csv(const std::vector<ShiftRecord>& shifts);

/// Tables as JSON with numbers rounded as printed.
nlohmann::json render_json(const BiasReport& report, const ReportSpec& spec);

/// Self-contained static HTML; byte-identical for identical input.
std::string render_html(const BiasReport& report, const ReportSpec& spec);

/// Writes report.html, report.json and one CSV per included table into `dir`.
/// Returns the written paths.
std::vector<std::filesystem::path> write_report(const std::filesystem::path& dir, const BiasReport& report,
                                                const ReportSpec& spec);

}  // namespace objbias
