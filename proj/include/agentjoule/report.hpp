#pragma once

// Tables, CSV and SVG charts for the CLI reports.

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "agentjoule/energy.hpp"
#include "agentjoule/trajectory.hpp"

namespace agentjoule {

// Cells are preformatted so text and CSV renderings carry identical values.
struct Table {
  std::string title;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::string to_text() const;
  std::string to_csv() const;
};

std::string csv_escape(const std::string& cell);
std::string format_percent(double v);  // "%.2f", "n/a" when undefined

// (variant - baseline) / baseline * 100; 0 when both are 0, NaN when only
// the baseline is 0.
double percent_delta(double baseline, double variant) noexcept;

std::string task_id_of(const Episode& ep);

Table method_totals_table(const std::vector<GroupMean>& groups);
Table residual_table(const std::vector<Episode>& episodes, const RegressionFit& fit);
Table difficulty_table(const DifficultyBinning& binning);

struct ChartSeries {
  std::string name;
  std::vector<double> values;  // one per category
};

std::string bar_chart_svg(const std::string& title, const std::string& y_label,
                          const std::vector<std::string>& categories, const std::vector<ChartSeries>& series);
std::string line_chart_svg(const std::string& title, const std::string& y_label,
                           const std::vector<std::string>& categories, const std::vector<ChartSeries>& series);

struct ComparisonReport {
  std::vector<std::string> common_tasks;
  std::vector<std::string> only_baseline;
  std::vector<std::string> only_variant;
  Table methods;  // per side and method
  Table deltas;   // overall means over the common tasks
  Table roles;    // per-role means
  std::optional<Table> difficulty;
  std::map<std::string, std::string> charts;  // file name -> svg

  // Headline numbers, for programmatic checks.
  double baseline_output = 0.0;
  double variant_output = 0.0;
  std::optional<double> baseline_energy_j;
  std::optional<double> variant_energy_j;
};

// Restricted to task ids present on both sides (AnalysisError when none).
ComparisonReport compare_corpora(const std::vector<Episode>& baseline, const std::vector<Episode>& variant,
                                 const std::map<std::string, std::uint64_t>* reference_max_input = nullptr,
                                 const std::vector<std::uint64_t>& edges = kDefaultDifficultyEdges);

// Two columns: task id, reference max-input tokens. A header row is allowed.
std::map<std::string, std::uint64_t> parse_reference_csv(std::istream& in);

}  // namespace agentjoule
