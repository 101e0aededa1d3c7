#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "drsn/experiments.hpp"

namespace drsn {

struct SeriesData {
  std::string name;
  std::vector<double> values;
};

// Standalone SVG line chart, one <polyline> per series, x = 1..n.
std::string render_line_chart(const std::string& title, const std::string& y_label,
                              const std::vector<SeriesData>& series);

std::string format_table_text(const Table& table);
std::string format_table_csv(const Table& table);
std::string format_metrics_csv(const std::vector<RunRecord>& runs);
std::string format_confusion_csv(const std::vector<RunRecord>& runs);
std::string format_manifest(const ExperimentReport& report,
                            const std::vector<std::string>& files);

/// Writes table.txt, table.csv, metrics.csv, confusion.csv,
/// curve_accuracy.svg, curve_loss.svg and manifest.json into `out_dir`
/// (created if needed) and returns their paths. Everything except the
/// manifest, which records wall-clock time, is a pure function of the report.
std::vector<std::filesystem::path> emit_report(const ExperimentReport& report,
                                               const std::filesystem::path& out_dir);

}  // namespace drsn
