#include "drsn/report.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <fmt/format.h>
#include <json.hpp>

namespace drsn {
namespace {

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char ch : s) {
    switch (ch) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += ch;
    }
  }
  return out;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

// Display width in code points, so "±" counts as one column.
std::size_t text_width(const std::string& s) {
  return static_cast<std::size_t>(
      std::count_if(s.begin(), s.end(), [](char ch) { return (ch & 0xC0) != 0x80; }));
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << content;
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace

std::string render_line_chart(const std::string& title, const std::string& y_label,
                              const std::vector<SeriesData>& series) {
  constexpr double W = 640, H = 400, left = 64, right = 24, top = 40, bottom = 56;
  const double pw = W - left - right, ph = H - top - bottom;
  std::size_t n = 1;
  double lo = 0.0, hi = 0.0;
  bool first = true;
  for (const auto& s : series) {
    n = std::max(n, s.values.size());
    for (double v : s.values) {
      if (!std::isfinite(v)) continue;
      lo = first ? v : std::min(lo, v);
      hi = first ? v : std::max(hi, v);
      first = false;
    }
  }
  lo = std::min(lo, 0.0);
  if (hi <= lo) hi = lo + 1.0;
  auto sx = [&](std::size_t i) {
    return n == 1 ? left + pw / 2 : left + pw * static_cast<double>(i) / static_cast<double>(n - 1);
  };
  auto sy = [&](double v) { return top + ph * (1.0 - (v - lo) / (hi - lo)); };

  static constexpr const char* colours[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd"};
  std::string svg;
  svg += fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{:.0f}\" height=\"{:.0f}\" "
      "viewBox=\"0 0 {:.0f} {:.0f}\">\n",
      W, H, W, H);
  svg += fmt::format("<rect width=\"{:.0f}\" height=\"{:.0f}\" fill=\"white\"/>\n", W, H);
  svg += fmt::format(
      "<text x=\"{:.1f}\" y=\"24\" font-family=\"sans-serif\" font-size=\"15\" "
      "text-anchor=\"middle\">{}</text>\n",
      W / 2, xml_escape(title));
  svg += fmt::format(
      "<line x1=\"{0:.1f}\" y1=\"{1:.1f}\" x2=\"{0:.1f}\" y2=\"{2:.1f}\" stroke=\"black\"/>\n", left,
      top, top + ph);
  svg += fmt::format(
      "<line x1=\"{0:.1f}\" y1=\"{1:.1f}\" x2=\"{2:.1f}\" y2=\"{1:.1f}\" stroke=\"black\"/>\n", left,
      top + ph, left + pw);
  for (int k = 0; k <= 4; ++k) {
    const double v = lo + (hi - lo) * k / 4.0;
    svg += fmt::format(
        "<text x=\"{:.1f}\" y=\"{:.1f}\" font-family=\"sans-serif\" font-size=\"11\" "
        "text-anchor=\"end\">{:.3g}</text>\n",
        left - 6, sy(v) + 4, v);
  }
  const std::size_t step = std::max<std::size_t>(1, n / 10);
  for (std::size_t i = 0; i < n; i += step) {
    svg += fmt::format(
        "<text x=\"{:.1f}\" y=\"{:.1f}\" font-family=\"sans-serif\" font-size=\"11\" "
        "text-anchor=\"middle\">{}</text>\n",
        sx(i), top + ph + 16, i + 1);
  }
  svg += fmt::format(
      "<text x=\"{:.1f}\" y=\"{:.1f}\" font-family=\"sans-serif\" font-size=\"12\" "
      "text-anchor=\"middle\">epoch</text>\n",
      left + pw / 2, H - 14);
  svg += fmt::format(
      "<text x=\"16\" y=\"{:.1f}\" font-family=\"sans-serif\" font-size=\"12\" "
      "text-anchor=\"middle\" transform=\"rotate(-90 16 {:.1f})\">{}</text>\n",
      top + ph / 2, top + ph / 2, xml_escape(y_label));

  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    std::string pts;
    for (std::size_t i = 0; i < s.values.size(); ++i) {
      if (!pts.empty()) pts += ' ';
      pts += fmt::format("{:.2f},{:.2f}", sx(i), sy(s.values[i]));
    }
    const char* colour = colours[k % 4];
    svg += fmt::format(
        "<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"2\" points=\"{}\"/>\n", colour, pts);
    const double ly = top + 14 + 16 * static_cast<double>(k);
    svg += fmt::format(
        "<line x1=\"{:.1f}\" y1=\"{:.1f}\" x2=\"{:.1f}\" y2=\"{:.1f}\" stroke=\"{}\" "
        "stroke-width=\"2\"/>\n",
        left + pw - 120, ly, left + pw - 100, ly, colour);
    svg += fmt::format(
        "<text x=\"{:.1f}\" y=\"{:.1f}\" font-family=\"sans-serif\" font-size=\"11\">{}</text>\n",
        left + pw - 94, ly + 4, xml_escape(s.name));
  }
  svg += "</svg>\n";
  return svg;
}

std::string format_table_text(const Table& table) {
  std::vector<std::size_t> width(table.header.size(), 0);
  auto widen = [&](const std::vector<std::string>& row) {
    for (std::size_t i = 0; i < row.size() && i < width.size(); ++i)
      width[i] = std::max(width[i], text_width(row[i]));
  };
  widen(table.header);
  for (const auto& r : table.rows) widen(r);
  auto line = [&](const std::vector<std::string>& row) {
    std::string s;
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) s += "  ";
      s += row[i];
      if (i + 1 < row.size()) s += std::string(width[i] - text_width(row[i]), ' ');
    }
    return s + "\n";
  };
  std::string out = line(table.header);
  std::size_t total = 0;
  for (auto w : width) total += w;
  out += std::string(total + 2 * (width.empty() ? 0 : width.size() - 1), '-') + "\n";
  for (const auto& r : table.rows) out += line(r);
  return out;
}

std::string format_table_csv(const Table& table) {
  auto line = [](const std::vector<std::string>& row) {
    std::string s;
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) s += ',';
      s += csv_field(row[i]);
    }
    return s + "\n";
  };
  std::string out = line(table.header);
  for (const auto& r : table.rows) out += line(r);
  return out;
}

std::string format_metrics_csv(const std::vector<RunRecord>& runs) {
  std::string out = "run,seed,epoch,train_loss,train_accuracy,val_loss,val_accuracy\n";
  for (const auto& r : runs) {
    for (const auto& e : r.metrics.epochs) {
      out += fmt::format("{},{},{},{:.8f},{:.6f},{:.8f},{:.6f}\n", csv_field(r.label), r.seed,
                         e.epoch, e.train_loss, e.train_accuracy, e.val_loss, e.val_accuracy);
    }
  }
  return out;
}

std::string format_confusion_csv(const std::vector<RunRecord>& runs) {
  std::string out = "run,seed,true_label";
  const std::size_t k = runs.empty() || runs.front().confusion.empty()
                            ? static_cast<std::size_t>(kNumGestures)
                            : runs.front().confusion.size();
  for (std::size_t j = 0; j < k; ++j) out += fmt::format(",pred_{}", j);
  out += "\n";
  for (const auto& r : runs) {
    for (std::size_t i = 0; i < r.confusion.size(); ++i) {
      out += fmt::format("{},{},{}", csv_field(r.label), r.seed, i);
      for (auto v : r.confusion[i]) out += fmt::format(",{}", v);
      out += "\n";
    }
  }
  return out;
}

std::string format_manifest(const ExperimentReport& report,
                            const std::vector<std::string>& files) {
  nlohmann::ordered_json j;
  j["experiment"] = report.id;
  j["title"] = report.title;
  j["settings"] = report.settings;
  auto runs = nlohmann::ordered_json::array();
  for (const auto& r : report.runs) {
    nlohmann::ordered_json jr;
    jr["label"] = r.label;
    jr["seed"] = r.seed;
    jr["train_accuracy"] = r.train_accuracy;
    jr["test_accuracy"] = r.test_accuracy;
    jr["epochs"] = r.metrics.epochs.size();
    jr["steps"] = r.metrics.steps;
    jr["wall_seconds"] = r.metrics.wall_seconds;
    runs.push_back(std::move(jr));
  }
  j["runs"] = std::move(runs);
  j["notes"] = report.notes;
  j["files"] = files;
  j["wall_seconds"] = report.wall_seconds;
  return j.dump(2) + "\n";
}

std::vector<std::filesystem::path> emit_report(const ExperimentReport& report,
                                               const std::filesystem::path& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create output directory " + out_dir.string() + ": " + ec.message());

  std::vector<std::filesystem::path> paths;
  auto emit = [&](const char* name, const std::string& content) {
    const auto p = out_dir / name;
    write_file(p, content);
    paths.push_back(p);
  };
  emit("table.txt", report.title + "\n\n" + format_table_text(report.table));
  emit("table.csv", format_table_csv(report.table));
  emit("metrics.csv", format_metrics_csv(report.runs));
  emit("confusion.csv", format_confusion_csv(report.runs));

  const RunRecord* curve = nullptr;
  for (const auto& r : report.runs) {
    if (r.label == report.curve_run && !r.metrics.epochs.empty()) {
      curve = &r;
      break;
    }
  }
  SeriesData tr_acc{"train", {}}, va_acc{"validation", {}}, tr_loss{"train", {}},
      va_loss{"validation", {}};
  if (curve) {
    for (const auto& e : curve->metrics.epochs) {
      tr_acc.values.push_back(e.train_accuracy);
      va_acc.values.push_back(e.val_accuracy);
      tr_loss.values.push_back(e.train_loss);
      va_loss.values.push_back(e.val_loss);
    }
  }
  const std::string who = curve ? curve->label : report.curve_run;
  emit("curve_accuracy.svg",
       render_line_chart(who + ": training and validation accuracy", "accuracy", {tr_acc, va_acc}));
  emit("curve_loss.svg",
       render_line_chart(who + ": training and validation loss", "loss", {tr_loss, va_loss}));

  std::vector<std::string> names;
  for (const auto& p : paths) names.push_back(p.filename().string());
  names.push_back("manifest.json");
  emit("manifest.json", format_manifest(report, names));
  return paths;
}

}  // namespace drsn
