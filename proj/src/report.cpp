#include "crisisfuse/report.hpp"

#include <algorithm>
#include <fstream>
#include <vector>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "crisisfuse/error.hpp"

namespace crisisfuse {

std::string_view to_string(ReportFormat f) noexcept {
  switch (f) {
    case ReportFormat::text: return "text";
    case ReportFormat::csv: return "csv";
    case ReportFormat::json: return "json";
  }
  return "text";
}

ReportFormat parse_report_format(std::string_view s) {
  if (s == "text") return ReportFormat::text;
  if (s == "csv") return ReportFormat::csv;
  if (s == "json") return ReportFormat::json;
  fail(ErrorKind::InvalidArgument, fmt::format("report format '{}' not in {{text, csv, json}}", s));
}

std::string report_file_name(ReportFormat f) {
  switch (f) {
    case ReportFormat::text: return "report.txt";
    case ReportFormat::csv: return "report.csv";
    case ReportFormat::json: return "report.json";
  }
  return "report.txt";
}

std::string format_cell(const DimensionSummary& s) { return fmt::format("{:.2f} ({:.2f})", s.mean, s.sd); }

namespace {

const std::vector<std::string> kHeader{"group",         "Professionalism", "Actionability", "Relevance",
                                       "Overall Quality", "Consistency"};

std::vector<std::vector<std::string>> cells(std::span<const ReportRow> rows) {
  std::vector<const ReportRow*> sorted;
  for (const auto& r : rows) sorted.push_back(&r);
  std::stable_sort(sorted.begin(), sorted.end(), [](auto* a, auto* b) { return a->group < b->group; });
  std::vector<std::vector<std::string>> out;
  for (const auto* r : sorted) {
    const auto& st = r->report.stats;
    out.push_back({r->group, format_cell(st.professionalism), format_cell(st.actionability),
                   format_cell(st.relevance), fmt::format("{:.2f}", r->report.overall_quality),
                   fmt::format("{:.2f}", r->report.consistency)});
  }
  return out;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

double two_decimals(double v) { return std::stod(fmt::format("{:.2f}", v)); }

}  // namespace

std::string render_report(std::span<const ReportRow> rows, ReportFormat format) {
  if (rows.empty()) fail(ErrorKind::InvalidArgument, "report needs at least one row");
  auto body = cells(rows);

  if (format == ReportFormat::csv) {
    std::string out;
    for (const auto* line : {&kHeader}) {
      for (std::size_t i = 0; i < line->size(); ++i) out += (i ? "," : "") + csv_field((*line)[i]);
      out += '\n';
    }
    for (const auto& line : body) {
      for (std::size_t i = 0; i < line.size(); ++i) out += (i ? "," : "") + csv_field(line[i]);
      out += '\n';
    }
    return out;
  }

  if (format == ReportFormat::json) {
    std::vector<const ReportRow*> sorted;
    for (const auto& r : rows) sorted.push_back(&r);
    std::stable_sort(sorted.begin(), sorted.end(), [](auto* a, auto* b) { return a->group < b->group; });
    auto arr = nlohmann::ordered_json::array();
    for (const auto* r : sorted) {
      nlohmann::ordered_json row;
      row["group"] = r->group;
      for (auto d : {Dimension::professionalism, Dimension::actionability, Dimension::relevance}) {
        const auto& s = r->report.stats[d];
        row[std::string(label(d))] = {{"mean", two_decimals(s.mean)}, {"sd", two_decimals(s.sd)}};
      }
      row["Overall Quality"] = two_decimals(r->report.overall_quality);
      row["Consistency"] = two_decimals(r->report.consistency);
      arr.push_back(row);
    }
    return arr.dump(2) + "\n";
  }

  std::vector<std::size_t> width(kHeader.size());
  for (std::size_t i = 0; i < kHeader.size(); ++i) {
    width[i] = kHeader[i].size();
    for (const auto& line : body) width[i] = std::max(width[i], line[i].size());
  }
  auto render_line = [&](const std::vector<std::string>& line) {
    std::string out;
    for (std::size_t i = 0; i < line.size(); ++i) {
      out += i + 1 < line.size() ? fmt::format("{:<{}}  ", line[i], width[i]) : line[i];
    }
    return out + "\n";
  };
  std::string out = render_line(kHeader);
  std::vector<std::string> rule;
  for (auto w : width) rule.emplace_back(w, '-');
  out += render_line(rule);
  for (const auto& line : body) out += render_line(line);
  return out;
}

void emit_report(std::span<const ReportRow> rows, ReportFormat format, const std::filesystem::path& path) {
  auto content = render_report(rows, format);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::IoError, fmt::format("cannot write report {}", path.string()));
  out << content;
  if (!out) fail(ErrorKind::IoError, fmt::format("write to {} failed", path.string()));
}

std::string render_curve(const IterationCurve& curve) {
  std::string out = "iteration,professionalism,actionability,relevance,overall_quality,consistency,n\n";
  for (const auto& p : curve.points) {
    out += fmt::format("{},{:.4f},{:.4f},{:.4f},{:.4f},{:.4f},{}\n", p.iteration, p.means.professionalism,
                       p.means.actionability, p.means.relevance, p.overall_quality, p.consistency, p.n);
  }
  return out;
}

}  // namespace crisisfuse
