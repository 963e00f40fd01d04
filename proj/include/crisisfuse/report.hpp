#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>

#include "crisisfuse/harness.hpp"

namespace crisisfuse {

enum class ReportFormat { text, csv, json };
std::string_view to_string(ReportFormat f) noexcept;
ReportFormat parse_report_format(std::string_view s);
/// "report.txt", "report.csv", "report.json"
std::string report_file_name(ReportFormat f);

/// "0.74 (0.33)"
std::string format_cell(const DimensionSummary& s);

/// Columns: group, Professionalism, Actionability, Relevance, Overall Quality,
/// Consistency. Rows in ascending group order. Throws InvalidArgument when empty.
std::string render_report(std::span<const ReportRow> rows, ReportFormat format);
void emit_report(std::span<const ReportRow> rows, ReportFormat format, const std::filesystem::path& path);

/// Iteration series as CSV: iteration, the three means, overall quality, consistency, n.
std::string render_curve(const IterationCurve& curve);

}  // namespace crisisfuse
