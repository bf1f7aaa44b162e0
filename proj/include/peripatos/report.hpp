#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace peripatos {

/// Writes `content` to a sibling temporary file and renames it into place.
void write_atomic(const std::filesystem::path& path, std::string_view content);

/// Where the diverging palette is centred.
enum class HeatmapScale { ratio, log_odds };

struct Heatmap {
  std::string title;
  std::vector<std::string> rows;
  std::vector<std::string> columns;
  /// values[r][c]; nullopt and non-finite values are drawn gray.
  std::vector<std::vector<std::optional<double>>> values;
  /// Same shape as `values`; marked cells are annotated with their value.
  std::vector<std::vector<bool>> significant;
  HeatmapScale scale = HeatmapScale::ratio;
};

/// SVG document. Ratios are coloured on a log scale around 1, log-odds
/// around 0. The only line that varies between runs is the leading
/// "<!-- generated ... -->" comment, which carries `generated_at`.
std::string render_heatmap(const Heatmap& map, std::string_view generated_at);
void emit_heatmap(const Heatmap& map, const std::filesystem::path& path,
                  std::string_view generated_at);

struct BarChart {
  std::string title;
  std::vector<std::string> labels;
  std::vector<double> values;
  /// Optional symmetric error bars, one per bar.
  std::vector<double> errors;
  /// Dashed reference line, e.g. 1 for ratios or 0.5 for AUC.
  std::optional<double> reference;
};

std::string render_bar_chart(const BarChart& chart, std::string_view generated_at);
void emit_bar_chart(const BarChart& chart, const std::filesystem::path& path,
                    std::string_view generated_at);

/// Current UTC time as "YYYY-MM-DDTHH:MM:SSZ".
std::string utc_now();

}  // namespace peripatos
