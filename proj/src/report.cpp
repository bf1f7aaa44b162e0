#include "peripatos/report.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <system_error>

#include <fmt/format.h>

#include "peripatos/common.hpp"

namespace peripatos {

void write_atomic(const std::filesystem::path& path, std::string_view content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(fmt::format("cannot write {}", tmp.string()));
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) throw Error(fmt::format("write to {} failed", tmp.string()));
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw Error(fmt::format("cannot move {} into place: {}", path.string(), ec.message()));
  }
}

std::string utc_now() {
  const auto now = std::chrono::floor<std::chrono::seconds>(std::chrono::system_clock::now());
  const auto day = std::chrono::floor<std::chrono::days>(now);
  const std::chrono::year_month_day ymd(day);
  const std::chrono::hh_mm_ss hms(now - day);
  return fmt::format("{:04}-{:02}-{:02}T{:02}:{:02}:{:02}Z", static_cast<int>(ymd.year()),
                     static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                     hms.hours().count(), hms.minutes().count(), hms.seconds().count());
}

namespace {

std::string xml_escape(std::string_view s) {
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

struct Rgb {
  double r, g, b;
};

constexpr Rgb kLow{33, 102, 172};
constexpr Rgb kMid{247, 247, 247};
constexpr Rgb kHigh{178, 24, 43};
constexpr const char* kGray = "#bdbdbd";

std::string mix(double t) {
  t = std::clamp(t, -1.0, 1.0);
  const Rgb& end = t < 0 ? kLow : kHigh;
  const double w = std::abs(t);
  auto channel = [&](double a, double b) {
    return static_cast<int>(std::lround(a + (b - a) * w));
  };
  return fmt::format("#{:02x}{:02x}{:02x}", channel(kMid.r, end.r), channel(kMid.g, end.g),
                     channel(kMid.b, end.b));
}

std::string header(double width, double height, std::string_view generated_at) {
  return fmt::format(
      "<!-- generated {} -->\n"
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" "
      "viewBox=\"0 0 {} {}\" font-family=\"sans-serif\" font-size=\"12\">\n"
      "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n",
      generated_at, width, height, width, height);
}

}  // namespace

std::string render_heatmap(const Heatmap& map, std::string_view generated_at) {
  const std::size_t n_rows = map.rows.size(), n_cols = map.columns.size();
  if (map.values.size() != n_rows) throw Error("heatmap rows do not match values");
  for (const auto& row : map.values)
    if (row.size() != n_cols) throw Error("heatmap columns do not match values");

  auto position = [&](double v) {
    return map.scale == HeatmapScale::ratio ? std::log(v) : v;
  };
  auto drawable = [&](const std::optional<double>& v) {
    return v && std::isfinite(*v) && (map.scale == HeatmapScale::log_odds || *v > 0.0);
  };
  double extent = 0.0;
  for (const auto& row : map.values)
    for (const auto& v : row)
      if (drawable(v)) extent = std::max(extent, std::abs(position(*v)));
  if (extent == 0.0) extent = 1.0;

  constexpr double cell = 56, left = 130, top = 120;
  const double width = left + cell * static_cast<double>(n_cols) + 20;
  const double height = top + cell * static_cast<double>(n_rows) + 20;
  std::string svg = header(width, height, generated_at);
  svg += fmt::format("<text x=\"{}\" y=\"20\" font-size=\"14\">{}</text>\n", left,
                     xml_escape(map.title));
  for (std::size_t c = 0; c < n_cols; ++c) {
    const double x = left + cell * (static_cast<double>(c) + 0.5);
    svg += fmt::format(
        "<text x=\"{}\" y=\"{}\" transform=\"rotate(-45 {} {})\">{}</text>\n", x, top - 6, x,
        top - 6, xml_escape(map.columns[c]));
  }
  for (std::size_t r = 0; r < n_rows; ++r) {
    const double y = top + cell * static_cast<double>(r);
    svg += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>\n", left - 6,
                       y + cell / 2 + 4, xml_escape(map.rows[r]));
    for (std::size_t c = 0; c < n_cols; ++c) {
      const auto& v = map.values[r][c];
      const double x = left + cell * static_cast<double>(c);
      const std::string fill = drawable(v) ? mix(position(*v) / extent) : kGray;
      svg += fmt::format(
          "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"{}\" stroke=\"white\"/>\n",
          x, y, cell, cell, fill);
      const bool marked = r < map.significant.size() && c < map.significant[r].size() &&
                          map.significant[r][c];
      if (marked && v && std::isfinite(*v))
        svg += fmt::format(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" class=\"value\">{:.2f}</text>\n",
            x + cell / 2, y + cell / 2 + 4, *v);
    }
  }
  svg += "</svg>\n";
  return svg;
}

void emit_heatmap(const Heatmap& map, const std::filesystem::path& path,
                  std::string_view generated_at) {
  write_atomic(path, render_heatmap(map, generated_at));
}

std::string render_bar_chart(const BarChart& chart, std::string_view generated_at) {
  const std::size_t n = chart.labels.size();
  if (chart.values.size() != n) throw Error("bar chart labels do not match values");
  if (!chart.errors.empty() && chart.errors.size() != n)
    throw Error("bar chart errors do not match values");

  double hi = chart.reference.value_or(0.0);
  double lo = std::min(0.0, hi);
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(chart.values[i])) continue;
    const double e = chart.errors.empty() || !std::isfinite(chart.errors[i]) ? 0.0 : chart.errors[i];
    hi = std::max(hi, chart.values[i] + e);
    lo = std::min(lo, chart.values[i] - e);
  }
  if (hi == lo) hi = lo + 1.0;

  constexpr double bar = 48, gap = 16, left = 60, top = 40, plot = 240;
  const double width = left + (bar + gap) * static_cast<double>(n) + 20;
  const double height = top + plot + 110;
  auto y_of = [&](double v) { return top + plot * (hi - v) / (hi - lo); };

  std::string svg = header(width, height, generated_at);
  svg += fmt::format("<text x=\"{}\" y=\"20\" font-size=\"14\">{}</text>\n", left,
                     xml_escape(chart.title));
  svg += fmt::format("<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n", left,
                     top, left, top + plot);
  svg += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{:.2f}</text>\n", left - 4,
                     top + 4, hi);
  svg += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{:.2f}</text>\n", left - 4,
                     top + plot + 4, lo);
  const double base = y_of(std::clamp(0.0, lo, hi));
  for (std::size_t i = 0; i < n; ++i) {
    const double x = left + gap / 2 + (bar + gap) * static_cast<double>(i);
    const double v = chart.values[i];
    if (std::isfinite(v)) {
      const double y = y_of(v);
      svg += fmt::format(
          "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"#4393c3\"/>\n", x,
          std::min(y, base), bar, std::abs(base - y));
      if (!chart.errors.empty() && std::isfinite(chart.errors[i]) && chart.errors[i] > 0) {
        const double cx = x + bar / 2;
        svg += fmt::format(
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n", cx,
            y_of(v + chart.errors[i]), cx, y_of(v - chart.errors[i]));
      }
      svg += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{:.2f}</text>\n",
                         x + bar / 2, std::min(y, base) - 4, v);
    }
    const double ly = top + plot + 14;
    svg += fmt::format(
        "<text x=\"{}\" y=\"{}\" transform=\"rotate(45 {} {})\">{}</text>\n", x + bar / 2, ly,
        x + bar / 2, ly, xml_escape(chart.labels[i]));
  }
  if (chart.reference) {
    const double y = y_of(*chart.reference);
    svg += fmt::format(
        "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"gray\" "
        "stroke-dasharray=\"4 3\"/>\n",
        left, y, width - 10, y);
  }
  svg += "</svg>\n";
  return svg;
}

void emit_bar_chart(const BarChart& chart, const std::filesystem::path& path,
                    std::string_view generated_at) {
  write_atomic(path, render_bar_chart(chart, generated_at));
}

}  // namespace peripatos
