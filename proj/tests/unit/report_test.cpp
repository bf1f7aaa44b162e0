#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <regex>
#include <sstream>

#include <fmt/format.h>
#include <gtest/gtest.h>
#include <unistd.h>

#include "peripatos/common.hpp"
#include "peripatos/report.hpp"

namespace peripatos {
namespace {

namespace fs = std::filesystem;

std::size_t count(const std::string& haystack, const std::string& needle) {
  std::size_t n = 0;
  for (auto pos = haystack.find(needle); pos != std::string::npos;
       pos = haystack.find(needle, pos + 1))
    ++n;
  return n;
}

std::vector<std::string> cell_fills(const std::string& svg) {
  static const std::regex cell(
      R"re(<rect x="[^"]+" y="[^"]+" width="56" height="56" fill="(#[0-9a-f]{6})")re");
  std::vector<std::string> fills;
  for (std::sregex_iterator it(svg.begin(), svg.end(), cell), end; it != end; ++it)
    fills.push_back((*it)[1]);
  return fills;
}

Heatmap two_by_two() {
  Heatmap h;
  h.title = "moves & stays";
  h.rows = {"A", "B"};
  h.columns = {"A", "B"};
  h.values = {{std::nullopt, 2.0}, {0.5, 1.0}};
  h.significant = {{false, true}, {false, false}};
  return h;
}

TEST(Heatmap, AnnotatesOnlySignificantCells) {
  const auto svg = render_heatmap(two_by_two(), "2020-01-01T00:00:00Z");
  EXPECT_EQ(count(svg, "class=\"value\""), 1u);
  EXPECT_NE(svg.find(">2.00</text>"), std::string::npos);
  EXPECT_NE(svg.find("moves &amp; stays"), std::string::npos);
  EXPECT_EQ(svg.rfind("<!-- generated 2020-01-01T00:00:00Z -->\n<svg", 0), 0u);
}

TEST(Heatmap, PaletteIsCentredAndMissingIsGray) {
  auto h = two_by_two();
  h.values[1][1] = std::numeric_limits<double>::quiet_NaN();
  const auto fills = cell_fills(render_heatmap(h, "t"));
  ASSERT_EQ(fills.size(), 4u);
  EXPECT_EQ(fills[0], "#bdbdbd");
  EXPECT_EQ(fills[1], "#b2182b");  // largest |log ratio| saturates
  EXPECT_EQ(fills[2], "#2166ac");
  EXPECT_EQ(fills[3], "#bdbdbd");

  Heatmap ratio;
  ratio.rows = ratio.columns = {"x"};
  ratio.values = {{1.0}};
  EXPECT_EQ(cell_fills(render_heatmap(ratio, "t")), (std::vector<std::string>{"#f7f7f7"}));
  Heatmap lo;
  lo.scale = HeatmapScale::log_odds;
  lo.rows = {"x"};
  lo.columns = {"y", "z"};
  lo.values = {{0.0, -3.0}};
  EXPECT_EQ(cell_fills(render_heatmap(lo, "t")), (std::vector<std::string>{"#f7f7f7", "#2166ac"}));
}

TEST(Heatmap, OnlyHeaderDependsOnTimestamp) {
  const auto a = render_heatmap(two_by_two(), "2020-01-01T00:00:00Z");
  const auto b = render_heatmap(two_by_two(), "2021-06-30T12:00:00Z");
  EXPECT_EQ(a.substr(a.find('\n')), b.substr(b.find('\n')));
  auto bad = two_by_two();
  bad.values.pop_back();
  EXPECT_THROW(render_heatmap(bad, "t"), Error);
}

TEST(BarChart, DrawsFiniteBarsWithErrors) {
  BarChart c;
  c.title = "AUC";
  c.labels = {"a", "b", "c"};
  c.values = {0.7, std::numeric_limits<double>::quiet_NaN(), 0.55};
  c.errors = {0.02, 0.0, 0.01};
  c.reference = 0.5;
  const auto svg = render_bar_chart(c, "t");
  EXPECT_EQ(count(svg, "fill=\"#4393c3\""), 2u);
  EXPECT_NE(svg.find(">0.70</text>"), std::string::npos);
  EXPECT_NE(svg.find("stroke-dasharray"), std::string::npos);
  c.errors = {0.1};
  EXPECT_THROW(render_bar_chart(c, "t"), Error);
}

TEST(WriteAtomic, CreatesDirectoriesAndReplaces) {
  const auto dir = fs::temp_directory_path() / fmt::format("peripatos_report_{}", ::getpid());
  const auto path = dir / "nested" / "out.txt";
  write_atomic(path, "first");
  write_atomic(path, "second");
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  EXPECT_EQ(ss.str(), "second");
  EXPECT_FALSE(fs::exists(path.string() + ".tmp"));
  fs::remove_all(dir);
}

TEST(UtcNow, Format) {
  EXPECT_TRUE(std::regex_match(utc_now(), std::regex(R"(\d{4}-\d\d-\d\dT\d\d:\d\d:\d\dZ)")));
}

}  // namespace
}  // namespace peripatos
