#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace peripatos::csv {

/// Splits one RFC 4180 record. Quoted fields may contain commas and doubled
/// quotes; embedded newlines are not supported.
std::vector<std::string> split(std::string_view line);

/// Quotes a field when it contains a comma, quote, or newline.
std::string escape(std::string_view field);

/// Shortest round-trip representation; "nan"/"inf" for non-finite values.
std::string num(double v);
std::string num(std::optional<double> v);

/// Reads all records from a CSV file. The first record is the header.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Index of a header column; throws peripatos::Error when absent.
  std::size_t column(std::string_view name) const;
};

Table read(const std::filesystem::path& path);
Table read(std::istream& in);

class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}
  Writer& row(const std::vector<std::string>& fields);

 private:
  std::ostream& out_;
};

}  // namespace peripatos::csv
