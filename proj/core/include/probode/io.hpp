#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

namespace probode::io {

// Shortest text form that round-trips a double: %.17g.
std::string format_double(double v);

// UTF-8, comma-separated, header row, one record per line, LF endings.
// Floats are written with 17 significant digits so files are bit-faithful.
class CsvWriter {
 public:
  explicit CsvWriter(const std::filesystem::path& path);

  void write_header(std::span<const std::string> columns);

  template <typename... Ts>
  void write_row(Ts... values) {
    bool first = true;
    (write_cell(values, first), ...);
    out_ << '\n';
  }

 private:
  void write_cell(double v, bool& first);
  void write_cell(int v, bool& first) { write_cell(static_cast<std::int64_t>(v), first); }
  void write_cell(std::int64_t v, bool& first);
  void write_cell(std::uint64_t v, bool& first);
  void write_cell(const std::string& v, bool& first);

  std::ofstream out_;
};

void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace probode::io
