#include "probode/io.hpp"

#include <cstdio>
#include <stdexcept>

namespace probode::io {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

CsvWriter::CsvWriter(const std::filesystem::path& path) : out_(path, std::ios::binary) {
  if (!out_) throw std::runtime_error("cannot open output file: " + path.string());
}

void CsvWriter::write_header(std::span<const std::string> columns) {
  bool first = true;
  for (const auto& c : columns) {
    if (!first) out_ << ',';
    out_ << c;
    first = false;
  }
  out_ << '\n';
}

void CsvWriter::write_cell(double v, bool& first) {
  if (!first) out_ << ',';
  out_ << format_double(v);
  first = false;
}

void CsvWriter::write_cell(std::int64_t v, bool& first) {
  if (!first) out_ << ',';
  out_ << v;
  first = false;
}

void CsvWriter::write_cell(std::uint64_t v, bool& first) {
  if (!first) out_ << ',';
  out_ << v;
  first = false;
}

void CsvWriter::write_cell(const std::string& v, bool& first) {
  if (!first) out_ << ',';
  out_ << v;
  first = false;
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open output file: " + path.string());
  out << text;
}

}  // namespace probode::io
