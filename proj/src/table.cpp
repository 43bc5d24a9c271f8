#include "mailconv/table.hpp"

#include <charconv>
#include <cmath>
#include <limits>
#include <ostream>
#include <stdexcept>

#include <fmt/format.h>

#include "mailconv/error.hpp"

namespace mailconv {

std::string format_number(double x) {
  if (std::isnan(x)) return {};
  return fmt::format("{}", x);
}

std::string sanitize_field(std::string_view s) {
  std::string out(s);
  for (char& c : out)
    if (c == '\t' || c == '\n' || c == '\r') c = ' ';
  return out;
}

std::vector<std::string_view> split_tsv(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  for (;;) {
    const auto tab = line.find('\t', start);
    if (tab == std::string_view::npos) {
      cells.push_back(line.substr(start));
      break;
    }
    cells.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
  return cells;
}

double parse_number(std::string_view cell) {
  if (cell.empty()) return std::numeric_limits<double>::quiet_NaN();
  // GCC 11 has floating-point from_chars.
  double x = 0;
  auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), x);
  if (ec != std::errc{} || ptr != cell.data() + cell.size())
    throw InputError("not a number: '" + std::string(cell) + "'");
  return x;
}

TsvWriter::TsvWriter(std::ostream& out, const std::vector<std::string>& columns)
    : out_(out), columns_(columns.size()) {
  for (std::size_t i = 0; i < columns.size(); ++i) {
    if (i) out_ << '\t';
    out_ << columns[i];
  }
  out_ << '\n';
}

void TsvWriter::put(std::string_view cell) {
  if (cells_ == columns_) throw std::logic_error("too many cells in row");
  if (cells_) out_ << '\t';
  out_ << cell;
  ++cells_;
}

TsvWriter& TsvWriter::operator<<(std::string_view text) {
  put(sanitize_field(text));
  return *this;
}

TsvWriter& TsvWriter::operator<<(double x) {
  put(format_number(x));
  return *this;
}

TsvWriter& TsvWriter::operator<<(std::int64_t x) {
  put(fmt::format("{}", x));
  return *this;
}

TsvWriter& TsvWriter::operator<<(std::uint64_t x) {
  put(fmt::format("{}", x));
  return *this;
}

void TsvWriter::end_row() {
  if (cells_ != columns_)
    throw std::logic_error(fmt::format("row has {} cells, header has {}", cells_, columns_));
  out_ << '\n';
  cells_ = 0;
  ++rows_;
}

}  // namespace mailconv
