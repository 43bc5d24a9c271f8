#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace mailconv {

/// Shortest round-trip decimal for finite values; NaN renders as an empty
/// field (the missing-value marker in every table).
std::string format_number(double x);

/// Replaces tabs and line breaks so the value fits in one TSV cell.
std::string sanitize_field(std::string_view s);

std::vector<std::string_view> split_tsv(std::string_view line);

/// Parses a cell written by format_number; empty cell gives NaN.
double parse_number(std::string_view cell);

/// Tab-separated table with a one-line header.
class TsvWriter {
 public:
  TsvWriter(std::ostream& out, const std::vector<std::string>& columns);

  TsvWriter& operator<<(std::string_view text);
  TsvWriter& operator<<(const std::string& text) { return *this << std::string_view(text); }
  TsvWriter& operator<<(const char* text) { return *this << std::string_view(text); }
  TsvWriter& operator<<(double x);
  TsvWriter& operator<<(std::int64_t x);
  TsvWriter& operator<<(std::uint64_t x);
  TsvWriter& operator<<(int x) { return *this << static_cast<std::int64_t>(x); }
  TsvWriter& operator<<(unsigned x) { return *this << static_cast<std::uint64_t>(x); }
  TsvWriter& operator<<(bool x) { return *this << std::string_view(x ? "1" : "0"); }

  /// Terminates the current row; throws if the cell count is wrong.
  void end_row();

  std::size_t rows() const noexcept { return rows_; }

 private:
  void put(std::string_view cell);

  std::ostream& out_;
  std::size_t columns_;
  std::size_t cells_ = 0;
  std::size_t rows_ = 0;
};

}  // namespace mailconv
