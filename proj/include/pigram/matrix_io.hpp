#pragma once

// Probability matrix files.
//   CSV:    header y0,...,y{K-1}; one row per frame; values printed with the
//           shortest round-trip representation.
//   binary: "PMAT", version byte 1, u32 T, u32 K, T*K f64, all little-endian,
//           row-major.

#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "pigram/corpus.hpp"
#include "pigram/decoder.hpp"

namespace pigram {

inline constexpr std::uint8_t kPmatVersion = 1;

inline std::string format_matrix_csv(const ProbMatrix& m) {
  std::string out;
  for (std::size_t k = 0; k < m.cols(); ++k) out += (k ? ",y" : "y") + std::to_string(k);
  out += '\n';
  for (std::size_t t = 0; t < m.rows(); ++t) {
    for (std::size_t k = 0; k < m.cols(); ++k) {
      if (k) out += ',';
      out += format_double(m(t, k));
    }
    out += '\n';
  }
  return out;
}

inline ProbMatrix parse_matrix_csv(std::string_view text, std::vector<std::string> class_names = {}) {
  std::vector<std::vector<double>> rows;
  std::size_t line_no = 0, cols = 0;
  bool header = false;
  while (!text.empty()) {
    auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find_first_not_of(" \t") == std::string_view::npos) continue;
    std::vector<std::string_view> cells;
    for (std::size_t pos = 0;;) {
      auto comma = line.find(',', pos);
      auto cell = line.substr(pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos);
      while (!cell.empty() && (cell.front() == ' ' || cell.front() == '\t')) cell.remove_prefix(1);
      while (!cell.empty() && (cell.back() == ' ' || cell.back() == '\t')) cell.remove_suffix(1);
      cells.push_back(cell);
      if (comma == std::string_view::npos) break;
      pos = comma + 1;
    }
    if (!header) {
      for (std::size_t k = 0; k < cells.size(); ++k)
        if (cells[k] != "y" + std::to_string(k))
          throw Error(detail::concat("matrix csv line ", line_no, ": expected header column y", k, ", got '",
                                     std::string(cells[k]), "'"));
      cols = cells.size();
      header = true;
      continue;
    }
    if (cells.size() != cols)
      throw Error(detail::concat("matrix csv line ", line_no, ": expected ", cols, " values, got ", cells.size()));
    std::vector<double> row(cols);
    for (std::size_t k = 0; k < cols; ++k)
      if (!parse_double(cells[k], row[k]))
        throw Error(detail::concat("matrix csv line ", line_no, ": bad number '", std::string(cells[k]), "'"));
    rows.push_back(std::move(row));
  }
  if (!header) throw Error("matrix csv: missing header");
  if (rows.empty()) throw Error("matrix csv: no rows");
  return ProbMatrix::from_rows(rows, std::move(class_names));
}

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out += static_cast<char>((v >> (8 * i)) & 0xff);
}
inline std::uint32_t get_u32(const unsigned char* p) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return v;
}

}  // namespace detail

inline std::string format_matrix_binary(const ProbMatrix& m) {
  std::string out = "PMAT";
  out += static_cast<char>(kPmatVersion);
  detail::put_u32(out, static_cast<std::uint32_t>(m.rows()));
  detail::put_u32(out, static_cast<std::uint32_t>(m.cols()));
  for (double v : m.data()) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) out += static_cast<char>((bits >> (8 * i)) & 0xff);
  }
  return out;
}

inline ProbMatrix parse_matrix_binary(std::string_view bytes, std::vector<std::string> class_names = {}) {
  if (bytes.size() < 13 || bytes.substr(0, 4) != "PMAT") throw Error("binary matrix: missing PMAT header");
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  if (p[4] != kPmatVersion) throw Error(detail::concat("binary matrix: unsupported version ", int(p[4])));
  const std::uint64_t rows = detail::get_u32(p + 5), cols = detail::get_u32(p + 9);
  if (bytes.size() != 13 + rows * cols * 8)
    throw Error(detail::concat("binary matrix: expected ", 13 + rows * cols * 8, " bytes for ", rows, "x", cols,
                               ", got ", bytes.size()));
  std::vector<double> data(rows * cols);
  for (std::size_t i = 0; i < data.size(); ++i) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(p[13 + i * 8 + b]) << (8 * b);
    data[i] = std::bit_cast<double>(bits);
  }
  return ProbMatrix(rows, cols, std::move(data), std::move(class_names));
}

/// Loads CSV or binary by content ("PMAT" magic selects binary).
inline ProbMatrix load_matrix(const std::string& path, std::vector<std::string> class_names = {}) {
  const std::string content = read_text_file(path);
  try {
    if (content.rfind("PMAT", 0) == 0) return parse_matrix_binary(content, std::move(class_names));
    return parse_matrix_csv(content, std::move(class_names));
  } catch (const IoError&) {
    throw;
  } catch (const Error& e) {
    throw Error(path + ": " + e.what());
  }
}

/// Writes binary when `path` ends in ".pmat", CSV otherwise.
inline void save_matrix(const ProbMatrix& m, const std::string& path) {
  const bool binary = path.size() >= 5 && path.compare(path.size() - 5, 5, ".pmat") == 0;
  write_text_file(path, binary ? format_matrix_binary(m) : format_matrix_csv(m));
}

}  // namespace pigram
