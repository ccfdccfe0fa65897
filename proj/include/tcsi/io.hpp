#pragma once

// Text formats.
//
//   observations:  tensor3 n1 n2 n3 nnz      then nnz lines  i1 i2 i3 value   (1-based)
//   matrix:        matrix rows cols          then rows lines of cols values
//   trace CSV:     iter,seconds,cost,grad_norm_sq,step,beta,train_rmse,test_rmse
//
// Blank lines are skipped. Values are written with 17 significant digits so
// that reading them back is exact.

#include <charconv>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "tcsi/solver.hpp"

namespace tcsi {

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace detail {

inline std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t' || s[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < s.size() && s[j] != ' ' && s[j] != '\t' && s[j] != '\r') ++j;
    if (j > i) out.push_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

inline double parse_double(std::string_view tok, std::size_t line) {
  double v = 0.0;
  const char* end = tok.data() + tok.size();
  auto [ptr, ec] = std::from_chars(tok.data(), end, v);
  if (ec != std::errc() || ptr != end) throw ParseError("invalid number '" + std::string(tok) + "'", line);
  if (!std::isfinite(v)) throw ParseError("non-finite value '" + std::string(tok) + "'", line);
  return v;
}

inline long long parse_int(std::string_view tok, std::size_t line) {
  long long v = 0;
  const char* end = tok.data() + tok.size();
  auto [ptr, ec] = std::from_chars(tok.data(), end, v);
  if (ec != std::errc() || ptr != end) throw ParseError("invalid integer '" + std::string(tok) + "'", line);
  return v;
}

struct Index3Hash {
  std::size_t operator()(const Index3& ix) const noexcept {
    const auto a = static_cast<std::uint64_t>(ix[0]), b = static_cast<std::uint64_t>(ix[1]), c = static_cast<std::uint64_t>(ix[2]);
    return std::hash<std::uint64_t>{}(a ^ (b << 21) ^ (c << 42));
  }
};

// Reads the next nonblank line; returns false at end of input.
inline bool next_line(std::istream& in, std::string& line, std::size_t& lineno) {
  while (std::getline(in, line)) {
    ++lineno;
    if (!split_ws(line).empty()) return true;
  }
  return false;
}

}  // namespace detail

inline SparseTensor3 read_observations(std::istream& in) {
  std::string line;
  std::size_t lineno = 0;
  if (!detail::next_line(in, line, lineno)) throw ParseError("empty observation file", 0);
  const auto head = detail::split_ws(line);
  if (head.size() != 5 || head[0] != "tensor3") throw ParseError("expected header 'tensor3 n1 n2 n3 nnz'", lineno);
  Dims3 dims{};
  for (std::size_t m = 0; m < 3; ++m) {
    const long long d = detail::parse_int(head[m + 1], lineno);
    if (d < 1) throw ParseError("dimensions must be positive", lineno);
    dims[m] = static_cast<Index>(d);
  }
  const long long nnz = detail::parse_int(head[4], lineno);
  if (nnz < 0) throw ParseError("nnz must be nonnegative", lineno);

  std::vector<SparseTensor3::Entry> entries;
  entries.reserve(static_cast<std::size_t>(nnz));
  std::unordered_map<Index3, std::size_t, detail::Index3Hash> seen;
  seen.reserve(static_cast<std::size_t>(nnz));
  for (long long n = 0; n < nnz; ++n) {
    if (!detail::next_line(in, line, lineno))
      throw ParseError("expected " + std::to_string(nnz) + " entries, found " + std::to_string(n), lineno);
    const auto tok = detail::split_ws(line);
    if (tok.size() != 4) throw ParseError("expected 'i1 i2 i3 value'", lineno);
    Index3 ix{};
    for (std::size_t m = 0; m < 3; ++m) {
      const long long v = detail::parse_int(tok[m], lineno);
      if (v < 1 || v > dims[m])
        throw ParseError("index " + std::to_string(v) + " out of range 1.." + std::to_string(dims[m]) + " in mode " + std::to_string(m + 1), lineno);
      ix[m] = static_cast<Index>(v - 1);
    }
    const double value = detail::parse_double(tok[3], lineno);
    auto [it, fresh] = seen.emplace(ix, lineno);
    if (!fresh)
      throw ParseError("duplicate index (" + std::string(tok[0]) + "," + std::string(tok[1]) + "," + std::string(tok[2]) +
                           "), first seen on line " + std::to_string(it->second),
                       lineno);
    entries.push_back({ix, value});
  }
  if (detail::next_line(in, line, lineno)) throw ParseError("unexpected content after " + std::to_string(nnz) + " entries", lineno);
  return SparseTensor3(dims, std::move(entries));
}

inline void write_observations(std::ostream& out, const SparseTensor3& s) {
  out << "tensor3 " << s.dims()[0] << ' ' << s.dims()[1] << ' ' << s.dims()[2] << ' ' << s.nnz() << '\n';
  for (std::size_t n = 0; n < s.nnz(); ++n) {
    const Index3& ix = s.indices()[n];
    out << ix[0] + 1 << ' ' << ix[1] + 1 << ' ' << ix[2] + 1 << ' ' << format_double(s.values()[n]) << '\n';
  }
}

inline Matrix read_matrix(std::istream& in) {
  std::string line;
  std::size_t lineno = 0;
  if (!detail::next_line(in, line, lineno)) throw ParseError("empty matrix file", 0);
  const auto head = detail::split_ws(line);
  if (head.size() != 3 || head[0] != "matrix") throw ParseError("expected header 'matrix rows cols'", lineno);
  const long long rows = detail::parse_int(head[1], lineno), cols = detail::parse_int(head[2], lineno);
  if (rows < 1 || cols < 1) throw ParseError("matrix dimensions must be positive", lineno);
  Matrix m(rows, cols);
  for (long long r = 0; r < rows; ++r) {
    if (!detail::next_line(in, line, lineno))
      throw ParseError("expected " + std::to_string(rows) + " rows, found " + std::to_string(r), lineno);
    const auto tok = detail::split_ws(line);
    if (static_cast<long long>(tok.size()) != cols)
      throw ParseError("expected " + std::to_string(cols) + " values, found " + std::to_string(tok.size()), lineno);
    for (long long c = 0; c < cols; ++c) m(r, c) = detail::parse_double(tok[static_cast<std::size_t>(c)], lineno);
  }
  if (detail::next_line(in, line, lineno)) throw ParseError("unexpected content after " + std::to_string(rows) + " rows", lineno);
  return m;
}

inline void write_matrix(std::ostream& out, const Matrix& m) {
  out << "matrix " << m.rows() << ' ' << m.cols() << '\n';
  for (Index r = 0; r < m.rows(); ++r) {
    for (Index c = 0; c < m.cols(); ++c) out << (c ? " " : "") << format_double(m(r, c));
    out << '\n';
  }
}

inline constexpr std::string_view kTraceHeader = "iter,seconds,cost,grad_norm_sq,step,beta,train_rmse,test_rmse";

inline void write_trace_header(std::ostream& out) { out << kTraceHeader << '\n'; }

inline void write_trace_row(std::ostream& out, const IterTrace& t) {
  out << t.iter << ',' << format_double(t.seconds) << ',' << format_double(t.cost) << ',' << format_double(t.grad_norm_sq) << ','
      << format_double(t.step) << ',' << format_double(t.beta) << ',' << format_double(t.train_rmse) << ','
      << (t.test_rmse ? format_double(*t.test_rmse) : std::string()) << '\n';
}

inline void write_trace(std::ostream& out, const std::vector<IterTrace>& trace) {
  write_trace_header(out);
  for (const IterTrace& t : trace) write_trace_row(out, t);
}

inline std::vector<IterTrace> read_trace(std::istream& in) {
  std::string line;
  std::size_t lineno = 0;
  if (!std::getline(in, line)) throw ParseError("empty trace file", 0);
  ++lineno;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kTraceHeader) throw ParseError("unexpected trace header", lineno);
  std::vector<IterTrace> out;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string_view> f;
    std::string_view rest(line);
    for (;;) {
      const std::size_t c = rest.find(',');
      f.push_back(rest.substr(0, c));
      if (c == std::string_view::npos) break;
      rest.remove_prefix(c + 1);
    }
    if (f.size() != 8) throw ParseError("expected 8 fields, found " + std::to_string(f.size()), lineno);
    IterTrace t;
    t.iter = static_cast<int>(detail::parse_int(f[0], lineno));
    t.seconds = detail::parse_double(f[1], lineno);
    t.cost = detail::parse_double(f[2], lineno);
    t.grad_norm_sq = detail::parse_double(f[3], lineno);
    t.step = detail::parse_double(f[4], lineno);
    t.beta = detail::parse_double(f[5], lineno);
    t.train_rmse = detail::parse_double(f[6], lineno);
    if (!f[7].empty()) t.test_rmse = detail::parse_double(f[7], lineno);
    out.push_back(t);
  }
  return out;
}

template <class Reader>
auto read_file(const std::string& path, Reader reader) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open file", 0, path);
  try {
    return reader(in);
  } catch (const ParseError& e) {
    throw ParseError(e.message(), e.line(), path);
  }
}

inline SparseTensor3 read_observations_file(const std::string& path) {
  return read_file(path, [](std::istream& in) { return read_observations(in); });
}

inline Matrix read_matrix_file(const std::string& path) {
  return read_file(path, [](std::istream& in) { return read_matrix(in); });
}

}  // namespace tcsi
