// Copyright 2026 The Neuropool Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "neuropool/types.hpp"

namespace neuropool::io {

// Little-endian scalar I/O for the binary container formats. The host is
// little-endian (asserted in types.hpp), so raw byte copies are the wire
// format.

inline void write_u32(std::ostream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

inline void write_u64(std::ostream& out, std::uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

inline void write_f64(std::ostream& out, double v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

inline void write_string(std::ostream& out, const std::string& s) {
  write_u64(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::uint32_t read_u32(std::istream& in) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}

inline std::uint64_t read_u64(std::istream& in) {
  std::uint64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}

inline double read_f64(std::istream& in) {
  double v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}

inline std::string read_string(std::istream& in) {
  const std::uint64_t len = read_u64(in);
  if (len > (1ULL << 20)) {
    throw DataError("string field implausibly long; corrupt file?");
  }
  std::string s(len, '\0');
  in.read(s.data(), static_cast<std::streamsize>(len));
  return s;
}

/// Shortest decimal form that round-trips the exact double. Used by every
/// text export so that rereading a file reproduces identical bits.
inline std::string format_f64(double v) {
  char buf[40];
  for (int prec = 15; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
    double back = 0.0;
    std::sscanf(buf, "%lf", &back);
    if (std::memcmp(&back, &v, sizeof(double)) == 0) break;
  }
  return buf;
}

/// Splits one CSV line on commas (no quoting; none of our formats needs it).
std::vector<std::string> split_csv_line(const std::string& line);

/// Whole-file read; throws DataError when the file cannot be opened.
std::string read_text_file(const std::string& path);

}  // namespace neuropool::io
