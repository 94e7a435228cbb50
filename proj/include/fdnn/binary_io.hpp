#pragma once

// Self-describing container used by snapshot, basis, and checkpoint files:
//
//   <magic> <version>\n
//   <key> <value>\n        (any number of lines, values contain no newlines)
//   end_header\n
//   <payload>              raw float64, little-endian
//
// Keys are unique. The payload layout is defined by each file type.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace fdnn::io {

struct Header {
  std::string magic;
  int version = 1;
  std::vector<std::pair<std::string, std::string>> entries;

  void set(const std::string& key, const std::string& value);
  void set(const std::string& key, long long value);
  void set(const std::string& key, double value);

  bool has(const std::string& key) const;
  const std::string& get(const std::string& key) const;
  long long get_int(const std::string& key) const;
  double get_double(const std::string& key) const;
};

void write_header(std::ostream& out, const Header& header);
/// Reads up to and including the end_header line; throws FormatError on mismatch.
Header read_header(std::istream& in, const std::string& expected_magic);

void write_doubles(std::ostream& out, std::span<const double> values);
void read_doubles(std::istream& in, std::span<double> values);

/// Shortest decimal text that parses back to the same double.
std::string format_double(double value);

/// 64-bit FNV-1a over the file's bytes, rendered as 16 hex digits.
std::string file_hash(const std::filesystem::path& path);

}  // namespace fdnn::io
