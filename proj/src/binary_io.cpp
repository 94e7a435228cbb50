#include "fdnn/binary_io.hpp"

#include <array>
#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>

#include "fdnn/error.hpp"

namespace fdnn::io {

namespace {

constexpr const char* kEndHeader = "end_header";

std::uint64_t to_little_endian(std::uint64_t bits) {
  if constexpr (std::endian::native == std::endian::little) {
    return bits;
  } else {
    std::uint64_t out = 0;
    for (int i = 0; i < 8; ++i) {
      out = (out << 8) | ((bits >> (8 * i)) & 0xffu);
    }
    return out;
  }
}

}  // namespace

void Header::set(const std::string& key, const std::string& value) {
  if (key.empty() || key.find_first_of(" \t\n") != std::string::npos) {
    throw FormatError("header key must be a single non-empty token: '" + key + "'");
  }
  if (value.find('\n') != std::string::npos) {
    throw FormatError("header value for '" + key + "' contains a newline");
  }
  for (auto& [k, v] : entries) {
    if (k == key) {
      v = value;
      return;
    }
  }
  entries.emplace_back(key, value);
}

void Header::set(const std::string& key, long long value) { set(key, std::to_string(value)); }

void Header::set(const std::string& key, double value) { set(key, format_double(value)); }

bool Header::has(const std::string& key) const {
  for (const auto& [k, v] : entries) {
    if (k == key) return true;
  }
  return false;
}

const std::string& Header::get(const std::string& key) const {
  for (const auto& [k, v] : entries) {
    if (k == key) return v;
  }
  throw FormatError(magic + " header is missing key '" + key + "'");
}

long long Header::get_int(const std::string& key) const {
  const auto& text = get(key);
  long long value = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size()) {
    throw FormatError("header key '" + key + "' is not an integer: '" + text + "'");
  }
  return value;
}

double Header::get_double(const std::string& key) const {
  const auto& text = get(key);
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size()) {
    throw FormatError("header key '" + key + "' is not a number: '" + text + "'");
  }
  return value;
}

void write_header(std::ostream& out, const Header& header) {
  out << header.magic << ' ' << header.version << '\n';
  for (const auto& [k, v] : header.entries) {
    out << k << ' ' << v << '\n';
  }
  out << kEndHeader << '\n';
}

Header read_header(std::istream& in, const std::string& expected_magic) {
  Header header;
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) {
    throw FormatError("empty file, expected " + expected_magic + " header", 1);
  }
  ++line_no;
  {
    std::istringstream first(line);
    if (!(first >> header.magic >> header.version) || header.magic != expected_magic) {
      throw FormatError("expected '" + expected_magic + " <version>', found '" + line + "'", line_no);
    }
  }
  while (std::getline(in, line)) {
    ++line_no;
    if (line == kEndHeader) return header;
    auto space = line.find(' ');
    if (space == std::string::npos || space == 0) {
      throw FormatError("malformed header line '" + line + "'", line_no);
    }
    std::string key = line.substr(0, space);
    if (header.has(key)) throw FormatError("duplicate header key '" + key + "'", line_no);
    header.entries.emplace_back(key, line.substr(space + 1));
  }
  throw FormatError("header of " + expected_magic + " is not terminated by end_header", line_no);
}

void write_doubles(std::ostream& out, std::span<const double> values) {
  std::vector<char> buffer(values.size() * 8);
  for (std::size_t i = 0; i < values.size(); ++i) {
    auto bits = to_little_endian(std::bit_cast<std::uint64_t>(values[i]));
    std::memcpy(buffer.data() + 8 * i, &bits, 8);
  }
  out.write(buffer.data(), static_cast<std::streamsize>(buffer.size()));
  if (!out) throw FormatError("failed writing binary payload");
}

void read_doubles(std::istream& in, std::span<double> values) {
  std::vector<char> buffer(values.size() * 8);
  in.read(buffer.data(), static_cast<std::streamsize>(buffer.size()));
  if (in.gcount() != static_cast<std::streamsize>(buffer.size())) {
    throw FormatError("binary payload truncated: expected " + std::to_string(values.size()) +
                      " float64 values");
  }
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::uint64_t bits = 0;
    std::memcpy(&bits, buffer.data() + 8 * i, 8);
    values[i] = std::bit_cast<double>(to_little_endian(bits));
  }
}

std::string format_double(double value) {
  std::array<char, 64> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value);
  return std::string(buf.data(), ptr);
}

std::string file_hash(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path.string() + "' for hashing");
  std::uint64_t hash = 1469598103934665603ull;
  std::array<char, 1 << 16> chunk{};
  while (in) {
    in.read(chunk.data(), chunk.size());
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      hash ^= static_cast<unsigned char>(chunk[static_cast<std::size_t>(i)]);
      hash *= 1099511628211ull;
    }
  }
  std::ostringstream hex;
  hex << std::hex << std::setw(16) << std::setfill('0') << hash;
  return hex.str();
}

}  // namespace fdnn::io
