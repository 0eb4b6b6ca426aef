#include "solacc/io.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace solacc::io {

namespace {

std::uint64_t to_little(std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    std::uint64_t r = 0;
    for (int i = 0; i < 8; ++i) r |= ((v >> (8 * i)) & 0xffu) << (8 * (7 - i));
    return r;
  }
}

void put(std::ofstream& out, double value) {
  auto bits = to_little(std::bit_cast<std::uint64_t>(value));
  out.write(reinterpret_cast<const char*>(&bits), sizeof bits);
}

double get(std::ifstream& in) {
  std::uint64_t bits = 0;
  in.read(reinterpret_cast<char*>(&bits), sizeof bits);
  if (!in) throw std::runtime_error("truncated binary envelope");
  return std::bit_cast<double>(to_little(bits));
}

}  // namespace

void write_envelope(const std::filesystem::path& path, const EnvelopeHeader& header,
                    std::span<const double> payload) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  put(out, EnvelopeHeader::kMagic);
  put(out, EnvelopeHeader::kVersion);
  put(out, header.dim);
  put(out, header.points);
  put(out, header.length);
  put(out, static_cast<double>(header.seed & 0xffffffffu));
  put(out, static_cast<double>(header.seed >> 32));
  put(out, header.reserved);
  for (double v : payload) put(out, v);
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

Envelope read_envelope(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  if (get(in) != EnvelopeHeader::kMagic) throw std::runtime_error("bad envelope magic");
  if (get(in) != EnvelopeHeader::kVersion) throw std::runtime_error("unsupported envelope version");
  Envelope env;
  env.header.dim = static_cast<int>(get(in));
  env.header.points = static_cast<int>(get(in));
  env.header.length = get(in);
  const auto lo = static_cast<std::uint64_t>(get(in));
  const auto hi = static_cast<std::uint64_t>(get(in));
  env.header.seed = lo | (hi << 32);
  env.header.reserved = get(in);
  const auto start = in.tellg();
  in.seekg(0, std::ios::end);
  const auto bytes = static_cast<std::size_t>(in.tellg() - start);
  in.seekg(start);
  env.payload.resize(bytes / 8);
  for (auto& v : env.payload) v = get(in);
  return env;
}

std::string format_number(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, value, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

CsvWriter::CsvWriter(const std::filesystem::path& path, std::vector<std::string> columns)
    : out_(path, std::ios::trunc), columns_(std::move(columns)) {
  if (!out_) throw std::runtime_error("cannot open " + path.string() + " for writing");
  for (std::size_t i = 0; i < columns_.size(); ++i) out_ << (i ? "," : "") << columns_[i];
  out_ << '\n';
}

void CsvWriter::row(std::span<const double> values) {
  if (values.size() != columns_.size())
    throw std::invalid_argument("CSV row width does not match header");
  for (std::size_t i = 0; i < values.size(); ++i)
    out_ << (i ? "," : "") << format_number(values[i]);
  out_ << '\n';
}

int CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < columns.size(); ++i)
    if (columns[i] == name) return static_cast<int>(i);
  throw std::out_of_range("no CSV column named " + name);
}

CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  CsvTable table;
  std::string line;
  if (!std::getline(in, line)) return table;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) table.columns.push_back(cell);
  }
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> row;
    while (std::getline(ss, cell, ',')) {
      if (cell == "nan") row.push_back(std::numeric_limits<double>::quiet_NaN());
      else row.push_back(std::stod(cell));
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

}  // namespace solacc::io
