#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

namespace solacc::io {

/// Header of the shared binary envelope: eight little-endian float64 values
/// (magic, version, dim, M, L, seed-lo, seed-hi, reserved) followed by the
/// payload as little-endian float64.
struct EnvelopeHeader {
  static constexpr double kMagic = 1396785987.0;  // "SACC" as an integer
  static constexpr double kVersion = 1.0;

  int dim = 1;
  int points = 0;
  double length = 0.0;
  std::uint64_t seed = 0;
  double reserved = 0.0;
};

void write_envelope(const std::filesystem::path& path, const EnvelopeHeader& header,
                    std::span<const double> payload);

struct Envelope {
  EnvelopeHeader header;
  std::vector<double> payload;
};

Envelope read_envelope(const std::filesystem::path& path);

/// Minimal CSV writer with a fixed header; numbers are written with 17
/// significant digits so reruns are byte-identical.
class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, std::vector<std::string> columns);

  void row(std::span<const double> values);
  const std::vector<std::string>& columns() const { return columns_; }

 private:
  std::ofstream out_;
  std::vector<std::string> columns_;
};

std::string format_number(double value);

struct CsvTable {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;

  int column(const std::string& name) const;
};

CsvTable read_csv(const std::filesystem::path& path);

}  // namespace solacc::io
