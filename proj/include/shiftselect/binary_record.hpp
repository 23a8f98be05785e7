#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>

#include "json.hpp"

namespace shiftselect {

/// Self-describing binary container used for persisted models and CAP sidecars.
///
/// Layout (all integers little-endian):
///   8 bytes  magic "SHSLREC\0"
///   u32      format version
///   u64      header length, then that many bytes of UTF-8 JSON
///   u32      array count, then per array:
///            u32 name length, name bytes, u64 rows, u64 cols,
///            rows*cols IEEE-754 binary64 values, row-major, little-endian
struct BinaryRecord {
  static constexpr std::uint32_t kFormatVersion = 1;

  nlohmann::json header;
  std::map<std::string, Eigen::MatrixXd> arrays;

  const Eigen::MatrixXd& array(const std::string& name) const;

  void write(std::ostream& out) const;
  static BinaryRecord read(std::istream& in);

  void save(const std::filesystem::path& path) const;
  static BinaryRecord load(const std::filesystem::path& path);
};

}  // namespace shiftselect
