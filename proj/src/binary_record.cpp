#include "shiftselect/binary_record.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace shiftselect {

namespace {

constexpr std::array<char, 8> kMagic = {'S', 'H', 'S', 'L', 'R', 'E', 'C', '\0'};

template <typename T>
void put_le(std::ostream& out, T value) {
  static_assert(std::is_unsigned_v<T>);
  std::array<char, sizeof(T)> bytes{};
  for (std::size_t i = 0; i < sizeof(T); ++i) bytes[i] = static_cast<char>((value >> (8 * i)) & 0xFF);
  out.write(bytes.data(), bytes.size());
}

template <typename T>
T get_le(std::istream& in) {
  std::array<unsigned char, sizeof(T)> bytes{};
  in.read(reinterpret_cast<char*>(bytes.data()), bytes.size());
  if (!in) throw std::runtime_error("binary record: truncated input");
  T value = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) value |= static_cast<T>(bytes[i]) << (8 * i);
  return value;
}

void put_string(std::ostream& out, const std::string& s) {
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_bytes(std::istream& in, std::size_t n) {
  std::string s(n, '\0');
  in.read(s.data(), static_cast<std::streamsize>(n));
  if (!in) throw std::runtime_error("binary record: truncated input");
  return s;
}

}  // namespace

const Eigen::MatrixXd& BinaryRecord::array(const std::string& name) const {
  const auto it = arrays.find(name);
  if (it == arrays.end()) throw std::runtime_error("binary record: missing array '" + name + "'");
  return it->second;
}

void BinaryRecord::write(std::ostream& out) const {
  out.write(kMagic.data(), kMagic.size());
  put_le<std::uint32_t>(out, kFormatVersion);
  const std::string text = header.dump();
  put_le<std::uint64_t>(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(arrays.size()));
  for (const auto& [name, m] : arrays) {
    put_string(out, name);
    put_le<std::uint64_t>(out, static_cast<std::uint64_t>(m.rows()));
    put_le<std::uint64_t>(out, static_cast<std::uint64_t>(m.cols()));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c)
        put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(m(r, c)));
  }
}

BinaryRecord BinaryRecord::read(std::istream& in) {
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kMagic) throw std::runtime_error("binary record: bad magic");
  const auto version = get_le<std::uint32_t>(in);
  if (version != kFormatVersion)
    throw std::runtime_error("binary record: unsupported format version " + std::to_string(version));
  BinaryRecord rec;
  const auto header_len = get_le<std::uint64_t>(in);
  rec.header = nlohmann::json::parse(get_bytes(in, header_len));
  const auto n_arrays = get_le<std::uint32_t>(in);
  for (std::uint32_t a = 0; a < n_arrays; ++a) {
    const auto name_len = get_le<std::uint32_t>(in);
    std::string name = get_bytes(in, name_len);
    const auto rows = static_cast<Eigen::Index>(get_le<std::uint64_t>(in));
    const auto cols = static_cast<Eigen::Index>(get_le<std::uint64_t>(in));
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = std::bit_cast<double>(get_le<std::uint64_t>(in));
    rec.arrays.emplace(std::move(name), std::move(m));
  }
  return rec;
}

void BinaryRecord::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write(out);
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

BinaryRecord BinaryRecord::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return read(in);
}

}  // namespace shiftselect
