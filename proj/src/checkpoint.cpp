#include <bit>
#include <cstring>
#include <fstream>

#include "engage/errors.hpp"
#include "engage/gnn.hpp"

namespace engage {

namespace {

constexpr char kMagic[8] = {'E', 'N', 'G', 'C', 'K', 'P', 'T', '1'};

void put_u64(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t get_u64(std::istream& in, const std::string& where) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8)) throw ParseError(where, "truncated checkpoint");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const std::vector<std::string>& names,
                     const std::vector<Matrix<double>>& values) {
  if (names.size() != values.size()) throw ConfigError("save_checkpoint: names/values length mismatch");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError(path.string(), "cannot open for writing");
  out.write(kMagic, sizeof kMagic);
  put_u64(out, names.size());
  for (std::size_t i = 0; i < names.size(); ++i) {
    put_u64(out, names[i].size());
    out.write(names[i].data(), static_cast<std::streamsize>(names[i].size()));
    put_u64(out, static_cast<std::uint64_t>(values[i].rows()));
    put_u64(out, static_cast<std::uint64_t>(values[i].cols()));
    for (Eigen::Index k = 0; k < values[i].size(); ++k) put_u64(out, std::bit_cast<std::uint64_t>(values[i].data()[k]));
  }
}

std::vector<CheckpointEntry> load_checkpoint(const std::filesystem::path& path) {
  const std::string where = path.string();
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(where, "cannot open checkpoint");
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0) throw ParseError(where, "bad checkpoint magic");
  const auto count = get_u64(in, where);
  std::vector<CheckpointEntry> out;
  for (std::uint64_t i = 0; i < count; ++i) {
    CheckpointEntry e;
    e.name.resize(get_u64(in, where));
    if (!in.read(e.name.data(), static_cast<std::streamsize>(e.name.size()))) throw ParseError(where, "truncated name");
    const auto rows = static_cast<Eigen::Index>(get_u64(in, where));
    const auto cols = static_cast<Eigen::Index>(get_u64(in, where));
    e.value.resize(rows, cols);
    for (Eigen::Index k = 0; k < e.value.size(); ++k) e.value.data()[k] = std::bit_cast<double>(get_u64(in, where));
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace engage
