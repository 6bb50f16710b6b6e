// "CBRA" value-table files, little-endian:
//   magic "CBRA", version u32, n u32,
//   per dim: lo f64, hi f64, cells u32, periodic u8,
//   K+1 horizons f64, then (K+1) slices of f64, horizon-major, row-major within a slice.
// The horizon count is implied by the remaining byte count.
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "contingency/error.hpp"
#include "contingency/hj_solver.hpp"

namespace contingency {

namespace {

static_assert(std::endian::native == std::endian::little, "value-table IO assumes a little-endian host");

constexpr char kMagic[4] = {'C', 'B', 'R', 'A'};
constexpr std::uint32_t kVersion = 1;

template <class T>
void put(std::vector<char>& buf, T v) {
  const auto* p = reinterpret_cast<const char*>(&v);
  buf.insert(buf.end(), p, p + sizeof(T));
}

template <class T>
T take(const std::vector<char>& buf, std::size_t& pos) {
  if (pos + sizeof(T) > buf.size()) throw Error("value table truncated");
  T v;
  std::memcpy(&v, buf.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

}  // namespace

void ValueFunctionTable::write(const std::filesystem::path& path) const {
  std::vector<char> buf(kMagic, kMagic + 4);
  put<std::uint32_t>(buf, kVersion);
  put<std::uint32_t>(buf, static_cast<std::uint32_t>(grid_.dims()));
  for (int d = 0; d < grid_.dims(); ++d) {
    put<double>(buf, grid_.lo(d));
    put<double>(buf, grid_.hi(d));
    put<std::uint32_t>(buf, grid_.nodes(d));
    put<std::uint8_t>(buf, grid_.periodic(d) ? 1 : 0);
  }
  for (double h : horizons_) put<double>(buf, h);
  const auto* raw = reinterpret_cast<const char*>(data_.data());
  buf.insert(buf.end(), raw, raw + data_.size() * sizeof(double));
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw Error("failed writing " + path.string());
}

ValueFunctionTable ValueFunctionTable::read(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open value table " + path.string());
  const std::vector<char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (buf.size() < 12 || std::memcmp(buf.data(), kMagic, 4) != 0)
    throw Error(path.string() + " is not a CBRA value table");
  std::size_t pos = 4;
  const auto version = take<std::uint32_t>(buf, pos);
  if (version != kVersion) throw Error("unsupported CBRA version " + std::to_string(version));
  const auto n = take<std::uint32_t>(buf, pos);
  std::vector<double> lo(n), hi(n);
  std::vector<std::uint32_t> nodes(n);
  std::vector<bool> periodic(n);
  for (std::uint32_t d = 0; d < n; ++d) {
    lo[d] = take<double>(buf, pos);
    hi[d] = take<double>(buf, pos);
    nodes[d] = take<std::uint32_t>(buf, pos);
    periodic[d] = take<std::uint8_t>(buf, pos) != 0;
  }
  Grid grid(lo, hi, nodes, periodic);
  const std::size_t rest = buf.size() - pos;
  const std::size_t per_horizon = sizeof(double) * (1 + grid.size());
  if (rest == 0 || rest % per_horizon != 0) throw Error("value table payload size mismatch");
  const std::size_t count = rest / per_horizon;
  std::vector<double> horizons(count), data(count * grid.size());
  std::memcpy(horizons.data(), buf.data() + pos, count * sizeof(double));
  pos += count * sizeof(double);
  std::memcpy(data.data(), buf.data() + pos, data.size() * sizeof(double));
  return ValueFunctionTable(std::move(grid), std::move(horizons), std::move(data));
}

}  // namespace contingency
