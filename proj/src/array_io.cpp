#include "dancecam/ingest/array_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <functional>
#include <numeric>

#include "dancecam/core/types.hpp"

namespace dancecam::ingest {

static_assert(std::endian::native == std::endian::little, "array IO assumes little-endian");

namespace {
constexpr char kMagic[4] = {'D', 'C', 'A', '\x01'};
constexpr std::uint32_t kMaxRank = 8;
}  // namespace

std::size_t FloatArray::count() const {
  return std::accumulate(dims.begin(), dims.end(), std::size_t{1},
                         [](std::size_t a, std::uint32_t b) { return a * b; });
}

void writeFloatArray(const std::filesystem::path& path, const FloatArray& a) {
  if (a.dims.empty() || a.dims.size() > kMaxRank) throw ShapeError("array: unsupported rank");
  if (a.count() != a.data.size()) throw ShapeError("array: dims do not match data length");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("array: cannot open " + path.string() + " for writing");
  os.write(kMagic, 4);
  const auto rank = static_cast<std::uint32_t>(a.dims.size());
  os.write(reinterpret_cast<const char*>(&rank), 4);
  os.write(reinterpret_cast<const char*>(a.dims.data()), static_cast<std::streamsize>(4 * rank));
  os.write(reinterpret_cast<const char*>(a.data.data()),
           static_cast<std::streamsize>(sizeof(float) * a.data.size()));
  if (!os) throw std::runtime_error("array: write failed for " + path.string());
}

FloatArray readFloatArray(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("array: cannot open " + path.string());
  char magic[4];
  std::uint32_t rank = 0;
  is.read(magic, 4);
  is.read(reinterpret_cast<char*>(&rank), 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0) throw FormatError("array: bad magic in " + path.string());
  if (rank == 0 || rank > kMaxRank) throw FormatError("array: bad rank in " + path.string());
  FloatArray a;
  a.dims.resize(rank);
  is.read(reinterpret_cast<char*>(a.dims.data()), static_cast<std::streamsize>(4 * rank));
  if (!is) throw FormatError("array: truncated header in " + path.string());
  a.data.resize(a.count());
  is.read(reinterpret_cast<char*>(a.data.data()),
          static_cast<std::streamsize>(sizeof(float) * a.data.size()));
  if (!is) throw FormatError("array: truncated data in " + path.string());
  is.peek();
  if (!is.eof()) throw FormatError("array: trailing bytes in " + path.string());
  return a;
}

}  // namespace dancecam::ingest
