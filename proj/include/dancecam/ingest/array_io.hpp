#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace dancecam::ingest {

// Dense float32 array file:
//   bytes 0-3  magic "DCA\x01"
//   bytes 4-7  rank (u32, little-endian)
//   then rank x u32 dims, then prod(dims) little-endian float32 values in
//   row-major order.
struct FloatArray {
  std::vector<std::uint32_t> dims;
  std::vector<float> data;

  std::size_t count() const;
};

void writeFloatArray(const std::filesystem::path& path, const FloatArray& a);
FloatArray readFloatArray(const std::filesystem::path& path);

}  // namespace dancecam::ingest
