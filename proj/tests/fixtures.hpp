#pragma once

#include <cstdlib>
#include <filesystem>
#include <random>
#include <string>

#include "dancecam/core/types.hpp"

namespace fixtures {

using namespace dancecam;

inline CameraPosed pose(double x, double y, double z, double pitch, double yaw, double roll, double dist,
                        double fov) {
  CameraPosed p;
  p.rp << x, y, z;
  p.rot << pitch, yaw, roll;
  p.dist = dist;
  p.fov = fov;
  return p;
}

inline CameraPosed randomPose(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  return pose(2 * u(rng), 2 * u(rng), 2 * u(rng), 0.5 * u(rng), 3 * u(rng), 0.3 * u(rng), 3 + 2 * u(rng),
              40 + 15 * u(rng));
}

// Fresh directory under the system temp dir, removed on destruction.
struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path = std::filesystem::temp_directory_path() / ("dancecam-" + tag + "-" + std::to_string(rd()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
};

}  // namespace fixtures
