#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "dancecam/nn/autograd.hpp"

namespace dancecam::nn {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
  double clip_norm = 1.0;  // global gradient norm clip; <= 0 disables
};

class Adam {
 public:
  Adam(const ParameterSet& ps, AdamConfig cfg);

  // Applies one update with the given learning-rate multiplier.
  void step(ParameterSet& ps, const Gradients& grads, double lr_scale = 1.0);
  long steps() const { return t_; }

 private:
  AdamConfig cfg_;
  std::vector<Matrix> m_, v_;
  long t_ = 0;
};

// Cosine decay from 1 to `floor` over `total` steps.
double cosineSchedule(long step, long total, double floor = 0.05);

// Single-file archive: 8-byte magic, u32 format version, u32 reserved,
// u64 header length, JSON header (caller metadata + tensor directory), then
// each tensor as little-endian float64 in column-major order.
inline constexpr unsigned kCheckpointVersion = 1;

void saveCheckpoint(const std::filesystem::path& path, const nlohmann::json& meta,
                    const ParameterSet& ps);

// Reads only the metadata block.
nlohmann::json readCheckpointMeta(const std::filesystem::path& path);

// Loads tensors into an already-constructed parameter set, matching by name
// and shape. Returns the metadata block.
nlohmann::json loadCheckpoint(const std::filesystem::path& path, ParameterSet& ps);

}  // namespace dancecam::nn
