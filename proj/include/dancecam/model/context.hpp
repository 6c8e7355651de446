#pragma once

#include <vector>

#include <json.hpp>

#include "dancecam/core/types.hpp"
#include "dancecam/ingest/window.hpp"
#include "dancecam/nn/layers.hpp"

namespace dancecam::model {

// Per-channel normalization statistics shared by both models. Dance uses one
// mean/std per axis (x, y, z) over all joints so the skeleton is not warped.
struct FeatureStats {
  Eigen::VectorXd music_mean = Eigen::VectorXd::Zero(kMusicDim);
  Eigen::VectorXd music_std = Eigen::VectorXd::Ones(kMusicDim);
  Eigen::Vector3d dance_mean = Eigen::Vector3d::Zero();
  Eigen::Vector3d dance_std = Eigen::Vector3d::Ones();
  Eigen::VectorXd camera_mean = (Eigen::VectorXd(kPoseDim) << 0, 0, 0, 0, 0, 0, 1, 30).finished();
  Eigen::VectorXd camera_std = Eigen::VectorXd::Ones(kPoseDim);

  static FeatureStats compute(const std::vector<SequenceBundle>& bundles);
  nlohmann::json toJson() const;
  static FeatureStats fromJson(const nlohmann::json& j);
};

// Rows [first, end) normalized, all other rows zero.
Eigen::MatrixXd normalizeRows(const Eigen::MatrixXd& x, const Eigen::VectorXd& mean,
                              const Eigen::VectorXd& std, int first, int end);

Eigen::MatrixXd normalizedMusic(const ingest::Window& w, const FeatureStats& s);
Eigen::MatrixXd normalizedDance(const ingest::Window& w, const FeatureStats& s);
// History rows only; the window part is always zero.
Eigen::MatrixXd normalizedCameraHistory(const ingest::Window& w, const FeatureStats& s);

struct ModelDims {
  int h = ingest::kHistory;
  int w = ingest::kWindow;
  int embed_dim = 256;
  int n_layers = 4;
  int n_heads = 8;
  double dropout = 0.1;
};

// Music and pose encoders; their outputs concatenated along the feature axis
// form the decoder memory (h+w) x 2*embed_dim.
class MusicDanceContext {
 public:
  MusicDanceContext() = default;
  MusicDanceContext(nn::ParameterSet& ps, const std::string& name, int embed_dim, std::mt19937_64& rng);
  nn::Var operator()(const nn::Context& ctx, const ingest::Window& w, const FeatureStats& s) const;

 private:
  nn::StreamEncoder music_, pose_;
};

}  // namespace dancecam::model
