#pragma once

#include <optional>
#include <vector>

#include <Eigen/Core>

#include "dancecam/core/types.hpp"

namespace dancecam::ingest {

inline constexpr int kHistory = 60;
inline constexpr int kWindow = 60;

// Context around frame t: rows [0, h) are history t-h .. t-1, rows [h, h+w)
// are the window t .. t+w-1. Rows outside the sequence are zero. Tag and
// camera rows are zero for the whole window part.
struct Window {
  int t = 0;
  int h = kHistory;
  int w = kWindow;
  int pad_front = 0;   // history rows before frame 0
  int valid_future = 0;  // window rows inside the sequence
  Eigen::MatrixXd music;   // (h+w) x 35
  Eigen::MatrixXd dance;   // (h+w) x 180
  Eigen::MatrixXd tags;    // (h+w) x 1
  Eigen::MatrixXd camera;  // (h+w) x 8

  int rows() const { return h + w; }
};

// History rows of tags/camera are read from the given sources (frames < t).
Window buildWindow(const MusicTrack& music, const DanceTrack& dance, const KeyframeTags* tag_history,
                   const CameraTrack* camera_history, int t, int h = kHistory, int w = kWindow);

// Training windows at t = 0, stride, 2*stride, ... with ground-truth history.
class WindowStream {
 public:
  WindowStream(const SequenceBundle& bundle, int h = kHistory, int w = kWindow, int stride = kWindow);
  std::optional<Window> next();

 private:
  const SequenceBundle& bundle_;
  std::optional<KeyframeTags> tags_;
  int h_, w_, stride_;
  int t_ = 0;
};

std::vector<Window> makeWindows(const SequenceBundle& bundle, int h = kHistory, int w = kWindow,
                                int stride = kWindow);

}  // namespace dancecam::ingest
