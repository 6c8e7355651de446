#include "dancecam/ingest/window.hpp"

#include <algorithm>

namespace dancecam::ingest {

Window buildWindow(const MusicTrack& music, const DanceTrack& dance, const KeyframeTags* tag_history,
                   const CameraTrack* camera_history, int t, int h, int w) {
  if (h < 0 || w <= 0) throw RangeError("window: h must be >= 0 and w > 0");
  const int T = static_cast<int>(music.rows());
  if (dance.rows() != T) throw ShapeError("window: music/dance length mismatch");
  Window win;
  win.t = t;
  win.h = h;
  win.w = w;
  win.pad_front = std::max(0, h - t);
  win.valid_future = std::clamp(T - t, 0, w);
  const int n = h + w;
  win.music = Eigen::MatrixXd::Zero(n, kMusicDim);
  win.dance = Eigen::MatrixXd::Zero(n, kDanceDim);
  win.tags = Eigen::MatrixXd::Zero(n, 1);
  win.camera = Eigen::MatrixXd::Zero(n, kPoseDim);
  for (int r = 0; r < n; ++r) {
    const int f = t - h + r;
    if (f < 0 || f >= T) continue;
    win.music.row(r) = music.row(f).cast<double>();
    win.dance.row(r) = dance.row(f).cast<double>();
    if (r < h) {
      if (tag_history && static_cast<std::size_t>(f) < tag_history->size())
        win.tags(r, 0) = tag_history->isKey(static_cast<std::size_t>(f)) ? 1.0 : 0.0;
      if (camera_history && f < camera_history->rows()) win.camera.row(r) = camera_history->row(f);
    }
  }
  return win;
}

WindowStream::WindowStream(const SequenceBundle& bundle, int h, int w, int stride)
    : bundle_(bundle), h_(h), w_(w), stride_(stride) {
  if (stride <= 0) throw RangeError("make_windows: stride must be positive");
  if (bundle.tags) tags_ = *bundle.tags;
}

std::optional<Window> WindowStream::next() {
  if (t_ >= bundle_.length()) return std::nullopt;
  Window w = buildWindow(bundle_.music, bundle_.dance, tags_ ? &*tags_ : nullptr,
                         bundle_.camera ? &*bundle_.camera : nullptr, t_, h_, w_);
  t_ += stride_;
  return w;
}

std::vector<Window> makeWindows(const SequenceBundle& bundle, int h, int w, int stride) {
  std::vector<Window> out;
  WindowStream s(bundle, h, w, stride);
  while (auto win = s.next()) out.push_back(std::move(*win));
  return out;
}

}  // namespace dancecam::ingest
