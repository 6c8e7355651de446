#include "dancecam/data/synthetic.hpp"

#include <cmath>
#include <random>

#include <Eigen/Geometry>

#include "dancecam/core/geometry.hpp"
#include "dancecam/core/keyframes.hpp"
#include "dancecam/ingest/audio.hpp"
#include "dancecam/ingest/bundle.hpp"

namespace dancecam::data {

namespace {

constexpr double kTwoPi = 2.0 * kPi;

struct Skeleton {
  Eigen::Matrix<double, kNumJoints, 3> offset;
  Eigen::Matrix<double, kNumJoints, 3> sway;
  Eigen::Matrix<double, kNumJoints, 1> phase;
};

// One body shared by every sequence.
const Skeleton& skeleton() {
  static const Skeleton s = [] {
    Skeleton k;
    std::mt19937_64 rng(0x5eedULL);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int j = 0; j < kNumJoints; ++j) {
      k.offset.row(j) << 0.35 * u(rng), 0.85 * u(rng) - 0.05, 0.15 * u(rng);
      k.sway.row(j) << 0.10 * u(rng), 0.05 * u(rng), 0.08 * u(rng);
      k.phase(j) = kPi * u(rng);
    }
    return k;
  }();
  return s;
}

Eigen::Matrix3d yawMatrix(double yaw) {
  return Eigen::AngleAxisd(yaw, Eigen::Vector3d::UnitY()).toRotationMatrix();
}

}  // namespace

SequenceBundle makeSyntheticSequence(const std::string& name, int frames, std::uint64_t seed,
                                     const SyntheticOptions& opts) {
  if (frames < 1) throw RangeError("synthetic sequence: frames must be positive");
  if (opts.beat_period < 1 || opts.max_beats_per_shot < 1) throw RangeError("synthetic sequence: bad options");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  auto uni = [&](double a, double b) { return a + (b - a) * u01(rng); };

  SequenceBundle b;
  b.name = name;
  b.song = name;
  b.start = 0;
  b.fps = kFps;
  const int T = frames, P = opts.beat_period;

  // Keyframes on accented beats.
  KeyframeTags tags(static_cast<std::size_t>(T));
  std::uniform_int_distribution<int> beats(1, opts.max_beats_per_shot);
  for (int t = 0; t < T; t += beats(rng) * P) tags.tags[t] = 1;

  // Music.
  b.music = MusicTrack::Zero(T, kMusicDim);
  Eigen::VectorXd mfcc = Eigen::VectorXd::Zero(20);
  std::normal_distribution<double> n01(0.0, 1.0);
  int chord = 0;
  double env = 0.0;
  for (int t = 0; t < T; ++t) {
    const bool beat = t % P == 0;
    const bool accent = tags.isKey(static_cast<std::size_t>(t));
    if (t % (4 * P) == 0) chord = static_cast<int>(u01(rng) * 12.0) % 12;
    env = 0.8 * env + (accent ? 1.0 : beat ? 0.5 : 0.0);
    for (int k = 0; k < 20; ++k) mfcc(k) = 0.95 * mfcc(k) + 0.3 * n01(rng);
    b.music(t, ingest::feat::kEnvelope) = static_cast<float>(env);
    for (int k = 0; k < 20; ++k) b.music(t, ingest::feat::kMfcc + k) = static_cast<float>(mfcc(k) + (accent ? 2.0 : 0.0));
    for (int k : {0, 4, 7}) b.music(t, ingest::feat::kChroma + (chord + k) % 12) = k == 0 ? 1.0f : 0.6f;
    b.music(t, ingest::feat::kBeat) = beat ? 1.0f : 0.0f;
    b.music(t, ingest::feat::kPeak) = accent ? 1.0f : 0.0f;
  }

  // Dance.
  const Skeleton& sk = skeleton();
  const double ph1 = uni(0, kTwoPi), ph2 = uni(0, kTwoPi), ph3 = uni(0, kTwoPi);
  std::vector<Eigen::Vector3d> root(T);
  std::vector<double> facing(T);
  b.dance = DanceTrack::Zero(T, kDanceDim);
  for (int t = 0; t < T; ++t) {
    const double beat_phase = kTwoPi * t / P;
    facing[t] = 0.4 * std::sin(kTwoPi * t / 400.0 + ph3);
    root[t] << opts.root_radius * std::sin(kTwoPi * t / 300.0 + ph1), 0.9 + 0.05 * std::sin(beat_phase),
        0.6 * opts.root_radius * std::sin(kTwoPi * t / 450.0 + ph2);
    const Eigen::Matrix3d R = yawMatrix(facing[t]);
    for (int j = 0; j < kNumJoints; ++j) {
      const Eigen::Vector3d local =
          sk.offset.row(j).transpose() + std::sin(beat_phase + sk.phase(j)) * sk.sway.row(j).transpose();
      const Eigen::Vector3d p = root[t] + R * local;
      for (int c = 0; c < 3; ++c) b.dance(t, 3 * j + c) = static_cast<float>(p(c));
    }
  }

  // Camera: eased tween inside each shot, a cut at every keyframe.
  CameraTrack cam(T, kPoseDim);
  for (const Interval& iv : keyframeIntervals(canonicalize(tags))) {
    // A quarter of the shots are close-ups on the upper body.
    const bool close = u01(rng) < 0.25;
    CameraPosed a;
    a.rp = root[iv.t1] + Eigen::Vector3d(0.0, close ? uni(0.4, 0.6) : uni(0.0, 0.3), 0.0);
    a.rot << uni(-0.1, 0.3), facing[iv.t1] + kPi + uni(-0.7, 0.7), uni(-0.05, 0.05);
    a.dist = close ? uni(1.2, 2.0) : uni(3.0, 5.5);
    a.fov = close ? uni(25.0, 35.0) : uni(30.0, 50.0);
    CameraPosed e = a;
    const int L = iv.length();
    if (L > 1) {
      e.rp = root[iv.t2 - 1] + Eigen::Vector3d(0.0, a.rp.y() - root[iv.t1].y() + uni(-0.1, 0.1), 0.0);
      e.rot += Eigen::Vector3d(uni(-0.1, 0.1), uni(-0.5, 0.5), uni(-0.03, 0.03));
      e.dist = close ? std::clamp(a.dist + uni(-0.3, 0.3), 1.0, 2.2) : std::clamp(a.dist + uni(-1.0, 1.0), 2.5, 6.0);
      e.fov = std::clamp(a.fov + uni(-6.0, 6.0), 22.0, 55.0);
    }
    const bool smooth = u01(rng) < 0.5;
    const double gamma = uni(0.6, 1.8);
    for (int i = 0; i < L; ++i) {
      const double s = L > 1 ? static_cast<double>(i) / (L - 1) : 1.0;
      double rho = smooth ? s * s * (3.0 - 2.0 * s) : std::pow(s, gamma);
      if (i == 0) rho = 0.0;
      if (i == L - 1) rho = 1.0;
      setPose(cam, iv.t1 + i, interpolatePose(a, e, rho));
    }
  }
  b.camera = std::move(cam);
  b.tags = std::move(tags);
  return b;
}

std::vector<SequenceBundle> splitPieces(const SequenceBundle& song, const std::vector<int>& lengths) {
  std::vector<SequenceBundle> out;
  int start = 0;
  for (std::size_t i = 0; i < lengths.size(); ++i) {
    const int n = lengths[i];
    if (n < 1 || start + n > song.length()) throw RangeError("split_pieces: pieces exceed the sequence");
    SequenceBundle p;
    p.name = song.name + "_p" + std::to_string(i);
    p.song = song.song;
    p.start = song.start + start;
    p.fps = song.fps;
    p.music = song.music.middleRows(start, n);
    p.dance = song.dance.middleRows(start, n);
    if (song.camera) p.camera = CameraTrack(song.camera->middleRows(start, n));
    if (song.tags) {
      KeyframeTags t(static_cast<std::size_t>(n), song.tags->fps);
      std::copy(song.tags->tags.begin() + start, song.tags->tags.begin() + start + n, t.tags.begin());
      p.tags = std::move(t);
    }
    out.push_back(std::move(p));
    start += n;
  }
  return out;
}

void writeSyntheticRaw(const std::filesystem::path& dir, const DatasetOptions& opts) {
  if (opts.train_songs < 0 || opts.test_songs < 0 || opts.pieces_per_song < 1 || opts.min_piece < 1 ||
      opts.max_piece < opts.min_piece)
    throw RangeError("synthetic dataset: bad options");
  std::mt19937_64 rng(opts.seed);
  std::uniform_int_distribution<int> len(opts.min_piece, opts.max_piece);
  const int songs = opts.train_songs + opts.test_songs;
  for (int s = 0; s < songs; ++s) {
    std::vector<int> lengths(static_cast<std::size_t>(opts.pieces_per_song));
    int total = 0;
    for (int& l : lengths) total += (l = len(rng));
    char name[32];
    std::snprintf(name, sizeof name, "song%03d", s);
    const SequenceBundle song = makeSyntheticSequence(name, total, opts.seed * 1000003ULL + s, opts.sequence);
    const char* split = s < opts.train_songs ? "train" : "test";
    for (const auto& piece : splitPieces(song, lengths)) ingest::saveBundle(piece, dir / split / piece.name);
  }
}

}  // namespace dancecam::data
