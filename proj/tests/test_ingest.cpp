#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "dancecam/core/geometry.hpp"
#include "dancecam/core/keyframes.hpp"
#include "dancecam/ingest/array_io.hpp"
#include "dancecam/ingest/audio.hpp"
#include "dancecam/ingest/bundle.hpp"
#include "dancecam/ingest/window.hpp"
#include "fixtures.hpp"

using namespace dancecam;
using namespace dancecam::ingest;
namespace fs = std::filesystem;

namespace {

SequenceBundle randomBundle(const std::string& name, int frames, unsigned seed, bool camera = true) {
  std::mt19937_64 rng(seed);
  SequenceBundle b;
  b.name = name;
  b.song = name;
  b.music = MusicTrack::Random(frames, kMusicDim);
  b.dance = DanceTrack::Random(frames, kDanceDim);
  if (camera) {
    CameraTrack c(frames, kPoseDim);
    for (int t = 0; t < frames; ++t) setPose(c, t, fixtures::randomPose(rng));
    b.camera = c;
  }
  b.tags = dancecam::canonicalize(KeyframeTags::fromKeyframes(frames, {frames / 3}));
  return b;
}

}  // namespace

TEST_CASE("float array round trip and bad magic") {
  fixtures::TempDir dir("arr");
  FloatArray a{{2, 3, 4}, {}};
  for (int i = 0; i < 24; ++i) a.data.push_back(static_cast<float>(i) * 0.37f - 3.0f);
  writeFloatArray(dir.path / "a.bin", a);
  const FloatArray b = readFloatArray(dir.path / "a.bin");
  CHECK(b.dims == a.dims);
  CHECK(b.data == a.data);
  CHECK(fs::file_size(dir.path / "a.bin") == 8 + 3 * 4 + 24 * 4);
  {
    std::ofstream f(dir.path / "bad.bin", std::ios::binary);
    f << "XXXX";
  }
  CHECK_THROWS_AS(readFloatArray(dir.path / "bad.bin"), FormatError);
  CHECK_THROWS(readFloatArray(dir.path / "missing.bin"));
}

TEST_CASE("bundle round trip is bit exact") {
  fixtures::TempDir dir("bundle");
  const SequenceBundle b = randomBundle("piece", 90, 1);
  saveBundle(b, dir.path / "piece");
  const SequenceBundle r = loadBundle(dir.path / "piece");
  CHECK(r.name == "piece");
  CHECK(r.music == b.music);
  CHECK(r.dance == b.dance);
  REQUIRE(r.camera);
  CHECK(*r.camera == *b.camera);
  REQUIRE(r.tags);
  CHECK(*r.tags == *b.tags);
}

TEST_CASE("bundle without camera reloads without camera") {
  fixtures::TempDir dir("nocam");
  SequenceBundle b = randomBundle("x", 40, 2, false);
  b.tags.reset();
  saveBundle(b, dir.path / "x");
  const SequenceBundle r = loadBundle(dir.path / "x");
  CHECK_FALSE(r.camera.has_value());
  CHECK_FALSE(r.tags.has_value());
}

TEST_CASE("save refuses non-finite values") {
  fixtures::TempDir dir("nan");
  SequenceBundle b = randomBundle("x", 20, 3);
  b.music(4, 2) = std::nanf("");
  CHECK_THROWS_AS(saveBundle(b, dir.path / "x"), FormatError);
  b = randomBundle("x", 20, 3);
  (*b.camera)(3, 6) = INFINITY;
  CHECK_THROWS_AS(saveBundle(b, dir.path / "x"), FormatError);
}

TEST_CASE("music and dance length mismatch is rejected") {
  fixtures::TempDir dir("mismatch");
  const SequenceBundle b = randomBundle("x", 900, 4, false);
  saveBundle(b, dir.path / "x");
  FloatArray d{{899, kNumJoints, 3}, std::vector<float>(899 * kDanceDim, 0.5f)};
  writeFloatArray(dir.path / "x" / "dance.bin", d);
  CHECK_THROWS_AS(loadBundle(dir.path / "x"), FormatError);
}

TEST_CASE("keyframe camera densifies with linear ramps and held ends") {
  const CameraPosed a = fixtures::pose(0, 0, 0, 0, 0, 0, 2, 30);
  const CameraPosed b = fixtures::pose(4, 0, 0, 0, 0, 0, 6, 50);
  const std::vector<CameraKeyframe> keys{{2, a, {}}, {6, b, {}}};
  const CameraTrack c = densifyKeyframes(keys, 9);
  CHECK(poseAt(c, 0) == a);
  CHECK(poseAt(c, 2) == a);
  CHECK(poseAt(c, 6) == b);
  CHECK(poseAt(c, 8) == b);
  CHECK(c(3, 0) == doctest::Approx(1.0));
  CHECK(c(4, 6) == doctest::Approx(4.0));
  // Stored tween values take precedence.
  const std::vector<CameraKeyframe> tweened{{0, a, {0.0, 0.5, 0.5, 0.9}}, {4, b, {}}};
  const CameraTrack d = densifyKeyframes(tweened, 5);
  CHECK(d(1, 0) == doctest::Approx(2.0));
  CHECK(d(3, 0) == doctest::Approx(3.6));
  // The keyframe form round trips through JSON and yields tags.
  const auto j = keyframesToJson(keys);
  std::vector<int> frames;
  CHECK(cameraFromJson(j, 9, &frames) == c);
  CHECK(frames == std::vector<int>{2, 6});
}

TEST_CASE("pose json rejects malformed input") {
  CHECK_THROWS_AS(poseFromJson(nlohmann::json{{"rp", {1, 2}}, {"rot", {0, 0, 0}}, {"dist", 1}, {"fov", 30}}),
                  FormatError);
  CHECK_THROWS_AS(poseFromJson(nlohmann::json{{"rp", {1, 2, 3}}}), FormatError);
  const CameraPosed p = fixtures::pose(0.1, -2.5, 1e-17, 0.3, 1.2, -0.2, 3.25, 41.5);
  CHECK(poseFromJson(poseToJson(p)) == p);
}

TEST_CASE("stitching contiguous pieces") {
  SequenceBundle a = randomBundle("s_p0", 30, 5), b = randomBundle("s_p1", 20, 6), c = randomBundle("t_p0", 10, 7);
  a.song = b.song = "s";
  c.song = "t";
  a.start = 0;
  b.start = 30;
  const auto out = stitchAdjacent({b, c, a});
  REQUIRE(out.size() == 2);
  CHECK(out[0].length() == 50);
  CHECK(out[0].music.topRows(30) == a.music);
  CHECK(out[0].music.bottomRows(20) == b.music);
  CHECK(out[0].camera->bottomRows(20) == *b.camera);
  CHECK(out[0].tags->isKey(49));
  CHECK(out[1].name == "t_p0");

  // Gap: kept separate.
  b.start = 31;
  CHECK(stitchAdjacent({a, b}).size() == 2);
  // Overlap: rejected.
  b.start = 29;
  CHECK_THROWS_AS(stitchAdjacent({a, b}), FormatError);
}

TEST_CASE("windows over a 120-frame sequence") {
  SequenceBundle b = randomBundle("w", 120, 8);
  b.tags = KeyframeTags::fromKeyframes(120, {0, 7, 33, 59, 60, 90, 119});
  const auto ws = makeWindows(b);
  REQUIRE(ws.size() == 2);
  CHECK(ws[0].t == 0);
  CHECK(ws[1].t == 60);
  CHECK(ws[0].pad_front == 60);
  CHECK(ws[0].music.topRows(60).isZero(0));
  CHECK(ws[0].tags.isZero(0));
  CHECK(ws[0].camera.isZero(0));
  CHECK(ws[0].valid_future == 60);
  const Window& w = ws[1];
  CHECK(w.pad_front == 0);
  for (int i = 0; i < 60; ++i) {
    CHECK(w.tags(i, 0) == (b.tags->isKey(i) ? 1.0 : 0.0));
    CHECK(w.camera.row(i) == b.camera->row(i));
    CHECK(w.music.row(i) == b.music.row(i).cast<double>());
  }
  for (int i = 60; i < 120; ++i) {
    CHECK(w.tags(i, 0) == 0.0);
    CHECK(w.camera.row(i).isZero(0));
    CHECK(w.music.row(i) == b.music.row(i).cast<double>());
    CHECK(w.dance.row(i) == b.dance.row(i).cast<double>());
  }
}

TEST_CASE("window past the end is zero padded") {
  const SequenceBundle b = randomBundle("w", 75, 9);
  const Window w = buildWindow(b.music, b.dance, &*b.tags, &*b.camera, 60);
  CHECK(w.valid_future == 15);
  CHECK(w.music.row(60 + 14) == b.music.row(74).cast<double>());
  CHECK(w.music.bottomRows(45).isZero(0));
  CHECK(w.dance.bottomRows(45).isZero(0));
  CHECK(w.rows() == 120);
}

TEST_CASE("audio features: silence") {
  const std::vector<float> silence(22050, 0.0f);
  const MusicTrack m = extractMusicFeatures(silence, 22050);
  REQUIRE(m.rows() == 30);
  CHECK(m.allFinite());
  CHECK(m.col(feat::kEnvelope).isZero(0));
  CHECK(m.col(feat::kBeat).isZero(0));
  CHECK(m.col(feat::kPeak).isZero(0));
  CHECK(extractMusicFeatures(std::vector<float>{}, 22050).rows() == 0);
}

TEST_CASE("audio features: a 440 Hz tone lands on pitch class A") {
  const int sr = 22050;
  std::vector<float> tone(sr);
  for (int i = 0; i < sr; ++i) tone[i] = 0.5f * static_cast<float>(std::sin(2 * kPi * 440.0 * i / sr));
  const MusicTrack m = extractMusicFeatures(tone, sr);
  REQUIRE(m.rows() == 30);
  for (int t = 0; t < m.rows(); ++t) {
    Eigen::Index arg;
    m.row(t).segment(feat::kChroma, 12).maxCoeff(&arg);
    CHECK(arg == 9);
  }
}

TEST_CASE("audio frame count is round(seconds * fps)") {
  for (int n : {1000, 22050, 33075, 44100 + 367}) {
    const std::vector<float> x(n, 0.1f);
    CHECK(extractMusicFeatures(x, 22050).rows() == std::lround(n * 30.0 / 22050));
  }
}

TEST_CASE("wav round trip") {
  fixtures::TempDir dir("wav");
  Audio a{std::vector<float>(1000), 16000};
  for (int i = 0; i < 1000; ++i) a.samples[i] = static_cast<float>(std::sin(i * 0.05));
  writeWav(dir.path / "a.wav", a);
  const Audio b = readWav(dir.path / "a.wav");
  CHECK(b.sample_rate == 16000);
  REQUIRE(b.samples.size() == 1000);
  for (int i = 0; i < 1000; ++i) CHECK(std::abs(b.samples[i] - a.samples[i]) < 1e-4);
}
