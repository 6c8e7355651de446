#include "dancecam/ingest/bundle.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "dancecam/core/keyframes.hpp"
#include "dancecam/ingest/array_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace dancecam::ingest {

json readJsonFile(const fs::path& p) {
  std::ifstream is(p);
  if (!is) throw FormatError("cannot open " + p.string());
  try {
    return json::parse(is);
  } catch (const json::exception& e) {
    throw FormatError(p.string() + ": " + e.what());
  }
}

void writeJsonFile(const fs::path& p, const json& j) {
  std::ofstream os(p);
  if (!os) throw std::runtime_error("cannot open " + p.string() + " for writing");
  os << j.dump(1) << '\n';
  if (!os) throw std::runtime_error("write failed for " + p.string());
}

json poseToJson(const CameraPosed& p) {
  return {{"rp", {p.rp.x(), p.rp.y(), p.rp.z()}},
          {"rot", {p.rot.x(), p.rot.y(), p.rot.z()}},
          {"dist", p.dist},
          {"fov", p.fov}};
}

CameraPosed poseFromJson(const json& j) {
  CameraPosed p;
  try {
    const auto rp = j.at("rp").get<std::vector<double>>();
    const auto rot = j.at("rot").get<std::vector<double>>();
    if (rp.size() != 3 || rot.size() != 3) throw FormatError("camera pose: rp/rot must have 3 entries");
    p.rp = Vec3<double>(rp[0], rp[1], rp[2]);
    p.rot = Vec3<double>(rot[0], rot[1], rot[2]);
    p.dist = j.at("dist").get<double>();
    p.fov = j.at("fov").get<double>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("camera pose: ") + e.what());
  }
  if (!p.toVector().allFinite()) throw FormatError("camera pose: non-finite value");
  return p;
}

json cameraToJson(const CameraTrack& camera, int fps) {
  json frames = json::array();
  for (Eigen::Index t = 0; t < camera.rows(); ++t) frames.push_back(poseToJson(poseAt(camera, t)));
  return {{"fps", fps}, {"frames", std::move(frames)}};
}

json keyframesToJson(const std::vector<CameraKeyframe>& keys, int fps) {
  json arr = json::array();
  for (const auto& k : keys) {
    json e = poseToJson(k.pose);
    e["frame"] = k.frame;
    if (!k.tween.empty()) e["tween"] = k.tween;
    arr.push_back(std::move(e));
  }
  return {{"fps", fps}, {"keyframes", std::move(arr)}};
}

std::vector<CameraKeyframe> keyframesFromJson(const json& j) {
  std::vector<CameraKeyframe> keys;
  for (const auto& e : j.at("keyframes")) {
    CameraKeyframe k;
    k.frame = e.at("frame").get<int>();
    k.pose = poseFromJson(e);
    if (e.contains("tween")) k.tween = e.at("tween").get<std::vector<double>>();
    keys.push_back(std::move(k));
  }
  std::sort(keys.begin(), keys.end(),
            [](const CameraKeyframe& a, const CameraKeyframe& b) { return a.frame < b.frame; });
  for (std::size_t i = 1; i < keys.size(); ++i)
    if (keys[i].frame == keys[i - 1].frame)
      throw FormatError("camera keyframes: duplicate frame " + std::to_string(keys[i].frame));
  return keys;
}

CameraTrack densifyKeyframes(const std::vector<CameraKeyframe>& keys, Eigen::Index length) {
  if (keys.empty()) throw FormatError("camera keyframes: empty keyframe list");
  CameraTrack out(length, kPoseDim);
  for (Eigen::Index t = 0; t < length; ++t) {
    if (t <= keys.front().frame) {
      setPose(out, t, keys.front().pose);
      continue;
    }
    if (t >= keys.back().frame) {
      setPose(out, t, keys.back().pose);
      continue;
    }
    const auto next = std::upper_bound(keys.begin(), keys.end(), t,
                                       [](Eigen::Index f, const CameraKeyframe& k) { return f < k.frame; });
    const CameraKeyframe& a = *(next - 1);
    const CameraKeyframe& b = *next;
    const int gap = b.frame - a.frame;
    const int off = static_cast<int>(t) - a.frame;
    const double rho = static_cast<int>(a.tween.size()) == gap ? a.tween[off]
                                                              : static_cast<double>(off) / gap;
    setPose(out, t, interpolatePose(a.pose, b.pose, rho));
  }
  return out;
}

CameraTrack cameraFromJson(const json& j, Eigen::Index length, std::vector<int>* keyframe_frames) {
  if (j.contains("frames")) {
    const auto& frames = j.at("frames");
    CameraTrack out(static_cast<Eigen::Index>(frames.size()), kPoseDim);
    for (std::size_t t = 0; t < frames.size(); ++t)
      setPose(out, static_cast<Eigen::Index>(t), poseFromJson(frames[t]));
    return out;
  }
  if (j.contains("keyframes")) {
    const auto keys = keyframesFromJson(j);
    if (keyframe_frames) {
      keyframe_frames->clear();
      for (const auto& k : keys) keyframe_frames->push_back(k.frame);
    }
    return densifyKeyframes(keys, length);
  }
  throw FormatError("camera file: expected 'frames' or 'keyframes'");
}

json tagsToJson(const KeyframeTags& tags) {
  return {{"fps", tags.fps}, {"keyframes", tags.keyframes()}};
}

KeyframeTags tagsFromJson(const json& j, std::size_t length) {
  try {
    return KeyframeTags::fromKeyframes(length, j.at("keyframes").get<std::vector<int>>(),
                                       j.value("fps", kFps));
  } catch (const json::exception& e) {
    throw FormatError(std::string("tags file: ") + e.what());
  }
}

namespace {

template <typename Track>
Track trackFromArray(const FloatArray& a, const std::vector<std::uint32_t>& trailing,
                     const std::string& what) {
  if (a.dims.size() != trailing.size() + 1 ||
      !std::equal(trailing.begin(), trailing.end(), a.dims.begin() + 1))
    throw FormatError(what + ": unexpected array shape");
  Track t(static_cast<Eigen::Index>(a.dims[0]), Track::ColsAtCompileTime);
  std::copy(a.data.begin(), a.data.end(), t.data());
  if (!t.allFinite()) throw FormatError(what + ": non-finite values");
  return t;
}

template <typename Track>
FloatArray arrayFromTrack(const Track& t, std::vector<std::uint32_t> trailing) {
  FloatArray a;
  a.dims.push_back(static_cast<std::uint32_t>(t.rows()));
  a.dims.insert(a.dims.end(), trailing.begin(), trailing.end());
  a.data.assign(t.data(), t.data() + t.size());
  return a;
}

DanceTrack danceFromJson(const json& j) {
  const auto& frames = j.at("frames");
  DanceTrack d(static_cast<Eigen::Index>(frames.size()), kDanceDim);
  for (std::size_t t = 0; t < frames.size(); ++t) {
    const auto& f = frames[t];
    if (f.size() != kNumJoints) throw FormatError("dance.json: expected 60 joints per frame");
    for (int k = 0; k < kNumJoints; ++k) {
      const auto xyz = f[k].get<std::vector<float>>();
      if (xyz.size() != 3) throw FormatError("dance.json: joint must have 3 coordinates");
      for (int c = 0; c < 3; ++c) d(static_cast<Eigen::Index>(t), 3 * k + c) = xyz[c];
    }
  }
  if (!d.allFinite()) throw FormatError("dance.json: non-finite values");
  return d;
}

}  // namespace

SequenceBundle loadBundle(const fs::path& dir) { return loadBundle(dir, nullptr); }

SequenceBundle loadBundle(const fs::path& dir, const MusicTrack* music) {
  SequenceBundle b;
  b.name = dir.filename().string();
  if (fs::exists(dir / "meta.json")) {
    const json meta = readJsonFile(dir / "meta.json");
    b.name = meta.value("name", b.name);
    b.song = meta.value("song", b.name);
    b.start = meta.value("start", 0);
    b.fps = meta.value("fps", kFps);
  } else {
    b.song = b.name;
  }
  if (b.fps != kFps) throw FormatError(dir.string() + ": fps must be 30");

  if (music) {
    if (!music->allFinite()) throw FormatError(dir.string() + ": non-finite music features");
    b.music = *music;
  } else {
    b.music = trackFromArray<MusicTrack>(readFloatArray(dir / "music.bin"), {kMusicDim}, "music.bin");
  }
  if (fs::exists(dir / "dance.bin")) {
    b.dance = trackFromArray<DanceTrack>(readFloatArray(dir / "dance.bin"), {kNumJoints, 3}, "dance.bin");
  } else if (fs::exists(dir / "dance.json")) {
    b.dance = danceFromJson(readJsonFile(dir / "dance.json"));
  } else {
    throw FormatError(dir.string() + ": missing dance.bin / dance.json");
  }
  const Eigen::Index T = b.music.rows();
  if (b.dance.rows() != T)
    throw FormatError(dir.string() + ": dance has " + std::to_string(b.dance.rows()) +
                      " frames but music has " + std::to_string(T));
  if (T == 0) throw FormatError(dir.string() + ": empty sequence");

  std::vector<int> key_frames;
  if (fs::exists(dir / "camera.json")) {
    CameraTrack cam = cameraFromJson(readJsonFile(dir / "camera.json"), T, &key_frames);
    if (cam.rows() != T)
      throw FormatError(dir.string() + ": camera has " + std::to_string(cam.rows()) +
                        " frames but music has " + std::to_string(T));
    b.camera = std::move(cam);
  }
  if (fs::exists(dir / "tags.json")) {
    b.tags = tagsFromJson(readJsonFile(dir / "tags.json"), static_cast<std::size_t>(T));
  } else if (!key_frames.empty()) {
    std::vector<int> in_range;
    for (int f : key_frames)
      if (f >= 0 && f < T) in_range.push_back(f);
    b.tags = KeyframeTags::fromKeyframes(static_cast<std::size_t>(T), in_range);
  }
  return b;
}

void saveBundle(const SequenceBundle& b, const fs::path& dir) {
  const Eigen::Index T = b.music.rows();
  if (b.dance.rows() != T) throw ShapeError("save_bundle: dance/music length mismatch");
  if (!b.music.allFinite() || !b.dance.allFinite())
    throw FormatError("save_bundle: non-finite music or dance values");
  if (b.camera) {
    if (b.camera->rows() != T) throw ShapeError("save_bundle: camera length mismatch");
    if (!b.camera->allFinite()) throw FormatError("save_bundle: non-finite camera values");
  }
  if (b.tags && b.tags->size() != static_cast<std::size_t>(T))
    throw ShapeError("save_bundle: tags length mismatch");

  fs::create_directories(dir);
  writeJsonFile(dir / "meta.json", {{"name", b.name}, {"song", b.song}, {"start", b.start}, {"fps", b.fps}});
  writeFloatArray(dir / "music.bin", arrayFromTrack(b.music, {kMusicDim}));
  writeFloatArray(dir / "dance.bin", arrayFromTrack(b.dance, {kNumJoints, 3}));
  if (b.camera) {
    writeJsonFile(dir / "camera.json", cameraToJson(*b.camera, b.fps));
  } else {
    fs::remove(dir / "camera.json");
  }
  if (b.tags) {
    writeJsonFile(dir / "tags.json", tagsToJson(*b.tags));
  } else {
    fs::remove(dir / "tags.json");
  }
}

std::vector<SequenceBundle> stitchAdjacent(std::vector<SequenceBundle> pieces) {
  std::stable_sort(pieces.begin(), pieces.end(), [](const SequenceBundle& a, const SequenceBundle& b) {
    return a.song != b.song ? a.song < b.song : a.start < b.start;
  });
  std::vector<SequenceBundle> out;
  for (auto& p : pieces) {
    if (!out.empty() && out.back().song == p.song) {
      SequenceBundle& prev = out.back();
      const long end = prev.start + static_cast<long>(prev.length());
      if (end > p.start)
        throw FormatError("stitch: pieces " + prev.name + " and " + p.name + " overlap in song " + p.song);
      if (end == p.start) {
        const Eigen::Index n0 = prev.length(), n1 = p.length();
        MusicTrack m(n0 + n1, kMusicDim);
        m << prev.music, p.music;
        DanceTrack d(n0 + n1, kDanceDim);
        d << prev.dance, p.dance;
        if (prev.camera && p.camera) {
          CameraTrack c(n0 + n1, kPoseDim);
          c << *prev.camera, *p.camera;
          prev.camera = std::move(c);
        } else {
          prev.camera.reset();
        }
        if (prev.tags && p.tags) {
          KeyframeTags k = *prev.tags;
          k.tags.insert(k.tags.end(), p.tags->tags.begin(), p.tags->tags.end());
          prev.tags = canonicalize(std::move(k));
        } else {
          prev.tags.reset();
        }
        prev.music = std::move(m);
        prev.dance = std::move(d);
        prev.name += "+" + p.name;
        continue;
      }
    }
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<std::string> checkTestPieceLengths(const std::vector<SequenceBundle>& pieces) {
  std::vector<std::string> warnings;
  for (const auto& p : pieces) {
    if (p.length() < 17 * kFps || p.length() > 35 * kFps) {
      std::ostringstream s;
      s << p.name << ": length " << p.length() << " frames outside [" << 17 * kFps << ", "
        << 35 * kFps << "]";
      warnings.push_back(s.str());
    }
  }
  return warnings;
}

}  // namespace dancecam::ingest
