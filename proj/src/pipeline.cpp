#include "dancecam/pipeline/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <sstream>

#include "dancecam/ingest/array_io.hpp"
#include "dancecam/ingest/audio.hpp"
#include "dancecam/ingest/bundle.hpp"

namespace dancecam::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kFeatureCacheVersion = 1;

std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string readBytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw FormatError("cannot read " + p.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::vector<fs::path> sortedSubdirs(const fs::path& dir) {
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_directory()) out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

MusicTrack cachedFeatures(const fs::path& wav, const fs::path& cache_dir, const std::string& key,
                          PreprocessResult& r) {
  const std::string bytes = readBytes(wav);
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx",
                static_cast<unsigned long long>(fnv1a(bytes) ^ static_cast<std::uint64_t>(kFeatureCacheVersion)));
  const fs::path cached = cache_dir / (key + "-" + hex + ".bin");
  ingest::FloatArray a;
  if (fs::exists(cached)) {
    a = ingest::readFloatArray(cached);
    ++r.cache_hits;
  } else {
    const ingest::Audio audio = ingest::readWav(wav);
    const MusicTrack m = ingest::extractMusicFeatures(audio.samples, audio.sample_rate);
    a.dims = {static_cast<std::uint32_t>(m.rows()), static_cast<std::uint32_t>(kMusicDim)};
    a.data.assign(m.data(), m.data() + m.size());
    fs::create_directories(cache_dir);
    ingest::writeFloatArray(cached, a);
    ++r.cache_misses;
  }
  if (a.dims.size() != 2 || a.dims[1] != static_cast<std::uint32_t>(kMusicDim))
    throw FormatError(cached.string() + ": bad feature cache shape");
  MusicTrack m(a.dims[0], kMusicDim);
  std::copy(a.data.begin(), a.data.end(), m.data());
  return m;
}

SequenceBundle loadPiece(const fs::path& dir, const fs::path& cache_dir, const std::string& split,
                         PreprocessResult& r) {
  if (fs::exists(dir / "music.bin")) return ingest::loadBundle(dir);
  if (fs::exists(dir / "audio.wav")) {
    const MusicTrack m = cachedFeatures(dir / "audio.wav", cache_dir, split + "-" + dir.filename().string(), r);
    return ingest::loadBundle(dir, &m);
  }
  throw FormatError("missing music.bin / audio.wav");
}

json manifestEntry(const SequenceBundle& b, const std::string& split) {
  return {{"name", b.name},
          {"path", split + "/" + b.name},
          {"song", b.song},
          {"start", b.start},
          {"frames", b.length()},
          {"camera", b.camera.has_value()},
          {"tags", b.tags.has_value()}};
}

}  // namespace

PreprocessResult preprocess(const fs::path& raw, const fs::path& out) {
  if (!fs::is_directory(raw)) throw RangeError("preprocess: raw directory " + raw.string() + " does not exist");
  if (fs::weakly_canonical(raw) == fs::weakly_canonical(out))
    throw RangeError("preprocess: output directory must differ from the raw directory");
  PreprocessResult r;
  json splits = json::object();
  std::vector<CameraTrack> train_cams;
  fs::create_directories(out);
  for (const std::string split : {"train", "test"}) {
    splits[split] = json::array();
    fs::remove_all(out / split);
    if (!fs::is_directory(raw / split)) {
      r.warnings.push_back(split + ": split directory missing");
      continue;
    }
    std::vector<SequenceBundle> pieces;
    for (const fs::path& d : sortedSubdirs(raw / split)) {
      try {
        pieces.push_back(loadPiece(d, out / "cache", split, r));
      } catch (const std::exception& e) {
        r.warnings.push_back(split + "/" + d.filename().string() + ": " + e.what());
      }
    }
    if (split == "train") {
      try {
        pieces = ingest::stitchAdjacent(std::move(pieces));
      } catch (const FormatError& e) {
        r.warnings.push_back(std::string("train: not stitched: ") + e.what());
      }
      for (const auto& p : pieces)
        if (p.camera) train_cams.push_back(*p.camera);
    } else {
      for (auto& w : ingest::checkTestPieceLengths(pieces)) r.warnings.push_back("test/" + w);
    }
    for (const auto& p : pieces) {
      ingest::saveBundle(p, out / split / p.name);
      splits[split].push_back(manifestEntry(p, split));
    }
  }
  json theta = nullptr;
  if (!train_cams.empty()) theta = metrics::thetaCut(train_cams);
  r.manifest = {{"schema", kManifestSchema}, {"splits", splits}, {"theta_cut", theta}, {"warnings", r.warnings}};
  std::ofstream(out / "manifest.json") << r.manifest.dump(2) << '\n';
  return r;
}

std::vector<SequenceBundle> loadSplit(const fs::path& data, const std::string& split) {
  const json m = ingest::readJsonFile(data / "manifest.json");
  if (m.value("schema", "") != kManifestSchema) throw FormatError(data.string() + ": unknown manifest schema");
  std::vector<SequenceBundle> out;
  for (const auto& e : m.at("splits").at(split)) out.push_back(ingest::loadBundle(data / e.at("path").get<std::string>()));
  return out;
}

double manifestThetaCut(const fs::path& data) {
  const json m = ingest::readJsonFile(data / "manifest.json");
  if (!m.contains("theta_cut") || m.at("theta_cut").is_null())
    throw FormatError(data.string() + ": manifest has no cut threshold (no training cameras)");
  return m.at("theta_cut").get<double>();
}

void RunConfig::applySeed() {
  detector.seed = seed;
  stage23.seed = seed;
}

void RunConfig::validate() const {
  if (data_root.empty() || !fs::is_directory(data_root))
    throw RangeError("run config: data_root " + data_root.string() + " does not exist");
  if (!fs::exists(data_root / "manifest.json"))
    throw RangeError("run config: " + data_root.string() + " has no manifest.json");
  for (const fs::path& p : {checkpoints, outputs}) {
    const fs::path parent = p.has_parent_path() ? p.parent_path() : fs::path(".");
    if (!fs::exists(p) && !fs::exists(parent))
      throw RangeError("run config: neither " + p.string() + " nor its parent exist");
  }
  detector.validate();
  stage23.validate();
}

namespace {

json trainOptionsJson(int epochs, int batch, double lr, double floor, long max_steps) {
  return {{"epochs", epochs}, {"batch_size", batch}, {"lr", lr}, {"lr_floor", floor}, {"max_steps", max_steps}};
}

template <typename Opt>
Opt trainOptionsFromJson(const json& j, Opt o) {
  o.epochs = j.value("epochs", o.epochs);
  o.batch_size = j.value("batch_size", o.batch_size);
  o.lr = j.value("lr", o.lr);
  o.lr_floor = j.value("lr_floor", o.lr_floor);
  o.max_steps = j.value("max_steps", o.max_steps);
  o.verbose = j.value("verbose", o.verbose);
  return o;
}

}  // namespace

json RunConfig::toJson() const {
  return {{"data_root", data_root.string()},
          {"checkpoints", checkpoints.string()},
          {"outputs", outputs.string()},
          {"seed", seed},
          {"device", device},
          {"detector", detector.toJson()},
          {"stage23", stage23.toJson()},
          {"train",
           {{"stage1", trainOptionsJson(train_stage1.epochs, train_stage1.batch_size, train_stage1.lr,
                                        train_stage1.lr_floor, train_stage1.max_steps)},
            {"stage23", trainOptionsJson(train_stage23.epochs, train_stage23.batch_size, train_stage23.lr,
                                         train_stage23.lr_floor, train_stage23.max_steps)}}}};
}

RunConfig RunConfig::fromJson(const json& j) {
  RunConfig c;
  c.data_root = j.value("data_root", std::string());
  c.checkpoints = j.value("checkpoints", c.checkpoints.string());
  c.outputs = j.value("outputs", c.outputs.string());
  c.seed = j.value("seed", c.seed);
  c.device = j.value("device", c.device);
  if (j.contains("detector")) c.detector = detector::DetectorConfig::fromJson(j.at("detector"));
  if (j.contains("stage23")) c.stage23 = stage23::Stage23Config::fromJson(j.at("stage23"));
  if (j.contains("train")) {
    const json& t = j.at("train");
    if (t.contains("stage1")) c.train_stage1 = trainOptionsFromJson(t.at("stage1"), c.train_stage1);
    if (t.contains("stage23")) c.train_stage23 = trainOptionsFromJson(t.at("stage23"), c.train_stage23);
  }
  c.applySeed();
  return c;
}

RunConfig RunConfig::load(const fs::path& p) {
  RunConfig c = fromJson(ingest::readJsonFile(p));
  // Relative paths are taken relative to the config file.
  const fs::path base = p.parent_path();
  for (fs::path* q : {&c.data_root, &c.checkpoints, &c.outputs})
    if (!q->empty() && q->is_relative()) *q = base / *q;
  return c;
}

Mode parseMode(const std::string& s) {
  if (s == "full") return Mode::Full;
  if (s == "tags-given") return Mode::TagsGiven;
  if (s == "keyframes-given") return Mode::KeyframesGiven;
  throw RangeError("unknown mode '" + s + "' (full, tags-given, keyframes-given)");
}

std::string modeName(Mode m) {
  switch (m) {
    case Mode::Full: return "full";
    case Mode::TagsGiven: return "tags-given";
    case Mode::KeyframesGiven: return "keyframes-given";
  }
  return "?";
}

SynthesisOutput synthesize(const SequenceBundle& bundle, Mode mode, const SynthesizeInputs& in) {
  if (!in.stage23) throw RangeError("synthesize: a stage23 checkpoint is required");
  const stage23::Stage23Model& model = *in.stage23;
  const int w = model.config().dims.w;
  const std::size_t T = static_cast<std::size_t>(bundle.length());
  SynthesisOutput out;
  stage23::SynthesisOptions opts;
  switch (mode) {
    case Mode::Full:
      if (!in.detector) throw RangeError("synthesize: full mode needs a keyframe detector checkpoint");
      out.tags = splitLongIntervals(canonicalize(detector::detectKeyframes(bundle, *in.detector)), w);
      break;
    case Mode::TagsGiven:
      if (!in.tags) throw RangeError("synthesize: tags-given mode needs a tags file");
      if (in.tags->size() != T) throw ShapeError("synthesize: tags length differs from the sequence");
      out.tags = splitLongIntervals(canonicalize(*in.tags), w);
      break;
    case Mode::KeyframesGiven: {
      if (in.keyframe_poses.empty()) throw RangeError("synthesize: keyframes-given mode needs keyframe poses");
      stage23::GivenKeyframes g = stage23::keyframesGiven(in.keyframe_poses, bundle.length(), w);
      out.tags = std::move(g.tags);
      opts = std::move(g.options);
      break;
    }
  }
  out.result = stage23::synthesizeCamera(bundle, out.tags, model, opts);
  return out;
}

std::map<int, CameraPosed> readKeyframePoses(const fs::path& p) {
  std::map<int, CameraPosed> out;
  for (const auto& k : ingest::keyframesFromJson(ingest::readJsonFile(p))) {
    if (out.count(k.frame)) throw FormatError(p.string() + ": duplicate keyframe " + std::to_string(k.frame));
    out[k.frame] = k.pose;
  }
  return out;
}

EvalReport evaluate(const std::vector<SequenceBundle>& refs, const std::vector<CameraTrack>& generated,
                    double theta_cut) {
  if (refs.size() != generated.size()) throw ShapeError("evaluate: generated and reference counts differ");
  if (refs.empty()) throw RangeError("evaluate: no sequences");
  EvalReport r;
  r.theta_cut = theta_cut;
  r.n_sequences = static_cast<int>(refs.size());
  std::vector<metrics::FeatureVec> gk, gs, rk, rs;
  double frames = 0.0;
  for (std::size_t i = 0; i < refs.size(); ++i) {
    const SequenceBundle& b = refs[i];
    if (!b.camera) throw FormatError("evaluate: " + b.name + " has no ground-truth camera");
    const CameraTrack& gen = generated[i];
    const double T = static_cast<double>(b.length());
    SequenceScore s{b.name, metrics::dmr(gen, b.dance), metrics::lcd(gen, *b.camera, b.dance),
                    metrics::dmr(*b.camera, b.dance)};
    r.dmr += s.dmr * T;
    r.lcd += s.lcd * T;
    r.gt_dmr += s.gt_dmr * T;
    frames += T;
    r.sequences.push_back(s);
    if (b.length() >= 3) {
      gk.push_back(metrics::kineticFeatures(gen));
      rk.push_back(metrics::kineticFeatures(*b.camera));
    }
    gs.push_back(metrics::shotFeatures(gen, b.dance, theta_cut));
    rs.push_back(metrics::shotFeatures(*b.camera, b.dance, theta_cut));
  }
  r.dmr /= frames;
  r.lcd /= frames;
  r.gt_dmr /= frames;
  if (gk.size() >= 2) {
    r.fid_k = metrics::fid(gk, rk);
    r.dist_k = metrics::diversityDist(gk);
    r.gt_dist_k = metrics::diversityDist(rk);
  }
  if (gs.size() >= 2) {
    r.fid_s = metrics::fid(gs, rs);
    r.dist_s = metrics::diversityDist(gs);
    r.gt_dist_s = metrics::diversityDist(rs);
  }
  return r;
}

namespace {

json optional(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

json EvalReport::toJson() const {
  json seqs = json::array();
  for (const auto& s : sequences) seqs.push_back({{"name", s.name}, {"dmr", s.dmr}, {"lcd", s.lcd}, {"gt_dmr", s.gt_dmr}});
  return {{"schema", kReportSchema},
          {"fid_k", optional(fid_k)},
          {"fid_s", optional(fid_s)},
          {"dist_k", optional(dist_k)},
          {"dist_s", optional(dist_s)},
          {"dmr", dmr},
          {"lcd", lcd},
          {"n_sequences", n_sequences},
          {"theta_cut", theta_cut},
          {"ground_truth", {{"dmr", gt_dmr}, {"dist_k", optional(gt_dist_k)}, {"dist_s", optional(gt_dist_s)}}},
          {"sequences", seqs}};
}

std::string EvalReport::csv() const {
  std::ostringstream os;
  os.precision(10);
  os << "name,dmr,lcd,gt_dmr\n";
  for (const auto& s : sequences) os << s.name << ',' << s.dmr << ',' << s.lcd << ',' << s.gt_dmr << '\n';
  return os.str();
}

}  // namespace dancecam::pipeline
