#include <doctest.h>

#include <fstream>
#include <iterator>
#include <random>
#include <thread>

#include "dancecam/data/synthetic.hpp"
#include "dancecam/ingest/array_io.hpp"
#include "dancecam/ingest/audio.hpp"
#include "dancecam/ingest/bundle.hpp"
#include "dancecam/pipeline/pipeline.hpp"
#include "dancecam/pipeline/service.hpp"
#include "fixtures.hpp"

// After Eigen: resolv.h, pulled in here, defines _res.
#include <httplib.h>

using namespace dancecam;
using namespace dancecam::pipeline;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

stage23::Stage23Config smallStage23() {
  stage23::Stage23Config c;
  c.dims.embed_dim = 16;
  c.dims.n_layers = 1;
  c.dims.n_heads = 2;
  c.dims.dropout = 0.0;
  return c;
}

detector::DetectorConfig smallDetector() {
  detector::DetectorConfig c;
  c.dims.embed_dim = 16;
  c.dims.n_layers = 1;
  c.dims.n_heads = 2;
  c.dims.dropout = 0.0;
  return c;
}

// Piece whose music comes from a WAV file instead of music.bin.
void writeAudioPiece(const SequenceBundle& b, const fs::path& dir) {
  ingest::saveBundle(b, dir);
  fs::remove(dir / "music.bin");
  const int sr = 8000;
  ingest::Audio a{std::vector<float>(static_cast<std::size_t>(b.length()) * sr / kFps), sr};
  for (std::size_t i = 0; i < a.samples.size(); ++i)
    a.samples[i] = 0.3f * static_cast<float>(std::sin(2 * kPi * 220.0 * i / sr)) * (i % 4000 < 400 ? 1.0f : 0.2f);
  ingest::writeWav(dir / "audio.wav", a);
}

CameraPosed cameraFrame(const json& camera, int t) { return ingest::poseFromJson(camera.at("frames").at(t)); }

}  // namespace

TEST_CASE("preprocess keeps valid pieces, warns on a corrupt one and is reproducible") {
  fixtures::TempDir tmp("prep");
  const fs::path raw = tmp.path / "raw", out = tmp.path / "data";
  ingest::saveBundle(data::makeSyntheticSequence("alpha", 540, 1), raw / "train" / "alpha");
  writeAudioPiece(data::makeSyntheticSequence("beta", 540, 2), raw / "train" / "beta");
  ingest::saveBundle(data::makeSyntheticSequence("gamma", 540, 3), raw / "test" / "gamma");
  ingest::saveBundle(data::makeSyntheticSequence("delta", 540, 4), raw / "test" / "delta");
  {
    std::ofstream f(raw / "test" / "delta" / "music.bin", std::ios::binary | std::ios::trunc);
    f << "garbage";
  }
  const PreprocessResult r = preprocess(raw, out);
  CHECK(r.manifest.at("schema") == kManifestSchema);
  CHECK(r.manifest.at("splits").at("train").size() == 2);
  CHECK(r.manifest.at("splits").at("test").size() == 1);
  REQUIRE(r.warnings.size() == 1);
  CHECK(r.warnings[0].find("delta") != std::string::npos);
  CHECK(r.cache_misses == 1);
  CHECK(r.manifest.at("theta_cut").is_number());

  const std::string manifest = slurp(out / "manifest.json");
  const std::string bundle = slurp(out / "train" / "beta" / "music.bin");
  const PreprocessResult again = preprocess(raw, out);
  CHECK(again.cache_hits == 1);
  CHECK(again.cache_misses == 0);
  CHECK(slurp(out / "manifest.json") == manifest);
  CHECK(slurp(out / "train" / "beta" / "music.bin") == bundle);

  const auto train = loadSplit(out, "train");
  REQUIRE(train.size() == 2);
  CHECK(train[1].music.rows() == 540);
  CHECK(manifestThetaCut(out) == r.manifest.at("theta_cut").get<double>());
  CHECK_THROWS(preprocess(raw, raw));
}

TEST_CASE("preprocess stitches adjacent training pieces") {
  fixtures::TempDir tmp("stitch");
  const fs::path raw = tmp.path / "raw", out = tmp.path / "data";
  const SequenceBundle song = data::makeSyntheticSequence("song", 600, 5);
  for (const auto& p : data::splitPieces(song, {300, 300})) ingest::saveBundle(p, raw / "train" / p.name);
  fs::create_directories(raw / "test");
  const PreprocessResult r = preprocess(raw, out);
  const json& train = r.manifest.at("splits").at("train");
  REQUIRE(train.size() == 1);
  CHECK(train[0].at("frames") == 600);
  const auto b = loadSplit(out, "train");
  CHECK(b[0].music == song.music);
  CHECK(*b[0].camera == *song.camera);
}

TEST_CASE("run config json and relative paths") {
  fixtures::TempDir tmp("cfg");
  RunConfig c;
  c.data_root = "data";
  c.seed = 42;
  c.stage23.weights.ba = 0.25;
  c.train_stage23.epochs = 3;
  ingest::writeJsonFile(tmp.path / "run.json", c.toJson());
  const RunConfig r = RunConfig::load(tmp.path / "run.json");
  CHECK(r.data_root == tmp.path / "data");
  CHECK(r.seed == 42);
  CHECK(r.stage23.seed == 42);
  CHECK(r.detector.seed == 42);
  CHECK(r.stage23.weights.ba == 0.25);
  CHECK(r.train_stage23.epochs == 3);
  CHECK_THROWS_AS(r.validate(), RangeError);
  CHECK(parseMode("tags-given") == Mode::TagsGiven);
  CHECK(modeName(Mode::KeyframesGiven) == "keyframes-given");
  CHECK_THROWS(parseMode("stage3"));
}

TEST_CASE("synthesis modes") {
  const SequenceBundle b = data::makeSyntheticSequence("m", 80, 6);
  const stage23::Stage23Model s23(smallStage23(), model::FeatureStats::compute({b}));
  const detector::KeyframeDetector det(smallDetector(), model::FeatureStats::compute({b}));

  SynthesizeInputs in;
  in.stage23 = &s23;
  CHECK_THROWS(synthesize(b, Mode::Full, in));
  in.detector = &det;
  const SynthesisOutput full = synthesize(b, Mode::Full, in);
  CHECK(isCanonical(full.tags));
  CHECK(full.result.camera.rows() == 80);
  CHECK(full.result.camera.allFinite());

  SynthesizeInputs tg;
  tg.stage23 = &s23;
  tg.tags = KeyframeTags::fromKeyframes(80, {0, 10, 20, 30, 45, 55, 56, 70, 71});
  const SynthesisOutput tagged = synthesize(b, Mode::TagsGiven, tg);
  CHECK(tagged.tags.keyframes() == std::vector<int>{0, 10, 20, 30, 45, 55, 56, 70, 71, 79});
  CHECK(tagged.result.intervals.size() == 10);
  CHECK(synthesize(b, Mode::TagsGiven, tg).result.camera == tagged.result.camera);

  std::mt19937_64 rng(3);
  SynthesizeInputs kg;
  kg.stage23 = &s23;
  for (int f : {0, 30, 59}) kg.keyframe_poses[f] = fixtures::randomPose(rng);
  const SequenceBundle b60 = data::makeSyntheticSequence("m60", 60, 7);
  const SynthesisOutput given = synthesize(b60, Mode::KeyframesGiven, kg);
  for (const auto& [f, p] : kg.keyframe_poses) CHECK(poseAt(given.result.camera, f) == p);
}

TEST_CASE("keyframe pose file") {
  fixtures::TempDir tmp("kf");
  std::vector<ingest::CameraKeyframe> keys{{0, fixtures::pose(0, 1, 2, 0, 0, 0, 3, 40), {}},
                                           {30, fixtures::pose(1, 1, 2, 0, 0.5, 0, 3, 45), {}}};
  ingest::writeJsonFile(tmp.path / "k.json", ingest::keyframesToJson(keys));
  const auto poses = readKeyframePoses(tmp.path / "k.json");
  REQUIRE(poses.size() == 2);
  CHECK(poses.at(30) == keys[1].pose);
}

TEST_CASE("evaluation against ground truth") {
  std::vector<SequenceBundle> refs;
  std::vector<CameraTrack> gen;
  for (unsigned i = 0; i < 4; ++i) {
    refs.push_back(data::makeSyntheticSequence("e" + std::to_string(i), 120 + 30 * i, 10 + i));
    gen.push_back(*refs.back().camera);
  }
  const double theta = metrics::thetaCut(gen);
  const EvalReport r = evaluate(refs, gen, theta);
  CHECK(r.n_sequences == 4);
  CHECK(r.lcd == 0.0);
  CHECK(r.dmr == r.gt_dmr);
  REQUIRE(r.fid_k);
  CHECK(std::abs(*r.fid_k) < 1e-6);
  CHECK(std::abs(*r.fid_s) < 1e-6);
  const json j = r.toJson();
  CHECK(j.at("schema") == kReportSchema);
  CHECK(j.at("sequences").size() == 4);
  CHECK(r.csv().rfind("name,dmr,lcd,gt_dmr\n", 0) == 0);
  CHECK_THROWS(evaluate(refs, {gen[0]}, theta));
}

namespace {

struct ServiceFixture {
  fixtures::TempDir root{"svc"};
  SequenceBundle bundle = data::makeSyntheticSequence("clip", 150, 21);
  stage23::Stage23Model model{smallStage23(), model::FeatureStats::compute({bundle})};
  SessionManager mgr{model, nullptr, root.path};

  ServiceFixture() { ingest::saveBundle(bundle, root.path / "test" / "clip"); }

  json create(const std::string& policy = "cascade") {
    const json body = {{"bundle", "test/clip"}, {"tags", {0, 30, 60, 90, 120, 149}}, {"policy", policy}};
    const ApiResponse r = dispatch(mgr, "POST", "/api/sessions", body.dump());
    REQUIRE(r.status == 201);
    return r.body;
  }
};

json ivs(std::vector<std::pair<int, int>> v) {
  json out = json::array();
  for (auto [a, b] : v) out.push_back({{"t1", a}, {"t2", b}});
  return out;
}

}  // namespace

TEST_CASE("session lifecycle through the router") {
  ServiceFixture fx;
  const json s = fx.create();
  const std::string id = s.at("id");
  CHECK(s.at("schema") == kSessionSchema);
  CHECK(s.at("tags") == json({0, 30, 60, 90, 120, 149}));
  CHECK(s.at("camera").at("frames").size() == 150);
  CHECK(s.at("version") == 1);

  const ApiResponse got = dispatch(fx.mgr, "GET", "/api/sessions/" + id, "");
  CHECK(got.status == 200);
  CHECK(got.body.at("intervals").size() == 6);
  const ApiResponse cam = dispatch(fx.mgr, "GET", "/api/sessions/" + id + "/camera", "");
  CHECK(cam.body.at("frames") == s.at("camera").at("frames"));
  const ApiResponse dance = dispatch(fx.mgr, "GET", "/api/sessions/" + id + "/dance", "");
  CHECK(dance.status == 200);
  CHECK(dance.body.at("frames").size() == 150);
  CHECK(dance.body.at("frames")[0].size() == kNumJoints);
}

TEST_CASE("moving a keyframe marks only the adjacent intervals dirty") {
  ServiceFixture fx;
  const json s = fx.create("local");
  const std::string id = s.at("id");
  const ApiResponse r =
      dispatch(fx.mgr, "PATCH", "/api/sessions/" + id + "/tags", json{{"tags", {0, 35, 60, 90, 120, 149}}}.dump());
  REQUIRE(r.status == 200);
  CHECK(r.body.at("dirty") == ivs({{0, 35}, {35, 60}}));
  CHECK(r.body.at("resynthesized") == ivs({{0, 35}, {35, 60}}));
  // Frames from 60 on are untouched.
  for (int t = 60; t < 150; ++t) CHECK(r.body.at("camera").at("frames")[t] == s.at("camera").at("frames")[t]);

  // Cascade re-synthesizes from the first dirty interval to the end.
  const ApiResponse c = dispatch(fx.mgr, "PATCH", "/api/sessions/" + id + "/tags",
                                 json{{"tags", {0, 35, 60, 95, 120, 149}}, {"policy", "cascade"}}.dump());
  REQUIRE(c.status == 200);
  CHECK(c.body.at("dirty") == ivs({{60, 95}, {95, 120}}));
  CHECK(c.body.at("resynthesized") == ivs({{60, 95}, {95, 120}, {120, 149}, {149, 150}}));
  for (int t = 0; t < 60; ++t) CHECK(c.body.at("camera").at("frames")[t] == r.body.at("camera").at("frames")[t]);
}

TEST_CASE("editing a keyframe pose is preserved in the camera") {
  ServiceFixture fx;
  const std::string id = fx.create().at("id");
  const CameraPosed p = fixtures::pose(0.5, 1.25, -0.75, 0.1, 2.0, -0.05, 3.5, 42.0);
  const ApiResponse r =
      dispatch(fx.mgr, "PATCH", "/api/sessions/" + id + "/keyframes/60", json{{"pose", ingest::poseToJson(p)}}.dump());
  REQUIRE(r.status == 200);
  CHECK(cameraFrame(r.body.at("camera"), 60) == p);
  CHECK(r.body.at("dirty") == ivs({{60, 90}}));
  bool edited = false;
  for (const auto& k : r.body.at("keyframes"))
    if (k.at("frame") == 60) edited = k.at("edited");
  CHECK(edited);
  // Survives a later re-synthesis and a tag edit elsewhere.
  const ApiResponse re = dispatch(fx.mgr, "POST", "/api/sessions/" + id + "/resynthesize", json{{"from", 0}}.dump());
  CHECK(cameraFrame(re.body.at("camera"), 60) == p);
  const ApiResponse t =
      dispatch(fx.mgr, "PATCH", "/api/sessions/" + id + "/tags", json{{"tags", {0, 20, 60, 90, 120, 149}}}.dump());
  CHECK(cameraFrame(t.body.at("camera"), 60) == p);
  // Removing the keyframe drops the edit.
  const ApiResponse d =
      dispatch(fx.mgr, "PATCH", "/api/sessions/" + id + "/tags", json{{"tags", {0, 30, 90, 120, 149}}}.dump());
  REQUIRE(d.status == 200);
  for (const auto& k : d.body.at("keyframes")) CHECK(k.at("edited") == false);
}

TEST_CASE("service error statuses") {
  ServiceFixture fx;
  const std::string id = fx.create().at("id");
  const std::string base = "/api/sessions/" + id;
  const json pose = ingest::poseToJson(fixtures::pose(0, 1, 0, 0, 0, 0, 3, 40));
  CHECK(dispatch(fx.mgr, "PATCH", base + "/keyframes/61", json{{"pose", pose}}.dump()).status == 400);
  CHECK(dispatch(fx.mgr, "PATCH", base + "/keyframes/500", json{{"pose", pose}}.dump()).status == 400);
  CHECK(dispatch(fx.mgr, "PATCH", base + "/keyframes/abc", json{{"pose", pose}}.dump()).status == 400);
  json bad_pose = pose;
  bad_pose["fov"] = 200;
  CHECK(dispatch(fx.mgr, "PATCH", base + "/keyframes/60", json{{"pose", bad_pose}}.dump()).status == 400);
  CHECK(dispatch(fx.mgr, "PATCH", base + "/tags", json{{"tags", {0, 149}}}.dump()).status == 400);
  CHECK(dispatch(fx.mgr, "PATCH", base + "/tags", json{{"tags", {0, 30, 999}}}.dump()).status == 400);
  CHECK(dispatch(fx.mgr, "PATCH", base + "/tags", "{not json").status == 400);
  CHECK(dispatch(fx.mgr, "GET", "/api/sessions/s999999", "").status == 404);
  CHECK(dispatch(fx.mgr, "GET", "/api/other", "").status == 404);
  CHECK(dispatch(fx.mgr, "GET", base + "/nothing", "").status == 404);
  CHECK(dispatch(fx.mgr, "DELETE", base, "").status == 405);
  CHECK(dispatch(fx.mgr, "GET", "/api/sessions", "").status == 405);
  CHECK(dispatch(fx.mgr, "PATCH", base + "/tags", json{{"tags", {0, 30, 60, 90, 120, 149}}, {"version", 0}}.dump())
            .status == 409);
  CHECK(dispatch(fx.mgr, "POST", "/api/sessions", json{{"bundle", "../etc"}}.dump()).status == 400);
  CHECK(dispatch(fx.mgr, "POST", "/api/sessions", json{{"bundle", "test/missing"}}.dump()).status == 404);
  CHECK(dispatch(fx.mgr, "POST", "/api/sessions", json{{"bundle", "test/clip"}, {"tag_source", "detector"}}.dump())
            .status == 400);
  CHECK(dispatch(fx.mgr, "POST", "/api/sessions",
                 json{{"bundle", "test/clip"}, {"tags", {0, 50}}, {"keyframes", {{{"frame", 10}, {"pose", pose}}}}}
                     .dump())
            .status == 400);
  const ApiResponse err = dispatch(fx.mgr, "GET", "/api/sessions/nope", "");
  CHECK(err.body.at("error").at("status") == 404);
  // A stale version after a successful edit.
  const ApiResponse ok = dispatch(fx.mgr, "POST", base + "/resynthesize", json{{"version", 1}}.dump());
  CHECK(ok.status == 200);
  CHECK(dispatch(fx.mgr, "POST", base + "/resynthesize", json{{"version", 1}}.dump()).status == 409);
}

TEST_CASE("concurrent edits to one session serialize") {
  ServiceFixture fx;
  const std::string id = fx.create().at("id");
  const CameraPosed a = fixtures::pose(0, 1, 0, 0, 0.3, 0, 3, 40), b = fixtures::pose(0, 1, 0, 0, -0.3, 0, 4, 35);
  std::thread t1([&] {
    dispatch(fx.mgr, "PATCH", "/api/sessions/" + id + "/keyframes/60", json{{"pose", ingest::poseToJson(a)}}.dump());
  });
  std::thread t2([&] {
    dispatch(fx.mgr, "PATCH", "/api/sessions/" + id + "/keyframes/90", json{{"pose", ingest::poseToJson(b)}}.dump());
  });
  t1.join();
  t2.join();
  const json cam = dispatch(fx.mgr, "GET", "/api/sessions/" + id + "/camera", "").body;
  CHECK(cam.at("version") == 3);
  CHECK(cameraFrame(cam, 60) == a);
  CHECK(cameraFrame(cam, 90) == b);
}

TEST_CASE("http server end to end") {
  ServiceFixture fx;
  HttpServer server(fx.mgr);
  const int port = server.bind("127.0.0.1", 0);
  REQUIRE(port > 0);
  server.start();
  httplib::Client cli("127.0.0.1", port);
  cli.set_read_timeout(60, 0);

  const json body = {{"bundle", "test/clip"}, {"tags", {0, 30, 60, 90, 120, 149}}};
  auto created = cli.Post("/api/sessions", body.dump(), "application/json");
  REQUIRE(created);
  CHECK(created->status == 201);
  const std::string id = json::parse(created->body).at("id");

  const CameraPosed p = fixtures::pose(0.2, 1.0, 0.1, 0.05, 1.5, 0.0, 3.0, 38.0);
  auto patched = cli.Patch("/api/sessions/" + id + "/keyframes/60", json{{"pose", ingest::poseToJson(p)}}.dump(),
                           "application/json");
  REQUIRE(patched);
  CHECK(patched->status == 200);
  auto cam = cli.Get("/api/sessions/" + id + "/camera");
  REQUIRE(cam);
  CHECK(cam->status == 200);
  CHECK(cameraFrame(json::parse(cam->body), 60) == p);
  auto missing = cli.Get("/api/sessions/zzz");
  REQUIRE(missing);
  CHECK(missing->status == 404);
  server.stop();
}
