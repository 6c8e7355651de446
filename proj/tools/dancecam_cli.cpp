// dancecam command-line front end.

#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "dancecam/data/synthetic.hpp"
#include "dancecam/ingest/bundle.hpp"
#include "dancecam/pipeline/pipeline.hpp"
#include "dancecam/pipeline/service.hpp"

namespace fs = std::filesystem;
using namespace dancecam;

namespace {

struct ModelFlags {
  int embed_dim = 0, layers = 0, heads = 0;
  double dropout = -1.0;

  void add(CLI::App* app) {
    app->add_option("--embed-dim", embed_dim, "model width");
    app->add_option("--layers", layers, "decoder layers");
    app->add_option("--heads", heads, "attention heads");
    app->add_option("--dropout", dropout, "dropout rate");
  }
  void apply(model::ModelDims& d) const {
    if (embed_dim > 0) d.embed_dim = embed_dim;
    if (layers > 0) d.n_layers = layers;
    if (heads > 0) d.n_heads = heads;
    if (dropout >= 0.0) d.dropout = dropout;
  }
};

struct TrainFlags {
  int epochs = 0, batch = 0;
  double lr = 0.0;
  long max_steps = 0;
  bool verbose = false;

  void add(CLI::App* app) {
    app->add_option("--epochs", epochs, "training epochs");
    app->add_option("--batch-size", batch, "samples per optimizer step");
    app->add_option("--lr", lr, "peak learning rate");
    app->add_option("--max-steps", max_steps, "stop after this many optimizer steps");
    app->add_flag("-v,--verbose", verbose, "log every epoch");
  }
  template <typename Opt>
  void apply(Opt& o) const {
    if (epochs > 0) o.epochs = epochs;
    if (batch > 0) o.batch_size = batch;
    if (lr > 0.0) o.lr = lr;
    if (max_steps > 0) o.max_steps = max_steps;
    o.verbose = o.verbose || verbose;
  }
};

pipeline::RunConfig baseConfig(const std::string& config_path, const std::string& data, int seed) {
  pipeline::RunConfig c = config_path.empty() ? pipeline::RunConfig{} : pipeline::RunConfig::load(config_path);
  if (!data.empty()) c.data_root = data;
  if (seed >= 0) c.seed = static_cast<unsigned>(seed);
  c.applySeed();
  return c;
}

void writeJson(const fs::path& p, const nlohmann::json& j) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream(p) << j.dump(2) << '\n';
}

pipeline::SynthesisOutput synthesizeOne(const SequenceBundle& b, pipeline::Mode mode,
                                        const detector::KeyframeDetector* det, const stage23::Stage23Model& s23,
                                        const std::string& tags_file, const std::string& keyframes_file) {
  pipeline::SynthesizeInputs in;
  in.detector = det;
  in.stage23 = &s23;
  if (mode == pipeline::Mode::TagsGiven) {
    if (!tags_file.empty())
      in.tags = ingest::tagsFromJson(ingest::readJsonFile(tags_file), static_cast<std::size_t>(b.length()));
    else
      in.tags = b.tags;
  }
  if (mode == pipeline::Mode::KeyframesGiven) {
    if (!keyframes_file.empty()) {
      in.keyframe_poses = pipeline::readKeyframePoses(keyframes_file);
    } else if (b.camera && b.tags) {
      for (int f : b.tags->keyframes()) in.keyframe_poses[f] = poseAt(*b.camera, f);
    }
  }
  return pipeline::synthesize(b, mode, in);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Music- and dance-driven camera synthesis"};
  app.require_subcommand(1);
  std::string config_path;
  int seed = -1;
  app.add_option("--config", config_path, "run configuration JSON")->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "random seed for every stage");

  // make-synthetic
  auto* synth_cmd = app.add_subcommand("make-synthetic", "write a procedural raw dataset");
  std::string synth_out;
  data::DatasetOptions ds;
  synth_cmd->add_option("out", synth_out, "output raw directory")->required();
  synth_cmd->add_option("--train-songs", ds.train_songs);
  synth_cmd->add_option("--test-songs", ds.test_songs);
  synth_cmd->add_option("--pieces-per-song", ds.pieces_per_song);
  synth_cmd->add_option("--min-piece", ds.min_piece, "frames");
  synth_cmd->add_option("--max-piece", ds.max_piece, "frames");

  // preprocess
  auto* pre_cmd = app.add_subcommand("preprocess", "extract features, stitch training pieces, write the manifest");
  std::string raw_dir, pre_out;
  pre_cmd->add_option("raw", raw_dir, "raw directory with train/ and test/")->required()->check(CLI::ExistingDirectory);
  pre_cmd->add_option("out", pre_out, "output data directory")->required();

  // train-stage1 / train-stage23
  std::string data_dir, ckpt_out;
  ModelFlags mflags1, mflags23;
  TrainFlags tflags1, tflags23;
  auto* t1_cmd = app.add_subcommand("train-stage1", "train the keyframe detector");
  t1_cmd->add_option("--data", data_dir, "preprocessed data directory");
  t1_cmd->add_option("-o,--out", ckpt_out, "checkpoint path")->required();
  mflags1.add(t1_cmd);
  tflags1.add(t1_cmd);
  auto* t23_cmd = app.add_subcommand("train-stage23", "train keyframe synthesis and tween prediction jointly");
  t23_cmd->add_option("--data", data_dir, "preprocessed data directory");
  t23_cmd->add_option("-o,--out", ckpt_out, "checkpoint path")->required();
  mflags23.add(t23_cmd);
  tflags23.add(t23_cmd);
  double w_rec = -1, w_vel = -1, w_acc = -1, w_ba = -1;
  t23_cmd->add_option("--w-rec", w_rec);
  t23_cmd->add_option("--w-vel", w_vel);
  t23_cmd->add_option("--w-acc", w_acc);
  t23_cmd->add_option("--w-ba", w_ba);

  // synthesize
  auto* syn_cmd = app.add_subcommand("synthesize", "synthesize a camera track for one bundle");
  std::string mode_name = "full", bundle_dir, det_ckpt, s23_ckpt, tags_file, keyframes_file, cam_out;
  syn_cmd->add_option("--mode", mode_name, "full, tags-given or keyframes-given")
      ->check(CLI::IsMember({"full", "tags-given", "keyframes-given"}));
  syn_cmd->add_option("--bundle", bundle_dir, "bundle directory")->required()->check(CLI::ExistingDirectory);
  syn_cmd->add_option("--detector", det_ckpt, "stage-1 checkpoint")->check(CLI::ExistingFile);
  syn_cmd->add_option("--stage23", s23_ckpt, "stage-2/3 checkpoint")->required()->check(CLI::ExistingFile);
  syn_cmd->add_option("--tags", tags_file, "tags JSON for tags-given mode")->check(CLI::ExistingFile);
  syn_cmd->add_option("--keyframes", keyframes_file, "keyframe camera JSON for keyframes-given mode")
      ->check(CLI::ExistingFile);
  syn_cmd->add_option("-o,--out", cam_out, "output camera JSON")->required();

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "synthesize the test split and score it against ground truth");
  std::string split = "test", report_out, csv_out;
  eval_cmd->add_option("--data", data_dir, "preprocessed data directory");
  eval_cmd->add_option("--split", split);
  eval_cmd->add_option("--mode", mode_name)->check(CLI::IsMember({"full", "tags-given", "keyframes-given"}));
  eval_cmd->add_option("--detector", det_ckpt)->check(CLI::ExistingFile);
  eval_cmd->add_option("--stage23", s23_ckpt)->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("-o,--out", report_out, "report JSON (stdout when absent)");
  eval_cmd->add_option("--csv", csv_out, "per-sequence CSV");

  // serve
  auto* serve_cmd = app.add_subcommand("serve", "run the editing HTTP service");
  std::string host = "127.0.0.1";
  int port = 8080;
  serve_cmd->add_option("--data", data_dir, "directory sessions may load bundles from");
  serve_cmd->add_option("--host", host);
  serve_cmd->add_option("--port", port);
  serve_cmd->add_option("--detector", det_ckpt)->check(CLI::ExistingFile);
  serve_cmd->add_option("--stage23", s23_ckpt)->required()->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  try {
    pipeline::RunConfig cfg = baseConfig(config_path, data_dir, seed);

    if (*synth_cmd) {
      ds.seed = cfg.seed;
      data::writeSyntheticRaw(synth_out, ds);
      std::cout << "wrote " << ds.train_songs + ds.test_songs << " songs to " << synth_out << '\n';
      return 0;
    }
    if (*pre_cmd) {
      const pipeline::PreprocessResult r = pipeline::preprocess(raw_dir, pre_out);
      for (const auto& w : r.warnings) std::cerr << "warning: " << w << '\n';
      std::cout << "train " << r.manifest["splits"]["train"].size() << ", test "
                << r.manifest["splits"]["test"].size() << " sequences; feature cache " << r.cache_hits << " hit, "
                << r.cache_misses << " miss\n";
      return 0;
    }
    if (*t1_cmd) {
      cfg.validate();
      mflags1.apply(cfg.detector.dims);
      tflags1.apply(cfg.train_stage1);
      const auto train = pipeline::loadSplit(cfg.data_root, "train");
      std::vector<detector::EpochLog> log;
      const auto model = detector::trainDetector(train, cfg.detector, cfg.train_stage1, &log);
      if (fs::path(ckpt_out).has_parent_path()) fs::create_directories(fs::path(ckpt_out).parent_path());
      model.save(ckpt_out);
      if (!log.empty())
        std::cout << "stage1 loss " << log.back().loss << " precision " << log.back().precision << " recall "
                  << log.back().recall << '\n';
      return 0;
    }
    if (*t23_cmd) {
      cfg.validate();
      mflags23.apply(cfg.stage23.dims);
      tflags23.apply(cfg.train_stage23);
      auto& w = cfg.stage23.weights;
      if (w_rec >= 0) w.rec = w_rec;
      if (w_vel >= 0) w.vel = w_vel;
      if (w_acc >= 0) w.acc = w_acc;
      if (w_ba >= 0) w.ba = w_ba;
      const auto train = pipeline::loadSplit(cfg.data_root, "train");
      std::vector<stage23::EpochLog> log;
      const auto model = stage23::trainStage23(train, cfg.stage23, cfg.train_stage23, &log);
      if (fs::path(ckpt_out).has_parent_path()) fs::create_directories(fs::path(ckpt_out).parent_path());
      model.save(ckpt_out);
      if (!log.empty()) std::cout << "stage23 loss " << log.back().loss << " rec " << log.back().rec << '\n';
      return 0;
    }

    std::optional<detector::KeyframeDetector> det;
    if (!det_ckpt.empty()) det = detector::KeyframeDetector::load(det_ckpt);
    const stage23::Stage23Model s23 = stage23::Stage23Model::load(s23_ckpt);

    if (*syn_cmd) {
      const SequenceBundle b = ingest::loadBundle(bundle_dir);
      const auto out = synthesizeOne(b, pipeline::parseMode(mode_name), det ? &*det : nullptr, s23, tags_file,
                                     keyframes_file);
      nlohmann::json j = ingest::cameraToJson(out.result.camera, b.fps);
      j["keyframe_tags"] = out.tags.keyframes();
      writeJson(cam_out, j);
      std::cout << "wrote " << out.result.camera.rows() << " frames, " << out.result.intervals.size()
                << " intervals to " << cam_out << '\n';
      return 0;
    }
    if (*eval_cmd) {
      const pipeline::Mode mode = pipeline::parseMode(mode_name);
      const auto refs = pipeline::loadSplit(cfg.data_root, split);
      std::vector<CameraTrack> gen;
      for (const auto& b : refs) gen.push_back(synthesizeOne(b, mode, det ? &*det : nullptr, s23, "", "").result.camera);
      const auto report = pipeline::evaluate(refs, gen, pipeline::manifestThetaCut(cfg.data_root));
      if (report_out.empty())
        std::cout << report.toJson().dump(2) << '\n';
      else
        writeJson(report_out, report.toJson());
      if (!csv_out.empty()) std::ofstream(csv_out) << report.csv();
      return 0;
    }
    if (*serve_cmd) {
      pipeline::SessionManager mgr(s23, det ? &*det : nullptr, cfg.data_root);
      pipeline::HttpServer server(mgr);
      const int bound = server.bind(host, port);
      std::cout << "listening on http://" << host << ':' << bound << std::endl;
      server.listen();
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
