#include "dancecam/pipeline/service.hpp"

#include <cstdio>
#include <sstream>
#include <thread>

#include <httplib.h>

#include "dancecam/ingest/bundle.hpp"

namespace dancecam::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

EditPolicy parsePolicy(const std::string& s) {
  if (s == "cascade") return EditPolicy::Cascade;
  if (s == "local") return EditPolicy::Local;
  throw ApiError(400, "unknown policy '" + s + "' (cascade, local)");
}

const char* policyName(EditPolicy p) { return p == EditPolicy::Cascade ? "cascade" : "local"; }

json intervalJson(const Interval& iv) { return {{"t1", iv.t1}, {"t2", iv.t2}}; }

void checkVersion(const Session& s, const json& body) {
  if (body.is_object() && body.contains("version") && body.at("version").get<long>() != s.version)
    throw ApiError(409, "session " + s.id + " is at version " + std::to_string(s.version) + ", request was for " +
                            std::to_string(body.at("version").get<long>()));
}

json framesJson(const KeyframeTags& tags) { return tags.keyframes(); }

CameraPosed requestPose(const json& body) {
  const json& p = body.contains("pose") ? body.at("pose") : body;
  try {
    CameraPosed pose = ingest::poseFromJson(p);
    validatePose(pose);
    return pose;
  } catch (const std::exception& e) {
    throw ApiError(400, std::string("invalid pose: ") + e.what());
  }
}

}  // namespace

SessionManager::SessionManager(const stage23::Stage23Model& model, const detector::KeyframeDetector* detector,
                               fs::path data_root)
    : model_(model), detector_(detector), data_root_(std::move(data_root)) {}

std::shared_ptr<Session> SessionManager::find(const std::string& id) {
  std::lock_guard<std::mutex> lock(sessions_mutex_);
  const auto it = sessions_.find(id);
  if (it == sessions_.end()) throw ApiError(404, "unknown session '" + id + "'");
  return it->second;
}

KeyframeTags SessionManager::checkedTags(const json& frames, std::size_t length) const {
  if (!frames.is_array()) throw ApiError(400, "tags must be an array of frame indices");
  std::vector<int> f;
  for (const auto& v : frames) {
    if (!v.is_number_integer()) throw ApiError(400, "tags must be integers");
    const int x = v.get<int>();
    if (x < 0 || static_cast<std::size_t>(x) >= length)
      throw ApiError(400, "tag " + std::to_string(x) + " outside [0, " + std::to_string(length) + ")");
    f.push_back(x);
  }
  KeyframeTags tags = canonicalize(KeyframeTags::fromKeyframes(length, f));
  const int w = model_.config().dims.w;
  if (maxGap(tags) > w)
    throw ApiError(400, "keyframe gap " + std::to_string(maxGap(tags)) + " exceeds " + std::to_string(w) + " frames");
  return tags;
}

json SessionManager::sessionJson(const Session& s) const {
  json keys = json::array();
  for (int f : s.tags.keyframes()) {
    json k = ingest::poseToJson(poseAt(s.synthesis.camera, f));
    k["frame"] = f;
    k["edited"] = s.keyframe_poses.count(f) > 0;
    keys.push_back(k);
  }
  json ivs = json::array();
  for (const auto& r : s.synthesis.intervals) ivs.push_back(intervalJson(r.interval));
  return {{"schema", kSessionSchema},
          {"id", s.id},
          {"version", s.version},
          {"name", s.bundle.name},
          {"fps", s.bundle.fps},
          {"length", s.bundle.length()},
          {"policy", policyName(s.policy)},
          {"tags", framesJson(s.tags)},
          {"keyframes", keys},
          {"intervals", ivs}};
}

json SessionManager::update(Session& s, const std::vector<bool>& dirty, const CameraTrack* previous) {
  const std::vector<Interval> ivs = keyframeIntervals(s.tags);
  stage23::SynthesisOptions opts;
  opts.pinned_start = s.keyframe_poses;
  opts.previous = previous;
  if (previous) {
    opts.resynthesize = dirty;
    if (s.policy == EditPolicy::Cascade) {
      const auto first = std::find(dirty.begin(), dirty.end(), true);
      std::fill(opts.resynthesize.begin() + (first - dirty.begin()), opts.resynthesize.end(), true);
    }
  }
  {
    std::lock_guard<std::mutex> lock(inference_mutex_);
    s.synthesis = stage23::synthesizeCamera(s.bundle, s.tags, model_, opts);
  }
  ++s.version;
  json d = json::array(), r = json::array();
  for (std::size_t k = 0; k < ivs.size(); ++k)
    if (dirty[k]) d.push_back(intervalJson(ivs[k]));
  for (int k : s.synthesis.resynthesized) r.push_back(intervalJson(ivs[static_cast<std::size_t>(k)]));
  json out = sessionJson(s);
  out["dirty"] = d;
  out["resynthesized"] = r;
  out["camera"] = ingest::cameraToJson(s.synthesis.camera, s.bundle.fps);
  return out;
}

json SessionManager::create(const json& body) {
  if (!body.is_object() || !body.contains("bundle") || !body.at("bundle").is_string())
    throw ApiError(400, "body must name a bundle: {\"bundle\": \"<path under the data root>\"}");
  if (data_root_.empty()) throw ApiError(400, "service was started without a data root");
  const fs::path root = fs::weakly_canonical(data_root_);
  const fs::path dir = fs::weakly_canonical(root / body.at("bundle").get<std::string>());
  const auto rel = dir.lexically_relative(root);
  if (rel.empty() || *rel.begin() == "..") throw ApiError(400, "bundle path escapes the data root");
  if (!fs::is_directory(dir)) throw ApiError(404, "bundle '" + body.at("bundle").get<std::string>() + "' not found");

  auto s = std::make_shared<Session>();
  try {
    s->bundle = ingest::loadBundle(dir);
  } catch (const std::exception& e) {
    throw ApiError(400, std::string("cannot load bundle: ") + e.what());
  }
  const std::size_t T = static_cast<std::size_t>(s->bundle.length());
  const int w = model_.config().dims.w;
  if (body.contains("policy")) s->policy = parsePolicy(body.at("policy").get<std::string>());
  if (body.contains("tags")) {
    s->tags = checkedTags(body.at("tags"), T);
  } else {
    std::string source = body.value("tag_source", detector_ ? "detector" : "bundle");
    if (source == "detector") {
      if (!detector_) throw ApiError(400, "no keyframe detector loaded; pass tags");
      std::lock_guard<std::mutex> lock(inference_mutex_);
      s->tags = splitLongIntervals(canonicalize(detector::detectKeyframes(s->bundle, *detector_)), w);
    } else if (source == "bundle") {
      if (!s->bundle.tags) throw ApiError(400, "bundle has no keyframe tags; pass tags");
      s->tags = splitLongIntervals(canonicalize(*s->bundle.tags), w);
    } else {
      throw ApiError(400, "unknown tag_source '" + source + "' (detector, bundle)");
    }
  }
  if (body.contains("keyframes")) {
    for (const auto& k : body.at("keyframes")) {
      const int f = k.at("frame").get<int>();
      if (f < 0 || static_cast<std::size_t>(f) >= T || !s->tags.isKey(static_cast<std::size_t>(f)))
        throw ApiError(400, "keyframe pose at untagged frame " + std::to_string(f));
      s->keyframe_poses[f] = requestPose(k);
    }
  }
  {
    std::lock_guard<std::mutex> lock(sessions_mutex_);
    char id[16];
    std::snprintf(id, sizeof id, "s%06ld", next_id_++);
    s->id = id;
    sessions_[s->id] = s;
  }
  std::lock_guard<std::mutex> lock(s->mutex);
  return update(*s, std::vector<bool>(keyframeIntervals(s->tags).size(), true), nullptr);
}

json SessionManager::get(const std::string& id) {
  auto s = find(id);
  std::lock_guard<std::mutex> lock(s->mutex);
  return sessionJson(*s);
}

json SessionManager::camera(const std::string& id) {
  auto s = find(id);
  std::lock_guard<std::mutex> lock(s->mutex);
  json out = ingest::cameraToJson(s->synthesis.camera, s->bundle.fps);
  out["schema"] = kSessionSchema;
  out["id"] = s->id;
  out["version"] = s->version;
  return out;
}

json SessionManager::dance(const std::string& id) {
  auto s = find(id);
  std::lock_guard<std::mutex> lock(s->mutex);
  json frames = json::array();
  for (Eigen::Index t = 0; t < s->bundle.length(); ++t) {
    json joints = json::array();
    for (int j = 0; j < kNumJoints; ++j)
      joints.push_back({s->bundle.dance(t, 3 * j), s->bundle.dance(t, 3 * j + 1), s->bundle.dance(t, 3 * j + 2)});
    frames.push_back(std::move(joints));
  }
  return {{"schema", kSessionSchema}, {"id", s->id}, {"fps", s->bundle.fps}, {"frames", std::move(frames)}};
}

json SessionManager::patchTags(const std::string& id, const json& body) {
  auto s = find(id);
  std::lock_guard<std::mutex> lock(s->mutex);
  checkVersion(*s, body);
  if (!body.is_object() || !body.contains("tags")) throw ApiError(400, "body must carry \"tags\"");
  KeyframeTags tags = checkedTags(body.at("tags"), static_cast<std::size_t>(s->bundle.length()));
  if (body.contains("policy")) s->policy = parsePolicy(body.at("policy").get<std::string>());
  const std::vector<Interval> old_ivs = keyframeIntervals(s->tags), new_ivs = keyframeIntervals(tags);
  std::vector<bool> dirty(new_ivs.size());
  for (std::size_t k = 0; k < new_ivs.size(); ++k)
    dirty[k] = std::find(old_ivs.begin(), old_ivs.end(), new_ivs[k]) == old_ivs.end();
  for (auto it = s->keyframe_poses.begin(); it != s->keyframe_poses.end();)
    it = tags.isKey(static_cast<std::size_t>(it->first)) ? std::next(it) : s->keyframe_poses.erase(it);
  const CameraTrack previous = s->synthesis.camera;
  s->tags = std::move(tags);
  return update(*s, dirty, &previous);
}

json SessionManager::patchKeyframe(const std::string& id, int frame, const json& body) {
  auto s = find(id);
  std::lock_guard<std::mutex> lock(s->mutex);
  checkVersion(*s, body);
  if (frame < 0 || frame >= s->bundle.length())
    throw ApiError(400, "frame " + std::to_string(frame) + " outside the sequence");
  if (!s->tags.isKey(static_cast<std::size_t>(frame)))
    throw ApiError(400, "frame " + std::to_string(frame) + " is not a keyframe");
  s->keyframe_poses[frame] = requestPose(body);
  const std::vector<Interval> ivs = keyframeIntervals(s->tags);
  std::vector<bool> dirty(ivs.size());
  for (std::size_t k = 0; k < ivs.size(); ++k) dirty[k] = ivs[k].t1 == frame;
  const CameraTrack previous = s->synthesis.camera;
  return update(*s, dirty, &previous);
}

json SessionManager::resynthesize(const std::string& id, const json& body) {
  auto s = find(id);
  std::lock_guard<std::mutex> lock(s->mutex);
  checkVersion(*s, body);
  if (body.is_object() && body.contains("policy")) s->policy = parsePolicy(body.at("policy").get<std::string>());
  const int from = body.is_object() ? body.value("from", 0) : 0;
  if (from < 0 || from >= s->bundle.length()) throw ApiError(400, "from outside the sequence");
  const std::vector<Interval> ivs = keyframeIntervals(s->tags);
  std::vector<bool> dirty(ivs.size());
  for (std::size_t k = 0; k < ivs.size(); ++k) dirty[k] = ivs[k].t2 > from;
  const CameraTrack previous = s->synthesis.camera;
  return update(*s, dirty, &previous);
}

namespace {

ApiResponse errorResponse(int status, const std::string& msg) {
  return {status, {{"schema", kSessionSchema}, {"error", {{"status", status}, {"message", msg}}}}};
}

std::vector<std::string> splitPath(const std::string& path) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(path.substr(0, path.find('?')));
  while (std::getline(in, cur, '/'))
    if (!cur.empty()) out.push_back(cur);
  return out;
}

int parseFrame(const std::string& s) {
  std::size_t used = 0;
  int f = 0;
  try {
    f = std::stoi(s, &used);
  } catch (const std::exception&) {
    throw ApiError(400, "frame must be an integer");
  }
  if (used != s.size()) throw ApiError(400, "frame must be an integer");
  return f;
}

}  // namespace

ApiResponse dispatch(SessionManager& mgr, const std::string& method, const std::string& path, const std::string& body) {
  try {
    const std::vector<std::string> seg = splitPath(path);
    if (seg.size() < 2 || seg[0] != "api" || seg[1] != "sessions") throw ApiError(404, "no route for " + path);
    json b = json::object();
    if (!body.empty()) {
      try {
        b = json::parse(body);
      } catch (const json::exception& e) {
        throw ApiError(400, std::string("malformed JSON: ") + e.what());
      }
    }
    auto allow = [&](const char* m) {
      if (method != m) throw ApiError(405, method + " not allowed on " + path);
    };
    if (seg.size() == 2) {
      allow("POST");
      return {201, mgr.create(b)};
    }
    const std::string& id = seg[2];
    if (seg.size() == 3) {
      allow("GET");
      return {200, mgr.get(id)};
    }
    const std::string& what = seg[3];
    if (seg.size() == 4 && what == "tags") {
      allow("PATCH");
      return {200, mgr.patchTags(id, b)};
    }
    if (seg.size() == 5 && what == "keyframes") {
      allow("PATCH");
      const int frame = parseFrame(seg[4]);
      return {200, mgr.patchKeyframe(id, frame, b)};
    }
    if (seg.size() == 4 && what == "resynthesize") {
      allow("POST");
      return {200, mgr.resynthesize(id, b)};
    }
    if (seg.size() == 4 && what == "camera") {
      allow("GET");
      return {200, mgr.camera(id)};
    }
    if (seg.size() == 4 && what == "dance") {
      allow("GET");
      return {200, mgr.dance(id)};
    }
    throw ApiError(404, "no route for " + path);
  } catch (const ApiError& e) {
    return errorResponse(e.status, e.what());
  } catch (const json::exception& e) {
    return errorResponse(400, std::string("bad request: ") + e.what());
  } catch (const std::invalid_argument& e) {
    return errorResponse(400, e.what());
  } catch (const std::out_of_range& e) {
    return errorResponse(400, e.what());
  } catch (const FormatError& e) {
    return errorResponse(400, e.what());
  } catch (const std::exception& e) {
    return errorResponse(500, e.what());
  }
}

struct HttpServer::Impl {
  SessionManager& mgr;
  httplib::Server svr;
  std::thread thread;
  explicit Impl(SessionManager& m) : mgr(m) {}
};

HttpServer::HttpServer(SessionManager& mgr) : impl_(std::make_unique<Impl>(mgr)) {
  auto handler = [this](const httplib::Request& req, httplib::Response& res) {
    const ApiResponse r = dispatch(impl_->mgr, req.method, req.path, req.body);
    res.status = r.status;
    res.set_content(r.body.dump(), "application/json");
  };
  impl_->svr.Get(R"(/api/.*)", handler);
  impl_->svr.Post(R"(/api/.*)", handler);
  impl_->svr.Patch(R"(/api/.*)", handler);
  impl_->svr.Put(R"(/api/.*)", handler);
  impl_->svr.Delete(R"(/api/.*)", handler);
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
  if (port == 0) return impl_->svr.bind_to_any_port(host);
  if (!impl_->svr.bind_to_port(host, port)) throw std::runtime_error("cannot bind " + host + ":" + std::to_string(port));
  return port;
}

void HttpServer::listen() { impl_->svr.listen_after_bind(); }

void HttpServer::start() {
  impl_->thread = std::thread([this] { impl_->svr.listen_after_bind(); });
  impl_->svr.wait_until_ready();
}

void HttpServer::stop() {
  impl_->svr.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace dancecam::pipeline
