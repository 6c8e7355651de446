#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "dancecam/detector/detector.hpp"
#include "dancecam/stage23/stage23.hpp"

namespace dancecam::pipeline {

inline constexpr const char* kSessionSchema = "dancecam.session.v1";

// cascade: re-synthesize from the earliest dirty interval to the end.
// local: re-synthesize only dirty intervals; later intervals keep the
// camera they were synthesized with (their history is frozen).
enum class EditPolicy { Cascade, Local };

struct ApiError : std::runtime_error {
  int status;
  ApiError(int s, const std::string& msg) : std::runtime_error(msg), status(s) {}
};

struct Session {
  std::string id;
  SequenceBundle bundle;
  KeyframeTags tags;                          // canonical, gaps <= w
  std::map<int, CameraPosed> keyframe_poses;  // edited poses, tagged frames only
  EditPolicy policy = EditPolicy::Cascade;
  stage23::SynthesisResult synthesis;
  long version = 0;
  std::mutex mutex;
};

// In-memory edit sessions. Requests on one session are serialized; model
// inference is serialized across all sessions.
class SessionManager {
 public:
  SessionManager(const stage23::Stage23Model& model, const detector::KeyframeDetector* detector,
                 std::filesystem::path data_root);

  nlohmann::json create(const nlohmann::json& body);
  nlohmann::json get(const std::string& id);
  nlohmann::json camera(const std::string& id);
  nlohmann::json dance(const std::string& id);
  nlohmann::json patchTags(const std::string& id, const nlohmann::json& body);
  nlohmann::json patchKeyframe(const std::string& id, int frame, const nlohmann::json& body);
  nlohmann::json resynthesize(const std::string& id, const nlohmann::json& body);

  std::shared_ptr<Session> find(const std::string& id);

 private:
  KeyframeTags checkedTags(const nlohmann::json& frames, std::size_t length) const;
  // Re-synthesizes intervals flagged dirty (per policy) and bumps the version.
  nlohmann::json update(Session& s, const std::vector<bool>& dirty, const CameraTrack* previous);
  nlohmann::json sessionJson(const Session& s) const;

  const stage23::Stage23Model& model_;
  const detector::KeyframeDetector* detector_;
  std::filesystem::path data_root_;
  std::mutex sessions_mutex_;
  std::mutex inference_mutex_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  long next_id_ = 1;
};

struct ApiResponse {
  int status = 200;
  nlohmann::json body;
};

// Routes one request; never throws.
ApiResponse dispatch(SessionManager& mgr, const std::string& method, const std::string& path,
                     const std::string& body);

class HttpServer {
 public:
  explicit HttpServer(SessionManager& mgr);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  // Returns the bound port; port 0 picks a free one.
  int bind(const std::string& host, int port);
  void listen();  // blocks until stop()
  void start();   // listen() on a background thread
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace dancecam::pipeline
