#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "racelab/dataset.hpp"
#include "racelab/eval.hpp"
#include "racelab/track.hpp"
#include "racelab/vehicle.hpp"
#include "racelab/vision.hpp"

namespace racelab {

enum class SessionMode { Idle, Drive, Spectate };
std::string_view session_mode_name(SessionMode m);

/// Simulation and recording state behind the websocket. Not thread safe; the
/// server calls it from one loop only.
class TeleopSession {
 public:
  TeleopSession(Track track, DriveMode mode, VehicleParams params = {}, CameraRig rig = {});
  ~TeleopSession();

  /// Applies one client message. Returns the frames to send back to that
  /// client only (errors and acknowledgements).
  std::vector<std::string> handle_message(std::string_view text);

  /// Advances one simulation step (dt_sim). Every kStepsPerControl-th call
  /// samples control, records and returns the broadcast frames for that tick.
  std::vector<std::string> step();

  /// Runs whole control periods; returns every broadcast frame produced.
  std::vector<std::string> advance(double seconds);

  /// Sent once to each client on connect.
  std::string track_message() const;
  std::string state_message() const;
  std::string frames_message() const;

  SessionMode mode() const { return mode_; }
  bool recording() const { return recording_; }
  const Dataset& buffer() const { return buffer_; }
  const CarState& car() const { return car_; }
  std::uint64_t seq() const { return seq_; }

 private:
  void reset_pose();
  void record_sample(double steering, double throttle);
  std::vector<std::string> control_tick();

  Track track_;
  DriveMode drive_mode_;
  VehicleParams params_;
  Renderer renderer_;
  SessionMode mode_ = SessionMode::Idle;
  CarState car_;
  double station_ = 0.0;
  double progress_ = 0.0;
  Control pending_;
  Control applied_;
  bool recording_ = false;
  Dataset buffer_;
  std::int64_t record_ticks_ = 0;
  std::uint64_t sim_steps_ = 0;
  std::uint64_t seq_ = 0;
  std::unique_ptr<Policy> spectator_;
};

struct ServerOptions {
  unsigned short port = 8700;
  std::filesystem::path ui_dir;
  /// Stop after this many seconds (0 = run until interrupted).
  double run_seconds = 0.0;
  /// Called with the bound port once listening (useful with port 0).
  std::function<void(unsigned short)> on_listening;
};

/// HTTP static files from ui_dir at `/` plus the websocket protocol on any
/// upgrade request. Blocks until stopped.
void serve(TeleopSession& session, const ServerOptions& opts);

}  // namespace racelab
