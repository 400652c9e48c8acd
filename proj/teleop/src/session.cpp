#include <boost/beast/core/detail/base64.hpp>
#include <nlohmann/json.hpp>

#include "racelab/pipeline.hpp"
#include "racelab/teleop.hpp"

namespace racelab {

using nlohmann::json;

std::string_view session_mode_name(SessionMode m) {
  switch (m) {
    case SessionMode::Idle:
      return "idle";
    case SessionMode::Drive:
      return "drive";
    case SessionMode::Spectate:
      return "spectate";
  }
  return "?";
}

namespace {

std::string error_frame(const std::string& msg) { return json{{"type", "error"}, {"msg", msg}}.dump(); }

std::string base64(const std::string& bytes) {
  namespace b64 = boost::beast::detail::base64;
  std::string out(b64::encoded_size(bytes.size()), '\0');
  out.resize(b64::encode(out.data(), bytes.data(), bytes.size()));
  return out;
}

double number_field(const json& j, const char* key) {
  if (!j.contains(key) || !j[key].is_number()) throw std::invalid_argument(std::string("missing numeric field '") + key + "'");
  const double v = j[key].get<double>();
  if (!std::isfinite(v)) throw std::invalid_argument(std::string("non-finite field '") + key + "'");
  return v;
}

}  // namespace

TeleopSession::TeleopSession(Track track, DriveMode mode, VehicleParams params, CameraRig rig)
    : track_(std::move(track)), drive_mode_(mode), params_(params), renderer_(track_, rig) {
  if (drive_mode_.is_fixed() && !(drive_mode_.speed > 0.0)) throw ParameterError("fixed-speed session needs a positive speed");
  DatasetMeta meta;
  meta.track = track_.name();
  meta.mode = drive_mode_.is_fixed() ? "fixed" : "throttle";
  meta.speed_mph = drive_mode_.is_fixed() ? quantize6(mps_to_mph(drive_mode_.speed)) : 0.0;
  meta.version = kVersion;
  buffer_ = Dataset(meta, {});
  reset_pose();
}

TeleopSession::~TeleopSession() = default;

void TeleopSession::reset_pose() {
  car_ = start_state(track_, 0.0, 0.0, drive_mode_.is_fixed() ? drive_mode_.speed : 0.0);
  station_ = track_.project({car_.x, car_.y}).station;
  progress_ = 0.0;
  pending_ = applied_ = {};
}

std::vector<std::string> TeleopSession::handle_message(std::string_view text) {
  json msg;
  try {
    msg = json::parse(text);
  } catch (const json::exception& e) {
    return {error_frame(std::string("malformed JSON: ") + e.what())};
  }
  if (!msg.is_object() || !msg.contains("type") || !msg["type"].is_string())
    return {error_frame("message must be an object with a string 'type'")};
  const std::string type = msg["type"];
  try {
    if (type == "control") {
      const double s = number_field(msg, "steering"), t = number_field(msg, "throttle");
      if (mode_ == SessionMode::Spectate) return {};
      if (mode_ == SessionMode::Idle) mode_ = SessionMode::Drive;
      pending_ = {clamp(s, -1.0, 1.0), clamp(t, 0.0, 1.0)};
      return {};
    }
    if (type == "record") {
      if (!msg.contains("on") || !msg["on"].is_boolean()) throw std::invalid_argument("missing boolean field 'on'");
      const bool on = msg["on"];
      if (on && mode_ == SessionMode::Spectate) return {error_frame("recording is only available in drive mode")};
      if (on && mode_ == SessionMode::Idle) mode_ = SessionMode::Drive;
      recording_ = on;
      return {json{{"type", "ack"}, {"of", "record"}, {"recording", recording_}}.dump()};
    }
    if (type == "delete_range") {
      const double from = number_field(msg, "from"), to = number_field(msg, "to");
      if (from < 0 || to < 0 || from != std::floor(from) || to != std::floor(to))
        throw std::invalid_argument("'from' and 'to' must be non-negative integers");
      buffer_ = remove_range(buffer_, static_cast<std::size_t>(from), static_cast<std::size_t>(to));
      return {json{{"type", "ack"}, {"of", "delete_range"}, {"sample_count", buffer_.size()}}.dump()};
    }
    if (type == "save") {
      if (!msg.contains("dir") || !msg["dir"].is_string() || msg["dir"].get<std::string>().empty())
        throw std::invalid_argument("missing string field 'dir'");
      save_dataset(buffer_, msg["dir"].get<std::string>());
      return {json{{"type", "ack"}, {"of", "save"}, {"dir", msg["dir"]}, {"sample_count", buffer_.size()}}.dump()};
    }
    if (type == "spectate") {
      if (!msg.contains("model_path") || !msg["model_path"].is_string())
        throw std::invalid_argument("missing string field 'model_path'");
      const std::string path = msg["model_path"];
      if (path.empty()) {
        spectator_.reset();
        mode_ = SessionMode::Drive;
      } else {
        auto policy = load_policy(path);
        if (!drive_mode_.is_fixed() && !policy->has_throttle())
          return {error_frame("throttle-mode session needs a merged model")};
        spectator_ = std::move(policy);
        mode_ = SessionMode::Spectate;
        recording_ = false;
      }
      return {json{{"type", "ack"}, {"of", "spectate"}, {"mode", session_mode_name(mode_)}}.dump()};
    }
    if (type == "reset") {
      reset_pose();
      return {state_message()};
    }
  } catch (const std::exception& e) {
    return {error_frame(type + ": " + e.what())};
  }
  return {error_frame("unknown message type '" + type + "'")};
}

void TeleopSession::record_sample(double steering, double throttle) {
  Sample s;
  s.time = quantize6(static_cast<double>(record_ticks_) * kControlPeriod);
  s.lap = static_cast<int>(std::floor(progress_ / track_.total_length()));
  for (CameraId cam : kCameras) s.images[static_cast<std::size_t>(cam)] = renderer_.render(car_, cam);
  s.steering = quantize6(steering);
  s.throttle = quantize6(drive_mode_.is_fixed() ? params_.k_drag * drive_mode_.speed / params_.a_max : throttle);
  s.speed = quantize6(car_.speed);
  buffer_.append(std::move(s));
  ++record_ticks_;
}

std::vector<std::string> TeleopSession::control_tick() {
  if (mode_ == SessionMode::Spectate && spectator_) {
    const Control u = spectator_->act(renderer_.render(car_, CameraId::Center), car_);
    applied_ = {clamp(u.steering, -1.0, 1.0), clamp(u.throttle, 0.0, 1.0)};
  } else if (mode_ == SessionMode::Drive) {
    applied_ = pending_;
  } else {
    applied_ = {};
  }
  if (recording_ && mode_ == SessionMode::Drive) record_sample(applied_.steering, applied_.throttle);
  ++seq_;
  return {state_message(), frames_message()};
}

std::vector<std::string> TeleopSession::step() {
  std::vector<std::string> out;
  if (sim_steps_ % kStepsPerControl == 0) out = control_tick();
  ++sim_steps_;
  if (mode_ == SessionMode::Idle) return out;
  car_ = racelab::step(car_, applied_.steering, applied_.throttle, drive_mode_, params_);
  const Projection p = track_.project({car_.x, car_.y});
  const double length = track_.total_length();
  double ds = p.station - station_;
  if (ds > length / 2.0) ds -= length;
  if (ds < -length / 2.0) ds += length;
  progress_ += ds;
  station_ = p.station;
  if (std::abs(p.lateral) > track_.half_width()) {
    out.push_back(json{{"type", "event"}, {"what", "off_track"}, {"station", p.station}}.dump());
    recording_ = false;
    reset_pose();
  }
  return out;
}

std::vector<std::string> TeleopSession::advance(double seconds) {
  std::vector<std::string> out;
  const auto steps = static_cast<std::int64_t>(std::llround(seconds / params_.dt_sim));
  for (std::int64_t i = 0; i < steps; ++i) {
    auto frames = step();
    out.insert(out.end(), std::make_move_iterator(frames.begin()), std::make_move_iterator(frames.end()));
  }
  return out;
}

std::string TeleopSession::track_message() const {
  json pts = json::array();
  for (const Vec2& w : track_.waypoints()) pts.push_back({w.x, w.y});
  return json{{"type", "track"},
              {"name", track_.name()},
              {"waypoints", pts},
              {"half_width", track_.half_width()},
              {"total_length", track_.total_length()}}
      .dump();
}

std::string TeleopSession::state_message() const {
  const Projection p = track_.project({car_.x, car_.y});
  return json{{"type", "state"},
              {"seq", seq_},
              {"x", car_.x},
              {"y", car_.y},
              {"heading", car_.heading},
              {"speed_mps", car_.speed},
              {"lap", static_cast<int>(std::floor(progress_ / track_.total_length()))},
              {"station", p.station},
              {"lateral", p.lateral},
              {"recording", recording_},
              {"sample_count", buffer_.size()},
              {"mode", session_mode_name(mode_)},
              {"steering", applied_.steering},
              {"throttle", applied_.throttle}}
      .dump();
}

std::string TeleopSession::frames_message() const {
  json j{{"type", "frames"}, {"seq", seq_}};
  for (CameraId cam : kCameras) j[std::string(camera_name(cam))] = base64(encode_pgm(renderer_.render(car_, cam)));
  return j.dump();
}

}  // namespace racelab
