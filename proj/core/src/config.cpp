#include "racelab/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace racelab {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

double to_double(std::string_view key, std::string_view v) {
  v = trim(v);
  double out = 0.0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || !std::isfinite(out))
    throw ConfigError(std::string(key) + ": not a number: '" + std::string(v) + "'");
  return out;
}

template <class T = long long>
T to_int(std::string_view key, std::string_view v) {
  v = trim(v);
  T out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size())
    throw ConfigError(std::string(key) + ": not an integer: '" + std::string(v) + "'");
  return out;
}

bool to_bool(std::string_view key, std::string_view v) {
  v = trim(v);
  if (v == "on" || v == "true" || v == "yes" || v == "1") return true;
  if (v == "off" || v == "false" || v == "no" || v == "0") return false;
  throw ConfigError(std::string(key) + ": expected on/off, got '" + std::string(v) + "'");
}

std::vector<std::string_view> split(std::string_view s) {
  std::vector<std::string_view> out;
  while (true) {
    const auto comma = s.find(',');
    out.push_back(trim(s.substr(0, comma)));
    if (comma == std::string_view::npos) break;
    s.remove_prefix(comma + 1);
  }
  return out;
}

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::vector<double> parse_double_list(std::string_view text) {
  std::vector<double> out;
  for (auto item : split(text)) out.push_back(to_double("list", item));
  return out;
}

std::vector<int> parse_int_list(std::string_view text) {
  std::vector<int> out;
  for (auto item : split(text)) out.push_back(to_int<int>("list", item));
  return out;
}

const std::vector<std::string>& RunConfig::keys() {
  static const std::vector<std::string> k = {
      "track",          "mode",           "speed_mph",      "laps",         "seed",        "plan",
      "epochs",         "lr",             "batch",          "out",          "cameras",     "augment",
      "speeds",         "sweep_laps",     "schedule",       "eval_speed_mph", "high_speed_mph", "low_speed_mph",
      "merged_track",   "merged_laps",    "merged_steer_speed_mph", "jobs", "port"};
  return k;
}

void RunConfig::set(std::string_view key, std::string_view value) {
  value = trim(value);
  const std::string k(key);
  if (key == "track") {
    if (value.empty()) throw ConfigError("track: empty");
    track = value;
  } else if (key == "mode") {
    if (value != "fixed" && value != "throttle") throw ConfigError("mode: expected fixed or throttle");
    mode = value;
  } else if (key == "speed_mph") {
    speed_mph = to_double(k, value);
  } else if (key == "laps") {
    laps = to_int<int>(k, value);
  } else if (key == "seed") {
    if (!trim(value).empty() && trim(value).front() == '-') throw ConfigError("seed: must be >= 0");
    seed = to_int<std::uint64_t>(k, value);
  } else if (key == "plan") {
    if (value != "diverse" && value != "center") throw ConfigError("plan: expected diverse or center");
    plan = value;
  } else if (key == "epochs") {
    epochs = to_int<int>(k, value);
  } else if (key == "lr") {
    lr = to_double(k, value);
  } else if (key == "batch") {
    batch = to_int<int>(k, value);
  } else if (key == "out") {
    out = value;
  } else if (key == "cameras") {
    try {
      cameras = parse_camera_selection(value);
    } catch (const Error& e) {
      throw ConfigError(std::string("cameras: ") + e.what());
    }
  } else if (key == "augment") {
    augment = to_bool(k, value);
  } else if (key == "speeds") {
    speeds.clear();
    for (auto item : split(value)) speeds.push_back(to_double(k, item));
  } else if (key == "sweep_laps" || key == "schedule") {
    std::vector<int> v;
    for (auto item : split(value)) v.push_back(to_int<int>(k, item));
    (key == "schedule" ? schedule : sweep_laps) = std::move(v);
  } else if (key == "eval_speed_mph") {
    eval_speed_mph = to_double(k, value);
  } else if (key == "high_speed_mph") {
    high_speed_mph = to_double(k, value);
  } else if (key == "low_speed_mph") {
    low_speed_mph = to_double(k, value);
  } else if (key == "merged_track") {
    merged_track = value;
  } else if (key == "merged_laps") {
    merged_laps = to_int<int>(k, value);
  } else if (key == "merged_steer_speed_mph") {
    merged_steer_speed_mph = to_double(k, value);
  } else if (key == "jobs") {
    jobs = to_int<int>(k, value);
  } else if (key == "port") {
    port = to_int<int>(k, value);
  } else {
    throw ConfigError("unknown key '" + k + "'");
  }
}

namespace {

template <class T>
void check_ascending(const char* key, const std::vector<T>& v) {
  if (v.empty()) throw ConfigError(std::string(key) + ": empty list");
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!(v[i] > 0)) throw ConfigError(std::string(key) + ": values must be positive");
    if (i > 0 && !(v[i] > v[i - 1])) throw ConfigError(std::string(key) + ": values must be strictly ascending");
  }
}

}  // namespace

void RunConfig::validate() const {
  if (!(speed_mph > 0.0)) throw ConfigError("speed_mph: must be positive");
  if (laps < 1) throw ConfigError("laps: must be >= 1");
  if (epochs < 0) throw ConfigError("epochs: must be >= 0 (0 = automatic)");
  if (!(lr > 0.0)) throw ConfigError("lr: must be positive");
  if (batch < 1) throw ConfigError("batch: must be >= 1");
  if (out.empty()) throw ConfigError("out: empty");
  check_ascending("speeds", speeds);
  check_ascending("sweep_laps", sweep_laps);
  check_ascending("schedule", schedule);
  if (!(eval_speed_mph > 0.0)) throw ConfigError("eval_speed_mph: must be positive");
  if (!(high_speed_mph > low_speed_mph && low_speed_mph > 0.0))
    throw ConfigError("high_speed_mph must exceed low_speed_mph > 0");
  if (merged_laps < 1) throw ConfigError("merged_laps: must be >= 1");
  if (!(merged_steer_speed_mph > 0.0)) throw ConfigError("merged_steer_speed_mph: must be positive");
  if (jobs < 1) throw ConfigError("jobs: must be >= 1");
  if (port < 1 || port > 65535) throw ConfigError("port: must be in 1..65535");
}

TrainConfig RunConfig::train_config() const {
  TrainConfig tc;
  tc.lr = lr;
  tc.batch_size = batch;
  tc.epochs = epochs;
  tc.seed = seed;
  tc.augment = augment;
  tc.cameras = cameras;
  return tc;
}

DriveMode RunConfig::drive_mode() const {
  return mode == "throttle" ? DriveMode::throttle() : DriveMode::fixed_speed(mph_to_mps(speed_mph));
}

std::string RunConfig::format() const {
  auto list = [](const auto& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + num(static_cast<double>(v[i]));
    return s;
  };
  std::ostringstream o;
  o << "track = " << track << '\n'
    << "mode = " << mode << '\n'
    << "speed_mph = " << num(speed_mph) << '\n'
    << "laps = " << laps << '\n'
    << "seed = " << seed << '\n'
    << "plan = " << plan << '\n'
    << "epochs = " << epochs << '\n'
    << "lr = " << num(lr) << '\n'
    << "batch = " << batch << '\n'
    << "out = " << out << '\n'
    << "cameras = " << camera_selection_name(cameras) << '\n'
    << "augment = " << (augment ? "on" : "off") << '\n'
    << "speeds = " << list(speeds) << '\n'
    << "sweep_laps = " << list(sweep_laps) << '\n'
    << "schedule = " << list(schedule) << '\n'
    << "eval_speed_mph = " << num(eval_speed_mph) << '\n'
    << "high_speed_mph = " << num(high_speed_mph) << '\n'
    << "low_speed_mph = " << num(low_speed_mph) << '\n'
    << "merged_track = " << merged_track << '\n'
    << "merged_laps = " << merged_laps << '\n'
    << "merged_steer_speed_mph = " << num(merged_steer_speed_mph) << '\n'
    << "jobs = " << jobs << '\n'
    << "port = " << port << '\n';
  return o.str();
}

RunConfig parse_run_config(std::string_view text, std::string_view origin) {
  RunConfig cfg;
  int line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text.remove_prefix(nl == std::string_view::npos ? text.size() : nl + 1);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = std::string(origin) + ":" + std::to_string(line_no) + ": ";
    if (eq == std::string_view::npos) throw ConfigError(where + "expected key = value");
    try {
      cfg.set(trim(line.substr(0, eq)), line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
  }
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot read config " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_run_config(ss.str(), path.string());
}

}  // namespace racelab
