#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "racelab/pipeline.hpp"

namespace racelab {

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// `key = value` run configuration. Lines may carry `#` comments.
struct RunConfig {
  std::string track = "A";
  std::string mode = "fixed";  ///< fixed | throttle
  double speed_mph = 50.0;
  int laps = 2;
  std::uint64_t seed = 1;
  std::string plan = "diverse";  ///< diverse | center
  int epochs = 0;
  double lr = kDefaultLearningRate;
  int batch = 100;
  std::string out = "out";
  CameraSelection cameras = CameraSelection::All;
  bool augment = true;
  std::vector<double> speeds = kDefaultSpeedGrid;
  std::vector<int> sweep_laps = {1, 2, 4, 8};
  std::vector<int> schedule = {2, 4, 8};
  double eval_speed_mph = 20.0;
  double high_speed_mph = 80.0;
  double low_speed_mph = 30.0;
  std::string merged_track = "B";
  int merged_laps = 4;
  double merged_steer_speed_mph = 80.0;
  int jobs = 1;
  int port = 8700;

  /// Sets one key from its text form; throws ConfigError on unknown keys or bad values.
  void set(std::string_view key, std::string_view value);
  void validate() const;
  TrainConfig train_config() const;
  DriveMode drive_mode() const;
  /// Canonical `key = value` text, one key per line in a fixed order.
  std::string format() const;

  static const std::vector<std::string>& keys();
};

RunConfig parse_run_config(std::string_view text, std::string_view origin = "<memory>");
RunConfig load_run_config(const std::filesystem::path& path);

std::vector<double> parse_double_list(std::string_view text);
std::vector<int> parse_int_list(std::string_view text);

}  // namespace racelab
