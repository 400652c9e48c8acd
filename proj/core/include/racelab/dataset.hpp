#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "racelab/vision.hpp"

namespace racelab {

/// One 10 Hz record: three camera images plus the commands and speed at that tick.
struct Sample {
  double time = 0.0;
  int lap = 0;
  std::array<Image, 3> images;  ///< indexed by CameraId
  double steering = 0.0;
  double throttle = 0.0;
  double speed = 0.0;  ///< m/s

  const Image& image(CameraId cam) const { return images[static_cast<std::size_t>(cam)]; }
  friend bool operator==(const Sample&, const Sample&) = default;
};

struct DatasetMeta {
  std::string track;
  std::string mode = "fixed";  ///< "fixed" or "throttle"
  double speed_mph = 0.0;      ///< collection speed; 0 in throttle mode
  int n_laps = 0;
  std::uint64_t seed = 0;
  std::string version;
  std::vector<std::string> edits;  ///< human-readable history of corrections and merges

  friend bool operator==(const DatasetMeta&, const DatasetMeta&) = default;
};

class DatasetError : public Error {
 public:
  using Error::Error;
};

/// Ordered samples grouped into laps. Lap boundaries are wherever the lap
/// column changes value.
class Dataset {
 public:
  Dataset() = default;
  Dataset(DatasetMeta meta, std::vector<Sample> samples);

  const DatasetMeta& meta() const { return meta_; }
  DatasetMeta& meta() { return meta_; }
  const std::vector<Sample>& samples() const { return samples_; }
  std::size_t size() const { return samples_.size(); }
  bool empty() const { return samples_.empty(); }
  const std::vector<std::size_t>& lap_offsets() const { return lap_offsets_; }
  std::size_t lap_count() const { return lap_offsets_.size(); }

  /// Appends a sample, keeping lap offsets and meta.n_laps current.
  void append(Sample s);

  /// Samples of laps [first, first + count).
  Dataset laps(std::size_t first, std::size_t count) const;

  friend bool operator==(const Dataset&, const Dataset&) = default;

 private:
  void rebuild_offsets();

  DatasetMeta meta_;
  std::vector<Sample> samples_;
  std::vector<std::size_t> lap_offsets_;
};

void save_dataset(const Dataset& d, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

/// Removes samples [from, to] inclusive.
Dataset remove_range(const Dataset& d, std::size_t from, std::size_t to);

/// Concatenates b after a; b's laps are renumbered to follow a's.
Dataset merge(const Dataset& a, const Dataset& b);

enum class CameraSelection { All, Center };
CameraSelection parse_camera_selection(std::string_view text);
std::string_view camera_selection_name(CameraSelection sel);

inline constexpr double kSideCorrection = 0.15;

/// Each sample yields its center image with the recorded steering and, with
/// CameraSelection::All, side images with steering corrected back toward the
/// car's path (left camera +correction, right camera -correction).
std::vector<TrainingExample> to_training_examples(const Dataset& d, double side_correction = kSideCorrection,
                                                  CameraSelection cameras = CameraSelection::All);

}  // namespace racelab
