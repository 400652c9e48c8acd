#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "racelab/dataset.hpp"
#include "racelab/eval.hpp"
#include "racelab/expert.hpp"
#include "racelab/nn.hpp"

namespace racelab {

class TrainingError : public Error {
 public:
  using Error::Error;
};

class MergeError : public Error {
 public:
  using Error::Error;
};

struct TrainConfig {
  double lr = kDefaultLearningRate;
  int batch_size = 100;
  int epochs = 0;  ///< 0 selects epochs_for_laps(dataset laps)
  std::uint64_t seed = 1;
  bool augment = true;
  AugmentConfig augmentation;
  CameraSelection cameras = CameraSelection::All;
  double side_correction = kSideCorrection;

  void validate() const;
};

/// 40 epochs per started block of 10 laps.
int epochs_for_laps(std::size_t laps);

struct TrainResult {
  Network model;
  std::vector<double> loss_trace;  ///< mean training loss per epoch
  double final_loss() const { return loss_trace.empty() ? 0.0 : loss_trace.back(); }
};

/// Per-epoch progress callback: (epoch index, mean loss).
using EpochCallback = std::function<void(int, double)>;

TrainResult train_steering(const Dataset& data, const TrainConfig& cfg, const EpochCallback& on_epoch = {});

/// Trains a throttle head on top of the steering model's frozen convolutions.
TrainResult train_throttle(const Dataset& data, const Network& steering, const TrainConfig& cfg,
                           const EpochCallback& on_epoch = {});

/// Shared convolutional backbone feeding a steering head and a throttle head.
struct MergedModel {
  Network backbone;
  Network steering_head;
  Network throttle_head;

  friend bool operator==(const MergedModel&, const MergedModel&) = default;
};

MergedModel merge_models(const Network& steering, const Network& throttle);

struct JointPrediction {
  double steering = 0.0;
  double throttle = 0.0;
};

/// One backbone pass per batch, then both heads.
std::vector<JointPrediction> predict(const MergedModel& model, const TensorD& batch);

std::string encode_merged_model(const MergedModel& m);
MergedModel decode_merged_model(std::string_view bytes);
void save_merged_model(const MergedModel& m, const std::filesystem::path& path);
MergedModel load_merged_model(const std::filesystem::path& path);

/// Loads a steering model (E2EM) or a merged model (E2MM), chosen by file magic.
std::unique_ptr<Policy> load_policy(const std::filesystem::path& path);

struct CriteriaThresholds {
  double eval_speed_mph = 20.0;
  /// ALT must not exceed this multiple of the scripted expert's ALT under the same mode.
  double alt_factor = 1.1;
  bool require_edge_clean = true;
};

struct CriteriaOutcome {
  bool five_laps = false;
  std::optional<double> alt_s;
  bool alt_ok = false;
  bool edge_clean = false;
  bool passed = false;
};

struct AuditEntry {
  int iter = 0;
  int laps_total = 0;
  CriteriaOutcome criteria;
  double train_loss_final = 0.0;
};

std::string audit_json(const AuditEntry& e);

struct PolicyIterationResult {
  Network steering;
  std::optional<MergedModel> merged;  ///< throttle mode only
  std::vector<AuditEntry> audit;
  bool success = false;
  int best_iter = 0;
};

struct PolicyIterationOptions {
  TrainConfig train;
  CollectOptions collect;
  RolloutOptions rollout;
  /// Fixed mode: collection speed. Throttle mode: speed of the fixed-speed
  /// collection the steering model is trained on.
  double collect_speed_mph = 50.0;
  /// NDJSON audit log; one line per iteration when set.
  std::optional<std::filesystem::path> audit_path;
};

/// Collect, train, evaluate; grows the lap budget along `schedule` until the
/// criteria hold. Exhausting the schedule is reported, not thrown.
PolicyIterationResult policy_iteration(const Track& track, const DriveMode& mode, const std::vector<int>& schedule,
                                       const CriteriaThresholds& thresholds, std::uint64_t seed,
                                       const PolicyIterationOptions& opts = {});

CriteriaOutcome evaluate_criteria(Policy& policy, const Track& track, const DriveMode& mode,
                                  const CriteriaThresholds& thresholds, const RolloutOptions& opts = {});

}  // namespace racelab
