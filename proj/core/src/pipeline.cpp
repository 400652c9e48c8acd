#include "racelab/pipeline.hpp"

#include <algorithm>
#include <bit>
#include <cstdio>
#include <fstream>

namespace racelab {

void TrainConfig::validate() const {
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ParameterError("lr must be positive");
  if (batch_size < 1) throw ParameterError("batch_size must be >= 1");
  if (epochs < 0) throw ParameterError("epochs must be >= 1 (or 0 for automatic)");
  if (augmentation.max_dx < 0 || augmentation.max_dy < 0) throw ParameterError("augmentation shifts must be >= 0");
  if (!(side_correction >= 0.0 && side_correction <= 1.0)) throw ParameterError("side_correction must be in [0, 1]");
}

int epochs_for_laps(std::size_t laps) {
  const std::size_t blocks = std::max<std::size_t>(1, (laps + 9) / 10);
  return static_cast<int>(40 * blocks);
}

namespace {

enum class Target { Steering, Throttle };

void fill_batch(const std::vector<Image>& images, std::size_t count, TensorD& batch) {
  const std::size_t h = static_cast<std::size_t>(images[0].height()), w = static_cast<std::size_t>(images[0].width());
  const std::size_t px = h * w;
  if (batch.shape != std::vector<std::size_t>{count, 1, h, w}) batch = TensorD({count, 1, h, w});
  for (std::size_t n = 0; n < count; ++n) {
    const auto bytes = images[n].bytes();
    double* dst = batch.ptr() + n * px;
    for (std::size_t k = 0; k < px; ++k) dst[k] = bytes[k] / 255.0;
  }
}

TrainResult fit(Network net, const std::vector<TrainingExample>& examples, Target target, const TrainConfig& cfg,
                std::size_t laps, const EpochCallback& on_epoch) {
  const int epochs = cfg.epochs > 0 ? cfg.epochs : epochs_for_laps(laps);
  const std::size_t n = examples.size();
  const std::size_t bs = std::min<std::size_t>(static_cast<std::size_t>(cfg.batch_size), n);

  Rng rng(derive_seed(cfg.seed, target == Target::Steering ? 0x73746572 : 0x7468726f));
  AdamState adam = AdamState::for_network(net);
  ForwardCache cache;
  Gradients grads;
  TensorD batch, labels;
  std::vector<Image> images(bs);
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;

  std::vector<double> trace;
  for (int epoch = 0; epoch < epochs; ++epoch) {
    rng.shuffle(order);
    double loss_sum = 0.0;
    for (std::size_t begin = 0; begin < n; begin += bs) {
      const std::size_t count = std::min(bs, n - begin);
      if (labels.shape != std::vector<std::size_t>{count, 1}) labels = TensorD({count, 1});
      for (std::size_t j = 0; j < count; ++j) {
        const TrainingExample& src = examples[order[begin + j]];
        if (cfg.augment) {
          TrainingExample ex = augment(src, rng, cfg.augmentation);
          images[j] = std::move(ex.image);
          labels[j] = target == Target::Steering ? ex.steering : ex.throttle;
        } else {
          images[j] = src.image;
          labels[j] = target == Target::Steering ? src.steering : src.throttle;
        }
      }
      fill_batch(images, count, batch);
      const TensorD pred = forward(net, batch, &cache);
      const LossResult loss = mse(pred, labels);
      if (!std::isfinite(loss.value))
        throw TrainingError("training diverged at epoch " + std::to_string(epoch + 1) + " (non-finite loss)");
      backward(net, cache, loss.grad, grads);
      adam_step(net, grads, adam, cfg.lr);
      loss_sum += loss.value * static_cast<double>(count);
    }
    const double mean = loss_sum / static_cast<double>(n);
    trace.push_back(mean);
    if (on_epoch) on_epoch(epoch, mean);
  }
  return TrainResult{std::move(net), std::move(trace)};
}

}  // namespace

TrainResult train_steering(const Dataset& data, const TrainConfig& cfg, const EpochCallback& on_epoch) {
  cfg.validate();
  if (data.empty()) throw TrainingError("cannot train on an empty dataset");
  const auto examples = to_training_examples(data, cfg.side_correction, cfg.cameras);
  Network net = init_network("steering_net", derive_seed(cfg.seed, 1));
  return fit(std::move(net), examples, Target::Steering, cfg, data.lap_count(), on_epoch);
}

TrainResult train_throttle(const Dataset& data, const Network& steering, const TrainConfig& cfg,
                           const EpochCallback& on_epoch) {
  cfg.validate();
  if (data.empty()) throw TrainingError("cannot train on an empty dataset");
  double mean = 0.0, sq = 0.0;
  for (const Sample& s : data.samples()) mean += s.throttle;
  mean /= static_cast<double>(data.size());
  for (const Sample& s : data.samples()) sq += (s.throttle - mean) * (s.throttle - mean);
  if (sq / static_cast<double>(data.size()) < 1e-6) throw TrainingError("throttle labels carry no signal");
  const auto examples = to_training_examples(data, cfg.side_correction, cfg.cameras);
  Network net = transplant_conv(init_network("throttle_head", derive_seed(cfg.seed, 2)), steering);
  return fit(std::move(net), examples, Target::Throttle, cfg, data.lap_count(), on_epoch);
}

MergedModel merge_models(const Network& steering, const Network& throttle) {
  if (!same_conv_stack(steering, throttle))
    throw MergeError("convolution stacks differ; the throttle model was not trained on the steering backbone");
  const std::size_t k = steering.conv_stack_size();
  MergedModel m{steering.slice(0, k), steering.slice(k, steering.layer_count()),
                throttle.slice(k, throttle.layer_count())};
  if (m.steering_head.output_shape().size() != 1 || m.throttle_head.output_shape().size() != 1)
    throw MergeError("heads must produce one output each");
  return m;
}

std::vector<JointPrediction> predict(const MergedModel& model, const TensorD& batch) {
  const TensorD features = forward(model.backbone, batch);
  const TensorD s = forward(model.steering_head, features);
  const TensorD t = forward(model.throttle_head, features);
  std::vector<JointPrediction> out(batch.rows());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = {s[i], t[i]};
  return out;
}

namespace {

constexpr char kMergedMagic[4] = {'E', '2', 'M', 'M'};
constexpr std::uint32_t kMergedVersion = 1;

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint32_t get_u32(std::string_view bytes, std::size_t& pos) {
  if (bytes.size() - pos < 4) throw ModelFormatError("merged model truncated");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[pos + i])) << (8 * i);
  pos += 4;
  return v;
}

}  // namespace

std::string encode_merged_model(const MergedModel& m) {
  std::string out(kMergedMagic, 4);
  put_u32(out, kMergedVersion);
  for (const Network* n : {&m.backbone, &m.steering_head, &m.throttle_head}) {
    const std::string blob = encode_model(*n);
    put_u32(out, static_cast<std::uint32_t>(blob.size()));
    out += blob;
  }
  return out;
}

MergedModel decode_merged_model(std::string_view bytes) {
  if (bytes.size() < 8 || bytes.substr(0, 4) != std::string_view(kMergedMagic, 4))
    throw ModelFormatError("not a merged model (bad magic)");
  std::size_t pos = 4;
  const std::uint32_t version = get_u32(bytes, pos);
  if (version != kMergedVersion) throw ModelFormatError("unsupported merged model version " + std::to_string(version));
  std::vector<Network> parts;
  for (int i = 0; i < 3; ++i) {
    const std::uint32_t len = get_u32(bytes, pos);
    if (bytes.size() - pos < len) throw ModelFormatError("merged model truncated");
    parts.push_back(decode_model(bytes.substr(pos, len)));
    pos += len;
  }
  if (pos != bytes.size()) throw ModelFormatError("trailing bytes after merged model");
  if (parts[0].output_shape().size() != parts[1].input_shape().size() ||
      parts[0].output_shape().size() != parts[2].input_shape().size())
    throw ModelFormatError("merged model parts do not connect");
  return MergedModel{std::move(parts[0]), std::move(parts[1]), std::move(parts[2])};
}

void save_merged_model(const MergedModel& m, const std::filesystem::path& path) {
  const std::string bytes = encode_merged_model(m);
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw Error("cannot write " + tmp.string());
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw Error("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

MergedModel load_merged_model(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ModelFormatError("cannot open " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode_merged_model(bytes);
}

std::unique_ptr<Policy> load_policy(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ModelFormatError("cannot open model " + path.string());
  char magic[4] = {};
  f.read(magic, 4);
  if (std::string_view(magic, 4) == std::string_view(kMergedMagic, 4))
    return std::make_unique<MergedPolicy>(load_merged_model(path));
  return std::make_unique<NetworkPolicy>(load_model(path));
}

namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

std::string audit_json(const AuditEntry& e) {
  std::string s = "{\"iter\":" + std::to_string(e.iter) + ",\"laps_total\":" + std::to_string(e.laps_total) +
                  ",\"criteria\":{\"five_laps\":" + (e.criteria.five_laps ? "true" : "false") + ",\"alt_s\":" +
                  (e.criteria.alt_s ? fmt(*e.criteria.alt_s) : "null") +
                  ",\"edge_clean\":" + (e.criteria.edge_clean ? "true" : "false") +
                  "},\"passed\":" + (e.criteria.passed ? "true" : "false") +
                  ",\"train_loss_final\":" + fmt(e.train_loss_final) + "}";
  return s;
}

CriteriaOutcome evaluate_criteria(Policy& policy, const Track& track, const DriveMode& mode,
                                  const CriteriaThresholds& thresholds, const RolloutOptions& opts) {
  const EvalReport r = rollout(policy, track, mode, opts);
  CriteriaOutcome c;
  c.five_laps = r.completed();
  c.alt_s = r.avg_lap_time;
  c.edge_clean = r.completed() && r.edge_clean();
  if (c.alt_s) {
    PurePursuitPolicy expert(track, 0.0, {}, opts.vehicle);
    const EvalReport ref = rollout(expert, track, mode, opts);
    c.alt_ok = ref.avg_lap_time && *c.alt_s <= thresholds.alt_factor * *ref.avg_lap_time;
  }
  c.passed = c.five_laps && c.alt_ok && (c.edge_clean || !thresholds.require_edge_clean);
  return c;
}

PolicyIterationResult policy_iteration(const Track& track, const DriveMode& mode, const std::vector<int>& schedule,
                                       const CriteriaThresholds& thresholds, std::uint64_t seed,
                                       const PolicyIterationOptions& opts) {
  if (schedule.empty()) throw ParameterError("lap schedule is empty");
  for (std::size_t i = 0; i < schedule.size(); ++i) {
    if (schedule[i] < 1) throw ParameterError("lap schedule entries must be >= 1");
    if (i > 0 && schedule[i] <= schedule[i - 1]) throw ParameterError("lap schedule must be strictly ascending");
  }
  const int max_laps = schedule.back();
  const DiversityPlan plan = make_plan(seed, max_laps, track, opts.collect.expert, opts.collect.vehicle);
  const Dataset steer_data =
      collect(track, DriveMode::fixed_speed(mph_to_mps(opts.collect_speed_mph)), max_laps, plan, seed, opts.collect);
  std::optional<Dataset> throttle_data;
  if (!mode.is_fixed()) throttle_data = collect(track, DriveMode::throttle(), max_laps, plan, seed, opts.collect);
  const DriveMode eval_mode = mode.is_fixed() ? DriveMode::fixed_speed(mph_to_mps(thresholds.eval_speed_mph)) : mode;

  TrainConfig tc = opts.train;
  tc.seed = seed;
  std::optional<std::ofstream> log;
  if (opts.audit_path) {
    log.emplace(*opts.audit_path, std::ios::trunc);
    if (!*log) throw Error("cannot write " + opts.audit_path->string());
  }

  std::optional<Network> best;
  std::optional<MergedModel> best_merged;
  std::vector<AuditEntry> audit;
  int best_iter = 0;
  bool success = false;
  int best_score = -1;
  for (std::size_t i = 0; i < schedule.size(); ++i) {
    const auto n = static_cast<std::size_t>(schedule[i]);
    TrainResult steer = train_steering(steer_data.laps(0, n), tc);
    AuditEntry e;
    e.iter = static_cast<int>(i) + 1;
    e.laps_total = schedule[i];
    std::optional<MergedModel> merged;
    if (mode.is_fixed()) {
      NetworkPolicy policy(steer.model);
      e.criteria = evaluate_criteria(policy, track, eval_mode, thresholds, opts.rollout);
      e.train_loss_final = steer.final_loss();
    } else {
      TrainResult thr = train_throttle(throttle_data->laps(0, n), steer.model, tc);
      merged = merge_models(steer.model, thr.model);
      MergedPolicy policy(*merged);
      e.criteria = evaluate_criteria(policy, track, eval_mode, thresholds, opts.rollout);
      e.train_loss_final = thr.final_loss();
    }
    audit.push_back(e);
    if (log) *log << audit_json(e) << '\n' << std::flush;

    const int score = (e.criteria.passed ? 8 : 0) + (e.criteria.five_laps ? 4 : 0) + (e.criteria.alt_ok ? 2 : 0) +
                      (e.criteria.edge_clean ? 1 : 0);
    if (score >= best_score) {
      best_score = score;
      best = std::move(steer.model);
      best_merged = std::move(merged);
      best_iter = e.iter;
    }
    if (e.criteria.passed) {
      success = true;
      break;
    }
  }
  return PolicyIterationResult{std::move(*best), std::move(best_merged), std::move(audit), success, best_iter};
}

}  // namespace racelab
