#include <CLI11.hpp>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>

#include "racelab/config.hpp"
#include "racelab/sweep.hpp"
#ifdef RACELAB_HAVE_TELEOP
#include "racelab/teleop.hpp"
#endif

namespace fs = std::filesystem;
using namespace racelab;
using ojson = nlohmann::ordered_json;

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Common {
  std::string config;
  std::vector<std::string> sets;
  std::vector<std::pair<std::string, std::string>> flags;
};

/// Registers `--name` as an override of config key `key`.
void flag(CLI::App* app, Common& c, const std::string& name, const std::string& key, const std::string& help) {
  app->add_option_function<std::string>(
      "--" + name, [&c, key](const std::string& v) { c.flags.emplace_back(key, v); }, help);
}

RunConfig resolve(const Common& c) {
  RunConfig cfg = c.config.empty() ? RunConfig{} : load_run_config(c.config);
  for (const auto& kv : c.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  for (const auto& [k, v] : c.flags) cfg.set(k, v);
  cfg.validate();
  return cfg;
}

void write_text(const fs::path& path, const std::string& text) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw Error("cannot write " + path.string());
    f << text;
    if (!f) throw Error("write failed: " + path.string());
  }
  fs::rename(tmp, path);
}

fs::path out_dir(const RunConfig& cfg) {
  fs::create_directories(cfg.out);
  return cfg.out;
}

void write_run_json(const RunConfig& cfg, const std::string& command, const ojson& inputs) {
  ojson j;
  j["command"] = command;
  ojson conf = ojson::object();
  const std::string text = cfg.format();
  std::size_t pos = 0;
  while (pos < text.size()) {
    const auto nl = text.find('\n', pos);
    const std::string line = text.substr(pos, nl - pos);
    const auto eq = line.find(" = ");
    conf[line.substr(0, eq)] = line.substr(eq + 3);
    pos = nl + 1;
  }
  j["config"] = conf;
  j["seeds"] = {{"seed", cfg.seed}};
  j["inputs"] = inputs;
  j["versions"] = {{"racelab", kVersion}, {"model_format", kModelFormatVersion}};
  write_text(out_dir(cfg) / "run.json", j.dump(2) + "\n");
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

ojson report_json(const EvalReport& r) {
  ojson j;
  j["mode"] = r.mode.is_fixed() ? "fixed" : "throttle";
  j["speed_mph"] = r.mode.is_fixed() ? ojson(quantize6(mps_to_mph(r.mode.speed))) : ojson(nullptr);
  j["laps_requested"] = r.laps_requested;
  j["laps_completed"] = r.laps_completed;
  j["collided"] = r.collided;
  j["collision"] = r.collided ? ojson{{"lap", r.collision_lap}, {"station", r.collision_station}, {"lateral", r.collision_lateral}} : ojson(nullptr);
  j["timed_out"] = r.timed_out;
  j["lap_times"] = r.lap_times;
  j["avg_lap_time"] = r.avg_lap_time ? ojson(*r.avg_lap_time) : ojson(nullptr);
  j["edge_touches"] = r.edge_touches;
  j["completed"] = r.completed();
  return j;
}

EpochCallback progress(const char* what) {
  return [what](int epoch, double loss) {
    if (epoch == 0 || (epoch + 1) % 10 == 0) std::fprintf(stderr, "%s epoch %d loss %.6f\n", what, epoch + 1, loss);
  };
}

void write_loss(const fs::path& path, const std::vector<double>& trace) {
  std::string s = "epoch,loss\n";
  for (std::size_t i = 0; i < trace.size(); ++i) s += std::to_string(i + 1) + "," + fmt("%.9g", trace[i]) + "\n";
  write_text(path, s);
}

Dataset load_many(const std::vector<std::string>& dirs) {
  Dataset d;
  for (const auto& dir : dirs) d = merge(d, load_dataset(dir));
  return d;
}

std::unique_ptr<Policy> policy_for(const std::string& model, const Track& track) {
  if (model == "expert") return std::make_unique<PurePursuitPolicy>(track);
  return load_policy(model);
}

DiversityPlan plan_for(const RunConfig& cfg, const Track& track, int laps) {
  return cfg.plan == "center" ? center_plan(laps, track) : make_plan(cfg.seed, laps, track, {}, {});
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"racelab: desk-scale end-to-end racing lab"};
  app.require_subcommand(1);
  Common c;
  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", c.config, "key = value config file")->check(CLI::ExistingFile);
    sub->add_option("--set", c.sets, "override any config key (key=value)");
    flag(sub, c, "out", "out", "output directory");
    flag(sub, c, "seed", "seed", "random seed");
  };
  auto train_flags = [&](CLI::App* sub) {
    flag(sub, c, "epochs", "epochs", "epochs (0 = automatic)");
    flag(sub, c, "lr", "lr", "Adam learning rate");
    flag(sub, c, "batch", "batch", "mini-batch size");
    flag(sub, c, "cameras", "cameras", "all | center");
    flag(sub, c, "augment", "augment", "on | off");
  };

  auto* tracks = app.add_subcommand("tracks", "list built-in tracks");
  common(tracks);

  auto* collect_cmd = app.add_subcommand("collect", "record expert laps");
  common(collect_cmd);
  flag(collect_cmd, c, "track", "track", "A, B or a track file");
  flag(collect_cmd, c, "mode", "mode", "fixed | throttle");
  flag(collect_cmd, c, "speed-mph", "speed_mph", "fixed-mode speed");
  flag(collect_cmd, c, "laps", "laps", "number of laps");
  flag(collect_cmd, c, "plan", "plan", "diverse | center");

  std::vector<std::string> data_dirs;
  std::string steering_path, throttle_path, model_path;

  auto* train_s = app.add_subcommand("train-steering", "train the steering network");
  common(train_s);
  train_flags(train_s);
  train_s->add_option("--data", data_dirs, "dataset directories (merged in order)")->required();

  auto* train_t = app.add_subcommand("train-throttle", "train a throttle head on frozen steering convolutions");
  common(train_t);
  train_flags(train_t);
  train_t->add_option("--data", data_dirs, "throttle-mode dataset directories")->required();
  train_t->add_option("--steering", steering_path, "steering model")->required()->check(CLI::ExistingFile);

  auto* merge_cmd = app.add_subcommand("merge", "combine steering and throttle models");
  common(merge_cmd);
  merge_cmd->add_option("--steering", steering_path, "steering model")->required()->check(CLI::ExistingFile);
  merge_cmd->add_option("--throttle", throttle_path, "throttle model")->required()->check(CLI::ExistingFile);

  bool search = false;
  auto* eval_cmd = app.add_subcommand("eval", "closed-loop evaluation");
  common(eval_cmd);
  eval_cmd->add_option("--model", model_path, "model file or 'expert'")->required();
  flag(eval_cmd, c, "track", "track", "A, B or a track file");
  flag(eval_cmd, c, "mode", "mode", "fixed | throttle");
  flag(eval_cmd, c, "speed-mph", "speed_mph", "fixed-mode speed");
  flag(eval_cmd, c, "speeds", "speeds", "speed grid for --search");
  int eval_laps = 5;
  eval_cmd->add_option("--laps", eval_laps, "laps to drive")->check(CLI::PositiveNumber);
  eval_cmd->add_flag("--search", search, "find the max stable speed over the speed grid");

  auto* sweep_cmd = app.add_subcommand("sweep", "max stable speed versus training laps");
  common(sweep_cmd);
  train_flags(sweep_cmd);
  flag(sweep_cmd, c, "track", "track", "A, B or a track file");
  flag(sweep_cmd, c, "train-speed-mph", "speed_mph", "collection speed");
  flag(sweep_cmd, c, "laps", "sweep_laps", "ascending lap counts, e.g. 1,2,4,8");
  flag(sweep_cmd, c, "speeds", "speeds", "evaluation speed grid");
  flag(sweep_cmd, c, "jobs", "jobs", "rows trained in parallel");

  auto* insight2 = app.add_subcommand("insight2", "train at high speed, evaluate at low speed");
  common(insight2);
  train_flags(insight2);
  flag(insight2, c, "track", "track", "A, B or a track file");
  flag(insight2, c, "high-speed-mph", "high_speed_mph", "collection speed");
  flag(insight2, c, "low-speed-mph", "low_speed_mph", "evaluation speed");
  flag(insight2, c, "laps", "laps", "laps collected at the high speed");

  auto* study = app.add_subcommand("throttle-study", "steering plus throttle head, merged and driven in throttle mode");
  common(study);
  train_flags(study);
  flag(study, c, "track", "merged_track", "A, B or a track file");
  flag(study, c, "laps", "merged_laps", "laps of each dataset");
  flag(study, c, "steer-speed-mph", "merged_steer_speed_mph", "collection speed of the steering data");

  auto* iterate = app.add_subcommand("iterate", "collect, train and evaluate until the criteria hold");
  common(iterate);
  train_flags(iterate);
  flag(iterate, c, "track", "track", "A, B or a track file");
  flag(iterate, c, "mode", "mode", "fixed | throttle");
  flag(iterate, c, "speed-mph", "speed_mph", "collection speed of the steering data");
  flag(iterate, c, "schedule", "schedule", "ascending lap budgets, e.g. 2,4,8");
  flag(iterate, c, "eval-speed-mph", "eval_speed_mph", "fixed-mode evaluation speed");

  std::string ui_dir;
  double duration = 0.0;
  auto* serve_cmd = app.add_subcommand("serve", "websocket teleop server");
  common(serve_cmd);
  flag(serve_cmd, c, "track", "track", "A, B or a track file");
  flag(serve_cmd, c, "mode", "mode", "fixed | throttle");
  flag(serve_cmd, c, "speed-mph", "speed_mph", "fixed-mode speed");
  flag(serve_cmd, c, "port", "port", "listen port");
  serve_cmd->add_option("--ui-dir", ui_dir, "static UI bundle served at /");
  serve_cmd->add_option("--duration", duration, "stop after this many seconds");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::cerr << app.help() << std::flush;
    return 2;
  }

  CLI::App* sub = app.get_subcommands().front();
  const std::string cmd = sub->get_name();
  try {
    const RunConfig cfg = resolve(c);
    const fs::path out = cfg.out;
    ojson inputs = ojson::object();

    if (cmd == "tracks") {
      const auto [a, b] = builtin_tracks();
      for (const Track& t : {a, b})
        std::printf("%s  length %.2f m (%.2f mi)  half_width %.1f m  waypoints %zu\n", t.name().c_str(),
                    t.total_length(), t.total_length() / 1609.344, t.half_width(), t.waypoints().size());
    } else if (cmd == "collect") {
      const Track track = resolve_track(cfg.track);
      const Dataset d = collect(track, cfg.drive_mode(), cfg.laps, plan_for(cfg, track, cfg.laps), cfg.seed, {});
      save_dataset(d, out_dir(cfg) / "dataset");
      std::printf("collected %zu samples over %zu laps -> %s\n", d.size(), d.lap_count(), (out / "dataset").c_str());
    } else if (cmd == "train-steering") {
      const Dataset d = load_many(data_dirs);
      inputs["data"] = data_dirs;
      const TrainResult r = train_steering(d, cfg.train_config(), progress("steering"));
      save_model(r.model, out_dir(cfg) / "steering.e2em");
      write_loss(out / "steering_loss.csv", r.loss_trace);
      std::printf("trained %zu epochs, final loss %.6f -> %s\n", r.loss_trace.size(), r.final_loss(),
                  (out / "steering.e2em").c_str());
    } else if (cmd == "train-throttle") {
      const Dataset d = load_many(data_dirs);
      inputs["data"] = data_dirs;
      inputs["steering"] = steering_path;
      const TrainResult r = train_throttle(d, load_model(steering_path), cfg.train_config(), progress("throttle"));
      save_model(r.model, out_dir(cfg) / "throttle.e2em");
      write_loss(out / "throttle_loss.csv", r.loss_trace);
      std::printf("trained %zu epochs, final loss %.6f -> %s\n", r.loss_trace.size(), r.final_loss(),
                  (out / "throttle.e2em").c_str());
    } else if (cmd == "merge") {
      inputs["steering"] = steering_path;
      inputs["throttle"] = throttle_path;
      save_merged_model(merge_models(load_model(steering_path), load_model(throttle_path)), out_dir(cfg) / "merged.e2mm");
      std::printf("merged -> %s\n", (out / "merged.e2mm").c_str());
    } else if (cmd == "eval") {
      inputs["model"] = model_path;
      const Track track = resolve_track(cfg.track);
      auto policy = policy_for(model_path, track);
      RolloutOptions ro;
      ro.n_laps = eval_laps;
      ojson j;
      j["track"] = track.name();
      j["model"] = model_path;
      if (search) {
        const SpeedSearch s = max_stable_speed(*policy, track, cfg.speeds, ro);
        j["max_stable_speed_mph"] = s.max_speed_mph ? ojson(*s.max_speed_mph) : ojson(nullptr);
        ojson rows = ojson::array();
        for (const auto& [mph, r] : s.reports) rows.push_back(report_json(r));
        j["reports"] = rows;
        std::printf("max stable speed: %s\n", s.max_speed_mph ? fmt("%g mph", *s.max_speed_mph).c_str() : "none");
      } else {
        const EvalReport r = rollout(*policy, track, cfg.drive_mode(), ro);
        j["report"] = report_json(r);
        std::printf("laps %d/%d collided %s edge touches %d ALT %s\n", r.laps_completed, r.laps_requested,
                    r.collided ? "yes" : "no", r.edge_touches,
                    r.avg_lap_time ? fmt("%.3f s", *r.avg_lap_time).c_str() : "NA");
      }
      write_text(out_dir(cfg) / "report.json", j.dump(2) + "\n");
    } else if (cmd == "sweep") {
      const Track track = resolve_track(cfg.track);
      SweepOptions so;
      so.train = cfg.train_config();
      so.speeds_mph = cfg.speeds;
      so.jobs = cfg.jobs;
      const SweepResult r = sweep_insight1(track, cfg.speed_mph, cfg.sweep_laps, cfg.seed, so);
      out_dir(cfg);
      for (const SweepRow& row : r.rows) {
        if (!row.error.empty()) std::fprintf(stderr, "row laps=%d failed: %s\n", row.laps, row.error.c_str());
        if (!row.model) continue;
        const fs::path dir = out / ("laps_" + std::to_string(row.laps));
        fs::create_directories(dir);
        save_model(*row.model, dir / "steering.e2em");
      }
      const std::string csv = sweep_csv(r);
      write_text(out / "sweep.csv", csv);
      std::fputs(csv.c_str(), stdout);
    } else if (cmd == "insight2") {
      const Track track = resolve_track(cfg.track);
      SweepOptions so;
      so.train = cfg.train_config();
      const CrossSpeedResult r = cross_speed_check(track, cfg.high_speed_mph, cfg.low_speed_mph, cfg.laps, cfg.seed, so);
      ojson j;
      j["track"] = track.name();
      j["high_speed_mph"] = r.high_speed_mph;
      j["low_speed_mph"] = r.low_speed_mph;
      j["laps"] = r.laps;
      j["samples"] = r.samples;
      j["equivalent_low_speed_laps"] = r.equivalent_low_speed_laps;
      j["passed"] = r.passed;
      j["report"] = report_json(r.report);
      write_text(out_dir(cfg) / "insight2.json", j.dump(2) + "\n");
      std::printf("%d laps at %g mph (%zu samples, ~%.1f laps at %g mph): %s at %g mph\n", r.laps, r.high_speed_mph,
                  r.samples, r.equivalent_low_speed_laps, r.low_speed_mph, r.passed ? "stable" : "unstable",
                  r.low_speed_mph);
    } else if (cmd == "throttle-study") {
      const Track track = resolve_track(cfg.merged_track);
      SweepOptions so;
      so.train = cfg.train_config();
      const ThrottleStudy r = throttle_study(track, cfg.merged_laps, cfg.merged_steer_speed_mph, cfg.seed, so);
      save_model(r.steering, out_dir(cfg) / "steering.e2em");
      save_model(r.throttle, out / "throttle.e2em");
      save_merged_model(r.merged, out / "merged.e2mm");
      ojson j;
      j["track"] = track.name();
      j["steering_samples"] = r.steering_samples;
      j["throttle_samples"] = r.throttle_samples;
      j["throttle_curve_mean"] = r.profile.curve_mean;
      j["throttle_straight_mean"] = r.profile.straight_mean;
      j["curve_ticks"] = r.profile.curve_ticks;
      j["straight_ticks"] = r.profile.straight_ticks;
      j["report"] = report_json(r.report);
      write_text(out / "throttle_study.json", j.dump(2) + "\n");
      std::printf("mean throttle: curves %.3f (%zu ticks), straights %.3f (%zu ticks); laps %d/%d\n",
                  r.profile.curve_mean, r.profile.curve_ticks, r.profile.straight_mean, r.profile.straight_ticks,
                  r.report.laps_completed, r.report.laps_requested);
    } else if (cmd == "iterate") {
      const Track track = resolve_track(cfg.track);
      PolicyIterationOptions po;
      po.train = cfg.train_config();
      po.collect_speed_mph = cfg.speed_mph;
      po.audit_path = out_dir(cfg) / "audit.ndjson";
      CriteriaThresholds th;
      th.eval_speed_mph = cfg.eval_speed_mph;
      const DriveMode mode = cfg.mode == "throttle" ? DriveMode::throttle() : cfg.drive_mode();
      const PolicyIterationResult r = policy_iteration(track, mode, cfg.schedule, th, cfg.seed, po);
      save_model(r.steering, out / "steering.e2em");
      if (r.merged) save_merged_model(*r.merged, out / "merged.e2mm");
      for (const AuditEntry& e : r.audit) std::puts(audit_json(e).c_str());
      std::printf("%s after %zu iteration(s); best iteration %d\n", r.success ? "criteria met" : "schedule exhausted",
                  r.audit.size(), r.best_iter);
      write_run_json(cfg, cmd, inputs);
      return r.success ? 0 : 1;
    } else if (cmd == "serve") {
#ifdef RACELAB_HAVE_TELEOP
      TeleopSession session(resolve_track(cfg.track), cfg.drive_mode());
      ServerOptions so;
      so.port = static_cast<unsigned short>(cfg.port);
      so.ui_dir = ui_dir;
      so.run_seconds = duration;
      so.on_listening = [](unsigned short p) { std::fprintf(stderr, "listening on http://127.0.0.1:%u/\n", p); };
      inputs["ui_dir"] = ui_dir;
      write_run_json(cfg, cmd, inputs);
      serve(session, so);
      return 0;
#else
      std::fputs("this build has no teleop server\n", stderr);
      return 1;
#endif
    }
    write_run_json(cfg, cmd, inputs);
    return 0;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "racelab %s: %s\n", cmd.c_str(), e.what());
    std::cerr << sub->help() << std::flush;
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "racelab %s: %s\n", cmd.c_str(), e.what());
    return 1;
  }
}
