#include "racelab/dataset.hpp"

#include <algorithm>
#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace racelab {

Dataset::Dataset(DatasetMeta meta, std::vector<Sample> samples) : meta_(std::move(meta)), samples_(std::move(samples)) {
  rebuild_offsets();
}

void Dataset::rebuild_offsets() {
  lap_offsets_.clear();
  for (std::size_t i = 0; i < samples_.size(); ++i)
    if (i == 0 || samples_[i].lap != samples_[i - 1].lap) lap_offsets_.push_back(i);
  meta_.n_laps = static_cast<int>(lap_offsets_.size());
}

void Dataset::append(Sample s) {
  if (samples_.empty() || samples_.back().lap != s.lap) lap_offsets_.push_back(samples_.size());
  samples_.push_back(std::move(s));
  meta_.n_laps = static_cast<int>(lap_offsets_.size());
}

Dataset Dataset::laps(std::size_t first, std::size_t count) const {
  if (first + count > lap_offsets_.size())
    throw DatasetError("requested laps [" + std::to_string(first) + ", " + std::to_string(first + count) +
                       ") but dataset has " + std::to_string(lap_offsets_.size()));
  const std::size_t begin = count == 0 ? 0 : lap_offsets_[first];
  const std::size_t end =
      count == 0 ? 0 : (first + count < lap_offsets_.size() ? lap_offsets_[first + count] : samples_.size());
  return Dataset(meta_, std::vector<Sample>(samples_.begin() + begin, samples_.begin() + end));
}

namespace {

std::string fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  // "-0.000000" would not round-trip the sign of a true zero.
  if (std::string_view(buf) == "-0.000000") return "0.000000";
  return buf;
}

std::string image_name(std::size_t index, CameraId cam) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%06zu_%s.pgm", index, std::string(camera_name(cam)).c_str());
  return buf;
}

std::string join(const std::vector<std::string>& parts, char sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) out += (i ? std::string(1, sep) : "") + parts[i];
  return out;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) out.push_back(cur);
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw DatasetError("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& p, const std::string& content) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw DatasetError("cannot write " + p.string());
  out << content;
  if (!out) throw DatasetError("failed writing " + p.string());
}

double parse_number(const std::string& tok, const std::string& what, std::size_t row) {
  char* end = nullptr;
  const double v = std::strtod(tok.c_str(), &end);
  if (tok.empty() || end != tok.c_str() + tok.size() || !std::isfinite(v))
    throw DatasetError("bad " + what + " value '" + tok + "' row " + std::to_string(row));
  return v;
}

const char* kManifestHeader = "time,lap,steering,throttle,speed_mps,img_left,img_center,img_right";

}  // namespace

void save_dataset(const Dataset& d, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  const fs::path target = fs::absolute(dir).lexically_normal();
  const fs::path parent = target.parent_path();
  fs::create_directories(parent);
  const fs::path tmp = parent / (target.filename().string() + ".tmp-save");
  fs::remove_all(tmp);
  fs::create_directories(tmp / "images");

  const DatasetMeta& m = d.meta();
  std::string meta = "track=" + m.track + "\nmode=" + m.mode + "\nspeed_mph=" + fixed6(m.speed_mph) +
                     "\nn_laps=" + std::to_string(m.n_laps) + "\nseed=" + std::to_string(m.seed) +
                     "\nversion=" + m.version + "\n";
  if (!m.edits.empty()) meta += "edits=" + join(m.edits, ';') + "\n";
  write_file(tmp / "meta.txt", meta);

  std::string manifest = std::string(kManifestHeader) + "\n";
  for (std::size_t i = 0; i < d.size(); ++i) {
    const Sample& s = d.samples()[i];
    manifest += fixed6(s.time) + "," + std::to_string(s.lap) + "," + fixed6(s.steering) + "," + fixed6(s.throttle) +
                "," + fixed6(s.speed);
    for (CameraId cam : kCameras) {
      const std::string name = image_name(i, cam);
      write_pgm(s.image(cam), (tmp / "images" / name).string());
      manifest += ",images/" + name;
    }
    manifest += "\n";
  }
  write_file(tmp / "manifest.csv", manifest);

  if (fs::exists(target)) {
    const fs::path old = parent / (target.filename().string() + ".tmp-old");
    fs::remove_all(old);
    fs::rename(target, old);
    fs::rename(tmp, target);
    fs::remove_all(old);
  } else {
    fs::rename(tmp, target);
  }
}

Dataset load_dataset(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw DatasetError("dataset directory not found: " + dir.string());
  if (!fs::exists(dir / "manifest.csv")) throw DatasetError("missing manifest.csv in " + dir.string());
  if (!fs::exists(dir / "meta.txt")) throw DatasetError("missing meta.txt in " + dir.string());

  DatasetMeta meta;
  std::map<std::string, std::string> kv;
  {
    std::istringstream in(read_file(dir / "meta.txt"));
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw DatasetError("meta.txt line " + std::to_string(lineno) + ": expected key=value");
      kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
  }
  for (const char* key : {"track", "mode", "speed_mph", "n_laps", "seed", "version"})
    if (!kv.count(key)) throw DatasetError(std::string("meta.txt missing key '") + key + "'");
  meta.track = kv["track"];
  meta.mode = kv["mode"];
  if (meta.mode != "fixed" && meta.mode != "throttle") throw DatasetError("meta.txt: unknown mode '" + meta.mode + "'");
  meta.speed_mph = parse_number(kv["speed_mph"], "speed_mph", 0);
  meta.seed = std::strtoull(kv["seed"].c_str(), nullptr, 10);
  meta.version = kv["version"];
  if (kv.count("edits") && !kv["edits"].empty()) meta.edits = split(kv["edits"], ';');
  const int declared_laps = static_cast<int>(parse_number(kv["n_laps"], "n_laps", 0));

  std::istringstream in(read_file(dir / "manifest.csv"));
  std::string line;
  if (!std::getline(in, line) || line != kManifestHeader) throw DatasetError("manifest.csv: unexpected header");
  std::vector<Sample> samples;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    ++row;
    const auto cols = split(line, ',');
    if (cols.size() != 8)
      throw DatasetError("manifest.csv: expected 8 columns, got " + std::to_string(cols.size()) + " row " +
                         std::to_string(row));
    Sample s;
    s.time = parse_number(cols[0], "time", row);
    s.lap = static_cast<int>(parse_number(cols[1], "lap", row));
    s.steering = parse_number(cols[2], "steering", row);
    s.throttle = parse_number(cols[3], "throttle", row);
    s.speed = parse_number(cols[4], "speed", row);
    if (s.steering < -1.0 || s.steering > 1.0) throw DatasetError("steering out of range row " + std::to_string(row));
    if (s.throttle < 0.0 || s.throttle > 1.0) throw DatasetError("throttle out of range row " + std::to_string(row));
    if (s.speed < 0.0) throw DatasetError("speed out of range row " + std::to_string(row));
    for (std::size_t c = 0; c < 3; ++c) {
      const fs::path p = dir / cols[5 + c];
      if (!fs::exists(p)) throw DatasetError("missing image " + cols[5 + c] + " row " + std::to_string(row));
      try {
        s.images[c] = read_pgm(p.string());
      } catch (const Error& e) {
        throw DatasetError(std::string(e.what()) + " (row " + std::to_string(row) + ")");
      }
    }
    samples.push_back(std::move(s));
  }
  std::size_t on_disk = 0;
  if (fs::is_directory(dir / "images"))
    for (const auto& entry : fs::directory_iterator(dir / "images"))
      if (entry.path().extension() == ".pgm") ++on_disk;
  if (on_disk != 3 * samples.size())
    throw DatasetError("image count mismatch: " + std::to_string(on_disk) + " files for " +
                       std::to_string(samples.size()) + " manifest rows");

  Dataset d(meta, std::move(samples));
  if (d.meta().n_laps != declared_laps)
    throw DatasetError("meta.txt n_laps=" + std::to_string(declared_laps) + " but manifest holds " +
                       std::to_string(d.meta().n_laps) + " laps");
  return d;
}

Dataset remove_range(const Dataset& d, std::size_t from, std::size_t to) {
  if (from > to || to >= d.size())
    throw DatasetError("invalid range [" + std::to_string(from) + ", " + std::to_string(to) + "] for " +
                       std::to_string(d.size()) + " samples");
  std::vector<Sample> kept;
  kept.reserve(d.size() - (to - from + 1));
  kept.insert(kept.end(), d.samples().begin(), d.samples().begin() + from);
  kept.insert(kept.end(), d.samples().begin() + to + 1, d.samples().end());
  DatasetMeta meta = d.meta();
  meta.edits.push_back("removed " + std::to_string(from) + "-" + std::to_string(to));
  return Dataset(std::move(meta), std::move(kept));
}

Dataset merge(const Dataset& a, const Dataset& b) {
  if (b.empty()) return a;
  if (a.empty()) return b;
  if (a.meta().track != b.meta().track)
    throw DatasetError("cannot merge datasets from tracks '" + a.meta().track + "' and '" + b.meta().track + "'");
  if (a.meta().mode != b.meta().mode)
    throw DatasetError("cannot merge '" + a.meta().mode + "' and '" + b.meta().mode + "' datasets");
  std::vector<Sample> all = a.samples();
  const int base = a.samples().back().lap + 1;
  int prev = b.samples().front().lap;
  int lap = base;
  for (const Sample& s : b.samples()) {
    if (s.lap != prev) {
      ++lap;
      prev = s.lap;
    }
    Sample copy = s;
    copy.lap = lap;
    all.push_back(std::move(copy));
  }
  DatasetMeta meta = a.meta();
  if (meta.speed_mph != b.meta().speed_mph) meta.speed_mph = std::max(meta.speed_mph, b.meta().speed_mph);
  meta.edits.push_back("merged " + std::to_string(b.lap_count()) + " laps (seed " + std::to_string(b.meta().seed) +
                       ")");
  return Dataset(std::move(meta), std::move(all));
}

CameraSelection parse_camera_selection(std::string_view text) {
  if (text == "all") return CameraSelection::All;
  if (text == "center") return CameraSelection::Center;
  throw ParameterError("cameras must be 'all' or 'center', got '" + std::string(text) + "'");
}

std::string_view camera_selection_name(CameraSelection sel) { return sel == CameraSelection::All ? "all" : "center"; }

std::vector<TrainingExample> to_training_examples(const Dataset& d, double side_correction, CameraSelection cameras) {
  std::vector<TrainingExample> out;
  out.reserve(d.size() * (cameras == CameraSelection::All ? 3 : 1));
  for (const Sample& s : d.samples()) {
    for (CameraId cam : kCameras) {
      if (cameras == CameraSelection::Center && cam != CameraId::Center) continue;
      TrainingExample ex;
      ex.image = s.image(cam);
      ex.steering = s.steering;
      if (cam == CameraId::Left) ex.steering = clamp(s.steering + side_correction, -1.0, 1.0);
      if (cam == CameraId::Right) ex.steering = clamp(s.steering - side_correction, -1.0, 1.0);
      ex.throttle = s.throttle;
      ex.speed = s.speed;
      ex.camera = cam;
      out.push_back(std::move(ex));
    }
  }
  return out;
}

}  // namespace racelab
