#include "racelab/vision.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace racelab {

double Image::mean() const {
  double sum = 0.0;
  for (std::uint8_t p : pixels_) sum += p;
  return sum / (255.0 * static_cast<double>(pixels_.size()));
}

std::string encode_pgm(const Image& img) {
  std::string out = "P5\n" + std::to_string(img.width()) + " " + std::to_string(img.height()) + "\n255\n";
  const auto b = img.bytes();
  out.append(reinterpret_cast<const char*>(b.data()), b.size());
  return out;
}

Image decode_pgm(std::string_view data) {
  std::size_t pos = 0;
  auto next_token = [&]() -> std::string {
    while (pos < data.size()) {
      const char c = data[pos];
      if (c == '#') {
        while (pos < data.size() && data[pos] != '\n') ++pos;
      } else if (c == ' ' || c == '\n' || c == '\r' || c == '\t') {
        ++pos;
      } else {
        break;
      }
    }
    const std::size_t start = pos;
    while (pos < data.size() && data[pos] != ' ' && data[pos] != '\n' && data[pos] != '\r' && data[pos] != '\t') ++pos;
    return std::string(data.substr(start, pos - start));
  };
  if (next_token() != "P5") throw ParseError("not a binary PGM (P5) image");
  int w = 0, h = 0, maxval = 0;
  try {
    w = std::stoi(next_token());
    h = std::stoi(next_token());
    maxval = std::stoi(next_token());
  } catch (const std::exception&) {
    throw ParseError("malformed PGM header");
  }
  if (w <= 0 || h <= 0 || maxval != 255) throw ParseError("unsupported PGM geometry or maxval");
  ++pos;  // single whitespace after maxval
  const std::size_t n = static_cast<std::size_t>(w) * h;
  if (data.size() < pos + n) throw ParseError("truncated PGM pixel data");
  Image img(w, h);
  std::copy_n(reinterpret_cast<const std::uint8_t*>(data.data() + pos), n, img.bytes().begin());
  return img;
}

void write_pgm(const Image& img, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write image " + path);
  const std::string bytes = encode_pgm(img);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("failed writing image " + path);
}

Image read_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open image " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return decode_pgm(ss.str());
}

std::string_view camera_name(CameraId cam) {
  switch (cam) {
    case CameraId::Left:
      return "left";
    case CameraId::Center:
      return "center";
    case CameraId::Right:
      return "right";
  }
  return "?";
}

Renderer::Renderer(const Track& track, CameraRig rig) : rig_(rig) {
  const double len = track.total_length();
  const auto n = static_cast<std::size_t>(std::ceil(len / kMarkingSpacing));
  const double spacing = len / static_cast<double>(n);
  const double hw = track.half_width();
  segments_.reserve(3 * n);
  auto at = [&](std::size_t k, double lateral) {
    const Pose p = track.point_at(spacing * static_cast<double>(k % n), lateral);
    return Vec2{p.x, p.y};
  };
  for (std::size_t k = 0; k < n; ++k) {
    segments_.push_back({at(k, hw), at(k + 1, hw)});
    segments_.push_back({at(k, -hw), at(k + 1, -hw)});
    const double s = spacing * static_cast<double>(k);
    if (static_cast<long>(std::floor(s / kDashLength)) % 2 == 0) segments_.push_back({at(k, 0.0), at(k + 1, 0.0)});
  }
}

namespace {

struct Pixel2 {
  double u, v;
};

void stroke(std::vector<double>& canvas, int w, int h, Pixel2 p0, Pixel2 p1, int first_row) {
  const double reach = Renderer::kStrokeWidth / 2.0 + 0.5;
  const int x0 = std::max(0, static_cast<int>(std::floor(std::min(p0.u, p1.u) - reach)));
  const int x1 = std::min(w - 1, static_cast<int>(std::ceil(std::max(p0.u, p1.u) + reach)));
  const int y0 = std::max(first_row, static_cast<int>(std::floor(std::min(p0.v, p1.v) - reach)));
  const int y1 = std::min(h - 1, static_cast<int>(std::ceil(std::max(p0.v, p1.v) + reach)));
  if (x0 > x1 || y0 > y1) return;
  const double du = p1.u - p0.u, dv = p1.v - p0.v;
  const double len2 = du * du + dv * dv;
  for (int y = y0; y <= y1; ++y) {
    const double pv = y + 0.5;
    for (int x = x0; x <= x1; ++x) {
      const double pu = x + 0.5;
      double t = len2 > 0.0 ? ((pu - p0.u) * du + (pv - p0.v) * dv) / len2 : 0.0;
      t = clamp(t, 0.0, 1.0);
      const double eu = pu - (p0.u + t * du), ev = pv - (p0.v + t * dv);
      const double d = std::sqrt(eu * eu + ev * ev);
      const double intensity = clamp(reach - d, 0.0, 1.0);
      double& px = canvas[static_cast<std::size_t>(y) * w + x];
      if (intensity > px) px = intensity;
    }
  }
}

}  // namespace

Image Renderer::render(const CarState& state, CameraId cam) const {
  const int w = rig_.width, h = rig_.height_px;
  std::vector<double> canvas(static_cast<std::size_t>(w) * h, 0.0);
  const Vec2 fwd{std::cos(state.heading), std::sin(state.heading)};
  const Vec2 right{std::sin(state.heading), -std::cos(state.heading)};
  const double offset = rig_.offset_right[static_cast<std::size_t>(cam)];
  const Vec2 cam_pos = Vec2{state.x, state.y} + offset * right;
  const double cp = std::cos(rig_.pitch), sp = std::sin(rig_.pitch);
  const double f = rig_.focal_px();
  const double cx = w / 2.0, cy = h / 2.0;
  const double D = rig_.draw_distance;
  constexpr double kNear = 0.3;
  const int first_row = std::max(0, rig_.horizon_row() + 1);

  for (const Segment& seg : segments_) {
    Vec2 a = seg.a - cam_pos;
    Vec2 b = seg.b - cam_pos;
    // Clip to the draw-distance disc around the camera.
    const Vec2 d = b - a;
    const double qa = dot(d, d), qb = 2.0 * dot(a, d), qc = dot(a, a) - D * D;
    const double disc = qb * qb - 4.0 * qa * qc;
    if (disc <= 0.0 || qa == 0.0) continue;
    const double sq = std::sqrt(disc);
    const double t0 = std::max(0.0, (-qb - sq) / (2.0 * qa));
    const double t1 = std::min(1.0, (-qb + sq) / (2.0 * qa));
    if (t0 >= t1) continue;
    const Vec2 ca = a + t0 * d;
    const Vec2 cb = a + t1 * d;
    // Camera coordinates: x right, y image-down, z depth.
    double xa = dot(ca, right), za = dot(ca, fwd) * cp + rig_.height * sp, ya = rig_.height * cp - dot(ca, fwd) * sp;
    double xb = dot(cb, right), zb = dot(cb, fwd) * cp + rig_.height * sp, yb = rig_.height * cp - dot(cb, fwd) * sp;
    if (za < kNear && zb < kNear) continue;
    if (za < kNear || zb < kNear) {
      const double t = (kNear - za) / (zb - za);
      const double xn = xa + t * (xb - xa), yn = ya + t * (yb - ya);
      if (za < kNear) {
        xa = xn, ya = yn, za = kNear;
      } else {
        xb = xn, yb = yn, zb = kNear;
      }
    }
    const Pixel2 p0{cx + f * xa / za, cy + f * ya / za};
    const Pixel2 p1{cx + f * xb / zb, cy + f * yb / zb};
    stroke(canvas, w, h, p0, p1, first_row);
  }

  Image img(w, h);
  auto out = img.bytes();
  for (std::size_t i = 0; i < canvas.size(); ++i)
    out[i] = static_cast<std::uint8_t>(std::lround(clamp(canvas[i], 0.0, 1.0) * 255.0));
  return img;
}

Image render(const Track& track, const CarState& state, CameraId cam, const CameraRig& rig) {
  return Renderer(track, rig).render(state, cam);
}

Image hflip(const Image& img) {
  Image out(img.width(), img.height());
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x) out.raw(img.width() - 1 - x, y) = img.raw(x, y);
  return out;
}

Image translate(const Image& img, int dx, int dy) {
  if (std::abs(dx) > img.width() / 4 || std::abs(dy) > img.height() / 4)
    throw ParameterError("translation (" + std::to_string(dx) + ", " + std::to_string(dy) +
                         ") exceeds a quarter of the image size");
  Image out(img.width(), img.height());
  for (int y = 0; y < img.height(); ++y) {
    const int sy = y - dy;
    if (sy < 0 || sy >= img.height()) continue;
    for (int x = 0; x < img.width(); ++x) {
      const int sx = x - dx;
      if (sx >= 0 && sx < img.width()) out.raw(x, y) = img.raw(sx, sy);
    }
  }
  return out;
}

AugmentDraw draw_augmentation(Rng& rng, const AugmentConfig& cfg) {
  AugmentDraw d;
  d.flip = rng.bernoulli(cfg.flip_probability);
  d.dx = static_cast<int>(rng.between(-cfg.max_dx, cfg.max_dx));
  d.dy = static_cast<int>(rng.between(-cfg.max_dy, cfg.max_dy));
  return d;
}

TrainingExample apply_augmentation(const TrainingExample& ex, const AugmentDraw& draw, const AugmentConfig& cfg) {
  TrainingExample out = ex;
  if (draw.flip) {
    out.image = hflip(out.image);
    out.steering = out.steering == 0.0 ? 0.0 : -out.steering;
  }
  if (draw.dx != 0 || draw.dy != 0) {
    out.image = translate(out.image, draw.dx, draw.dy);
    // Vertical shifts leave the label alone.
    out.steering = clamp(out.steering + draw.dx * cfg.steer_per_px, -1.0, 1.0);
  }
  return out;
}

TrainingExample augment(const TrainingExample& ex, Rng& rng, const AugmentConfig& cfg) {
  return apply_augmentation(ex, draw_augmentation(rng, cfg), cfg);
}

}  // namespace racelab
