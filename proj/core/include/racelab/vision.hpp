#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "racelab/common.hpp"
#include "racelab/track.hpp"
#include "racelab/vehicle.hpp"

namespace racelab {

/// Row-major 8-bit grayscale image; pixel value k represents intensity k/255.
class Image {
 public:
  static constexpr int kDefaultWidth = 64;
  static constexpr int kDefaultHeight = 32;

  Image() : Image(kDefaultWidth, kDefaultHeight) {}
  Image(int width, int height) : width_(width), height_(height), pixels_(static_cast<std::size_t>(width) * height, 0) {
    if (width <= 0 || height <= 0) throw ParameterError("image dimensions must be positive");
  }

  int width() const { return width_; }
  int height() const { return height_; }
  std::uint8_t& raw(int x, int y) { return pixels_[static_cast<std::size_t>(y) * width_ + x]; }
  std::uint8_t raw(int x, int y) const { return pixels_[static_cast<std::size_t>(y) * width_ + x]; }
  float at(int x, int y) const { return raw(x, y) / 255.0f; }
  std::span<const std::uint8_t> bytes() const { return pixels_; }
  std::span<std::uint8_t> bytes() { return pixels_; }
  double mean() const;

  friend bool operator==(const Image&, const Image&) = default;

 private:
  int width_;
  int height_;
  std::vector<std::uint8_t> pixels_;
};

/// Binary PGM (P5, maxval 255).
std::string encode_pgm(const Image& img);
Image decode_pgm(std::string_view data);
void write_pgm(const Image& img, const std::string& path);
Image read_pgm(const std::string& path);

enum class CameraId { Left = 0, Center = 1, Right = 2 };
inline constexpr std::array<CameraId, 3> kCameras = {CameraId::Left, CameraId::Center, CameraId::Right};
std::string_view camera_name(CameraId cam);

struct CameraRig {
  std::array<double, 3> offset_right = {-0.8, 0.0, 0.8};  ///< meters toward the car's right, by CameraId
  double height = 1.2;
  double pitch = 0.17;  ///< radians below horizontal
  double hfov = 1.2;
  double draw_distance = 60.0;
  int width = Image::kDefaultWidth;
  int height_px = Image::kDefaultHeight;

  double focal_px() const { return (width / 2.0) / std::tan(hfov / 2.0); }
  double horizon_v() const { return height_px / 2.0 - focal_px() * std::tan(pitch); }
  /// Rows 0..horizon_row() are always black.
  int horizon_row() const { return static_cast<int>(std::floor(horizon_v())); }
};

/// Pinhole ground-plane renderer of the track markings (both edge lines and a
/// dashed centerline). Precomputes the marking segments for one track.
class Renderer {
 public:
  explicit Renderer(const Track& track, CameraRig rig = {});

  Image render(const CarState& state, CameraId cam) const;
  const CameraRig& rig() const { return rig_; }

  static constexpr double kMarkingSpacing = 1.0;
  static constexpr double kDashLength = 3.0;
  static constexpr double kStrokeWidth = 2.0;

 private:
  struct Segment {
    Vec2 a;
    Vec2 b;
  };
  CameraRig rig_;
  std::vector<Segment> segments_;
};

/// Convenience wrapper that builds a Renderer for a single frame.
Image render(const Track& track, const CarState& state, CameraId cam, const CameraRig& rig = {});

Image hflip(const Image& img);
/// Shifts content by (dx, dy) pixels; vacated pixels are 0.
Image translate(const Image& img, int dx, int dy);

/// One training pair: an image and the labels attached to it.
struct TrainingExample {
  Image image;
  double steering = 0.0;
  double throttle = 0.0;
  double speed = 0.0;
  CameraId camera = CameraId::Center;

  friend bool operator==(const TrainingExample&, const TrainingExample&) = default;
};

struct AugmentConfig {
  int max_dx = 8;
  int max_dy = 4;
  double steer_per_px = 0.01;
  double flip_probability = 0.5;
};

/// Concrete augmentation choice; augment() draws one from the generator.
struct AugmentDraw {
  bool flip = false;
  int dx = 0;
  int dy = 0;
};

AugmentDraw draw_augmentation(Rng& rng, const AugmentConfig& cfg);
TrainingExample apply_augmentation(const TrainingExample& ex, const AugmentDraw& draw, const AugmentConfig& cfg);
TrainingExample augment(const TrainingExample& ex, Rng& rng, const AugmentConfig& cfg);

}  // namespace racelab
