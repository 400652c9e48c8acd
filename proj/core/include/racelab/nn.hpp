#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "racelab/tensor.hpp"
#include "racelab/vision.hpp"

namespace racelab {

enum class LayerKind : std::uint32_t { Conv2D = 1, ReLU = 2, Flatten = 3, Dense = 4, Tanh = 5, Sigmoid = 6 };

std::string_view layer_kind_name(LayerKind kind);

struct LayerSpec {
  LayerKind kind = LayerKind::ReLU;
  int out = 0;  ///< channels (Conv2D) or features (Dense)
  int kernel_h = 0;
  int kernel_w = 0;
  int stride = 1;

  static LayerSpec conv2d(int out_channels, int kh, int kw, int stride) {
    return {LayerKind::Conv2D, out_channels, kh, kw, stride};
  }
  static LayerSpec dense(int out_features) { return {LayerKind::Dense, out_features, 0, 0, 1}; }
  static LayerSpec relu() { return {LayerKind::ReLU}; }
  static LayerSpec flatten() { return {LayerKind::Flatten}; }
  static LayerSpec tanh() { return {LayerKind::Tanh}; }
  static LayerSpec sigmoid() { return {LayerKind::Sigmoid}; }

  bool has_params() const { return kind == LayerKind::Conv2D || kind == LayerKind::Dense; }
  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

/// Per-example activation shape; flat vectors are {n, 1, 1}.
struct Shape3 {
  int c = 1;
  int h = 1;
  int w = 1;
  std::size_t size() const { return static_cast<std::size_t>(c) * h * w; }
  friend bool operator==(const Shape3&, const Shape3&) = default;
};

/// Feed-forward layer stack with float parameters and a per-layer trainable mask.
class Network {
 public:
  Network(Shape3 input, std::vector<LayerSpec> specs);

  const Shape3& input_shape() const { return input_; }
  const std::vector<LayerSpec>& specs() const { return specs_; }
  std::size_t layer_count() const { return specs_.size(); }
  /// Shape produced by layer i.
  const Shape3& output_shape(std::size_t i) const { return shapes_[i + 1]; }
  const Shape3& output_shape() const { return shapes_.back(); }

  Tensor& weights(std::size_t i) { return weights_[i]; }
  const Tensor& weights(std::size_t i) const { return weights_[i]; }
  Tensor& bias(std::size_t i) { return biases_[i]; }
  const Tensor& bias(std::size_t i) const { return biases_[i]; }
  bool trainable(std::size_t i) const { return trainable_[i]; }
  void set_trainable(std::size_t i, bool on) { trainable_[i] = on; }
  const std::vector<bool>& trainable_mask() const { return trainable_; }
  std::size_t parameter_count() const;

  /// Number of leading layers forming the convolutional backbone (through Flatten).
  std::size_t conv_stack_size() const;

  /// Layers [begin, end) as a standalone network sharing no state with this one.
  Network slice(std::size_t begin, std::size_t end) const;

  /// He-uniform kernels, zero biases.
  void init_he_uniform(std::uint64_t seed);

  friend bool operator==(const Network&, const Network&) = default;

 private:
  Shape3 input_;
  std::vector<LayerSpec> specs_;
  std::vector<Shape3> shapes_;
  std::vector<Tensor> weights_;
  std::vector<Tensor> biases_;
  std::vector<bool> trainable_;
};

inline constexpr Shape3 kImageInput{1, 32, 64};

/// "steering_net" (tanh output) or "throttle_head" (sigmoid output).
Network init_network(std::string_view spec_name, std::uint64_t seed);

/// Activations recorded by forward() for use by backward(). Activations are
/// stored feature-major: [C, N, H, W] for feature maps and [F, N] for flat
/// vectors. Reusing one cache across training steps avoids reallocation.
struct ForwardCache {
  std::vector<TensorD> activations;  ///< activations[0] is the input, activations[i+1] the output of layer i
  std::vector<std::vector<double>> columns;  ///< im2col buffers of Conv2D layers
  const Network* network = nullptr;
  std::size_t batch_size = 0;

  // backward() scratch
  TensorD grad_a, grad_b;
  std::vector<double> dcol, wt;
};

struct Gradients {
  std::vector<TensorD> weights;
  std::vector<TensorD> biases;
  TensorD input;  ///< filled only when requested
};

/// Batch input is [N, C, H, W] (or [N, F] for flat inputs). Output is [N, F].
TensorD forward(const Network& net, const TensorD& batch, ForwardCache* cache = nullptr);

/// Reverse-mode gradients. Frozen layers report all-zero parameter gradients.
Gradients backward(const Network& net, ForwardCache& cache, const TensorD& grad_output, bool want_input_grad = false);
/// Same, writing into `out` so its storage can be reused.
void backward(const Network& net, ForwardCache& cache, const TensorD& grad_output, Gradients& out,
              bool want_input_grad = false);

struct LossResult {
  double value = 0.0;
  TensorD grad;
};

/// Mean over all elements of the squared error, and its gradient.
LossResult mse(const TensorD& pred, const TensorD& target);

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::int64_t t = 0;
  std::vector<TensorD> m_w, v_w, m_b, v_b;

  static AdamState for_network(const Network& net);
};

inline constexpr double kDefaultLearningRate = 1e-4;

/// Bias-corrected Adam update of every trainable parameter. Frozen layers keep
/// both their parameters and their moments untouched.
void adam_step(Network& net, const Gradients& grads, AdamState& state, double lr = kDefaultLearningRate);

/// Copies src's convolutional backbone into dst and freezes it there.
Network transplant_conv(Network dst, const Network& src);

/// True when both backbones have identical structure and bitwise-identical parameters.
bool same_conv_stack(const Network& a, const Network& b);

class ModelFormatError : public Error {
 public:
  using Error::Error;
};

inline constexpr std::uint32_t kModelFormatVersion = 1;

std::string encode_model(const Network& net);
Network decode_model(std::string_view bytes);
void save_model(const Network& net, const std::filesystem::path& path);
Network load_model(const std::filesystem::path& path);

/// Converts images to a [N, 1, H, W] batch with values in [0, 1].
TensorD images_to_batch(const std::vector<const Image*>& images);

}  // namespace racelab
