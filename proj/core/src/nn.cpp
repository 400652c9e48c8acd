#include "racelab/nn.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "racelab/vision.hpp"

namespace racelab {

std::string shape_string(const std::vector<std::size_t>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) s += (i ? "x" : "") + std::to_string(shape[i]);
  return s + "]";
}

std::string_view layer_kind_name(LayerKind kind) {
  switch (kind) {
    case LayerKind::Conv2D:
      return "Conv2D";
    case LayerKind::ReLU:
      return "ReLU";
    case LayerKind::Flatten:
      return "Flatten";
    case LayerKind::Dense:
      return "Dense";
    case LayerKind::Tanh:
      return "Tanh";
    case LayerKind::Sigmoid:
      return "Sigmoid";
  }
  return "?";
}

Network::Network(Shape3 input, std::vector<LayerSpec> specs) : input_(input), specs_(std::move(specs)) {
  if (input_.c <= 0 || input_.h <= 0 || input_.w <= 0) throw ShapeError("input shape must be positive");
  shapes_.push_back(input_);
  for (std::size_t i = 0; i < specs_.size(); ++i) {
    const LayerSpec& s = specs_[i];
    const Shape3 in = shapes_.back();
    Shape3 out = in;
    Tensor w, b;
    switch (s.kind) {
      case LayerKind::Conv2D: {
        if (s.out <= 0 || s.kernel_h <= 0 || s.kernel_w <= 0 || s.stride < 1)
          throw ShapeError("layer " + std::to_string(i) + ": Conv2D needs positive dimensions and stride >= 1");
        if (s.kernel_h > in.h || s.kernel_w > in.w)
          throw ShapeError("layer " + std::to_string(i) + ": kernel larger than input");
        out = {s.out, (in.h - s.kernel_h) / s.stride + 1, (in.w - s.kernel_w) / s.stride + 1};
        w = Tensor({static_cast<std::size_t>(s.out), static_cast<std::size_t>(in.c),
                    static_cast<std::size_t>(s.kernel_h), static_cast<std::size_t>(s.kernel_w)});
        b = Tensor({static_cast<std::size_t>(s.out)});
        break;
      }
      case LayerKind::Dense: {
        if (s.out <= 0) throw ShapeError("layer " + std::to_string(i) + ": Dense needs positive width");
        if (in.h != 1 || in.w != 1)
          throw ShapeError("layer " + std::to_string(i) + ": Dense expects a flat input (add Flatten)");
        out = {s.out, 1, 1};
        w = Tensor({static_cast<std::size_t>(s.out), static_cast<std::size_t>(in.c)});
        b = Tensor({static_cast<std::size_t>(s.out)});
        break;
      }
      case LayerKind::Flatten:
        out = {static_cast<int>(in.size()), 1, 1};
        break;
      case LayerKind::ReLU:
      case LayerKind::Tanh:
      case LayerKind::Sigmoid:
        break;
      default:
        throw ShapeError("layer " + std::to_string(i) + ": unknown layer kind");
    }
    shapes_.push_back(out);
    weights_.push_back(std::move(w));
    biases_.push_back(std::move(b));
    trainable_.push_back(true);
  }
}

std::size_t Network::parameter_count() const {
  std::size_t n = 0;
  for (std::size_t i = 0; i < specs_.size(); ++i) n += weights_[i].size() + biases_[i].size();
  return n;
}

std::size_t Network::conv_stack_size() const {
  for (std::size_t i = 0; i < specs_.size(); ++i)
    if (specs_[i].kind == LayerKind::Flatten) return i + 1;
  return 0;
}

Network Network::slice(std::size_t begin, std::size_t end) const {
  if (begin > end || end > specs_.size()) throw ShapeError("invalid layer slice");
  Network out(shapes_[begin], std::vector<LayerSpec>(specs_.begin() + begin, specs_.begin() + end));
  for (std::size_t i = begin; i < end; ++i) {
    out.weights_[i - begin] = weights_[i];
    out.biases_[i - begin] = biases_[i];
    out.trainable_[i - begin] = trainable_[i];
  }
  return out;
}

void Network::init_he_uniform(std::uint64_t seed) {
  Rng rng(seed);
  for (std::size_t i = 0; i < specs_.size(); ++i) {
    if (!specs_[i].has_params()) continue;
    const Shape3 in = shapes_[i];
    const double fan_in = specs_[i].kind == LayerKind::Conv2D
                              ? static_cast<double>(in.c) * specs_[i].kernel_h * specs_[i].kernel_w
                              : static_cast<double>(in.size());
    const double limit = std::sqrt(6.0 / fan_in);
    for (float& v : weights_[i].data) v = static_cast<float>(rng.uniform(-limit, limit));
    std::fill(biases_[i].data.begin(), biases_[i].data.end(), 0.0f);
  }
}

Network init_network(std::string_view spec_name, std::uint64_t seed) {
  std::vector<LayerSpec> specs = {
      LayerSpec::conv2d(8, 5, 5, 2), LayerSpec::relu(), LayerSpec::conv2d(16, 5, 5, 2), LayerSpec::relu(),
      LayerSpec::conv2d(32, 3, 3, 1), LayerSpec::relu(), LayerSpec::flatten(),     LayerSpec::dense(64),
      LayerSpec::relu(),              LayerSpec::dense(16), LayerSpec::relu(),     LayerSpec::dense(1),
  };
  if (spec_name == "steering_net") {
    specs.push_back(LayerSpec::tanh());
  } else if (spec_name == "throttle_head") {
    specs.push_back(LayerSpec::sigmoid());
  } else {
    throw ParameterError("unknown network spec '" + std::string(spec_name) + "'");
  }
  Network net(kImageInput, std::move(specs));
  net.init_he_uniform(seed);
  return net;
}

// ---------------------------------------------------------------------------
// Kernels. Inside forward/backward every activation is stored feature-major:
// [C, N, H, W] for feature maps and [F, N] for flat vectors, so each layer is
// one GEMM over the whole batch. Every output element is accumulated by a
// single chain in a fixed index order, which makes results independent of
// tiling, batch size and alignment.

namespace {

typedef double v8d __attribute__((vector_size(64)));

inline v8d load8(const double* p) {
  v8d v;
  std::memcpy(&v, p, sizeof v);
  return v;
}
inline void store8(double* p, v8d v) { std::memcpy(p, &v, sizeof v); }
inline v8d splat8(double s) { return v8d{s, s, s, s, s, s, s, s}; }

/// out[r][j] = init[r] + sum_t A[r][t] * B[t][j], t ascending (init 0 when null).
template <class TA>
void gemm(std::size_t R, std::size_t T, std::size_t J, const TA* A, std::size_t lda, const double* B, std::size_t ldb,
          double* out, std::size_t ldc, const double* init) {
  auto a_at = [&](std::size_t r, std::size_t t) { return static_cast<double>(A[r * lda + t]); };
  std::size_t j = 0;
  for (; j + 32 <= J; j += 32) {
    std::size_t r = 0;
    for (; r + 4 <= R; r += 4) {
      v8d acc[4][4];
      for (int q = 0; q < 4; ++q) {
        const v8d s = splat8(init ? init[r + q] : 0.0);
        for (int v = 0; v < 4; ++v) acc[q][v] = s;
      }
      for (std::size_t t = 0; t < T; ++t) {
        const double* bt = B + t * ldb + j;
        const v8d b0 = load8(bt), b1 = load8(bt + 8), b2 = load8(bt + 16), b3 = load8(bt + 24);
        for (int q = 0; q < 4; ++q) {
          const v8d a = splat8(a_at(r + q, t));
          acc[q][0] += a * b0;
          acc[q][1] += a * b1;
          acc[q][2] += a * b2;
          acc[q][3] += a * b3;
        }
      }
      for (int q = 0; q < 4; ++q)
        for (int v = 0; v < 4; ++v) store8(out + (r + q) * ldc + j + 8 * v, acc[q][v]);
    }
    for (; r < R; ++r) {
      v8d acc[4];
      for (int v = 0; v < 4; ++v) acc[v] = splat8(init ? init[r] : 0.0);
      for (std::size_t t = 0; t < T; ++t) {
        const double* bt = B + t * ldb + j;
        const v8d a = splat8(a_at(r, t));
        for (int v = 0; v < 4; ++v) acc[v] += a * load8(bt + 8 * v);
      }
      for (int v = 0; v < 4; ++v) store8(out + r * ldc + j + 8 * v, acc[v]);
    }
  }
  // Remaining columns: scalar chains, eight rows at a time for latency hiding.
  for (; j < J; ++j) {
    std::size_t r = 0;
    for (; r + 8 <= R; r += 8) {
      double acc[8];
      for (int q = 0; q < 8; ++q) acc[q] = init ? init[r + q] : 0.0;
      for (std::size_t t = 0; t < T; ++t) {
        const double b = B[t * ldb + j];
        for (int q = 0; q < 8; ++q) acc[q] += a_at(r + q, t) * b;
      }
      for (int q = 0; q < 8; ++q) out[(r + q) * ldc + j] = acc[q];
    }
    for (; r < R; ++r) {
      double acc = init ? init[r] : 0.0;
      for (std::size_t t = 0; t < T; ++t) acc += a_at(r, t) * B[t * ldb + j];
      out[r * ldc + j] = acc;
    }
  }
}

inline double reduce8(const double* p) { return ((p[0] + p[1]) + (p[2] + p[3])) + ((p[4] + p[5]) + (p[6] + p[7])); }

/// Fixed-order dot product: lane l accumulates indices congruent to l mod 8.
double dot8(const double* a, const double* b, std::size_t n) {
  double part[8] = {0, 0, 0, 0, 0, 0, 0, 0};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    for (int l = 0; l < 8; ++l) part[l] += a[i + l] * b[i + l];
  for (int l = 0; i < n; ++i, ++l) part[l] += a[i] * b[i];
  return reduce8(part);
}

double sum8(const double* a, std::size_t n) {
  double part[8] = {0, 0, 0, 0, 0, 0, 0, 0};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    for (int l = 0; l < 8; ++l) part[l] += a[i + l];
  for (int l = 0; i < n; ++i, ++l) part[l] += a[i];
  return reduce8(part);
}

/// out[r][c] = dot8(A[r], B[c], L); tiled 4x4 with the same lane arithmetic as dot8.
void gemm_nt(std::size_t R, std::size_t C, std::size_t L, const double* A, std::size_t lda, const double* B,
             std::size_t ldb, double* out, std::size_t ldo) {
  const std::size_t L8 = L - L % 8;
  std::size_t r = 0;
  for (; r + 4 <= R; r += 4) {
    std::size_t c = 0;
    for (; c + 4 <= C; c += 4) {
      v8d acc[4][4];
      for (int p = 0; p < 4; ++p)
        for (int q = 0; q < 4; ++q) acc[p][q] = splat8(0.0);
      for (std::size_t i = 0; i < L8; i += 8) {
        const v8d a0 = load8(A + r * lda + i), a1 = load8(A + (r + 1) * lda + i);
        const v8d a2 = load8(A + (r + 2) * lda + i), a3 = load8(A + (r + 3) * lda + i);
        for (int q = 0; q < 4; ++q) {
          const v8d b = load8(B + (c + q) * ldb + i);
          acc[0][q] += a0 * b;
          acc[1][q] += a1 * b;
          acc[2][q] += a2 * b;
          acc[3][q] += a3 * b;
        }
      }
      for (int p = 0; p < 4; ++p)
        for (int q = 0; q < 4; ++q) {
          double part[8];
          store8(part, acc[p][q]);
          const double* a = A + (r + p) * lda;
          const double* b = B + (c + q) * ldb;
          for (std::size_t i = L8, l = 0; i < L; ++i, ++l) part[l] += a[i] * b[i];
          out[(r + p) * ldo + c + q] = reduce8(part);
        }
    }
    for (; c < C; ++c)
      for (int p = 0; p < 4; ++p) out[(r + p) * ldo + c] = dot8(A + (r + p) * lda, B + c * ldb, L);
  }
  for (; r < R; ++r)
    for (std::size_t c = 0; c < C; ++c) out[r * ldo + c] = dot8(A + r * lda, B + c * ldb, L);
}

struct ConvGeom {
  int in_c, in_h, in_w, kh, kw, stride, out_c, out_h, out_w;
  std::size_t K() const { return static_cast<std::size_t>(in_c) * kh * kw; }
  std::size_t P() const { return static_cast<std::size_t>(out_h) * out_w; }
  std::size_t in_plane() const { return static_cast<std::size_t>(in_h) * in_w; }
};

ConvGeom conv_geom(const Network& net, std::size_t i) {
  const Shape3 in = i == 0 ? net.input_shape() : net.output_shape(i - 1);
  const Shape3 out = net.output_shape(i);
  const LayerSpec& s = net.specs()[i];
  return {in.c, in.h, in.w, s.kernel_h, s.kernel_w, s.stride, out.c, out.h, out.w};
}

/// col[k][n*P + p] from a feature-major input.
void im2col(const ConvGeom& g, std::size_t N, const double* x, std::vector<double>& col) {
  const std::size_t P = g.P(), NP = N * P;
  col.resize(g.K() * NP);
  for (int c = 0; c < g.in_c; ++c)
    for (int ky = 0; ky < g.kh; ++ky)
      for (int kx = 0; kx < g.kw; ++kx) {
        const std::size_t k = (static_cast<std::size_t>(c) * g.kh + ky) * g.kw + kx;
        double* row = col.data() + k * NP;
        for (std::size_t n = 0; n < N; ++n) {
          const double* img = x + (static_cast<std::size_t>(c) * N + n) * g.in_plane();
          double* dst = row + n * P;
          for (int oy = 0; oy < g.out_h; ++oy) {
            const double* src = img + static_cast<std::size_t>(oy * g.stride + ky) * g.in_w + kx;
            double* d = dst + static_cast<std::size_t>(oy) * g.out_w;
            if (g.stride == 1) {
              std::memcpy(d, src, static_cast<std::size_t>(g.out_w) * sizeof(double));
            } else {
              for (int ox = 0; ox < g.out_w; ++ox) d[ox] = src[ox * g.stride];
            }
          }
        }
      }
}

/// Adds dcol (columns for samples [n0, n0 + count)) back onto the input gradient.
void col2im_add(const ConvGeom& g, std::size_t N, std::size_t n0, std::size_t count, const double* dcol,
                std::size_t ldc, double* dx) {
  const std::size_t P = g.P();
  for (int c = 0; c < g.in_c; ++c)
    for (int ky = 0; ky < g.kh; ++ky)
      for (int kx = 0; kx < g.kw; ++kx) {
        const std::size_t k = (static_cast<std::size_t>(c) * g.kh + ky) * g.kw + kx;
        for (std::size_t n = 0; n < count; ++n) {
          double* img = dx + (static_cast<std::size_t>(c) * N + n0 + n) * g.in_plane();
          const double* src = dcol + k * ldc + n * P;
          for (int oy = 0; oy < g.out_h; ++oy) {
            double* d = img + static_cast<std::size_t>(oy * g.stride + ky) * g.in_w + kx;
            const double* s = src + static_cast<std::size_t>(oy) * g.out_w;
            for (int ox = 0; ox < g.out_w; ++ox) d[ox * g.stride] += s[ox];
          }
        }
      }
}

std::vector<double> to_double(const Tensor& t) { return std::vector<double>(t.data.begin(), t.data.end()); }

void transpose_into(const Tensor& w, std::size_t rows, std::size_t cols, std::vector<double>& t) {
  t.resize(rows * cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) t[c * rows + r] = w[r * cols + c];
}

/// Sets the shape, reusing storage; contents are unspecified.
void reshape(TensorD& t, const std::vector<std::size_t>& shape) {
  t.shape = shape;
  t.data.resize(TensorD::element_count(shape));
}

/// [N, C, plane] <-> [C, N, plane]
void swap_leading(const double* src, double* dst, std::size_t A, std::size_t B, std::size_t plane) {
  for (std::size_t a = 0; a < A; ++a)
    for (std::size_t b = 0; b < B; ++b)
      std::memcpy(dst + (b * A + a) * plane, src + (a * B + b) * plane, plane * sizeof(double));
}

std::vector<std::size_t> sample_major_shape(std::size_t n, const Shape3& s) {
  if (s.h == 1 && s.w == 1) return {n, static_cast<std::size_t>(s.c)};
  return {n, static_cast<std::size_t>(s.c), static_cast<std::size_t>(s.h), static_cast<std::size_t>(s.w)};
}

std::vector<std::size_t> feature_major_shape(std::size_t n, const Shape3& s) {
  if (s.h == 1 && s.w == 1) return {static_cast<std::size_t>(s.c), n};
  return {static_cast<std::size_t>(s.c), n, static_cast<std::size_t>(s.h), static_cast<std::size_t>(s.w)};
}

TensorD to_sample_major(const TensorD& t, std::size_t N, const Shape3& s) {
  TensorD out(sample_major_shape(N, s));
  swap_leading(t.ptr(), out.ptr(), static_cast<std::size_t>(s.c), N, static_cast<std::size_t>(s.h) * s.w);
  return out;
}

Shape3 layer_input(const Network& net, std::size_t i) { return i == 0 ? net.input_shape() : net.output_shape(i - 1); }

}  // namespace

TensorD forward(const Network& net, const TensorD& batch, ForwardCache* cache) {
  const Shape3 in_shape = net.input_shape();
  if (batch.rows() == 0 || batch.row_size() != in_shape.size())
    throw ShapeError("forward: batch " + shape_string(batch.shape) + " does not match network input " +
                     shape_string(sample_major_shape(1, in_shape)));
  ForwardCache local;
  ForwardCache& c = cache != nullptr ? *cache : local;
  const std::size_t N = batch.rows();
  const std::size_t L = net.layer_count();
  c.network = &net;
  c.batch_size = N;
  c.activations.resize(L + 1);
  c.columns.resize(L);
  reshape(c.activations[0], feature_major_shape(N, in_shape));
  swap_leading(batch.ptr(), c.activations[0].ptr(), N, static_cast<std::size_t>(in_shape.c),
               static_cast<std::size_t>(in_shape.h) * in_shape.w);
  for (std::size_t i = 0; i < L; ++i) {
    const LayerSpec& s = net.specs()[i];
    const TensorD& cur = c.activations[i];
    TensorD& next = c.activations[i + 1];
    reshape(next, feature_major_shape(N, net.output_shape(i)));
    switch (s.kind) {
      case LayerKind::Conv2D: {
        const ConvGeom g = conv_geom(net, i);
        std::vector<double>& col = c.columns[i];
        im2col(g, N, cur.ptr(), col);
        const std::vector<double> bias = to_double(net.bias(i));
        gemm(g.out_c, g.K(), N * g.P(), net.weights(i).ptr(), g.K(), col.data(), N * g.P(), next.ptr(), N * g.P(),
             bias.data());
        break;
      }
      case LayerKind::Dense: {
        const std::size_t in = layer_input(net, i).size();
        const std::vector<double> bias = to_double(net.bias(i));
        gemm(static_cast<std::size_t>(s.out), in, N, net.weights(i).ptr(), in, cur.ptr(), N, next.ptr(), N,
             bias.data());
        break;
      }
      case LayerKind::ReLU:
        for (std::size_t k = 0; k < cur.size(); ++k) next[k] = cur[k] > 0.0 ? cur[k] : 0.0;
        break;
      case LayerKind::Tanh:
        for (std::size_t k = 0; k < cur.size(); ++k) next[k] = std::tanh(cur[k]);
        break;
      case LayerKind::Sigmoid:
        for (std::size_t k = 0; k < cur.size(); ++k) next[k] = 1.0 / (1.0 + std::exp(-cur[k]));
        break;
      case LayerKind::Flatten: {
        // [C, N, P] -> [C*P, N]
        const Shape3 in = layer_input(net, i);
        const std::size_t C = static_cast<std::size_t>(in.c), P = static_cast<std::size_t>(in.h) * in.w;
        for (std::size_t ch = 0; ch < C; ++ch)
          for (std::size_t n = 0; n < N; ++n)
            for (std::size_t p = 0; p < P; ++p) next[(ch * P + p) * N + n] = cur[(ch * N + n) * P + p];
        break;
      }
    }
  }
  return to_sample_major(c.activations[L], N, net.output_shape());
}

Gradients backward(const Network& net, ForwardCache& cache, const TensorD& grad_output, bool want_input_grad) {
  Gradients out;
  backward(net, cache, grad_output, out, want_input_grad);
  return out;
}

void backward(const Network& net, ForwardCache& cache, const TensorD& grad_output, Gradients& grads,
              bool want_input_grad) {
  const std::size_t L = net.layer_count();
  if (cache.network != &net || cache.activations.size() != L + 1 || cache.columns.size() != L)
    throw ShapeError("backward: cache was not produced by forward on this network");
  const std::size_t N = cache.batch_size;
  const auto expected = sample_major_shape(N, net.output_shape());
  if (grad_output.shape != expected)
    throw ShapeError("backward: gradient shape " + shape_string(grad_output.shape) + " does not match output " +
                     shape_string(expected));

  grads.weights.resize(L);
  grads.biases.resize(L);
  for (std::size_t i = 0; i < L; ++i) {
    reshape(grads.weights[i], net.weights(i).shape);
    reshape(grads.biases[i], net.bias(i).shape);
    if (!(net.specs()[i].has_params() && net.trainable(i))) {
      std::fill(grads.weights[i].data.begin(), grads.weights[i].data.end(), 0.0);
      std::fill(grads.biases[i].data.begin(), grads.biases[i].data.end(), 0.0);
    }
  }
  grads.input = TensorD();

  // Input gradients below the lowest trainable layer are never needed.
  std::size_t lowest = 0;
  if (!want_input_grad) {
    lowest = L;
    for (std::size_t i = 0; i < L; ++i)
      if (net.specs()[i].has_params() && net.trainable(i)) {
        lowest = i;
        break;
      }
  }

  TensorD& g = cache.grad_a;
  TensorD& dx = cache.grad_b;
  {
    const Shape3 out = net.output_shape();
    reshape(g, feature_major_shape(N, out));
    swap_leading(grad_output.ptr(), g.ptr(), N, static_cast<std::size_t>(out.c),
                 static_cast<std::size_t>(out.h) * out.w);
  }
  for (std::size_t ii = L; ii-- > lowest;) {
    const LayerSpec& s = net.specs()[ii];
    const TensorD& x = cache.activations[ii];
    const TensorD& y = cache.activations[ii + 1];
    const bool need_dx = want_input_grad || ii > lowest;
    const bool train = s.has_params() && net.trainable(ii);
    if (need_dx) reshape(dx, x.shape);
    switch (s.kind) {
      case LayerKind::Conv2D: {
        const ConvGeom geom = conv_geom(net, ii);
        const std::size_t K = geom.K(), P = geom.P(), NP = N * P;
        const std::vector<double>& col = cache.columns[ii];
        if (train) {
          gemm_nt(geom.out_c, K, NP, g.ptr(), NP, col.data(), NP, grads.weights[ii].ptr(), K);
          for (int oc = 0; oc < geom.out_c; ++oc) grads.biases[ii][oc] = sum8(g.ptr() + oc * NP, NP);
        }
        if (need_dx) {
          transpose_into(net.weights(ii), geom.out_c, K, cache.wt);
          const std::size_t group = std::max<std::size_t>(1, 2048 / P);
          cache.dcol.resize(K * group * P);
          std::fill(dx.data.begin(), dx.data.end(), 0.0);
          for (std::size_t n0 = 0; n0 < N; n0 += group) {
            const std::size_t count = std::min(group, N - n0);
            gemm(K, geom.out_c, count * P, cache.wt.data(), geom.out_c, g.ptr() + n0 * P, NP, cache.dcol.data(),
                 count * P, static_cast<const double*>(nullptr));
            col2im_add(geom, N, n0, count, cache.dcol.data(), count * P, dx.ptr());
          }
        }
        break;
      }
      case LayerKind::Dense: {
        const std::size_t in = layer_input(net, ii).size(), out = static_cast<std::size_t>(s.out);
        if (train) {
          gemm_nt(out, in, N, g.ptr(), N, x.ptr(), N, grads.weights[ii].ptr(), in);
          for (std::size_t j = 0; j < out; ++j) grads.biases[ii][j] = sum8(g.ptr() + j * N, N);
        }
        if (need_dx) {
          transpose_into(net.weights(ii), out, in, cache.wt);
          gemm(in, out, N, cache.wt.data(), out, g.ptr(), N, dx.ptr(), N, static_cast<const double*>(nullptr));
        }
        break;
      }
      case LayerKind::ReLU:
        if (need_dx)
          for (std::size_t k = 0; k < x.size(); ++k) dx[k] = x[k] > 0.0 ? g[k] : 0.0;
        break;
      case LayerKind::Tanh:
        if (need_dx)
          for (std::size_t k = 0; k < x.size(); ++k) dx[k] = g[k] * (1.0 - y[k] * y[k]);
        break;
      case LayerKind::Sigmoid:
        if (need_dx)
          for (std::size_t k = 0; k < x.size(); ++k) dx[k] = g[k] * y[k] * (1.0 - y[k]);
        break;
      case LayerKind::Flatten:
        if (need_dx) {
          const Shape3 in = layer_input(net, ii);
          const std::size_t C = static_cast<std::size_t>(in.c), P = static_cast<std::size_t>(in.h) * in.w;
          for (std::size_t ch = 0; ch < C; ++ch)
            for (std::size_t n = 0; n < N; ++n)
              for (std::size_t p = 0; p < P; ++p) dx[(ch * N + n) * P + p] = g[(ch * P + p) * N + n];
        }
        break;
    }
    if (!need_dx) break;
    std::swap(g, dx);
  }
  if (want_input_grad) grads.input = to_sample_major(g, N, net.input_shape());
}

LossResult mse(const TensorD& pred, const TensorD& target) {
  if (pred.shape != target.shape)
    throw ShapeError("mse: shape " + shape_string(pred.shape) + " vs " + shape_string(target.shape));
  LossResult r;
  r.grad = TensorD(pred.shape, 0.0);
  const double n = static_cast<double>(pred.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double e = pred[i] - target[i];
    sum += e * e;
    r.grad[i] = 2.0 * e / n;
  }
  r.value = pred.size() == 0 ? 0.0 : sum / n;
  return r;
}

AdamState AdamState::for_network(const Network& net) {
  AdamState s;
  for (std::size_t i = 0; i < net.layer_count(); ++i) {
    s.m_w.emplace_back(net.weights(i).shape, 0.0);
    s.v_w.emplace_back(net.weights(i).shape, 0.0);
    s.m_b.emplace_back(net.bias(i).shape, 0.0);
    s.v_b.emplace_back(net.bias(i).shape, 0.0);
  }
  return s;
}

void adam_step(Network& net, const Gradients& grads, AdamState& state, double lr) {
  const std::size_t L = net.layer_count();
  if (grads.weights.size() != L || state.m_w.size() != L) throw ShapeError("adam_step: layer count mismatch");
  ++state.t;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
  auto update = [&](Tensor& param, const TensorD& g, TensorD& m, TensorD& v) {
    if (g.size() != param.size() || m.size() != param.size()) throw ShapeError("adam_step: parameter shape mismatch");
    for (std::size_t k = 0; k < param.size(); ++k) {
      m[k] = state.beta1 * m[k] + (1.0 - state.beta1) * g[k];
      v[k] = state.beta2 * v[k] + (1.0 - state.beta2) * g[k] * g[k];
      const double mhat = m[k] / bc1;
      const double vhat = v[k] / bc2;
      param[k] = static_cast<float>(static_cast<double>(param[k]) - lr * mhat / (std::sqrt(vhat) + state.epsilon));
    }
  };
  for (std::size_t i = 0; i < L; ++i) {
    if (!net.specs()[i].has_params() || !net.trainable(i)) continue;
    update(net.weights(i), grads.weights[i], state.m_w[i], state.v_w[i]);
    update(net.bias(i), grads.biases[i], state.m_b[i], state.v_b[i]);
  }
}

namespace {

bool same_structure(const Network& a, const Network& b, std::size_t layers) {
  if (a.input_shape() != b.input_shape()) return false;
  if (a.layer_count() < layers || b.layer_count() < layers) return false;
  for (std::size_t i = 0; i < layers; ++i)
    if (!(a.specs()[i] == b.specs()[i])) return false;
  return true;
}

}  // namespace

bool same_conv_stack(const Network& a, const Network& b) {
  const std::size_t n = a.conv_stack_size();
  if (n == 0 || n != b.conv_stack_size() || !same_structure(a, b, n)) return false;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& wa = a.weights(i).data;
    const auto& wb = b.weights(i).data;
    const auto& ba = a.bias(i).data;
    const auto& bb = b.bias(i).data;
    if (wa.size() != wb.size() || ba.size() != bb.size()) return false;
    if (std::memcmp(wa.data(), wb.data(), wa.size() * sizeof(float)) != 0) return false;
    if (std::memcmp(ba.data(), bb.data(), ba.size() * sizeof(float)) != 0) return false;
  }
  return true;
}

Network transplant_conv(Network dst, const Network& src) {
  const std::size_t n = src.conv_stack_size();
  if (n == 0 || n != dst.conv_stack_size() || !same_structure(dst, src, n))
    throw ShapeError("transplant_conv: convolutional stacks differ in structure");
  for (std::size_t i = 0; i < n; ++i) {
    dst.weights(i) = src.weights(i);
    dst.bias(i) = src.bias(i);
    dst.set_trainable(i, false);
  }
  return dst;
}

// ---------------------------------------------------------------------------
// Model file: "E2EM", u32 version, u32 c/h/w, u32 layer count, per layer
// u32 kind/out/kh/kw/stride/trainable, then per parametric layer
// u32 n + n float32 weights, u32 m + m float32 biases. All little-endian.

namespace {

class Writer {
 public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  void f32(float f) { u32(std::bit_cast<std::uint32_t>(f)); }
  void raw(std::string_view s) { out_.append(s); }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(std::string_view in) : in_(in) {}
  std::uint32_t u32() {
    if (pos_ + 4 > in_.size()) throw ModelFormatError("model file truncated at byte " + std::to_string(pos_));
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string_view raw(std::size_t n) {
    if (pos_ + n > in_.size()) throw ModelFormatError("model file truncated at byte " + std::to_string(pos_));
    auto s = in_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  std::string_view in_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_model(const Network& net) {
  Writer w;
  w.raw("E2EM");
  w.u32(kModelFormatVersion);
  w.u32(static_cast<std::uint32_t>(net.input_shape().c));
  w.u32(static_cast<std::uint32_t>(net.input_shape().h));
  w.u32(static_cast<std::uint32_t>(net.input_shape().w));
  w.u32(static_cast<std::uint32_t>(net.layer_count()));
  for (std::size_t i = 0; i < net.layer_count(); ++i) {
    const LayerSpec& s = net.specs()[i];
    w.u32(static_cast<std::uint32_t>(s.kind));
    w.u32(static_cast<std::uint32_t>(s.out));
    w.u32(static_cast<std::uint32_t>(s.kernel_h));
    w.u32(static_cast<std::uint32_t>(s.kernel_w));
    w.u32(static_cast<std::uint32_t>(s.stride));
    w.u32(net.trainable(i) ? 1u : 0u);
  }
  for (std::size_t i = 0; i < net.layer_count(); ++i) {
    if (!net.specs()[i].has_params()) continue;
    w.u32(static_cast<std::uint32_t>(net.weights(i).size()));
    for (float f : net.weights(i).data) w.f32(f);
    w.u32(static_cast<std::uint32_t>(net.bias(i).size()));
    for (float f : net.bias(i).data) w.f32(f);
  }
  return w.take();
}

Network decode_model(std::string_view bytes) {
  Reader r(bytes);
  if (r.raw(4) != "E2EM") throw ModelFormatError("not a model file (bad magic)");
  const std::uint32_t version = r.u32();
  if (version != kModelFormatVersion)
    throw ModelFormatError("unsupported model format version " + std::to_string(version));
  Shape3 in;
  in.c = static_cast<int>(r.u32());
  in.h = static_cast<int>(r.u32());
  in.w = static_cast<int>(r.u32());
  const std::uint32_t layers = r.u32();
  if (layers > 4096) throw ModelFormatError("implausible layer count");
  std::vector<LayerSpec> specs;
  std::vector<bool> trainable;
  for (std::uint32_t i = 0; i < layers; ++i) {
    LayerSpec s;
    const std::uint32_t kind = r.u32();
    if (kind < 1 || kind > 6) throw ModelFormatError("unknown layer kind " + std::to_string(kind));
    s.kind = static_cast<LayerKind>(kind);
    s.out = static_cast<int>(r.u32());
    s.kernel_h = static_cast<int>(r.u32());
    s.kernel_w = static_cast<int>(r.u32());
    s.stride = static_cast<int>(r.u32());
    trainable.push_back(r.u32() != 0);
    specs.push_back(s);
  }
  Network net = [&] {
    try {
      return Network(in, specs);
    } catch (const ShapeError& e) {
      throw ModelFormatError(std::string("invalid architecture: ") + e.what());
    }
  }();
  for (std::size_t i = 0; i < net.layer_count(); ++i) {
    net.set_trainable(i, trainable[i]);
    if (!net.specs()[i].has_params()) continue;
    auto read_block = [&](Tensor& t, const char* what) {
      const std::uint32_t n = r.u32();
      if (n != t.size())
        throw ModelFormatError("layer " + std::to_string(i) + " " + what + " count " + std::to_string(n) +
                               " does not match shape " + shape_string(t.shape));
      for (float& f : t.data) f = r.f32();
    };
    read_block(net.weights(i), "weight");
    read_block(net.bias(i), "bias");
  }
  if (!r.done()) throw ModelFormatError("trailing bytes after model data");
  return net;
}

void save_model(const Network& net, const std::filesystem::path& path) {
  const std::string bytes = encode_model(net);
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write model " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("failed writing model " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

Network load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ModelFormatError("cannot open model " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return decode_model(ss.str());
}

TensorD images_to_batch(const std::vector<const Image*>& images) {
  if (images.empty()) throw ShapeError("images_to_batch: empty batch");
  const int w = images[0]->width(), h = images[0]->height();
  TensorD batch({images.size(), 1, static_cast<std::size_t>(h), static_cast<std::size_t>(w)});
  const std::size_t px = static_cast<std::size_t>(w) * h;
  for (std::size_t n = 0; n < images.size(); ++n) {
    if (images[n]->width() != w || images[n]->height() != h) throw ShapeError("images_to_batch: mixed image sizes");
    const auto bytes = images[n]->bytes();
    double* dst = batch.ptr() + n * px;
    for (std::size_t k = 0; k < px; ++k) dst[k] = bytes[k] / 255.0;
  }
  return batch;
}

}  // namespace racelab
