#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace encattack {

/// Dense row-major matrix of doubles.
struct Matrix2D {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix2D() = default;
  Matrix2D(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  static Matrix2D identity(std::size_t n);

  double& operator()(std::size_t r, std::size_t c) noexcept { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return data[r * cols + c]; }

  std::span<double> row(std::size_t r) noexcept { return {data.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const noexcept { return {data.data() + r * cols, cols}; }

  bool all_finite() const noexcept;

  friend bool operator==(const Matrix2D&, const Matrix2D&) = default;
};

enum class Activation { relu, identity };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& s);

/// One affine map x -> weight * x + bias; weight is (out x in).
struct DenseLayer {
  Matrix2D weight;
  std::vector<double> bias;

  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

/// f_k ∘ act ∘ f_{k-1} ∘ ... ∘ act ∘ f_1, no activation after the last layer.
struct MlpParams {
  std::vector<DenseLayer> layers;
  Activation activation = Activation::relu;

  std::size_t input_width() const;
  std::size_t output_width() const;
  std::vector<std::size_t> dims() const;
  std::size_t parameter_count() const;

  /// Shape-error unless the layer chain is consistent.
  void validate() const;

  friend bool operator==(const MlpParams&, const MlpParams&) = default;
};

/// Gradients share the parameter layout.
using MlpGrads = MlpParams;

/// Weights ~ Normal(0, scale^2 / fan_in), biases ~ Normal(0, scale^2).
MlpParams init_mlp(std::span<const std::size_t> dims, double scale, std::uint64_t seed,
                   Activation activation = Activation::relu);

MlpParams zeros_like(const MlpParams& params);

std::vector<double> forward(const MlpParams& params, std::span<const double> x);

/// Gradient of <grad_out, forward(params, x)> with respect to every parameter.
MlpGrads backward(const MlpParams& params, std::span<const double> x,
                  std::span<const double> grad_out);

/// Activations cached by `forward_batch` for the matching `backward_batch`.
struct MlpTape {
  Matrix2D input;
  std::vector<Matrix2D> pre;   // per layer, before activation
  std::vector<Matrix2D> post;  // per hidden layer, after activation
};

/// Rows of `x` are samples. Pass a tape to enable `backward_batch`.
Matrix2D forward_batch(const MlpParams& params, const Matrix2D& x, MlpTape* tape = nullptr);

/// Accumulates parameter gradients into `grads` and returns d/d(input).
Matrix2D backward_batch(const MlpParams& params, const MlpTape& tape, const Matrix2D& grad_out,
                        MlpGrads& grads);

/// Mutable and read-only views over every tensor of a parameter set, in a
/// fixed order. The optimizer works on these lists.
std::vector<std::span<double>> tensors(MlpParams& params);
std::vector<std::span<const double>> tensors(const MlpParams& params);

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct OptimState {
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
  std::uint64_t step = 0;
  AdamConfig config;
};

OptimState make_optim_state(std::span<const std::span<const double>> shapes, AdamConfig config = {});
OptimState make_optim_state(const MlpParams& params, AdamConfig config = {});

/// Bias-corrected Adam update over matching tensor lists.
void adam_update(std::span<const std::span<double>> params,
                 std::span<const std::span<const double>> grads, OptimState& state);

void opt_step(MlpParams& params, const MlpGrads& grads, OptimState& state);

}  // namespace encattack
