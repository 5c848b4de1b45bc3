#include "encattack/nn.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <string>

#include "encattack/error.hpp"
#include "encattack/rng.hpp"

namespace encattack {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;
using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;

ConstMatMap view(const Matrix2D& m) {
  return ConstMatMap(m.data.data(), static_cast<Eigen::Index>(m.rows), static_cast<Eigen::Index>(m.cols));
}
MatMap view(Matrix2D& m) {
  return MatMap(m.data.data(), static_cast<Eigen::Index>(m.rows), static_cast<Eigen::Index>(m.cols));
}

bool applies_activation(const MlpParams& p, std::size_t layer) {
  return layer + 1 < p.layers.size() && p.activation == Activation::relu;
}

std::string shape_str(std::size_t r, std::size_t c) {
  return std::to_string(r) + "x" + std::to_string(c);
}

}  // namespace

Matrix2D Matrix2D::identity(std::size_t n) {
  Matrix2D m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

bool Matrix2D::all_finite() const noexcept {
  return std::all_of(data.begin(), data.end(), [](double v) { return std::isfinite(v); });
}

std::string to_string(Activation a) { return a == Activation::relu ? "relu" : "identity"; }

Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::relu;
  if (s == "identity") return Activation::identity;
  fail(ErrorKind::schema, "unknown activation '" + s + "'");
}

std::size_t MlpParams::input_width() const {
  require(!layers.empty(), ErrorKind::shape, "network has no layers");
  return layers.front().weight.cols;
}

std::size_t MlpParams::output_width() const {
  require(!layers.empty(), ErrorKind::shape, "network has no layers");
  return layers.back().weight.rows;
}

std::vector<std::size_t> MlpParams::dims() const {
  std::vector<std::size_t> d;
  if (layers.empty()) return d;
  d.push_back(layers.front().weight.cols);
  for (const auto& l : layers) d.push_back(l.weight.rows);
  return d;
}

std::size_t MlpParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.weight.data.size() + l.bias.size();
  return n;
}

void MlpParams::validate() const {
  require(!layers.empty(), ErrorKind::shape, "network has no layers");
  for (std::size_t t = 0; t < layers.size(); ++t) {
    const auto& l = layers[t];
    require(l.weight.data.size() == l.weight.rows * l.weight.cols, ErrorKind::shape,
            "layer " + std::to_string(t) + " weight storage does not match its shape");
    require(l.bias.size() == l.weight.rows, ErrorKind::shape,
            "layer " + std::to_string(t) + " bias length does not match weight rows");
    if (t > 0) {
      require(l.weight.cols == layers[t - 1].weight.rows, ErrorKind::shape,
              "layer " + std::to_string(t) + " input width does not chain from layer " +
                  std::to_string(t - 1));
    }
  }
}

MlpParams init_mlp(std::span<const std::size_t> dims, double scale, std::uint64_t seed,
                   Activation activation) {
  require(dims.size() >= 2, ErrorKind::configuration, "init_mlp needs at least two layer widths");
  require(scale > 0.0 && std::isfinite(scale), ErrorKind::configuration, "init_mlp scale must be positive");
  for (const std::size_t d : dims) {
    require(d > 0, ErrorKind::configuration, "layer widths must be positive");
  }
  MlpParams params;
  params.activation = activation;
  for (std::size_t t = 0; t + 1 < dims.size(); ++t) {
    Rng rng = Rng(seed).split(t);
    const std::size_t fan_in = dims[t];
    const double w_std = scale / std::sqrt(static_cast<double>(fan_in));
    DenseLayer layer{Matrix2D(dims[t + 1], fan_in), std::vector<double>(dims[t + 1])};
    for (double& w : layer.weight.data) w = w_std * rng.normal();
    for (double& b : layer.bias) b = scale * rng.normal();
    params.layers.push_back(std::move(layer));
  }
  return params;
}

MlpParams zeros_like(const MlpParams& params) {
  MlpParams z;
  z.activation = params.activation;
  for (const auto& l : params.layers) {
    z.layers.push_back({Matrix2D(l.weight.rows, l.weight.cols), std::vector<double>(l.bias.size(), 0.0)});
  }
  return z;
}

std::vector<double> forward(const MlpParams& params, std::span<const double> x) {
  params.validate();
  require(x.size() == params.input_width(), ErrorKind::shape,
          "input length " + std::to_string(x.size()) + " does not match network input width " +
              std::to_string(params.input_width()));
  std::vector<double> h(x.begin(), x.end());
  for (std::size_t t = 0; t < params.layers.size(); ++t) {
    const auto& l = params.layers[t];
    std::vector<double> next(l.bias);
    for (std::size_t r = 0; r < l.weight.rows; ++r) {
      const auto w = l.weight.row(r);
      double acc = 0.0;
      for (std::size_t c = 0; c < w.size(); ++c) acc += w[c] * h[c];
      next[r] += acc;
    }
    if (applies_activation(params, t)) {
      for (double& v : next) v = std::max(v, 0.0);
    }
    h = std::move(next);
  }
  return h;
}

MlpGrads backward(const MlpParams& params, std::span<const double> x,
                  std::span<const double> grad_out) {
  params.validate();
  require(x.size() == params.input_width(), ErrorKind::shape, "backward: input width mismatch");
  require(grad_out.size() == params.output_width(), ErrorKind::shape,
          "backward: grad_out length does not match network output width");
  Matrix2D xin(1, x.size());
  std::copy(x.begin(), x.end(), xin.data.begin());
  MlpTape tape;
  forward_batch(params, xin, &tape);
  Matrix2D g(1, grad_out.size());
  std::copy(grad_out.begin(), grad_out.end(), g.data.begin());
  MlpGrads grads = zeros_like(params);
  backward_batch(params, tape, g, grads);
  return grads;
}

Matrix2D forward_batch(const MlpParams& params, const Matrix2D& x, MlpTape* tape) {
  params.validate();
  require(x.cols == params.input_width(), ErrorKind::shape,
          "batch of shape " + shape_str(x.rows, x.cols) + " does not match network input width " +
              std::to_string(params.input_width()));
  if (tape) {
    tape->input = x;
    tape->pre.clear();
    tape->post.clear();
  }
  Matrix2D h = x;
  for (std::size_t t = 0; t < params.layers.size(); ++t) {
    const auto& l = params.layers[t];
    Matrix2D out(h.rows, l.weight.rows);
    view(out).noalias() = view(h) * view(l.weight).transpose();
    view(out).rowwise() += ConstVecMap(l.bias.data(), static_cast<Eigen::Index>(l.bias.size())).transpose();
    if (tape) tape->pre.push_back(out);
    if (applies_activation(params, t)) {
      for (double& v : out.data) v = std::max(v, 0.0);
      if (tape) tape->post.push_back(out);
    }
    h = std::move(out);
  }
  return h;
}

Matrix2D backward_batch(const MlpParams& params, const MlpTape& tape, const Matrix2D& grad_out,
                        MlpGrads& grads) {
  require(tape.pre.size() == params.layers.size(), ErrorKind::shape, "tape does not match network");
  require(grads.layers.size() == params.layers.size(), ErrorKind::shape, "gradient set does not match network");
  require(grad_out.rows == tape.input.rows && grad_out.cols == params.output_width(), ErrorKind::shape,
          "grad_out shape " + shape_str(grad_out.rows, grad_out.cols) + " does not match batch output");
  Matrix2D g = grad_out;
  for (std::size_t t = params.layers.size(); t-- > 0;) {
    const auto& l = params.layers[t];
    auto& gl = grads.layers[t];
    if (applies_activation(params, t)) {
      const auto& pre = tape.pre[t];
      for (std::size_t i = 0; i < g.data.size(); ++i) {
        if (pre.data[i] <= 0.0) g.data[i] = 0.0;
      }
    }
    const Matrix2D& layer_in = t == 0 ? tape.input : tape.post[t - 1];
    view(gl.weight).noalias() += view(g).transpose() * view(layer_in);
    Eigen::Map<Eigen::VectorXd>(gl.bias.data(), static_cast<Eigen::Index>(gl.bias.size())) +=
        view(g).colwise().sum().transpose();
    Matrix2D next(g.rows, l.weight.cols);
    view(next).noalias() = view(g) * view(l.weight);
    g = std::move(next);
  }
  return g;
}

std::vector<std::span<double>> tensors(MlpParams& params) {
  std::vector<std::span<double>> out;
  for (auto& l : params.layers) {
    out.emplace_back(l.weight.data);
    out.emplace_back(l.bias);
  }
  return out;
}

std::vector<std::span<const double>> tensors(const MlpParams& params) {
  std::vector<std::span<const double>> out;
  for (const auto& l : params.layers) {
    out.emplace_back(l.weight.data);
    out.emplace_back(l.bias);
  }
  return out;
}

OptimState make_optim_state(std::span<const std::span<const double>> shapes, AdamConfig config) {
  OptimState s;
  s.config = config;
  for (const auto& t : shapes) {
    s.first_moment.emplace_back(t.size(), 0.0);
    s.second_moment.emplace_back(t.size(), 0.0);
  }
  return s;
}

OptimState make_optim_state(const MlpParams& params, AdamConfig config) {
  const auto views = tensors(params);
  return make_optim_state(views, config);
}

void adam_update(std::span<const std::span<double>> params,
                 std::span<const std::span<const double>> grads, OptimState& state) {
  require(params.size() == grads.size() && params.size() == state.first_moment.size(), ErrorKind::shape,
          "optimizer: tensor count mismatch between parameters, gradients and state");
  for (std::size_t t = 0; t < params.size(); ++t) {
    require(params[t].size() == grads[t].size() && params[t].size() == state.first_moment[t].size(),
            ErrorKind::shape, "optimizer: tensor " + std::to_string(t) + " shape mismatch");
  }
  const auto& c = state.config;
  ++state.step;
  const double step = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(c.beta1, step);
  const double correction2 = 1.0 - std::pow(c.beta2, step);
  for (std::size_t t = 0; t < params.size(); ++t) {
    auto& m = state.first_moment[t];
    auto& v = state.second_moment[t];
    for (std::size_t i = 0; i < params[t].size(); ++i) {
      const double g = grads[t][i];
      m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g;
      v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g * g;
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      params[t][i] -= c.learning_rate * m_hat / (std::sqrt(v_hat) + c.epsilon);
    }
  }
}

void opt_step(MlpParams& params, const MlpGrads& grads, OptimState& state) {
  require(params.dims() == grads.dims(), ErrorKind::shape, "opt_step: gradient layout differs from parameters");
  const auto p = tensors(params);
  const auto g = tensors(grads);
  adam_update(p, g, state);
}

}  // namespace encattack
