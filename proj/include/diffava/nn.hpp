#pragma once

// Small layer library with hand-derived backward passes. Each parameter
// struct exposes a static visit(self, fn) that calls fn(name, matrix) for
// every tensor in a fixed order; that order defines flattening, optimizer
// state, and snapshot layout.

#include <cstdint>
#include <string>
#include <type_traits>
#include <vector>

#include "diffava/numerics.hpp"
#include "diffava/rng.hpp"

namespace diffava::nn {

template <class Model, class Fn>
void visit_params(Model& model, Fn&& fn) {
  std::remove_const_t<Model>::visit(model, std::forward<Fn>(fn));
}

// Wraps fn so nested parameter structs report dotted names ("layer0.w").
template <class Fn>
auto prefixed(std::string prefix, Fn& fn) {
  return [prefix = std::move(prefix), &fn](const std::string& name, auto& m) { fn(prefix + name, m); };
}

template <class Model>
std::vector<Matrix*> param_pointers(Model& model) {
  std::vector<Matrix*> out;
  visit_params(model, [&](const std::string&, Matrix& m) { out.push_back(&m); });
  return out;
}

template <class Model>
std::vector<const Matrix*> param_pointers(const Model& model) {
  std::vector<const Matrix*> out;
  visit_params(model, [&](const std::string&, const Matrix& m) { out.push_back(&m); });
  return out;
}

template <class Model>
std::size_t param_count(const Model& model) {
  std::size_t n = 0;
  for (const Matrix* m : param_pointers(model)) n += static_cast<std::size_t>(m->size());
  return n;
}

template <class Model>
Vector flatten(const Model& model) {
  Vector out(static_cast<Eigen::Index>(param_count(model)));
  Eigen::Index k = 0;
  for (const Matrix* m : param_pointers(model)) {
    out.segment(k, m->size()) = m->reshaped<Eigen::RowMajor>();
    k += m->size();
  }
  return out;
}

template <class Model>
void unflatten(const Vector& flat, Model& model) {
  Eigen::Index k = 0;
  for (Matrix* m : param_pointers(model)) {
    m->reshaped<Eigen::RowMajor>() = flat.segment(k, m->size());
    k += m->size();
  }
}

// Same shapes, all zeros.
template <class Model>
Model zeros_like(const Model& model) {
  Model out = model;
  for (Matrix* m : param_pointers(out)) m->setZero();
  return out;
}

// acc += scale * g, tensor by tensor.
template <class Model>
void accumulate(Model& acc, const Model& g, double scale = 1.0) {
  auto a = param_pointers(acc);
  auto b = param_pointers(g);
  for (std::size_t i = 0; i < a.size(); ++i) *a[i] += scale * *b[i];
}

// ---------------------------------------------------------------------------
// Layers

// Gaussian-initialized matrix with the given standard deviation.
Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, double stddev, Rng& rng);

struct Linear {
  Matrix w;  // in x out
  Matrix b;  // 1 x out

  Linear() = default;
  // Weights ~ N(0, gain^2 / in), bias zero.
  Linear(Eigen::Index in, Eigen::Index out, Rng& rng, double gain = 1.0);

  Eigen::Index in_dim() const { return w.rows(); }
  Eigen::Index out_dim() const { return w.cols(); }

  Matrix forward(const Matrix& x) const;
  // Adds parameter gradients into grad and returns dL/dx.
  Matrix backward(const Matrix& x, const Matrix& dy, Linear& grad) const;

  template <class Self, class Fn>
  static void visit(Self& self, Fn&& fn) {
    fn("w", self.w);
    fn("b", self.b);
  }
};

struct LayerNorm {
  Matrix gamma;  // 1 x D
  Matrix beta;   // 1 x D
  double eps = 1e-5;

  LayerNorm() = default;
  explicit LayerNorm(Eigen::Index dim);

  struct Cache {
    Matrix xhat;
    Vector inv_std;
  };

  Matrix forward(const Matrix& x, Cache* cache = nullptr) const;
  Matrix backward(const Cache& cache, const Matrix& dy, LayerNorm& grad) const;

  template <class Self, class Fn>
  static void visit(Self& self, Fn&& fn) {
    fn("gamma", self.gamma);
    fn("beta", self.beta);
  }
};

// tanh approximation of GELU.
Matrix gelu(const Matrix& x);
// dL/dx given the pre-activation x and dL/dy.
Matrix gelu_backward(const Matrix& x, const Matrix& dy);

// Row-wise l2 normalization backward: y = x / |x|, returns dL/dx.
Matrix normalize_rows_backward(const Matrix& x, const Matrix& y, const Matrix& dy);

// Sinusoidal embedding of a scalar position, `dim` entries:
// [sin(p w_0), cos(p w_0), sin(p w_1), ...] with w_k = 10000^(-2k/dim).
RowVector sinusoidal_embedding(double position, Eigen::Index dim);

// ---------------------------------------------------------------------------
// Optimizer

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  template <class Model>
  void step(Model& params, const Model& grads) {
    step_impl(param_pointers(params), param_pointers(grads));
  }

  std::int64_t steps_taken() const { return t_; }

 private:
  void step_impl(const std::vector<Matrix*>& params, const std::vector<const Matrix*>& grads);

  AdamConfig cfg_;
  std::int64_t t_ = 0;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
};

// Mean squared error over all elements; writes dL/dpred into grad if given.
double mse(const Matrix& pred, const Matrix& target, Matrix* grad = nullptr);

}  // namespace diffava::nn
