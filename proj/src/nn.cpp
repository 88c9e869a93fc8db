#include "diffava/nn.hpp"

#include <cmath>
#include <numbers>

#include "diffava/errors.hpp"

namespace diffava::nn {

Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, double stddev, Rng& rng) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = stddev * rng.normal();
  }
  return m;
}

Linear::Linear(Eigen::Index in, Eigen::Index out, Rng& rng, double gain)
    : w(random_matrix(in, out, gain / std::sqrt(static_cast<double>(in)), rng)), b(Matrix::Zero(1, out)) {}

Matrix Linear::forward(const Matrix& x) const {
  if (x.cols() != w.rows()) {
    throw ShapeError("Linear: input has " + std::to_string(x.cols()) + " columns, expected " +
                     std::to_string(w.rows()));
  }
  Matrix y = x * w;
  y.rowwise() += b.row(0);
  return y;
}

Matrix Linear::backward(const Matrix& x, const Matrix& dy, Linear& grad) const {
  grad.w.noalias() += x.transpose() * dy;
  grad.b += dy.colwise().sum();
  return dy * w.transpose();
}

LayerNorm::LayerNorm(Eigen::Index dim) : gamma(Matrix::Ones(1, dim)), beta(Matrix::Zero(1, dim)) {}

Matrix LayerNorm::forward(const Matrix& x, Cache* cache) const {
  const Eigen::Index n = x.rows();
  const Eigen::Index d = x.cols();
  if (d != gamma.cols()) throw ShapeError("LayerNorm: dimension mismatch");
  Matrix xhat(n, d);
  Vector inv_std(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mu = x.row(i).mean();
    const RowVector centered = x.row(i).array() - mu;
    const double var = centered.squaredNorm() / static_cast<double>(d);
    inv_std(i) = 1.0 / std::sqrt(var + eps);
    xhat.row(i) = centered * inv_std(i);
  }
  Matrix y = xhat.array().rowwise() * gamma.row(0).array();
  y.rowwise() += beta.row(0);
  if (cache) {
    cache->xhat = std::move(xhat);
    cache->inv_std = std::move(inv_std);
  }
  return y;
}

Matrix LayerNorm::backward(const Cache& cache, const Matrix& dy, LayerNorm& grad) const {
  const Eigen::Index n = dy.rows();
  const double d = static_cast<double>(dy.cols());
  grad.gamma += (dy.array() * cache.xhat.array()).colwise().sum().matrix();
  grad.beta += dy.colwise().sum();
  Matrix dx(n, dy.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    const RowVector g = dy.row(i).array() * gamma.row(0).array();
    const double mean_g = g.mean();
    const double mean_gx = g.dot(cache.xhat.row(i)) / d;
    dx.row(i) = cache.inv_std(i) * (g.array() - mean_g - cache.xhat.row(i).array() * mean_gx);
  }
  return dx;
}

namespace {
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;
}  // namespace

Matrix gelu(const Matrix& x) {
  return x.unaryExpr([](double v) { return 0.5 * v * (1.0 + std::tanh(kGeluC * (v + kGeluA * v * v * v))); });
}

Matrix gelu_backward(const Matrix& x, const Matrix& dy) {
  Matrix d = x.unaryExpr([](double v) {
    const double u = kGeluC * (v + kGeluA * v * v * v);
    const double th = std::tanh(u);
    const double du = kGeluC * (1.0 + 3.0 * kGeluA * v * v);
    return 0.5 * (1.0 + th) + 0.5 * v * (1.0 - th * th) * du;
  });
  return d.cwiseProduct(dy);
}

Matrix normalize_rows_backward(const Matrix& x, const Matrix& y, const Matrix& dy) {
  Matrix dx(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double n = x.row(i).norm();
    dx.row(i) = (dy.row(i) - y.row(i) * y.row(i).dot(dy.row(i))) / n;
  }
  return dx;
}

RowVector sinusoidal_embedding(double position, Eigen::Index dim) {
  RowVector e(dim);
  for (Eigen::Index k = 0; k < dim; ++k) {
    const Eigen::Index pair = k / 2;
    const double freq = std::pow(10000.0, -2.0 * static_cast<double>(pair) / static_cast<double>(dim));
    e(k) = (k % 2 == 0) ? std::sin(position * freq) : std::cos(position * freq);
  }
  return e;
}

void Adam::step_impl(const std::vector<Matrix*>& params, const std::vector<const Matrix*>& grads) {
  if (params.size() != grads.size()) throw ShapeError("Adam: parameter/gradient count mismatch");
  if (m_.empty()) {
    for (const Matrix* p : params) {
      m_.push_back(Matrix::Zero(p->rows(), p->cols()));
      v_.push_back(Matrix::Zero(p->rows(), p->cols()));
    }
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Matrix& g = *grads[i];
    m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * g;
    v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * g.cwiseProduct(g);
    params[i]->array() -=
        cfg_.lr * (m_[i].array() / bc1) / ((v_[i].array() / bc2).sqrt() + cfg_.eps);
  }
}

double mse(const Matrix& pred, const Matrix& target, Matrix* grad) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols()) throw ShapeError("mse: shape mismatch");
  const Matrix diff = pred - target;
  const double n = static_cast<double>(diff.size());
  if (grad) *grad = 2.0 * diff / n;
  return diff.squaredNorm() / n;
}

}  // namespace diffava::nn
