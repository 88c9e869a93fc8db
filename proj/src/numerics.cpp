#include "diffava/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "diffava/errors.hpp"

namespace diffava {

SpdMatrix::SpdMatrix(Matrix m) : data_(std::move(m)) {
  if (data_.rows() != data_.cols()) {
    throw InvalidArgument("SpdMatrix: matrix is " + std::to_string(data_.rows()) + "x" +
                          std::to_string(data_.cols()) + ", not square");
  }
  if (!all_finite(data_)) throw InvalidArgument("SpdMatrix: non-finite entry");
  const double scale = std::max(1.0, data_.cwiseAbs().maxCoeff());
  const double asym = (data_ - data_.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-12 * scale) {
    throw InvalidArgument("SpdMatrix: asymmetry " + std::to_string(asym) + " exceeds tolerance");
  }
}

SpdMatrix SpdMatrix::identity(Eigen::Index dim) { return SpdMatrix(Matrix::Identity(dim, dim)); }

bool all_finite(const Matrix& m) { return m.allFinite(); }

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

Vector softmax(const Vector& logits, double temperature) {
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw InvalidArgument("softmax: temperature must be positive and finite");
  }
  if (!logits.allFinite()) throw InvalidArgument("softmax: non-finite input");
  if (logits.size() == 0) throw InvalidArgument("softmax: empty input");
  const Vector scaled = logits / temperature;
  const double m = scaled.maxCoeff();
  Vector out = (scaled.array() - m).exp().matrix();
  out /= out.sum();
  return out;
}

double log_sum_exp(const Vector& v) {
  const double m = v.maxCoeff();
  return m + std::log((v.array() - m).exp().sum());
}

Vector l2_normalize(const Vector& v) {
  const double n = v.norm();
  if (!(n > 0.0) || !std::isfinite(n)) throw DegenerateInput("l2_normalize: zero or non-finite vector");
  return v / n;
}

Matrix l2_normalize_rows(const Matrix& m) {
  Matrix out(m.rows(), m.cols());
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const double n = m.row(i).norm();
    if (!(n > 0.0) || !std::isfinite(n)) {
      throw DegenerateInput("l2_normalize_rows: row " + std::to_string(i) + " is zero or non-finite");
    }
    out.row(i) = m.row(i) / n;
  }
  return out;
}

SpdMatrix spd_sqrt(const SpdMatrix& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m.matrix());
  if (eig.info() != Eigen::Success) throw NumericalDivergence("spd_sqrt: eigendecomposition failed");
  Vector lambda = eig.eigenvalues();
  const double tol = 1e-10 * std::max(1.0, lambda.maxCoeff());
  for (Eigen::Index i = 0; i < lambda.size(); ++i) {
    if (lambda(i) < -tol) {
      throw InvalidArgument("spd_sqrt: eigenvalue " + std::to_string(lambda(i)) + " is negative beyond tolerance");
    }
    lambda(i) = std::sqrt(std::max(lambda(i), 0.0));
  }
  const Eigen::MatrixXd& q = eig.eigenvectors();
  Matrix root = q * lambda.asDiagonal() * q.transpose();
  // Exact symmetry so the result passes SpdMatrix validation.
  root = 0.5 * (root + root.transpose()).eval();
  return SpdMatrix(std::move(root));
}

Vector finite_diff_grad(const ScalarFunction& f, const Vector& x, double h) {
  if (!(h > 0.0)) throw InvalidArgument("finite_diff_grad: step must be positive");
  Vector g(x.size());
  Vector probe = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    probe(i) = x(i) + h;
    const double fp = f(probe);
    probe(i) = x(i) - h;
    const double fm = f(probe);
    probe(i) = x(i);
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw NumericalDivergence("finite_diff_grad: non-finite evaluation at coordinate " + std::to_string(i));
    }
    g(i) = (fp - fm) / (2.0 * h);
  }
  return g;
}

double relative_error(const Vector& a, const Vector& b, double floor) {
  if (a.size() != b.size()) throw ShapeError("relative_error: size mismatch");
  if (a.size() == 0) return 0.0;
  const double denom = std::max({a.cwiseAbs().maxCoeff(), b.cwiseAbs().maxCoeff(), floor});
  return (a - b).cwiseAbs().maxCoeff() / denom;
}

}  // namespace diffava
