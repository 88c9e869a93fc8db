#pragma once

#include <Eigen/Dense>
#include <functional>
#include <span>

namespace diffava {

// Dense storage used throughout. Row-major so that a row is one timestep or
// one sample, matching how the data files are laid out.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

// Symmetric positive semi-definite matrix. Construction validates symmetry;
// spd_sqrt validates the spectrum.
class SpdMatrix {
 public:
  SpdMatrix() = default;
  // Throws InvalidArgument if m is not square, not finite, or asymmetric
  // beyond 1e-12 relative to its largest entry.
  explicit SpdMatrix(Matrix m);

  static SpdMatrix identity(Eigen::Index dim);

  Eigen::Index dim() const { return data_.rows(); }
  const Matrix& matrix() const { return data_; }

 private:
  Matrix data_;
};

bool all_finite(const Matrix& m);
bool all_finite(std::span<const double> v);

// Temperature-scaled softmax with max subtraction. Throws InvalidArgument on
// non-finite input or temperature <= 0.
Vector softmax(const Vector& logits, double temperature = 1.0);

// Log of sum(exp(v)), stable for large ranges.
double log_sum_exp(const Vector& v);

// Throws DegenerateInput on a zero (or non-finite) vector.
Vector l2_normalize(const Vector& v);
// Normalizes each row; same error contract per row.
Matrix l2_normalize_rows(const Matrix& m);

// Principal square root through a symmetric eigendecomposition. Eigenvalues
// in [-1e-10 * max(1, lambda_max), 0) are clamped to zero; anything more
// negative throws InvalidArgument.
SpdMatrix spd_sqrt(const SpdMatrix& m);

using ScalarFunction = std::function<double(const Vector&)>;

// Central differences (f(x + h e_i) - f(x - h e_i)) / 2h for every
// coordinate. Throws NumericalDivergence if f is ever non-finite.
Vector finite_diff_grad(const ScalarFunction& f, const Vector& x, double h = 1e-5);

// max_i |a_i - b_i| / max(|a|_inf, |b|_inf, floor). Used to compare analytic
// and numerical gradients.
double relative_error(const Vector& a, const Vector& b, double floor = 1e-8);

}  // namespace diffava
