#include <cmath>
#include <set>

#include "diffava/errors.hpp"
#include "diffava/nn.hpp"
#include "diffava/numerics.hpp"
#include "diffava/rng.hpp"
#include "doctest.h"
#include "helpers.hpp"
#include "oracles.hpp"

using namespace diffava;

TEST_SUITE("numerics") {
  TEST_CASE("softmax closed forms") {
    const Vector u = softmax(Vector::Zero(4), 1.0);
    for (int i = 0; i < 4; ++i) CHECK(u(i) == doctest::Approx(0.25).epsilon(1e-15));

    Vector v(2);
    v << 1.0, 0.0;
    const Vector p = softmax(v, 1.0);
    CHECK(p(0) == doctest::Approx(std::exp(1.0) / (std::exp(1.0) + 1.0)).epsilon(1e-14));
    CHECK(p(1) == doctest::Approx(1.0 / (std::exp(1.0) + 1.0)).epsilon(1e-14));
  }

  TEST_CASE("softmax at large logits matches extended precision") {
    Vector v(2);
    v << 1000.0, 999.0;
    const Vector p = softmax(v, 1.0);
    const auto ref = oracle::softmax({1000.0, 999.0});
    CHECK(p.allFinite());
    CHECK(std::abs(p(0) - static_cast<double>(ref[0])) < 1e-15);
    CHECK(std::abs(p(1) - static_cast<double>(ref[1])) < 1e-15);
  }

  TEST_CASE("softmax sums to one over wide ranges and temperatures") {
    Rng rng(3);
    for (int trial = 0; trial < 200; ++trial) {
      const int n = 1 + static_cast<int>(rng.below(20));
      Vector v(n);
      std::vector<double> raw(n);
      for (int i = 0; i < n; ++i) raw[i] = v(i) = rng.uniform(-600.0, 600.0);
      const double temp = rng.uniform(0.01, 5.0);
      const Vector p = softmax(v, temp);
      CHECK(std::abs(p.sum() - 1.0) < 1e-12);
      CHECK((p.array() >= 0.0).all());
      const auto ref = oracle::softmax(raw, temp);
      for (int i = 0; i < n; ++i) CHECK(std::abs(p(i) - static_cast<double>(ref[i])) < 1e-14);
    }
  }

  TEST_CASE("softmax rejects bad input") {
    Vector v(2);
    v << 1.0, std::nan("");
    CHECK_THROWS_AS(softmax(v, 1.0), InvalidArgument);
    v << 1.0, INFINITY;
    CHECK_THROWS_AS(softmax(v, 1.0), InvalidArgument);
    CHECK_THROWS_AS(softmax(Vector::Zero(3), 0.0), InvalidArgument);
    CHECK_THROWS_AS(softmax(Vector::Zero(3), -1.0), InvalidArgument);
  }

  TEST_CASE("log_sum_exp is stable") {
    Vector v(3);
    v << 1000.0, 1000.0, 1000.0;
    CHECK(log_sum_exp(v) == doctest::Approx(1000.0 + std::log(3.0)).epsilon(1e-15));
  }

  TEST_CASE("l2_normalize") {
    Vector v(2);
    v << 3.0, 4.0;
    const Vector n = l2_normalize(v);
    CHECK(n(0) == doctest::Approx(0.6).epsilon(1e-15));
    CHECK(n(1) == doctest::Approx(0.8).epsilon(1e-15));
    CHECK((l2_normalize(n) - n).norm() < 1e-15);
    CHECK_THROWS_AS(l2_normalize(Vector::Zero(3)), DegenerateInput);

    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      Rng rng(seed);
      Vector x(768);
      for (auto& e : x) e = rng.normal() * 100.0;
      const Vector y = l2_normalize(x);
      CHECK(std::abs(y.norm() - 1.0) < 1e-12);
      CHECK((l2_normalize(y) - y).cwiseAbs().maxCoeff() < 1e-12);
    }
  }

  TEST_CASE("l2_normalize_rows reports the zero row") {
    Matrix m = Matrix::Ones(3, 4);
    m.row(1).setZero();
    CHECK_THROWS_AS(l2_normalize_rows(m), DegenerateInput);
  }

  TEST_CASE("SpdMatrix validation") {
    Matrix m(2, 2);
    m << 1.0, 0.5, 0.5 + 1e-6, 1.0;
    CHECK_THROWS_AS((void)SpdMatrix(m), InvalidArgument);
    CHECK_THROWS_AS(SpdMatrix(Matrix::Ones(2, 3)), InvalidArgument);
    Matrix bad = Matrix::Identity(2, 2);
    bad(0, 0) = std::nan("");
    CHECK_THROWS_AS((void)SpdMatrix(bad), InvalidArgument);
    CHECK_NOTHROW(SpdMatrix(Matrix::Identity(3, 3)));
  }

  TEST_CASE("spd_sqrt closed forms") {
    CHECK((spd_sqrt(SpdMatrix::identity(4)).matrix() - Matrix::Identity(4, 4)).norm() < 1e-14);
    Matrix d = Matrix::Zero(2, 2);
    d(0, 0) = 4.0;
    d(1, 1) = 9.0;
    const Matrix r = spd_sqrt(SpdMatrix(d)).matrix();
    CHECK(r(0, 0) == doctest::Approx(2.0).epsilon(1e-14));
    CHECK(r(1, 1) == doctest::Approx(3.0).epsilon(1e-14));
    CHECK(std::abs(r(0, 1)) < 1e-14);
  }

  TEST_CASE("spd_sqrt reconstructs random SPD matrices") {
    Rng seven(7);
    const Matrix m8 = testing::random_spd(8, seven);
    const Matrix s8 = spd_sqrt(SpdMatrix(m8)).matrix();
    CHECK((s8 * s8 - m8).norm() < 1e-8);

    for (int dim : {1, 2, 5, 16, 33, 64}) {
      Rng rng(100 + dim);
      const Matrix m = testing::random_spd(dim, rng);
      const Matrix s = spd_sqrt(SpdMatrix(m)).matrix();
      CHECK((s * s - m).norm() < 1e-8 * dim);
      CHECK((s - s.transpose()).norm() == 0.0);
    }
  }

  TEST_CASE("spd_sqrt matches the Jacobi oracle") {
    Rng rng(11);
    const Matrix m = testing::random_spd(6, rng);
    oracle::Mat om(6, std::vector<long double>(6));
    for (int i = 0; i < 6; ++i)
      for (int j = 0; j < 6; ++j) om[i][j] = m(i, j);
    const oracle::Mat ref = oracle::sqrt_psd(om);
    const Matrix s = spd_sqrt(SpdMatrix(m)).matrix();
    for (int i = 0; i < 6; ++i)
      for (int j = 0; j < 6; ++j) CHECK(std::abs(s(i, j) - static_cast<double>(ref[i][j])) < 1e-11);
  }

  TEST_CASE("spd_sqrt clamps tiny negative eigenvalues and rejects large ones") {
    Vector u(3);
    u << 1.0, 2.0, 2.0;
    u /= 3.0;
    Matrix rank1 = u * u.transpose();
    rank1 -= 1e-12 * Matrix::Identity(3, 3);
    rank1 = 0.5 * (rank1 + rank1.transpose()).eval();
    const Matrix s = spd_sqrt(SpdMatrix(rank1)).matrix();
    CHECK(s.allFinite());
    CHECK((s * s - u * u.transpose()).norm() < 1e-5);

    Matrix neg = Matrix::Identity(2, 2);
    neg(1, 1) = -1e-3;
    CHECK_THROWS_AS(spd_sqrt(SpdMatrix(neg)), InvalidArgument);
  }

  TEST_CASE("finite_diff_grad") {
    Vector x(1);
    x << 3.0;
    const Vector g = finite_diff_grad([](const Vector& v) { return v(0) * v(0); }, x);
    CHECK(g(0) == doctest::Approx(6.0).epsilon(1e-6));
    const Vector z = finite_diff_grad([](const Vector&) { return 4.2; }, Vector::Ones(5));
    CHECK(z.cwiseAbs().maxCoeff() == 0.0);
    CHECK_THROWS_AS(finite_diff_grad([](const Vector&) { return std::nan(""); }, x), NumericalDivergence);
  }

  TEST_CASE("relative_error") {
    Vector a(2), b(2);
    a << 1.0, 2.0;
    b << 1.0, 2.2;
    CHECK(relative_error(a, b) == doctest::Approx(0.2 / 2.2));
    CHECK(relative_error(Vector::Zero(2), Vector::Zero(2)) == 0.0);
  }
}

TEST_SUITE("rng") {
  TEST_CASE("splitmix64 reference values") {
    // Published first outputs of splitmix64 seeded with 0.
    std::uint64_t s = 0;
    CHECK(splitmix64(s) == 0xe220a8397b1dcdafULL);
    CHECK(splitmix64(s) == 0x6e789e6aa1b965f4ULL);
    CHECK(splitmix64(s) == 0x06c45d188009454fULL);
  }

  TEST_CASE("streams are reproducible and forks are independent of the parent") {
    Rng a(42), b(42);
    for (int i = 0; i < 1000; ++i) CHECK(a.next_u64() == b.next_u64());
    Rng c(42);
    const Rng f1 = c.fork(5);
    c.next_u64();
    const Rng f2 = c.fork(5);
    Rng g1 = f1, g2 = f2;
    CHECK(g1.next_u64() == g2.next_u64());
    Rng h = c.fork(6);
    Rng g3 = c.fork(5);
    CHECK(h.next_u64() != g3.next_u64());
  }

  TEST_CASE("uniform, below, and normal moments") {
    Rng rng(9);
    const int M = 200000;
    double su = 0.0, sn = 0.0, sn2 = 0.0;
    std::vector<int> counts(7, 0);
    for (int i = 0; i < M; ++i) {
      const double u = rng.uniform();
      CHECK_UNARY(u >= 0.0);
      CHECK_UNARY(u < 1.0);
      su += u;
      const double n = rng.normal();
      sn += n;
      sn2 += n * n;
      ++counts[rng.below(7)];
    }
    CHECK(std::abs(su / M - 0.5) < 4.0 * std::sqrt(1.0 / 12.0 / M));
    CHECK(std::abs(sn / M) < 4.0 / std::sqrt(M));
    CHECK(std::abs(sn2 / M - 1.0) < 4.0 * std::sqrt(2.0 / M));
    for (int c : counts) CHECK(std::abs(c - M / 7.0) < 4.0 * std::sqrt(M / 7.0));
  }
}

TEST_SUITE("nn") {
  struct Toy {
    nn::Linear a, b;
    template <class Self, class Fn>
    static void visit(Self& self, Fn&& fn) {
      nn::Linear::visit(self.a, nn::prefixed("a.", fn));
      nn::Linear::visit(self.b, nn::prefixed("b.", fn));
    }
  };

  TEST_CASE("flatten and unflatten round trip in visit order") {
    Rng rng(1);
    Toy t{nn::Linear(3, 4, rng), nn::Linear(4, 2, rng)};
    CHECK(nn::param_count(t) == 3 * 4 + 4 + 4 * 2 + 2);
    const Vector flat = nn::flatten(t);
    Toy u = nn::zeros_like(t);
    nn::unflatten(flat, u);
    CHECK(u.a.w == t.a.w);
    CHECK(u.b.b == t.b.b);
    std::vector<std::string> names;
    nn::visit_params(t, [&](const std::string& n, const Matrix&) { names.push_back(n); });
    CHECK(names == std::vector<std::string>{"a.w", "a.b", "b.w", "b.b"});
  }

  TEST_CASE("layer backward passes match finite differences") {
    Rng rng(2);
    const Matrix x = nn::random_matrix(5, 6, 1.0, rng);
    const Matrix probe = nn::random_matrix(5, 6, 1.0, rng);
    nn::LayerNorm ln(6);
    ln.gamma = nn::random_matrix(1, 6, 1.0, rng);
    ln.beta = nn::random_matrix(1, 6, 1.0, rng);

    auto as_matrix = [&](const Vector& v) { return Matrix(v.reshaped<Eigen::RowMajor>(5, 6)); };
    const Vector xv = x.reshaped<Eigen::RowMajor>();

    nn::LayerNorm::Cache cache;
    ln.forward(x, &cache);
    nn::LayerNorm g = nn::zeros_like(ln);
    const Matrix dx_ln = ln.backward(cache, probe, g);
    const Vector num_ln = finite_diff_grad(
        [&](const Vector& v) { return (ln.forward(as_matrix(v)).array() * probe.array()).sum(); }, xv);
    CHECK(relative_error(dx_ln.reshaped<Eigen::RowMajor>(), num_ln) < 1e-7);

    const Matrix dx_gelu = nn::gelu_backward(x, probe);
    const Vector num_gelu =
        finite_diff_grad([&](const Vector& v) { return (nn::gelu(as_matrix(v)).array() * probe.array()).sum(); }, xv);
    CHECK(relative_error(dx_gelu.reshaped<Eigen::RowMajor>(), num_gelu) < 1e-7);

    const Matrix y = l2_normalize_rows(x);
    const Matrix dx_norm = nn::normalize_rows_backward(x, y, probe);
    const Vector num_norm = finite_diff_grad(
        [&](const Vector& v) { return (l2_normalize_rows(as_matrix(v)).array() * probe.array()).sum(); }, xv);
    CHECK(relative_error(dx_norm.reshaped<Eigen::RowMajor>(), num_norm) < 1e-7);
  }

  TEST_CASE("sinusoidal embedding") {
    const RowVector e = nn::sinusoidal_embedding(0.0, 8);
    CHECK(e.size() == 8);
    for (int k = 0; k < 4; ++k) {
      CHECK(e(2 * k) == 0.0);
      CHECK(e(2 * k + 1) == 1.0);
    }
  }

  TEST_CASE("Adam minimizes a quadratic") {
    Rng rng(4);
    nn::Linear lin(2, 1, rng);
    nn::Adam adam(nn::AdamConfig{.lr = 0.05});
    for (int i = 0; i < 500; ++i) {
      nn::Linear g = nn::zeros_like(lin);
      g.w = 2.0 * (lin.w.array() - 1.0).matrix();
      g.b = 2.0 * (lin.b.array() + 2.0).matrix();
      adam.step(lin, g);
    }
    CHECK((lin.w.array() - 1.0).abs().maxCoeff() < 1e-3);
    CHECK(std::abs(lin.b(0, 0) + 2.0) < 1e-3);
  }
}
