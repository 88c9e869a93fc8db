#pragma once

#include "diffava/nn.hpp"
#include "diffava/numerics.hpp"
#include "diffava/rng.hpp"

namespace testing {

inline diffava::Matrix unit_rows(int rows, int cols, diffava::Rng& rng) {
  return diffava::l2_normalize_rows(diffava::nn::random_matrix(rows, cols, 1.0, rng));
}

inline diffava::Matrix random_spd(int dim, diffava::Rng& rng, double ridge = 0.1) {
  const diffava::Matrix a = diffava::nn::random_matrix(dim, dim, 1.0, rng);
  diffava::Matrix m = a * a.transpose();
  m.diagonal().array() += ridge;
  return 0.5 * (m + m.transpose());
}

}  // namespace testing
