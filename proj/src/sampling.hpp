#pragma once

#include <vector>

#include "scmcf/probability.hpp"
#include "scmcf/rng.hpp"

namespace scmcf::detail {

// Draws rows of a distribution from a caller-owned stream. Tabular and
// particle rows use inverse-CDF over the stored row order; Gaussian rows are
// mean + L z with L from psd_factor and z standard normals.
class RowSampler {
 public:
  explicit RowSampler(const Distribution& dist);

  std::size_t dim() const { return dim_; }
  void draw(CounterStream& stream, double* out) const;

 private:
  const Distribution* dist_;
  std::size_t dim_;
  std::vector<double> cdf_;
  Eigen::MatrixXd factor_;
};

// n rows, row i drawn from stream (seed, i); row-major.
std::vector<double> sample_rows(const Distribution& dist, std::size_t n, std::uint64_t seed,
                                unsigned workers);

}  // namespace scmcf::detail
