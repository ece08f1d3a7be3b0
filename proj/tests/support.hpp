#pragma once

#include <cmath>

#include "rsgd/random.hpp"
#include "rsgd/types.hpp"

namespace testing {

inline rsgd::Vector randn(std::size_t d, rsgd::RandomStream rng, double sd = 1.0) {
  rsgd::Vector v(static_cast<Eigen::Index>(d));
  for (auto& x : v) x = sd * rng.normal();
  return v;
}

inline rsgd::Matrix randn(std::size_t n, std::size_t d, rsgd::RandomStream rng) {
  rsgd::Matrix X(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    for (Eigen::Index j = 0; j < X.cols(); ++j) X(i, j) = rng.normal();
  }
  return X;
}

inline rsgd::Vector logistic_labels(const rsgd::Matrix& X, const rsgd::Vector& w, rsgd::RandomStream rng) {
  rsgd::Vector y(X.rows());
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    y(i) = rng.uniform() < 1.0 / (1.0 + std::exp(-X.row(i).dot(w))) ? 1.0 : -1.0;
  }
  return y;
}

inline rsgd::Vector poisson_counts(const rsgd::Matrix& X, const rsgd::Vector& w, rsgd::RandomStream rng) {
  rsgd::Vector y(X.rows());
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const double mu = std::exp(X.row(i).dot(w));
    double u = rng.uniform(), k = 0.0, pk = std::exp(-mu), cdf = pk;
    while (u > cdf && k < 1000) {
      k += 1.0;
      pk *= mu / k;
      cdf += pk;
    }
    y(i) = k;
  }
  return y;
}

inline double max_abs(const rsgd::Vector& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

}  // namespace testing
