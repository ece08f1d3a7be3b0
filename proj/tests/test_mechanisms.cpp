#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "rsgd/mechanisms.hpp"
#include "support.hpp"

using namespace rsgd;
using testing::randn;

namespace {

double binomial_z(double freq, double p, std::size_t n) {
  return std::abs(freq - p) / std::sqrt(p * (1.0 - p) / static_cast<double>(n));
}

}  // namespace

TEST_CASE("marginal intensity and co-missingness") {
  const MechanismSpec h = MechanismSpec::hmcar((Vector(3) << 0.1, 0.2, 0.0).finished());
  const Vector v = Vector::Zero(0);
  CHECK(marginal_intensity(h, v, 0) == doctest::Approx(0.1));
  CHECK(marginal_intensity(h, v, 2) == 0.0);
  CHECK(co_missingness(h, {}, v) == 1.0);
  CHECK(co_missingness(h, {1}, v) == doctest::Approx(0.2));
  CHECK(co_missingness(h, {0, 1}, v) == doctest::Approx(0.02));

  // p = 0.2 with q(v) = 1.3: logistic value 0.65 over normalizer 0.5.
  Intensity q = Intensity::logistic((Vector(1) << 0.0).finished(), std::log(0.65 / 0.35), 0.5);
  const MechanismSpec s = MechanismSpec::smar((Vector(2) << 0.0, 0.2).finished(), {0}, {Intensity::unit(), q});
  CHECK(marginal_intensity(s, (Vector(1) << 0.7).finished(), 1) == doctest::Approx(0.26).epsilon(1e-12));
}

TEST_CASE("mechanism validation rejects missingness on observed columns") {
  CHECK_THROWS(MechanismSpec::smar((Vector(2) << 0.1, 0.2).finished(), {0}, {Intensity::unit(), Intensity::unit()}));
  CHECK_THROWS(MechanismSpec::hmcar((Vector(1) << 1.0).finished()));
}

TEST_CASE("zero probabilities give an empty mask") {
  const Matrix X = randn(100, 3, RandomStream(1));
  const Mask m = sample_mask(MechanismSpec::hmcar(Vector::Zero(3)), X, RandomStream(2));
  CHECK(m.count() == 0);
}

TEST_CASE("hMCAR column frequencies follow the binomial law") {
  const std::size_t n = 100000;
  const Matrix X = Matrix::Zero(n, 2);
  const Mask m = sample_mask(MechanismSpec::hmcar(Vector::Constant(2, 0.1)), X, RandomStream(3));
  for (std::size_t j = 0; j < 2; ++j) CHECK(binomial_z(m.column_frequency(j), 0.1, n) < 3.0);
}

TEST_CASE("sMAR frequencies track p q(V) per V-bin") {
  const std::size_t n = 100000;
  const Matrix X = randn(n, 2, RandomStream(4));
  const MechanismSpec spec = make_logistic_smar(X, {0}, 0.2, RandomStream(5));
  const Matrix L = intensity_matrix(spec, X);
  const Mask m = sample_mask(spec, X, RandomStream(6));
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = X(static_cast<Eigen::Index>(i), 0);
  std::vector<double> s = v;
  std::sort(s.begin(), s.end());
  for (int b = 0; b < 8; ++b) {
    const double lo = b == 0 ? -INFINITY : s[n * b / 8];
    const double hi = b == 7 ? INFINITY : s[n * (b + 1) / 8];
    double hits = 0, mean = 0, var = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (v[i] < lo || v[i] >= hi) continue;
      const double l = L(static_cast<Eigen::Index>(i), 1);
      hits += m(i, 1);
      mean += l;
      var += l * (1 - l);
    }
    CHECK(std::abs(hits - mean) / std::sqrt(var) < 3.0);
  }
}

TEST_CASE("keep probability of the thinning step") {
  CHECK(keep_probability(0.2, 2.0) == doctest::Approx(0.75));
  CHECK(keep_probability(0.5, 2.0) == 0.0);
  CHECK(keep_probability(0.0, 2.0) == 1.0);
  CHECK_THROWS(keep_probability(0.6, 2.0));
}

TEST_CASE("thinning is monotone and has marginal C p") {
  const std::size_t n = 100000;
  const Matrix X = Matrix::Zero(n, 3);
  const MechanismSpec spec = MechanismSpec::hmcar(Vector::Constant(3, 0.2));
  const Mask base = sample_mask(spec, X, RandomStream(7));
  const Mask thinned = thin_mask(base, spec, 2.0, X, RandomStream(8));
  CHECK(is_nested(base, thinned));
  for (std::size_t j = 0; j < 3; ++j) CHECK(binomial_z(thinned.column_frequency(j), 0.4, n) < 3.0);
}

TEST_CASE("thinning to C p a = 1 hides every entry") {
  const Matrix X = Matrix::Zero(1000, 1);
  const MechanismSpec spec = MechanismSpec::hmcar(Vector::Constant(1, 0.5));
  const Mask thinned = thin_mask(Mask(1000, 1), spec, 2.0, X, RandomStream(9));
  CHECK(thinned.count() == 1000);
  CHECK_THROWS_AS(thin_mask(Mask(1000, 1), spec, 2.5, X, RandomStream(9)), InfeasibleMechanism);
}

TEST_CASE("cascade thinning: identity, nestedness and level marginals") {
  const std::size_t n = 100000;
  const Matrix X = Matrix::Zero(n, 2);
  const MechanismSpec spec = MechanismSpec::hmcar(Vector::Constant(2, 0.1));
  const Mask base = sample_mask(spec, X, RandomStream(10));
  const std::vector<double> one{1.0};
  const auto single = cascade_thin(base, spec, one, X, RandomStream(11));
  REQUIRE(single.size() == 1);
  CHECK(single[0] == base);

  const std::vector<double> factors{1.0, 2.0, 4.0};
  const auto levels = cascade_thin(base, spec, factors, X, RandomStream(11));
  REQUIRE(levels.size() == 3);
  const double target[] = {0.1, 0.2, 0.4};
  for (std::size_t l = 0; l < 3; ++l) {
    if (l) CHECK(is_nested(levels[l - 1], levels[l]));
    for (std::size_t j = 0; j < 2; ++j) CHECK(binomial_z(levels[l].column_frequency(j), target[l], n) < 3.0);
  }
}

TEST_CASE("cascade with factors (1, C) matches a single thinning in law") {
  const std::size_t n = 100000;
  const Matrix X = randn(n, 2, RandomStream(12));
  const MechanismSpec spec = make_logistic_smar(X, {0}, 0.2, RandomStream(13));
  const Mask base = sample_mask(spec, X, RandomStream(14));
  const std::vector<double> factors{1.0, 2.0};
  const Mask a = cascade_thin(base, spec, factors, X, RandomStream(15))[1];
  const Mask b = thin_mask(base, spec, 2.0, X, RandomStream(16));
  const double f = 0.5 * (a.column_frequency(1) + b.column_frequency(1));
  const double se = std::sqrt(2.0 * f * (1 - f) / static_cast<double>(n));
  CHECK(std::abs(a.column_frequency(1) - b.column_frequency(1)) < 3.0 * se);
}

TEST_CASE("calibration hits the target, is idempotent and maps 0 to 0") {
  const Matrix X = randn(5000, 3, RandomStream(17));
  const MechanismSpec spec = make_logistic_smar(X, {0}, 0.2, RandomStream(18));
  CHECK(mean_missingness(spec, X) == doctest::Approx(0.2).epsilon(1e-4));
  const MechanismSpec again = calibrate_mean_missingness(spec, X, 0.2);
  CHECK(testing::max_abs(again.p - spec.p) < 1e-4);
  CHECK(calibrate_mean_missingness(spec, X, 0.0).p.isZero());
  for (std::size_t j = 1; j < 3; ++j) {
    double mean_q = 0.0;
    for (Eigen::Index i = 0; i < X.rows(); ++i) mean_q += spec.intensity[j](spec.observed_part(Vector(X.row(i).transpose())));
    CHECK(mean_q / static_cast<double>(X.rows()) == doctest::Approx(1.0).epsilon(1e-6));
  }
  const MechanismSpec h = make_heterogeneous_mcar(10, 0.2, RandomStream(19));
  CHECK(h.p.mean() == doctest::Approx(0.2));
}

TEST_CASE("mask sampling is reproducible per seed") {
  const Matrix X = randn(300, 3, RandomStream(20));
  const MechanismSpec spec = MechanismSpec::hmcar(Vector::Constant(3, 0.3));
  CHECK(sample_mask(spec, X, RandomStream(21)) == sample_mask(spec, X, RandomStream(21)));
  CHECK_FALSE(sample_mask(spec, X, RandomStream(21)) == sample_mask(spec, X, RandomStream(22)));
}
