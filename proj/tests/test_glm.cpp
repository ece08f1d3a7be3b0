#include <cmath>

#include "doctest.h"
#include "rsgd/bias_oracle.hpp"
#include "rsgd/glm.hpp"
#include "support.hpp"

using namespace rsgd;
using testing::max_abs;
using testing::randn;

TEST_CASE("loss at special points") {
  const Vector x = (Vector(2) << 0.3, -1.2).finished();
  const GlmFamily lin{FamilyKind::kLinear, 0.0}, log{FamilyKind::kLogistic, 0.0}, poi{FamilyKind::kPoisson, 0.0};
  CHECK(loss(lin, Vector::Zero(2), x, 0.0) == 0.0);
  CHECK(loss(log, Vector::Zero(2), x, 1.0) == doctest::Approx(std::log(2.0)));
  CHECK(loss(poi, Vector::Zero(2), x, 1.0) == doctest::Approx(1.0));
  CHECK(gradient(lin, Vector::Zero(2), x, 0.0).isZero());
  CHECK(max_abs(gradient(log, Vector::Zero(2), x, -1.0) - 0.5 * x) < 1e-15);
}

TEST_CASE("gradients agree with central finite differences") {
  const RandomStream root(1);
  for (FamilyKind kind : {FamilyKind::kLinear, FamilyKind::kLogistic, FamilyKind::kPoisson}) {
    for (double ridge : {0.0, 1e-3}) {
      const GlmFamily fam{kind, ridge};
      for (std::uint64_t t = 0; t < 100; ++t) {
        const RandomStream r = root.substream({static_cast<std::uint64_t>(kind), t});
        const Vector w = randn(4, r.substream(1), 0.5);
        const Vector x = randn(4, r.substream(2));
        RandomStream ys = r.substream(3);
        double y = ys.normal();
        if (kind == FamilyKind::kLogistic) y = y > 0 ? 1.0 : -1.0;
        if (kind == FamilyKind::kPoisson) y = std::floor(3.0 * ys.uniform());
        const Vector g = gradient(fam, w, x, y);
        Vector fd(4);
        const double h = 1e-6;
        for (Eigen::Index j = 0; j < 4; ++j) {
          Vector wp = w, wm = w;
          wp(j) += h;
          wm(j) -= h;
          fd(j) = (loss(fam, wp, x, y) - loss(fam, wm, x, y)) / (2 * h);
        }
        REQUIRE((g - fd).norm() <= 1e-5 * std::max(1.0, g.norm()));
      }
    }
  }
}

TEST_CASE("response validation") {
  CHECK_THROWS_AS(GlmFamily{FamilyKind::kLogistic}.validate_response(0.0), ContractViolation);
  CHECK_THROWS_AS(GlmFamily{FamilyKind::kPoisson}.validate_response(1.5), ContractViolation);
  CHECK_THROWS_AS(GlmFamily{FamilyKind::kPoisson}.validate_response(-1.0), ContractViolation);
  CHECK_NOTHROW(GlmFamily{FamilyKind::kPoisson}.validate_response(3.0));
}

TEST_CASE("Poisson predictor clipping is counted") {
  const std::size_t before = poisson_clip_count();
  gradient(GlmFamily{FamilyKind::kPoisson, 0.0}, Vector::Constant(1, 100.0), Vector::Constant(1, 1.0), 0.0);
  CHECK(poisson_clip_count() == before + 1);
}

TEST_CASE("empirical risk gradient identities") {
  const Matrix X = randn(30, 3, RandomStream(2));
  const Vector y = randn(30, RandomStream(3));
  const Vector w = randn(3, RandomStream(4));
  const GlmFamily lin{FamilyKind::kLinear, 1e-3};
  const Vector x0 = X.row(0).transpose();
  CHECK(max_abs(empirical_risk_gradient(lin, w, X.topRows(1), y.head(1)) - gradient(lin, w, x0, y(0))) < 1e-14);
  Matrix X2(60, 3);
  X2 << X, X;
  Vector y2(60);
  y2 << y, y;
  CHECK(max_abs(empirical_risk_gradient(lin, w, X2, y2) - empirical_risk_gradient(lin, w, X, y)) < 1e-14);
  const PopulationModel m = PopulationModel::from_sample(X, y);
  CHECK(max_abs(empirical_risk_gradient(lin.without_ridge(), w, X, y) - m.risk_gradient(w)) < 1e-10);
}

TEST_CASE("empirical risk is convex along segments") {
  const Matrix X = randn(40, 3, RandomStream(5));
  const Vector y = testing::logistic_labels(X, randn(3, RandomStream(6)), RandomStream(7));
  for (FamilyKind kind : {FamilyKind::kLinear, FamilyKind::kLogistic}) {
    const GlmFamily fam{kind, 1e-3};
    for (std::uint64_t t = 0; t < 20; ++t) {
      const Vector a = randn(3, RandomStream(100 + t)), b = randn(3, RandomStream(200 + t));
      const double mid = empirical_risk(fam, 0.5 * (a + b), X, y);
      CHECK(mid <= 0.5 * (empirical_risk(fam, a, X, y) + empirical_risk(fam, b, X, y)) + 1e-10);
    }
  }
}

TEST_CASE("population bias of zero imputation") {
  const Matrix X = randn(20, 2, RandomStream(8));
  const Vector y = randn(20, RandomStream(9));
  const Vector w = randn(2, RandomStream(10));
  const PopulationModel m = PopulationModel::from_sample(X, y);
  CHECK(linear_population_bias(m, w, Vector::Zero(2)).isZero());

  PopulationModel diag{Matrix::Identity(3, 3), (Vector(3) << 1, 2, 3).finished()};
  const Vector w3 = (Vector(3) << 0.5, -1, 2).finished();
  const Vector p = (Vector(3) << 0.1, 0.2, 0.3).finished();
  CHECK(max_abs(linear_population_bias(diag, w3, p) + p.cwiseProduct(diag.risk_gradient(w3))) < 1e-15);

  // Against direct enumeration of the four masks.
  const Vector p2 = (Vector(2) << 0.3, 0.45).finished();
  Vector expected = Vector::Zero(2);
  for (int bits = 0; bits < 4; ++bits) {
    double prob = 1.0;
    for (int j = 0; j < 2; ++j) prob *= (bits >> j & 1) ? p2(j) : 1 - p2(j);
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
      Vector x = X.row(i).transpose();
      for (int j = 0; j < 2; ++j) {
        if (bits >> j & 1) x(j) = 0;
      }
      expected += prob * (x.dot(w) - y(i)) * x / static_cast<double>(X.rows());
    }
  }
  expected -= m.risk_gradient(w);
  CHECK(max_abs(linear_population_bias(m, w, p2) - expected) < 1e-10);
}

TEST_CASE("population bias is quadratic in the missingness scale") {
  const Matrix X = randn(25, 4, RandomStream(11));
  const Vector y = randn(25, RandomStream(12));
  const Vector w = randn(4, RandomStream(13));
  const Vector p = (Vector(4) << 0.1, 0.3, 0.2, 0.25).finished();
  const PopulationModel m = PopulationModel::from_sample(X, y);
  Matrix T(5, 4), B(5, 4);
  for (int r = 0; r < 5; ++r) {
    const double t = 0.2 * (r + 1);
    for (int e = 0; e < 4; ++e) T(r, e) = std::pow(t, e);
    B.row(r) = linear_population_bias(m, w, t * p).transpose();
  }
  const Matrix coef = T.colPivHouseholderQr().solve(B);
  CHECK(coef.row(3).cwiseAbs().maxCoeff() < 1e-9);
  CHECK(m.second_moment.rows() == 4);
  CHECK_NOTHROW(m.validate());
  PopulationModel bad{(Matrix(2, 2) << 1, 0, 0, -1).finished(), Vector::Zero(2)};
  CHECK_THROWS(bad.validate());
}

TEST_CASE("first-order operator columns") {
  const Matrix X = randn(30, 3, RandomStream(14));
  const Vector y = randn(30, RandomStream(15));
  const Vector w = randn(3, RandomStream(16));
  const Vector p = (Vector(3) << 0.1, 0.2, 0.3).finished();
  const MechanismSpec mech = MechanismSpec::hmcar(p);
  const GlmFamily lin{FamilyKind::kLinear, 0.0};
  const Imputer zero = zero_imputer(3);

  // Linear part of the population bias: -p_j grad_j - sum_{k != j} p_k S_jk w_k.
  const PopulationModel m = PopulationModel::from_sample(X, y);
  const Vector grad = m.risk_gradient(w);
  for (std::size_t j = 0; j < 3; ++j) {
    const auto J = static_cast<Eigen::Index>(j);
    Vector expected = -m.second_moment.col(J) * w(J);
    expected(J) = -grad(J);
    CHECK(max_abs(first_order_operator_column(lin, zero, X, y, mech, w, j) - expected) < 1e-10);
  }

  // Logistic: the singleton multilinear coefficient.
  const Vector yl = testing::logistic_labels(X, w, RandomStream(17));
  const GlmFamily log{FamilyKind::kLogistic, 0.0};
  const SubsetTable mu = multilinear_coefficients(log, zero, X, yl, mech, w);
  for (std::size_t j = 0; j < 3; ++j) {
    CHECK(max_abs(first_order_operator_column(log, zero, X, yl, mech, w, j) - mu.at({j})) < 1e-10);
  }

  // Column that no imputation can disturb: an all-zero covariate under zero imputation.
  Matrix Xz = X;
  Xz.col(0).setZero();
  CHECK(first_order_operator_column(log, zero, Xz, yl, mech, w, 0).isZero());
}
