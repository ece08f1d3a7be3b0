#include <cmath>

#include "doctest.h"
#include "rsgd/bias_oracle.hpp"
#include "rsgd/richardson.hpp"
#include "support.hpp"

using namespace rsgd;
using testing::max_abs;
using testing::randn;

TEST_CASE("Vandermonde weights") {
  const std::vector<double> one{1.0}, two{1.0, 2.0}, three{1.0, 2.0, 4.0};
  CHECK(vandermonde_weights(one) == std::vector<double>{1.0});
  const auto w2 = vandermonde_weights(two);
  CHECK(w2[0] == doctest::Approx(2.0));
  CHECK(w2[1] == doctest::Approx(-1.0));
  const auto w3 = vandermonde_weights(three);
  CHECK(w3[0] == doctest::Approx(8.0 / 3));
  CHECK(w3[1] == doctest::Approx(-2.0));
  CHECK(w3[2] == doctest::Approx(1.0 / 3));
  const std::vector<double> repeated{1.0, 2.0, 2.0}, bad_start{1.5, 2.0};
  CHECK_THROWS(vandermonde_weights(repeated));
  CHECK_THROWS(vandermonde_weights(bad_start));
}

TEST_CASE("weight identities hold for every constructed ladder") {
  for (std::size_t k = 0; k <= 4; ++k) {
    for (double C : {1.2, 1.5, 2.0, 3.0}) {
      const RichardsonConfig rc = RichardsonConfig::geometric(k, C);
      CHECK_NOTHROW(rc.validate());
      for (std::size_t m = 0; m <= k; ++m) {
        double s = 0.0;
        for (std::size_t l = 0; l <= k; ++l) s += rc.weights[l] * std::pow(rc.factors[l], static_cast<double>(m));
        CHECK(std::abs(s - (m == 0 ? 1.0 : 0.0)) < 1e-10 * std::pow(C, static_cast<double>(k * m)));
      }
    }
  }
}

TEST_CASE("default ladder backs off until the top level is feasible") {
  const RichardsonConfig plain = default_ladder(2, 0.2, 2.0);
  CHECK(plain.backoff_steps == 0);
  const RichardsonConfig shrunk = default_ladder(2, 0.3, 2.0);
  CHECK(shrunk.backoff_steps > 0);
  CHECK(shrunk.factors.back() * 0.3 <= 1.0);
  CHECK_NOTHROW(shrunk.validate());
}

TEST_CASE("feasibility check against a mechanism") {
  const Matrix X = Matrix::Zero(10, 2);
  RichardsonConfig rc = RichardsonConfig::geometric(1, 2.0);
  check_feasibility(rc, MechanismSpec::hmcar(Vector::Constant(2, 0.4)), X);
  CHECK(rc.feasible);
  check_feasibility(rc, MechanismSpec::hmcar(Vector::Constant(2, 0.6)), X);
  CHECK_FALSE(rc.feasible);
}

TEST_CASE("Richardson gradient arithmetic") {
  const Vector g = (Vector(2) << 0.3, -0.7).finished();
  CHECK(max_abs(richardson_gradient(g, g, 2.0) - g) < 1e-15);
  const Vector gp = (Vector(2) << 1, 0).finished(), gc = (Vector(2) << 0, 2).finished();
  CHECK(richardson_gradient(gp, gc, 2.0) == (Vector(2) << 2, -2).finished());
  const std::vector<GradientVector> levels{gp, gc};
  CHECK(multi_order_gradient(levels, RichardsonConfig::geometric(1, 2.0)) == richardson_gradient(gp, gc, 2.0));
  const std::vector<GradientVector> same(3, g);
  CHECK(max_abs(multi_order_gradient(same, RichardsonConfig::geometric(2, 2.0)) - g) < 1e-14);
  CHECK_THROWS(richardson_gradient(gp, gc, 1.0));
}

TEST_CASE("per-sample estimator on a hand-computed case") {
  const GlmFamily lin{FamilyKind::kLinear, 0.0};
  const Vector x = (Vector(2) << 1.0, 2.0).finished();
  const Vector w = (Vector(2) << 0.5, 0.25).finished();
  const double y = 3.0;
  const RichardsonConfig rc = RichardsonConfig::geometric(1, 2.0);
  const Imputer zero = zero_imputer(2);
  // Nothing thinned: plain gradient.
  const std::vector<std::vector<std::uint8_t>> none{{0, 0}, {0, 0}};
  CHECK(max_abs(estimate_sample_gradient(lin, zero, x, y, none, rc, w, RandomStream()) - gradient(lin, w, x, y)) < 1e-15);
  // Coordinate 2 hidden by thinning: g_p = (0.5+0.5-3)(1,2) = (-2,-4); g_Cp = (0.5-3)(1,0) = (-2.5,0).
  const std::vector<std::vector<std::uint8_t>> thinned{{0, 0}, {0, 1}};
  const Vector expected = (Vector(2) << 2 * -2.0 - -2.5, 2 * -4.0 - 0.0).finished();
  CHECK(max_abs(estimate_sample_gradient(lin, zero, x, y, thinned, rc, w, RandomStream()) - expected) < 1e-15);
}

TEST_CASE("first-order residual under heterogeneous MCAR") {
  const Matrix X = randn(40, 4, RandomStream(1));
  const Vector w = randn(4, RandomStream(2));
  const Vector y = X * w + 0.5 * randn(40, RandomStream(3));
  const Vector p = (Vector(4) << 0.10, 0.15, 0.08, 0.12).finished();
  const double C = 2.0;
  const BiasReport r = richardson_bias(GlmFamily{FamilyKind::kLinear, 0.0}, zero_imputer(4), X, y,
                                       MechanismSpec::hmcar(p), w, RichardsonConfig::geometric(1, C));
  const Matrix S = X.transpose() * X / 40.0;
  Vector expected(4);
  for (int j = 0; j < 4; ++j) {
    double s = 0.0;
    for (int k = 0; k < 4; ++k) {
      if (k != j) s += p(k) * S(j, k) * w(k);
    }
    expected(j) = -C * p(j) * s;
  }
  CHECK(max_abs(r.bias - expected) < 1e-10);
}

TEST_CASE("bias orders of the Richardson family") {
  const Matrix X = randn(60, 4, RandomStream(4));
  const Vector w = randn(4, RandomStream(5));
  const Vector yl = testing::logistic_labels(X, w, RandomStream(6));
  const Vector yr = X * w + 0.5 * randn(60, RandomStream(7));
  const Vector p = (Vector(4) << 0.10, 0.15, 0.08, 0.12).finished();
  const MechanismSpec mech = MechanismSpec::hmcar(p);
  const std::vector<double> scales{0.2, 0.4, 0.6, 0.8, 1.0};
  auto slope = [&](const GlmFamily& fam, const Vector& y, std::size_t order) {
    std::vector<double> lx, ly;
    for (double t : scales) {
      const double b = order == 0 ? exact_bias(fam, zero_imputer(4), X, y, mech, w, t).bias.norm()
                                  : richardson_bias(fam, zero_imputer(4), X, y, mech, w,
                                                    RichardsonConfig::geometric(order, 2.0), t).bias.norm();
      lx.push_back(std::log(t));
      ly.push_back(std::log(b));
    }
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < lx.size(); ++i) mx += lx[i] / 5, my += ly[i] / 5;
    double sxy = 0, sxx = 0;
    for (std::size_t i = 0; i < lx.size(); ++i) sxy += (lx[i] - mx) * (ly[i] - my), sxx += (lx[i] - mx) * (lx[i] - mx);
    return sxy / sxx;
  };
  for (FamilyKind kind : {FamilyKind::kLinear, FamilyKind::kLogistic}) {
    const GlmFamily fam{kind, 0.0};
    const Vector& y = kind == FamilyKind::kLinear ? yr : yl;
    const double s0 = slope(fam, y, 0), s1 = slope(fam, y, 1);
    CHECK(s0 >= 0.9);
    CHECK(s0 <= 1.1);
    CHECK(s1 >= 1.8);
  }
  // Exact cancellation: order 2 for linear, order d_miss = 3 for logistic with zero and mean.
  CHECK(richardson_bias(GlmFamily{FamilyKind::kLinear, 0.0}, zero_imputer(4), X, yr, mech, w,
                        RichardsonConfig::geometric(2, 2.0)).bias.norm() < 1e-8);
  const MechanismSpec three = MechanismSpec::hmcar((Vector(4) << 0.10, 0.15, 0.08, 0.0).finished());
  const RichardsonConfig rc3 = default_ladder(3, 0.15, 2.0);
  for (ImputerKind ik : {ImputerKind::kZero, ImputerKind::kMean}) {
    const Imputer imp = fit_imputer(ik, ObservedDataset::complete(X, yl));
    CHECK(richardson_bias(GlmFamily{FamilyKind::kLogistic, 0.0}, imp, X, yl, three, w, rc3).bias.norm() < 1e-8);
  }
}

TEST_CASE("plug-in effective intensity") {
  CHECK(plugin_effective_intensity(0.2, 0.2, 2.0) == doctest::Approx(0.4));
  CHECK(plugin_effective_intensity(0.2, 0.0, 2.0) == doctest::Approx(0.2));
  CHECK(plugin_effective_intensity(0.2, 0.25, 2.0) == doctest::Approx(0.4 + 0.05 / 0.75));
}

TEST_CASE("plug-in thinning") {
  const std::size_t n = 100000;
  const Matrix X = Matrix::Zero(n, 1);
  const MechanismSpec truth = MechanismSpec::hmcar(Vector::Constant(1, 0.2));
  const Mask base = sample_mask(truth, X, RandomStream(8));
  PlugInMechanism exact{truth};
  CHECK(plugin_thin(base, exact, 2.0, X, RandomStream(9)) == thin_mask(base, truth, 2.0, X, RandomStream(9)));
  PlugInMechanism off{MechanismSpec::hmcar(Vector::Constant(1, 0.25))};
  const double target = plugin_effective_intensity(0.2, 0.25, 2.0);
  const double f = plugin_thin(base, off, 2.0, X, RandomStream(10)).column_frequency(0);
  CHECK(std::abs(f - target) < 3.0 * std::sqrt(target * (1 - target) / n));
  PlugInMechanism full{MechanismSpec::hmcar(Vector::Constant(1, 0.5))};
  CHECK(plugin_thin(base, full, 2.0, X, RandomStream(11)).count() == n);
  PlugInMechanism too_high{MechanismSpec::hmcar(Vector::Constant(1, 0.96))};
  CHECK_THROWS(plugin_thin(base, too_high, 1.01, X, RandomStream(12)));
}

TEST_CASE("variance of the first-order estimator respects its bound") {
  const Matrix X = randn(50, 3, RandomStream(13));
  const Vector w = randn(3, RandomStream(14));
  const Vector y = X * w + randn(50, RandomStream(15));
  const double C = 2.0;
  const MechanismSpec mech = MechanismSpec::hmcar(Vector::Constant(3, 0.2));
  const RichardsonConfig rc = RichardsonConfig::geometric(1, C);
  const GlmFamily lin{FamilyKind::kLinear, 0.0};
  const Imputer zero = zero_imputer(3);
  const std::size_t draws = 100000;
  std::vector<Vector> gr, gp, gc;
  const std::vector<double> factors{1.0, C};
  const Vector lambda = mech.p;
  for (std::size_t t = 0; t < draws; ++t) {
    RandomStream r = RandomStream(16).substream(t);
    const std::size_t i = t % 50;
    const Vector x = X.row(static_cast<Eigen::Index>(i)).transpose();
    std::vector<std::uint8_t> base(3);
    for (auto& b : base) b = r.bernoulli(0.2);
    const auto levels = cascade_thin_row(base, lambda, factors, r.substream(1));
    const auto imputed = linked_impute_levels(zero, x, levels, RandomStream());
    gp.push_back(gradient(lin, w, imputed[0], y(static_cast<Eigen::Index>(i))));
    gc.push_back(gradient(lin, w, imputed[1], y(static_cast<Eigen::Index>(i))));
    gr.push_back(estimate_sample_gradient(lin, zero, x, y(static_cast<Eigen::Index>(i)), levels, rc, w, RandomStream()));
  }
  auto trace_var = [](const std::vector<Vector>& g) {
    Vector m = Vector::Zero(g[0].size());
    for (const auto& v : g) m += v;
    m /= static_cast<double>(g.size());
    std::vector<double> sq;
    double s = 0;
    for (const auto& v : g) sq.push_back((v - m).squaredNorm()), s += sq.back();
    const double mean = s / static_cast<double>(g.size());
    double ss = 0;
    for (double q : sq) ss += (q - mean) * (q - mean);
    return std::make_pair(mean, std::sqrt(ss / static_cast<double>(g.size() - 1) / static_cast<double>(g.size())));
  };
  const auto [vr, se] = trace_var(gr);
  const double bound = 2 * (C * C * trace_var(gp).first + trace_var(gc).first) / ((C - 1) * (C - 1));
  CHECK(vr <= bound + 4 * se);
}

TEST_CASE("Richardson bias equals the weighted sum of scaled plain biases for level-separable imputers") {
  const RandomStream rng(41);
  const Matrix X = randn(25, 5, rng.substream(1));
  const Vector w = randn(5, rng.substream(2));
  const Vector y = X * w + randn(25, rng.substream(3));
  const GlmFamily fam{FamilyKind::kLinear, 0.0};
  const MechanismSpec mech = MechanismSpec::hmcar((Vector(5) << 0.05, 0.1, 0.08, 0.12, 0.06).finished());
  const RichardsonConfig rc = RichardsonConfig::geometric(2, 2.0);
  const Imputer knn = fit_imputer(ImputerKind::kKnn, ObservedDataset::complete(X, y));
  struct Case {
    const Imputer* imputer;
    bool linked;
  };
  const Imputer zero = zero_imputer(5);
  for (const Case c : {Case{&zero, true}, Case{&knn, false}}) {
    Vector expected = Vector::Zero(5);
    for (std::size_t l = 0; l < rc.factors.size(); ++l) {
      expected += rc.weights[l] * exact_bias(fam, *c.imputer, X, y, mech, w, rc.factors[l]).bias;
    }
    const Vector got = richardson_bias(fam, *c.imputer, X, y, mech, w, rc, 1.0, c.linked).bias;
    CHECK(max_abs(got - expected) < 1e-12);
  }
}
