// Acceptance criteria 1-10. One PASS/FAIL line per criterion; exit code 0
// only if every line passes. Tolerances and time budgets are fixed here.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "rsgd/bias_oracle.hpp"
#include "rsgd/experiments.hpp"
#include "rsgd/glm.hpp"
#include "rsgd/imputation.hpp"
#include "rsgd/mechanisms.hpp"
#include "rsgd/richardson.hpp"

using namespace rsgd;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  const char* name;
  double budget_s;
  std::function<Outcome()> run;
};

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0, double d = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

Vector randn(std::size_t d, RandomStream rng, double sd = 1.0) {
  Vector v(static_cast<Eigen::Index>(d));
  for (auto& x : v) x = sd * rng.normal();
  return v;
}

Matrix randn(std::size_t n, std::size_t d, RandomStream rng) {
  Matrix X(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    for (Eigen::Index j = 0; j < X.cols(); ++j) X(i, j) = rng.normal();
  }
  return X;
}

Vector logistic_labels(const Matrix& X, const Vector& w, RandomStream rng) {
  Vector y(X.rows());
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    y(i) = rng.uniform() < 1.0 / (1.0 + std::exp(-X.row(i).dot(w))) ? 1.0 : -1.0;
  }
  return y;
}

const Vector kFigureP = (Vector(4) << 0.10, 0.15, 0.08, 0.12).finished();

// 1. G_A = sum_{S subset A} D_S, summed over submasks directly.
Outcome inclusion_exclusion() {
  const std::size_t d = 5;
  const RandomStream root(11);
  const Matrix aux = randn(50, d, root.substream(1));
  const Vector aux_y = randn(50, root.substream(2));
  IndexSet cols(d);
  for (std::size_t j = 0; j < d; ++j) cols[j] = j;
  double worst = 0.0;
  for (FamilyKind fk : {FamilyKind::kLinear, FamilyKind::kLogistic}) {
    for (ImputerKind ik : {ImputerKind::kZero, ImputerKind::kMean}) {
      const Imputer imp = fit_imputer(ik, ObservedDataset::complete(aux, aux_y));
      for (std::uint64_t c = 0; c < 5; ++c) {
        const RandomStream r = root.substream({3, c});
        const Vector x = randn(d, r.substream(1));
        const Vector w = randn(d, r.substream(2));
        const double y = fk == FamilyKind::kLogistic ? (c % 2 ? 1.0 : -1.0) : r.substream(3).normal();
        const GlmFamily fam{fk, 1e-3};
        const auto G = subset_gradient_table(fam, imp, w, x, y, cols, r.substream(4));
        const auto D = finite_differences(G);
        for (std::size_t A = 0; A < G.subset_count(); ++A) {
          GradientVector sum = GradientVector::Zero(static_cast<Eigen::Index>(d));
          for (std::size_t S = A;; S = (S - 1) & A) {
            sum += D.values[S];
            if (S == 0) break;
          }
          worst = std::max(worst, (sum - G.values[A]).cwiseAbs().maxCoeff());
        }
      }
    }
  }
  return {worst < 1e-10, fmt("max abs error %.3g (tol 1e-10)", worst)};
}

// 2. exact_bias vs the zero-imputation population formula.
Outcome closed_form_linear() {
  const RandomStream root(22);
  double worst = 0.0;
  for (std::uint64_t c = 0; c < 50; ++c) {
    const RandomStream r = root.substream(c);
    const Matrix X = randn(25, 4, r.substream(1));
    const Vector w = randn(4, r.substream(2));
    const Vector y = X * randn(4, r.substream(3)) + randn(25, r.substream(4));
    Vector p(4);
    RandomStream pr = r.substream(5);
    for (auto& v : p) v = 0.5 * pr.uniform();
    const Vector enumerated =
        exact_bias(GlmFamily{FamilyKind::kLinear, 1e-3}, zero_imputer(4), X, y, MechanismSpec::hmcar(p), w).bias;
    const Vector closed = linear_population_bias(PopulationModel::from_sample(X, y), w, p);
    worst = std::max(worst, (enumerated - closed).cwiseAbs().maxCoeff());
  }
  return {worst < 1e-10, fmt("max abs error %.3g over 50 instances (tol 1e-10)", worst)};
}

// 3. Log-log slopes of the enumerated bias, logistic, d = 4.
Outcome bias_slopes() {
  Config c;
  c.set("dataset.name", "synth_a_logistic");
  c.set("dataset.d", "4");
  c.set("dataset.n", "200");
  c.set("mechanism.kind", "explicit");
  c.set("mechanism.p", "0.10,0.15,0.08,0.12");
  c.set("sweep.orders", "0,1,2");
  c.set("sweep.rows", "200");
  c.set("sweep.scales", "0.2,0.4,0.6,0.8,1.0");
  const SweepResult r = bias_sweep(ExperimentConfig::from(c));
  std::map<std::string, double> s;
  for (const auto& sl : r.slopes) s[sl.estimator] = sl.exact_zero ? INFINITY : sl.slope;
  const bool ok = s["plain"] >= 0.9 && s["plain"] <= 1.1 && s["rich1"] >= 1.8 && s["rich2"] >= 2.7;
  return {ok, fmt("slopes plain %.4f (in [0.9,1.1]), rich1 %.4f (>=1.8), rich2 %.4f (>=2.7)", s["plain"], s["rich1"],
                  s["rich2"])};
}

// 4. Exact cancellation at order 2 (linear) and order d_miss = 3 (logistic).
Outcome exact_debiasing() {
  const RandomStream root(44);
  const Matrix X = randn(60, 4, root.substream(1));
  const Vector y_lin = X * randn(4, root.substream(2)) + 0.5 * randn(60, root.substream(3));
  const Vector y_log = logistic_labels(X, randn(4, root.substream(4)), root.substream(5));
  const MechanismSpec lin_mech = MechanismSpec::hmcar(kFigureP);
  const MechanismSpec log_mech = MechanismSpec::hmcar((Vector(4) << 0.10, 0.15, 0.08, 0.0).finished());
  const RichardsonConfig rc2 = default_ladder(2, kFigureP.maxCoeff(), 2.0);
  const RichardsonConfig rc3 = default_ladder(3, 0.15, 2.0);
  double worst_lin = 0.0, worst_log = 0.0;
  for (std::uint64_t k = 0; k < 10; ++k) {
    const Vector w = randn(4, root.substream({6, k}));
    worst_lin = std::max(worst_lin, richardson_bias(GlmFamily{FamilyKind::kLinear, 1e-3}, zero_imputer(4), X, y_lin,
                                                    lin_mech, w, rc2).bias.norm());
    worst_log = std::max(worst_log, richardson_bias(GlmFamily{FamilyKind::kLogistic, 1e-3}, zero_imputer(4), X, y_log,
                                                    log_mech, w, rc3).bias.norm());
  }
  return {worst_lin < 1e-8 && worst_log < 1e-8,
          fmt("max bias norm linear/order2 %.3g, logistic/order3 %.3g (tol 1e-8)", worst_lin, worst_log)};
}

// 5. Marginal of the thinned mask: hMCAR and sMAR per V-bin.
Outcome thinning_law() {
  const std::size_t n = 100000;
  const double C = 2.0;
  const RandomStream root(55);
  const Matrix X = randn(n, 3, root.substream(1));
  double worst_z = 0.0;
  {
    const MechanismSpec m = MechanismSpec::hmcar(Vector::Constant(3, 0.2));
    const Mask thinned = thin_mask(sample_mask(m, X, root.substream(2)), m, C, X, root.substream(3));
    const double se = std::sqrt(0.4 * 0.6 / static_cast<double>(n));
    for (std::size_t j = 0; j < 3; ++j) worst_z = std::max(worst_z, std::abs(thinned.column_frequency(j) - 0.4) / se);
  }
  double worst_bin = 0.0;
  {
    const MechanismSpec m = make_logistic_smar(X, {0}, 0.2, root.substream(4));
    const Matrix L = intensity_matrix(m, X);
    const Mask thinned = thin_mask(sample_mask(m, X, root.substream(5)), m, C, X, root.substream(6));
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = X(static_cast<Eigen::Index>(i), 0);
    std::vector<double> sorted = v;
    std::sort(sorted.begin(), sorted.end());
    const int bins = 5;
    for (std::size_t j = 1; j < 3; ++j) {
      for (int b = 0; b < bins; ++b) {
        const double lo = b == 0 ? -INFINITY : sorted[n * b / bins];
        const double hi = b == bins - 1 ? INFINITY : sorted[n * (b + 1) / bins];
        double hits = 0.0, expect = 0.0, var = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          if (v[i] < lo || v[i] >= hi) continue;
          const double lt = C * L(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
          hits += thinned(i, j);
          expect += lt;
          var += lt * (1.0 - lt);
        }
        worst_bin = std::max(worst_bin, std::abs(hits - expect) / std::sqrt(var));
      }
    }
  }
  return {worst_z <= 3.0 && worst_bin <= 3.0,
          fmt("hMCAR max |z| %.3f, sMAR max per-bin |z| %.3f (tol 3)", worst_z, worst_bin)};
}

// 6. Marginal after plug-in thinning vs the effective intensity.
Outcome plugin_effective() {
  const std::size_t n = 100000;
  const double C = 2.0, lambda = 0.2;
  const RandomStream root(66);
  const Matrix X = randn(n, 2, root.substream(1));
  const MechanismSpec truth = MechanismSpec::hmcar(Vector::Constant(2, lambda));
  const Mask mask = sample_mask(truth, X, root.substream(2));
  double worst = 0.0;
  std::string detail;
  for (double hat : {0.15, 0.25}) {
    PlugInMechanism plug{MechanismSpec::hmcar(Vector::Constant(2, hat))};
    const Mask thinned = plugin_thin(mask, plug, C, X, root.substream(3));
    const double target = plugin_effective_intensity(lambda, hat, C);
    const double se = std::sqrt(target * (1.0 - target) / static_cast<double>(n));
    for (std::size_t j = 0; j < 2; ++j) {
      const double z = std::abs(thinned.column_frequency(j) - target) / se;
      worst = std::max(worst, z);
    }
    detail += fmt("lambda_hat %.2f target %.4f; ", hat, target);
  }
  return {worst <= 3.0, detail + fmt("max |z| %.3f (tol 3)", worst)};
}

std::map<std::uint64_t, std::map<std::string, double>> final_pmse(const ExperimentResult& r) {
  std::size_t last = 0;
  for (const auto& row : r.rows) last = std::max(last, row.epoch);
  std::map<std::uint64_t, std::map<std::string, double>> out;
  for (const auto& row : r.rows) {
    if (row.epoch == last) out[row.seed][row.method] = row.pmse;
  }
  return out;
}

// 7. One pass on synth_a_linear: paired wins and the order-2 floor.
Outcome one_pass() {
  Config c;
  c.set("dataset.name", "synth_a_linear");
  c.set("mechanism.kind", "mcar");
  c.set("mechanism.mean_p", "0.2");
  c.set("sgd.epochs", "1");
  c.set("run.n_seeds", "20");
  c.set("methods", "complete,zero,rich-zero,rich2-zero");
  const ExperimentResult r = run_experiment(ExperimentConfig::from(c));
  if (!r.failures.empty()) return {false, "run failure: " + r.failures.front().message};
  const auto f = final_pmse(r);
  int wins = 0;
  std::vector<double> comp, o2;
  for (const auto& [seed, m] : f) {
    wins += m.at("rich-zero") < m.at("zero");
    comp.push_back(m.at("complete"));
    o2.push_back(m.at("rich2-zero"));
  }
  const double gap = std::abs(mean_of(o2) - mean_of(comp));
  // Within 1 sd: the mean +- 1 sd bands of the two methods overlap.
  const bool ok = wins >= 18 && gap <= sd_of(o2) + sd_of(comp);
  return {ok, fmt("rich-zero wins %.0f/20 (>=18); |PMSE(order2) - PMSE(complete)| %.4g vs sd(order2) %.4g + "
                  "sd(complete) %.4g",
                  wins, gap, sd_of(o2), sd_of(comp))};
}

// 8. Five epochs, batch 64, synth_a_logistic.
Outcome multi_epoch() {
  Config c;
  c.set("dataset.name", "synth_a_logistic");
  c.set("run.n_seeds", "20");
  c.set("methods", "zero,rich-zero");
  const ExperimentResult r = run_experiment(ExperimentConfig::from(c));
  if (!r.failures.empty()) return {false, "run failure: " + r.failures.front().message};
  int wins = 0;
  for (const auto& [seed, m] : final_pmse(r)) wins += m.at("rich-zero") < m.at("zero");
  return {wins >= 16, fmt("rich-zero wins %.0f/20 (>=16)", wins)};
}

// 9. Plug-in Richardson with perturbed p against plain zero imputation.
Outcome plugin_robustness() {
  Config c;
  c.set("dataset.name", "synth_a_logistic");
  c.set("mechanism.kind", "mcar");
  c.set("mechanism.mean_p", "0.2");
  c.set("run.n_seeds", "20");
  c.set("robustness.delta_p", "0,0.05,0.1");
  c.set("robustness.delta_q", "0");
  const auto rows = robustness_sweep(ExperimentConfig::from(c));
  bool ok = true;
  std::string detail;
  for (const auto& row : rows) {
    ok = ok && row.feasible && row.runs == 20 && row.wins >= 15;
    detail += fmt("delta_p %.2f: %.0f/%.0f; ", row.delta_p, static_cast<double>(row.wins), static_cast<double>(row.runs));
  }
  return {ok, detail + "(>=15/20 each)"};
}

// 10. Linked vs unlinked Richardson with a stochastic iterative imputer.
Outcome linked_unlinked() {
  Config c;
  c.set("dataset.name", "synth_a_linear");
  c.set("dataset.d", "4");
  c.set("dataset.n", "200");
  c.set("mechanism.kind", "explicit");
  c.set("mechanism.p", "0.10,0.15,0.08,0.12");
  c.set("imputer.stochastic", "true");
  c.set("sweep.imputer", "iterative");
  c.set("sweep.unlinked", "true");
  c.set("sweep.orders", "1");
  c.set("sweep.rows", "100");
  c.set("sweep.xi_draws", "16");
  const SweepResult r = bias_sweep(ExperimentConfig::from(c));
  double linked = NAN, unlinked = NAN;
  for (const auto& s : r.slopes) (s.linked ? linked : unlinked) = s.slope;
  return {linked >= 1.8 && unlinked <= 1.3, fmt("linked slope %.4f (>=1.8), unlinked slope %.4f (<=1.3)", linked, unlinked)};
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria = {
      {1, "inclusion-exclusion round trip", 10, inclusion_exclusion},
      {2, "closed form vs enumeration (linear)", 10, closed_form_linear},
      {3, "bias-order slopes", 60, bias_slopes},
      {4, "exact debiasing", 30, exact_debiasing},
      {5, "thinning law", 20, thinning_law},
      {6, "plug-in effective intensity", 20, plugin_effective},
      {7, "one-pass floors", 120, one_pass},
      {8, "multi-epoch robustness", 180, multi_epoch},
      {9, "plug-in robustness trend", 180, plugin_robustness},
      {10, "linked vs unlinked imputation", 60, linked_unlinked},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool pass = o.pass && secs <= c.budget_s;
    failed += !pass;
    std::printf("%s %d %s: %s [%.2fs, budget %.0fs]\n", pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str(), secs,
                c.budget_s);
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
