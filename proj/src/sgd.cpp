#include "rsgd/sgd.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <sstream>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

namespace rsgd {
namespace {

Eigen::Index idx(std::size_t i) { return static_cast<Eigen::Index>(i); }

Matrix masked_values(const ObservedDataset& data) {
  Matrix X(idx(data.rows()), idx(data.cols()));
  for (std::size_t i = 0; i < data.rows(); ++i) X.row(idx(i)) = data.masked_row(i).transpose();
  return X;
}

}  // namespace

StepSchedule StepSchedule::inverse_time(double c, double gamma) {
  StepSchedule s;
  s.kind = Kind::kInverseTime;
  s.c = c;
  s.gamma = gamma;
  s.validate();
  return s;
}

StepSchedule StepSchedule::inverse_time_from_initial(double eta0, double gamma) {
  return inverse_time(eta0 * gamma, gamma);
}

StepSchedule StepSchedule::constant(double eta) {
  StepSchedule s;
  s.kind = Kind::kConstant;
  s.eta = eta;
  s.validate();
  return s;
}

void StepSchedule::validate() const {
  if (kind == Kind::kConstant) {
    if (!(eta > 0.0) || !std::isfinite(eta)) throw ContractViolation("constant step must be positive");
    return;
  }
  if (!(c > 0.0)) throw ContractViolation("inverse-time schedule needs c > 0");
  if (!(gamma > 0.0)) throw ContractViolation("inverse-time schedule needs gamma > 0 for a finite eta_0");
}

double StepSchedule::operator()(std::size_t k) const {
  return kind == Kind::kConstant ? eta : c / (static_cast<double>(k) + gamma);
}

void StepSchedule::check_safety(double eta_max) const {
  if (initial() > eta_max) {
    std::ostringstream msg;
    msg << "step schedule starts at eta_0 = " << initial() << " above the safety bound " << eta_max;
    throw ContractViolation(msg.str());
  }
}

double linear_step_bound(const Matrix& X, double ridge) {
  if (X.rows() == 0) throw ContractViolation("linear_step_bound: empty dataset");
  const Matrix S = X.transpose() * X / static_cast<double>(X.rows());
  Eigen::SelfAdjointEigenSolver<Matrix> es(S);
  const double alpha = es.eigenvalues().minCoeff() + ridge;
  const double beta = es.eigenvalues().maxCoeff() + ridge;
  return alpha / (6.0 * beta * beta);
}

RunRecord run_sgd(const GradientEstimator& estimator, std::size_t n, const StepSchedule& schedule,
                  const SgdOptions& options) {
  schedule.validate();
  if (options.batch == 0) throw ContractViolation("run_sgd: batch must be at least 1");
  if (n == 0) throw ContractViolation("run_sgd: no samples");
  const auto start = std::chrono::steady_clock::now();
  const Eigen::Index q = options.w0.size() ? options.w0.size() : options.w_star.size();
  if (q == 0) throw ContractViolation("run_sgd: need w0 or w_star to fix the dimension");
  Vector w = options.w0.size() ? options.w0 : Vector::Zero(q);

  RunRecord rec;
  rec.method = options.method;
  rec.seed = options.seed;
  rec.visits.assign(n, 0);
  auto record = [&] {
    rec.iterates.push_back(w);
    if (options.w_star.size()) rec.pmse.push_back(pmse(w, options.w_star));
    if (options.test_X.rows()) rec.test_loss.push_back(empirical_risk(options.family, w, options.test_X, options.test_y));
  };
  record();

  const RandomStream root(options.seed);
  std::vector<std::size_t> order(n);
  std::size_t k = 0;
  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    RandomStream shuffle = root.substream(StreamPurpose::kShuffle).substream(epoch);
    std::shuffle(order.begin(), order.end(), shuffle);
    for (std::size_t b = 0; b < n; b += options.batch) {
      const std::size_t end = std::min(n, b + options.batch);
      GradientVector g = GradientVector::Zero(q);
      for (std::size_t t = b; t < end; ++t) {
        const std::size_t i = order[t];
        g += estimator(w, i, root.substream({epoch, i}));
        ++rec.visits[i];
      }
      g /= static_cast<double>(end - b);
      w -= schedule(k) * g;
      ++k;
      if (!all_finite(w) || w.norm() > options.divergence_bound) {
        std::ostringstream msg;
        msg << "SGD diverged at update " << k << " (epoch " << epoch << ", |w| = " << w.norm() << ")";
        throw Divergence(msg.str());
      }
    }
    record();
  }
  for (std::size_t v : rec.visits) {
    if (v != options.epochs) throw Error("run_sgd: sample accounting violated");
  }
  rec.updates = k;
  if (options.record_timing) {
    rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  }
  return rec;
}

GradientEstimator complete_estimator(const GlmFamily& family, const Matrix& X, const Vector& y) {
  return [family, &X, &y](const Vector& w, std::size_t i, const RandomStream&) {
    return gradient(family, w, X.row(idx(i)).transpose(), y(idx(i)));
  };
}

GradientEstimator imputed_estimator(const GlmFamily& family, const Imputer& imputer,
                                    const ObservedDataset& data) {
  auto X = std::make_shared<const Matrix>(masked_values(data));
  return [family, &imputer, &data, X](const Vector& w, std::size_t i, const RandomStream& rng) {
    const Vector xt = imputer.impute(X->row(idx(i)).transpose(), data.mask().row(i),
                                     rng.substream(StreamPurpose::kImputation));
    return gradient(family, w, xt, data.response(i));
  };
}

GradientEstimator richardson_estimator(const GlmFamily& family, const Imputer& imputer,
                                       const ObservedDataset& data, const MechanismSpec& thinning,
                                       const RichardsonConfig& config, bool linked) {
  config.validate();
  auto X = std::make_shared<const Matrix>(masked_values(data));
  auto L = std::make_shared<const Matrix>(intensity_matrix(thinning, *X));
  const double top = config.factors.back() * L->maxCoeff();
  if (top > 1.0 + 1e-12) {
    std::ostringstream msg;
    msg << "Richardson ladder " << config.describe() << " is infeasible: C_k * lambda reaches " << top;
    throw InfeasibleMechanism(msg.str());
  }
  return [family, &imputer, &data, X, L, config, linked](const Vector& w, std::size_t i,
                                                         const RandomStream& rng) {
    const Vector x = X->row(idx(i)).transpose();
    const auto levels = cascade_thin_row(data.mask().row(i), L->row(idx(i)).transpose(), config.factors, rng);
    const RandomStream xi = rng.substream(StreamPurpose::kImputation);
    return linked ? estimate_sample_gradient(family, imputer, x, data.response(i), levels, config, w, xi)
                  : estimate_sample_gradient_unlinked(family, imputer, x, data.response(i), levels, config, w, xi);
  };
}

RunRecord run_richardson_sgd(const GlmFamily& family, const Imputer& imputer,
                             const MechanismSpec& thinning, const RichardsonConfig& config,
                             const ObservedDataset& data, const StepSchedule& schedule,
                             const SgdOptions& options) {
  return run_sgd(richardson_estimator(family, imputer, data, thinning, config), data.rows(), schedule, options);
}

Vector ridge_closed_form(const Matrix& X, const Vector& y, double ridge) {
  const double n = static_cast<double>(X.rows());
  Matrix A = X.transpose() * X / n;
  A.diagonal().array() += ridge;
  return A.ldlt().solve(X.transpose() * y / n);
}

Vector reference_parameter(const GlmFamily& family, const Matrix& X, const Vector& y,
                           const ReferenceOptions& options, const Vector* start) {
  family.validate_responses(y);
  Vector w = start ? *start : Vector::Zero(X.cols());
  double f = empirical_risk(family, w, X, y);
  Vector g = empirical_risk_gradient(family, w, X, y);
  double step = 1.0;
  std::size_t it = 0;
  while (g.norm() > options.tolerance) {
    if (++it > options.max_iterations) {
      std::ostringstream msg;
      msg << "reference_parameter: no convergence after " << options.max_iterations
          << " iterations, gradient norm " << g.norm();
      throw Error(msg.str());
    }
    step *= 2.0;
    Vector cand;
    double fc = 0.0;
    Vector gc;
    while (true) {
      cand = w - step * g;
      fc = empirical_risk(family, cand, X, y);
      if (fc <= f - 0.5 * step * g.squaredNorm()) {
        gc = empirical_risk_gradient(family, cand, X, y);
        break;
      }
      // Near the optimum the risk decrease drops below rounding; fall back
      // to requiring a smaller gradient.
      if (std::abs(fc - f) <= 1e-13 * std::max(1.0, std::abs(f))) {
        gc = empirical_risk_gradient(family, cand, X, y);
        if (gc.norm() < g.norm()) break;
      }
      step *= 0.5;
      if (step < 1e-20) {
        std::ostringstream msg;
        msg << "reference_parameter: line search stalled, gradient norm " << g.norm();
        throw Error(msg.str());
      }
    }
    w = cand;
    f = fc;
    g = gc;
  }
  if (family.kind == FamilyKind::kLinear) {
    const Vector closed = ridge_closed_form(X, y, family.ridge);
    if ((closed - w).cwiseAbs().maxCoeff() > 1e-8) {
      std::ostringstream msg;
      msg << "reference_parameter: gradient descent and closed form differ by "
          << (closed - w).cwiseAbs().maxCoeff();
      throw Error(msg.str());
    }
  }
  return w;
}

double pmse(const Vector& w, const Vector& w_star) {
  if (w.size() != w_star.size() || w.size() == 0) throw ContractViolation("pmse: dimension mismatch");
  return (w - w_star).squaredNorm() / static_cast<double>(w.size());
}

double calibrate_learning_rate(const GlmFamily& family, const Matrix& X, const Vector& y,
                               const Vector& w_star, const std::vector<double>& grid,
                               double gamma, SgdOptions options) {
  if (grid.empty()) throw ContractViolation("calibrate_learning_rate: empty grid");
  options.w_star = w_star;
  options.family = family;
  double best = grid.front();
  double best_pmse = std::numeric_limits<double>::infinity();
  const auto est = complete_estimator(family, X, y);
  for (double eta0 : grid) {
    double value = std::numeric_limits<double>::infinity();
    try {
      value = run_sgd(est, static_cast<std::size_t>(X.rows()),
                      StepSchedule::inverse_time_from_initial(eta0, gamma), options).final_pmse();
    } catch (const Divergence&) {
    }
    if (value < best_pmse) {
      best_pmse = value;
      best = eta0;
    }
  }
  return best;
}

}  // namespace rsgd
