#include "rsgd/mechanisms.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace rsgd {
namespace {

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

Eigen::Index idx(std::size_t i) { return static_cast<Eigen::Index>(i); }

}  // namespace

Intensity Intensity::logistic(Vector coef, double intercept, double normalizer) {
  Intensity q;
  q.constant = false;
  q.coef = std::move(coef);
  q.intercept = intercept;
  q.normalizer = normalizer;
  return q;
}

double Intensity::operator()(const Vector& v) const {
  if (constant) return 1.0;
  if (v.size() != coef.size()) {
    throw ContractViolation("Intensity: observed subvector has the wrong length");
  }
  const double base = sigmoid(coef.dot(v) + intercept) / normalizer;
  return (base + shift) / (1.0 + shift);
}

void Intensity::normalize_on(const Matrix& V) {
  if (constant) return;
  if (V.rows() == 0) throw ContractViolation("Intensity: empty calibration set");
  double s = 0.0;
  for (Eigen::Index i = 0; i < V.rows(); ++i) s += sigmoid(coef.dot(V.row(i).transpose()) + intercept);
  normalizer = s / static_cast<double>(V.rows());
}

MechanismSpec MechanismSpec::hmcar(Vector p) {
  MechanismSpec s;
  s.kind = MechanismKind::kHmcar;
  s.intensity.assign(static_cast<std::size_t>(p.size()), Intensity::unit());
  s.p = std::move(p);
  s.validate();
  return s;
}

MechanismSpec MechanismSpec::smar(Vector p, IndexSet observed_index_set,
                                  std::vector<Intensity> intensity) {
  MechanismSpec s;
  s.kind = MechanismKind::kSmar;
  s.p = std::move(p);
  s.observed_index_set = std::move(observed_index_set);
  std::sort(s.observed_index_set.begin(), s.observed_index_set.end());
  s.intensity = std::move(intensity);
  s.validate();
  return s;
}

IndexSet MechanismSpec::maskable() const {
  IndexSet out;
  for (Eigen::Index j = 0; j < p.size(); ++j) {
    if (p(j) > 0.0) out.push_back(static_cast<std::size_t>(j));
  }
  return out;
}

MechanismSpec MechanismSpec::scaled(double t) const {
  MechanismSpec s = *this;
  s.p *= t;
  return s;
}

void MechanismSpec::validate() const {
  if (intensity.size() != dim()) {
    throw ContractViolation("MechanismSpec: need one intensity per column");
  }
  for (Eigen::Index j = 0; j < p.size(); ++j) {
    if (!(p(j) >= 0.0 && p(j) < 1.0)) {
      std::ostringstream msg;
      msg << "MechanismSpec: p_" << j << " = " << p(j) << " is outside [0,1)";
      throw InfeasibleMechanism(msg.str());
    }
  }
  for (std::size_t j : observed_index_set) {
    if (j >= dim()) throw ContractViolation("MechanismSpec: observed index out of range");
    if (p(idx(j)) != 0.0) {
      std::ostringstream msg;
      msg << "MechanismSpec: column " << j << " is always observed but p_j = " << p(idx(j));
      throw ContractViolation(msg.str());
    }
  }
  for (std::size_t j = 0; j < dim(); ++j) {
    const auto& q = intensity[j];
    if (!q.constant && static_cast<std::size_t>(q.coef.size()) != observed_index_set.size()) {
      throw ContractViolation("MechanismSpec: intensity coefficient length != |observed set|");
    }
  }
}

Vector MechanismSpec::observed_part(const Vector& x) const {
  Vector v(idx(observed_index_set.size()));
  for (std::size_t k = 0; k < observed_index_set.size(); ++k) v(idx(k)) = x(idx(observed_index_set[k]));
  return v;
}

Matrix MechanismSpec::observed_part(const Matrix& X) const {
  Matrix V(X.rows(), idx(observed_index_set.size()));
  for (std::size_t k = 0; k < observed_index_set.size(); ++k) V.col(idx(k)) = X.col(idx(observed_index_set[k]));
  return V;
}

double marginal_intensity(const MechanismSpec& spec, const Vector& v, std::size_t j) {
  const double pj = spec.p(idx(j));
  if (pj == 0.0) return 0.0;
  const double lambda = pj * spec.intensity[j](v);
  if (!(lambda >= 0.0 && lambda < 1.0)) {
    std::ostringstream msg;
    msg << "marginal_intensity: lambda_" << j << " = " << lambda << " is outside [0,1)";
    throw InfeasibleMechanism(msg.str());
  }
  return lambda;
}

Vector marginal_intensities(const MechanismSpec& spec, const Vector& v) {
  Vector out(idx(spec.dim()));
  for (std::size_t j = 0; j < spec.dim(); ++j) out(idx(j)) = marginal_intensity(spec, v, j);
  return out;
}

Matrix intensity_matrix(const MechanismSpec& spec, const Matrix& X) {
  if (static_cast<std::size_t>(X.cols()) != spec.dim()) {
    throw ContractViolation("intensity_matrix: covariate dimension does not match mechanism");
  }
  Matrix L(X.rows(), X.cols());
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const Vector v = spec.observed_part(Vector(X.row(i).transpose()));
    L.row(i) = marginal_intensities(spec, v).transpose();
  }
  return L;
}

double co_missingness(const MechanismSpec& spec, const IndexSet& S, const Vector& v) {
  double rho = 1.0;
  for (std::size_t j : S) rho *= marginal_intensity(spec, v, j);
  return rho;
}

Mask sample_mask(const MechanismSpec& spec, const Matrix& X, const RandomStream& rng) {
  const Matrix L = intensity_matrix(spec, X);
  const std::size_t n = static_cast<std::size_t>(X.rows());
  const std::size_t d = spec.dim();
  Mask m(n, d);
  const RandomStream base = rng.substream(StreamPurpose::kMask);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      const double lambda = L(idx(i), idx(j));
      if (lambda == 0.0) continue;
      RandomStream s = base.substream({i, j});
      m.set(i, j, s.bernoulli(lambda));
    }
  }
  return m;
}

double keep_probability(double base_lambda, double factor) {
  if (factor * base_lambda > 1.0 + 1e-12) {
    std::ostringstream msg;
    msg << "keep_probability: factor * lambda = " << factor * base_lambda << " exceeds 1";
    throw InfeasibleMechanism(msg.str());
  }
  if (base_lambda >= 1.0) throw InfeasibleMechanism("keep_probability: base intensity >= 1");
  return std::clamp((1.0 - factor * base_lambda) / (1.0 - base_lambda), 0.0, 1.0);
}

ThinningPlan::ThinningPlan(const MechanismSpec& spec, const Matrix& X, double factor,
                           double base_scale)
    : factor_(factor), base_scale_(base_scale) {
  if (!(factor > 1.0)) throw ContractViolation("ThinningPlan: factor must exceed 1");
  const Matrix L = intensity_matrix(spec, X) * base_scale;
  double worst = 0.0;
  std::size_t worst_col = 0;
  for (Eigen::Index i = 0; i < L.rows(); ++i) {
    for (Eigen::Index j = 0; j < L.cols(); ++j) {
      if (factor * L(i, j) > worst) {
        worst = factor * L(i, j);
        worst_col = static_cast<std::size_t>(j);
      }
    }
  }
  if (worst > 1.0 + 1e-12) {
    std::ostringstream msg;
    msg << "thinning by factor " << factor << " is infeasible: column " << worst_col
        << " reaches C * lambda = " << worst;
    throw InfeasibleMechanism(msg.str());
  }
  keep_.resize(L.rows(), L.cols());
  for (Eigen::Index i = 0; i < L.rows(); ++i) {
    for (Eigen::Index j = 0; j < L.cols(); ++j) keep_(i, j) = keep_probability(L(i, j), factor);
  }
}

Mask ThinningPlan::apply(const Mask& mask_p, const RandomStream& rng, std::size_t level) const {
  if (mask_p.rows() != static_cast<std::size_t>(keep_.rows()) ||
      mask_p.cols() != static_cast<std::size_t>(keep_.cols())) {
    throw ContractViolation("ThinningPlan: mask shape does not match the planned data");
  }
  Mask out = mask_p;
  const RandomStream base = rng.substream(StreamPurpose::kThinning).substream(level);
  for (std::size_t i = 0; i < mask_p.rows(); ++i) {
    for (std::size_t j = 0; j < mask_p.cols(); ++j) {
      if (mask_p(i, j)) continue;
      const double keep = keep_(idx(i), idx(j));
      if (keep >= 1.0) continue;
      RandomStream s = base.substream({i, j});
      if (!s.bernoulli(keep)) out.set(i, j, true);
    }
  }
  return out;
}

Mask thin_mask(const Mask& mask_p, const MechanismSpec& spec, double C, const Matrix& X,
               const RandomStream& rng) {
  return ThinningPlan(spec, X, C).apply(mask_p, rng, 1);
}

std::vector<Mask> cascade_thin(const Mask& mask_p, const MechanismSpec& spec,
                               std::span<const double> factors, const Matrix& X,
                               const RandomStream& rng) {
  if (factors.empty() || factors[0] != 1.0) {
    throw ContractViolation("cascade_thin: factors must start at 1");
  }
  std::vector<Mask> levels{mask_p};
  for (std::size_t l = 1; l < factors.size(); ++l) {
    if (!(factors[l] > factors[l - 1])) {
      throw ContractViolation("cascade_thin: factors must be strictly increasing");
    }
    ThinningPlan plan(spec, X, factors[l] / factors[l - 1], factors[l - 1]);
    levels.push_back(plan.apply(levels.back(), rng, l));
  }
  return levels;
}

std::vector<std::vector<std::uint8_t>> cascade_thin_row(std::span<const std::uint8_t> mask_p,
                                                        const Vector& lambda,
                                                        std::span<const double> factors,
                                                        const RandomStream& rng) {
  if (factors.empty() || factors[0] != 1.0) {
    throw ContractViolation("cascade_thin_row: factors must start at 1");
  }
  std::vector<std::vector<std::uint8_t>> levels;
  levels.emplace_back(mask_p.begin(), mask_p.end());
  const RandomStream base = rng.substream(StreamPurpose::kThinning);
  for (std::size_t l = 1; l < factors.size(); ++l) {
    if (!(factors[l] > factors[l - 1])) {
      throw ContractViolation("cascade_thin_row: factors must be strictly increasing");
    }
    std::vector<std::uint8_t> next = levels.back();
    const double step = factors[l] / factors[l - 1];
    for (std::size_t j = 0; j < next.size(); ++j) {
      if (next[j]) continue;
      const double lam = lambda(idx(j));
      if (lam == 0.0) continue;
      const double keep = keep_probability(factors[l - 1] * lam, step);
      RandomStream s = base.substream({l, j});
      if (!s.bernoulli(keep)) next[j] = 1;
    }
    levels.push_back(std::move(next));
  }
  return levels;
}

double mean_missingness(const MechanismSpec& spec, const Matrix& X) {
  const Matrix L = intensity_matrix(spec, X);
  double s = 0.0;
  std::size_t count = 0;
  for (std::size_t j = 0; j < spec.dim(); ++j) {
    if (std::binary_search(spec.observed_index_set.begin(), spec.observed_index_set.end(), j)) continue;
    s += L.col(idx(j)).sum();
    count += static_cast<std::size_t>(L.rows());
  }
  return count == 0 ? 0.0 : s / static_cast<double>(count);
}

IntensityPeak max_intensity(const MechanismSpec& spec, const Matrix& X) {
  const Matrix L = intensity_matrix(spec, X);
  IntensityPeak peak;
  for (Eigen::Index i = 0; i < L.rows(); ++i) {
    for (Eigen::Index j = 0; j < L.cols(); ++j) {
      if (L(i, j) > peak.value) peak = {L(i, j), static_cast<std::size_t>(j)};
    }
  }
  return peak;
}

MechanismSpec calibrate_mean_missingness(const MechanismSpec& spec, const Matrix& X,
                                         double target) {
  if (!(target >= 0.0 && target < 1.0)) {
    throw ContractViolation("calibrate_mean_missingness: target must lie in [0,1)");
  }
  MechanismSpec out = spec;
  const Matrix V = spec.observed_part(X);
  for (auto& q : out.intensity) {
    q.shift = 0.0;
    q.normalize_on(V);
  }
  if (target == 0.0) {
    out.p.setZero();
    return out;
  }
  // q has unit mean on X, so the entry average is p averaged over the
  // non-observed columns. Raw products are used so that an out-of-range
  // starting p can still be rescaled.
  std::size_t free_cols = 0;
  double current = 0.0;
  for (std::size_t j = 0; j < out.dim(); ++j) {
    if (std::binary_search(out.observed_index_set.begin(), out.observed_index_set.end(), j)) continue;
    out.p(idx(j)) = std::max(0.0, out.p(idx(j)));
    current += out.p(idx(j));
    ++free_cols;
  }
  if (free_cols == 0 || current <= 0.0) {
    throw InfeasibleMechanism("calibrate_mean_missingness: mechanism has no maskable mass to scale");
  }
  current /= static_cast<double>(free_cols);
  out.p *= target / current;
  double worst = 0.0;
  std::size_t worst_col = 0;
  for (std::size_t j = 0; j < out.dim(); ++j) {
    const double pj = out.p(idx(j));
    if (pj == 0.0) continue;
    for (Eigen::Index i = 0; i < V.rows(); ++i) {
      const double lam = pj * out.intensity[j](Vector(V.row(i).transpose()));
      if (lam > worst) {
        worst = lam;
        worst_col = j;
      }
    }
  }
  if (worst >= 1.0) {
    std::ostringstream msg;
    msg << "calibrate_mean_missingness: target " << target << " drives lambda on column "
        << worst_col << " to " << worst << " >= 1";
    throw InfeasibleMechanism(msg.str());
  }
  return out;
}

MechanismSpec make_heterogeneous_mcar(std::size_t d, double mean_p, const RandomStream& rng) {
  RandomStream s = rng.substream(StreamPurpose::kMechanism);
  Vector raw(idx(d));
  for (std::size_t j = 0; j < d; ++j) raw(idx(j)) = s.uniform();
  const double m = raw.mean();
  if (m <= 0.0) throw InfeasibleMechanism("make_heterogeneous_mcar: degenerate raw scores");
  Vector p = raw * (mean_p / m);
  return MechanismSpec::hmcar(std::move(p));
}

MechanismSpec make_logistic_smar(const Matrix& X, IndexSet driving_columns, double mean_p,
                                 const RandomStream& rng) {
  const std::size_t d = static_cast<std::size_t>(X.cols());
  std::sort(driving_columns.begin(), driving_columns.end());
  RandomStream s = rng.substream(StreamPurpose::kMechanism);
  Vector p = Vector::Zero(idx(d));
  std::vector<Intensity> q(d, Intensity::unit());
  const std::size_t k = driving_columns.size();
  for (std::size_t j = 0; j < d; ++j) {
    if (std::binary_search(driving_columns.begin(), driving_columns.end(), j)) continue;
    Vector coef(idx(k));
    for (std::size_t c = 0; c < k; ++c) coef(idx(c)) = 1.6 * s.uniform();
    q[j] = Intensity::logistic(std::move(coef), -0.3);
    p(idx(j)) = s.uniform();
  }
  // Provisional small p so validate() accepts it; calibration sets the scale.
  const double pmax = p.maxCoeff();
  if (pmax > 0.0) p *= 0.5 / pmax;
  MechanismSpec spec = MechanismSpec::smar(std::move(p), std::move(driving_columns), std::move(q));
  return calibrate_mean_missingness(spec, X, mean_p);
}

}  // namespace rsgd
