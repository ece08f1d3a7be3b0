#include "rsgd/mech_estimation.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace rsgd {
namespace {

Eigen::Index idx(std::size_t i) { return static_cast<Eigen::Index>(i); }

double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

bool is_observed(const IndexSet& obs, std::size_t j) {
  return std::find(obs.begin(), obs.end(), j) != obs.end();
}

}  // namespace

MechanismSpec MechanismEstimate::to_spec() const {
  if (observed_index_set.empty()) return MechanismSpec::hmcar(p_hat);
  return MechanismSpec::smar(p_hat, observed_index_set, q_hat);
}

Vector estimate_p(const Mask& mask) {
  if (mask.rows() == 0) throw ContractViolation("estimate_p: empty mask");
  Vector p(idx(mask.cols()));
  for (std::size_t j = 0; j < mask.cols(); ++j) {
    std::size_t c = 0;
    for (std::size_t i = 0; i < mask.rows(); ++i) c += mask(i, j);
    p(idx(j)) = static_cast<double>(c) / static_cast<double>(mask.rows());
  }
  return p;
}

Intensity estimate_q_column(const Mask& mask, std::size_t j, const Matrix& V, bool& flag,
                            const LogisticFitOptions& options) {
  const Eigen::Index n = V.rows();
  if (static_cast<std::size_t>(n) != mask.rows()) {
    throw ContractViolation("estimate_q: V and mask have different row counts");
  }
  flag = false;
  Vector m(n);
  for (Eigen::Index i = 0; i < n; ++i) m(i) = mask(static_cast<std::size_t>(i), j);
  const double freq = m.mean();
  const bool constant_v =
      V.cols() == 0 || ((V.rowwise() - V.colwise().mean()).cwiseAbs().maxCoeff() < 1e-12);
  if (freq == 0.0 || freq == 1.0 || constant_v) {
    flag = true;
    return Intensity::unit();
  }
  // Design with intercept in the last slot.
  Matrix Z(n, V.cols() + 1);
  Z.leftCols(V.cols()) = V;
  Z.col(V.cols()).setOnes();
  Vector beta = Vector::Zero(Z.cols());
  beta(V.cols()) = std::log(freq / (1.0 - freq));
  auto objective = [&](const Vector& b) {
    const Vector eta = Z * b;
    double s = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) s += softplus(eta(i)) - m(i) * eta(i);
    return s / static_cast<double>(n);
  };
  auto grad = [&](const Vector& b) {
    const Vector eta = Z * b;
    Vector r(n);
    for (Eigen::Index i = 0; i < n; ++i) r(i) = sigmoid(eta(i)) - m(i);
    return Vector(Z.transpose() * r / static_cast<double>(n));
  };
  double step = 1.0;
  double f = objective(beta);
  std::size_t it = 0;
  for (; it < options.max_iterations; ++it) {
    const Vector g = grad(beta);
    if (g.norm() <= options.tolerance) break;
    step *= 2.0;
    while (true) {
      const Vector cand = beta - step * g;
      const double fc = objective(cand);
      if (fc <= f - 0.5 * step * g.squaredNorm()) {
        beta = cand;
        f = fc;
        break;
      }
      step *= 0.5;
      if (step < 1e-16) break;
    }
    if (step < 1e-16) break;
  }
  if (!all_finite(beta)) {
    std::ostringstream msg;
    msg << "estimate_q: logistic fit for column " << j << " diverged (separable mask?)";
    throw Error(msg.str());
  }
  Intensity q = Intensity::logistic(beta.head(V.cols()), beta(V.cols()));
  q.normalize_on(V);
  return q;
}

MechanismEstimate estimate_mechanism(const Mask& mask, const Matrix& X,
                                     const IndexSet& observed_index_set,
                                     const LogisticFitOptions& options) {
  if (static_cast<std::size_t>(X.cols()) != mask.cols() ||
      static_cast<std::size_t>(X.rows()) != mask.rows()) {
    throw ContractViolation("estimate_mechanism: data and mask shapes differ");
  }
  MechanismEstimate est;
  est.observed_index_set = observed_index_set;
  std::sort(est.observed_index_set.begin(), est.observed_index_set.end());
  est.sample_count = mask.rows();
  est.p_hat = estimate_p(mask);
  const std::size_t d = mask.cols();
  est.q_hat.assign(d, Intensity::unit());
  est.degenerate.assign(d, false);
  est.missing_counts.assign(d, 0);
  for (std::size_t j = 0; j < d; ++j) {
    est.missing_counts[j] = static_cast<std::size_t>(std::llround(est.p_hat(idx(j)) * static_cast<double>(mask.rows())));
  }
  if (est.observed_index_set.empty()) return est;
  Matrix V(X.rows(), idx(est.observed_index_set.size()));
  for (std::size_t k = 0; k < est.observed_index_set.size(); ++k) {
    const std::size_t c = est.observed_index_set[k];
    for (std::size_t i = 0; i < mask.rows(); ++i) {
      if (mask(i, c)) throw ContractViolation("estimate_mechanism: an observed-set column has missing entries");
    }
    V.col(idx(k)) = X.col(idx(c));
  }
  for (std::size_t j = 0; j < d; ++j) {
    if (is_observed(est.observed_index_set, j)) continue;
    bool flag = false;
    est.q_hat[j] = estimate_q_column(mask, j, V, flag, options);
    est.degenerate[j] = flag;
    if (flag) {
      // Unit intensities must still carry the observed-set coefficient length.
      Intensity q = Intensity::logistic(Vector::Zero(V.cols()), 0.0);
      q.normalize_on(V);
      est.q_hat[j] = q;
    }
  }
  return est;
}

MechanismEstimate perturb(const MechanismEstimate& estimate, double delta_p, double delta_q,
                          const RandomStream& rng, const Matrix& X, double rho) {
  if (delta_p < 0.0 || delta_q < 0.0) throw ContractViolation("perturb: magnitudes must be nonnegative");
  MechanismEstimate out = estimate;
  const RandomStream base = rng.substream(StreamPurpose::kPerturbation);
  for (std::size_t j = 0; j < static_cast<std::size_t>(out.p_hat.size()); ++j) {
    if (is_observed(out.observed_index_set, j) || out.p_hat(idx(j)) == 0.0) continue;
    RandomStream s = base.substream(j);
    const double u = s.bernoulli(0.5) ? 1.0 : -1.0;
    const double v = s.bernoulli(0.5) ? 1.0 : -1.0;
    out.p_hat(idx(j)) += delta_p * u;
    if (out.p_hat(idx(j)) < 0.0) {
      std::ostringstream msg;
      msg << "perturb: p_hat on column " << j << " becomes negative";
      throw InfeasibleMechanism(msg.str());
    }
    // A unit intensity is a fixed point of (q + s) / (1 + s).
    auto& q = out.q_hat[j];
    if (delta_q != 0.0 && !q.constant) {
      // ((b + s0)/(1 + s0) + s1)/(1 + s1) = (b + s0 + s1 (1 + s0)) / ((1 + s0)(1 + s1))
      q.shift += delta_q * v * (1.0 + q.shift);
    }
  }
  const Matrix L = intensity_matrix(out.to_spec(), X);
  for (Eigen::Index i = 0; i < L.rows(); ++i) {
    for (Eigen::Index j = 0; j < L.cols(); ++j) {
      if (L(i, j) < 0.0 || L(i, j) > rho) {
        std::ostringstream msg;
        msg << "perturb: lambda_hat on column " << j << " reaches " << L(i, j) << ", outside [0, " << rho << "]";
        throw InfeasibleMechanism(msg.str());
      }
    }
  }
  return out;
}

}  // namespace rsgd
