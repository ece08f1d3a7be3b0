#include "rsgd/richardson.hpp"

#include <cmath>
#include <sstream>

#include <Eigen/LU>

namespace rsgd {
namespace {

Eigen::Index idx(std::size_t i) { return static_cast<Eigen::Index>(i); }

void check_factor_ladder(std::span<const double> factors) {
  if (factors.empty()) throw ContractViolation("Richardson factors are empty");
  if (factors[0] != 1.0) throw ContractViolation("Richardson factors must start at 1");
  for (std::size_t l = 1; l < factors.size(); ++l) {
    if (factors[l] == factors[l - 1]) {
      std::ostringstream msg;
      msg << "repeated Richardson factor " << factors[l] << " makes the weight system singular";
      throw ContractViolation(msg.str());
    }
    if (!(factors[l] > factors[l - 1])) throw ContractViolation("Richardson factors must increase");
  }
}

}  // namespace

std::vector<double> vandermonde_weights(std::span<const double> factors) {
  check_factor_ladder(factors);
  const std::size_t n = factors.size();
  Matrix A(idx(n), idx(n));
  for (std::size_t m = 0; m < n; ++m) {
    for (std::size_t l = 0; l < n; ++l) A(idx(m), idx(l)) = std::pow(factors[l], static_cast<double>(m));
  }
  Vector rhs = Vector::Zero(idx(n));
  rhs(0) = 1.0;
  Eigen::FullPivLU<Matrix> lu(A);
  if (!lu.isInvertible()) throw ContractViolation("Richardson weight system is singular");
  const Vector alpha = lu.solve(rhs);
  return {alpha.data(), alpha.data() + alpha.size()};
}

RichardsonConfig RichardsonConfig::from_factors(std::vector<double> factors) {
  RichardsonConfig c;
  c.weights = vandermonde_weights(factors);
  c.order = factors.size() - 1;
  c.factors = std::move(factors);
  c.validate();
  return c;
}

RichardsonConfig RichardsonConfig::geometric(std::size_t order, double C) {
  if (!(C > 1.0)) throw ContractViolation("Richardson base factor must exceed 1");
  std::vector<double> f(order + 1);
  for (std::size_t l = 0; l <= order; ++l) f[l] = std::pow(C, static_cast<double>(l));
  return from_factors(std::move(f));
}

void RichardsonConfig::validate() const {
  check_factor_ladder(factors);
  if (weights.size() != factors.size() || order + 1 != factors.size()) {
    throw ContractViolation("RichardsonConfig: order, factors and weights disagree");
  }
  for (std::size_t m = 0; m <= order; ++m) {
    double s = 0.0;
    double scale = 0.0;
    for (std::size_t l = 0; l <= order; ++l) {
      const double term = weights[l] * std::pow(factors[l], static_cast<double>(m));
      s += term;
      scale = std::max(scale, std::abs(term));
    }
    const double target = m == 0 ? 1.0 : 0.0;
    if (std::abs(s - target) > 1e-10 * std::max(1.0, scale)) {
      std::ostringstream msg;
      msg << "RichardsonConfig: moment " << m << " of the weights is " << s << ", expected " << target;
      throw ContractViolation(msg.str());
    }
  }
}

std::string RichardsonConfig::describe() const {
  std::ostringstream out;
  out.precision(17);
  out << "order=" << order << " factors=";
  for (std::size_t l = 0; l < factors.size(); ++l) out << (l ? "," : "") << factors[l];
  out << " weights=";
  for (std::size_t l = 0; l < weights.size(); ++l) out << (l ? "," : "") << weights[l];
  if (backoff_steps) out << " backoff=" << backoff_steps;
  if (!feasible) out << " infeasible";
  return out.str();
}

RichardsonConfig default_ladder(std::size_t order, double max_lambda, double C) {
  if (!(C > 1.0)) throw ContractViolation("default_ladder: base factor must exceed 1");
  if (!(max_lambda >= 0.0 && max_lambda < 1.0)) {
    throw InfeasibleMechanism("default_ladder: max intensity must lie in [0,1)");
  }
  std::size_t steps = 0;
  while (std::pow(C, static_cast<double>(order)) * max_lambda > 1.0) {
    C = 1.0 + 0.9 * (C - 1.0);
    ++steps;
    if (C - 1.0 < 1e-6) throw InfeasibleMechanism("default_ladder: no feasible factor ladder");
  }
  RichardsonConfig config = RichardsonConfig::geometric(order, C);
  config.backoff_steps = steps;
  return config;
}

void check_feasibility(RichardsonConfig& config, const MechanismSpec& thinning, const Matrix& X) {
  config.feasible = config.factors.back() * max_intensity(thinning, X).value <= 1.0 + 1e-12;
}

GradientVector richardson_gradient(const GradientVector& g_p, const GradientVector& g_Cp, double C) {
  if (!(C > 1.0)) throw ContractViolation("richardson_gradient: C must exceed 1");
  if (g_p.size() != g_Cp.size()) throw ContractViolation("richardson_gradient: length mismatch");
  return (C * g_p - g_Cp) / (C - 1.0);
}

GradientVector multi_order_gradient(std::span<const GradientVector> gradients,
                                    const RichardsonConfig& config) {
  if (gradients.size() != config.weights.size()) {
    throw ContractViolation("multi_order_gradient: one gradient per level is required");
  }
  GradientVector out = GradientVector::Zero(gradients[0].size());
  for (std::size_t l = 0; l < gradients.size(); ++l) out += config.weights[l] * gradients[l];
  return out;
}

GradientVector estimate_sample_gradient(const GlmFamily& family, const Imputer& imputer,
                                        const Vector& x, double y,
                                        const std::vector<std::vector<std::uint8_t>>& levels,
                                        const RichardsonConfig& config, const Vector& w,
                                        const RandomStream& xi) {
  if (levels.size() != config.factors.size()) {
    throw ContractViolation("estimate_sample_gradient: one mask level per factor is required");
  }
  const auto completed = linked_impute_levels(imputer, x, levels, xi);
  std::vector<GradientVector> g;
  g.reserve(completed.size());
  for (const auto& xt : completed) g.push_back(gradient(family, w, xt, y));
  return multi_order_gradient(g, config);
}

GradientVector estimate_sample_gradient_unlinked(const GlmFamily& family, const Imputer& imputer,
                                                 const Vector& x, double y,
                                                 const std::vector<std::vector<std::uint8_t>>& levels,
                                                 const RichardsonConfig& config, const Vector& w,
                                                 const RandomStream& xi) {
  if (levels.size() != config.factors.size()) {
    throw ContractViolation("estimate_sample_gradient_unlinked: one mask level per factor is required");
  }
  std::vector<GradientVector> g;
  g.reserve(levels.size());
  for (std::size_t l = 0; l < levels.size(); ++l) {
    g.push_back(gradient(family, w, imputer.impute(x, levels[l], xi.substream(kUnlinkedTag + l)), y));
  }
  return multi_order_gradient(g, config);
}

double plugin_effective_intensity(double lambda, double lambda_hat, double C) {
  if (!(lambda >= 0.0 && lambda < 1.0) || !(lambda_hat >= 0.0 && lambda_hat < 1.0)) {
    throw ContractViolation("plugin_effective_intensity: intensities must lie in [0,1)");
  }
  if (!(C > 1.0)) throw ContractViolation("plugin_effective_intensity: C must exceed 1");
  if (C * lambda_hat > 1.0 + 1e-12) {
    throw InfeasibleMechanism("plugin_effective_intensity: C * lambda_hat exceeds 1");
  }
  return C * lambda + (C - 1.0) * (lambda_hat - lambda) / (1.0 - lambda_hat);
}

void PlugInMechanism::validate(const Matrix& X, double C) const {
  estimate.validate();
  if (!(rho > 0.0 && rho < 1.0)) throw ContractViolation("PlugInMechanism: rho must lie in (0,1)");
  const IntensityPeak peak = max_intensity(estimate, X);
  if (peak.value > rho) {
    std::ostringstream msg;
    msg << "plug-in intensity on column " << peak.column << " reaches " << peak.value
        << " > rho = " << rho;
    throw InfeasibleMechanism(msg.str());
  }
  if (C * peak.value > 1.0 + 1e-12) {
    std::ostringstream msg;
    msg << "plug-in thinning by " << C << " is infeasible: column " << peak.column
        << " reaches C * lambda_hat = " << C * peak.value;
    throw InfeasibleMechanism(msg.str());
  }
}

Mask plugin_thin(const Mask& mask_p, const PlugInMechanism& plug_in, double C, const Matrix& X,
                 const RandomStream& rng) {
  plug_in.validate(X, C);
  return ThinningPlan(plug_in.estimate, X, C).apply(mask_p, rng, 1);
}

BiasReport richardson_bias(const GlmFamily& family, const Imputer& imputer, const Matrix& X,
                           const Vector& y, const MechanismSpec& mechanism, const Vector& w,
                           const RichardsonConfig& config, double scale, bool linked,
                           const MechanismSpec* thinning, const OracleOptions& options) {
  config.validate();
  LevelCombination combination;
  combination.factors = config.factors;
  combination.weights = config.weights;
  combination.linked = linked;
  if (thinning) combination.thinning_mechanism = *thinning;
  return exact_combination_bias(family, imputer, X, y, mechanism, w, combination, scale, options);
}

}  // namespace rsgd
