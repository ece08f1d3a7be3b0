#pragma once

#include <span>
#include <string>
#include <vector>

#include "rsgd/bias_oracle.hpp"
#include "rsgd/glm.hpp"
#include "rsgd/imputation.hpp"
#include "rsgd/mechanisms.hpp"
#include "rsgd/random.hpp"
#include "rsgd/types.hpp"

namespace rsgd {

/// Solves sum_l alpha_l = 1 and sum_l alpha_l C_l^m = 0 for m = 1..k.
/// Throws on repeated factors or when C_0 != 1.
std::vector<double> vandermonde_weights(std::span<const double> factors);

struct RichardsonConfig {
  std::size_t order = 1;
  std::vector<double> factors{1.0, 2.0};
  std::vector<double> weights{2.0, -1.0};
  /// C_k * lambda <= 1 on the dataset the config was checked against.
  bool feasible = true;
  /// Number of geometric backoff steps applied to the base factor.
  std::size_t backoff_steps = 0;

  static RichardsonConfig from_factors(std::vector<double> factors);
  /// C_l = C^l for l = 0..order.
  static RichardsonConfig geometric(std::size_t order, double C = 2.0);

  /// Throws ContractViolation unless the weight identities hold within 1e-10.
  void validate() const;
  std::string describe() const;
};

/// Geometric ladder C_l = C^l, with C shrunk toward 1 (C <- 1 + 0.9 (C - 1))
/// until C_k * max_lambda <= 1.
RichardsonConfig default_ladder(std::size_t order, double max_lambda, double C = 2.0);

/// Marks `config.feasible` against the intensities of `thinning` on X.
void check_feasibility(RichardsonConfig& config, const MechanismSpec& thinning, const Matrix& X);

/// (C g_p - g_Cp) / (C - 1).
GradientVector richardson_gradient(const GradientVector& g_p, const GradientVector& g_Cp, double C);

/// sum_l alpha_l g_l.
GradientVector multi_order_gradient(std::span<const GradientVector> gradients,
                                    const RichardsonConfig& config);

/// Per-level gradients of one sample from nested mask levels: impute once at
/// the top level, restore entries observed at each lower level, combine with
/// the config weights.
GradientVector estimate_sample_gradient(const GlmFamily& family, const Imputer& imputer,
                                        const Vector& x, double y,
                                        const std::vector<std::vector<std::uint8_t>>& levels,
                                        const RichardsonConfig& config, const Vector& w,
                                        const RandomStream& xi);

/// Same with independent imputations per level (level l uses
/// xi.substream(kUnlinkedTag + l)); kept for the linked/unlinked comparison.
GradientVector estimate_sample_gradient_unlinked(const GlmFamily& family, const Imputer& imputer,
                                                 const Vector& x, double y,
                                                 const std::vector<std::vector<std::uint8_t>>& levels,
                                                 const RichardsonConfig& config, const Vector& w,
                                                 const RandomStream& xi);

/// C lambda + (C - 1)(lambda_hat - lambda) / (1 - lambda_hat).
double plugin_effective_intensity(double lambda, double lambda_hat, double C);

/// Estimated mechanism used for thinning. lambda_hat <= rho < 1 and
/// C lambda_hat <= 1 are checked, never clamped.
struct PlugInMechanism {
  MechanismSpec estimate;
  double rho = 0.95;

  /// Throws InfeasibleMechanism naming the column on violation.
  void validate(const Matrix& X, double C) const;
};

Mask plugin_thin(const Mask& mask_p, const PlugInMechanism& plug_in, double C, const Matrix& X,
                 const RandomStream& rng);

/// Exact bias of the Richardson combination under the empirical measure.
/// `thinning` defaults to the true mechanism.
BiasReport richardson_bias(const GlmFamily& family, const Imputer& imputer, const Matrix& X,
                           const Vector& y, const MechanismSpec& mechanism, const Vector& w,
                           const RichardsonConfig& config, double scale = 1.0, bool linked = true,
                           const MechanismSpec* thinning = nullptr,
                           const OracleOptions& options = {});

}  // namespace rsgd
