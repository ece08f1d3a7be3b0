#pragma once

#include <string>

#include "rsgd/imputation.hpp"
#include "rsgd/mechanisms.hpp"
#include "rsgd/random.hpp"
#include "rsgd/types.hpp"

namespace rsgd {

enum class FamilyKind { kLinear, kLogistic, kPoisson };

std::string to_string(FamilyKind kind);
FamilyKind parse_family_kind(const std::string& name);

/// Canonical-link GLM with an optional l2 penalty ridge * |w|^2 / 2.
struct GlmFamily {
  FamilyKind kind = FamilyKind::kLinear;
  double ridge = 1e-3;

  /// Logistic responses must be -1/+1, Poisson responses nonnegative integers.
  void validate_response(double y) const;
  void validate_responses(const Vector& y) const;

  GlmFamily without_ridge() const { return {kind, 0.0}; }
};

/// Poisson linear predictors are clipped to this magnitude.
inline constexpr double kPoissonClip = 30.0;

/// Number of Poisson clip events since process start (warning counter).
std::size_t poisson_clip_count();

double loss(const GlmFamily& family, const Vector& w, const Vector& x, double y);
GradientVector gradient(const GlmFamily& family, const Vector& w, const Vector& x, double y);

/// Average loss / gradient over complete rows of X.
double empirical_risk(const GlmFamily& family, const Vector& w, const Matrix& X, const Vector& y);
GradientVector empirical_risk_gradient(const GlmFamily& family, const Vector& w, const Matrix& X,
                                       const Vector& y);

/// S = E[X X^T], b = E[Y X] under the empirical measure.
struct PopulationModel {
  Matrix second_moment;
  Vector cross_moment;

  static PopulationModel from_sample(const Matrix& X, const Vector& y);
  /// Throws ContractViolation if S is not symmetric PSD within 1e-8.
  void validate() const;
  Vector risk_gradient(const Vector& w) const { return second_moment * w - cross_moment; }
};

/// Exact bias of the zero-imputed squared-loss gradient under independent
/// MCAR with probabilities p:
///   B_j = -p_j grad_j L(w) - (1 - p_j) sum_{k != j} p_k S_jk w_k,
/// with grad L = S w - b (penalty-free; the penalty cancels in the bias).
GradientVector linear_population_bias(const PopulationModel& model, const Vector& w, const Vector& p);

/// Column j of the first-order bias operator: the dataset average of
/// a_j(V) * (G_{j} - g), where G_{j} hides coordinate j and imputes.
/// Row i uses imputation stream xi.substream(i).
GradientVector first_order_operator_column(const GlmFamily& family, const Imputer& imputer,
                                           const Matrix& X, const Vector& y,
                                           const MechanismSpec& mechanism, const Vector& w,
                                           std::size_t j, const RandomStream& xi = RandomStream{});

}  // namespace rsgd
