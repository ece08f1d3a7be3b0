#pragma once

#include <span>
#include <vector>

#include "rsgd/random.hpp"
#include "rsgd/types.hpp"

namespace rsgd {

/// Per-column intensity a_j(v). Either the constant 1 (MCAR) or the
/// normalized logistic form
///
///   q(v) = (sigmoid(coef . v + intercept) / normalizer + shift) / (1 + shift)
///
/// where `normalizer` is the sample mean of the sigmoid over the calibration
/// set, so q has unit mean there. `shift` is zero except for deliberately
/// perturbed plug-in estimates.
struct Intensity {
  bool constant = true;
  Vector coef;
  double intercept = 0.0;
  double normalizer = 1.0;
  double shift = 0.0;

  static Intensity unit() { return {}; }
  static Intensity logistic(Vector coef, double intercept, double normalizer = 1.0);

  double operator()(const Vector& v) const;

  /// Sets the normalizer so that the mean over the rows of `V` equals 1.
  void normalize_on(const Matrix& V);
};

enum class MechanismKind { kHmcar, kSmar };

/// Missingness mechanism with P(M_j = 1 | V) = p_j * a_j(V).
struct MechanismSpec {
  MechanismKind kind = MechanismKind::kHmcar;
  Vector p;
  IndexSet observed_index_set;
  std::vector<Intensity> intensity;

  static MechanismSpec hmcar(Vector p);
  static MechanismSpec smar(Vector p, IndexSet observed_index_set,
                            std::vector<Intensity> intensity);

  std::size_t dim() const { return static_cast<std::size_t>(p.size()); }

  /// Columns with p_j > 0.
  IndexSet maskable() const;

  /// Same mechanism with p replaced by t * p.
  MechanismSpec scaled(double t) const;

  /// Structural checks: p in [0,1), p_j = 0 on observed columns, shapes.
  void validate() const;

  /// V for a complete covariate row.
  Vector observed_part(const Vector& x) const;
  Matrix observed_part(const Matrix& X) const;
};

/// lambda_j(v) = p_j * a_j(v). Throws InfeasibleMechanism when the value
/// leaves [0,1); never clamps.
double marginal_intensity(const MechanismSpec& spec, const Vector& v, std::size_t j);

/// All d intensities for one observed subvector.
Vector marginal_intensities(const MechanismSpec& spec, const Vector& v);

/// n x d matrix of lambda_j(V_i) for every row of X.
Matrix intensity_matrix(const MechanismSpec& spec, const Matrix& X);

/// Product of lambda_j(v) over S (1 for the empty set). Assumes conditional
/// independence of mask coordinates given V.
double co_missingness(const MechanismSpec& spec, const IndexSet& S, const Vector& v);

/// Draws M with independent entries, P(M_ij = 1 | V_i) = lambda_j(V_i).
/// Entry (i, j) uses the substream (kMask, i, j) of `rng`.
Mask sample_mask(const MechanismSpec& spec, const Matrix& X, const RandomStream& rng);

/// Keep-probability of an observed entry when a mask whose intensity is
/// `base_lambda` is thinned by `factor`: (1 - factor*base) / (1 - base).
double keep_probability(double base_lambda, double factor);

/// Eagerly validated thinning of masks whose intensities are
/// `base_scale * lambda` by a further factor C. Construction checks
/// C * base_scale * lambda <= 1 on every row of X and reports the worst
/// column otherwise.
class ThinningPlan {
 public:
  ThinningPlan(const MechanismSpec& spec, const Matrix& X, double factor,
               double base_scale = 1.0);

  double factor() const { return factor_; }
  double base_scale() const { return base_scale_; }
  double keep(std::size_t i, std::size_t j) const {
    return keep_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  }

  /// Entry (i, j) draws from substream (kThinning, level, i, j).
  Mask apply(const Mask& mask_p, const RandomStream& rng, std::size_t level = 1) const;

 private:
  double factor_;
  double base_scale_;
  Matrix keep_;
};

/// M^{(Cp)}_ij = 1 - (1 - M^{(p)}_ij) r_ij with r_ij ~ Bernoulli(keep).
Mask thin_mask(const Mask& mask_p, const MechanismSpec& spec, double C, const Matrix& X,
               const RandomStream& rng);

/// Levels 0..k; level l thins level l-1 by C_l / C_{l-1}. factors[0] must be 1.
std::vector<Mask> cascade_thin(const Mask& mask_p, const MechanismSpec& spec,
                               std::span<const double> factors, const Matrix& X,
                               const RandomStream& rng);

/// Single-row cascade against arbitrary per-column intensities, used by the
/// SGD estimators. Returns k+1 nested rows. `lambda` is the intensity the
/// thinning believes in (true or plug-in).
std::vector<std::vector<std::uint8_t>> cascade_thin_row(std::span<const std::uint8_t> mask_p,
                                                        const Vector& lambda,
                                                        std::span<const double> factors,
                                                        const RandomStream& rng);

/// Rescales p (after re-normalizing every logistic intensity on X) so that
/// the mean of lambda_j(V_i) over all entries of non-observed columns equals
/// `target`. Throws InfeasibleMechanism if that would push any lambda to 1.
MechanismSpec calibrate_mean_missingness(const MechanismSpec& spec, const Matrix& X,
                                         double target);

/// Mean of lambda_j(V_i) over the maskable entries.
double mean_missingness(const MechanismSpec& spec, const Matrix& X);

/// Largest lambda_j(V_i) over the rows of X, with its column.
struct IntensityPeak {
  double value = 0.0;
  std::size_t column = 0;
};
IntensityPeak max_intensity(const MechanismSpec& spec, const Matrix& X);

/// sMAR with Q(u) = sigmoid(1.6 u - 0.3), u = a_j x_{v1} + b_j x_{v2} with
/// a_j, b_j ~ U(0,1); the driving covariates are always observed.
/// Raw p_j ~ U(0,1) on the other columns, then calibrated to `mean_p` on X.
MechanismSpec make_logistic_smar(const Matrix& X, IndexSet driving_columns, double mean_p,
                                 const RandomStream& rng);

/// Heterogeneous MCAR: raw scores ~ U(0,1) per column rescaled to mean `mean_p`.
MechanismSpec make_heterogeneous_mcar(std::size_t d, double mean_p, const RandomStream& rng);

}  // namespace rsgd
