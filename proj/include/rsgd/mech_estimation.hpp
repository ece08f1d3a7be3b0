#pragma once

#include <vector>

#include "rsgd/mechanisms.hpp"
#include "rsgd/random.hpp"
#include "rsgd/types.hpp"

namespace rsgd {

struct MechanismEstimate {
  Vector p_hat;
  IndexSet observed_index_set;
  std::vector<Intensity> q_hat;
  std::vector<std::size_t> missing_counts;
  std::size_t sample_count = 0;
  /// Columns whose intensity fell back to q = 1 (degenerate mask or no signal in V).
  std::vector<bool> degenerate;

  /// Spec with p = p_hat; sMAR when the observed set is nonempty.
  MechanismSpec to_spec() const;
};

/// Column means of the mask.
Vector estimate_p(const Mask& mask);

struct LogisticFitOptions {
  double tolerance = 1e-6;
  std::size_t max_iterations = 20000;
};

/// Logistic regression of the mask column on V (with intercept) by gradient
/// descent with backtracking, normalized to unit mean on V. Degenerate
/// columns (all 0, all 1) and constant V give the unit intensity; `flag` is
/// set in that case.
Intensity estimate_q_column(const Mask& mask, std::size_t j, const Matrix& V, bool& flag,
                            const LogisticFitOptions& options = {});

/// p_hat and per-column q_hat. Columns in `observed_index_set` get p_hat = 0;
/// with an empty observed set every q_hat is the unit intensity.
MechanismEstimate estimate_mechanism(const Mask& mask, const Matrix& X,
                                     const IndexSet& observed_index_set,
                                     const LogisticFitOptions& options = {});

/// Signed worst-case perturbation: p_j += delta_p u_j and
/// q_j <- (q_j + delta_q u'_j) / (1 + delta_q u'_j), u, u' uniform on {-1, +1}
/// per maskable column. V is the fitting fold used for the feasibility check
/// lambda_hat in [0, rho].
MechanismEstimate perturb(const MechanismEstimate& estimate, double delta_p, double delta_q,
                          const RandomStream& rng, const Matrix& X, double rho = 0.95);

}  // namespace rsgd
