#pragma once

#include <optional>
#include <string>
#include <vector>

#include "rsgd/glm.hpp"
#include "rsgd/imputation.hpp"
#include "rsgd/mechanisms.hpp"
#include "rsgd/random.hpp"
#include "rsgd/types.hpp"

namespace rsgd {

/// Enumeration is refused above this many maskable columns.
inline constexpr std::size_t kMaxEnumeratedColumns = 16;
/// Explicit joint mask tables are limited to this many columns.
inline constexpr std::size_t kMaxJointTableColumns = 8;

/// One gradient-shaped value per subset of `columns`. Entry `bits` holds the
/// subset {columns[t] : bit t of bits is set}.
struct SubsetTable {
  IndexSet columns;
  std::vector<GradientVector> values;

  std::size_t subset_count() const { return values.size(); }
  /// Index of a subset given in column indices; throws if a column is not
  /// covered by the table.
  std::size_t index_of(const IndexSet& S) const;
  IndexSet subset(std::size_t bits) const;
  const GradientVector& at(const IndexSet& S) const { return values.at(index_of(S)); }
};

/// Subset gradients G_S: G_empty is the complete-data gradient.
using SubsetGradientTable = SubsetTable;

/// Averaging over imputation randomness. Deterministic imputers always use a
/// single draw; stochastic ones average `xi_draws` replicas, replica r of
/// sample i using xi.substream({i, r}).
struct OracleOptions {
  std::size_t xi_draws = 8;
  RandomStream xi{0x5eed};
  std::size_t threads = 1;
};

enum class BiasMethod { kEnumerated, kMonteCarlo };

struct BiasReport {
  GradientVector bias;
  BiasMethod method = BiasMethod::kEnumerated;
  double scale = 1.0;
  std::size_t sample_count = 0;
  /// Monte Carlo only; empty for enumerated reports.
  GradientVector standard_error;
  double max_standard_error = 0.0;
};

/// Gradient after declaring exactly the columns in S missing and imputing.
GradientVector subset_gradient(const GlmFamily& family, const Imputer& imputer, const Vector& w,
                               const Vector& x, double y, const IndexSet& S,
                               const RandomStream& xi);

/// G_S for every S subset of `columns` for one sample.
SubsetGradientTable subset_gradient_table(const GlmFamily& family, const Imputer& imputer,
                                          const Vector& w, const Vector& x, double y,
                                          const IndexSet& columns, const RandomStream& xi);

/// Moebius transform D_S = sum_{T subset S} (-1)^{|S|-|T|} G_T.
SubsetTable finite_differences(const SubsetGradientTable& table);

/// Inverse (zeta) transform G_A = sum_{S subset A} D_S.
SubsetGradientTable reconstruct_from_differences(const SubsetTable& differences);

/// Exact E[imputed gradient] - grad L_n(w) under the empirical measure of
/// (X, y) with independent masks, computed per sample as
/// sum_S prod_{j in S} (scale * lambda_j(V)) D_S.
BiasReport exact_bias(const GlmFamily& family, const Imputer& imputer, const Matrix& X,
                      const Vector& y, const MechanismSpec& mechanism, const Vector& w,
                      double scale = 1.0, const OracleOptions& options = {});

/// Same quantity by direct enumeration of the 2^m mask patterns with their
/// probabilities; an independent route for the moment form above.
BiasReport exact_bias_by_enumeration(const GlmFamily& family, const Imputer& imputer,
                                     const Matrix& X, const Vector& y,
                                     const MechanismSpec& mechanism, const Vector& w,
                                     double scale = 1.0, const OracleOptions& options = {});

/// Bias under an explicit joint (possibly dependent) mask law on `columns`,
/// independent of the data: joint_probability[bits] = P(missing set = bits).
/// Computed through co-missingness moments P(all of S missing) and D_S.
BiasReport exact_bias_joint(const GlmFamily& family, const Imputer& imputer, const Matrix& X,
                            const Vector& y, const IndexSet& columns,
                            const std::vector<double>& joint_probability, const Vector& w,
                            const OracleOptions& options = {});

/// mu_S(w) = average over the data of prod_{j in S} a_j(V) D_S, for S over
/// the maskable columns. sum_S prod_{j in S} p_j mu_S reproduces exact_bias.
SubsetTable multilinear_coefficients(const GlmFamily& family, const Imputer& imputer,
                                     const Matrix& X, const Vector& y,
                                     const MechanismSpec& mechanism, const Vector& w,
                                     const OracleOptions& options = {});

/// Evaluates sum_{S nonempty} prod_{j in S} p_j mu_S.
GradientVector evaluate_multilinear(const SubsetTable& mu, const Vector& p);

/// Sampled estimate: draw t uses row t mod n, a fresh mask and (for
/// stochastic imputers) a uniformly chosen xi replica.
BiasReport monte_carlo_bias(const GlmFamily& family, const Imputer& imputer, const Matrix& X,
                            const Vector& y, const MechanismSpec& mechanism, const Vector& w,
                            std::size_t n_draws, std::uint64_t seed, double scale = 1.0,
                            const OracleOptions& options = {});

/// Weighted combination of imputed gradients at nested thinning levels,
/// evaluated exactly by enumerating, per maskable coordinate, the level at
/// which it first becomes missing.
struct LevelCombination {
  /// 1 = C_0 < C_1 < ... < C_k.
  std::vector<double> factors{1.0};
  std::vector<double> weights{1.0};
  /// Linked: impute once at the top level, restore downward. Unlinked: each
  /// level imputed separately with its own xi (level l uses
  /// xi.substream(kUnlinkedTag + l)).
  bool linked = true;
  /// Intensities the thinning step believes in. Empty means the true
  /// (scaled) mechanism.
  std::optional<MechanismSpec> thinning_mechanism;
};

inline constexpr std::uint64_t kUnlinkedTag = 0x0b5e55ed;

/// Exact E[sum_l alpha_l g^{(C_l p)}] - grad L_n(w).
BiasReport exact_combination_bias(const GlmFamily& family, const Imputer& imputer,
                                  const Matrix& X, const Vector& y,
                                  const MechanismSpec& mechanism, const Vector& w,
                                  const LevelCombination& combination, double scale = 1.0,
                                  const OracleOptions& options = {});

}  // namespace rsgd
