#pragma once

#include <atomic>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "rsgd/random.hpp"
#include "rsgd/types.hpp"

namespace rsgd {

enum class ImputerKind { kZero, kMean, kKnn, kIterativeRidge };

std::string to_string(ImputerKind kind);
ImputerKind parse_imputer_kind(const std::string& name);

struct ImputerOptions {
  std::size_t knn_k = 5;
  /// Chained-equation rounds, used both when fitting and when imputing.
  std::size_t rounds = 5;
  double ridge = 1e-3;
  /// Adds residual-scale Gaussian noise drawn from xi to every regression
  /// imputation (iterative_ridge only).
  bool stochastic = false;
};

/// Per-column ridge model of column j on all other columns.
struct ColumnRegression {
  double intercept = 0.0;
  Vector coef;  // length d, coef(j) == 0
  double residual_sd = 0.0;
};

/// A fitted, data-independent imputation rule. Imputing a row reads only
/// that row's observed entries, the mask, the frozen fitted state and xi.
/// The noise for column j comes from xi.substream(j), so the same column
/// receives the same draw whichever other columns are missing.
class Imputer {
 public:
  Imputer() = default;

  ImputerKind kind() const { return kind_; }
  const ImputerOptions& options() const { return options_; }
  const Vector& means() const { return means_; }
  const std::vector<ColumnRegression>& regressions() const { return regressions_; }
  bool is_stochastic() const { return kind_ == ImputerKind::kIterativeRidge && options_.stochastic; }

  /// `x` holds valid values where mask_row is 0; the rest is never read.
  Vector impute(const Vector& x, std::span<const std::uint8_t> mask_row,
                const RandomStream& xi) const;

  /// kNN rows that fell back to the column mean for lack of candidates.
  std::size_t knn_fallbacks() const { return fallbacks_ ? fallbacks_->load() : 0; }

 private:
  friend Imputer fit_imputer(ImputerKind, const ObservedDataset&, const ImputerOptions&);

  void impute_knn(Vector& out, std::span<const std::uint8_t> mask_row) const;
  void impute_iterative(Vector& out, std::span<const std::uint8_t> mask_row,
                        const RandomStream& xi) const;

  ImputerKind kind_ = ImputerKind::kZero;
  ImputerOptions options_;
  std::size_t dim_ = 0;
  Vector means_;
  Matrix reference_;
  Mask reference_mask_;
  std::vector<ColumnRegression> regressions_;
  std::shared_ptr<std::atomic<std::size_t>> fallbacks_ = std::make_shared<std::atomic<std::size_t>>(0);
};

/// Fits on an auxiliary dataset (observed entries only). Throws Error naming
/// the column when a kind other than zero meets an all-missing column.
Imputer fit_imputer(ImputerKind kind, const ObservedDataset& auxiliary,
                    const ImputerOptions& options = {});

/// Convenience: zero imputer of dimension d needs no data.
Imputer zero_imputer(std::size_t d);

struct LinkedImputationPair {
  Vector x_tilde_Cp;
  Vector x_tilde_p;
};

/// Impute once under mask_Cp, then restore every entry observed under
/// mask_p from `x`. Throws ContractViolation unless mask_p is nested in
/// mask_Cp.
LinkedImputationPair linked_impute(const Imputer& imputer, const Vector& x,
                                   std::span<const std::uint8_t> mask_p,
                                   std::span<const std::uint8_t> mask_Cp,
                                   const RandomStream& xi);

/// Multi-level version: impute at the last (most missing) level and restore
/// downward. Levels must be nested in order.
std::vector<Vector> linked_impute_levels(const Imputer& imputer, const Vector& x,
                                         const std::vector<std::vector<std::uint8_t>>& levels,
                                         const RandomStream& xi);

/// Two independent imputations, one per scale. Exists to exhibit the failure
/// of unlinked Richardson.
std::pair<Vector, Vector> unlinked_impute(const Imputer& imputer, const Vector& x,
                                          std::span<const std::uint8_t> mask_p,
                                          std::span<const std::uint8_t> mask_Cp,
                                          const RandomStream& xi1, const RandomStream& xi2);

}  // namespace rsgd
