#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace rsgd {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Model parameter w. Plain Eigen vector; finiteness is checked at the
/// boundaries that produce it (SGD updates, solvers).
using ParameterVector = Eigen::VectorXd;
/// Any gradient-shaped quantity: g, imputed gradients, G_S, D_S, biases.
using GradientVector = Eigen::VectorXd;

/// Column index set, 0-based, sorted, no duplicates.
using IndexSet = std::vector<std::size_t>;

/// Bitset over at most 64 columns; bit j set means column j is in the set.
using SubsetBits = std::uint64_t;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A precondition of an operation was violated by the caller.
class ContractViolation : public Error {
 public:
  using Error::Error;
};

/// Missingness intensity outside [0,1), or a thinning factor that would push
/// it above 1.
class InfeasibleMechanism : public Error {
 public:
  using Error::Error;
};

bool all_finite(const Vector& v);

/// Mask row with 1 exactly on S. Throws ContractViolation on out-of-range
/// indices.
std::vector<std::uint8_t> subset_mask(const IndexSet& S, std::size_t d);

/// Indices where the row is 1.
IndexSet support(std::span<const std::uint8_t> row);

/// Binary n x d matrix, 1 = missing. Row-major so a row is a contiguous span.
class Mask {
 public:
  Mask() = default;
  Mask(std::size_t rows, std::size_t cols);
  /// Takes ownership of row-major entries; rejects anything other than 0/1.
  Mask(std::size_t rows, std::size_t cols, std::vector<std::uint8_t> entries);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  std::uint8_t operator()(std::size_t i, std::size_t j) const {
    return entries_[i * cols_ + j];
  }
  void set(std::size_t i, std::size_t j, bool missing) {
    entries_[i * cols_ + j] = missing ? 1 : 0;
  }

  std::span<const std::uint8_t> row(std::size_t i) const {
    return {entries_.data() + i * cols_, cols_};
  }
  std::span<std::uint8_t> row(std::size_t i) {
    return {entries_.data() + i * cols_, cols_};
  }

  /// Fraction of ones in column j.
  double column_frequency(std::size_t j) const;
  std::size_t count() const;

  const std::vector<std::uint8_t>& entries() const { return entries_; }

  bool operator==(const Mask&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<std::uint8_t> entries_;
};

/// True iff every missing entry of `inner` is also missing in `outer`.
bool is_nested(std::span<const std::uint8_t> inner,
               std::span<const std::uint8_t> outer);
bool is_nested(const Mask& inner, const Mask& outer);

/// Covariates, mask and responses. Values under mask=1 are kept (synthetic
/// data has them) but are reachable only through `oracle_values()`; every
/// other accessor refuses them.
class ObservedDataset {
 public:
  ObservedDataset() = default;
  ObservedDataset(Matrix values, Mask mask, Vector responses,
                  IndexSet observed_index_set = {},
                  std::vector<std::string> column_names = {});

  /// Dataset with an all-zero mask.
  static ObservedDataset complete(Matrix values, Vector responses,
                                  IndexSet observed_index_set = {},
                                  std::vector<std::string> column_names = {});

  std::size_t rows() const { return static_cast<std::size_t>(values_.rows()); }
  std::size_t cols() const { return static_cast<std::size_t>(values_.cols()); }

  const Mask& mask() const { return mask_; }
  const Vector& responses() const { return responses_; }
  double response(std::size_t i) const { return responses_(static_cast<Eigen::Index>(i)); }
  const IndexSet& observed_index_set() const { return observed_; }
  const std::vector<std::string>& column_names() const { return names_; }

  bool is_missing(std::size_t i, std::size_t j) const { return mask_(i, j) != 0; }
  bool is_complete() const { return mask_.count() == 0; }

  /// Observed value; throws ContractViolation if the entry is masked.
  double value(std::size_t i, std::size_t j) const;

  /// Row with masked entries replaced by 0. The zeros carry no information;
  /// callers must consult the mask.
  Vector masked_row(std::size_t i) const;

  /// Observed-variable subvector V = X^{(S_obs)} of row i.
  Vector always_observed(std::size_t i) const;

  /// Ground-truth values including entries under the mask. Only the bias
  /// oracle and synthetic experiment plumbing should call this.
  const Matrix& oracle_values() const { return values_; }

  /// Same covariates and responses with a different mask.
  ObservedDataset with_mask(Mask mask) const;

  /// Subset of rows, in the given order.
  ObservedDataset select_rows(std::span<const std::size_t> rows) const;

 private:
  Matrix values_;
  Mask mask_;
  Vector responses_;
  IndexSet observed_;
  std::vector<std::string> names_;
};

}  // namespace rsgd
