#include "rsgd/types.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

namespace rsgd {

bool all_finite(const Vector& v) { return v.allFinite(); }

std::vector<std::uint8_t> subset_mask(const IndexSet& S, std::size_t d) {
  std::vector<std::uint8_t> row(d, 0);
  for (std::size_t j : S) {
    if (j >= d) {
      std::ostringstream msg;
      msg << "subset_mask: index " << j << " out of range for dimension " << d;
      throw ContractViolation(msg.str());
    }
    row[j] = 1;
  }
  return row;
}

IndexSet support(std::span<const std::uint8_t> row) {
  IndexSet out;
  for (std::size_t j = 0; j < row.size(); ++j) {
    if (row[j] != 0) out.push_back(j);
  }
  return out;
}

Mask::Mask(std::size_t rows, std::size_t cols)
    : rows_(rows), cols_(cols), entries_(rows * cols, 0) {}

Mask::Mask(std::size_t rows, std::size_t cols, std::vector<std::uint8_t> entries)
    : rows_(rows), cols_(cols), entries_(std::move(entries)) {
  if (entries_.size() != rows * cols) {
    throw ContractViolation("Mask: entry count does not match rows*cols");
  }
  for (auto e : entries_) {
    if (e > 1) throw ContractViolation("Mask: entries must be 0 or 1");
  }
}

double Mask::column_frequency(std::size_t j) const {
  if (rows_ == 0) return 0.0;
  std::size_t c = 0;
  for (std::size_t i = 0; i < rows_; ++i) c += entries_[i * cols_ + j];
  return static_cast<double>(c) / static_cast<double>(rows_);
}

std::size_t Mask::count() const {
  return static_cast<std::size_t>(
      std::count(entries_.begin(), entries_.end(), std::uint8_t{1}));
}

bool is_nested(std::span<const std::uint8_t> inner,
               std::span<const std::uint8_t> outer) {
  if (inner.size() != outer.size()) return false;
  for (std::size_t j = 0; j < inner.size(); ++j) {
    if (inner[j] && !outer[j]) return false;
  }
  return true;
}

bool is_nested(const Mask& inner, const Mask& outer) {
  if (inner.rows() != outer.rows() || inner.cols() != outer.cols()) return false;
  for (std::size_t i = 0; i < inner.rows(); ++i) {
    if (!is_nested(inner.row(i), outer.row(i))) return false;
  }
  return true;
}

ObservedDataset::ObservedDataset(Matrix values, Mask mask, Vector responses,
                                 IndexSet observed_index_set,
                                 std::vector<std::string> column_names)
    : values_(std::move(values)),
      mask_(std::move(mask)),
      responses_(std::move(responses)),
      observed_(std::move(observed_index_set)),
      names_(std::move(column_names)) {
  if (mask_.rows() != rows() || mask_.cols() != cols()) {
    throw ContractViolation("ObservedDataset: mask shape does not match values");
  }
  if (static_cast<std::size_t>(responses_.size()) != rows()) {
    throw ContractViolation("ObservedDataset: response length does not match rows");
  }
  std::sort(observed_.begin(), observed_.end());
  observed_.erase(std::unique(observed_.begin(), observed_.end()), observed_.end());
  for (std::size_t j : observed_) {
    if (j >= cols()) throw ContractViolation("ObservedDataset: observed index out of range");
    for (std::size_t i = 0; i < rows(); ++i) {
      if (mask_(i, j)) {
        std::ostringstream msg;
        msg << "ObservedDataset: column " << j
            << " is declared always observed but row " << i << " is masked";
        throw ContractViolation(msg.str());
      }
    }
  }
  if (!names_.empty() && names_.size() != cols()) {
    throw ContractViolation("ObservedDataset: column name count does not match columns");
  }
}

ObservedDataset ObservedDataset::complete(Matrix values, Vector responses,
                                          IndexSet observed_index_set,
                                          std::vector<std::string> column_names) {
  Mask m(static_cast<std::size_t>(values.rows()), static_cast<std::size_t>(values.cols()));
  return ObservedDataset(std::move(values), std::move(m), std::move(responses),
                         std::move(observed_index_set), std::move(column_names));
}

double ObservedDataset::value(std::size_t i, std::size_t j) const {
  if (mask_(i, j)) {
    std::ostringstream msg;
    msg << "ObservedDataset: entry (" << i << ", " << j << ") is missing";
    throw ContractViolation(msg.str());
  }
  return values_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
}

Vector ObservedDataset::masked_row(std::size_t i) const {
  Vector row = values_.row(static_cast<Eigen::Index>(i)).transpose();
  auto m = mask_.row(i);
  for (std::size_t j = 0; j < m.size(); ++j) {
    if (m[j]) row(static_cast<Eigen::Index>(j)) = 0.0;
  }
  return row;
}

Vector ObservedDataset::always_observed(std::size_t i) const {
  Vector v(static_cast<Eigen::Index>(observed_.size()));
  for (std::size_t k = 0; k < observed_.size(); ++k) {
    v(static_cast<Eigen::Index>(k)) =
        values_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(observed_[k]));
  }
  return v;
}

ObservedDataset ObservedDataset::with_mask(Mask mask) const {
  return ObservedDataset(values_, std::move(mask), responses_, observed_, names_);
}

ObservedDataset ObservedDataset::select_rows(std::span<const std::size_t> rows) const {
  Matrix v(static_cast<Eigen::Index>(rows.size()), values_.cols());
  Vector y(static_cast<Eigen::Index>(rows.size()));
  std::vector<std::uint8_t> m;
  m.reserve(rows.size() * cols());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    v.row(static_cast<Eigen::Index>(r)) = values_.row(static_cast<Eigen::Index>(rows[r]));
    y(static_cast<Eigen::Index>(r)) = responses_(static_cast<Eigen::Index>(rows[r]));
    auto src = mask_.row(rows[r]);
    m.insert(m.end(), src.begin(), src.end());
  }
  return ObservedDataset(std::move(v), Mask(rows.size(), cols(), std::move(m)),
                         std::move(y), observed_, names_);
}

}  // namespace rsgd
