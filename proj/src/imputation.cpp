#include "rsgd/imputation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace rsgd {
namespace {

Eigen::Index idx(std::size_t i) { return static_cast<Eigen::Index>(i); }

// Ridge regression of y on Z with unpenalized intercept.
ColumnRegression fit_ridge(const Matrix& Z, const Vector& y, double ridge) {
  ColumnRegression r;
  const Vector zbar = Z.colwise().mean();
  const double ybar = y.mean();
  const Matrix Zc = Z.rowwise() - zbar.transpose();
  const Vector yc = y.array() - ybar;
  Matrix A = Zc.transpose() * Zc;
  A.diagonal().array() += ridge;
  r.coef = A.ldlt().solve(Zc.transpose() * yc);
  r.intercept = ybar - zbar.dot(r.coef);
  const Vector resid = yc - Zc * r.coef;
  r.residual_sd = std::sqrt(resid.squaredNorm() / static_cast<double>(std::max<Eigen::Index>(1, y.size())));
  return r;
}

}  // namespace

std::string to_string(ImputerKind kind) {
  switch (kind) {
    case ImputerKind::kZero: return "zero";
    case ImputerKind::kMean: return "mean";
    case ImputerKind::kKnn: return "knn";
    case ImputerKind::kIterativeRidge: return "iterative";
  }
  return "unknown";
}

ImputerKind parse_imputer_kind(const std::string& name) {
  if (name == "zero") return ImputerKind::kZero;
  if (name == "mean") return ImputerKind::kMean;
  if (name == "knn") return ImputerKind::kKnn;
  if (name == "iterative" || name == "iterative_ridge" || name == "mice") return ImputerKind::kIterativeRidge;
  throw Error("unknown imputer kind '" + name + "'");
}

Imputer fit_imputer(ImputerKind kind, const ObservedDataset& aux, const ImputerOptions& options) {
  if (aux.rows() == 0) throw Error("fit_imputer: auxiliary dataset is empty");
  Imputer imp;
  imp.kind_ = kind;
  imp.options_ = options;
  imp.dim_ = aux.cols();
  const std::size_t n = aux.rows();
  const std::size_t d = aux.cols();
  imp.means_ = Vector::Zero(idx(d));
  if (kind == ImputerKind::kZero) return imp;

  const Matrix& X = aux.oracle_values();
  for (std::size_t j = 0; j < d; ++j) {
    double s = 0.0;
    std::size_t c = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (!aux.is_missing(i, j)) {
        s += X(idx(i), idx(j));
        ++c;
      }
    }
    if (c == 0) {
      std::ostringstream msg;
      msg << "fit_imputer: column " << j;
      if (!aux.column_names().empty()) msg << " (" << aux.column_names()[j] << ")";
      msg << " has no observed entries";
      throw Error(msg.str());
    }
    imp.means_(idx(j)) = s / static_cast<double>(c);
  }

  if (kind == ImputerKind::kKnn) {
    imp.reference_ = Matrix(idx(n), idx(d));
    for (std::size_t i = 0; i < n; ++i) imp.reference_.row(idx(i)) = aux.masked_row(i).transpose();
    imp.reference_mask_ = aux.mask();
    return imp;
  }

  if (kind == ImputerKind::kIterativeRidge) {
    Matrix cur(idx(n), idx(d));
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < d; ++j) {
        cur(idx(i), idx(j)) = aux.is_missing(i, j) ? imp.means_(idx(j)) : X(idx(i), idx(j));
      }
    }
    imp.regressions_.assign(d, ColumnRegression{});
    const std::size_t rounds = std::max<std::size_t>(1, options.rounds);
    for (std::size_t round = 0; round < rounds; ++round) {
      for (std::size_t j = 0; j < d; ++j) {
        std::vector<std::size_t> obs_rows;
        for (std::size_t i = 0; i < n; ++i) {
          if (!aux.is_missing(i, j)) obs_rows.push_back(i);
        }
        Matrix Z(idx(obs_rows.size()), idx(d - 1));
        Vector y(idx(obs_rows.size()));
        for (std::size_t r = 0; r < obs_rows.size(); ++r) {
          std::size_t c = 0;
          for (std::size_t k = 0; k < d; ++k) {
            if (k == j) continue;
            Z(idx(r), idx(c++)) = cur(idx(obs_rows[r]), idx(k));
          }
          y(idx(r)) = cur(idx(obs_rows[r]), idx(j));
        }
        ColumnRegression reduced = d > 1 ? fit_ridge(Z, y, options.ridge) : ColumnRegression{};
        ColumnRegression full;
        full.intercept = d > 1 ? reduced.intercept : imp.means_(idx(j));
        full.residual_sd = reduced.residual_sd;
        full.coef = Vector::Zero(idx(d));
        std::size_t c = 0;
        for (std::size_t k = 0; k < d; ++k) {
          if (k == j) continue;
          full.coef(idx(k)) = reduced.coef(idx(c++));
        }
        imp.regressions_[j] = full;
        for (std::size_t i = 0; i < n; ++i) {
          if (aux.is_missing(i, j)) {
            cur(idx(i), idx(j)) = full.intercept + cur.row(idx(i)).dot(full.coef);
          }
        }
      }
    }
  }
  return imp;
}

Imputer zero_imputer(std::size_t d) {
  Matrix X = Matrix::Zero(1, idx(d));
  return fit_imputer(ImputerKind::kZero, ObservedDataset::complete(X, Vector::Zero(1)));
}

Vector Imputer::impute(const Vector& x, std::span<const std::uint8_t> mask_row,
                       const RandomStream& xi) const {
  if (static_cast<std::size_t>(x.size()) != dim_ || mask_row.size() != dim_) {
    throw ContractViolation("Imputer::impute: row dimension does not match the fitted imputer");
  }
  Vector out = x;
  bool any = false;
  for (std::size_t j = 0; j < dim_; ++j) {
    if (mask_row[j]) {
      out(idx(j)) = means_(idx(j));
      any = true;
    }
  }
  if (!any) return out;
  switch (kind_) {
    case ImputerKind::kZero:
    case ImputerKind::kMean:
      break;
    case ImputerKind::kKnn:
      impute_knn(out, mask_row);
      break;
    case ImputerKind::kIterativeRidge:
      impute_iterative(out, mask_row, xi);
      break;
  }
  return out;
}

void Imputer::impute_knn(Vector& out, std::span<const std::uint8_t> mask_row) const {
  const std::size_t n = static_cast<std::size_t>(reference_.rows());
  const double d = static_cast<double>(dim_);
  std::vector<double> dist(n, std::numeric_limits<double>::infinity());
  for (std::size_t r = 0; r < n; ++r) {
    auto ref_mask = reference_mask_.row(r);
    double s = 0.0;
    std::size_t shared = 0;
    for (std::size_t k = 0; k < dim_; ++k) {
      if (mask_row[k] || ref_mask[k]) continue;
      const double diff = out(idx(k)) - reference_(idx(r), idx(k));
      s += diff * diff;
      ++shared;
    }
    if (shared > 0) dist[r] = std::sqrt(s * d / static_cast<double>(shared));
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return dist[a] < dist[b]; });
  for (std::size_t j = 0; j < dim_; ++j) {
    if (!mask_row[j]) continue;
    double s = 0.0;
    std::size_t used = 0;
    for (std::size_t r : order) {
      if (used == options_.knn_k) break;
      if (!std::isfinite(dist[r])) break;
      if (reference_mask_(r, j)) continue;
      s += reference_(idx(r), idx(j));
      ++used;
    }
    if (used == 0) {
      fallbacks_->fetch_add(1);
      out(idx(j)) = means_(idx(j));
    } else {
      out(idx(j)) = s / static_cast<double>(used);
    }
  }
}

void Imputer::impute_iterative(Vector& out, std::span<const std::uint8_t> mask_row,
                               const RandomStream& xi) const {
  Vector noise = Vector::Zero(idx(dim_));
  if (options_.stochastic) {
    for (std::size_t j = 0; j < dim_; ++j) {
      if (!mask_row[j]) continue;
      RandomStream s = xi.substream(j);
      noise(idx(j)) = regressions_[j].residual_sd * s.normal();
    }
  }
  const std::size_t rounds = std::max<std::size_t>(1, options_.rounds);
  for (std::size_t round = 0; round < rounds; ++round) {
    for (std::size_t j = 0; j < dim_; ++j) {
      if (!mask_row[j]) continue;
      const auto& reg = regressions_[j];
      out(idx(j)) = reg.intercept + out.dot(reg.coef) + noise(idx(j));
    }
  }
}

LinkedImputationPair linked_impute(const Imputer& imputer, const Vector& x,
                                   std::span<const std::uint8_t> mask_p,
                                   std::span<const std::uint8_t> mask_Cp,
                                   const RandomStream& xi) {
  if (!is_nested(mask_p, mask_Cp)) {
    throw ContractViolation("linked_impute: mask at scale p is not contained in the thinned mask");
  }
  LinkedImputationPair pair;
  pair.x_tilde_Cp = imputer.impute(x, mask_Cp, xi);
  pair.x_tilde_p = pair.x_tilde_Cp;
  for (std::size_t j = 0; j < mask_p.size(); ++j) {
    if (!mask_p[j]) pair.x_tilde_p(idx(j)) = x(idx(j));
  }
  return pair;
}

std::vector<Vector> linked_impute_levels(const Imputer& imputer, const Vector& x,
                                         const std::vector<std::vector<std::uint8_t>>& levels,
                                         const RandomStream& xi) {
  if (levels.empty()) throw ContractViolation("linked_impute_levels: no levels");
  for (std::size_t l = 1; l < levels.size(); ++l) {
    if (!is_nested(levels[l - 1], levels[l])) {
      throw ContractViolation("linked_impute_levels: mask levels are not nested");
    }
  }
  std::vector<Vector> out(levels.size());
  out.back() = imputer.impute(x, levels.back(), xi);
  for (std::size_t l = levels.size() - 1; l-- > 0;) {
    out[l] = out[l + 1];
    for (std::size_t j = 0; j < levels[l].size(); ++j) {
      if (!levels[l][j] && levels[l + 1][j]) out[l](idx(j)) = x(idx(j));
    }
  }
  return out;
}

std::pair<Vector, Vector> unlinked_impute(const Imputer& imputer, const Vector& x,
                                          std::span<const std::uint8_t> mask_p,
                                          std::span<const std::uint8_t> mask_Cp,
                                          const RandomStream& xi1, const RandomStream& xi2) {
  return {imputer.impute(x, mask_p, xi1), imputer.impute(x, mask_Cp, xi2)};
}

}  // namespace rsgd
