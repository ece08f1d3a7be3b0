#include "rsgd/bias_oracle.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <sstream>

#include "rsgd/parallel.hpp"

namespace rsgd {
namespace {

Eigen::Index idx(std::size_t i) { return static_cast<Eigen::Index>(i); }

constexpr std::size_t kRowsPerChunk = 32;

std::size_t replica_count(const Imputer& imputer, const OracleOptions& options) {
  return imputer.is_stochastic() ? std::max<std::size_t>(1, options.xi_draws) : 1;
}

void check_enumerable(std::size_t m) {
  if (m > kMaxEnumeratedColumns) {
    std::ostringstream msg;
    msg << "exact enumeration over " << m << " maskable columns exceeds the cap of "
        << kMaxEnumeratedColumns << "; use monte_carlo_bias instead";
    throw Error(msg.str());
  }
}

void check_shapes(const Matrix& X, const Vector& y, const Vector& w) {
  if (X.rows() == 0) throw ContractViolation("bias oracle: empty dataset");
  if (y.size() != X.rows()) throw ContractViolation("bias oracle: response length mismatch");
  if (w.size() != X.cols()) throw ContractViolation("bias oracle: parameter length mismatch");
}

// Sums per_sample(i, r) / replicas over rows in fixed-size chunks so the
// floating-point result does not depend on the thread count.
template <class PerSample>
GradientVector average_over_measure(std::size_t n, std::size_t replicas, Eigen::Index q,
                                    std::size_t threads, PerSample&& per_sample) {
  const std::size_t chunks = (n + kRowsPerChunk - 1) / kRowsPerChunk;
  std::vector<GradientVector> partial(chunks, GradientVector::Zero(q));
  parallel_chunks(chunks, threads, [&](std::size_t c) {
    const std::size_t end = std::min(n, (c + 1) * kRowsPerChunk);
    for (std::size_t i = c * kRowsPerChunk; i < end; ++i) {
      for (std::size_t r = 0; r < replicas; ++r) partial[c] += per_sample(i, r);
    }
  });
  GradientVector total = GradientVector::Zero(q);
  for (const auto& p : partial) total += p;
  return total / static_cast<double>(n * replicas);
}

std::vector<std::uint8_t> mask_from_bits(std::size_t d, const IndexSet& columns, std::size_t bits) {
  std::vector<std::uint8_t> row(d, 0);
  for (std::size_t t = 0; t < columns.size(); ++t) {
    if (bits >> t & 1U) row[columns[t]] = 1;
  }
  return row;
}

Vector scaled_intensities(const MechanismSpec& mechanism, const Vector& x, const IndexSet& columns,
                          double scale) {
  const Vector v = mechanism.observed_part(x);
  Vector lam(idx(columns.size()));
  for (std::size_t t = 0; t < columns.size(); ++t) {
    lam(idx(t)) = scale * marginal_intensity(mechanism, v, columns[t]);
    if (lam(idx(t)) > 1.0) {
      std::ostringstream msg;
      msg << "bias oracle: scaled intensity " << lam(idx(t)) << " on column " << columns[t]
          << " exceeds 1";
      throw InfeasibleMechanism(msg.str());
    }
  }
  return lam;
}

BiasReport make_report(GradientVector expectation, const GlmFamily& family, const Vector& w,
                       const Matrix& X, const Vector& y, double scale) {
  BiasReport report;
  report.bias = std::move(expectation) - empirical_risk_gradient(family, w, X, y);
  report.method = BiasMethod::kEnumerated;
  report.scale = scale;
  report.sample_count = static_cast<std::size_t>(X.rows());
  return report;
}

}  // namespace

std::size_t SubsetTable::index_of(const IndexSet& S) const {
  std::size_t bits = 0;
  for (std::size_t j : S) {
    auto it = std::find(columns.begin(), columns.end(), j);
    if (it == columns.end()) {
      std::ostringstream msg;
      msg << "SubsetTable: column " << j << " is not covered";
      throw ContractViolation(msg.str());
    }
    bits |= std::size_t{1} << static_cast<std::size_t>(it - columns.begin());
  }
  return bits;
}

IndexSet SubsetTable::subset(std::size_t bits) const {
  IndexSet S;
  for (std::size_t t = 0; t < columns.size(); ++t) {
    if (bits >> t & 1U) S.push_back(columns[t]);
  }
  std::sort(S.begin(), S.end());
  return S;
}

GradientVector subset_gradient(const GlmFamily& family, const Imputer& imputer, const Vector& w,
                               const Vector& x, double y, const IndexSet& S,
                               const RandomStream& xi) {
  const auto mask = subset_mask(S, static_cast<std::size_t>(x.size()));
  return gradient(family, w, imputer.impute(x, mask, xi), y);
}

SubsetGradientTable subset_gradient_table(const GlmFamily& family, const Imputer& imputer,
                                          const Vector& w, const Vector& x, double y,
                                          const IndexSet& columns, const RandomStream& xi) {
  check_enumerable(columns.size());
  const std::size_t d = static_cast<std::size_t>(x.size());
  SubsetGradientTable table;
  table.columns = columns;
  const std::size_t count = std::size_t{1} << columns.size();
  table.values.resize(count);
  for (std::size_t bits = 0; bits < count; ++bits) {
    const auto mask = mask_from_bits(d, columns, bits);
    table.values[bits] = gradient(family, w, imputer.impute(x, mask, xi), y);
  }
  return table;
}

SubsetTable finite_differences(const SubsetGradientTable& table) {
  const std::size_t count = std::size_t{1} << table.columns.size();
  if (table.values.size() != count) {
    throw ContractViolation("finite_differences: table does not cover every subset");
  }
  SubsetTable D = table;
  for (std::size_t t = 0; t < D.columns.size(); ++t) {
    const std::size_t bit = std::size_t{1} << t;
    for (std::size_t bits = 0; bits < count; ++bits) {
      if (bits & bit) D.values[bits] -= D.values[bits ^ bit];
    }
  }
  return D;
}

SubsetGradientTable reconstruct_from_differences(const SubsetTable& differences) {
  const std::size_t count = std::size_t{1} << differences.columns.size();
  if (differences.values.size() != count) {
    throw ContractViolation("reconstruct_from_differences: table does not cover every subset");
  }
  SubsetGradientTable G = differences;
  for (std::size_t t = 0; t < G.columns.size(); ++t) {
    const std::size_t bit = std::size_t{1} << t;
    for (std::size_t bits = 0; bits < count; ++bits) {
      if (bits & bit) G.values[bits] += G.values[bits ^ bit];
    }
  }
  return G;
}

BiasReport exact_bias(const GlmFamily& family, const Imputer& imputer, const Matrix& X,
                      const Vector& y, const MechanismSpec& mechanism, const Vector& w,
                      double scale, const OracleOptions& options) {
  check_shapes(X, y, w);
  const IndexSet columns = mechanism.maskable();
  check_enumerable(columns.size());
  const std::size_t count = std::size_t{1} << columns.size();
  const std::size_t replicas = replica_count(imputer, options);
  GradientVector expectation = average_over_measure(
      static_cast<std::size_t>(X.rows()), replicas, w.size(), options.threads,
      [&](std::size_t i, std::size_t r) {
        const Vector x = X.row(idx(i)).transpose();
        const Vector lam = scaled_intensities(mechanism, x, columns, scale);
        const auto G = subset_gradient_table(family, imputer, w, x, y(idx(i)), columns,
                                             options.xi.substream({i, r}));
        const auto D = finite_differences(G);
        GradientVector e = D.values[0];
        for (std::size_t bits = 1; bits < count; ++bits) {
          double rho = 1.0;
          for (std::size_t t = 0; t < columns.size(); ++t) {
            if (bits >> t & 1U) rho *= lam(idx(t));
          }
          if (rho != 0.0) e += rho * D.values[bits];
        }
        return e;
      });
  return make_report(std::move(expectation), family, w, X, y, scale);
}

BiasReport exact_bias_by_enumeration(const GlmFamily& family, const Imputer& imputer,
                                     const Matrix& X, const Vector& y,
                                     const MechanismSpec& mechanism, const Vector& w,
                                     double scale, const OracleOptions& options) {
  check_shapes(X, y, w);
  const IndexSet columns = mechanism.maskable();
  check_enumerable(columns.size());
  const std::size_t count = std::size_t{1} << columns.size();
  const std::size_t d = static_cast<std::size_t>(X.cols());
  const std::size_t replicas = replica_count(imputer, options);
  GradientVector expectation = average_over_measure(
      static_cast<std::size_t>(X.rows()), replicas, w.size(), options.threads,
      [&](std::size_t i, std::size_t r) {
        const Vector x = X.row(idx(i)).transpose();
        const Vector lam = scaled_intensities(mechanism, x, columns, scale);
        const RandomStream xi = options.xi.substream({i, r});
        GradientVector e = GradientVector::Zero(w.size());
        for (std::size_t bits = 0; bits < count; ++bits) {
          double prob = 1.0;
          for (std::size_t t = 0; t < columns.size(); ++t) {
            prob *= (bits >> t & 1U) ? lam(idx(t)) : 1.0 - lam(idx(t));
          }
          if (prob == 0.0) continue;
          const auto mask = mask_from_bits(d, columns, bits);
          e += prob * gradient(family, w, imputer.impute(x, mask, xi), y(idx(i)));
        }
        return e;
      });
  return make_report(std::move(expectation), family, w, X, y, scale);
}

BiasReport exact_bias_joint(const GlmFamily& family, const Imputer& imputer, const Matrix& X,
                            const Vector& y, const IndexSet& columns,
                            const std::vector<double>& joint_probability, const Vector& w,
                            const OracleOptions& options) {
  check_shapes(X, y, w);
  if (columns.size() > kMaxJointTableColumns) {
    throw Error("exact_bias_joint: joint tables are limited to 8 columns");
  }
  const std::size_t count = std::size_t{1} << columns.size();
  if (joint_probability.size() != count) {
    throw ContractViolation("exact_bias_joint: need one probability per subset");
  }
  double total = 0.0;
  for (double pr : joint_probability) {
    if (pr < 0.0) throw ContractViolation("exact_bias_joint: negative probability");
    total += pr;
  }
  if (std::abs(total - 1.0) > 1e-12) throw ContractViolation("exact_bias_joint: probabilities must sum to 1");

  // Co-missingness moments: P(all of S missing) = sum over supersets.
  std::vector<double> co = joint_probability;
  for (std::size_t t = 0; t < columns.size(); ++t) {
    const std::size_t bit = std::size_t{1} << t;
    for (std::size_t bits = 0; bits < count; ++bits) {
      if (!(bits & bit)) co[bits] += co[bits | bit];
    }
  }
  const std::size_t replicas = replica_count(imputer, options);
  GradientVector expectation = average_over_measure(
      static_cast<std::size_t>(X.rows()), replicas, w.size(), options.threads,
      [&](std::size_t i, std::size_t r) {
        const Vector x = X.row(idx(i)).transpose();
        const auto D = finite_differences(subset_gradient_table(family, imputer, w, x, y(idx(i)),
                                                                columns, options.xi.substream({i, r})));
        GradientVector e = GradientVector::Zero(w.size());
        for (std::size_t bits = 0; bits < count; ++bits) {
          if (co[bits] != 0.0) e += co[bits] * D.values[bits];
        }
        return e;
      });
  return make_report(std::move(expectation), family, w, X, y, 1.0);
}

SubsetTable multilinear_coefficients(const GlmFamily& family, const Imputer& imputer,
                                     const Matrix& X, const Vector& y,
                                     const MechanismSpec& mechanism, const Vector& w,
                                     const OracleOptions& options) {
  check_shapes(X, y, w);
  const IndexSet columns = mechanism.maskable();
  check_enumerable(columns.size());
  const std::size_t count = std::size_t{1} << columns.size();
  const std::size_t n = static_cast<std::size_t>(X.rows());
  const std::size_t replicas = replica_count(imputer, options);
  const std::size_t chunks = (n + kRowsPerChunk - 1) / kRowsPerChunk;
  std::vector<std::vector<GradientVector>> partial(
      chunks, std::vector<GradientVector>(count, GradientVector::Zero(w.size())));
  parallel_chunks(chunks, options.threads, [&](std::size_t c) {
    const std::size_t end = std::min(n, (c + 1) * kRowsPerChunk);
    for (std::size_t i = c * kRowsPerChunk; i < end; ++i) {
      const Vector x = X.row(idx(i)).transpose();
      const Vector v = mechanism.observed_part(x);
      Vector a(idx(columns.size()));
      for (std::size_t t = 0; t < columns.size(); ++t) a(idx(t)) = mechanism.intensity[columns[t]](v);
      for (std::size_t r = 0; r < replicas; ++r) {
        const auto D = finite_differences(subset_gradient_table(family, imputer, w, x, y(idx(i)),
                                                                columns, options.xi.substream({i, r})));
        for (std::size_t bits = 0; bits < count; ++bits) {
          double weight = 1.0;
          for (std::size_t t = 0; t < columns.size(); ++t) {
            if (bits >> t & 1U) weight *= a(idx(t));
          }
          partial[c][bits] += weight * D.values[bits];
        }
      }
    }
  });
  SubsetTable mu;
  mu.columns = columns;
  mu.values.assign(count, GradientVector::Zero(w.size()));
  for (const auto& part : partial) {
    for (std::size_t bits = 0; bits < count; ++bits) mu.values[bits] += part[bits];
  }
  for (auto& v : mu.values) v /= static_cast<double>(n * replicas);
  return mu;
}

GradientVector evaluate_multilinear(const SubsetTable& mu, const Vector& p) {
  GradientVector total = GradientVector::Zero(mu.values.empty() ? 0 : mu.values[0].size());
  for (std::size_t bits = 1; bits < mu.values.size(); ++bits) {
    double weight = 1.0;
    for (std::size_t t = 0; t < mu.columns.size(); ++t) {
      if (bits >> t & 1U) weight *= p(idx(mu.columns[t]));
    }
    total += weight * mu.values[bits];
  }
  return total;
}

BiasReport monte_carlo_bias(const GlmFamily& family, const Imputer& imputer, const Matrix& X,
                            const Vector& y, const MechanismSpec& mechanism, const Vector& w,
                            std::size_t n_draws, std::uint64_t seed, double scale,
                            const OracleOptions& options) {
  check_shapes(X, y, w);
  if (n_draws == 0) throw ContractViolation("monte_carlo_bias: need at least one draw");
  const std::size_t n = static_cast<std::size_t>(X.rows());
  const std::size_t d = static_cast<std::size_t>(X.cols());
  const std::size_t replicas = replica_count(imputer, options);
  const Matrix L = intensity_matrix(mechanism, X) * scale;
  const RandomStream base = RandomStream(seed).substream(StreamPurpose::kMonteCarlo);

  Vector mean = Vector::Zero(w.size());
  Vector m2 = Vector::Zero(w.size());
  std::vector<std::uint8_t> mask(d, 0);
  for (std::size_t t = 0; t < n_draws; ++t) {
    const std::size_t i = t % n;
    RandomStream s = base.substream(t);
    for (std::size_t j = 0; j < d; ++j) {
      const double lam = L(idx(i), idx(j));
      mask[j] = lam > 0.0 && s.bernoulli(lam) ? 1 : 0;
    }
    const std::size_t r = replicas == 1 ? 0 : static_cast<std::size_t>(s() % replicas);
    const Vector x = X.row(idx(i)).transpose();
    const GradientVector g = gradient(family, w, imputer.impute(x, mask, options.xi.substream({i, r})), y(idx(i)));
    const Vector delta = g - mean;
    mean += delta / static_cast<double>(t + 1);
    m2 += delta.cwiseProduct(g - mean);
  }
  BiasReport report;
  report.method = BiasMethod::kMonteCarlo;
  report.scale = scale;
  report.sample_count = n_draws;
  report.bias = mean - empirical_risk_gradient(family, w, X, y);
  if (n_draws > 1) {
    report.standard_error = (m2 / static_cast<double>(n_draws - 1) / static_cast<double>(n_draws)).cwiseSqrt();
  } else {
    report.standard_error = Vector::Zero(w.size());
  }
  report.max_standard_error = report.standard_error.size() ? report.standard_error.maxCoeff() : 0.0;
  return report;
}

BiasReport exact_combination_bias(const GlmFamily& family, const Imputer& imputer,
                                  const Matrix& X, const Vector& y,
                                  const MechanismSpec& mechanism, const Vector& w,
                                  const LevelCombination& combination, double scale,
                                  const OracleOptions& options) {
  check_shapes(X, y, w);
  const auto& C = combination.factors;
  const auto& alpha = combination.weights;
  if (C.empty() || C[0] != 1.0 || alpha.size() != C.size()) {
    throw ContractViolation("exact_combination_bias: factors must start at 1 and match the weights");
  }
  for (std::size_t l = 1; l < C.size(); ++l) {
    if (!(C[l] > C[l - 1])) throw ContractViolation("exact_combination_bias: factors must increase");
  }
  const MechanismSpec& thinning = combination.thinning_mechanism ? *combination.thinning_mechanism : mechanism;

  IndexSet columns = mechanism.maskable();
  for (std::size_t j : thinning.maskable()) {
    if (std::find(columns.begin(), columns.end(), j) == columns.end()) columns.push_back(j);
  }
  std::sort(columns.begin(), columns.end());
  check_enumerable(columns.size());
  const std::size_t m = columns.size();
  const std::size_t k = C.size() - 1;
  const std::size_t radix = k + 2;
  const bool coordinatewise = imputer.kind() == ImputerKind::kZero || imputer.kind() == ImputerKind::kMean;
  const bool separable = coordinatewise || (!combination.linked && !imputer.is_stochastic());
  double states_d = std::pow(static_cast<double>(radix), static_cast<double>(m));
  if (!separable && states_d > static_cast<double>(1u << 22)) {
    throw Error("exact_combination_bias: level enumeration too large; reduce order or columns");
  }
  const std::size_t states = static_cast<std::size_t>(states_d);
  const std::size_t d = static_cast<std::size_t>(X.cols());
  const std::size_t replicas = replica_count(imputer, options);

  GradientVector expectation = average_over_measure(
      static_cast<std::size_t>(X.rows()), replicas, w.size(), options.threads,
      [&](std::size_t i, std::size_t r) {
        const Vector x = X.row(idx(i)).transpose();
        const Vector v_true = mechanism.observed_part(x);
        const Vector v_thin = thinning.observed_part(x);
        // probs(t, s): coordinate columns[t] first missing at level s (s = k+1: never).
        Matrix probs(idx(m), idx(radix));
        for (std::size_t t = 0; t < m; ++t) {
          const double lam = scale * marginal_intensity(mechanism, v_true, columns[t]);
          const double lam_hat = scale * marginal_intensity(thinning, v_thin, columns[t]);
          double observed = 1.0 - lam;
          probs(idx(t), 0) = lam;
          for (std::size_t l = 1; l <= k; ++l) {
            const double keep = keep_probability(C[l - 1] * lam_hat, C[l] / C[l - 1]);
            const double next = observed * keep;
            probs(idx(t), idx(l)) = observed - next;
            observed = next;
          }
          probs(idx(t), idx(k + 1)) = observed;
        }
        const RandomStream xi = options.xi.substream({i, r});
        GradientVector e = GradientVector::Zero(w.size());
        if (separable) {
          // Each level depends on its own mask only: sum_l alpha_l E[g(M_l)].
          std::vector<std::uint8_t> mask(d, 0);
          for (std::size_t l = 0; l <= k; ++l) {
            Vector q(idx(m));
            for (std::size_t t = 0; t < m; ++t) q(idx(t)) = probs.row(idx(t)).head(idx(l + 1)).sum();
            for (std::size_t bits = 0; bits < (std::size_t{1} << m); ++bits) {
              double prob = 1.0;
              for (std::size_t t = 0; t < m; ++t) {
                const bool miss = (bits >> t) & 1u;
                prob *= miss ? q(idx(t)) : 1.0 - q(idx(t));
                mask[columns[t]] = miss ? 1 : 0;
              }
              if (prob == 0.0) continue;
              const Vector xt = combination.linked ? imputer.impute(x, mask, xi)
                                                   : imputer.impute(x, mask, xi.substream(kUnlinkedTag + l));
              e += alpha[l] * prob * gradient(family, w, xt, y(idx(i)));
            }
          }
          return e;
        }
        std::vector<std::size_t> level(m, 0);
        std::vector<std::vector<std::uint8_t>> masks(k + 1, std::vector<std::uint8_t>(d, 0));
        for (std::size_t code = 0; code < states; ++code) {
          std::size_t rest = code;
          double prob = 1.0;
          for (std::size_t t = 0; t < m; ++t) {
            level[t] = rest % radix;
            rest /= radix;
            prob *= probs(idx(t), idx(level[t]));
          }
          if (prob == 0.0) continue;
          for (std::size_t l = 0; l <= k; ++l) {
            for (std::size_t t = 0; t < m; ++t) masks[l][columns[t]] = level[t] <= l ? 1 : 0;
          }
          GradientVector combo = GradientVector::Zero(w.size());
          if (combination.linked) {
            const auto completed = linked_impute_levels(imputer, x, masks, xi);
            for (std::size_t l = 0; l <= k; ++l) combo += alpha[l] * gradient(family, w, completed[l], y(idx(i)));
          } else {
            for (std::size_t l = 0; l <= k; ++l) {
              const Vector xt = imputer.impute(x, masks[l], xi.substream(kUnlinkedTag + l));
              combo += alpha[l] * gradient(family, w, xt, y(idx(i)));
            }
          }
          e += prob * combo;
        }
        return e;
      });
  return make_report(std::move(expectation), family, w, X, y, scale);
}

}  // namespace rsgd
