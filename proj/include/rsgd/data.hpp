#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "rsgd/glm.hpp"
#include "rsgd/types.hpp"

namespace rsgd {

enum class CovarianceKind { kIdentity, kAr };

/// Gaussian synthetic design. The true parameter is drawn from N(0, I) and,
/// for logistic and Poisson, rescaled so that w' Sigma w equals
/// `signal_energy` (Poisson: log E[Y] = w' Sigma w / 2).
struct SyntheticSpec {
  std::string name;
  FamilyKind family = FamilyKind::kLinear;
  std::size_t d = 10;
  std::size_t n = 2000;
  std::size_t n_test = 1000;
  CovarianceKind covariance = CovarianceKind::kIdentity;
  double rho = 0.0;
  double noise_sd = 0.5;
  double signal_energy = 0.0;

  /// synth_a_linear, synth_b_linear, synth_a_logistic, synth_a_poisson, synth_b_poisson.
  static SyntheticSpec named(const std::string& name);
  static std::vector<std::string> names();

  Matrix covariance_matrix() const;
};

struct SyntheticData {
  Matrix X_train;
  Vector y_train;
  Matrix X_test;
  Vector y_test;
  Vector w_true;
};

/// Throws Error when the covariance is not SPD.
SyntheticData generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed);

/// Comma-separated file with a header row. Cells equal to `na_token` are
/// masked; the response column must be NA-free.
ObservedDataset load_csv(const std::filesystem::path& path, const std::string& response_column,
                         const std::string& na_token = "NA");

/// Writes covariates (masked entries as `na_token`) then the response, with
/// 17 significant digits and LF line endings.
void save_csv(const std::filesystem::path& path, const ObservedDataset& data,
              const std::string& response_column = "y", const std::string& na_token = "NA");

/// "%.17g".
std::string format_double(double value);

struct StandardizeTransform {
  Vector mean;
  Vector scale;
  /// Columns whose observed variance vanished; their scale is 1.
  std::vector<bool> flagged;
  bool response_scaled = false;
  double response_mean = 0.0;
  double response_scale = 1.0;
};

struct StandardizedPair {
  ObservedDataset train;
  ObservedDataset test;
  StandardizeTransform transform;
};

/// Column moments from the observed training entries only, applied to both
/// folds. `zscore_response` also standardizes the response (linear family).
StandardizedPair standardize(const ObservedDataset& train, const ObservedDataset& test,
                             bool zscore_response = false);

}  // namespace rsgd
