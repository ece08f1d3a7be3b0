#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "rsgd/glm.hpp"
#include "rsgd/imputation.hpp"
#include "rsgd/mechanisms.hpp"
#include "rsgd/random.hpp"
#include "rsgd/richardson.hpp"
#include "rsgd/types.hpp"

namespace rsgd {

/// eta_k = c / (k + gamma) or a constant eta; k counts updates from 0.
struct StepSchedule {
  enum class Kind { kInverseTime, kConstant };

  Kind kind = Kind::kInverseTime;
  double c = 1.0;
  double gamma = 100.0;
  double eta = 1e-2;

  static StepSchedule inverse_time(double c, double gamma);
  /// Inverse-time schedule with eta_0 = eta0, i.e. c = eta0 * gamma.
  static StepSchedule inverse_time_from_initial(double eta0, double gamma);
  static StepSchedule constant(double eta);

  void validate() const;
  double operator()(std::size_t k) const;
  double initial() const { return (*this)(0); }

  /// Throws ContractViolation when eta_0 exceeds eta_max.
  void check_safety(double eta_max) const;
};

/// alpha / (6 beta^2) with alpha, beta the extreme eigenvalues of the sample
/// second-moment matrix plus the ridge.
double linear_step_bound(const Matrix& X, double ridge);

/// Stochastic gradient of sample i at w. `rng` is private to this visit.
using GradientEstimator =
    std::function<GradientVector(const Vector& w, std::size_t i, const RandomStream& rng)>;

struct SgdOptions {
  std::size_t epochs = 1;
  std::size_t batch = 1;
  std::uint64_t seed = 0;
  /// Empty means zero.
  Vector w0;
  /// Reference parameter for the PMSE trajectory; empty skips it.
  Vector w_star;
  /// Complete test fold for the test-loss trajectory; empty skips it.
  Matrix test_X;
  Vector test_y;
  GlmFamily family;
  std::string method;
  /// Abort when an iterate leaves this ball or turns non-finite.
  double divergence_bound = 1e8;
  bool record_timing = false;
};

struct RunRecord {
  std::string method;
  std::uint64_t seed = 0;
  /// Iterate after each epoch, index 0 = initialization.
  std::vector<Vector> iterates;
  std::vector<double> pmse;
  std::vector<double> test_loss;
  double wall_ms = 0.0;
  std::size_t updates = 0;
  /// visits[i] = number of times sample i was used.
  std::vector<std::size_t> visits;

  const Vector& final_iterate() const { return iterates.back(); }
  double final_pmse() const { return pmse.back(); }
};

class Divergence : public Error {
 public:
  using Error::Error;
};

/// Minibatch SGD over n samples. Each epoch reshuffles with the stream
/// (seed, kShuffle, epoch); the visit of sample i in epoch e receives
/// RandomStream(seed).substream({e, i}).
RunRecord run_sgd(const GradientEstimator& estimator, std::size_t n, const StepSchedule& schedule,
                  const SgdOptions& options);

GradientEstimator complete_estimator(const GlmFamily& family, const Matrix& X, const Vector& y);

/// Plain imputed gradient on the masked dataset.
GradientEstimator imputed_estimator(const GlmFamily& family, const Imputer& imputer,
                                    const ObservedDataset& data);

/// Richardson gradient: cascade-thin the row's mask with the intensities of
/// `thinning` (true or plug-in), impute once at the top level, restore
/// downward and combine. `linked = false` imputes each level independently.
GradientEstimator richardson_estimator(const GlmFamily& family, const Imputer& imputer,
                                       const ObservedDataset& data, const MechanismSpec& thinning,
                                       const RichardsonConfig& config, bool linked = true);

RunRecord run_richardson_sgd(const GlmFamily& family, const Imputer& imputer,
                             const MechanismSpec& thinning, const RichardsonConfig& config,
                             const ObservedDataset& data, const StepSchedule& schedule,
                             const SgdOptions& options);

struct ReferenceOptions {
  double tolerance = 1e-9;
  std::size_t max_iterations = 200000;
};

/// Minimizer of the ridge-penalized empirical risk by gradient descent with
/// backtracking. For the linear family the result is checked against the
/// closed form (S_n + ridge I)^{-1} b_n within 1e-8.
Vector reference_parameter(const GlmFamily& family, const Matrix& X, const Vector& y,
                           const ReferenceOptions& options = {}, const Vector* start = nullptr);

/// (S_n + ridge I)^{-1} b_n.
Vector ridge_closed_form(const Matrix& X, const Vector& y, double ridge);

/// |w - w_star|^2 / d.
double pmse(const Vector& w, const Vector& w_star);

/// Picks the grid value of eta_0 with the smallest final PMSE of
/// complete-data SGD. Ties go to the earlier grid entry.
double calibrate_learning_rate(const GlmFamily& family, const Matrix& X, const Vector& y,
                               const Vector& w_star, const std::vector<double>& grid,
                               double gamma, SgdOptions options);

}  // namespace rsgd
