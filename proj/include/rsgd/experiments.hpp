#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "rsgd/config.hpp"
#include "rsgd/data.hpp"
#include "rsgd/glm.hpp"
#include "rsgd/imputation.hpp"
#include "rsgd/mechanisms.hpp"
#include "rsgd/sgd.hpp"

namespace rsgd {

/// complete | <imputer> | rich[K]-<imputer> | plugin-rich[K]-<imputer> |
/// unlinked-rich[K]-<imputer>; K defaults to 1.
struct MethodSpec {
  enum class Kind { kComplete, kImputed, kRichardson, kPlugIn, kUnlinked };

  Kind kind = Kind::kComplete;
  ImputerKind imputer = ImputerKind::kZero;
  std::size_t order = 0;
  std::string tag;

  static MethodSpec parse(const std::string& text);
};

struct ExperimentConfig {
  std::string dataset = "synth_a_linear";
  std::string csv_path;
  std::string csv_test_path;
  std::string response_column = "y";
  std::string na_token = "NA";
  std::size_t n = 2000;
  std::size_t n_test = 1000;
  /// Overrides the synthetic dimension when nonzero.
  std::size_t d = 0;
  std::uint64_t data_seed = 1;
  bool resample_per_seed = false;

  FamilyKind family = FamilyKind::kLinear;
  double ridge = 1e-3;

  /// mcar | hetero_mcar | smar | explicit
  std::string mechanism = "hetero_mcar";
  double mean_p = 0.2;
  IndexSet driving{0, 1};
  std::vector<double> explicit_p;

  ImputerOptions imputer_options;
  std::vector<std::string> methods{"complete", "zero", "rich-zero"};
  double C = 2.0;
  double delta_p = 0.0;
  double delta_q = 0.0;

  std::size_t epochs = 5;
  std::size_t batch = 64;
  /// 0 selects eta_0 from `eta_grid` by complete-data calibration.
  double eta0 = 0.0;
  std::vector<double> eta_grid{0.0025, 0.005, 0.01, 0.02, 0.04};
  double gamma = 100.0;
  std::string schedule = "inverse_time";
  /// none | auto | <number>
  std::string eta_max = "none";

  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  /// auto | generating | minimizer
  std::string reference = "auto";
  bool record_timing = false;
  std::size_t threads = 1;

  std::vector<double> sweep_scales{0.2, 0.4, 0.6, 0.8, 1.0};
  std::vector<std::size_t> sweep_orders{0, 1, 2};
  std::size_t sweep_rows = 200;
  std::string sweep_imputer = "zero";
  bool sweep_unlinked = false;
  std::size_t sweep_xi_draws = 8;
  std::size_t sweep_mc_draws = 0;

  std::vector<double> delta_p_grid{0.0, 0.05, 0.1, 0.15, 0.2, 0.3};
  std::vector<double> delta_q_grid{0.0, 0.05, 0.1, 0.15, 0.2, 0.3};
  std::string robustness_imputer = "zero";
  std::size_t robustness_order = 1;

  /// Reads every key (materializing defaults). Throws ConfigError on unknown
  /// keys or inconsistent values.
  static ExperimentConfig from(const Config& config);
  void validate() const;
};

struct PreparedData {
  std::string name;
  ObservedDataset train;
  Matrix X_train;
  Vector y_train;
  Matrix X_test;
  Vector y_test;
  MechanismSpec mechanism;
  Vector w_star;
  /// False when the file already carried NAs and no ground truth exists.
  bool has_complete_train = true;
};

/// Data, mask, mechanism and reference parameter for one data seed.
PreparedData prepare_data(const ExperimentConfig& config, std::uint64_t data_seed);

struct ResultRow {
  std::size_t run_id = 0;
  std::uint64_t seed = 0;
  std::string family;
  std::string dataset;
  std::string mechanism;
  std::string imputer;
  std::string method;
  std::size_t order = 0;
  std::size_t epoch = 0;
  double pmse = 0.0;
  double test_loss = 0.0;
  double wall_ms = 0.0;
};

struct RunFailure {
  std::size_t run_id = 0;
  std::uint64_t seed = 0;
  std::string method;
  std::string message;
};

struct ExperimentResult {
  std::vector<ResultRow> rows;
  std::vector<RunRecord> records;  // one per run_id, empty trajectory on failure
  std::vector<RunFailure> failures;
  double eta0 = 0.0;
  std::vector<std::string> notes;
};

inline constexpr const char* kResultsHeader =
    "run_id,seed,family,dataset,mechanism,imputer,method,order,epoch,pmse,test_loss,wall_ms";

/// Seeds x methods grid; run ids enumerate seeds (outer) then methods.
ExperimentResult run_experiment(const ExperimentConfig& config, std::ostream* log = nullptr);

void write_results_csv(std::ostream& out, const std::vector<ResultRow>& rows);

/// Final-epoch mean and sd of PMSE and test loss per method.
void write_summary_csv(std::ostream& out, const ExperimentResult& result);

double ols_slope(const std::vector<double>& x, const std::vector<double>& y);

/// log-log OLS slope of values against scales.
double loglog_slope(const std::vector<double>& scales, const std::vector<double>& values);

struct SweepRow {
  std::string estimator;
  std::size_t order = 0;
  bool linked = true;
  double scale = 0.0;
  double bias_norm = 0.0;
};

struct SweepSlope {
  std::string estimator;
  std::size_t order = 0;
  bool linked = true;
  double slope = 0.0;
  /// Bias below 1e-8 at every scale; the slope is not meaningful.
  bool exact_zero = false;
};

struct SweepResult {
  std::vector<SweepRow> rows;
  std::vector<SweepSlope> slopes;
};

/// Bias norms at w_star for t * p over the scale grid, per estimator order.
SweepResult bias_sweep(const ExperimentConfig& config, std::ostream* log = nullptr);
void write_sweep_csv(std::ostream& out, const SweepResult& result);
void write_slopes_csv(std::ostream& out, const SweepResult& result);

struct RobustnessRow {
  double delta_p = 0.0;
  double delta_q = 0.0;
  bool feasible = true;
  std::string message;
  double plain_mean = 0.0;
  double plain_sd = 0.0;
  double plugin_mean = 0.0;
  double plugin_sd = 0.0;
  std::size_t wins = 0;
  std::size_t runs = 0;
};

/// Plain imputation against plug-in Richardson with the estimated mechanism
/// perturbed over the delta grid; paired seeds.
std::vector<RobustnessRow> robustness_sweep(const ExperimentConfig& config, std::ostream* log = nullptr);
void write_robustness_csv(std::ostream& out, const std::vector<RobustnessRow>& rows);

/// Mechanism as config lines under `prefix` (kind, p, observed columns and
/// per-column intensity parameters), 1-based column numbers.
std::string mechanism_to_config(const MechanismSpec& spec, const std::string& prefix = "mechanism");

double mean_of(const std::vector<double>& v);
double sd_of(const std::vector<double>& v);

}  // namespace rsgd
