#include "rsgd/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <ostream>
#include <sstream>

#include "rsgd/bias_oracle.hpp"
#include "rsgd/mech_estimation.hpp"
#include "rsgd/parallel.hpp"
#include "rsgd/richardson.hpp"

namespace rsgd {
namespace {

Eigen::Index idx(std::size_t i) { return static_cast<Eigen::Index>(i); }

bool is_synthetic(const std::string& name) {
  const auto names = SyntheticSpec::names();
  return std::find(names.begin(), names.end(), name) != names.end();
}

std::size_t parse_order(const std::string& text, const std::string& method) {
  if (text.empty()) return 1;
  std::size_t k = 0;
  for (char ch : text) {
    if (ch < '0' || ch > '9') throw ConfigError("bad Richardson order in method '" + method + "'");
    k = k * 10 + static_cast<std::size_t>(ch - '0');
  }
  if (k == 0) throw ConfigError("Richardson order must be at least 1 in method '" + method + "'");
  return k;
}

double round_half_even(double v) { return std::nearbyint(v); }

Matrix masked_matrix(const ObservedDataset& data) {
  Matrix X(idx(data.rows()), idx(data.cols()));
  for (std::size_t i = 0; i < data.rows(); ++i) X.row(idx(i)) = data.masked_row(i).transpose();
  return X;
}

MechanismSpec build_mechanism(const ExperimentConfig& config, const Matrix& X, std::uint64_t seed) {
  const std::size_t d = static_cast<std::size_t>(X.cols());
  const RandomStream rng(seed);
  if (config.mechanism == "mcar") return MechanismSpec::hmcar(Vector::Constant(idx(d), config.mean_p));
  if (config.mechanism == "hetero_mcar") return make_heterogeneous_mcar(d, config.mean_p, rng);
  if (config.mechanism == "smar") {
    for (std::size_t j : config.driving) {
      if (j >= d) throw ConfigError("mechanism.driving names a column beyond the data width");
    }
    return make_logistic_smar(X, config.driving, config.mean_p, rng);
  }
  if (config.mechanism == "explicit") {
    if (config.explicit_p.size() != d) throw ConfigError("mechanism.p must list one probability per column");
    return MechanismSpec::hmcar(Eigen::Map<const Vector>(config.explicit_p.data(), idx(d)));
  }
  throw ConfigError("unknown mechanism.kind '" + config.mechanism + "'");
}

struct Context {
  PreparedData data;
  Matrix X_masked;
  std::map<ImputerKind, Imputer> imputers;
  std::optional<MechanismEstimate> estimate;

  const Imputer& imputer(ImputerKind kind, const ImputerOptions& options) {
    auto it = imputers.find(kind);
    if (it == imputers.end()) it = imputers.emplace(kind, fit_imputer(kind, data.train, options)).first;
    return it->second;
  }

  const MechanismEstimate& mechanism_estimate() {
    if (!estimate) {
      estimate = estimate_mechanism(data.train.mask(), X_masked, data.mechanism.observed_index_set);
    }
    return *estimate;
  }
};

std::unique_ptr<Context> make_context(const ExperimentConfig& config, std::uint64_t data_seed) {
  auto ctx = std::make_unique<Context>();
  ctx->data = prepare_data(config, data_seed);
  ctx->X_masked = masked_matrix(ctx->data.train);
  return ctx;
}

std::string imputer_label(const MethodSpec& m) {
  return m.kind == MethodSpec::Kind::kComplete ? "none" : to_string(m.imputer);
}

RunRecord run_method(const ExperimentConfig& config, Context& ctx, const MethodSpec& method,
                     std::uint64_t seed, const StepSchedule& schedule, std::vector<std::string>* notes) {
  const GlmFamily family{config.family, config.ridge};
  SgdOptions options;
  options.epochs = config.epochs;
  options.batch = config.batch;
  options.seed = seed;
  options.w_star = ctx.data.w_star;
  options.test_X = ctx.data.X_test;
  options.test_y = ctx.data.y_test;
  options.family = family.without_ridge();
  options.method = method.tag;
  options.record_timing = config.record_timing;
  const std::size_t n = ctx.data.train.rows();

  switch (method.kind) {
    case MethodSpec::Kind::kComplete:
      if (!ctx.data.has_complete_train) throw Error("complete-data baseline needs a complete training fold");
      return run_sgd(complete_estimator(family, ctx.data.X_train, ctx.data.y_train), n, schedule, options);
    case MethodSpec::Kind::kImputed:
      return run_sgd(imputed_estimator(family, ctx.imputer(method.imputer, config.imputer_options), ctx.data.train),
                     n, schedule, options);
    case MethodSpec::Kind::kRichardson:
    case MethodSpec::Kind::kUnlinked: {
      const double peak = max_intensity(ctx.data.mechanism, ctx.X_masked).value;
      RichardsonConfig rc = default_ladder(method.order, peak, config.C);
      if (notes && rc.backoff_steps) notes->push_back(method.tag + ": ladder backed off to " + rc.describe());
      const bool linked = method.kind == MethodSpec::Kind::kRichardson;
      return run_sgd(richardson_estimator(family, ctx.imputer(method.imputer, config.imputer_options),
                                          ctx.data.train, ctx.data.mechanism, rc, linked),
                     n, schedule, options);
    }
    case MethodSpec::Kind::kPlugIn: {
      const MechanismEstimate est =
          perturb(ctx.mechanism_estimate(), config.delta_p, config.delta_q, RandomStream(seed), ctx.X_masked);
      const MechanismSpec plug = est.to_spec();
      const double peak = max_intensity(plug, ctx.X_masked).value;
      RichardsonConfig rc = default_ladder(method.order, peak, config.C);
      if (notes && rc.backoff_steps) notes->push_back(method.tag + ": ladder backed off to " + rc.describe());
      return run_sgd(richardson_estimator(family, ctx.imputer(method.imputer, config.imputer_options),
                                          ctx.data.train, plug, rc, true),
                     n, schedule, options);
    }
  }
  throw Error("unreachable method kind");
}

StepSchedule make_schedule(const ExperimentConfig& config, double eta0) {
  if (config.schedule == "constant") return StepSchedule::constant(eta0);
  if (config.schedule == "inverse_time") return StepSchedule::inverse_time_from_initial(eta0, config.gamma);
  throw ConfigError("unknown sgd.schedule '" + config.schedule + "'");
}

double resolve_eta0(const ExperimentConfig& config, Context& ctx, std::vector<std::string>& notes) {
  if (config.eta0 > 0.0) return config.eta0;
  if (!ctx.data.has_complete_train) {
    notes.push_back("learning-rate calibration skipped (no complete training fold); eta0=0.01");
    return 1e-2;
  }
  SgdOptions options;
  options.epochs = config.epochs;
  options.batch = config.batch;
  options.seed = config.seeds.front();
  const GlmFamily family{config.family, config.ridge};
  double best = 0.0;
  if (config.schedule == "constant") {
    double best_pmse = std::numeric_limits<double>::infinity();
    for (double eta : config.eta_grid) {
      options.w_star = ctx.data.w_star;
      try {
        const double v = run_sgd(complete_estimator(family, ctx.data.X_train, ctx.data.y_train),
                                 ctx.data.train.rows(), StepSchedule::constant(eta), options).final_pmse();
        if (v < best_pmse) {
          best_pmse = v;
          best = eta;
        }
      } catch (const Divergence&) {
      }
    }
  } else {
    best = calibrate_learning_rate(family, ctx.data.X_train, ctx.data.y_train, ctx.data.w_star,
                                   config.eta_grid, config.gamma, options);
  }
  notes.push_back("calibrated eta0=" + format_double(best));
  return best;
}

void check_step_safety(const ExperimentConfig& config, const Context& ctx, const StepSchedule& schedule,
                       std::vector<std::string>& notes) {
  if (config.eta_max == "none") return;
  if (config.eta_max == "auto") {
    if (config.family != FamilyKind::kLinear || !ctx.data.has_complete_train) {
      notes.push_back("warning: step safety bound unknown for this family; not checked");
      return;
    }
    schedule.check_safety(linear_step_bound(ctx.data.X_train, config.ridge));
    return;
  }
  double bound = 0.0;
  try {
    bound = std::stod(config.eta_max);
  } catch (const std::exception&) {
    throw ConfigError("sgd.eta_max must be none, auto or a number");
  }
  schedule.check_safety(bound);
}

void check_known(const Config& config) {
  const auto unused = config.unused_keys();
  if (!unused.empty()) {
    std::string msg = "unknown config keys:";
    for (const auto& k : unused) msg += " " + k;
    throw ConfigError(msg);
  }
}

}  // namespace

MethodSpec MethodSpec::parse(const std::string& text) {
  MethodSpec m;
  m.tag = text;
  if (text == "complete") return m;
  auto imputer_of = [&](const std::string& name) {
    try {
      return parse_imputer_kind(name);
    } catch (const Error&) {
      throw ConfigError("unknown imputer in method '" + text + "'");
    }
  };
  std::string rest = text;
  MethodSpec::Kind kind = Kind::kRichardson;
  if (rest.rfind("plugin-", 0) == 0) {
    kind = Kind::kPlugIn;
    rest = rest.substr(7);
  } else if (rest.rfind("unlinked-", 0) == 0) {
    kind = Kind::kUnlinked;
    rest = rest.substr(9);
  }
  if (rest.rfind("rich", 0) == 0) {
    const auto dash = rest.find('-');
    if (dash == std::string::npos) throw ConfigError("method '" + text + "' names no imputer");
    m.kind = kind;
    m.order = parse_order(rest.substr(4, dash - 4), text);
    m.imputer = imputer_of(rest.substr(dash + 1));
    return m;
  }
  if (kind != Kind::kRichardson) throw ConfigError("method '" + text + "' is not a Richardson method");
  m.kind = Kind::kImputed;
  m.imputer = imputer_of(rest);
  return m;
}

ExperimentConfig ExperimentConfig::from(const Config& c) {
  ExperimentConfig e;
  e.dataset = c.get_string("dataset.name", e.dataset);
  e.csv_path = c.get_string("dataset.path", "");
  e.csv_test_path = c.get_string("dataset.test_path", "");
  e.response_column = c.get_string("dataset.response", e.response_column);
  e.na_token = c.get_string("dataset.na_token", e.na_token);
  e.n = static_cast<std::size_t>(c.get_int("dataset.n", static_cast<std::int64_t>(e.n)));
  e.n_test = static_cast<std::size_t>(c.get_int("dataset.n_test", static_cast<std::int64_t>(e.n_test)));
  e.d = static_cast<std::size_t>(c.get_int("dataset.d", 0));
  e.data_seed = static_cast<std::uint64_t>(c.get_int("dataset.seed", static_cast<std::int64_t>(e.data_seed)));
  e.resample_per_seed = c.get_bool("dataset.resample_per_seed", e.resample_per_seed);

  const std::string default_family = is_synthetic(e.dataset) ? to_string(SyntheticSpec::named(e.dataset).family) : "linear";
  try {
    e.family = parse_family_kind(c.get_string("family.kind", default_family));
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& err) {
    throw ConfigError(err.what());
  }
  e.ridge = c.get_double("family.ridge", e.ridge);

  e.mechanism = c.get_string("mechanism.kind", e.mechanism);
  e.mean_p = c.get_double("mechanism.mean_p", e.mean_p);
  e.driving.clear();
  for (double v : c.get_doubles("mechanism.driving", {1.0, 2.0})) {
    if (v < 1.0 || std::floor(v) != v) throw ConfigError("mechanism.driving uses 1-based column numbers");
    e.driving.push_back(static_cast<std::size_t>(v) - 1);
  }
  e.explicit_p = c.get_doubles("mechanism.p", {});

  e.imputer_options.knn_k = static_cast<std::size_t>(c.get_int("imputer.knn_k", 5));
  e.imputer_options.rounds = static_cast<std::size_t>(c.get_int("imputer.rounds", 5));
  e.imputer_options.ridge = c.get_double("imputer.ridge", 1e-3);
  e.imputer_options.stochastic = c.get_bool("imputer.stochastic", false);

  e.methods = c.get_strings("methods", e.methods);
  e.C = c.get_double("richardson.C", e.C);
  e.delta_p = c.get_double("plugin.delta_p", e.delta_p);
  e.delta_q = c.get_double("plugin.delta_q", e.delta_q);

  e.epochs = static_cast<std::size_t>(c.get_int("sgd.epochs", static_cast<std::int64_t>(e.epochs)));
  e.batch = static_cast<std::size_t>(c.get_int("sgd.batch", static_cast<std::int64_t>(e.batch)));
  const std::string eta0 = c.get_string("sgd.eta0", "auto");
  if (eta0 != "auto") {
    try {
      e.eta0 = std::stod(eta0);
    } catch (const std::exception&) {
      throw ConfigError("sgd.eta0 must be 'auto' or a number");
    }
    if (!(e.eta0 > 0.0)) throw ConfigError("sgd.eta0 must be positive");
  }
  e.eta_grid = c.get_doubles("sgd.eta_grid", e.eta_grid);
  e.gamma = c.get_double("sgd.gamma", e.gamma);
  e.schedule = c.get_string("sgd.schedule", e.schedule);
  e.eta_max = c.get_string("sgd.eta_max", e.eta_max);

  const auto base = c.get_int("run.seed", 1);
  const auto count = c.get_int("run.n_seeds", 5);
  if (count < 1) throw ConfigError("run.n_seeds must be at least 1");
  std::vector<double> default_seeds;
  for (std::int64_t k = 0; k < count; ++k) default_seeds.push_back(static_cast<double>(base + k));
  e.seeds.clear();
  for (double s : c.get_doubles("run.seeds", default_seeds)) {
    if (s < 0 || std::floor(s) != s) throw ConfigError("run.seeds must be nonnegative integers");
    e.seeds.push_back(static_cast<std::uint64_t>(s));
  }
  e.threads = static_cast<std::size_t>(std::max<std::int64_t>(1, c.get_int("run.threads", 1)));
  e.reference = c.get_string("reference.kind", e.reference);
  e.record_timing = c.get_bool("output.record_timing", e.record_timing);

  e.sweep_scales = c.get_doubles("sweep.scales", e.sweep_scales);
  e.sweep_orders.clear();
  for (double v : c.get_doubles("sweep.orders", {0.0, 1.0, 2.0})) e.sweep_orders.push_back(static_cast<std::size_t>(v));
  e.sweep_rows = static_cast<std::size_t>(c.get_int("sweep.rows", static_cast<std::int64_t>(e.sweep_rows)));
  e.sweep_imputer = c.get_string("sweep.imputer", e.sweep_imputer);
  e.sweep_unlinked = c.get_bool("sweep.unlinked", e.sweep_unlinked);
  e.sweep_xi_draws = static_cast<std::size_t>(c.get_int("sweep.xi_draws", static_cast<std::int64_t>(e.sweep_xi_draws)));
  e.sweep_mc_draws = static_cast<std::size_t>(c.get_int("sweep.mc_draws", 0));

  e.delta_p_grid = c.get_doubles("robustness.delta_p", e.delta_p_grid);
  e.delta_q_grid = c.get_doubles("robustness.delta_q", e.delta_q_grid);
  e.robustness_imputer = c.get_string("robustness.imputer", e.robustness_imputer);
  e.robustness_order = static_cast<std::size_t>(c.get_int("robustness.order", 1));

  check_known(c);
  e.validate();
  return e;
}

void ExperimentConfig::validate() const {
  if (!is_synthetic(dataset) && dataset != "csv") throw ConfigError("unknown dataset.name '" + dataset + "'");
  if (dataset == "csv" && csv_path.empty()) throw ConfigError("dataset.name=csv needs dataset.path");
  if (n == 0) throw ConfigError("dataset.n must be positive");
  if (!(mean_p >= 0.0 && mean_p < 1.0)) throw ConfigError("mechanism.mean_p must lie in [0,1)");
  if (!(C > 1.0)) throw ConfigError("richardson.C must exceed 1");
  if (epochs == 0 || batch == 0) throw ConfigError("sgd.epochs and sgd.batch must be positive");
  if (seeds.empty()) throw ConfigError("no seeds");
  if (methods.empty()) throw ConfigError("no methods");
  for (const auto& m : methods) MethodSpec::parse(m);
  if (schedule != "inverse_time" && schedule != "constant") throw ConfigError("unknown sgd.schedule '" + schedule + "'");
  if (schedule == "inverse_time" && !(gamma > 0.0)) throw ConfigError("sgd.gamma must be positive");
  if (reference != "auto" && reference != "generating" && reference != "minimizer") {
    throw ConfigError("reference.kind must be auto, generating or minimizer");
  }
  if (delta_p < 0.0 || delta_q < 0.0) throw ConfigError("plug-in perturbations must be nonnegative");
  for (double t : sweep_scales) {
    if (!(t > 0.0)) throw ConfigError("sweep.scales must be positive");
  }
}

PreparedData prepare_data(const ExperimentConfig& config, std::uint64_t data_seed) {
  PreparedData out;
  out.name = config.dataset;
  const GlmFamily family{config.family, config.ridge};
  Matrix X_train, X_test;
  Vector y_train, y_test;
  Vector w_generating;
  Mask file_mask;
  bool file_has_na = false;
  if (is_synthetic(config.dataset)) {
    SyntheticSpec spec = SyntheticSpec::named(config.dataset);
    spec.family = config.family;
    spec.n = config.n;
    spec.n_test = config.n_test;
    if (config.d) spec.d = config.d;
    const SyntheticData s = generate_synthetic(spec, data_seed);
    X_train = s.X_train;
    y_train = s.y_train;
    X_test = s.X_test;
    y_test = s.y_test;
    w_generating = s.w_true;
  } else {
    ObservedDataset all = load_csv(config.csv_path, config.response_column, config.na_token);
    ObservedDataset train, test;
    if (!config.csv_test_path.empty()) {
      train = all;
      test = load_csv(config.csv_test_path, config.response_column, config.na_token);
    } else {
      const std::size_t n_test = std::min(config.n_test, all.rows() / 3);
      std::vector<std::size_t> tr, te;
      for (std::size_t i = 0; i < all.rows(); ++i) (i < all.rows() - n_test ? tr : te).push_back(i);
      train = all.select_rows(tr);
      test = all.select_rows(te);
    }
    if (!test.is_complete()) throw Error("the test fold must not contain missing values");
    auto st = standardize(train, test, config.family == FamilyKind::kLinear);
    file_has_na = !st.train.is_complete();
    file_mask = st.train.mask();
    X_train = masked_matrix(st.train);
    y_train = st.train.responses();
    X_test = st.test.oracle_values();
    y_test = st.test.responses();
    if (config.family == FamilyKind::kPoisson) {
      // Counts rescaled to mean about 2, ties rounded to even.
      const double m = y_train.mean();
      if (!(m > 0.0)) throw Error("Poisson response has nonpositive mean");
      y_train = y_train.unaryExpr([m](double v) { return round_half_even(v * 2.0 / m); });
      y_test = y_test.unaryExpr([m](double v) { return round_half_even(v * 2.0 / m); });
    }
  }
  family.validate_responses(y_train);
  out.X_test = X_test;
  out.y_test = y_test;
  out.X_train = X_train;
  out.y_train = y_train;

  if (file_has_na) {
    out.has_complete_train = false;
    out.train = ObservedDataset(X_train, file_mask, y_train);
    const Vector p = estimate_p(file_mask);
    out.mechanism = MechanismSpec::hmcar(p);
  } else {
    out.mechanism = build_mechanism(config, X_train, data_seed);
    const Mask mask = sample_mask(out.mechanism, X_train, RandomStream(data_seed));
    out.train = ObservedDataset(X_train, mask, y_train, out.mechanism.observed_index_set);
  }

  std::string ref = config.reference;
  if (ref == "auto") ref = w_generating.size() ? "generating" : "minimizer";
  if (ref == "generating") {
    if (!w_generating.size()) throw ConfigError("reference.kind=generating needs a synthetic dataset");
    out.w_star = w_generating;
  } else {
    if (!out.has_complete_train) throw Error("reference minimizer needs a complete training fold");
    out.w_star = reference_parameter(family, X_train, y_train);
  }
  return out;
}

ExperimentResult run_experiment(const ExperimentConfig& config, std::ostream* log) {
  config.validate();
  ExperimentResult result;
  std::vector<MethodSpec> methods;
  for (const auto& m : config.methods) methods.push_back(MethodSpec::parse(m));

  std::unique_ptr<Context> shared;
  if (!config.resample_per_seed) shared = make_context(config, config.data_seed);
  std::unique_ptr<Context> first = shared ? nullptr : make_context(config, config.seeds.front());
  Context& calib = shared ? *shared : *first;
  result.eta0 = resolve_eta0(config, calib, result.notes);
  const StepSchedule schedule = make_schedule(config, result.eta0);
  check_step_safety(config, calib, schedule, result.notes);
  if (shared) {
    // Fit everything up front so worker threads only read.
    for (const auto& m : methods) {
      if (m.kind != MethodSpec::Kind::kComplete) shared->imputer(m.imputer, config.imputer_options);
      if (m.kind == MethodSpec::Kind::kPlugIn) shared->mechanism_estimate();
    }
  }

  const std::size_t n_methods = methods.size();
  const std::size_t n_runs = config.seeds.size() * n_methods;
  result.records.resize(n_runs);
  std::vector<std::optional<RunFailure>> failures(n_runs);
  std::vector<std::vector<std::string>> notes(config.seeds.size());
  parallel_chunks(config.seeds.size(), config.threads, [&](std::size_t s) {
    const std::uint64_t seed = config.seeds[s];
    std::unique_ptr<Context> own;
    if (!shared) own = make_context(config, seed);
    Context& ctx = shared ? *shared : *own;
    for (std::size_t m = 0; m < n_methods; ++m) {
      const std::size_t run_id = s * n_methods + m;
      try {
        result.records[run_id] = run_method(config, ctx, methods[m], seed, schedule, s == 0 ? &notes[s] : nullptr);
      } catch (const std::exception& err) {
        failures[run_id] = RunFailure{run_id, seed, methods[m].tag, err.what()};
      }
    }
  });
  for (auto& n : notes) result.notes.insert(result.notes.end(), n.begin(), n.end());

  for (std::size_t run_id = 0; run_id < n_runs; ++run_id) {
    const MethodSpec& m = methods[run_id % n_methods];
    const std::uint64_t seed = config.seeds[run_id / n_methods];
    if (failures[run_id]) {
      result.failures.push_back(*failures[run_id]);
      continue;
    }
    const RunRecord& rec = result.records[run_id];
    for (std::size_t e = 0; e < rec.iterates.size(); ++e) {
      ResultRow row;
      row.run_id = run_id;
      row.seed = seed;
      row.family = to_string(config.family);
      row.dataset = config.dataset;
      row.mechanism = config.mechanism;
      row.imputer = imputer_label(m);
      row.method = m.tag;
      row.order = m.order;
      row.epoch = e;
      row.pmse = rec.pmse.empty() ? std::nan("") : rec.pmse[e];
      row.test_loss = rec.test_loss.empty() ? std::nan("") : rec.test_loss[e];
      row.wall_ms = e + 1 == rec.iterates.size() ? rec.wall_ms : 0.0;
      result.rows.push_back(std::move(row));
    }
  }
  if (log) {
    for (const auto& n : result.notes) *log << n << '\n';
    for (const auto& f : result.failures) {
      *log << "run " << f.run_id << " (seed " << f.seed << ", " << f.method << ") failed: " << f.message << '\n';
    }
  }
  return result;
}

void write_results_csv(std::ostream& out, const std::vector<ResultRow>& rows) {
  out << kResultsHeader << '\n';
  for (const auto& r : rows) {
    out << r.run_id << ',' << r.seed << ',' << r.family << ',' << r.dataset << ',' << r.mechanism << ','
        << r.imputer << ',' << r.method << ',' << r.order << ',' << r.epoch << ',' << format_double(r.pmse)
        << ',' << format_double(r.test_loss) << ',' << format_double(r.wall_ms) << '\n';
  }
}

std::string mechanism_to_config(const MechanismSpec& spec, const std::string& prefix) {
  auto join = [](const Vector& v) {
    std::string s;
    for (Eigen::Index i = 0; i < v.size(); ++i) s += (i ? "," : "") + format_double(v(i));
    return s;
  };
  std::ostringstream out;
  out << prefix << ".kind=" << (spec.kind == MechanismKind::kHmcar ? "hmcar" : "smar") << '\n';
  out << prefix << ".p=" << join(spec.p) << '\n';
  if (spec.kind == MechanismKind::kSmar) {
    out << prefix << ".observed=";
    for (std::size_t k = 0; k < spec.observed_index_set.size(); ++k) {
      out << (k ? "," : "") << spec.observed_index_set[k] + 1;
    }
    out << '\n';
    for (std::size_t j = 0; j < spec.intensity.size(); ++j) {
      const Intensity& q = spec.intensity[j];
      const std::string key = prefix + ".q" + std::to_string(j + 1);
      if (q.constant) {
        out << key << "=unit\n";
        continue;
      }
      out << key << ".coef=" << join(q.coef) << '\n'
          << key << ".intercept=" << format_double(q.intercept) << '\n'
          << key << ".normalizer=" << format_double(q.normalizer) << '\n'
          << key << ".shift=" << format_double(q.shift) << '\n';
    }
  }
  return out.str();
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return std::nan("");
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double sd_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

void write_summary_csv(std::ostream& out, const ExperimentResult& result) {
  std::vector<std::string> order;
  std::map<std::string, std::vector<double>> pm, tl;
  std::size_t last_epoch = 0;
  for (const auto& r : result.rows) last_epoch = std::max(last_epoch, r.epoch);
  for (const auto& r : result.rows) {
    if (r.epoch != last_epoch) continue;
    if (!pm.count(r.method)) order.push_back(r.method);
    pm[r.method].push_back(r.pmse);
    tl[r.method].push_back(r.test_loss);
  }
  out << "method,runs,pmse_mean,pmse_sd,test_loss_mean,test_loss_sd\n";
  for (const auto& m : order) {
    out << m << ',' << pm[m].size() << ',' << format_double(mean_of(pm[m])) << ',' << format_double(sd_of(pm[m]))
        << ',' << format_double(mean_of(tl[m])) << ',' << format_double(sd_of(tl[m])) << '\n';
  }
}

double ols_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw ContractViolation("ols_slope: need two or more paired points");
  const double mx = mean_of(x);
  const double my = mean_of(y);
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  if (sxx == 0.0) throw ContractViolation("ols_slope: constant abscissa");
  return sxy / sxx;
}

double loglog_slope(const std::vector<double>& scales, const std::vector<double>& values) {
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < scales.size(); ++i) {
    if (!(values[i] > 0.0)) throw ContractViolation("loglog_slope: nonpositive value");
    lx.push_back(std::log(scales[i]));
    ly.push_back(std::log(values[i]));
  }
  return ols_slope(lx, ly);
}

SweepResult bias_sweep(const ExperimentConfig& config, std::ostream* log) {
  config.validate();
  const PreparedData data = prepare_data(config, config.data_seed);
  if (!data.has_complete_train) throw Error("bias-sweep needs a complete training fold");
  const std::size_t rows = std::min(config.sweep_rows, static_cast<std::size_t>(data.X_train.rows()));
  const Matrix X = data.X_train.topRows(idx(rows));
  const Vector y = data.y_train.head(idx(rows));
  const GlmFamily family{config.family, config.ridge};
  ImputerKind kind;
  try {
    kind = parse_imputer_kind(config.sweep_imputer);
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  const Imputer imputer = fit_imputer(kind, data.train, config.imputer_options);
  OracleOptions options;
  options.xi_draws = config.sweep_xi_draws;
  options.threads = config.threads;
  const double t_max = *std::max_element(config.sweep_scales.begin(), config.sweep_scales.end());
  const double peak = max_intensity(data.mechanism, X).value * t_max;

  SweepResult result;
  auto add_series = [&](const std::string& name, std::size_t order, bool linked, auto&& eval) {
    std::vector<double> norms;
    for (double t : config.sweep_scales) {
      const double v = eval(t);
      norms.push_back(v);
      result.rows.push_back({name, order, linked, t, v});
    }
    SweepSlope s{name, order, linked, std::nan(""), false};
    const double worst = *std::max_element(norms.begin(), norms.end());
    if (worst < 1e-8) {
      s.exact_zero = true;
    } else {
      s.slope = loglog_slope(config.sweep_scales, norms);
    }
    if (log) {
      *log << name << ": " << (s.exact_zero ? std::string("exact zero") : "slope " + format_double(s.slope)) << '\n';
    }
    result.slopes.push_back(s);
  };
  for (std::size_t order : config.sweep_orders) {
    if (order == 0) {
      add_series("plain", 0, true, [&](double t) {
        if (config.sweep_mc_draws > 0) {
          return monte_carlo_bias(family, imputer, X, y, data.mechanism, data.w_star, config.sweep_mc_draws,
                                  config.data_seed, t, options).bias.norm();
        }
        return exact_bias(family, imputer, X, y, data.mechanism, data.w_star, t, options).bias.norm();
      });
      continue;
    }
    RichardsonConfig rc = default_ladder(order, peak, config.C);
    if (log && rc.backoff_steps) *log << "rich" << order << ": ladder backed off to " << rc.describe() << '\n';
    for (bool linked : {true, false}) {
      if (!linked && !config.sweep_unlinked) continue;
      const std::string name = (linked ? "rich" : "unlinked-rich") + std::to_string(order);
      add_series(name, order, linked, [&](double t) {
        return richardson_bias(family, imputer, X, y, data.mechanism, data.w_star, rc, t, linked, nullptr, options)
            .bias.norm();
      });
    }
  }
  return result;
}

void write_sweep_csv(std::ostream& out, const SweepResult& result) {
  out << "estimator,order,linked,scale,bias_norm\n";
  for (const auto& r : result.rows) {
    out << r.estimator << ',' << r.order << ',' << (r.linked ? 1 : 0) << ',' << format_double(r.scale) << ','
        << format_double(r.bias_norm) << '\n';
  }
}

void write_slopes_csv(std::ostream& out, const SweepResult& result) {
  out << "estimator,order,linked,slope,exact_zero\n";
  for (const auto& s : result.slopes) {
    out << s.estimator << ',' << s.order << ',' << (s.linked ? 1 : 0) << ','
        << (s.exact_zero ? std::string("NA") : format_double(s.slope)) << ',' << (s.exact_zero ? 1 : 0) << '\n';
  }
}

std::vector<RobustnessRow> robustness_sweep(const ExperimentConfig& config, std::ostream* log) {
  ExperimentConfig base = config;
  const std::string imp = config.robustness_imputer;
  const std::string plain = imp;
  const std::string plugin = "plugin-rich" + std::to_string(config.robustness_order) + "-" + imp;
  base.methods = {plain};
  const ExperimentResult plain_runs = run_experiment(base, log);
  std::map<std::uint64_t, double> plain_pmse;
  for (std::size_t s = 0; s < config.seeds.size(); ++s) {
    if (!plain_runs.records[s].pmse.empty()) plain_pmse[config.seeds[s]] = plain_runs.records[s].final_pmse();
  }
  std::vector<double> plain_values;
  for (const auto& [seed, v] : plain_pmse) plain_values.push_back(v);

  std::vector<RobustnessRow> rows;
  for (double dq : config.delta_q_grid) {
    for (double dp : config.delta_p_grid) {
      RobustnessRow row;
      row.delta_p = dp;
      row.delta_q = dq;
      ExperimentConfig c = base;
      c.methods = {plugin};
      c.delta_p = dp;
      c.delta_q = dq;
      c.eta0 = plain_runs.eta0;
      const ExperimentResult r = run_experiment(c, nullptr);
      std::vector<double> plug_values, paired_plain;
      for (std::size_t s = 0; s < config.seeds.size(); ++s) {
        if (r.records[s].pmse.empty() || !plain_pmse.count(config.seeds[s])) continue;
        const double v = r.records[s].final_pmse();
        plug_values.push_back(v);
        paired_plain.push_back(plain_pmse[config.seeds[s]]);
        if (v < plain_pmse[config.seeds[s]]) ++row.wins;
      }
      row.runs = plug_values.size();
      if (!r.failures.empty()) {
        row.feasible = false;
        row.message = r.failures.front().message;
      }
      row.plain_mean = mean_of(paired_plain.empty() ? plain_values : paired_plain);
      row.plain_sd = sd_of(paired_plain.empty() ? plain_values : paired_plain);
      row.plugin_mean = mean_of(plug_values);
      row.plugin_sd = sd_of(plug_values);
      if (log) {
        *log << "delta_p=" << dp << " delta_q=" << dq << ": "
             << "wins " << row.wins << "/" << row.runs;
        if (!row.feasible) *log << ", " << r.failures.size() << " infeasible (" << row.message << ")";
        *log << '\n';
      }
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

void write_robustness_csv(std::ostream& out, const std::vector<RobustnessRow>& rows) {
  out << "delta_p,delta_q,feasible,runs,wins,plain_pmse_mean,plain_pmse_sd,plugin_pmse_mean,plugin_pmse_sd\n";
  for (const auto& r : rows) {
    out << format_double(r.delta_p) << ',' << format_double(r.delta_q) << ',' << (r.feasible ? 1 : 0) << ','
        << r.runs << ',' << r.wins << ',' << format_double(r.plain_mean) << ',' << format_double(r.plain_sd) << ','
        << format_double(r.plugin_mean) << ',' << format_double(r.plugin_sd) << '\n';
  }
}

}  // namespace rsgd
