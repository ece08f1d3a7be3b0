#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "rsgd/config.hpp"
#include "rsgd/data.hpp"
#include "rsgd/experiments.hpp"
#include "rsgd/mech_estimation.hpp"
#include "rsgd/verification.hpp"

namespace fs = std::filesystem;
using namespace rsgd;

namespace {

constexpr int kConfigFailure = 1;
constexpr int kRunFailure = 2;

struct CommonFlags {
  std::string config;
  std::int64_t seed = -1;
  std::string out = "out";
  std::int64_t threads = 1;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_option("--config", flags.config, "key=value config file");
  cmd->add_option("--seed", flags.seed, "base seed for data and runs");
  cmd->add_option("--out", flags.out, "output directory");
  cmd->add_option("--threads", flags.threads, "worker threads")->check(CLI::PositiveNumber);
}

Config load_config(const CommonFlags& flags) {
  Config c = flags.config.empty() ? Config{} : Config::load(flags.config);
  if (flags.seed >= 0) {
    c.set("run.seed", std::to_string(flags.seed));
    c.set("dataset.seed", std::to_string(flags.seed));
  }
  c.set("run.threads", std::to_string(flags.threads));
  return c;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot write " + path.string());
  return f;
}

void log_config(const fs::path& dir, const Config& c) {
  open_out(dir / "resolved_config.txt") << c.resolved();
}

int cmd_generate(const Config& c, const fs::path& out) {
  const ExperimentConfig e = ExperimentConfig::from(c);
  const PreparedData d = prepare_data(e, e.data_seed);
  log_config(out, c);
  if (d.has_complete_train) save_csv(out / "train_complete.csv", ObservedDataset::complete(d.X_train, d.y_train));
  save_csv(out / "train.csv", d.train);
  save_csv(out / "test.csv", ObservedDataset::complete(d.X_test, d.y_test));
  auto w = open_out(out / "w_star.csv");
  w << "w\n";
  for (Eigen::Index j = 0; j < d.w_star.size(); ++j) w << format_double(d.w_star(j)) << '\n';
  open_out(out / "mechanism.txt") << mechanism_to_config(d.mechanism);
  std::cout << "wrote " << d.train.rows() << " training rows to " << out << '\n';
  return 0;
}

int cmd_train(const Config& c, const fs::path& out) {
  const ExperimentConfig e = ExperimentConfig::from(c);
  const ExperimentResult r = run_experiment(e, &std::cerr);
  log_config(out, c);
  auto results = open_out(out / "results.csv");
  write_results_csv(results, r.rows);
  auto summary = open_out(out / "summary.csv");
  write_summary_csv(summary, r);
  write_summary_csv(std::cout, r);
  return r.failures.empty() ? 0 : kRunFailure;
}

int cmd_sweep(const Config& c, const fs::path& out) {
  const ExperimentConfig e = ExperimentConfig::from(c);
  const SweepResult r = bias_sweep(e, &std::cout);
  log_config(out, c);
  auto sweep = open_out(out / "sweep.csv");
  write_sweep_csv(sweep, r);
  auto slopes = open_out(out / "slopes.csv");
  write_slopes_csv(slopes, r);
  return 0;
}

int cmd_estimate(const Config& c, const fs::path& out) {
  const ExperimentConfig e = ExperimentConfig::from(c);
  const PreparedData d = prepare_data(e, e.data_seed);
  Matrix V(static_cast<Eigen::Index>(d.train.rows()), static_cast<Eigen::Index>(d.train.cols()));
  for (std::size_t i = 0; i < d.train.rows(); ++i) V.row(static_cast<Eigen::Index>(i)) = d.train.masked_row(i).transpose();
  const MechanismEstimate est = estimate_mechanism(d.train.mask(), V, d.mechanism.observed_index_set);
  log_config(out, c);
  const std::string text = mechanism_to_config(est.to_spec(), "estimate");
  open_out(out / "mechanism_estimate.txt") << text << mechanism_to_config(d.mechanism, "truth");
  std::cout << text;
  for (std::size_t j = 0; j < est.degenerate.size(); ++j) {
    if (est.degenerate[j]) std::cerr << "column " << j + 1 << ": intensity fell back to a constant\n";
  }
  return 0;
}

int cmd_robustness(const Config& c, const fs::path& out) {
  const ExperimentConfig e = ExperimentConfig::from(c);
  const auto rows = robustness_sweep(e, &std::cout);
  log_config(out, c);
  auto f = open_out(out / "robustness.csv");
  write_robustness_csv(f, rows);
  return 0;
}

int cmd_verify(const Config& c, const fs::path& out) {
  log_config(out, c);
  const auto checks = run_all_checks();
  auto f = open_out(out / "verdicts.json");
  write_verdicts(f, checks);
  bool ok = true;
  for (const auto& ch : checks) {
    std::cout << (ch.passed ? "PASS " : "FAIL ") << ch.name << '\n';
    ok = ok && ch.passed;
  }
  return ok ? 0 : kRunFailure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Richardson-debiased SGD with missing covariates"};
  app.require_subcommand(1);
  CommonFlags flags;
  struct Entry {
    const char* name;
    const char* help;
    int (*fn)(const Config&, const fs::path&);
  };
  const Entry entries[] = {
      {"generate", "write a synthetic or ingested dataset with its mask", cmd_generate},
      {"train", "run SGD over seeds x methods", cmd_train},
      {"bias-sweep", "exact bias norms over a missingness scale grid", cmd_sweep},
      {"estimate-mech", "fit the missingness mechanism from the mask", cmd_estimate},
      {"robustness", "plug-in Richardson under perturbed mechanisms", cmd_robustness},
      {"verify", "run the property checks and write verdicts.json", cmd_verify},
  };
  for (const auto& e : entries) add_common(app.add_subcommand(e.name, e.help), flags);
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? 0 : kConfigFailure;
  }
  try {
    const Config config = load_config(flags);
    const fs::path out = flags.out;
    fs::create_directories(out);
    for (const auto& e : entries) {
      if (app.got_subcommand(e.name)) return e.fn(config, out);
    }
  } catch (const ConfigError& err) {
    std::cerr << "config error: " << err.what() << '\n';
    return kConfigFailure;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << '\n';
    return kRunFailure;
  }
  return kConfigFailure;
}
