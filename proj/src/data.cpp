#include "rsgd/data.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

#include <Eigen/Cholesky>

#include "rsgd/random.hpp"

namespace rsgd {
namespace {

Eigen::Index idx(std::size_t i) { return static_cast<Eigen::Index>(i); }

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

std::string trim(std::string s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ')) s.pop_back();
  std::size_t b = 0;
  while (b < s.size() && s[b] == ' ') ++b;
  return s.substr(b);
}

void fill_gaussian(Matrix& Z, RandomStream s) {
  for (Eigen::Index i = 0; i < Z.rows(); ++i) {
    for (Eigen::Index j = 0; j < Z.cols(); ++j) Z(i, j) = s.normal();
  }
}

Vector draw_responses(const SyntheticSpec& spec, const Matrix& X, const Vector& w, RandomStream s) {
  Vector y(X.rows());
  const Vector eta = X * w;
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    switch (spec.family) {
      case FamilyKind::kLinear:
        y(i) = eta(i) + spec.noise_sd * s.normal();
        break;
      case FamilyKind::kLogistic:
        y(i) = s.uniform() < sigmoid(eta(i)) ? 1.0 : -1.0;
        break;
      case FamilyKind::kPoisson: {
        std::poisson_distribution<long> draw(std::exp(std::min(eta(i), kPoissonClip)));
        y(i) = static_cast<double>(draw(s));
        break;
      }
    }
  }
  return y;
}

}  // namespace

SyntheticSpec SyntheticSpec::named(const std::string& name) {
  SyntheticSpec s;
  s.name = name;
  if (name == "synth_a_linear") {
    s.family = FamilyKind::kLinear;
    s.d = 10;
  } else if (name == "synth_b_linear") {
    s.family = FamilyKind::kLinear;
    s.d = 15;
    s.covariance = CovarianceKind::kAr;
    s.rho = 0.9;
  } else if (name == "synth_a_logistic") {
    s.family = FamilyKind::kLogistic;
    s.d = 10;
    s.signal_energy = 4.0;
  } else if (name == "synth_a_poisson") {
    s.family = FamilyKind::kPoisson;
    s.d = 10;
    s.signal_energy = 1.4;
  } else if (name == "synth_b_poisson") {
    s.family = FamilyKind::kPoisson;
    s.d = 8;
    s.signal_energy = 1.4;
  } else {
    throw Error("unknown synthetic dataset '" + name + "'");
  }
  return s;
}

std::vector<std::string> SyntheticSpec::names() {
  return {"synth_a_linear", "synth_b_linear", "synth_a_logistic", "synth_a_poisson", "synth_b_poisson"};
}

Matrix SyntheticSpec::covariance_matrix() const {
  Matrix S = Matrix::Identity(idx(d), idx(d));
  if (covariance == CovarianceKind::kAr) {
    for (std::size_t j = 0; j < d; ++j) {
      for (std::size_t k = 0; k < d; ++k) {
        S(idx(j), idx(k)) = std::pow(rho, std::abs(static_cast<double>(j) - static_cast<double>(k)));
      }
    }
  }
  return S;
}

SyntheticData generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed) {
  if (spec.d == 0 || spec.n == 0) throw ContractViolation("generate_synthetic: empty design");
  const Matrix Sigma = spec.covariance_matrix();
  Eigen::LLT<Matrix> llt(Sigma);
  if (llt.info() != Eigen::Success) throw Error("generate_synthetic: covariance is not SPD");
  const Matrix L = llt.matrixL();
  const RandomStream root = RandomStream(seed).substream(StreamPurpose::kData);

  SyntheticData out;
  out.w_true.resize(idx(spec.d));
  RandomStream ws = root.substream(0);
  for (std::size_t j = 0; j < spec.d; ++j) out.w_true(idx(j)) = ws.normal();
  if (spec.signal_energy > 0.0) {
    out.w_true *= std::sqrt(spec.signal_energy / out.w_true.dot(Sigma * out.w_true));
  }
  Matrix Z(idx(spec.n), idx(spec.d));
  fill_gaussian(Z, root.substream(1));
  out.X_train = Z * L.transpose();
  out.y_train = draw_responses(spec, out.X_train, out.w_true, root.substream(2));
  Matrix Zt(idx(spec.n_test), idx(spec.d));
  fill_gaussian(Zt, root.substream(3));
  out.X_test = Zt * L.transpose();
  out.y_test = draw_responses(spec, out.X_test, out.w_true, root.substream(4));
  return out;
}

std::string format_double(double value) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

ObservedDataset load_csv(const std::filesystem::path& path, const std::string& response_column,
                         const std::string& na_token) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line)) throw Error("'" + path.string() + "' has no header row");
  std::vector<std::string> header = split_line(line);
  for (auto& h : header) h = trim(h);
  std::size_t response = header.size();
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (header[c] == response_column) response = c;
  }
  if (response == header.size()) throw Error("response column '" + response_column + "' not found");

  std::vector<std::string> names;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (c != response) names.push_back(header[c]);
  }
  const std::size_t d = names.size();
  std::vector<double> values;
  std::vector<std::uint8_t> mask;
  std::vector<double> responses;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    ++row;
    const auto cells = split_line(line);
    if (cells.size() != header.size()) {
      std::ostringstream msg;
      msg << path.string() << ": row " << row << " has " << cells.size() << " cells, expected " << header.size();
      throw Error(msg.str());
    }
    for (std::size_t c = 0; c < cells.size(); ++c) {
      const std::string cell = trim(cells[c]);
      const bool na = cell == na_token;
      double v = 0.0;
      if (!na) {
        const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
        if (ec != std::errc() || ptr != cell.data() + cell.size() || cell.empty()) {
          std::ostringstream msg;
          msg << path.string() << ": malformed number '" << cell << "' at row " << row << ", column "
              << header[c];
          throw Error(msg.str());
        }
      }
      if (c == response) {
        if (na) {
          std::ostringstream msg;
          msg << path.string() << ": missing response at row " << row;
          throw Error(msg.str());
        }
        responses.push_back(v);
      } else {
        values.push_back(v);
        mask.push_back(na ? 1 : 0);
      }
    }
  }
  const std::size_t n = responses.size();
  Matrix X(idx(n), idx(d));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) X(idx(i), idx(j)) = values[i * d + j];
  }
  Vector y = Eigen::Map<Vector>(responses.data(), idx(n));
  return ObservedDataset(std::move(X), Mask(n, d, std::move(mask)), std::move(y), {}, std::move(names));
}

void save_csv(const std::filesystem::path& path, const ObservedDataset& data,
              const std::string& response_column, const std::string& na_token) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  const auto& names = data.column_names();
  for (std::size_t j = 0; j < data.cols(); ++j) {
    out << (names.size() == data.cols() ? names[j] : "x" + std::to_string(j + 1)) << ',';
  }
  out << response_column << '\n';
  for (std::size_t i = 0; i < data.rows(); ++i) {
    for (std::size_t j = 0; j < data.cols(); ++j) {
      out << (data.is_missing(i, j) ? na_token : format_double(data.value(i, j))) << ',';
    }
    out << format_double(data.response(i)) << '\n';
  }
}

StandardizedPair standardize(const ObservedDataset& train, const ObservedDataset& test,
                             bool zscore_response) {
  if (train.cols() != test.cols()) throw ContractViolation("standardize: fold widths differ");
  const std::size_t d = train.cols();
  StandardizeTransform t;
  t.mean = Vector::Zero(idx(d));
  t.scale = Vector::Ones(idx(d));
  t.flagged.assign(d, false);
  for (std::size_t j = 0; j < d; ++j) {
    double s = 0.0, s2 = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < train.rows(); ++i) {
      if (train.is_missing(i, j)) continue;
      s += train.value(i, j);
      ++count;
    }
    if (count == 0) {
      t.flagged[j] = true;
      continue;
    }
    const double mu = s / static_cast<double>(count);
    for (std::size_t i = 0; i < train.rows(); ++i) {
      if (!train.is_missing(i, j)) s2 += (train.value(i, j) - mu) * (train.value(i, j) - mu);
    }
    const double sd = std::sqrt(s2 / static_cast<double>(count));
    t.mean(idx(j)) = mu;
    if (sd > 1e-12) {
      t.scale(idx(j)) = sd;
    } else {
      t.flagged[j] = true;
    }
  }
  if (zscore_response) {
    t.response_scaled = true;
    t.response_mean = train.responses().mean();
    const double sd = std::sqrt((train.responses().array() - t.response_mean).square().mean());
    t.response_scale = sd > 1e-12 ? sd : 1.0;
  }
  auto apply = [&](const ObservedDataset& data) {
    Matrix X = data.oracle_values();
    for (Eigen::Index j = 0; j < X.cols(); ++j) {
      X.col(j) = (X.col(j).array() - t.mean(j)) / t.scale(j);
    }
    Vector y = data.responses();
    if (t.response_scaled) y = (y.array() - t.response_mean) / t.response_scale;
    return ObservedDataset(std::move(X), data.mask(), std::move(y), data.observed_index_set(),
                           data.column_names());
  };
  return {apply(train), apply(test), std::move(t)};
}

}  // namespace rsgd
