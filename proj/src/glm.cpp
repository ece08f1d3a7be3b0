#include "rsgd/glm.hpp"

#include <atomic>
#include <cmath>
#include <sstream>

namespace rsgd {
namespace {

std::atomic<std::size_t> g_poisson_clips{0};

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// log(1 + e^z) without overflow.
double softplus(double z) {
  if (z > 0) return z + std::log1p(std::exp(-z));
  return std::log1p(std::exp(z));
}

double clip_poisson(double eta) {
  if (eta > kPoissonClip || eta < -kPoissonClip) {
    g_poisson_clips.fetch_add(1, std::memory_order_relaxed);
    return eta > 0 ? kPoissonClip : -kPoissonClip;
  }
  return eta;
}

}  // namespace

std::string to_string(FamilyKind kind) {
  switch (kind) {
    case FamilyKind::kLinear: return "linear";
    case FamilyKind::kLogistic: return "logistic";
    case FamilyKind::kPoisson: return "poisson";
  }
  return "unknown";
}

FamilyKind parse_family_kind(const std::string& name) {
  if (name == "linear") return FamilyKind::kLinear;
  if (name == "logistic") return FamilyKind::kLogistic;
  if (name == "poisson") return FamilyKind::kPoisson;
  throw Error("unknown family '" + name + "'");
}

void GlmFamily::validate_response(double y) const {
  switch (kind) {
    case FamilyKind::kLinear:
      if (!std::isfinite(y)) throw ContractViolation("linear response must be finite");
      break;
    case FamilyKind::kLogistic:
      if (y != 1.0 && y != -1.0) {
        std::ostringstream msg;
        msg << "logistic response must be -1 or +1, got " << y;
        throw ContractViolation(msg.str());
      }
      break;
    case FamilyKind::kPoisson:
      if (!(y >= 0.0) || std::floor(y) != y) {
        std::ostringstream msg;
        msg << "poisson response must be a nonnegative integer, got " << y;
        throw ContractViolation(msg.str());
      }
      break;
  }
}

void GlmFamily::validate_responses(const Vector& y) const {
  for (Eigen::Index i = 0; i < y.size(); ++i) validate_response(y(i));
}

std::size_t poisson_clip_count() { return g_poisson_clips.load(); }

double loss(const GlmFamily& family, const Vector& w, const Vector& x, double y) {
  const double eta = w.dot(x);
  double value = 0.0;
  switch (family.kind) {
    case FamilyKind::kLinear:
      value = 0.5 * (eta - y) * (eta - y);
      break;
    case FamilyKind::kLogistic:
      value = softplus(-y * eta);
      break;
    case FamilyKind::kPoisson: {
      const double e = clip_poisson(eta);
      value = std::exp(e) - y * e;
      break;
    }
  }
  return value + 0.5 * family.ridge * w.squaredNorm();
}

GradientVector gradient(const GlmFamily& family, const Vector& w, const Vector& x, double y) {
  const double eta = w.dot(x);
  double scale = 0.0;
  switch (family.kind) {
    case FamilyKind::kLinear:
      scale = eta - y;
      break;
    case FamilyKind::kLogistic:
      scale = -y * sigmoid(-y * eta);
      break;
    case FamilyKind::kPoisson:
      scale = std::exp(clip_poisson(eta)) - y;
      break;
  }
  GradientVector g = scale * x;
  if (family.ridge != 0.0) g += family.ridge * w;
  return g;
}

double empirical_risk(const GlmFamily& family, const Vector& w, const Matrix& X, const Vector& y) {
  if (X.rows() == 0) throw ContractViolation("empirical_risk: empty dataset");
  double s = 0.0;
  for (Eigen::Index i = 0; i < X.rows(); ++i) s += loss(family.without_ridge(), w, X.row(i).transpose(), y(i));
  return s / static_cast<double>(X.rows()) + 0.5 * family.ridge * w.squaredNorm();
}

GradientVector empirical_risk_gradient(const GlmFamily& family, const Vector& w, const Matrix& X,
                                       const Vector& y) {
  if (X.rows() == 0) throw ContractViolation("empirical_risk_gradient: empty dataset");
  const GlmFamily bare = family.without_ridge();
  GradientVector g = GradientVector::Zero(w.size());
  for (Eigen::Index i = 0; i < X.rows(); ++i) g += gradient(bare, w, X.row(i).transpose(), y(i));
  g /= static_cast<double>(X.rows());
  if (family.ridge != 0.0) g += family.ridge * w;
  return g;
}

PopulationModel PopulationModel::from_sample(const Matrix& X, const Vector& y) {
  if (X.rows() == 0) throw ContractViolation("PopulationModel: empty dataset");
  const double n = static_cast<double>(X.rows());
  PopulationModel m;
  m.second_moment = X.transpose() * X / n;
  m.cross_moment = X.transpose() * y / n;
  return m;
}

void PopulationModel::validate() const {
  const Matrix& S = second_moment;
  if (S.rows() != S.cols()) throw ContractViolation("PopulationModel: S is not square");
  if ((S - S.transpose()).cwiseAbs().maxCoeff() > 1e-8) {
    throw ContractViolation("PopulationModel: S is not symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Matrix> es(S);
  if (es.eigenvalues().minCoeff() < -1e-8) throw ContractViolation("PopulationModel: S is not PSD");
}

GradientVector linear_population_bias(const PopulationModel& model, const Vector& w, const Vector& p) {
  const Matrix& S = model.second_moment;
  const Vector grad = model.risk_gradient(w);
  const Eigen::Index d = w.size();
  GradientVector B(d);
  for (Eigen::Index j = 0; j < d; ++j) {
    double cross = 0.0;
    for (Eigen::Index k = 0; k < d; ++k) {
      if (k != j) cross += p(k) * S(j, k) * w(k);
    }
    B(j) = -p(j) * grad(j) - (1.0 - p(j)) * cross;
  }
  return B;
}

GradientVector first_order_operator_column(const GlmFamily& family, const Imputer& imputer,
                                           const Matrix& X, const Vector& y,
                                           const MechanismSpec& mechanism, const Vector& w,
                                           std::size_t j, const RandomStream& xi) {
  const std::size_t d = static_cast<std::size_t>(X.cols());
  GradientVector acc = GradientVector::Zero(w.size());
  std::vector<std::uint8_t> single(d, 0);
  single[j] = 1;
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const Vector x = X.row(i).transpose();
    const Vector v = mechanism.observed_part(x);
    const double a = mechanism.intensity[j](v);
    const Vector xt = imputer.impute(x, single, xi.substream(static_cast<std::uint64_t>(i)));
    acc += a * (gradient(family, w, xt, y(i)) - gradient(family, w, x, y(i)));
  }
  return acc / static_cast<double>(X.rows());
}

}  // namespace rsgd
