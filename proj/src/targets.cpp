#include "ptsd/targets.hpp"

#include <cmath>
#include <limits>
#include <set>

namespace ptsd {
namespace {

void require_keys(const nlohmann::json& j, const std::set<std::string>& allowed,
                  const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!allowed.count(it.key()))
      throw std::invalid_argument(where + ": unknown key '" + it.key() + "'");
  }
}

}  // namespace

Eigen::MatrixXd EnergyTarget::reference_sample(int, Rng&) const {
  throw std::logic_error(name_ + ": no exact reference sampler");
}

// ---------------------------------------------------------------------------
// MogTarget

MogTarget::MogTarget()
    : EnergyTarget(2, "mog40"), variance_(std::log1p(std::exp(1.0))) {
  Rng rng(kMeanSeed);
  means_.resize(2, kComponents);
  for (int i = 0; i < kComponents; ++i) {
    means_(0, i) = rng.uniform(-kBoxHalfWidth, kBoxHalfWidth);
    means_(1, i) = rng.uniform(-kBoxHalfWidth, kBoxHalfWidth);
  }
}

double MogTarget::do_energy(const Eigen::VectorXd& x) const {
  // E = -log sum_i (1/K) N(x; mu_i, c I), via logsumexp.
  const double inv2c = 0.5 / variance_;
  double max_term = -std::numeric_limits<double>::infinity();
  Eigen::ArrayXd terms(kComponents);
  for (int i = 0; i < kComponents; ++i) {
    terms[i] = -(x - means_.col(i)).squaredNorm() * inv2c;
    max_term = std::max(max_term, terms[i]);
  }
  const double lse = max_term + std::log((terms - max_term).exp().sum());
  return -lse + std::log(double(kComponents)) +
         std::log(2.0 * M_PI * variance_);
}

Eigen::VectorXd MogTarget::do_gradient(const Eigen::VectorXd& x) const {
  Eigen::ArrayXd terms(kComponents);
  double max_term = -std::numeric_limits<double>::infinity();
  const double inv2c = 0.5 / variance_;
  for (int i = 0; i < kComponents; ++i) {
    terms[i] = -(x - means_.col(i)).squaredNorm() * inv2c;
    max_term = std::max(max_term, terms[i]);
  }
  Eigen::ArrayXd resp = (terms - max_term).exp();
  resp /= resp.sum();
  Eigen::VectorXd g = Eigen::VectorXd::Zero(2);
  for (int i = 0; i < kComponents; ++i)
    g += resp[i] * (x - means_.col(i)) / variance_;
  return g;
}

Eigen::MatrixXd MogTarget::reference_sample(int n, Rng& rng) const {
  Eigen::MatrixXd out(2, n);
  const double sd = std::sqrt(variance_);
  for (int j = 0; j < n; ++j) {
    const int comp = static_cast<int>(rng.uniform() * kComponents) % kComponents;
    out(0, j) = means_(0, comp) + sd * rng.normal();
    out(1, j) = means_(1, comp) + sd * rng.normal();
  }
  return out;
}

nlohmann::json MogTarget::params() const {
  nlohmann::json means = nlohmann::json::array();
  for (int i = 0; i < kComponents; ++i)
    means.push_back({means_(0, i), means_(1, i)});
  return {{"type", "mog40"},
          {"mean_seed", kMeanSeed},
          {"components", kComponents},
          {"box_half_width", kBoxHalfWidth},
          {"component_variance", variance_},
          {"weights", "uniform"},
          {"means", means}};
}

// ---------------------------------------------------------------------------
// ManyWellTarget

ManyWellTarget::ManyWellTarget(int blocks)
    : EnergyTarget(2 * blocks, "manywell" + std::to_string(2 * blocks)),
      blocks_(blocks) {
  if (blocks < 1) throw std::invalid_argument("manywell: blocks must be >= 1");
}

double ManyWellTarget::block_energy(double x1, double x2) {
  const double s = x1 * x1;
  return kQuartic * s * s + kQuadratic * s + kLinear * x1 + 0.5 * x2 * x2;
}

double ManyWellTarget::do_energy(const Eigen::VectorXd& x) const {
  double e = 0.0;
  for (int b = 0; b < blocks_; ++b) e += block_energy(x[2 * b], x[2 * b + 1]);
  return e;
}

Eigen::VectorXd ManyWellTarget::do_gradient(const Eigen::VectorXd& x) const {
  Eigen::VectorXd g(dim());
  for (int b = 0; b < blocks_; ++b) {
    const double x1 = x[2 * b];
    g[2 * b] = 4.0 * kQuartic * x1 * x1 * x1 + 2.0 * kQuadratic * x1 + kLinear;
    g[2 * b + 1] = x[2 * b + 1];
  }
  return g;
}

Eigen::MatrixXd ManyWellTarget::reference_sample(int n, Rng& rng) const {
  // x2 is standard normal; x1 has density ~ exp(-(x1^2-3)^2), sampled by
  // rejection from a uniform envelope over [-3.3, 3.3] (acceptance ~16%,
  // truncated tail mass < 1e-25).
  Eigen::MatrixXd out(dim(), n);
  for (int j = 0; j < n; ++j) {
    for (int b = 0; b < blocks_; ++b) {
      double x1 = 0.0;
      for (;;) {
        x1 = rng.uniform(-3.3, 3.3);
        const double t = x1 * x1 - 3.0;
        if (rng.uniform() < std::exp(-t * t)) break;
      }
      out(2 * b, j) = x1;
      out(2 * b + 1, j) = rng.normal();
    }
  }
  return out;
}

nlohmann::json ManyWellTarget::params() const {
  return {{"type", "manywell"},
          {"blocks", blocks_},
          {"quartic", kQuartic},
          {"quadratic", kQuadratic},
          {"linear", kLinear},
          {"transverse_quadratic", 0.5}};
}

// ---------------------------------------------------------------------------
// LennardJonesTarget

namespace {

double lj_raw(double r) {
  const double s6 = std::pow(LennardJonesTarget::kSigma / r, 6);
  return 4.0 * LennardJonesTarget::kEpsilon * (s6 * s6 - s6);
}

double lj_raw_derivative(double r) {
  const double s6 = std::pow(LennardJonesTarget::kSigma / r, 6);
  return 4.0 * LennardJonesTarget::kEpsilon * (-12.0 * s6 * s6 + 6.0 * s6) / r;
}

}  // namespace

LennardJonesTarget::LennardJonesTarget(int particles)
    : EnergyTarget(3 * particles, "lj" + std::to_string(particles)),
      particles_(particles) {
  if (particles < 2)
    throw std::invalid_argument("lj: particles must be >= 2");
}

double LennardJonesTarget::pair_potential(double r) {
  const double rc = kCutoff * kSigma;
  if (r >= rc) return lj_raw(r);
  // Monotone Hermite arc: value V(rc) - rc V'(rc) at r=0, zero slope there.
  const double s = r / rc;
  return lj_raw(rc) + rc * lj_raw_derivative(rc) * (-s * s * s + 2.0 * s * s - 1.0);
}

double LennardJonesTarget::pair_potential_derivative(double r) {
  const double rc = kCutoff * kSigma;
  if (r >= rc) return lj_raw_derivative(r);
  const double s = r / rc;
  return lj_raw_derivative(rc) * s * (4.0 - 3.0 * s);
}

double LennardJonesTarget::do_energy(const Eigen::VectorXd& x) const {
  const auto pts = Eigen::Map<const Eigen::Matrix<double, 3, Eigen::Dynamic>>(
      x.data(), 3, particles_);
  double e = 0.0;
  for (int i = 0; i < particles_; ++i)
    for (int j = i + 1; j < particles_; ++j)
      e += pair_potential((pts.col(i) - pts.col(j)).norm());
  const Eigen::Vector3d com = pts.rowwise().mean();
  e += kOscillatorScale * (pts.colwise() - com).squaredNorm();
  return e;
}

Eigen::VectorXd LennardJonesTarget::do_gradient(const Eigen::VectorXd& x) const {
  const auto pts = Eigen::Map<const Eigen::Matrix<double, 3, Eigen::Dynamic>>(
      x.data(), 3, particles_);
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(3, particles_);
  for (int i = 0; i < particles_; ++i) {
    for (int j = i + 1; j < particles_; ++j) {
      const Eigen::Vector3d d = pts.col(i) - pts.col(j);
      const double r = d.norm();
      if (r < 1e-12) continue;  // smoothed slope vanishes at overlap
      const Eigen::Vector3d f = (pair_potential_derivative(r) / r) * d;
      g.col(i) += f;
      g.col(j) -= f;
    }
  }
  const Eigen::Vector3d com = pts.rowwise().mean();
  g += 2.0 * kOscillatorScale * (pts.colwise() - com);
  return Eigen::Map<Eigen::VectorXd>(g.data(), 3 * particles_);
}

nlohmann::json LennardJonesTarget::params() const {
  return {{"type", "lj"},
          {"particles", particles_},
          {"epsilon", kEpsilon},
          {"sigma", kSigma},
          {"cutoff", kCutoff},
          {"oscillator_scale", kOscillatorScale},
          {"smoothing", "cubic_hermite_below_cutoff"}};
}

// ---------------------------------------------------------------------------
// GaussianTarget

GaussianTarget::GaussianTarget(int dim, double sigma)
    : EnergyTarget(dim, "gaussian" + std::to_string(dim)), sigma_(sigma) {
  if (dim < 1) throw std::invalid_argument("gaussian: dim must be >= 1");
  if (!(sigma > 0.0)) throw std::invalid_argument("gaussian: sigma must be > 0");
}

double GaussianTarget::do_energy(const Eigen::VectorXd& x) const {
  return 0.5 * x.squaredNorm() / (sigma_ * sigma_);
}

Eigen::VectorXd GaussianTarget::do_gradient(const Eigen::VectorXd& x) const {
  return x / (sigma_ * sigma_);
}

Eigen::MatrixXd GaussianTarget::reference_sample(int n, Rng& rng) const {
  return sigma_ * rng.normal_mat(dim(), n);
}

nlohmann::json GaussianTarget::params() const {
  return {{"type", "gaussian"}, {"dim", dim()}, {"sigma", sigma_}};
}

// ---------------------------------------------------------------------------

std::shared_ptr<const EnergyTarget> make_target(const nlohmann::json& spec) {
  if (!spec.is_object() || !spec.contains("name"))
    throw std::invalid_argument("target spec: expected object with 'name'");
  const std::string name = spec.at("name").get<std::string>();
  if (name == "mog40") {
    require_keys(spec, {"name"}, "target mog40");
    return std::make_shared<MogTarget>();
  }
  if (name == "manywell") {
    require_keys(spec, {"name", "blocks"}, "target manywell");
    return std::make_shared<ManyWellTarget>(spec.at("blocks").get<int>());
  }
  if (name == "lj") {
    require_keys(spec, {"name", "particles"}, "target lj");
    return std::make_shared<LennardJonesTarget>(spec.at("particles").get<int>());
  }
  if (name == "gaussian") {
    require_keys(spec, {"name", "dim", "sigma"}, "target gaussian");
    return std::make_shared<GaussianTarget>(spec.at("dim").get<int>(),
                                            spec.at("sigma").get<double>());
  }
  throw std::invalid_argument("target spec: unknown name '" + name + "'");
}

}  // namespace ptsd
