#pragma once

#include <Eigen/Core>
#include <json.hpp>

#include <memory>
#include <stdexcept>
#include <string>

#include "ptsd/eval_counter.hpp"
#include "ptsd/rng.hpp"

namespace ptsd {

// Unnormalized densities expressed as energies, energy(x) = -log p~(x).
// Raw evaluations here are uncounted; budgeted access goes through
// TemperedTarget so reference sampling and tests never consume budget.
class EnergyTarget {
 public:
  virtual ~EnergyTarget() = default;

  int dim() const { return dim_; }
  const std::string& name() const { return name_; }

  double energy(const Eigen::VectorXd& x) const {
    check_dim(x);
    return do_energy(x);
  }

  Eigen::VectorXd gradient(const Eigen::VectorXd& x) const {
    check_dim(x);
    return do_gradient(x);
  }

  virtual bool has_reference_sampler() const { return false; }

  // True when energy(x + t (x) 1) == energy(x) for any rigid translation t, as
  // for particle clusters tethered to their own center of mass. Consumers then
  // center coordinates before storing or training on them.
  virtual bool translation_invariant() const { return false; }

  // Exact or rejection draws from the normalized T=1 density, one per column.
  // Evaluation-only: never touches any EvalCounter.
  virtual Eigen::MatrixXd reference_sample(int n, Rng& rng) const;

  // Full parameter block; decimal serialization round-trips bit-exactly.
  virtual nlohmann::json params() const = 0;

 protected:
  EnergyTarget(int dim, std::string name) : dim_(dim), name_(std::move(name)) {}

  virtual double do_energy(const Eigen::VectorXd& x) const = 0;
  virtual Eigen::VectorXd do_gradient(const Eigen::VectorXd& x) const = 0;

 private:
  void check_dim(const Eigen::VectorXd& x) const {
    if (x.size() != dim_)
      throw std::invalid_argument(name_ + ": expected dim " +
                                  std::to_string(dim_) + ", got " +
                                  std::to_string(x.size()));
  }

  int dim_;
  std::string name_;
};

// Budgeted view of a base target at temperature T: energy and gradient are the
// base values divided by T. Counting happens on the base-scale accessors so a
// tempered call costs exactly one increment.
class TemperedTarget {
 public:
  TemperedTarget(std::shared_ptr<const EnergyTarget> base, double temperature,
                 std::shared_ptr<EvalCounter> counter)
      : base_(std::move(base)),
        counter_(std::move(counter)),
        temperature_(temperature) {
    if (!base_) throw std::invalid_argument("TemperedTarget: null base");
    if (!counter_) throw std::invalid_argument("TemperedTarget: null counter");
    if (!(temperature_ > 0.0))
      throw std::invalid_argument("TemperedTarget: temperature must be > 0");
  }

  // T=1 scale, counted once per call.
  double base_energy(const Eigen::VectorXd& x) const {
    counter_->add_energy();
    return base_->energy(x);
  }
  Eigen::VectorXd base_gradient(const Eigen::VectorXd& x) const {
    counter_->add_gradient();
    return base_->gradient(x);
  }

  double energy(const Eigen::VectorXd& x) const {
    return base_energy(x) / temperature_;
  }
  Eigen::VectorXd gradient(const Eigen::VectorXd& x) const {
    return base_gradient(x) / temperature_;
  }

  double temperature() const { return temperature_; }
  int dim() const { return base_->dim(); }
  const EnergyTarget& base() const { return *base_; }
  std::shared_ptr<const EnergyTarget> base_ptr() const { return base_; }
  EvalCounter& counter() const { return *counter_; }
  std::shared_ptr<EvalCounter> counter_ptr() const { return counter_; }

  TemperedTarget at_temperature(double t) const {
    return TemperedTarget(base_, t, counter_);
  }

 private:
  std::shared_ptr<const EnergyTarget> base_;
  std::shared_ptr<EvalCounter> counter_;
  double temperature_;
};

// 40-component planar Gaussian mixture. Means are generated once from the
// fixed seed below (uniform in [-40, 40]^2) so every run and the shipped
// parameter file agree; all components share variance softplus(1) * I and
// uniform weights.
class MogTarget final : public EnergyTarget {
 public:
  static constexpr std::uint64_t kMeanSeed = 0x6d6f6734'30ULL;  // "mog40"
  static constexpr int kComponents = 40;
  static constexpr double kBoxHalfWidth = 40.0;

  MogTarget();

  bool has_reference_sampler() const override { return true; }
  Eigen::MatrixXd reference_sample(int n, Rng& rng) const override;
  nlohmann::json params() const override;

  const Eigen::MatrixXd& means() const { return means_; }
  double component_variance() const { return variance_; }

 protected:
  double do_energy(const Eigen::VectorXd& x) const override;
  Eigen::VectorXd do_gradient(const Eigen::VectorXd& x) const override;

 private:
  Eigen::MatrixXd means_;  // 2 x 40
  double variance_;        // softplus(1)
};

// m independent double-well blocks of dimension 2, total dim 2m. Block energy
// q4*x1^4 + q2*x1^2 + q1*x1 + 0.5*x2^2 with the linear tilt q1 fixed to zero,
// which makes the two wells equally deep: the x1 factor is then
// exp(9 - (x1^2 - 3)^2) up to normalization, handy for rejection sampling.
class ManyWellTarget final : public EnergyTarget {
 public:
  static constexpr double kQuartic = 1.0;
  static constexpr double kQuadratic = -6.0;
  static constexpr double kLinear = 0.0;

  explicit ManyWellTarget(int blocks);

  int blocks() const { return blocks_; }
  bool has_reference_sampler() const override { return true; }
  Eigen::MatrixXd reference_sample(int n, Rng& rng) const override;
  nlohmann::json params() const override;

  static double block_energy(double x1, double x2);

 protected:
  double do_energy(const Eigen::VectorXd& x) const override;
  Eigen::VectorXd do_gradient(const Eigen::VectorXd& x) const override;

 private:
  int blocks_;
};

// Lennard-Jones cluster of n particles in 3D (dim = 3n) with a harmonic tether
// to the center of mass; without the tether the cluster energy is translation
// invariant and the density is improper. Below r_cut the pair potential is
// replaced by a monotone cubic Hermite arc matching V and V' at r_cut and
// flattening to zero slope at r = 0, so energies and gradients stay finite at
// particle overlap and the potential is C1 everywhere.
class LennardJonesTarget final : public EnergyTarget {
 public:
  static constexpr double kEpsilon = 1.0;
  static constexpr double kSigma = 1.0;
  static constexpr double kCutoff = 0.65;          // units of kSigma
  static constexpr double kOscillatorScale = 0.5;  // tether strength

  explicit LennardJonesTarget(int particles);

  int particles() const { return particles_; }
  bool translation_invariant() const override { return true; }
  nlohmann::json params() const override;

  // Smoothed pair potential and its radial derivative.
  static double pair_potential(double r);
  static double pair_potential_derivative(double r);

 protected:
  double do_energy(const Eigen::VectorXd& x) const override;
  Eigen::VectorXd do_gradient(const Eigen::VectorXd& x) const override;

 private:
  int particles_;
};

class GaussianTarget final : public EnergyTarget {
 public:
  GaussianTarget(int dim, double sigma);

  double sigma() const { return sigma_; }
  bool has_reference_sampler() const override { return true; }
  Eigen::MatrixXd reference_sample(int n, Rng& rng) const override;
  nlohmann::json params() const override;

 protected:
  double do_energy(const Eigen::VectorXd& x) const override;
  Eigen::VectorXd do_gradient(const Eigen::VectorXd& x) const override;

 private:
  double sigma_;
};

// Builds a target from its config block, e.g. {"name":"mog40"},
// {"name":"manywell","blocks":4}, {"name":"lj","particles":13},
// {"name":"gaussian","dim":2,"sigma":1.0}. Unknown names/keys are errors.
std::shared_ptr<const EnergyTarget> make_target(const nlohmann::json& spec);

}  // namespace ptsd
