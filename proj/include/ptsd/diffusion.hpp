#pragma once

#include <Eigen/Dense>
#include <memory>

#include "ptsd/network.hpp"
#include "ptsd/rng.hpp"

namespace ptsd {

// Noise scales descending from sigma_max to sigma_min with warped spacing,
// plus a terminal zero. Returns steps + 1 values; rho = 1 is linear.
Eigen::VectorXd karras_sigmas(int steps, double sigma_max, double sigma_min,
                              double rho);

struct LadderConfig {
  int steps = 100;
  double sigma_max = 40.0;
  double sigma_min = 0.002;
  double rho = 7.0;

  Eigen::VectorXd sigmas() const {
    return karras_sigmas(steps, sigma_max, sigma_min, rho);
  }
};

// Score of a noise-smoothed density: x -> grad log p_sigma(x), columns are
// independent samples. Implementations also expose the directional
// derivative of the score so divergence can be probed.
class ScoreField {
 public:
  virtual ~ScoreField() = default;
  virtual int dim() const = 0;
  virtual Eigen::MatrixXd score(const Eigen::MatrixXd& x,
                                double sigma) const = 0;

  struct ScoreAndJvp {
    Eigen::MatrixXd score;
    Eigen::MatrixXd jvp;
  };
  virtual ScoreAndJvp score_with_jvp(const Eigen::MatrixXd& x, double sigma,
                                     const Eigen::MatrixXd& probe) const = 0;
};

// Closed-form field for an isotropic Gaussian base density of the given
// scale raised to 1/temperature: the smoothed score is
// -x / (temperature * scale^2 + sigma^2).
class GaussianScoreField final : public ScoreField {
 public:
  GaussianScoreField(int dim, double scale, double temperature = 1.0);

  int dim() const override { return dim_; }
  double base_variance() const { return base_variance_; }
  Eigen::MatrixXd score(const Eigen::MatrixXd& x, double sigma) const override;
  ScoreAndJvp score_with_jvp(const Eigen::MatrixXd& x, double sigma,
                             const Eigen::MatrixXd& probe) const override;

 private:
  int dim_;
  double base_variance_;
};

// Score induced by a denoiser: (D(x, sigma) - x) / sigma^2.
class DenoiserScoreField final : public ScoreField {
 public:
  explicit DenoiserScoreField(std::shared_ptr<const Denoiser> model);

  int dim() const override { return model_->config().dim; }
  const Denoiser& model() const { return *model_; }
  Eigen::MatrixXd score(const Eigen::MatrixXd& x, double sigma) const override;
  ScoreAndJvp score_with_jvp(const Eigen::MatrixXd& x, double sigma,
                             const Eigen::MatrixXd& probe) const override;

 private:
  std::shared_ptr<const Denoiser> model_;
};

// Deterministic probability-flow draw: Euler steps of dx/dsigma =
// -sigma * score from sigma_max noise down to zero.
Eigen::MatrixXd sample_ode(const ScoreField& field, int count, Rng& rng,
                           const LadderConfig& ladder);

struct SampleResult {
  Eigen::MatrixXd samples;
  Eigen::VectorXd log_density;  // model log density of each column
};

// Probability-flow draw that also integrates the instantaneous change of
// log density along each trajectory. The divergence of the score is
// estimated with Rademacher probes drawn from probe_rng.
SampleResult sample_ode_with_logq(const ScoreField& field, int count,
                                  Rng& path_rng, Rng& probe_rng,
                                  const LadderConfig& ladder, int probes = 1);

// Stochastic reverse-time draw; churn scales the injected noise and churn=0
// reduces to the probability-flow trajectory exactly.
Eigen::MatrixXd sample_sde(const ScoreField& field, int count, Rng& rng,
                           const LadderConfig& ladder, double churn = 1.0);

// Model log density of given points: integrates the probability-flow ODE
// upward from sigma_min to sigma_max and anchors at the Gaussian top.
Eigen::VectorXd log_density_forward(const ScoreField& field,
                                    const Eigen::MatrixXd& x, Rng& probe_rng,
                                    const LadderConfig& ladder,
                                    int probes = 1);

struct TrainConfig {
  int iterations = 10000;
  int batch = 1000;
  AdamConfig adam;
  // ln sigma ~ N(ln sigma_data + log_sigma_shift, log_sigma_std^2)
  double log_sigma_shift = -0.5;
  double log_sigma_std = 1.4;
  double sigma_data_floor = 1e-3;
};

struct TrainStats {
  double first_loss = 0.0;  // mean over the first tenth of iterations
  double last_loss = 0.0;   // mean over the last tenth
  int iterations = 0;
};

// Denoising score matching over columns of data. Sets the model's
// sigma_data to the pooled standard deviation of the data first.
TrainStats train_dsm(Denoiser& model, const Eigen::MatrixXd& data,
                     const TrainConfig& config, Rng& rng);

}  // namespace ptsd
