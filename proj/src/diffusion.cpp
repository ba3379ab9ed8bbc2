#include "ptsd/diffusion.hpp"

#include <cmath>
#include <stdexcept>

namespace ptsd {

namespace {

constexpr double kLogTwoPi = 1.8378770664093453;

void check_ladder(const LadderConfig& ladder) {
  if (ladder.steps < 2) throw std::invalid_argument("ladder: need >= 2 steps");
  if (!(ladder.sigma_min > 0.0) || !(ladder.sigma_max > ladder.sigma_min))
    throw std::invalid_argument("ladder: need sigma_max > sigma_min > 0");
  if (!(ladder.rho > 0.0)) throw std::invalid_argument("ladder: rho > 0");
}

// log N(x; 0, sigma^2 I) per column.
Eigen::VectorXd isotropic_log_density(const Eigen::MatrixXd& x, double sigma) {
  const double d = double(x.rows());
  return (-0.5 * d * (kLogTwoPi + 2.0 * std::log(sigma)) -
          x.colwise().squaredNorm().array() / (2.0 * sigma * sigma))
      .matrix()
      .transpose();
}

// Mean Rademacher estimate of the score divergence at one noise level.
Eigen::VectorXd divergence_estimate(const ScoreField& field,
                                    const Eigen::MatrixXd& x, double sigma,
                                    Rng& probe_rng, int probes) {
  Eigen::VectorXd trace = Eigen::VectorXd::Zero(x.cols());
  for (int p = 0; p < probes; ++p) {
    const Eigen::MatrixXd eps = probe_rng.rademacher_mat(x.rows(), x.cols());
    const auto sj = field.score_with_jvp(x, sigma, eps);
    trace += (eps.array() * sj.jvp.array()).colwise().sum().matrix().transpose();
  }
  return trace / double(probes);
}

}  // namespace

Eigen::VectorXd karras_sigmas(int steps, double sigma_max, double sigma_min,
                              double rho) {
  check_ladder({steps, sigma_max, sigma_min, rho});
  Eigen::VectorXd sigmas(steps + 1);
  const double hi = std::pow(sigma_max, 1.0 / rho);
  const double lo = std::pow(sigma_min, 1.0 / rho);
  for (int i = 0; i < steps; ++i) {
    const double t = double(i) / double(steps - 1);
    sigmas[i] = std::pow(hi + t * (lo - hi), rho);
  }
  // The power round trip drifts the endpoints by a few ulps; pin them.
  sigmas[0] = sigma_max;
  sigmas[steps - 1] = sigma_min;
  sigmas[steps] = 0.0;
  return sigmas;
}

GaussianScoreField::GaussianScoreField(int dim, double scale,
                                       double temperature)
    : dim_(dim), base_variance_(temperature * scale * scale) {
  if (dim < 1 || !(scale > 0.0) || !(temperature > 0.0))
    throw std::invalid_argument("gaussian field: invalid parameters");
}

Eigen::MatrixXd GaussianScoreField::score(const Eigen::MatrixXd& x,
                                          double sigma) const {
  return -x / (base_variance_ + sigma * sigma);
}

ScoreField::ScoreAndJvp GaussianScoreField::score_with_jvp(
    const Eigen::MatrixXd& x, double sigma,
    const Eigen::MatrixXd& probe) const {
  const double v = base_variance_ + sigma * sigma;
  return {-x / v, -probe / v};
}

DenoiserScoreField::DenoiserScoreField(std::shared_ptr<const Denoiser> model)
    : model_(std::move(model)) {
  if (!model_) throw std::invalid_argument("denoiser field: null model");
}

Eigen::MatrixXd DenoiserScoreField::score(const Eigen::MatrixXd& x,
                                          double sigma) const {
  return (model_->denoise(x, sigma) - x) / (sigma * sigma);
}

ScoreField::ScoreAndJvp DenoiserScoreField::score_with_jvp(
    const Eigen::MatrixXd& x, double sigma,
    const Eigen::MatrixXd& probe) const {
  const auto vj = model_->denoise_with_jvp(x, sigma, probe);
  const double s2 = sigma * sigma;
  return {(vj.value - x) / s2, (vj.jvp - probe) / s2};
}

Eigen::MatrixXd sample_ode(const ScoreField& field, int count, Rng& rng,
                           const LadderConfig& ladder) {
  check_ladder(ladder);
  const Eigen::VectorXd sig = ladder.sigmas();
  Eigen::MatrixXd x = ladder.sigma_max * rng.normal_mat(field.dim(), count);
  for (int i = 0; i < ladder.steps; ++i) {
    const Eigen::MatrixXd s = field.score(x, sig[i]);
    x += (sig[i + 1] - sig[i]) * (-sig[i] * s);
  }
  return x;
}

SampleResult sample_ode_with_logq(const ScoreField& field, int count,
                                  Rng& path_rng, Rng& probe_rng,
                                  const LadderConfig& ladder, int probes) {
  check_ladder(ladder);
  if (probes < 1) throw std::invalid_argument("need >= 1 probe");
  const Eigen::VectorXd sig = ladder.sigmas();
  SampleResult result;
  result.samples = ladder.sigma_max * path_rng.normal_mat(field.dim(), count);
  result.log_density = isotropic_log_density(result.samples, ladder.sigma_max);
  for (int i = 0; i < ladder.steps; ++i) {
    const double dsig = sig[i + 1] - sig[i];
    const Eigen::VectorXd trace =
        divergence_estimate(field, result.samples, sig[i], probe_rng, probes);
    const Eigen::MatrixXd s = field.score(result.samples, sig[i]);
    // Along the flow, d(log p)/dsigma = sigma * div(score).
    result.log_density += dsig * sig[i] * trace;
    result.samples += dsig * (-sig[i] * s);
  }
  return result;
}

Eigen::MatrixXd sample_sde(const ScoreField& field, int count, Rng& rng,
                           const LadderConfig& ladder, double churn) {
  check_ladder(ladder);
  if (churn < 0.0) throw std::invalid_argument("churn must be >= 0");
  const Eigen::VectorXd sig = ladder.sigmas();
  Eigen::MatrixXd x = ladder.sigma_max * rng.normal_mat(field.dim(), count);
  const double g2 = churn * churn;
  for (int i = 0; i < ladder.steps; ++i) {
    const double dsig = sig[i + 1] - sig[i];
    const Eigen::MatrixXd s = field.score(x, sig[i]);
    x += dsig * (-(1.0 + g2) * sig[i] * s);
    if (churn > 0.0)
      x += churn * std::sqrt(2.0 * sig[i] * -dsig) *
           rng.normal_mat(field.dim(), count);
  }
  return x;
}

Eigen::VectorXd log_density_forward(const ScoreField& field,
                                    const Eigen::MatrixXd& x, Rng& probe_rng,
                                    const LadderConfig& ladder, int probes) {
  check_ladder(ladder);
  if (x.rows() != field.dim())
    throw std::invalid_argument("log density: dimension mismatch");
  const Eigen::VectorXd sig = ladder.sigmas();
  Eigen::MatrixXd y = x;
  Eigen::VectorXd logq = Eigen::VectorXd::Zero(x.cols());
  // Ascend the noise scales; the data is treated as living at sigma_min.
  for (int i = ladder.steps - 1; i >= 1; --i) {
    const double dsig = sig[i - 1] - sig[i];
    const Eigen::VectorXd trace =
        divergence_estimate(field, y, sig[i], probe_rng, probes);
    const Eigen::MatrixXd s = field.score(y, sig[i]);
    logq -= dsig * sig[i] * trace;
    y += dsig * (-sig[i] * s);
  }
  return logq + isotropic_log_density(y, ladder.sigma_max);
}

TrainStats train_dsm(Denoiser& model, const Eigen::MatrixXd& data,
                     const TrainConfig& config, Rng& rng) {
  if (data.rows() != model.config().dim)
    throw std::invalid_argument("train: data dimension mismatch");
  if (data.cols() < 2) throw std::invalid_argument("train: need >= 2 samples");
  if (config.iterations < 1 || config.batch < 1)
    throw std::invalid_argument("train: invalid schedule");

  // Pooled standard deviation over every coordinate of every sample.
  const Eigen::VectorXd mean = data.rowwise().mean();
  const double pooled_var =
      (data.colwise() - mean).squaredNorm() / double(data.size());
  model.set_sigma_data(
      std::max(std::sqrt(pooled_var), config.sigma_data_floor));

  const double log_sd = std::log(model.sigma_data());
  const int d = model.config().dim;
  const Eigen::Index n = data.cols();

  Adam opt(config.adam);
  Gradients grads;
  Eigen::MatrixXd x0(d, config.batch), noise(d, config.batch);
  Eigen::VectorXd sigma(config.batch);

  TrainStats stats;
  stats.iterations = config.iterations;
  const int window = std::max(1, config.iterations / 10);
  for (int it = 0; it < config.iterations; ++it) {
    for (int j = 0; j < config.batch; ++j) {
      const auto idx = Eigen::Index(rng.uniform() * double(n));
      x0.col(j) = data.col(std::min(idx, n - 1));
      sigma[j] = std::exp(log_sd + config.log_sigma_shift +
                          config.log_sigma_std * rng.normal());
    }
    noise = rng.normal_mat(d, config.batch);
    const double loss = model.loss_and_gradients(x0, sigma, noise, grads);
    opt.step(model, grads);
    if (it < window) stats.first_loss += loss / double(window);
    if (it >= config.iterations - window) stats.last_loss += loss / double(window);
  }
  return stats;
}

}  // namespace ptsd
