#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "ptsd/rng.hpp"

namespace ptsd {

struct MlpConfig {
  int dim = 0;
  int width = 256;
  int hidden_layers = 5;

  bool operator==(const MlpConfig&) const = default;
};

// Parameter gradients, one tensor per linear layer.
struct Gradients {
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;
};

// Denoiser D(x, sigma) = c_skip x + c_out F(c_in x, c_noise) where F is a
// SiLU MLP over the scaled input plus one noise-level channel. The output
// head starts at zero, so a fresh model predicts c_skip x and its induced
// score matches an isotropic Gaussian of scale sigma_data.
class Denoiser {
 public:
  Denoiser() = default;
  Denoiser(const MlpConfig& config, Rng& rng);

  const MlpConfig& config() const { return config_; }
  double sigma_data() const { return sigma_data_; }
  void set_sigma_data(double value);

  double c_skip(double sigma) const;
  double c_out(double sigma) const;
  double c_in(double sigma) const;
  static double c_noise(double sigma);

  // Denoised prediction for each column of x.
  Eigen::MatrixXd denoise(const Eigen::MatrixXd& x, double sigma) const;
  Eigen::MatrixXd denoise(const Eigen::MatrixXd& x,
                          const Eigen::VectorXd& sigma) const;

  struct ValueAndJvp {
    Eigen::MatrixXd value;
    Eigen::MatrixXd jvp;  // dD/dx applied column-wise to the probe
  };
  // Shares one forward pass between the value and the directional derivative.
  ValueAndJvp denoise_with_jvp(const Eigen::MatrixXd& x, double sigma,
                               const Eigen::MatrixXd& probe) const;

  // Mean over columns of |F - (x0 - c_skip x)/c_out|^2, the noise-weighted
  // denoising objective in output-head coordinates. x = x0 + sigma * noise
  // column-wise. Fills `grads` (resized as needed) with parameter gradients.
  double loss_and_gradients(const Eigen::MatrixXd& x0,
                            const Eigen::VectorXd& sigma,
                            const Eigen::MatrixXd& noise,
                            Gradients& grads) const;

  int linear_layers() const { return int(weights_.size()); }
  const Eigen::MatrixXd& weight(int layer) const { return weights_[layer]; }
  const Eigen::VectorXd& bias(int layer) const { return biases_[layer]; }
  Eigen::MatrixXd& weight(int layer) { return weights_[layer]; }
  Eigen::VectorXd& bias(int layer) { return biases_[layer]; }
  std::uint64_t parameter_count() const;

 private:
  // Raw MLP over preconditioned input u (dim+1 rows: scaled x, then c_noise).
  Eigen::MatrixXd raw_forward(const Eigen::MatrixXd& u) const;

  MlpConfig config_;
  double sigma_data_ = 1.0;
  std::vector<Eigen::MatrixXd> weights_;
  std::vector<Eigen::VectorXd> biases_;
};

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

class Adam {
 public:
  explicit Adam(const AdamConfig& config = {}) : config_(config) {}

  const AdamConfig& config() const { return config_; }
  std::int64_t steps_taken() const { return step_; }

  // One update over every parameter tensor. Moment state is created on first
  // use and must keep matching the model's shapes afterwards.
  void step(Denoiser& model, const Gradients& grads);

  void reset();

 private:
  AdamConfig config_;
  std::int64_t step_ = 0;
  std::vector<Eigen::MatrixXd> m_weights_, v_weights_;
  std::vector<Eigen::VectorXd> m_biases_, v_biases_;
};

}  // namespace ptsd
