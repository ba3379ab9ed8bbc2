#include "ptsd/network.hpp"

#include <cmath>
#include <stdexcept>

namespace ptsd {

namespace {

Eigen::ArrayXXd silu(const Eigen::ArrayXXd& z) {
  return z / (1.0 + (-z).exp());
}

Eigen::ArrayXXd silu_derivative(const Eigen::ArrayXXd& z) {
  const Eigen::ArrayXXd s = 1.0 / (1.0 + (-z).exp());
  return s * (1.0 + z * (1.0 - s));
}

void check_sigma(double sigma) {
  if (!(sigma > 0.0) || !std::isfinite(sigma))
    throw std::invalid_argument("denoiser: sigma must be positive and finite");
}

}  // namespace

Denoiser::Denoiser(const MlpConfig& config, Rng& rng) : config_(config) {
  if (config.dim < 1 || config.width < 1 || config.hidden_layers < 1)
    throw std::invalid_argument("denoiser: invalid architecture");
  const int in = config.dim + 1;  // one channel carries the noise level
  std::vector<int> sizes;
  sizes.push_back(in);
  for (int l = 0; l < config.hidden_layers; ++l) sizes.push_back(config.width);
  sizes.push_back(config.dim);

  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    const int rows = sizes[l + 1], cols = sizes[l];
    if (l + 2 == sizes.size()) {
      // Zero head: the fresh model denoises to c_skip x.
      weights_.emplace_back(Eigen::MatrixXd::Zero(rows, cols));
    } else {
      const double scale = 1.0 / std::sqrt(double(cols));
      weights_.emplace_back(scale * rng.normal_mat(rows, cols));
    }
    biases_.emplace_back(Eigen::VectorXd::Zero(rows));
  }
}

void Denoiser::set_sigma_data(double value) {
  if (!(value > 0.0) || !std::isfinite(value))
    throw std::invalid_argument("denoiser: sigma_data must be positive");
  sigma_data_ = value;
}

double Denoiser::c_skip(double sigma) const {
  const double sd2 = sigma_data_ * sigma_data_;
  return sd2 / (sd2 + sigma * sigma);
}

double Denoiser::c_out(double sigma) const {
  const double sd2 = sigma_data_ * sigma_data_;
  return sigma * sigma_data_ / std::sqrt(sd2 + sigma * sigma);
}

double Denoiser::c_in(double sigma) const {
  const double sd2 = sigma_data_ * sigma_data_;
  return 1.0 / std::sqrt(sd2 + sigma * sigma);
}

double Denoiser::c_noise(double sigma) { return 0.25 * std::log(sigma); }

Eigen::MatrixXd Denoiser::raw_forward(const Eigen::MatrixXd& u) const {
  Eigen::MatrixXd a = u;
  const int last = linear_layers() - 1;
  for (int l = 0; l < last; ++l) {
    Eigen::MatrixXd z = weights_[l] * a;
    z.colwise() += biases_[l];
    a = silu(z.array()).matrix();
  }
  Eigen::MatrixXd out = weights_[last] * a;
  out.colwise() += biases_[last];
  return out;
}

Eigen::MatrixXd Denoiser::denoise(const Eigen::MatrixXd& x,
                                  double sigma) const {
  check_sigma(sigma);
  if (x.rows() != config_.dim)
    throw std::invalid_argument("denoiser: dimension mismatch");
  Eigen::MatrixXd u(config_.dim + 1, x.cols());
  u.topRows(config_.dim) = c_in(sigma) * x;
  u.row(config_.dim).setConstant(c_noise(sigma));
  return c_skip(sigma) * x + c_out(sigma) * raw_forward(u);
}

Eigen::MatrixXd Denoiser::denoise(const Eigen::MatrixXd& x,
                                  const Eigen::VectorXd& sigma) const {
  if (x.rows() != config_.dim)
    throw std::invalid_argument("denoiser: dimension mismatch");
  if (sigma.size() != x.cols())
    throw std::invalid_argument("denoiser: one sigma per column");
  const Eigen::Index n = x.cols();
  Eigen::RowVectorXd cs(n), co(n), ci(n), cn(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    check_sigma(sigma[i]);
    cs[i] = c_skip(sigma[i]);
    co[i] = c_out(sigma[i]);
    ci[i] = c_in(sigma[i]);
    cn[i] = c_noise(sigma[i]);
  }
  Eigen::MatrixXd u(config_.dim + 1, n);
  u.topRows(config_.dim) = x.array().rowwise() * ci.array();
  u.row(config_.dim) = cn;
  const Eigen::MatrixXd f = raw_forward(u);
  return (x.array().rowwise() * cs.array() +
          f.array().rowwise() * co.array())
      .matrix();
}

Denoiser::ValueAndJvp Denoiser::denoise_with_jvp(
    const Eigen::MatrixXd& x, double sigma,
    const Eigen::MatrixXd& probe) const {
  check_sigma(sigma);
  if (x.rows() != config_.dim || probe.rows() != x.rows() ||
      probe.cols() != x.cols())
    throw std::invalid_argument("denoiser: probe shape mismatch");

  Eigen::MatrixXd u(config_.dim + 1, x.cols());
  u.topRows(config_.dim) = c_in(sigma) * x;
  u.row(config_.dim).setConstant(c_noise(sigma));
  // The noise channel does not vary with x, so its tangent row is zero.
  Eigen::MatrixXd t(config_.dim + 1, x.cols());
  t.topRows(config_.dim) = c_in(sigma) * probe;
  t.row(config_.dim).setZero();

  Eigen::MatrixXd a = u;
  const int last = linear_layers() - 1;
  for (int l = 0; l < last; ++l) {
    Eigen::MatrixXd z = weights_[l] * a;
    z.colwise() += biases_[l];
    const Eigen::ArrayXXd dz = silu_derivative(z.array());
    t = ((weights_[l] * t).array() * dz).matrix();
    a = silu(z.array()).matrix();
  }
  Eigen::MatrixXd f = weights_[last] * a;
  f.colwise() += biases_[last];
  const Eigen::MatrixXd tf = weights_[last] * t;

  ValueAndJvp result;
  result.value = c_skip(sigma) * x + c_out(sigma) * f;
  result.jvp = c_skip(sigma) * probe + c_out(sigma) * tf;
  return result;
}

double Denoiser::loss_and_gradients(const Eigen::MatrixXd& x0,
                                    const Eigen::VectorXd& sigma,
                                    const Eigen::MatrixXd& noise,
                                    Gradients& grads) const {
  const Eigen::Index n = x0.cols();
  if (x0.rows() != config_.dim || noise.rows() != x0.rows() ||
      noise.cols() != n || sigma.size() != n)
    throw std::invalid_argument("denoiser: training batch shape mismatch");

  Eigen::RowVectorXd cs(n), co(n), ci(n), cn(n), sig(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    check_sigma(sigma[i]);
    sig[i] = sigma[i];
    cs[i] = c_skip(sigma[i]);
    co[i] = c_out(sigma[i]);
    ci[i] = c_in(sigma[i]);
    cn[i] = c_noise(sigma[i]);
  }
  const Eigen::MatrixXd x =
      x0 + (noise.array().rowwise() * sig.array()).matrix();
  // Output-head regression target; dividing by c_out absorbs the loss weight.
  const Eigen::MatrixXd target =
      ((x0 - (x.array().rowwise() * cs.array()).matrix()).array().rowwise() /
       co.array())
          .matrix();

  const int layers = linear_layers();
  std::vector<Eigen::MatrixXd> inputs(layers);  // input to each linear layer
  std::vector<Eigen::ArrayXXd> pre(layers - 1);

  Eigen::MatrixXd a(config_.dim + 1, n);
  a.topRows(config_.dim) = x.array().rowwise() * ci.array();
  a.row(config_.dim) = cn;
  for (int l = 0; l < layers - 1; ++l) {
    inputs[l] = a;
    Eigen::MatrixXd z = weights_[l] * a;
    z.colwise() += biases_[l];
    pre[l] = z.array();
    a = silu(pre[l]).matrix();
  }
  inputs[layers - 1] = a;
  Eigen::MatrixXd f = weights_[layers - 1] * a;
  f.colwise() += biases_[layers - 1];

  const Eigen::MatrixXd residual = f - target;
  const double loss = residual.squaredNorm() / double(n);

  if (int(grads.weights.size()) != layers) {
    grads.weights.assign(layers, {});
    grads.biases.assign(layers, {});
  }
  Eigen::MatrixXd delta = (2.0 / double(n)) * residual;
  for (int l = layers - 1; l >= 0; --l) {
    grads.weights[l].noalias() = delta * inputs[l].transpose();
    grads.biases[l] = delta.rowwise().sum();
    if (l > 0)
      delta = ((weights_[l].transpose() * delta).array() *
               silu_derivative(pre[l - 1]))
                  .matrix();
  }
  return loss;
}

std::uint64_t Denoiser::parameter_count() const {
  std::uint64_t total = 0;
  for (const auto& w : weights_) total += std::uint64_t(w.size());
  for (const auto& b : biases_) total += std::uint64_t(b.size());
  return total;
}

void Adam::step(Denoiser& model, const Gradients& grads) {
  const int layers = model.linear_layers();
  if (int(grads.weights.size()) != layers)
    throw std::invalid_argument("adam: gradient layer count mismatch");
  if (m_weights_.empty()) {
    for (int l = 0; l < layers; ++l) {
      m_weights_.push_back(Eigen::MatrixXd::Zero(model.weight(l).rows(),
                                                 model.weight(l).cols()));
      v_weights_.push_back(m_weights_.back());
      m_biases_.push_back(Eigen::VectorXd::Zero(model.bias(l).size()));
      v_biases_.push_back(m_biases_.back());
    }
  }

  ++step_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double corr1 = 1.0 - std::pow(b1, double(step_));
  const double corr2 = 1.0 - std::pow(b2, double(step_));

  auto update = [&](auto& param, auto& m, auto& v, const auto& g) {
    m = b1 * m + (1.0 - b1) * g;
    v = (b2 * v.array() + (1.0 - b2) * g.array().square()).matrix();
    param.array() -= config_.learning_rate * (m.array() / corr1) /
                     ((v.array() / corr2).sqrt() + config_.epsilon);
  };
  for (int l = 0; l < layers; ++l) {
    update(model.weight(l), m_weights_[l], v_weights_[l], grads.weights[l]);
    update(model.bias(l), m_biases_[l], v_biases_[l], grads.biases[l]);
  }
}

void Adam::reset() {
  step_ = 0;
  m_weights_.clear();
  v_weights_.clear();
  m_biases_.clear();
  v_biases_.clear();
}

}  // namespace ptsd
