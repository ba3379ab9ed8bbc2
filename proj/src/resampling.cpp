#include "ptsd/resampling.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace ptsd {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
}

ImportanceWeights importance_log_weights(const TemperedTarget& target,
                                         const Eigen::MatrixXd& x,
                                         const Eigen::VectorXd& log_q) {
  if (x.cols() != log_q.size())
    throw std::invalid_argument("importance weights: one log density per column");
  ImportanceWeights out;
  out.log_weights.resize(x.cols());
  out.base_energy.resize(x.cols());
  for (Eigen::Index i = 0; i < x.cols(); ++i) {
    const double e = target.base_energy(x.col(i));
    if (std::isfinite(e) && std::isfinite(log_q[i])) {
      out.base_energy[i] = e;
      out.log_weights[i] = -e / target.temperature() - log_q[i];
    } else {
      out.base_energy[i] = std::numeric_limits<double>::quiet_NaN();
      out.log_weights[i] = kNegInf;
    }
  }
  return out;
}

Eigen::VectorXd truncate_log_weights(const Eigen::VectorXd& log_weights,
                                     double quantile) {
  if (!(quantile > 0.0) || quantile > 1.0)
    throw std::invalid_argument("truncation: quantile in (0, 1]");
  std::vector<double> finite;
  finite.reserve(std::size_t(log_weights.size()));
  for (Eigen::Index i = 0; i < log_weights.size(); ++i)
    if (std::isfinite(log_weights[i])) finite.push_back(log_weights[i]);
  if (finite.empty())
    throw std::invalid_argument("truncation: no finite weights");

  const auto n = double(finite.size());
  const auto rank = std::size_t(std::ceil(quantile * n)) - 1;
  std::nth_element(finite.begin(), finite.begin() + long(rank), finite.end());
  const double cap = finite[rank];
  return log_weights.cwiseMin(cap);
}

Eigen::VectorXd normalize_log_weights(const Eigen::VectorXd& log_weights) {
  const double peak = log_weights.maxCoeff();
  if (!std::isfinite(peak))
    throw std::invalid_argument("normalization: no finite weights");
  Eigen::VectorXd p = (log_weights.array() - peak).exp();
  // exp(-inf - peak) is exactly zero, so unusable draws drop out here.
  return p / p.sum();
}

std::vector<int> resample_categorical(const Eigen::VectorXd& probabilities,
                                      int count, Rng& rng) {
  if (count < 0) throw std::invalid_argument("resampling: negative count");
  if (probabilities.size() == 0)
    throw std::invalid_argument("resampling: empty distribution");
  std::vector<double> cumulative(std::size_t(probabilities.size()));
  double acc = 0.0;
  for (Eigen::Index i = 0; i < probabilities.size(); ++i) {
    acc += probabilities[i];
    cumulative[std::size_t(i)] = acc;
  }
  std::vector<int> picks(static_cast<std::size_t>(count));
  for (auto& idx : picks) {
    const auto it = std::upper_bound(cumulative.begin(), cumulative.end(),
                                     rng.uniform());
    idx = int(std::min<std::ptrdiff_t>(it - cumulative.begin(),
                                       probabilities.size() - 1));
  }
  return picks;
}

double effective_sample_size(const Eigen::VectorXd& probabilities) {
  const double ss = probabilities.squaredNorm();
  if (!(ss > 0.0)) throw std::invalid_argument("ess: empty distribution");
  return 1.0 / ss;
}

}  // namespace ptsd
