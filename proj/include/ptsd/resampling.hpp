#pragma once

#include <Eigen/Dense>
#include <vector>

#include "ptsd/rng.hpp"
#include "ptsd/targets.hpp"

namespace ptsd {

struct ImportanceWeights {
  Eigen::VectorXd log_weights;  // unnormalized; -inf marks unusable draws
  Eigen::VectorXd base_energy;  // cached for later reuse, NaN when non-finite
};

// log w = -E(x)/T - log q(x) per column. Every column costs exactly one
// energy evaluation; columns with non-finite energy or log density get
// weight zero.
ImportanceWeights importance_log_weights(const TemperedTarget& target,
                                         const Eigen::MatrixXd& x,
                                         const Eigen::VectorXd& log_q);

// Caps log weights at the quantile-level order statistic of the finite
// entries (ascending, index ceil(quantile n) - 1). quantile = 1 keeps all
// weights. Returns capped, still unnormalized log weights.
Eigen::VectorXd truncate_log_weights(const Eigen::VectorXd& log_weights,
                                     double quantile);

// Shift-stable softmax; -inf entries map to probability zero. Throws if no
// entry is finite.
Eigen::VectorXd normalize_log_weights(const Eigen::VectorXd& log_weights);

// Draws count indices from the given categorical distribution.
std::vector<int> resample_categorical(const Eigen::VectorXd& probabilities,
                                      int count, Rng& rng);

// 1 / sum p_i^2: the equivalent number of equally weighted samples.
double effective_sample_size(const Eigen::VectorXd& probabilities);

}  // namespace ptsd
