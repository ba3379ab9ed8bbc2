#pragma once

#include <Eigen/Dense>
#include <json.hpp>
#include <optional>

#include "ptsd/diffusion.hpp"
#include "ptsd/rng.hpp"
#include "ptsd/targets.hpp"

namespace ptsd {

// Exact optimal assignment cost for a dense square cost matrix (shortest
// augmenting paths with dual potentials, O(n^3)).
double assignment_cost(const Eigen::MatrixXd& cost);

// Columns reshaped to 3 x particles and centered on their particle mean;
// shared by alignment metrics and by training on translation-invariant
// targets.
Eigen::MatrixXd center_particle_blocks(const Eigen::MatrixXd& x);

// Root mean squared distance under the optimal pairing of equal-size sample
// sets (columns). aligned pre-aligns every candidate pair by the optimal
// rigid motion of 3D particle blocks before computing its cost.
double wasserstein2(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                    bool aligned = false);

// Half L1 distance between normalized histograms of the two energy samples
// over a shared binning. The bin range spans the pooled energies with the
// top clip fraction winsorized into the last bin.
double energy_tvd(const Eigen::VectorXd& ex, const Eigen::VectorXd& ey,
                  int bins = 200, double clip = 0.001);

// Unbiased two-sample kernel statistic on scalar energies, Gaussian kernel,
// bandwidth = median pooled pairwise distance. Can be negative by chance.
double energy_mmd_squared(const Eigen::VectorXd& ex, const Eigen::VectorXd& ey);

// sqrt of the clamped unbiased statistic.
double energy_mmd(const Eigen::VectorXd& ex, const Eigen::VectorXd& ey);

// Mean of the quadratic observable (x-a)^T C (x-a) over columns.
// center_particles subtracts each column's per-particle (3D block) mean
// first, matching how translation-invariant targets are reported.
double observable_mean(const Eigen::MatrixXd& x, const Eigen::VectorXd& a,
                       const Eigen::MatrixXd& c, bool center_particles = false);

double observable_mae(const Eigen::MatrixXd& x, const Eigen::MatrixXd& ref,
                      const Eigen::VectorXd& a, const Eigen::MatrixXd& c,
                      bool center_particles = false);

struct EvalReport {
  double w2 = 0.0;
  double tvd = 0.0;
  double mmd = 0.0;
  double observable_mae = 0.0;
  std::optional<double> mean_loglik;
  int model_count = 0;
  int reference_count = 0;
  int paired_count = 0;      // samples used for the assignment metric
  int histogram_count = 0;   // samples used for tvd / mmd per set
  int histogram_bins = 0;
  double histogram_clip = 0.0;
  std::uint64_t eval_energy_calls = 0;

  nlohmann::json to_json() const;
};

struct EvalOptions {
  std::uint64_t seed = 0;
  int max_pairs = 2000;      // assignment metric cap
  int max_histogram = 10000; // energy metric cap
  int bins = 200;
  double clip = 0.001;
  bool kabsch = false;
  bool center_particles = false;
  // Quadratic observable; defaults to a = 0, C = I when left empty.
  Eigen::VectorXd observable_a;
  Eigen::MatrixXd observable_c;
  // When set, mean log density of reference points under this field.
  const ScoreField* density = nullptr;
  LadderConfig ladder;
  int density_points = 512;
  int density_probes = 8;  // likelihood reporting wants a low-variance trace
};

// Computes every applicable metric between model samples and reference
// samples (columns), subsampling deterministically from the seed. Target
// energies used here are evaluation-only and never touch a run budget.
EvalReport evaluate(const Eigen::MatrixXd& samples,
                    const Eigen::MatrixXd& reference,
                    const EnergyTarget& target, const EvalOptions& options);

}  // namespace ptsd
