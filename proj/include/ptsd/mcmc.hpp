#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "ptsd/buffer.hpp"
#include "ptsd/targets.hpp"

namespace ptsd {

// Chain state with base-scale (T=1) caches so tempered values at any T are a
// division away and replica swaps cost no extra target calls.
struct ChainState {
  Eigen::VectorXd x;
  double base_energy = 0.0;
  Eigen::VectorXd base_gradient;
};

// Evaluates whichever caches are missing (counted) and returns a ready state.
ChainState make_chain_state(const TemperedTarget& target, Eigen::VectorXd x);

// One MALA proposal x' = x - h grad U(x) + sqrt(2h) xi against the tempered
// energy U = E/T, with the exact forward/reverse proposal correction. A
// non-finite proposal energy or gradient rejects. Costs 1 energy + 1 gradient
// call; h = 0 degenerates to staying put with acceptance 1.
bool mala_step(const TemperedTarget& target, ChainState& state, double step_size,
               Rng& rng);

// Replica-swap acceptance between states at T_i and T_j whose base (T=1)
// energies are e_i and e_j: min(1, exp(-(e_j - e_i) (1/T_i - 1/T_j))).
double pt_swap_probability(double e_i, double e_j, double t_i, double t_j);

// Swaps the two states (coordinates and caches) when the draw accepts.
bool attempt_swap(ChainState& state_i, ChainState& state_j, double t_i,
                  double t_j, Rng& rng);

struct PtSchedule {
  std::vector<double> temperatures;  // ascending, coldest first
  std::vector<double> step_sizes;    // one per level
  int swap_interval = 5;

  void validate() const;
};

struct PtRunConfig {
  int chains = 1;  // independent replica ladders
  int steps = 0;
  int burn_in = 0;
  int subsample_interval = 1;
  std::uint64_t seed = 0;
  int threads = 1;
  // Initial state draw per (chain, level); defaults to init_scale * N(0, I).
  double init_scale = 1.0;
  std::function<Eigen::VectorXd(int chain, int level, Rng&)> init;
};

struct PtStats {
  std::vector<std::uint64_t> proposals;      // per level
  std::vector<std::uint64_t> accepts;        // per level
  std::vector<std::uint64_t> swap_attempts;  // per adjacent pair
  std::vector<std::uint64_t> swap_accepts;

  double acceptance_rate(int level) const {
    return proposals[level] ? double(accepts[level]) / double(proposals[level])
                            : 0.0;
  }
  double swap_rate(int pair) const {
    return swap_attempts[pair]
               ? double(swap_accepts[pair]) / double(swap_attempts[pair])
               : 0.0;
  }
};

struct PtResult {
  std::vector<SampleBuffer> buffers;  // one per level, subsampled states
  PtStats stats;
};

// Parallel tempering: `chains` independent ladders, each with one replica per
// temperature. Within a ladder every step advances all replicas by one MALA
// proposal; every swap_interval steps adjacent pairs attempt to swap, pairs of
// even parity alternating with odd parity (the single pair always attempts
// when there are only two levels). States are collected into per-level buffers
// after burn-in, every subsample_interval steps. Deterministic for a fixed
// seed under any thread count: each ladder owns a derived substream.
PtResult run_pt(std::shared_ptr<const EnergyTarget> target,
                std::shared_ptr<EvalCounter> counter, const PtSchedule& schedule,
                const PtRunConfig& config);

enum class RefineMode { Full, Subset };

struct RefineConfig {
  int steps = 0;
  double cold_step = 0.1;
  double hot_step = 0.1;
  int swap_interval = 5;
  RefineMode mode = RefineMode::Full;
  int subset_size = 0;  // Subset mode: how many pairs run
  int thinning = 1;     // Subset mode: append every thinning-th state
  std::uint64_t seed = 0;
  int threads = 1;
};

struct RefineStats {
  std::uint64_t swap_attempts = 0;
  std::uint64_t swap_accepts = 0;
  std::uint64_t cold_proposals = 0;
  std::uint64_t cold_accepts = 0;
  std::uint64_t hot_proposals = 0;
  std::uint64_t hot_accepts = 0;
  int appended = 0;  // per-buffer appended rows in Subset mode
};

// Local PT polish over paired buffers: pair i couples cold row i with hot row
// i (or a uniformly drawn hot row when counts differ) and runs a 2-temperature
// PT process for `steps` steps. Full mode overwrites both buffers with the
// final chain states; Subset mode runs only subset_size random pairs and
// appends every thinning-th visited state to the respective buffer, leaving
// existing rows in place. steps = 0 is a no-op. Missing row caches are
// evaluated (and counted) before chains start.
RefineStats local_pt_refine(SampleBuffer& cold, SampleBuffer& hot,
                            std::shared_ptr<const EnergyTarget> target,
                            std::shared_ptr<EvalCounter> counter,
                            const RefineConfig& config);

}  // namespace ptsd
