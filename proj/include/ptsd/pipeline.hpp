#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "ptsd/buffer.hpp"
#include "ptsd/config.hpp"
#include "ptsd/diffusion.hpp"
#include "ptsd/eval_counter.hpp"
#include "ptsd/mcmc.hpp"
#include "ptsd/network.hpp"

namespace ptsd {

// Decreasing temperature lists, hottest first, endpoints exact. Temperature
// index k in [1, K] counts from the cold end: index 1 is T_min.
std::vector<double> geometric_ladder(double t_min, double t_max, int k);
std::vector<double> linear_ladder(double t_min, double t_max, int k);

// Denoiser per temperature index (1 = coldest). Index 1 is the deliverable.
class ModelBank {
 public:
  ModelBank() = default;
  explicit ModelBank(int count) : models_(std::size_t(count) + 1) {}

  int count() const { return int(models_.size()) - 1; }
  bool has(int index) const {
    return index >= 1 && index <= count() && models_[std::size_t(index)];
  }
  std::shared_ptr<Denoiser> model(int index) const {
    if (!has(index)) throw std::out_of_range("model bank: no model " +
                                             std::to_string(index));
    return models_[std::size_t(index)];
  }
  void put(int index, std::shared_ptr<Denoiser> model) {
    if (index < 1 || index > count())
      throw std::out_of_range("model bank: bad index");
    models_[std::size_t(index)] = std::move(model);
  }
  std::shared_ptr<Denoiser> deliverable() const { return model(1); }

 private:
  std::vector<std::shared_ptr<Denoiser>> models_;
};

// True when both models share architecture, sigma_data, and bit-identical
// parameters.
bool same_model(const Denoiser& a, const Denoiser& b);

struct StageRecord {
  std::string kind;  // init-pt | train | guided-sample | is | refine | clone
  EvalCounter::Counts calls;  // this stage's counter delta
  double wall_seconds = 0.0;
  nlohmann::json detail;

  nlohmann::json to_json() const;
  static StageRecord from_json(const nlohmann::json& j);
};

struct RunManifest {
  static constexpr int kSchemaVersion = 1;

  std::string method;  // ptsd | ptsd-no-guidance | ptsd-no-is | pt-dm
  std::string status = "completed";  // or "failed: <reason>"
  std::uint64_t seed = 0;
  std::string target_name;
  int dim = 0;
  std::vector<double> temperatures;  // ascending, index i holds T_{i+1}
  nlohmann::json config;             // full snapshot, overrides applied
  std::vector<StageRecord> stages;
  EvalCounter::Counts final_calls;
  double wall_seconds = 0.0;
  std::vector<std::string> outputs;  // paths relative to the run directory

  nlohmann::json to_json() const;
  static RunManifest from_json(const nlohmann::json& j);
};

enum class AblateMode { None, NoGuidance, NoIs };

// Replaces the per-temperature score fields derived from trained denoisers,
// letting analytic oracles drive the full loop.
struct PipelineHooks {
  std::function<std::shared_ptr<const ScoreField>(int index,
                                                  double temperature)>
      field;
};

struct RunOutput {
  ModelBank models;
  // buffers[k] holds temperature index k; entry 0 stays empty.
  std::vector<SampleBuffer> buffers;
  RunManifest manifest;
};

// The progressive loop: two-temperature tempering at the hot end, denoiser
// training, then per extrapolation step guided sampling, truncated
// importance resampling, and local tempering refinement, walking the ladder
// down to index 1. When out_dir is non-empty, checkpoints, buffers, and the
// manifest are persisted there (the manifest also on failure).
RunOutput run_ptsd(const RunConfig& cfg,
                   const std::filesystem::path& out_dir = {},
                   const PipelineHooks& hooks = {},
                   AblateMode mode = AblateMode::None);

// Same loop with one component disabled: NoGuidance draws extrapolation
// samples directly from the hotter model; NoIs keeps raw draws instead of
// resampling.
RunOutput ablate(const RunConfig& cfg, AblateMode mode,
                 const std::filesystem::path& out_dir = {},
                 const PipelineHooks& hooks = {});

struct PtdmOutput {
  std::shared_ptr<Denoiser> model;
  SampleBuffer buffer;  // subsampled coldest-chain states
  RunManifest manifest;
};

// Baseline: full K-temperature tempering, then one denoiser fit to the
// coldest chain's subsampled states.
PtdmOutput run_ptdm(const RunConfig& cfg,
                    const std::filesystem::path& out_dir = {});

}  // namespace ptsd
