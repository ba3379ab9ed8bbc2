#pragma once

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "ptsd/diffusion.hpp"
#include "ptsd/network.hpp"

namespace ptsd {

struct TemperatureSchedule {
  double min = 1.0;
  double max = 10.0;
  int count = 3;                     // K, index 1 = coldest
  std::string ladder = "geometric";  // or "linear"

  bool operator==(const TemperatureSchedule&) const = default;
};

struct InitPtSettings {
  int chains = 10;
  int steps = 1000;  // L
  int burn_in = 100;
  int subsample_interval = 1;
  int swap_interval = 5;
  double step_size = 0.1;  // per-level step is step_size * T
  double init_scale = 1.0;

  bool operator==(const InitPtSettings&) const = default;
};

struct TrainingSettings {
  int iterations = 10000;  // M
  int batch = 1000;
  double learning_rate = 1e-3;
  int width = 256;
  int hidden_layers = 5;

  bool operator==(const TrainingSettings&) const = default;
};

struct DiffusionSettings {
  int steps = 100;
  double sigma_max = 40.0;
  double sigma_min = 0.002;
  double rho = 7.0;
  int hutchinson_probes = 1;

  bool operator==(const DiffusionSettings&) const = default;
};

struct RefineSettings {
  int steps = 5;  // l
  int swap_interval = 5;
  double step_size = 0.1;     // per-level step is step_size * T
  std::string mode = "full";  // or "subset"
  int subset_size = 0;        // S, subset mode only
  int thinning = 1;           // j, subset mode only

  bool operator==(const RefineSettings&) const = default;
};

struct ResampleSettings {
  double quantile = 0.8;  // truncation tau
  bool last_step = true;  // resample at the final extrapolation

  bool operator==(const ResampleSettings&) const = default;
};

struct RunConfig {
  nlohmann::json target;  // forwarded to make_target
  TemperatureSchedule temperature;
  int buffer = 1000;  // B
  InitPtSettings init_pt;
  TrainingSettings training;
  DiffusionSettings diffusion;
  RefineSettings refine;
  ResampleSettings resample;
  std::uint64_t seed = 0;
  int threads = 1;

  // Hottest first, endpoints exact; k_min is 3 for the progressive loop and
  // 2 for the tempering baseline.
  std::vector<double> temperatures_descending() const;
  void validate(int k_min) const;

  LadderConfig ladder() const;
  TrainConfig train_config() const;
  MlpConfig mlp_config(int dim) const;

  nlohmann::json to_json() const;
  // Strict: unknown keys anywhere are errors.
  static RunConfig from_json(const nlohmann::json& j);

  bool operator==(const RunConfig&) const = default;
};

RunConfig load_run_config(const std::filesystem::path& path);

// "a.b.c=value" handling for command-line overrides: descends (creating
// objects as needed) and assigns the parsed value. Values that parse as
// JSON keep that type; everything else becomes a string.
nlohmann::json parse_override_value(std::string_view text);
void apply_override(nlohmann::json& config, std::string_view dotted_key,
                    std::string_view value);

}  // namespace ptsd
