#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include "ptsd/config.hpp"
#include "ptsd/diffusion.hpp"
#include "ptsd/io.hpp"
#include "ptsd/metrics.hpp"
#include "ptsd/pipeline.hpp"
#include "ptsd/targets.hpp"

namespace fs = std::filesystem;
using namespace ptsd;

namespace {

// Setup problems (bad flags, unreadable inputs, invalid configs) exit 1;
// failures after a run has started exit 2, with the manifest already flushed
// by the pipeline.
constexpr int kConfigError = 1;
constexpr int kRuntimeError = 2;

struct RunArgs {
  std::string config_path;
  std::string out_dir;
  std::vector<std::string> overrides;
  std::int64_t seed = -1;
  int threads = 0;
};

void add_run_options(CLI::App& cmd, RunArgs& args) {
  cmd.add_option("--config", args.config_path, "Run configuration JSON")
      ->required();
  cmd.add_option("--out", args.out_dir,
                 "Output directory (default <root>/<config>-<method>-s<seed>)");
  cmd.add_option("--set", args.overrides,
                 "Override a config entry, dotted.key=value (repeatable)");
  cmd.add_option("--seed", args.seed, "Override config seed");
  cmd.add_option("--threads", args.threads, "Override config threads");
}

RunConfig load_with_overrides(const RunArgs& args) {
  nlohmann::json j = read_json(args.config_path);
  for (const auto& kv : args.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0)
      throw std::invalid_argument("--set expects dotted.key=value, got '" +
                                  kv + "'");
    apply_override(j, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (args.seed >= 0) j["seed"] = args.seed;
  if (args.threads > 0) j["threads"] = args.threads;
  return RunConfig::from_json(j);
}

fs::path resolve_out_dir(const RunArgs& args, const std::string& method,
                         const RunConfig& cfg) {
  if (!args.out_dir.empty()) return args.out_dir;
  const char* env = std::getenv("PTSD_OUTPUT_ROOT");
  const fs::path root = env && *env ? fs::path(env) : fs::path("runs");
  const std::string stem = fs::path(args.config_path).stem().string();
  return root / (stem + "-" + method + "-s" + std::to_string(cfg.seed));
}

void report_run(const RunManifest& m, const fs::path& dir) {
  std::cout << m.method << " finished: " << m.final_calls.total()
            << " target calls (" << m.final_calls.energy << " energy, "
            << m.final_calls.gradient << " gradient), "
            << m.wall_seconds << " s\n"
            << "manifest: " << (dir / "manifest.json").string() << "\n";
}

int run_command(const RunArgs& args, const std::string& method,
                AblateMode mode) {
  RunConfig cfg;
  fs::path dir;
  try {
    cfg = load_with_overrides(args);
    cfg.validate(method == "pt-dm" ? 2 : 3);
    dir = resolve_out_dir(args, method, cfg);
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  }
  try {
    if (method == "pt-dm") {
      const PtdmOutput out = run_ptdm(cfg, dir);
      report_run(out.manifest, dir);
    } else {
      const RunOutput out = run_ptsd(cfg, dir, {}, mode);
      report_run(out.manifest, dir);
    }
  } catch (const std::exception& e) {
    std::cerr << "run failed: " << e.what() << "\n";
    return kRuntimeError;
  }
  return 0;
}

nlohmann::json parse_target_spec(const std::string& text) {
  if (!text.empty() && text.front() == '{') return nlohmann::json::parse(text);
  return read_json(text);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Progressive tempering sampler with diffusion"};
  app.require_subcommand(1);

  RunArgs run_args;
  CLI::App* run = app.add_subcommand("run", "Execute the progressive pipeline");
  add_run_options(*run, run_args);

  RunArgs ptdm_args;
  CLI::App* ptdm = app.add_subcommand(
      "baseline-ptdm", "Tempering baseline: full-ladder PT plus one denoiser");
  add_run_options(*ptdm, ptdm_args);

  RunArgs ablate_args;
  std::string ablate_mode;
  CLI::App* ablate_cmd =
      app.add_subcommand("ablate", "Pipeline with one component disabled");
  add_run_options(*ablate_cmd, ablate_args);
  ablate_cmd
      ->add_option("--mode", ablate_mode, "no-guidance or no-is")
      ->required()
      ->check(CLI::IsMember({"no-guidance", "no-is"}));

  std::string ckpt_path, sample_out, sampler = "ode";
  int sample_count = 1000;
  double churn = 1.0;
  std::uint64_t sample_seed = 0;
  LadderConfig sample_ladder;
  CLI::App* sample = app.add_subcommand("sample", "Draw from a saved model");
  sample->add_option("--checkpoint", ckpt_path, "Model checkpoint")->required();
  sample->add_option("--count", sample_count, "Number of samples");
  sample->add_option("--sampler", sampler, "ode or sde")
      ->check(CLI::IsMember({"ode", "sde"}));
  sample->add_option("--churn", churn, "SDE noise scale (0 = deterministic)");
  sample->add_option("--seed", sample_seed, "Sampling seed");
  sample->add_option("--steps", sample_ladder.steps, "Integration steps");
  sample->add_option("--sigma-max", sample_ladder.sigma_max, "Top noise scale");
  sample->add_option("--sigma-min", sample_ladder.sigma_min, "Bottom noise scale");
  sample->add_option("--out", sample_out, "Output samples (.csv or .bin)")
      ->required();

  std::string eval_samples, eval_reference, eval_target, eval_out, eval_ckpt;
  EvalOptions eval_options;
  CLI::App* evaluate_cmd =
      app.add_subcommand("evaluate", "Compare samples against a reference");
  evaluate_cmd->add_option("--samples", eval_samples, "Model samples file")
      ->required();
  evaluate_cmd->add_option("--reference", eval_reference, "Reference samples file")
      ->required();
  evaluate_cmd
      ->add_option("--target", eval_target,
                   "Target spec: inline JSON or a file path")
      ->required();
  evaluate_cmd->add_option("--out", eval_out, "Report JSON (default stdout)");
  evaluate_cmd->add_option("--checkpoint", eval_ckpt,
                           "Score reference points under this model");
  evaluate_cmd->add_option("--eval-seed", eval_options.seed, "Subsampling seed");
  evaluate_cmd->add_option("--max-pairs", eval_options.max_pairs,
                           "Assignment metric cap");
  evaluate_cmd->add_option("--max-histogram", eval_options.max_histogram,
                           "Energy metric cap");
  evaluate_cmd->add_option("--sigma-max", eval_options.ladder.sigma_max,
                           "Likelihood integration top scale");
  evaluate_cmd->add_flag("--kabsch", eval_options.kabsch,
                         "Align sample pairs before W2");
  evaluate_cmd->add_flag("--center", eval_options.center_particles,
                         "Center particle blocks for observables");

  std::vector<std::string> report_runs;
  std::string report_out;
  CLI::App* report = app.add_subcommand("report", "Aggregate runs into CSV");
  report->add_option("runs", report_runs, "Run directories")->required();
  report->add_option("--out", report_out, "CSV path (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kConfigError;
  }

  if (run->parsed()) return run_command(run_args, "ptsd", AblateMode::None);
  if (ptdm->parsed()) return run_command(ptdm_args, "pt-dm", AblateMode::None);
  if (ablate_cmd->parsed())
    return run_command(ablate_args,
                       ablate_mode == "no-is" ? "ptsd-no-is" : "ptsd-no-guidance",
                       ablate_mode == "no-is" ? AblateMode::NoIs
                                              : AblateMode::NoGuidance);

  if (sample->parsed()) {
    std::unique_ptr<Denoiser> model;
    try {
      model = std::make_unique<Denoiser>(load_checkpoint(ckpt_path));
      if (sample_count < 1)
        throw std::invalid_argument("--count must be >= 1");
    } catch (const std::exception& e) {
      std::cerr << "config error: " << e.what() << "\n";
      return kConfigError;
    }
    try {
      const DenoiserScoreField field(
          std::make_shared<Denoiser>(std::move(*model)));
      Rng rng(substream_seed(sample_seed, "sample"));
      const Eigen::MatrixXd draws =
          sampler == "sde"
              ? sample_sde(field, sample_count, rng, sample_ladder, churn)
              : sample_ode(field, sample_count, rng, sample_ladder);
      write_samples(draws, sample_out);
      std::cout << "wrote " << sample_count << " samples to " << sample_out
                << "\n";
    } catch (const std::exception& e) {
      std::cerr << "sampling failed: " << e.what() << "\n";
      return kRuntimeError;
    }
    return 0;
  }

  if (evaluate_cmd->parsed()) {
    Eigen::MatrixXd samples, reference;
    std::shared_ptr<const EnergyTarget> target;
    std::shared_ptr<const Denoiser> model;
    try {
      samples = read_samples(eval_samples);
      reference = read_samples(eval_reference);
      target = make_target(parse_target_spec(eval_target));
      if (!eval_ckpt.empty())
        model = std::make_shared<Denoiser>(load_checkpoint(eval_ckpt));
    } catch (const std::exception& e) {
      std::cerr << "config error: " << e.what() << "\n";
      return kConfigError;
    }
    try {
      std::unique_ptr<DenoiserScoreField> field;
      if (model) {
        field = std::make_unique<DenoiserScoreField>(model);
        eval_options.density = field.get();
      }
      const EvalReport report_json =
          evaluate(samples, reference, *target, eval_options);
      if (eval_out.empty())
        std::cout << report_json.to_json().dump(2) << "\n";
      else
        write_json(report_json.to_json(), eval_out);
    } catch (const std::exception& e) {
      std::cerr << "evaluation failed: " << e.what() << "\n";
      return kRuntimeError;
    }
    return 0;
  }

  if (report->parsed()) {
    std::string csv =
        "method,target,seed,energy_calls,gradient_calls,total_calls,"
        "w2,tvd,mmd\n";
    try {
      for (const auto& dir : report_runs) {
        const RunManifest m =
            RunManifest::from_json(read_json(fs::path(dir) / "manifest.json"));
        csv += m.method + "," + m.target_name + "," + std::to_string(m.seed) +
               "," + std::to_string(m.final_calls.energy) + "," +
               std::to_string(m.final_calls.gradient) + "," +
               std::to_string(m.final_calls.total());
        const fs::path eval_path = fs::path(dir) / "eval.json";
        if (fs::exists(eval_path)) {
          const auto e = read_json(eval_path);
          const auto num = [&](const char* key) {
            return e.contains(key) && e[key].is_number()
                       ? std::to_string(e[key].get<double>())
                       : std::string();
          };
          csv += "," + num("w2") + "," + num("tvd") + "," + num("mmd");
        } else {
          csv += ",,,";
        }
        csv += "\n";
      }
    } catch (const std::exception& e) {
      std::cerr << "config error: " << e.what() << "\n";
      return kConfigError;
    }
    if (report_out.empty()) {
      std::cout << csv;
    } else {
      std::ofstream out(report_out, std::ios::binary);
      out << csv;
      if (!out) {
        std::cerr << "cannot write " << report_out << "\n";
        return kRuntimeError;
      }
    }
    return 0;
  }

  return kConfigError;
}
