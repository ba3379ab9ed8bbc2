#include "ptsd/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <set>
#include <stdexcept>

#include "ptsd/guidance.hpp"
#include "ptsd/io.hpp"
#include "ptsd/metrics.hpp"
#include "ptsd/resampling.hpp"
#include "ptsd/targets.hpp"

namespace ptsd {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

nlohmann::json counts_json(const EvalCounter::Counts& c) {
  return {{"energy", c.energy}, {"gradient", c.gradient}, {"total", c.total()}};
}

EvalCounter::Counts counts_from_json(const nlohmann::json& j) {
  EvalCounter::Counts c;
  c.energy = j.at("energy").get<std::uint64_t>();
  c.gradient = j.at("gradient").get<std::uint64_t>();
  return c;
}

// Shared mutable state threaded through the run so stage recording stays a
// one-liner at each site.
struct RunContext {
  const RunConfig& cfg;
  std::shared_ptr<const EnergyTarget> target;
  std::shared_ptr<EvalCounter> counter;
  RunManifest manifest;
  std::filesystem::path out_dir;
  int train_streams = 0;  // distinct substream per training

  bool persists() const { return !out_dir.empty(); }

  StageRecord& open_stage(const std::string& kind) {
    StageRecord record;
    record.kind = kind;
    record.calls = counter->snapshot();  // before-counts until closed
    manifest.stages.push_back(std::move(record));
    return manifest.stages.back();
  }

  void close_stage(StageRecord& record, Clock::time_point start,
                   nlohmann::json detail) {
    record.calls = counter->snapshot() - record.calls;
    record.wall_seconds = seconds_since(start);
    record.detail = std::move(detail);
  }

  void save_model(int index, const Denoiser& model) {
    if (!persists()) return;
    const auto rel = "checkpoints/model_" + std::to_string(index) + ".ckpt";
    save_checkpoint(model, out_dir / rel);
    note_output(rel);
  }

  void save_buffer(int index, const SampleBuffer& buffer) {
    if (!persists()) return;
    const auto rel = "buffers/buffer_" + std::to_string(index) + ".bin";
    save_samples(buffer.samples(), out_dir / rel);
    note_output(rel);
  }

  void note_output(const std::string& rel) {
    for (const auto& o : manifest.outputs)
      if (o == rel) return;
    manifest.outputs.push_back(rel);
  }

  void flush_manifest() {
    if (!persists()) return;
    write_json(manifest.to_json(), out_dir / "manifest.json");
  }
};

RunContext make_context(const RunConfig& cfg, const std::string& method,
                        const std::filesystem::path& out_dir) {
  RunContext ctx{cfg, make_target(cfg.target), std::make_shared<EvalCounter>(),
                 RunManifest{}, out_dir};
  ctx.manifest.method = method;
  ctx.manifest.seed = cfg.seed;
  ctx.manifest.target_name = ctx.target->name();
  ctx.manifest.dim = ctx.target->dim();
  const auto desc = cfg.temperature.ladder == "linear"
                        ? linear_ladder(cfg.temperature.min,
                                        cfg.temperature.max,
                                        cfg.temperature.count)
                        : geometric_ladder(cfg.temperature.min,
                                           cfg.temperature.max,
                                           cfg.temperature.count);
  ctx.manifest.temperatures.assign(desc.rbegin(), desc.rend());
  ctx.manifest.config = cfg.to_json();
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir / "checkpoints");
    std::filesystem::create_directories(out_dir / "buffers");
  }
  return ctx;
}

// Training data is the buffer's sample block; translation-invariant targets
// are centered so the network never has to represent the free mode.
Eigen::MatrixXd training_data(const RunContext& ctx,
                              const SampleBuffer& buffer) {
  if (ctx.target->translation_invariant())
    return center_particle_blocks(buffer.samples());
  return buffer.samples();
}

void train_model(RunContext& ctx, ModelBank& bank, int index,
                 const SampleBuffer& buffer) {
  const auto start = Clock::now();
  auto& record = ctx.open_stage("train");
  Rng rng(substream_seed(ctx.cfg.seed, "training",
                         std::uint64_t(ctx.train_streams++)));
  auto model = bank.model(index);
  const Eigen::MatrixXd data = training_data(ctx, buffer);
  const TrainStats stats = train_dsm(*model, data, ctx.cfg.train_config(), rng);
  ctx.close_stage(record, start,
                  {{"model_index", index},
                   {"iterations", stats.iterations},
                   {"first_loss", stats.first_loss},
                   {"last_loss", stats.last_loss},
                   {"sigma_data", model->sigma_data()},
                   {"data_count", buffer.count()}});
  ctx.save_model(index, *model);
}

std::shared_ptr<const ScoreField> field_for(const RunContext& ctx,
                                            const PipelineHooks& hooks,
                                            const ModelBank& bank, int index,
                                            double temperature) {
  if (hooks.field) return hooks.field(index, temperature);
  return std::make_shared<DenoiserScoreField>(bank.model(index));
}

nlohmann::json pt_stats_json(const PtStats& stats) {
  nlohmann::json acceptance = nlohmann::json::array();
  for (std::size_t level = 0; level < stats.proposals.size(); ++level)
    acceptance.push_back(stats.acceptance_rate(int(level)));
  nlohmann::json swaps = nlohmann::json::array();
  for (std::size_t pair = 0; pair < stats.swap_attempts.size(); ++pair)
    swaps.push_back(stats.swap_rate(int(pair)));
  return {{"acceptance_rates", acceptance}, {"swap_rates", swaps}};
}

// Two-temperature tempering that seeds the hottest buffers. temps holds the
// ascending levels to run; returns one buffer per level, trimmed to B.
std::vector<SampleBuffer> initial_pt(RunContext& ctx,
                                     const std::vector<double>& temps) {
  const auto start = Clock::now();
  auto& record = ctx.open_stage("init-pt");
  const auto& s = ctx.cfg.init_pt;
  PtSchedule schedule;
  schedule.temperatures = temps;
  for (double t : temps) schedule.step_sizes.push_back(s.step_size * t);
  schedule.swap_interval = s.swap_interval;

  PtRunConfig run;
  run.chains = s.chains;
  run.steps = s.steps;
  run.burn_in = s.burn_in;
  run.subsample_interval = s.subsample_interval;
  run.seed = substream_seed(ctx.cfg.seed, "init-pt");
  run.threads = ctx.cfg.threads;
  run.init_scale = s.init_scale;

  PtResult result = run_pt(ctx.target, ctx.counter, schedule, run);
  nlohmann::json collected = nlohmann::json::array();
  for (auto& buffer : result.buffers) {
    collected.push_back(buffer.count());
    buffer.keep_last(ctx.cfg.buffer);
    if (buffer.count() == 0)
      throw std::runtime_error("initial tempering produced an empty buffer");
  }
  auto detail = pt_stats_json(result.stats);
  detail["chains"] = s.chains;
  detail["steps"] = s.steps;
  detail["collected"] = collected;
  ctx.close_stage(record, start, std::move(detail));
  return std::move(result.buffers);
}

void finish(RunContext& ctx, Clock::time_point start) {
  ctx.manifest.final_calls = ctx.counter->snapshot();
  ctx.manifest.wall_seconds = seconds_since(start);
  ctx.flush_manifest();
}

// Flushes a failure manifest before the error escapes.
template <typename Body>
void guarded_run(RunContext& ctx, Clock::time_point start, Body&& body) {
  try {
    body();
    ctx.manifest.status = "completed";
    finish(ctx, start);
  } catch (const std::exception& e) {
    ctx.manifest.status = std::string("failed: ") + e.what();
    finish(ctx, start);
    throw;
  }
}

const char* method_name(AblateMode mode) {
  switch (mode) {
    case AblateMode::None: return "ptsd";
    case AblateMode::NoGuidance: return "ptsd-no-guidance";
    case AblateMode::NoIs: return "ptsd-no-is";
  }
  return "ptsd";
}

}  // namespace

std::vector<double> geometric_ladder(double t_min, double t_max, int k) {
  if (!(t_min > 0.0) || !(t_min < t_max))
    throw std::invalid_argument("ladder: need 0 < t_min < t_max");
  if (k < 2) throw std::invalid_argument("ladder: need at least 2 levels");
  std::vector<double> temps(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i)
    temps[std::size_t(i)] = t_max * std::pow(t_min / t_max, double(i) / (k - 1));
  temps.front() = t_max;
  temps.back() = t_min;
  return temps;
}

std::vector<double> linear_ladder(double t_min, double t_max, int k) {
  if (!(t_min > 0.0) || !(t_min < t_max))
    throw std::invalid_argument("ladder: need 0 < t_min < t_max");
  if (k < 2) throw std::invalid_argument("ladder: need at least 2 levels");
  std::vector<double> temps(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i)
    temps[std::size_t(i)] = t_max - (t_max - t_min) * double(i) / (k - 1);
  temps.front() = t_max;
  temps.back() = t_min;
  return temps;
}

bool same_model(const Denoiser& a, const Denoiser& b) {
  if (a.config() != b.config() || a.sigma_data() != b.sigma_data())
    return false;
  for (int l = 0; l < a.linear_layers(); ++l) {
    if (!(a.weight(l) == b.weight(l))) return false;
    if (!(a.bias(l) == b.bias(l))) return false;
  }
  return true;
}

nlohmann::json StageRecord::to_json() const {
  return {{"kind", kind},
          {"calls", counts_json(calls)},
          {"wall_seconds", wall_seconds},
          {"detail", detail}};
}

StageRecord StageRecord::from_json(const nlohmann::json& j) {
  StageRecord r;
  r.kind = j.at("kind").get<std::string>();
  r.calls = counts_from_json(j.at("calls"));
  r.wall_seconds = j.at("wall_seconds").get<double>();
  r.detail = j.value("detail", nlohmann::json::object());
  return r;
}

nlohmann::json RunManifest::to_json() const {
  nlohmann::json stage_list = nlohmann::json::array();
  for (const auto& s : stages) stage_list.push_back(s.to_json());
  return {{"schema_version", kSchemaVersion},
          {"method", method},
          {"status", status},
          {"seed", seed},
          {"target", {{"name", target_name}, {"dim", dim}}},
          {"temperatures", temperatures},
          {"config", config},
          {"stages", stage_list},
          {"final_calls", counts_json(final_calls)},
          {"wall_seconds", wall_seconds},
          {"outputs", outputs}};
}

RunManifest RunManifest::from_json(const nlohmann::json& j) {
  const int version = j.at("schema_version").get<int>();
  if (version != kSchemaVersion)
    throw std::invalid_argument("manifest: unsupported schema version " +
                                std::to_string(version));
  RunManifest m;
  m.method = j.at("method").get<std::string>();
  m.status = j.at("status").get<std::string>();
  m.seed = j.at("seed").get<std::uint64_t>();
  m.target_name = j.at("target").at("name").get<std::string>();
  m.dim = j.at("target").at("dim").get<int>();
  m.temperatures = j.at("temperatures").get<std::vector<double>>();
  m.config = j.at("config");
  for (const auto& s : j.at("stages")) m.stages.push_back(StageRecord::from_json(s));
  m.final_calls = counts_from_json(j.at("final_calls"));
  m.wall_seconds = j.at("wall_seconds").get<double>();
  m.outputs = j.value("outputs", std::vector<std::string>{});
  return m;
}

RunOutput run_ptsd(const RunConfig& cfg, const std::filesystem::path& out_dir,
                   const PipelineHooks& hooks, AblateMode mode) {
  cfg.validate(3);
  const auto start = Clock::now();
  RunContext ctx = make_context(cfg, method_name(mode), out_dir);
  const int k_count = cfg.temperature.count;
  const auto& temps = ctx.manifest.temperatures;  // ascending, temps[i] = T_{i+1}
  const int dim = ctx.target->dim();

  RunOutput out;
  out.models = ModelBank(k_count);
  out.buffers.assign(std::size_t(k_count) + 1, SampleBuffer());

  guarded_run(ctx, start, [&] {
    // Hottest two levels seed the process.
    auto hot = initial_pt(ctx, {temps[std::size_t(k_count - 2)],
                                temps[std::size_t(k_count - 1)]});
    out.buffers[std::size_t(k_count - 1)] = std::move(hot[0]);
    out.buffers[std::size_t(k_count)] = std::move(hot[1]);
    ctx.save_buffer(k_count - 1, out.buffers[std::size_t(k_count - 1)]);
    ctx.save_buffer(k_count, out.buffers[std::size_t(k_count)]);

    for (int index : {k_count - 1, k_count}) {
      Rng init(substream_seed(cfg.seed, "model-init", std::uint64_t(index)));
      out.models.put(index,
                     std::make_shared<Denoiser>(cfg.mlp_config(dim), init));
      train_model(ctx, out.models, index, out.buffers[std::size_t(index)]);
    }

    for (int k = k_count; k >= 3; --k) {
      const double t = temps[std::size_t(k - 3)];   // T_{k-2}, next level down
      const double t1 = temps[std::size_t(k - 2)];  // T_{k-1}
      const double t2 = temps[std::size_t(k - 1)];  // T_k
      const auto f1 = field_for(ctx, hooks, out.models, k - 1, t1);
      const bool guided = mode != AblateMode::NoGuidance;
      std::shared_ptr<const ScoreField> sampler =
          guided ? std::make_shared<GuidedScoreField>(
                       f1, field_for(ctx, hooks, out.models, k, t2), t, t1, t2)
                 : f1;
      const bool resample = mode != AblateMode::NoIs &&
                            (k > 3 || cfg.resample.last_step);

      const auto sample_start = Clock::now();
      auto& sample_record = ctx.open_stage("guided-sample");
      Rng path_rng(substream_seed(cfg.seed, "guided-path", std::uint64_t(k)));
      SampleResult draws;
      if (resample) {
        Rng probe_rng(substream_seed(cfg.seed, "hutchinson", std::uint64_t(k)));
        draws = sample_ode_with_logq(*sampler, cfg.buffer, path_rng, probe_rng,
                                     cfg.ladder(), cfg.diffusion.hutchinson_probes);
      } else {
        draws.samples = sample_ode(*sampler, cfg.buffer, path_rng, cfg.ladder());
      }
      ctx.close_stage(sample_record, sample_start,
                      {{"buffer_index", k - 2},
                       {"count", cfg.buffer},
                       {"guided", guided},
                       {"weight", guided ? guided_weight(t, t1, t2) : 0.0},
                       {"log_density_tracked", resample}});

      SampleBuffer next(dim, t);
      if (resample) {
        const auto is_start = Clock::now();
        auto& is_record = ctx.open_stage("is");
        TemperedTarget tempered(ctx.target, t, ctx.counter);
        const ImportanceWeights weights =
            importance_log_weights(tempered, draws.samples, draws.log_density);
        const Eigen::VectorXd capped =
            truncate_log_weights(weights.log_weights, cfg.resample.quantile);
        const Eigen::VectorXd probs = normalize_log_weights(capped);
        Rng resample_rng(substream_seed(cfg.seed, "resample", std::uint64_t(k)));
        const std::vector<int> picks =
            resample_categorical(probs, cfg.buffer, resample_rng);
        std::set<int> unique(picks.begin(), picks.end());
        for (int i : picks)
          next.append(draws.samples.col(i), Provenance::Resampled, i,
                      weights.base_energy[i]);
        ctx.close_stage(is_record, is_start,
                        {{"buffer_index", k - 2},
                         {"ess", effective_sample_size(probs)},
                         {"max_probability", probs.maxCoeff()},
                         {"quantile", cfg.resample.quantile},
                         {"unique_sources", unique.size()}});
      } else {
        for (int i = 0; i < draws.samples.cols(); ++i)
          next.append(draws.samples.col(i), Provenance::Guided);
      }
      out.buffers[std::size_t(k - 2)] = std::move(next);

      const auto refine_start = Clock::now();
      auto& refine_record = ctx.open_stage("refine");
      RefineConfig refine;
      refine.steps = cfg.refine.steps;
      refine.cold_step = cfg.refine.step_size * t;
      refine.hot_step = cfg.refine.step_size * t1;
      refine.swap_interval = cfg.refine.swap_interval;
      refine.mode = cfg.refine.mode == "subset" ? RefineMode::Subset
                                                : RefineMode::Full;
      refine.subset_size = cfg.refine.subset_size;
      refine.thinning = cfg.refine.thinning;
      refine.seed = substream_seed(cfg.seed, "refine", std::uint64_t(k));
      refine.threads = cfg.threads;
      const RefineStats rstats =
          local_pt_refine(out.buffers[std::size_t(k - 2)],
                          out.buffers[std::size_t(k - 1)], ctx.target,
                          ctx.counter, refine);
      ctx.close_stage(
          refine_record, refine_start,
          {{"cold_index", k - 2},
           {"hot_index", k - 1},
           {"steps", cfg.refine.steps},
           {"swap_rate", rstats.swap_attempts
                             ? double(rstats.swap_accepts) / double(rstats.swap_attempts)
                             : 0.0},
           {"cold_acceptance", rstats.cold_proposals
                                   ? double(rstats.cold_accepts) / double(rstats.cold_proposals)
                                   : 0.0},
           {"hot_acceptance", rstats.hot_proposals
                                  ? double(rstats.hot_accepts) / double(rstats.hot_proposals)
                                  : 0.0},
           {"appended", rstats.appended},
           {"mode", cfg.refine.mode}});
      ctx.save_buffer(k - 2, out.buffers[std::size_t(k - 2)]);
      ctx.save_buffer(k - 1, out.buffers[std::size_t(k - 1)]);

      const auto clone_start = Clock::now();
      auto& clone_record = ctx.open_stage("clone");
      out.models.put(k - 2, std::make_shared<Denoiser>(*out.models.model(k - 1)));
      ctx.close_stage(clone_record, clone_start,
                      {{"from_index", k - 1}, {"to_index", k - 2}});

      train_model(ctx, out.models, k - 2, out.buffers[std::size_t(k - 2)]);
      train_model(ctx, out.models, k - 1, out.buffers[std::size_t(k - 1)]);
    }
  });

  out.manifest = std::move(ctx.manifest);
  return out;
}

RunOutput ablate(const RunConfig& cfg, AblateMode mode,
                 const std::filesystem::path& out_dir,
                 const PipelineHooks& hooks) {
  return run_ptsd(cfg, out_dir, hooks, mode);
}

PtdmOutput run_ptdm(const RunConfig& cfg,
                    const std::filesystem::path& out_dir) {
  cfg.validate(2);
  const auto start = Clock::now();
  RunContext ctx = make_context(cfg, "pt-dm", out_dir);
  const int dim = ctx.target->dim();

  PtdmOutput out;
  guarded_run(ctx, start, [&] {
    // Full-ladder tempering; only the coldest chain feeds the model.
    auto buffers = initial_pt(ctx, ctx.manifest.temperatures);
    out.buffer = std::move(buffers.front());
    ctx.save_buffer(1, out.buffer);

    Rng init(substream_seed(cfg.seed, "model-init", 1));
    out.model = std::make_shared<Denoiser>(cfg.mlp_config(dim), init);
    ModelBank bank(1);
    bank.put(1, out.model);
    train_model(ctx, bank, 1, out.buffer);
  });

  out.manifest = std::move(ctx.manifest);
  return out;
}

}  // namespace ptsd
