#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <set>

#include "ptsd/config.hpp"
#include "ptsd/diffusion.hpp"
#include "ptsd/io.hpp"
#include "ptsd/pipeline.hpp"
#include "ptsd/targets.hpp"

using namespace ptsd;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
  const auto dir = fs::temp_directory_path() /
                   ("ptsd_pipeline_" + std::to_string(std::rand()));
  fs::create_directories(dir);
  return dir;
}

// Desk-scale configuration that still exercises every stage: K=4 so the
// progressive loop runs twice, with enough tempering output to fill B=40.
RunConfig small_config() {
  RunConfig cfg;
  cfg.target = {{"name", "gaussian"}, {"dim", 2}, {"sigma", 1.0}};
  cfg.temperature = {1.0, 8.0, 4, "geometric"};
  cfg.buffer = 40;
  cfg.init_pt = {4, 20, 4, 1, 5, 0.3, 2.0};
  cfg.training = {5, 16, 1e-3, 16, 2};
  cfg.diffusion = {8, 8.0, 0.02, 7.0, 1};
  cfg.refine = {2, 2, 0.3, "full", 0, 1};
  cfg.resample = {0.8, true};
  cfg.seed = 11;
  return cfg;
}

std::vector<std::string> stage_kinds(const RunManifest& m) {
  std::vector<std::string> kinds;
  for (const auto& s : m.stages) kinds.push_back(s.kind);
  return kinds;
}

// Budget identity for a full-mode run: tempering costs one energy and one
// gradient per chain state plus one per MALA proposal, and each progressive
// stage spends B on weighting/cache fills plus 2Bl on refinement proposals.
std::uint64_t full_mode_side_count(const RunConfig& cfg) {
  const auto c = std::uint64_t(cfg.init_pt.chains);
  const auto l = std::uint64_t(cfg.init_pt.steps);
  const auto b = std::uint64_t(cfg.buffer);
  const auto r = std::uint64_t(cfg.refine.steps);
  const auto stages = std::uint64_t(cfg.temperature.count - 2);
  return 2 * c * (l + 1) + stages * (b + 2 * b * r);
}

}  // namespace

TEST_SUITE_BEGIN("pipeline");

TEST_CASE("temperature ladders match closed forms") {
  const auto geo = geometric_ladder(1.0, 100.0, 10);
  REQUIRE(geo.size() == 10);
  CHECK(geo.front() == 100.0);
  CHECK(geo.back() == 1.0);
  const double ratio = std::pow(100.0, 1.0 / 9.0);
  for (std::size_t i = 1; i < geo.size(); ++i) {
    CHECK(geo[i] < geo[i - 1]);
    CHECK(geo[i - 1] / geo[i] == doctest::Approx(ratio).epsilon(1e-12));
  }

  const auto lin = linear_ladder(1.0, 4.0, 4);
  REQUIRE(lin.size() == 4);
  CHECK(lin[0] == 4.0);
  CHECK(lin[1] == doctest::Approx(3.0));
  CHECK(lin[2] == doctest::Approx(2.0));
  CHECK(lin[3] == 1.0);

  // Two levels degenerate to the endpoints for both spacings.
  CHECK(geometric_ladder(0.5, 2.0, 2) == std::vector<double>{2.0, 0.5});
  CHECK(linear_ladder(0.5, 2.0, 2) == std::vector<double>{2.0, 0.5});

  CHECK_THROWS_AS(geometric_ladder(1.0, 2.0, 1), std::invalid_argument);
  CHECK_THROWS_AS(geometric_ladder(0.0, 2.0, 3), std::invalid_argument);
  CHECK_THROWS_AS(linear_ladder(2.0, 2.0, 3), std::invalid_argument);
}

TEST_CASE("config json round trip is exact and strict") {
  RunConfig cfg = small_config();
  cfg.refine.mode = "subset";
  cfg.refine.subset_size = 7;
  cfg.refine.thinning = 3;
  cfg.resample.last_step = false;
  cfg.threads = 2;

  const RunConfig back = RunConfig::from_json(cfg.to_json());
  CHECK(back == cfg);
  CHECK(back.to_json() == cfg.to_json());

  // Partial documents keep defaults for everything absent.
  const RunConfig sparse = RunConfig::from_json(
      {{"target", {{"name", "gaussian"}, {"dim", 1}, {"sigma", 1.0}}},
       {"seed", 7}});
  CHECK(sparse.buffer == RunConfig{}.buffer);
  CHECK(sparse.temperature == RunConfig{}.temperature);
  CHECK(sparse.seed == 7);

  auto j = cfg.to_json();
  j["bogus"] = 1;
  CHECK_THROWS_AS(RunConfig::from_json(j), std::invalid_argument);

  auto nested = cfg.to_json();
  nested["init_pt"]["stepz"] = 0.5;
  CHECK_THROWS_AS(RunConfig::from_json(nested), std::invalid_argument);

  auto wrong_type = cfg.to_json();
  wrong_type["temperature"]["count"] = "three";
  CHECK_THROWS_AS(RunConfig::from_json(wrong_type), std::invalid_argument);
}

TEST_CASE("overrides create paths and keep json types") {
  CHECK(parse_override_value("64").is_number_integer());
  CHECK(parse_override_value("0.5").is_number_float());
  CHECK(parse_override_value("true").is_boolean());
  CHECK(parse_override_value("linear") == "linear");
  CHECK(parse_override_value("[1,2]").is_array());

  auto j = small_config().to_json();
  apply_override(j, "training.width", "64");
  apply_override(j, "temperature.ladder", "linear");
  apply_override(j, "resample.last_step", "false");
  const RunConfig cfg = RunConfig::from_json(j);
  CHECK(cfg.training.width == 64);
  CHECK(cfg.temperature.ladder == "linear");
  CHECK(cfg.resample.last_step == false);

  // Overrides may build paths from nothing, e.g. for target specs.
  nlohmann::json fresh = nlohmann::json::object();
  apply_override(fresh, "target.name", "gaussian");
  apply_override(fresh, "target.dim", "3");
  CHECK(fresh["target"]["name"] == "gaussian");
  CHECK(fresh["target"]["dim"] == 3);

  CHECK_THROWS_AS(apply_override(j, "", "1"), std::invalid_argument);
  CHECK_THROWS_AS(apply_override(j, "a..b", "1"), std::invalid_argument);
  CHECK_THROWS_AS(apply_override(j, "buffer.size", "1"),
                  std::invalid_argument);
}

TEST_CASE("validate rejects out-of-range settings") {
  CHECK_NOTHROW(small_config().validate(3));

  auto count = small_config();
  count.temperature.count = 2;
  CHECK_THROWS_AS(count.validate(3), std::invalid_argument);
  CHECK_NOTHROW(count.validate(2));

  auto burn = small_config();
  burn.init_pt.burn_in = burn.init_pt.steps;
  CHECK_THROWS_AS(burn.validate(3), std::invalid_argument);

  auto sub = small_config();
  sub.init_pt.subsample_interval = 0;
  CHECK_THROWS_AS(sub.validate(3), std::invalid_argument);

  auto quantile = small_config();
  quantile.resample.quantile = 0.0;
  CHECK_THROWS_AS(quantile.validate(3), std::invalid_argument);

  auto subset = small_config();
  subset.refine.mode = "subset";
  CHECK_THROWS_AS(subset.validate(3), std::invalid_argument);
  subset.refine.subset_size = 4;
  CHECK_NOTHROW(subset.validate(3));

  auto ladder = small_config();
  ladder.temperature.ladder = "harmonic";
  CHECK_THROWS_AS(ladder.validate(3), std::invalid_argument);

  auto target = small_config();
  target.target = {{"dim", 2}};
  CHECK_THROWS_AS(target.validate(3), std::invalid_argument);

  auto iters = small_config();
  iters.training.iterations = 0;
  CHECK_THROWS_AS(iters.validate(3), std::invalid_argument);
}

TEST_CASE("progressive run emits the exact stage trace and budget closes") {
  const auto dir = temp_dir();
  const RunConfig cfg = small_config();
  const RunOutput out = run_ptsd(cfg, dir);
  const RunManifest& m = out.manifest;

  CHECK(m.method == "ptsd");
  CHECK(m.status == "completed");
  CHECK(m.seed == cfg.seed);
  CHECK(m.target_name == "gaussian2");
  CHECK(m.dim == 2);
  CHECK(m.config == cfg.to_json());

  REQUIRE(m.temperatures.size() == 4);
  CHECK(m.temperatures.front() == 1.0);
  CHECK(m.temperatures.back() == 8.0);
  CHECK(std::is_sorted(m.temperatures.begin(), m.temperatures.end()));

  const std::vector<std::string> expected{
      "init-pt", "train", "train",
      "guided-sample", "is", "refine", "clone", "train", "train",
      "guided-sample", "is", "refine", "clone", "train", "train"};
  CHECK(stage_kinds(m) == expected);

  // Stage deltas must sum exactly to the final ledger, and the final ledger
  // must match the closed-form cost of the configuration.
  EvalCounter::Counts sum;
  for (const auto& s : m.stages) {
    sum.energy += s.calls.energy;
    sum.gradient += s.calls.gradient;
  }
  CHECK(sum == m.final_calls);
  CHECK(m.final_calls.energy == full_mode_side_count(cfg));
  CHECK(m.final_calls.gradient == full_mode_side_count(cfg));

  // Model-driven stages never touch the target.
  for (const auto& s : m.stages)
    if (s.kind == "train" || s.kind == "guided-sample" || s.kind == "clone")
      CHECK(s.calls.total() == 0);

  for (int k = 1; k <= 4; ++k) {
    CHECK(out.models.has(k));
    CHECK(out.buffers[std::size_t(k)].count() == cfg.buffer);
  }
  CHECK(out.buffers[1].temperature() == 1.0);
  CHECK(same_model(*out.models.deliverable(), *out.models.model(1)));

  // The cold buffer is built by resampling and then polished in place.
  const SampleBuffer& cold = out.buffers[1];
  for (int i = 0; i < cold.count(); ++i) {
    const Provenance p = cold.provenance(i);
    CHECK((p == Provenance::Resampled || p == Provenance::Refined));
  }

  for (const auto& s : m.stages) {
    if (s.kind == "is") {
      CHECK(s.detail.at("ess").get<double>() > 0.0);
      CHECK(s.detail.at("quantile").get<double>() == 0.8);
    }
    if (s.kind == "guided-sample") {
      CHECK(s.detail.at("guided").get<bool>());
      CHECK(s.detail.at("weight").get<double>() > 0.0);
    }
  }

  fs::remove_all(dir);
}

TEST_CASE("persisted artifacts round trip through the manifest") {
  const auto dir = temp_dir();
  const RunConfig cfg = small_config();
  const RunOutput out = run_ptsd(cfg, dir);

  const auto j = read_json(dir / "manifest.json");
  const RunManifest m = RunManifest::from_json(j);
  CHECK(m.to_json() == out.manifest.to_json());

  for (int k = 1; k <= 4; ++k) {
    const Denoiser model =
        load_checkpoint(dir / ("checkpoints/model_" + std::to_string(k) + ".ckpt"));
    CHECK(same_model(model, *out.models.model(k)));
    const Eigen::MatrixXd buf =
        load_samples(dir / ("buffers/buffer_" + std::to_string(k) + ".bin"));
    CHECK(buf == out.buffers[std::size_t(k)].samples());
  }

  // Outputs list each artifact exactly once, as paths relative to the run dir.
  std::set<std::string> seen;
  for (const auto& rel : out.manifest.outputs) {
    CHECK(fs::exists(dir / rel));
    CHECK(seen.insert(rel).second);
  }
  CHECK(seen.count("manifest.json") == 0);  // implicit, not an output entry
  CHECK(seen.count("checkpoints/model_1.ckpt") == 1);
  CHECK(seen.count("buffers/buffer_1.bin") == 1);

  const int version = j.at("schema_version").get<int>();
  CHECK(version == RunManifest::kSchemaVersion);
  auto future = j;
  future["schema_version"] = version + 1;
  CHECK_THROWS_AS(RunManifest::from_json(future), std::invalid_argument);

  fs::remove_all(dir);
}

TEST_CASE("skipping importance resampling drops the is stages") {
  const RunConfig cfg = small_config();
  const RunOutput out = ablate(cfg, AblateMode::NoIs);

  CHECK(out.manifest.method == "ptsd-no-is");
  const auto kinds = stage_kinds(out.manifest);
  CHECK(std::count(kinds.begin(), kinds.end(), "is") == 0);
  CHECK(std::count(kinds.begin(), kinds.end(), "guided-sample") == 2);

  // Raw draws replace resampled ones; refinement cost is unchanged, the
  // cache-fill cost moves from the weighting pass to the refiner.
  CHECK(out.manifest.final_calls.energy == full_mode_side_count(cfg));
  CHECK(out.manifest.final_calls.gradient == full_mode_side_count(cfg));
  for (int i = 0; i < out.buffers[1].count(); ++i) {
    const Provenance p = out.buffers[1].provenance(i);
    CHECK((p == Provenance::Guided || p == Provenance::Refined));
  }
  for (const auto& s : out.manifest.stages)
    if (s.kind == "guided-sample")
      CHECK_FALSE(s.detail.at("log_density_tracked").get<bool>());
}

TEST_CASE("resample_last=false skips only the final weighting pass") {
  RunConfig cfg = small_config();
  cfg.resample.last_step = false;
  const RunOutput out = run_ptsd(cfg);

  const auto kinds = stage_kinds(out.manifest);
  CHECK(std::count(kinds.begin(), kinds.end(), "is") == 1);
  // The surviving weighting pass is the first extrapolation (hot end).
  const std::vector<std::string> expected{
      "init-pt", "train", "train",
      "guided-sample", "is", "refine", "clone", "train", "train",
      "guided-sample", "refine", "clone", "train", "train"};
  CHECK(kinds == expected);
  CHECK(out.manifest.final_calls.energy == full_mode_side_count(cfg));
}

TEST_CASE("no-guidance ablation samples from the hotter field alone") {
  const RunConfig cfg = small_config();
  const RunOutput out = ablate(cfg, AblateMode::NoGuidance);

  CHECK(out.manifest.method == "ptsd-no-guidance");
  const auto kinds = stage_kinds(out.manifest);
  CHECK(std::count(kinds.begin(), kinds.end(), "is") == 2);
  for (const auto& s : out.manifest.stages)
    if (s.kind == "guided-sample") {
      CHECK_FALSE(s.detail.at("guided").get<bool>());
      CHECK(s.detail.at("weight").get<double>() == 0.0);
    }
  CHECK(out.manifest.final_calls.energy == full_mode_side_count(cfg));
}

TEST_CASE("subset refinement appends thinned states and spends less") {
  RunConfig cfg = small_config();
  cfg.temperature.count = 3;
  cfg.refine = {6, 3, 0.3, "subset", 8, 2};
  const RunOutput out = run_ptsd(cfg);

  const auto b = std::uint64_t(cfg.buffer);
  const auto s = std::uint64_t(cfg.refine.subset_size);
  const auto l = std::uint64_t(cfg.refine.steps);
  const auto init = 2 * std::uint64_t(cfg.init_pt.chains) *
                    std::uint64_t(cfg.init_pt.steps + 1);
  // Weighting evaluates all B draws but only the S chain starts need
  // gradients; appended states inherit both caches.
  CHECK(out.manifest.final_calls.energy == init + b + 2 * s * l);
  CHECK(out.manifest.final_calls.gradient == init + s + 2 * s * l);

  const int appended = int(l / std::uint64_t(cfg.refine.thinning)) *
                       int(s);
  CHECK(out.buffers[1].count() == cfg.buffer + appended);
  for (const auto& stage : out.manifest.stages)
    if (stage.kind == "refine")
      CHECK(stage.detail.at("appended").get<int>() == appended);

  int appended_rows = 0;
  for (int i = 0; i < out.buffers[1].count(); ++i)
    if (out.buffers[1].provenance(i) == Provenance::AppendedPt) ++appended_rows;
  CHECK(appended_rows == appended);
}

TEST_CASE("failed runs flush a manifest with the failure reason") {
  const auto dir = temp_dir();
  RunConfig cfg = small_config();
  // Collection cadence longer than the post-burn-in window: nothing is ever
  // collected, which the pipeline must refuse to continue from.
  cfg.init_pt.subsample_interval = 1000;
  CHECK_THROWS_AS(run_ptsd(cfg, dir), std::runtime_error);

  const auto j = read_json(dir / "manifest.json");
  const RunManifest m = RunManifest::from_json(j);
  CHECK(m.status.rfind("failed:", 0) == 0);
  CHECK(m.status.find("empty buffer") != std::string::npos);
  REQUIRE(!m.stages.empty());
  CHECK(m.stages.front().kind == "init-pt");

  fs::remove_all(dir);
}

TEST_CASE("same seed reproduces the run bit for bit") {
  const RunConfig cfg = small_config();
  const RunOutput a = run_ptsd(cfg);
  const RunOutput b = run_ptsd(cfg);

  for (int k = 1; k <= 4; ++k) {
    CHECK(same_model(*a.models.model(k), *b.models.model(k)));
    CHECK(a.buffers[std::size_t(k)].samples() ==
          b.buffers[std::size_t(k)].samples());
  }
  REQUIRE(a.manifest.stages.size() == b.manifest.stages.size());
  for (std::size_t i = 0; i < a.manifest.stages.size(); ++i) {
    CHECK(a.manifest.stages[i].kind == b.manifest.stages[i].kind);
    CHECK(a.manifest.stages[i].calls == b.manifest.stages[i].calls);
  }
  CHECK(a.manifest.final_calls == b.manifest.final_calls);

  RunConfig other = cfg;
  other.seed = cfg.seed + 1;
  const RunOutput c = run_ptsd(other);
  CHECK_FALSE(a.buffers[1].samples() == c.buffers[1].samples());
  CHECK_FALSE(same_model(*a.models.model(1), *c.models.model(1)));
}

TEST_CASE("tempering baseline budget follows the chain count formula") {
  RunConfig cfg = small_config();
  cfg.temperature.count = 3;
  cfg.init_pt.chains = 5;
  cfg.init_pt.steps = 40;
  cfg.init_pt.burn_in = 8;
  const PtdmOutput out = run_ptdm(cfg);

  CHECK(out.manifest.method == "pt-dm");
  CHECK(stage_kinds(out.manifest) == std::vector<std::string>{"init-pt", "train"});
  const auto expected = 2ull * 3ull * 5ull * 41ull;
  CHECK(out.manifest.final_calls.total() == expected);
  CHECK(out.manifest.final_calls.energy == out.manifest.final_calls.gradient);

  CHECK(out.buffer.count() == cfg.buffer);
  CHECK(out.buffer.temperature() == 1.0);
  REQUIRE(out.model != nullptr);
  CHECK(out.model->sigma_data() > 0.0);

  // Two levels suffice for the baseline even though the loop needs three.
  RunConfig two = cfg;
  two.temperature.count = 2;
  CHECK_NOTHROW(run_ptdm(two));
  CHECK_THROWS_AS(run_ptsd(two), std::invalid_argument);
}

TEST_CASE("analytic fields recover the cold gaussian through the full loop") {
  RunConfig cfg;
  cfg.target = {{"name", "gaussian"}, {"dim", 1}, {"sigma", 1.0}};
  cfg.temperature = {1.0, 4.0, 3, "geometric"};
  cfg.buffer = 400;
  cfg.init_pt = {8, 60, 10, 1, 5, 0.4, 2.0};
  cfg.training = {2, 16, 1e-3, 8, 1};
  cfg.diffusion = {16, 8.0, 0.01, 7.0, 1};
  cfg.refine = {3, 3, 0.25, "full", 0, 1};
  cfg.seed = 3;

  // Exact per-temperature fields stand in for the trained models, so the
  // extrapolation, weighting, and refinement operate on the true densities.
  PipelineHooks hooks;
  hooks.field = [](int, double temperature) {
    return std::make_shared<GaussianScoreField>(1, 1.0, temperature);
  };
  const RunOutput out = run_ptsd(cfg, {}, hooks);

  const Eigen::MatrixXd cold = out.buffers[1].samples();
  const double mean = cold.mean();
  const double var = (cold.array() - mean).square().mean();
  CHECK(std::abs(mean) < 0.2);
  CHECK(var == doctest::Approx(1.0).epsilon(0.4));

  // Buffer two sits at the geometric midpoint temperature.
  CHECK(out.buffers[2].temperature() == doctest::Approx(2.0));

  for (const auto& s : out.manifest.stages)
    if (s.kind == "is")
      CHECK(s.detail.at("ess").get<double>() > double(cfg.buffer) / 10.0);
}

TEST_SUITE_END();
