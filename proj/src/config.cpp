#include "ptsd/config.hpp"

#include <cmath>
#include <set>
#include <stdexcept>

#include "ptsd/io.hpp"

namespace ptsd {

namespace {

// Typed key extraction that tracks what was consumed; finish() turns any
// leftover key into an error, so configs cannot silently misspell fields.
class StrictObject {
 public:
  StrictObject(const nlohmann::json& j, std::string path)
      : obj_(j), path_(std::move(path)) {
    if (!j.is_object())
      throw std::invalid_argument(path_ + ": expected an object");
  }

  template <typename T>
  void read(const char* key, T& out) {
    if (!obj_.contains(key)) return;
    taken_.insert(key);
    try {
      out = obj_.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw std::invalid_argument(path_ + "." + key + ": " + e.what());
    }
  }

  void read_raw(const char* key, nlohmann::json& out) {
    if (!obj_.contains(key)) return;
    taken_.insert(key);
    out = obj_.at(key);
  }

  const nlohmann::json* child(const char* key) {
    if (!obj_.contains(key)) return nullptr;
    taken_.insert(key);
    return &obj_.at(key);
  }

  void finish() const {
    for (const auto& item : obj_.items())
      if (!taken_.count(item.key()))
        throw std::invalid_argument(path_ + ": unknown key '" + item.key() +
                                    "'");
  }

 private:
  const nlohmann::json& obj_;
  std::string path_;
  std::set<std::string> taken_;
};

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument("config: " + what);
}

}  // namespace

std::vector<double> RunConfig::temperatures_descending() const {
  const double lo = temperature.min, hi = temperature.max;
  const int k = temperature.count;
  std::vector<double> temps(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) {
    const double frac = double(i) / double(k - 1);  // 0 at the hot end
    temps[std::size_t(i)] = temperature.ladder == "linear"
                                ? hi - frac * (hi - lo)
                                : hi * std::pow(lo / hi, frac);
  }
  temps.front() = hi;
  temps.back() = lo;
  return temps;
}

void RunConfig::validate(int k_min) const {
  require(temperature.min > 0.0, "temperature.min must be > 0");
  require(temperature.min < temperature.max,
          "temperature.min must be < temperature.max");
  require(temperature.count >= k_min,
          "temperature.count must be >= " + std::to_string(k_min));
  require(temperature.ladder == "geometric" || temperature.ladder == "linear",
          "temperature.ladder must be 'geometric' or 'linear'");
  require(buffer > 0, "buffer must be > 0");
  require(init_pt.chains > 0, "init_pt.chains must be > 0");
  require(init_pt.steps > 0, "init_pt.steps must be > 0");
  require(init_pt.burn_in >= 0 && init_pt.burn_in < init_pt.steps,
          "init_pt.burn_in must be in [0, steps)");
  require(init_pt.subsample_interval >= 1,
          "init_pt.subsample_interval must be >= 1");
  require(init_pt.swap_interval >= 1, "init_pt.swap_interval must be >= 1");
  require(init_pt.step_size > 0.0, "init_pt.step_size must be > 0");
  require(init_pt.init_scale > 0.0, "init_pt.init_scale must be > 0");
  require(training.iterations >= 1, "training.iterations must be >= 1");
  require(training.batch > 0, "training.batch must be > 0");
  require(training.learning_rate > 0.0, "training.learning_rate must be > 0");
  require(training.width > 0, "training.width must be > 0");
  require(training.hidden_layers >= 1, "training.hidden_layers must be >= 1");
  require(diffusion.steps >= 2, "diffusion.steps must be >= 2");
  require(diffusion.sigma_min > 0.0 && diffusion.sigma_min < diffusion.sigma_max,
          "diffusion noise scales must satisfy 0 < sigma_min < sigma_max");
  require(diffusion.rho > 0.0, "diffusion.rho must be > 0");
  require(diffusion.hutchinson_probes >= 1,
          "diffusion.hutchinson_probes must be >= 1");
  require(refine.steps >= 0, "refine.steps must be >= 0");
  require(refine.swap_interval >= 1, "refine.swap_interval must be >= 1");
  require(refine.step_size > 0.0, "refine.step_size must be > 0");
  require(refine.mode == "full" || refine.mode == "subset",
          "refine.mode must be 'full' or 'subset'");
  if (refine.mode == "subset") {
    require(refine.subset_size > 0,
            "refine.subset_size must be > 0 in subset mode");
    require(refine.thinning >= 1, "refine.thinning must be >= 1");
  }
  require(resample.quantile > 0.0 && resample.quantile <= 1.0,
          "resample.quantile must be in (0, 1]");
  require(threads >= 1, "threads must be >= 1");
  require(target.is_object() && target.contains("name"),
          "target must be an object with a 'name'");
}

LadderConfig RunConfig::ladder() const {
  return LadderConfig{diffusion.steps, diffusion.sigma_max, diffusion.sigma_min,
                      diffusion.rho};
}

TrainConfig RunConfig::train_config() const {
  TrainConfig out;
  out.iterations = training.iterations;
  out.batch = training.batch;
  out.adam.learning_rate = training.learning_rate;
  return out;
}

MlpConfig RunConfig::mlp_config(int dim) const {
  return MlpConfig{dim, training.width, training.hidden_layers};
}

nlohmann::json RunConfig::to_json() const {
  return {
      {"target", target},
      {"temperature",
       {{"min", temperature.min},
        {"max", temperature.max},
        {"count", temperature.count},
        {"ladder", temperature.ladder}}},
      {"buffer", buffer},
      {"init_pt",
       {{"chains", init_pt.chains},
        {"steps", init_pt.steps},
        {"burn_in", init_pt.burn_in},
        {"subsample_interval", init_pt.subsample_interval},
        {"swap_interval", init_pt.swap_interval},
        {"step_size", init_pt.step_size},
        {"init_scale", init_pt.init_scale}}},
      {"training",
       {{"iterations", training.iterations},
        {"batch", training.batch},
        {"learning_rate", training.learning_rate},
        {"width", training.width},
        {"hidden_layers", training.hidden_layers}}},
      {"diffusion",
       {{"steps", diffusion.steps},
        {"sigma_max", diffusion.sigma_max},
        {"sigma_min", diffusion.sigma_min},
        {"rho", diffusion.rho},
        {"hutchinson_probes", diffusion.hutchinson_probes}}},
      {"refine",
       {{"steps", refine.steps},
        {"swap_interval", refine.swap_interval},
        {"step_size", refine.step_size},
        {"mode", refine.mode},
        {"subset_size", refine.subset_size},
        {"thinning", refine.thinning}}},
      {"resample",
       {{"quantile", resample.quantile}, {"last_step", resample.last_step}}},
      {"seed", seed},
      {"threads", threads},
  };
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
  RunConfig cfg;
  StrictObject root(j, "config");
  root.read_raw("target", cfg.target);
  if (const auto* t = root.child("temperature")) {
    StrictObject o(*t, "config.temperature");
    o.read("min", cfg.temperature.min);
    o.read("max", cfg.temperature.max);
    o.read("count", cfg.temperature.count);
    o.read("ladder", cfg.temperature.ladder);
    o.finish();
  }
  root.read("buffer", cfg.buffer);
  if (const auto* t = root.child("init_pt")) {
    StrictObject o(*t, "config.init_pt");
    o.read("chains", cfg.init_pt.chains);
    o.read("steps", cfg.init_pt.steps);
    o.read("burn_in", cfg.init_pt.burn_in);
    o.read("subsample_interval", cfg.init_pt.subsample_interval);
    o.read("swap_interval", cfg.init_pt.swap_interval);
    o.read("step_size", cfg.init_pt.step_size);
    o.read("init_scale", cfg.init_pt.init_scale);
    o.finish();
  }
  if (const auto* t = root.child("training")) {
    StrictObject o(*t, "config.training");
    o.read("iterations", cfg.training.iterations);
    o.read("batch", cfg.training.batch);
    o.read("learning_rate", cfg.training.learning_rate);
    o.read("width", cfg.training.width);
    o.read("hidden_layers", cfg.training.hidden_layers);
    o.finish();
  }
  if (const auto* t = root.child("diffusion")) {
    StrictObject o(*t, "config.diffusion");
    o.read("steps", cfg.diffusion.steps);
    o.read("sigma_max", cfg.diffusion.sigma_max);
    o.read("sigma_min", cfg.diffusion.sigma_min);
    o.read("rho", cfg.diffusion.rho);
    o.read("hutchinson_probes", cfg.diffusion.hutchinson_probes);
    o.finish();
  }
  if (const auto* t = root.child("refine")) {
    StrictObject o(*t, "config.refine");
    o.read("steps", cfg.refine.steps);
    o.read("swap_interval", cfg.refine.swap_interval);
    o.read("step_size", cfg.refine.step_size);
    o.read("mode", cfg.refine.mode);
    o.read("subset_size", cfg.refine.subset_size);
    o.read("thinning", cfg.refine.thinning);
    o.finish();
  }
  if (const auto* t = root.child("resample")) {
    StrictObject o(*t, "config.resample");
    o.read("quantile", cfg.resample.quantile);
    o.read("last_step", cfg.resample.last_step);
    o.finish();
  }
  root.read("seed", cfg.seed);
  root.read("threads", cfg.threads);
  root.finish();
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  return RunConfig::from_json(read_json(path));
}

nlohmann::json parse_override_value(std::string_view text) {
  const auto parsed = nlohmann::json::parse(text, nullptr, false);
  if (!parsed.is_discarded()) return parsed;
  return std::string(text);
}

void apply_override(nlohmann::json& config, std::string_view dotted_key,
                    std::string_view value) {
  if (dotted_key.empty())
    throw std::invalid_argument("override: empty key");
  nlohmann::json* node = &config;
  std::string_view rest = dotted_key;
  while (true) {
    const auto dot = rest.find('.');
    const std::string key(rest.substr(0, dot));
    if (key.empty())
      throw std::invalid_argument("override: empty path segment in '" +
                                  std::string(dotted_key) + "'");
    if (dot == std::string_view::npos) {
      (*node)[key] = parse_override_value(value);
      return;
    }
    if (!node->contains(key)) (*node)[key] = nlohmann::json::object();
    node = &(*node)[key];
    if (!node->is_object())
      throw std::invalid_argument("override: '" + key +
                                  "' is not an object in '" +
                                  std::string(dotted_key) + "'");
    rest = rest.substr(dot + 1);
  }
}

}  // namespace ptsd
