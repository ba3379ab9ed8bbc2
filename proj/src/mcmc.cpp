#include "ptsd/mcmc.hpp"

#include <atomic>
#include <cmath>

#include "ptsd/parallel.hpp"

namespace ptsd {

ChainState make_chain_state(const TemperedTarget& target, Eigen::VectorXd x) {
  ChainState st;
  st.base_energy = target.base_energy(x);
  st.base_gradient = target.base_gradient(x);
  st.x = std::move(x);
  return st;
}

bool mala_step(const TemperedTarget& target, ChainState& state,
               double step_size, Rng& rng) {
  if (step_size == 0.0) return true;  // degenerate proposal: stay put

  const double t = target.temperature();
  const Eigen::VectorXd grad_u = state.base_gradient / t;
  const Eigen::VectorXd xi = rng.normal_vec(state.x.size());
  const Eigen::VectorXd proposal =
      state.x - step_size * grad_u + std::sqrt(2.0 * step_size) * xi;

  const double prop_energy = target.base_energy(proposal);
  const Eigen::VectorXd prop_gradient = target.base_gradient(proposal);
  if (!std::isfinite(prop_energy) || !prop_gradient.allFinite()) return false;

  // log q(x'|x) follows directly from the injected noise; the reverse density
  // needs the drift from the proposal point.
  const double u_cur = state.base_energy / t;
  const double u_prop = prop_energy / t;
  const double log_fwd = -0.5 * xi.squaredNorm();
  const Eigen::VectorXd back =
      state.x - (proposal - step_size * (prop_gradient / t));
  const double log_rev = -back.squaredNorm() / (4.0 * step_size);
  const double log_alpha = (u_cur - u_prop) + log_rev - log_fwd;

  double u = 0.0;
  do {
    u = rng.uniform();
  } while (u <= 0.0);
  if (std::log(u) >= log_alpha) return false;

  state.x = proposal;
  state.base_energy = prop_energy;
  state.base_gradient = prop_gradient;
  return true;
}

double pt_swap_probability(double e_i, double e_j, double t_i, double t_j) {
  const double arg = -(e_j - e_i) * (1.0 / t_i - 1.0 / t_j);
  return std::min(1.0, std::exp(arg));
}

bool attempt_swap(ChainState& state_i, ChainState& state_j, double t_i,
                  double t_j, Rng& rng) {
  const double p =
      pt_swap_probability(state_i.base_energy, state_j.base_energy, t_i, t_j);
  if (rng.uniform() >= p) return false;
  std::swap(state_i, state_j);
  return true;
}

void PtSchedule::validate() const {
  if (temperatures.size() < 2)
    throw std::invalid_argument("pt schedule: need at least two temperatures");
  if (step_sizes.size() != temperatures.size())
    throw std::invalid_argument("pt schedule: one step size per level");
  for (std::size_t i = 0; i + 1 < temperatures.size(); ++i)
    if (!(temperatures[i] < temperatures[i + 1]))
      throw std::invalid_argument("pt schedule: temperatures must ascend");
  if (swap_interval < 1)
    throw std::invalid_argument("pt schedule: swap_interval must be >= 1");
}

namespace {

struct LadderTrace {
  // collected[event] holds one state (plus caches) per level.
  std::vector<std::vector<ChainState>> collected;
  std::vector<std::uint64_t> proposals, accepts, swap_attempts, swap_accepts;
};

}  // namespace

PtResult run_pt(std::shared_ptr<const EnergyTarget> target,
                std::shared_ptr<EvalCounter> counter, const PtSchedule& schedule,
                const PtRunConfig& config) {
  schedule.validate();
  if (config.steps < 0 || config.chains < 1)
    throw std::invalid_argument("pt run: bad chains/steps");
  if (config.subsample_interval < 1)
    throw std::invalid_argument("pt run: subsample_interval must be >= 1");

  const int levels = static_cast<int>(schedule.temperatures.size());
  const int dim = target->dim();
  std::vector<TemperedTarget> tempered;
  tempered.reserve(levels);
  for (double t : schedule.temperatures)
    tempered.emplace_back(target, t, counter);

  std::vector<LadderTrace> traces(config.chains);
  parallel_for(config.chains, config.threads, [&](int c) {
    Rng rng(substream_seed(config.seed, "pt-chain", c));
    LadderTrace& trace = traces[c];
    trace.proposals.assign(levels, 0);
    trace.accepts.assign(levels, 0);
    trace.swap_attempts.assign(std::max(0, levels - 1), 0);
    trace.swap_accepts.assign(std::max(0, levels - 1), 0);

    std::vector<ChainState> states;
    states.reserve(levels);
    for (int l = 0; l < levels; ++l) {
      Eigen::VectorXd x0 = config.init
                               ? config.init(c, l, rng)
                               : (config.init_scale * rng.normal_vec(dim)).eval();
      states.push_back(make_chain_state(tempered[l], std::move(x0)));
    }

    int swap_events = 0;
    for (int s = 1; s <= config.steps; ++s) {
      for (int l = 0; l < levels; ++l) {
        ++trace.proposals[l];
        if (mala_step(tempered[l], states[l], schedule.step_sizes[l], rng))
          ++trace.accepts[l];
      }
      if (s % schedule.swap_interval == 0) {
        // Alternate even/odd adjacent pairs; a 2-level ladder has only one
        // pair, which attempts every event.
        const int parity = (levels == 2) ? 0 : swap_events % 2;
        ++swap_events;
        for (int p = parity; p + 1 < levels; p += 2) {
          ++trace.swap_attempts[p];
          if (attempt_swap(states[p], states[p + 1],
                           schedule.temperatures[p],
                           schedule.temperatures[p + 1], rng))
            ++trace.swap_accepts[p];
        }
      }
      if (s > config.burn_in &&
          (s - config.burn_in) % config.subsample_interval == 0)
        trace.collected.push_back(states);
    }
  });

  PtResult result;
  result.stats.proposals.assign(levels, 0);
  result.stats.accepts.assign(levels, 0);
  result.stats.swap_attempts.assign(std::max(0, levels - 1), 0);
  result.stats.swap_accepts.assign(std::max(0, levels - 1), 0);
  for (const auto& trace : traces) {
    for (int l = 0; l < levels; ++l) {
      result.stats.proposals[l] += trace.proposals[l];
      result.stats.accepts[l] += trace.accepts[l];
    }
    for (int p = 0; p + 1 < levels; ++p) {
      result.stats.swap_attempts[p] += trace.swap_attempts[p];
      result.stats.swap_accepts[p] += trace.swap_accepts[p];
    }
  }

  // Event-major merge: dropping the oldest rows later discards early events
  // uniformly across chains.
  for (int l = 0; l < levels; ++l)
    result.buffers.emplace_back(dim, schedule.temperatures[l]);
  const std::size_t events = traces.empty() ? 0 : traces.front().collected.size();
  for (std::size_t e = 0; e < events; ++e)
    for (const auto& trace : traces)
      for (int l = 0; l < levels; ++l) {
        const ChainState& st = trace.collected[e][l];
        result.buffers[l].append(st.x, Provenance::InitialPt, -1,
                                 st.base_energy, &st.base_gradient);
      }
  return result;
}

RefineStats local_pt_refine(SampleBuffer& cold, SampleBuffer& hot,
                            std::shared_ptr<const EnergyTarget> target,
                            std::shared_ptr<EvalCounter> counter,
                            const RefineConfig& config) {
  if (config.steps < 0) throw std::invalid_argument("refine: steps < 0");
  if (config.steps == 0) return {};
  if (cold.count() == 0 || hot.count() == 0)
    throw std::invalid_argument("refine: empty buffer");
  if (!(cold.temperature() < hot.temperature()))
    throw std::invalid_argument("refine: cold buffer must be colder");
  if (config.thinning < 1) throw std::invalid_argument("refine: thinning < 1");

  const TemperedTarget cold_t(target, cold.temperature(), counter);
  const TemperedTarget hot_t(target, hot.temperature(), counter);

  const bool subset = config.mode == RefineMode::Subset;
  const int pairs = subset ? std::min(config.subset_size, cold.count())
                           : cold.count();
  if (pairs <= 0) throw std::invalid_argument("refine: no pairs to run");

  // Base pairing and (in subset mode) the pair selection come from one stream;
  // per-pair chains then own derived streams so execution order is free.
  Rng pick(substream_seed(config.seed, "refine-pick"));
  std::vector<int> cold_rows(cold.count());
  std::iota(cold_rows.begin(), cold_rows.end(), 0);
  if (subset) {
    for (int i = 0; i < pairs; ++i) {
      const int j = i + int(pick.uniform() * double(cold.count() - i));
      std::swap(cold_rows[i], cold_rows[std::min(j, cold.count() - 1)]);
    }
    cold_rows.resize(pairs);
  }
  std::vector<int> hot_rows(pairs);
  const bool aligned = hot.count() == cold.count() && !subset;
  for (int i = 0; i < pairs; ++i)
    hot_rows[i] = aligned ? cold_rows[i]
                          : std::min(int(pick.uniform() * hot.count()),
                                     hot.count() - 1);

  auto state_from_row = [](const SampleBuffer& buf, int row,
                           const TemperedTarget& t) {
    ChainState st;
    st.x = buf.sample(row);
    st.base_energy =
        buf.has_energy(row) ? buf.base_energy(row) : t.base_energy(st.x);
    st.base_gradient =
        buf.has_gradient(row) ? buf.base_gradient(row) : t.base_gradient(st.x);
    return st;
  };

  struct PairOutcome {
    ChainState cold_final, hot_final;
    std::vector<ChainState> cold_kept, hot_kept;
    std::uint64_t swap_attempts = 0, swap_accepts = 0;
    std::uint64_t cold_accepts = 0, hot_accepts = 0;
  };
  std::vector<PairOutcome> outcomes(pairs);

  parallel_for(pairs, config.threads, [&](int p) {
    Rng rng(substream_seed(config.seed, "refine-pair", p));
    PairOutcome& out = outcomes[p];
    ChainState cs = state_from_row(cold, cold_rows[p], cold_t);
    ChainState hs = state_from_row(hot, hot_rows[p], hot_t);
    for (int s = 1; s <= config.steps; ++s) {
      if (mala_step(cold_t, cs, config.cold_step, rng)) ++out.cold_accepts;
      if (mala_step(hot_t, hs, config.hot_step, rng)) ++out.hot_accepts;
      if (s % config.swap_interval == 0) {
        ++out.swap_attempts;
        if (attempt_swap(cs, hs, cold.temperature(), hot.temperature(), rng))
          ++out.swap_accepts;
      }
      if (subset && s % config.thinning == 0) {
        out.cold_kept.push_back(cs);
        out.hot_kept.push_back(hs);
      }
    }
    out.cold_final = std::move(cs);
    out.hot_final = std::move(hs);
  });

  RefineStats stats;
  stats.cold_proposals = stats.hot_proposals =
      std::uint64_t(pairs) * std::uint64_t(config.steps);
  for (const auto& out : outcomes) {
    stats.swap_attempts += out.swap_attempts;
    stats.swap_accepts += out.swap_accepts;
    stats.cold_accepts += out.cold_accepts;
    stats.hot_accepts += out.hot_accepts;
  }

  if (subset) {
    for (const auto& out : outcomes) {
      for (const auto& st : out.cold_kept) {
        cold.append(st.x, Provenance::AppendedPt, -1, st.base_energy,
                    &st.base_gradient);
        ++stats.appended;
      }
      for (const auto& st : out.hot_kept)
        hot.append(st.x, Provenance::AppendedPt, -1, st.base_energy,
                   &st.base_gradient);
    }
    return stats;
  }

  for (int p = 0; p < pairs; ++p)
    cold.overwrite(cold_rows[p], outcomes[p].cold_final.x, Provenance::Refined,
                   outcomes[p].cold_final.base_energy,
                   outcomes[p].cold_final.base_gradient);
  SampleBuffer new_hot(hot.dim(), hot.temperature());
  for (int p = 0; p < pairs; ++p)
    new_hot.append(outcomes[p].hot_final.x, Provenance::Refined, -1,
                   outcomes[p].hot_final.base_energy,
                   &outcomes[p].hot_final.base_gradient);
  hot = std::move(new_hot);
  return stats;
}

}  // namespace ptsd
