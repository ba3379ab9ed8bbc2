#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "ptsd/mcmc.hpp"

using namespace ptsd;

namespace {

// Finite inside a ball, +inf outside: exercises rejection of bad proposals.
class CliffTarget final : public EnergyTarget {
 public:
  CliffTarget() : EnergyTarget(1, "cliff") {}
  nlohmann::json params() const override { return {{"type", "cliff"}}; }

 protected:
  double do_energy(const Eigen::VectorXd& x) const override {
    return std::abs(x[0]) < 1.0 ? 0.5 * x.squaredNorm()
                                : std::numeric_limits<double>::infinity();
  }
  Eigen::VectorXd do_gradient(const Eigen::VectorXd& x) const override {
    return x;
  }
};

TemperedTarget gauss_at(double temp, std::shared_ptr<EvalCounter> c = nullptr) {
  return TemperedTarget(std::make_shared<GaussianTarget>(1, 1.0), temp,
                        c ? c : std::make_shared<EvalCounter>());
}

}  // namespace

TEST_SUITE_BEGIN("mcmc");

TEST_CASE("swap probability matches the closed form") {
  // 1D Gaussian E = x^2/2: x_i = 0 at T=1, x_j = 2 at T=2.
  CHECK(pt_swap_probability(0.0, 2.0, 1.0, 2.0) ==
        doctest::Approx(std::exp(-1.0)).epsilon(1e-15));
  CHECK(pt_swap_probability(3.7, 3.7, 1.0, 4.0) == 1.0);   // equal energies
  CHECK(pt_swap_probability(0.0, 10.0, 2.0, 2.0) == 1.0);  // equal temperatures
  // Energy shift invariance is exact.
  CHECK(pt_swap_probability(100.0, 102.0, 1.0, 2.0) ==
        pt_swap_probability(0.0, 2.0, 1.0, 2.0));
}

TEST_CASE("swap exchanges full states and is an involution") {
  auto t = gauss_at(1.0);
  ChainState a = make_chain_state(t, Eigen::VectorXd::Constant(1, 0.3));
  ChainState b = make_chain_state(t, Eigen::VectorXd::Constant(1, 0.3));
  b.x[0] = -0.7;  // same cached energy -> p = 1 in both directions
  a.base_energy = b.base_energy = 1.25;
  const ChainState a0 = a, b0 = b;
  Rng rng(1);
  CHECK(attempt_swap(a, b, 1.0, 2.0, rng));
  CHECK(a.x == b0.x);
  CHECK(attempt_swap(a, b, 1.0, 2.0, rng));
  CHECK(a.x == a0.x);
  CHECK(b.x == b0.x);
}

TEST_CASE("zero step size keeps the state and accepts") {
  auto t = gauss_at(1.0);
  ChainState st = make_chain_state(t, Eigen::VectorXd::Constant(1, 1.5));
  const Eigen::VectorXd x0 = st.x;
  Rng rng(2);
  CHECK(mala_step(t, st, 0.0, rng));
  CHECK(st.x == x0);
}

TEST_CASE("mala matches gaussian moments at stationarity") {
  auto counter = std::make_shared<EvalCounter>();
  auto t = gauss_at(1.0, counter);
  ChainState st = make_chain_state(t, Eigen::VectorXd::Zero(1));
  Rng rng(3);
  const int n = 60000;
  double sum = 0.0, sum2 = 0.0;
  int accepted = 0;
  for (int s = 0; s < n; ++s) {
    if (mala_step(t, st, 0.5, rng)) ++accepted;
    sum += st.x[0];
    sum2 += st.x[0] * st.x[0];
  }
  const double mean = sum / n, var = sum2 / n - mean * mean;
  CHECK(std::abs(mean) < 0.05);
  CHECK(var == doctest::Approx(1.0).epsilon(0.08));
  CHECK(accepted > 0.3 * n);
  CHECK(accepted < 0.999 * n);
  // One proposal costs exactly one energy and one gradient evaluation.
  CHECK(counter->snapshot().energy == std::uint64_t(n) + 1);
  CHECK(counter->snapshot().gradient == std::uint64_t(n) + 1);
}

TEST_CASE("mala satisfies detailed balance between two intervals") {
  auto t = gauss_at(1.0);
  ChainState st = make_chain_state(t, Eigen::VectorXd::Zero(1));
  Rng rng(4);
  auto region = [](double x) { return x < 0.3 ? 0 : (x < 1.1 ? 1 : 2); };
  long ab = 0, ba = 0;
  int prev = region(st.x[0]);
  for (int s = 0; s < 400000; ++s) {
    mala_step(t, st, 0.4, rng);
    const int cur = region(st.x[0]);
    if (prev == 0 && cur == 1) ++ab;
    if (prev == 1 && cur == 0) ++ba;
    prev = cur;
  }
  // Stationary flows match within Monte Carlo error.
  CHECK(std::abs(double(ab - ba)) < 5.0 * std::sqrt(double(ab + ba)));
}

TEST_CASE("non-finite proposals are rejected, not propagated") {
  auto t = TemperedTarget(std::make_shared<CliffTarget>(), 1.0,
                          std::make_shared<EvalCounter>());
  ChainState st = make_chain_state(t, Eigen::VectorXd::Constant(1, 0.9));
  Rng rng(5);
  for (int s = 0; s < 2000; ++s) {
    mala_step(t, st, 0.8, rng);
    CHECK(std::abs(st.x[0]) < 1.0);
    CHECK(std::isfinite(st.base_energy));
  }
}

TEST_CASE("lj chain with an oversized step stays finite") {
  auto lj = std::make_shared<LennardJonesTarget>(4);
  auto t = TemperedTarget(lj, 1.0, std::make_shared<EvalCounter>());
  Rng rng(6);
  ChainState st = make_chain_state(t, 0.3 * rng.normal_vec(12));
  int accepted = 0;
  for (int s = 0; s < 300; ++s) {
    if (mala_step(t, st, 5.0, rng)) ++accepted;
    CHECK(std::isfinite(st.base_energy));
    CHECK(st.base_gradient.allFinite());
  }
  CHECK(accepted < 30);  // essentially everything rejects at this step size
}

TEST_CASE("two-temperature pt reproduces both marginals") {
  PtSchedule sched{{1.0, 2.0}, {0.4, 0.8}, 5};
  PtRunConfig cfg;
  cfg.chains = 10;
  cfg.steps = 4000;
  cfg.burn_in = 500;
  cfg.subsample_interval = 5;
  cfg.seed = 42;
  auto counter = std::make_shared<EvalCounter>();
  const auto res = run_pt(std::make_shared<GaussianTarget>(1, 1.0), counter,
                          sched, cfg);

  REQUIRE(res.buffers.size() == 2);
  const int per_level = 10 * ((4000 - 500) / 5);
  CHECK(res.buffers[0].count() == per_level);
  CHECK(res.buffers[1].count() == per_level);

  const Eigen::VectorXd v0 = oracle::column_variance(res.buffers[0].samples());
  const Eigen::VectorXd v1 = oracle::column_variance(res.buffers[1].samples());
  CHECK(v0[0] == doctest::Approx(1.0).epsilon(0.1));   // T=1
  CHECK(v1[0] == doctest::Approx(2.0).epsilon(0.1));   // T=2 tempered variance
  CHECK(res.stats.swap_rate(0) > 0.0);
  CHECK(res.stats.swap_rate(0) < 1.0);
  CHECK(res.stats.acceptance_rate(0) > 0.3);

  // Exact budget: (steps + 1 initial) per level per chain, both kinds.
  const std::uint64_t expected = 2ull * 10ull * (4000ull + 1ull);
  CHECK(counter->snapshot().energy == expected);
  CHECK(counter->snapshot().gradient == expected);

  // Collected rows carry usable caches.
  CHECK(res.buffers[0].has_energy(0));
  CHECK(res.buffers[0].has_gradient(0));
  CHECK(res.buffers[0].provenance(0) == Provenance::InitialPt);
}

TEST_CASE("bookkeeping with interval 1 and no burn-in") {
  PtSchedule sched{{1.0, 3.0}, {0.3, 0.9}, 5};
  PtRunConfig cfg;
  cfg.chains = 3;
  cfg.steps = 17;
  cfg.subsample_interval = 1;
  cfg.seed = 1;
  const auto res = run_pt(std::make_shared<GaussianTarget>(2, 1.0),
                          std::make_shared<EvalCounter>(), sched, cfg);
  CHECK(res.buffers[0].count() == 3 * 17);
  CHECK(res.buffers[1].count() == 3 * 17);
}

TEST_CASE("pt runs are deterministic and thread-count independent") {
  PtSchedule sched{{1.0, 2.0, 4.0}, {0.3, 0.6, 1.2}, 2};
  PtRunConfig cfg;
  cfg.chains = 6;
  cfg.steps = 200;
  cfg.subsample_interval = 3;
  cfg.seed = 7;
  auto tgt = std::make_shared<GaussianTarget>(2, 1.0);
  const auto a = run_pt(tgt, std::make_shared<EvalCounter>(), sched, cfg);
  cfg.threads = 4;
  const auto b = run_pt(tgt, std::make_shared<EvalCounter>(), sched, cfg);
  for (int l = 0; l < 3; ++l) {
    REQUIRE(a.buffers[l].count() == b.buffers[l].count());
    CHECK(a.buffers[l].samples() == b.buffers[l].samples());
  }
  CHECK(a.stats.accepts == b.stats.accepts);
  CHECK(a.stats.swap_accepts == b.stats.swap_accepts);
}

TEST_CASE("full-ladder swaps alternate pair parity") {
  // With 4 levels and swap_interval 1, pairs (0,1),(2,3) and (1,2) alternate;
  // over 10 steps the even pairs see 5 events and the odd pair 5.
  PtSchedule sched{{1.0, 2.0, 4.0, 8.0}, {0.1, 0.2, 0.4, 0.8}, 1};
  PtRunConfig cfg;
  cfg.chains = 1;
  cfg.steps = 10;
  cfg.seed = 3;
  const auto res = run_pt(std::make_shared<GaussianTarget>(1, 1.0),
                          std::make_shared<EvalCounter>(), sched, cfg);
  CHECK(res.stats.swap_attempts[0] == 5);
  CHECK(res.stats.swap_attempts[1] == 5);
  CHECK(res.stats.swap_attempts[2] == 5);
}

namespace {

SampleBuffer constant_buffer(int dim, double temp, int n, double value,
                             bool with_caches,
                             const std::shared_ptr<const EnergyTarget>& tgt) {
  SampleBuffer buf(dim, temp);
  const Eigen::VectorXd x = Eigen::VectorXd::Constant(dim, value);
  for (int i = 0; i < n; ++i) {
    if (with_caches) {
      const Eigen::VectorXd g = tgt->gradient(x);
      buf.append(x, Provenance::Resampled, i, tgt->energy(x), &g);
    } else {
      buf.append(x, Provenance::Guided, -1);
    }
  }
  return buf;
}

}  // namespace

TEST_CASE("refine with zero steps is a no-op") {
  auto tgt = std::make_shared<GaussianTarget>(1, 1.0);
  auto counter = std::make_shared<EvalCounter>();
  SampleBuffer cold = constant_buffer(1, 1.0, 5, 0.0, true, tgt);
  SampleBuffer hot = constant_buffer(1, 2.0, 5, 1.0, true, tgt);
  const Eigen::MatrixXd before = cold.samples();
  RefineConfig rc;
  rc.steps = 0;
  local_pt_refine(cold, hot, tgt, counter, rc);
  CHECK(cold.samples() == before);
  CHECK(counter->snapshot().total() == 0);
}

TEST_CASE("refine pulls a degenerate cold buffer toward the target") {
  auto tgt = std::make_shared<GaussianTarget>(1, 1.0);
  Rng rng(9);
  auto run_l = [&](int l) {
    SampleBuffer cold = constant_buffer(1, 1.0, 400, 0.0, true, tgt);
    SampleBuffer hot(1, 2.0);
    for (int i = 0; i < 400; ++i) {
      const Eigen::VectorXd x = std::sqrt(2.0) * rng.normal_vec(1);
      const Eigen::VectorXd g = tgt->gradient(x);
      hot.append(x, Provenance::InitialPt, -1, tgt->energy(x), &g);
    }
    RefineConfig rc;
    rc.steps = l;
    rc.cold_step = 0.25;
    rc.hot_step = 0.5;
    rc.seed = 100 + l;
    local_pt_refine(cold, hot, tgt, std::make_shared<EvalCounter>(), rc);
    return oracle::column_variance(cold.samples())[0];
  };
  // One step lifts the point mass part of the way; a long run equilibrates.
  const double v1 = run_l(1), v32 = run_l(32);
  CHECK(v1 > 0.1);
  CHECK(v1 < 0.8);
  CHECK(v32 > v1);
  CHECK(v32 == doctest::Approx(1.0).epsilon(0.25));
}

TEST_CASE("refine full mode replaces rows and tags provenance") {
  auto tgt = std::make_shared<GaussianTarget>(2, 1.0);
  SampleBuffer cold = constant_buffer(2, 1.0, 20, 0.5, true, tgt);
  SampleBuffer hot = constant_buffer(2, 3.0, 35, -0.5, true, tgt);
  RefineConfig rc;
  rc.steps = 3;
  rc.seed = 17;
  const auto stats = local_pt_refine(cold, hot, tgt,
                                     std::make_shared<EvalCounter>(), rc);
  CHECK(cold.count() == 20);
  CHECK(hot.count() == 20);  // replaced by the hot chain finals, one per pair
  for (int i = 0; i < cold.count(); ++i) {
    CHECK(cold.provenance(i) == Provenance::Refined);
    CHECK(cold.has_energy(i));
    CHECK(cold.has_gradient(i));
  }
  CHECK(stats.cold_proposals == 20 * 3);
}

TEST_CASE("refine counts exactly what the caches cannot provide") {
  auto tgt = std::make_shared<GaussianTarget>(1, 1.0);
  auto counter = std::make_shared<EvalCounter>();
  // Cold rows carry energy but no gradient (the post-resample situation);
  // hot rows carry both.
  SampleBuffer cold(1, 1.0);
  for (int i = 0; i < 50; ++i) {
    const Eigen::VectorXd x = Eigen::VectorXd::Constant(1, 0.1 * i);
    cold.append(x, Provenance::Resampled, i, tgt->energy(x), nullptr);
  }
  SampleBuffer hot = constant_buffer(1, 2.0, 50, 1.0, true, tgt);
  RefineConfig rc;
  rc.steps = 7;
  rc.seed = 23;
  local_pt_refine(cold, hot, tgt, counter, rc);
  // 50 cold-start gradients + 2 chains * 50 pairs * 7 proposals of each kind.
  CHECK(counter->snapshot().gradient == 50 + 2ull * 50 * 7);
  CHECK(counter->snapshot().energy == 2ull * 50 * 7);
}

TEST_CASE("refine subset mode appends thinned states") {
  auto tgt = std::make_shared<GaussianTarget>(1, 1.0);
  SampleBuffer cold = constant_buffer(1, 1.0, 100, 0.2, true, tgt);
  SampleBuffer hot = constant_buffer(1, 2.0, 100, 0.4, true, tgt);
  const Eigen::MatrixXd cold_before = cold.samples();
  RefineConfig rc;
  rc.steps = 10;
  rc.mode = RefineMode::Subset;
  rc.subset_size = 30;
  rc.thinning = 5;
  rc.seed = 5;
  const auto stats = local_pt_refine(cold, hot, tgt,
                                     std::make_shared<EvalCounter>(), rc);
  CHECK(stats.appended == 30 * 2);  // steps/thinning states per pair
  CHECK(cold.count() == 100 + 60);
  CHECK(hot.count() == 100 + 60);
  // Original rows untouched.
  CHECK(cold.samples().leftCols(100) == cold_before);
  CHECK(cold.provenance(100) == Provenance::AppendedPt);
}

TEST_CASE("refine swap cadence follows the interval") {
  auto tgt = std::make_shared<GaussianTarget>(1, 1.0);
  auto mk = [&] {
    return std::pair{constant_buffer(1, 1.0, 8, 0.1, true, tgt),
                     constant_buffer(1, 2.0, 8, 0.3, true, tgt)};
  };
  RefineConfig rc;
  rc.steps = 9;
  rc.seed = 31;

  auto [c1, h1] = mk();
  rc.swap_interval = 1;
  CHECK(local_pt_refine(c1, h1, tgt, std::make_shared<EvalCounter>(), rc)
            .swap_attempts == 8 * 9);

  auto [c2, h2] = mk();
  rc.swap_interval = 100;  // longer than the chain: no attempts
  CHECK(local_pt_refine(c2, h2, tgt, std::make_shared<EvalCounter>(), rc)
            .swap_attempts == 0);
}

TEST_SUITE_END();
