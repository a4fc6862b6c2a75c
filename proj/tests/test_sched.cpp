#include <doctest.h>

#include <cmath>
#include <cstring>
#include <vector>

#include "clab/rng.hpp"
#include "clab/sched.hpp"

#include "test_util.hpp"

using clab::cdouble;
using clab::CounterRng;
using clab::cvec;
using clab::OperatorMatrix;
using clab::PreferredBasis;
using clab::ReducedDensityMatrix;
using clab::ScheduleConfig;
using clab::StateVector;
using clab::TensorPartition;
using clab::TriggerPolicy;

namespace {

ReducedDensityMatrix make_rdm(cvec entries, int d = 2) {
  ReducedDensityMatrix M;
  M.subsystem = 0;
  M.basis = PreferredBasis::identity(0, d);
  M.M = std::move(entries);
  return M;
}

OperatorMatrix zero_op(const TensorPartition& p) {
  return OperatorMatrix(p, cvec(p.total_dim * p.total_dim, cdouble{0.0}), true);
}

// Always-trigger single-subsystem configuration over H = 0.
ScheduleConfig born_cfg(std::uint64_t seed) {
  ScheduleConfig cfg;
  cfg.n_half_cycles = 1;
  cfg.T = 1.0;
  cfg.eta = 3e-3;
  cfg.policy.kind = TriggerPolicy::Kind::threshold;
  cfg.policy.theta = 1.0;
  cfg.policy.enabled = {0};
  cfg.pinned = {PreferredBasis::identity(0, 2)};
  cfg.seed = seed;
  return cfg;
}

}  // namespace

TEST_SUITE("sched") {

TEST_CASE("trigger policy validation") {
  TriggerPolicy p;
  p.theta = -0.1;
  CHECK_THROWS_AS(p.validate(), clab::DomainError);
  p.theta = 1.5;
  CHECK_THROWS_AS(p.validate(), clab::DomainError);
  p.theta = 0.5;
  p.enabled = {0, 1, 0};
  CHECK_THROWS_AS(p.validate(), clab::DomainError);
  p.enabled = {0, 1};
  CHECK_NOTHROW(p.validate());
}

TEST_CASE("trigger probability for both policy kinds") {
  TriggerPolicy thr;  // threshold
  TriggerPolicy lin;
  lin.kind = TriggerPolicy::Kind::linear;

  const auto low = make_rdm({cdouble{0.5}, cdouble{0.025},  //
                             cdouble{0.025}, cdouble{0.5}});  // C-bar = 0.05
  thr.theta = 0.1;
  CHECK(clab::trigger_probability(low, thr) == 1.0);
  thr.theta = 0.04;
  CHECK(clab::trigger_probability(low, thr) == 0.0);
  lin.theta = 1.0;
  CHECK(clab::trigger_probability(low, lin) ==
        doctest::Approx(0.95).epsilon(1e-12));
  lin.theta = 0.5;
  CHECK(clab::trigger_probability(low, lin) ==
        doctest::Approx(0.9).epsilon(1e-12));

  // The threshold comparison is strict: C-bar == theta does not trigger.
  const auto mid = make_rdm({cdouble{0.5}, cdouble{0.3},  //
                             cdouble{0.3}, cdouble{0.5}});  // C-bar = 0.6
  thr.theta = 0.6;
  CHECK(clab::trigger_probability(mid, thr) == 0.0);

  // Maximally coherent state never triggers, even at theta = 1.
  const auto coh = make_rdm({cdouble{0.5}, cdouble{0.5},  //
                             cdouble{0.5}, cdouble{0.5}});
  thr.theta = 1.0;
  CHECK(clab::trigger_probability(coh, thr) == 0.0);
  lin.theta = 1.0;
  CHECK(clab::trigger_probability(coh, lin) == 0.0);

  // theta = 0 never triggers for d >= 2...
  const auto diag = make_rdm({cdouble{0.3}, {}, {}, cdouble{0.7}});
  thr.theta = 0.0;
  CHECK(clab::trigger_probability(diag, thr) == 0.0);
  lin.theta = 0.0;
  CHECK(clab::trigger_probability(diag, lin) == 0.0);
  // ...but a one-dimensional subsystem has nothing to decohere.
  const auto one = make_rdm({cdouble{1.0}}, 1);
  CHECK(clab::trigger_probability(one, thr) == 1.0);

  // Invalid density matrices are rejected before any policy math.
  const auto bad = make_rdm({cdouble{0.5}, {}, {}, cdouble{0.4}});
  thr.theta = 0.5;
  CHECK_THROWS_AS((void)clab::trigger_probability(bad, thr),
                  clab::DomainError);
}

TEST_CASE("target sampling follows the diagonal weights") {
  const auto sure0 = make_rdm({cdouble{1.0}, {}, {}, cdouble{0.0}});
  for (double u : {0.0, 0.3, 0.999999})
    CHECK(clab::sample_target(sure0, u) == 0);
  const auto sure1 = make_rdm({cdouble{0.0}, {}, {}, cdouble{1.0}});
  CHECK(clab::sample_target(sure1, 1e-14) == 1);  // zero weight never drawn
  CHECK(clab::sample_target(sure1, 0.999999) == 1);

  const auto biased = make_rdm({cdouble{0.25}, {}, {}, cdouble{0.75}});
  CHECK(clab::sample_target(biased, 0.2499) == 0);
  CHECK(clab::sample_target(biased, 0.2501) == 1);

  // Empirical frequency against a fixed stream (3 sigma = 0.0041 at 1e5).
  std::size_t zeros = 0;
  const std::size_t n = 100000;
  for (std::size_t i = 0; i < n; ++i)
    if (clab::sample_target(biased, clab::uniform01(404, i, 0, 0)) == 0)
      ++zeros;
  const double freq = static_cast<double>(zeros) / n;
  CHECK(std::abs(freq - 0.25) <= 0.0041);

  // Uniform three-way split: chi-squared (df = 2) below the 0.999 quantile.
  const double third = 1.0 / 3.0;
  const auto tri = make_rdm({cdouble{third}, {}, {},  //
                             {}, cdouble{third}, {},  //
                             {}, {}, cdouble{third}},
                            3);
  std::size_t counts[3] = {0, 0, 0};
  for (std::size_t i = 0; i < n; ++i)
    ++counts[clab::sample_target(tri, clab::uniform01(405, i, 0, 0))];
  const double expect = static_cast<double>(n) / 3.0;
  double chi2 = 0.0;
  for (std::size_t c : counts) {
    const double dlt = static_cast<double>(c) - expect;
    chi2 += dlt * dlt / expect;
  }
  CHECK(chi2 < 13.8155);

  const auto off = make_rdm({cdouble{0.5}, {}, {}, cdouble{0.4}});
  CHECK_THROWS_AS((void)clab::sample_target(off, 0.5), clab::DomainError);
  const auto empty = make_rdm({cdouble{0.0}, {}, {}, cdouble{0.0}});
  CHECK_THROWS_AS((void)clab::sample_target(empty, 0.5), clab::DomainError);
}

TEST_CASE("schedule configuration validation") {
  const TensorPartition p({2, 2});
  ScheduleConfig cfg = born_cfg(1);
  CHECK_NOTHROW(cfg.validate(p));

  ScheduleConfig c = cfg;
  c.qualified_parity = 2;
  CHECK_THROWS_AS(c.validate(p), clab::DomainError);
  c = cfg;
  c.T = 0.0;
  CHECK_THROWS_AS(c.validate(p), clab::DomainError);
  c = cfg;
  c.grid_per_cycle = 1;
  CHECK_THROWS_AS(c.validate(p), clab::DomainError);
  c = cfg;
  c.n_half_cycles = -1;
  CHECK_THROWS_AS(c.validate(p), clab::DomainError);
  c = cfg;
  c.policy.enabled = {0, 2};
  CHECK_THROWS_AS(c.validate(p), clab::DomainError);
  c = cfg;
  c.pinned = {PreferredBasis::identity(0, 3)};  // wrong dimension
  CHECK_THROWS_AS(c.validate(p), clab::DomainError);
  c = cfg;
  c.coeffs.clear();  // the window template must at least construct
  CHECK_THROWS_AS(c.validate(p), clab::DomainError);
  c = cfg;
  c.hbar = 0.0;
  CHECK_THROWS_AS(c.validate(p), clab::DomainError);

  // Shape laws beyond constructibility surface when the window is used.
  const TensorPartition q({2});
  const StateVector psi(q, {cdouble{1.0}, cdouble{0.0}});
  cvec hz(4, cdouble{0.0});
  const OperatorMatrix Hq(q, hz, true);
  ScheduleConfig shape = born_cfg(3);
  shape.coeffs = {0.6, 0.4};
  CHECK_THROWS_AS((void)clab::run_trajectory(psi, Hq, shape, 0),
                  clab::DomainError);
}

TEST_CASE("per-cycle windows tile the schedule") {
  ScheduleConfig cfg;
  cfg.t0 = 0.25;
  cfg.T = 0.5;
  cfg.gamma = 0.0;  // resolves to 1/T
  const auto w3 = cfg.window_for(3);
  CHECK(w3.tau == doctest::Approx(1.75).epsilon(1e-15));
  CHECK(w3.T == 0.5);
  CHECK(w3.gamma == doctest::Approx(2.0));
  cfg.gamma = 0.7;
  CHECK(cfg.window_for(0).gamma == 0.7);

  CHECK(cfg.qualified(0));
  CHECK(!cfg.qualified(1));
  cfg.qualified_parity = 1;
  CHECK(!cfg.qualified(0));
  CHECK(cfg.qualified(3));
}

TEST_CASE("unqualified half-cycles are pure Schrodinger evolution") {
  const TensorPartition p({2, 2});
  const CounterRng rng(606, 0, 0);
  const OperatorMatrix H(p, testutil::rand_hermitian(rng, 4, 100), true);
  const StateVector psi = testutil::rand_state(rng, p, 300);

  ScheduleConfig cfg = born_cfg(9);
  cfg.pinned = {PreferredBasis::identity(0, 2)};
  cfg.n_half_cycles = 2;
  const auto r = clab::advance_half_cycle(psi, H, cfg, 1, 0);
  CHECK(!r.event.qualified);
  CHECK(!r.event.triggered);
  CHECK(r.event.considered.empty());

  const StateVector want = testutil::expm_evolve(H, psi, 1.0);
  CHECK(testutil::max_abs_diff(r.state.amps, want.amps) <= 1e-8);
}

TEST_CASE("a qualified always-trigger half-cycle collapses to a basis state") {
  const TensorPartition p({2});
  const StateVector psi(p, {cdouble{std::sqrt(0.3)}, cdouble{std::sqrt(0.7)}});
  const auto H = zero_op(p);
  const ScheduleConfig cfg = born_cfg(42);

  const auto r = clab::advance_half_cycle(psi, H, cfg, 0, 0);
  const auto& ev = r.event;
  REQUIRE(ev.qualified);
  REQUIRE(ev.triggered);
  REQUIRE(ev.subsystems == std::vector<int>{0});
  REQUIRE(ev.k_tilde.size() == 1);
  const int k = ev.k_tilde[0];

  // The target draw is the documented stream index (seed, traj, j, 2i + 1).
  const double u2 = clab::uniform01(42, 0, 0, 1);
  CHECK(k == (u2 < 0.3 ? 0 : 1));
  CHECK(ev.p_target[0] == doctest::Approx(k == 0 ? 0.3 : 0.7).epsilon(1e-12));
  // A spread pure state is fully coherent in the pinned basis: 2 sqrt(0.21).
  CHECK(ev.coherence[0] ==
        doctest::Approx(2.0 * std::sqrt(0.21)).epsilon(1e-12));

  // H = 0 collapse terminates exactly on the chosen basis state.
  CHECK(r.state.amps[static_cast<std::size_t>(1 - k)] == cdouble{0.0});
  CHECK(std::abs(r.state.amps[static_cast<std::size_t>(k)]) ==
        doctest::Approx(1.0).epsilon(1e-12));
  CHECK(r.max_norm_drift <= 1e-8);
}

TEST_CASE("two subsystems can collapse inside the same window") {
  const TensorPartition p({2, 2});
  const double a = std::sqrt(0.3), b = std::sqrt(0.7);
  const double c = std::sqrt(0.6), d = std::sqrt(0.4);
  const StateVector psi(
      p, {cdouble{a * c}, cdouble{a * d}, cdouble{b * c}, cdouble{b * d}});
  const auto H = zero_op(p);

  ScheduleConfig cfg = born_cfg(77);
  cfg.policy.enabled = {0, 1};
  cfg.pinned = {PreferredBasis::identity(0, 2), PreferredBasis::identity(1, 2)};

  const auto r = clab::advance_half_cycle(psi, H, cfg, 0, 0);
  const auto& ev = r.event;
  REQUIRE(ev.subsystems == std::vector<int>{0, 1});

  // Both draws follow the documented per-subsystem stream layout.
  const int k0 = clab::uniform01(77, 0, 0, 1) < 0.3 ? 0 : 1;
  const int k1 = clab::uniform01(77, 0, 0, 3) < 0.6 ? 0 : 1;
  CHECK(ev.k_tilde == std::vector<int>{k0, k1});

  for (std::size_t i = 0; i < 4; ++i) {
    const std::size_t want = static_cast<std::size_t>(k0) * 2 + k1;
    if (i == want)
      CHECK(std::abs(r.state.amps[i]) == doctest::Approx(1.0).epsilon(1e-12));
    else
      CHECK(r.state.amps[i] == cdouble{0.0});
  }

  // single_target keeps only the lowest subsystem id.
  cfg.single_target = true;
  const auto rs = clab::advance_half_cycle(psi, H, cfg, 0, 0);
  REQUIRE(rs.event.subsystems == std::vector<int>{0});
  const int ks = rs.event.k_tilde[0];
  // Subsystem 1 is untouched, so its factor survives unchanged.
  for (int i = 0; i < 2; ++i) {
    CHECK(rs.state.amps[static_cast<std::size_t>(1 - ks) * 2 + i] ==
          cdouble{0.0});
    CHECK(std::abs(rs.state.amps[static_cast<std::size_t>(ks) * 2 + i]) ==
          doctest::Approx(i == 0 ? c : d).epsilon(1e-12));
  }
}

TEST_CASE("theta = 0 produces no events") {
  const TensorPartition p({2});
  const StateVector psi(p, {cdouble{std::sqrt(0.3)}, cdouble{std::sqrt(0.7)}});
  const auto H = zero_op(p);
  ScheduleConfig cfg = born_cfg(11);
  cfg.policy.theta = 0.0;
  cfg.n_half_cycles = 4;

  const auto rec = clab::run_trajectory(psi, H, cfg, 0);
  CHECK(rec.n_events == 0);
  for (const auto& ev : rec.events) CHECK(!ev.triggered);
  CHECK(testutil::max_abs_diff(rec.final_state.amps, psi.amps) <= 1e-12);
}

TEST_CASE("trajectories are deterministic and respect parity") {
  const TensorPartition p({2});
  const StateVector psi(p, {cdouble{std::sqrt(0.3)}, cdouble{std::sqrt(0.7)}});
  const auto H = zero_op(p);
  ScheduleConfig cfg = born_cfg(123);
  cfg.n_half_cycles = 4;
  cfg.qualified_parity = 1;

  const auto r1 = clab::run_trajectory(psi, H, cfg, 5);
  const auto r2 = clab::run_trajectory(psi, H, cfg, 5);
  REQUIRE(r1.final_state.amps.size() == r2.final_state.amps.size());
  CHECK(std::memcmp(r1.final_state.amps.data(), r2.final_state.amps.data(),
                    r1.final_state.amps.size() * sizeof(cdouble)) == 0);
  REQUIRE(r1.events.size() == 4);
  CHECK(r1.n_events == 2);  // j = 1 and j = 3; the collapsed state re-triggers
  for (const auto& ev : r1.events) {
    CHECK(ev.qualified == (ev.j % 2 == 1));
    if (ev.triggered) CHECK(ev.qualified);
    if (!ev.qualified) CHECK(ev.considered.empty());
  }

  // Zero half-cycles: the trajectory is the identity map.
  cfg.n_half_cycles = 0;
  const auto r0 = clab::run_trajectory(psi, H, cfg, 5);
  CHECK(r0.events.empty());
  CHECK(std::memcmp(r0.final_state.amps.data(), psi.amps.data(),
                    psi.amps.size() * sizeof(cdouble)) == 0);
}

TEST_CASE("ensemble summaries are invariant under the worker count") {
  const TensorPartition p({2});
  const StateVector psi(p, {cdouble{std::sqrt(0.5)}, cdouble{std::sqrt(0.5)}});
  cvec sx = {{}, cdouble{0.3}, cdouble{0.3}, {}};
  const OperatorMatrix H(p, sx, true);

  ScheduleConfig cfg = born_cfg(31);
  cfg.policy.theta = 0.6;
  cfg.n_half_cycles = 4;
  cfg.grid_per_cycle = 4;

  std::vector<clab::RunRecord> rec1, rec3;
  const auto s1 = clab::run_ensemble(psi, H, cfg, 6, 1, 2, &rec1);
  const auto s3 = clab::run_ensemble(psi, H, cfg, 6, 3, 2, &rec3);

  CHECK(s1.n_traj == 6);
  CHECK(s1.n_events == s3.n_events);
  CHECK(s1.qualified_half_cycles == s3.qualified_half_cycles);
  CHECK(s1.no_trigger_qualified == s3.no_trigger_qualified);
  CHECK(s1.unqualified_triggered == 0);
  CHECK(s3.unqualified_triggered == 0);
  CHECK(s1.mean_coherence_at_trigger == s3.mean_coherence_at_trigger);
  CHECK(s1.max_norm_drift == s3.max_norm_drift);
  CHECK(s1.max_identity_gap == s3.max_identity_gap);
  CHECK(s1.outcome_counts == s3.outcome_counts);

  REQUIRE(rec1.size() == 6);
  REQUIRE(rec3.size() == 6);
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(std::memcmp(rec1[i].final_state.amps.data(),
                      rec3[i].final_state.amps.data(),
                      rec1[i].final_state.amps.size() * sizeof(cdouble)) == 0);
    // Only trajectories below the sample cap carry time series.
    if (i < 2)
      CHECK(!rec1[i].samples.empty());
    else
      CHECK(rec1[i].samples.empty());
  }

  CHECK_THROWS_AS((void)clab::run_ensemble(psi, H, cfg, 0), clab::DomainError);
}

TEST_CASE("solver fallback semantics at non-convergence") {
  const TensorPartition p({2});
  const StateVector psi(p, {cdouble{std::sqrt(0.3)}, cdouble{std::sqrt(0.7)}});
  const auto H = zero_op(p);

  ScheduleConfig cfg = born_cfg(55);
  // Forbid convergence outright: no sweeps, and an unreachable residual goal.
  cfg.solver.max_sweeps = 0;
  cfg.solver.converge_residual = 0.0;

  // skip + pinned: the pin overrides the solver, which never runs.
  const auto r_skip_pin = clab::advance_half_cycle(psi, H, cfg, 0, 0);
  CHECK(!r_skip_pin.event.basis_fallback);
  CHECK(r_skip_pin.event.triggered);

  // skip without a pin: the failed solve leaves the subsystem inert.
  ScheduleConfig bare = cfg;
  bare.pinned.clear();
  const auto r_skip = clab::advance_half_cycle(psi, H, bare, 0, 0);
  CHECK(r_skip.event.basis_fallback);
  CHECK(!r_skip.event.triggered);
  CHECK(r_skip.event.considered.empty());

  // use_pinned: the solver runs, fails, and the pin is the safety net.
  ScheduleConfig net = cfg;
  net.on_nonconverged = ScheduleConfig::SolverFallback::use_pinned;
  const auto r_net = clab::advance_half_cycle(psi, H, net, 0, 0);
  CHECK(r_net.event.basis_fallback);
  CHECK(r_net.event.triggered);
  REQUIRE(r_net.event.k_tilde.size() == 1);
  const int k = r_net.event.k_tilde[0];
  CHECK(r_net.state.amps[static_cast<std::size_t>(1 - k)] == cdouble{0.0});
}

TEST_CASE("bernoulli trigger-free fraction") {
  CHECK(clab::bernoulli_no_trigger_fraction(1, 1000, 10, 0.0) == 1.0);
  CHECK(clab::bernoulli_no_trigger_fraction(1, 1000, 10, 1.0) == 0.0);
  const double f = clab::bernoulli_no_trigger_fraction(5, 10000, 1, 0.5);
  CHECK(std::abs(f - 0.5) <= 0.015);  // 3 sigma
  CHECK_THROWS_AS((void)clab::bernoulli_no_trigger_fraction(1, 10, 0, 0.5),
                  clab::DomainError);
  CHECK_THROWS_AS((void)clab::bernoulli_no_trigger_fraction(1, 10, 2, 1.5),
                  clab::DomainError);
}

}  // TEST_SUITE
