#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "flowlab/flow.hpp"
#include "flowlab/lpf.hpp"
#include "flowlab/pliss.hpp"

using namespace flowlab;

namespace {

// Reference mask for the sampled-function variant: check every later grid
// point directly.
std::vector<char> flow_mask_oracle(const std::vector<double>& h, double dt,
                                   double c, double eps) {
  const size_t n = h.size();
  std::vector<char> mask(n, 0);
  for (size_t i = 0; i < n; ++i) {
    bool ok = true;
    for (size_t j = i + 1; j < n && ok; ++j) {
      const double gap = static_cast<double>(j - i) * dt;
      if (!(h[j] - h[i] < (c + eps) * gap)) ok = false;
    }
    mask[i] = ok ? 1 : 0;
  }
  return mask;
}

CocycleTrace synthetic_trace(int n, double a_value, double dist_value) {
  CocycleTrace tr;
  tr.n = n;
  tr.a.assign(static_cast<size_t>(n), a_value);
  tr.logp.assign(static_cast<size_t>(n), -a_value);
  tr.logg.assign(static_cast<size_t>(n), 0.0);
  tr.logdet_cu.assign(static_cast<size_t>(n), 0.0);
  tr.dist_trunc.assign(static_cast<size_t>(n), dist_value);
  tr.delta = 0.01;
  return tr;
}

}  // namespace

TEST_CASE("pliss config validates rate ordering") {
  PlissConfig cfg{1.0, 0.25, 0.5};
  CHECK(cfg.zeta() == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  CHECK_THROWS_AS((PlissConfig{1.0, 0.5, 0.5}.validate()), ConfigError);
  CHECK_THROWS_AS((PlissConfig{0.4, 0.25, 0.5}.validate()), ConfigError);
  // c2 == A is allowed and gives density one.
  CHECK(PlissConfig{0.5, 0.0, 0.5}.zeta() == doctest::Approx(1.0));
}

TEST_CASE("constant sequence at the target rate marks every index") {
  PlissConfig cfg{1.0, 0.25, 0.5};
  std::vector<double> a(40, 0.5);
  PlissResult res = pliss_times(a, cfg);
  CHECK(res.ell == 40);
  CHECK(res.N == 40);
  for (int k = 1; k <= 40; ++k) CHECK(res.indices[k - 1] == k);
}

TEST_CASE("hand-enumerated example and the empty sequence") {
  std::vector<double> a{1.0, -1.0, 1.0};
  CHECK(pliss_oracle(a, 0.0) == std::vector<int>{1, 3});
  PlissConfig cfg{1.0, 0.0, 0.5};
  CHECK(pliss_times(a, cfg).indices == std::vector<int>{1, 3});
  CHECK(pliss_oracle({}, 0.0).empty());
  CHECK(pliss_times({}, cfg).ell == 0);
}

TEST_CASE("count bound holds on sequences meeting the mean hypothesis") {
  // N=100, A=1, c1=1/4, c2=1/2: density bound is N/3, so at least 34 marks.
  PlissConfig cfg{1.0, 0.25, 0.5};
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> a(100);
    double sum = 0.0;
    for (double& v : a) {
      v = u01(rng);
      sum += v;
    }
    if (sum < 50.0) {
      sum = 0.0;
      for (double& v : a) {
        v = 1.0 - v;
        sum += v;
      }
    }
    REQUIRE(sum >= 50.0);
    PlissResult res = pliss_times(a, cfg);
    CHECK(res.ell >= 34);
    CHECK(res.ell > res.density_bound);
  }
}

TEST_CASE("scan matches the quadratic oracle on fuzzed sequences") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> uval(-2.0, 2.0);
  std::uniform_real_distribution<double> upos(0.0, 2.0);
  std::uniform_real_distribution<double> uc(-0.5, 0.5);
  std::uniform_int_distribution<int> ulen(0, 120);
  for (int trial = 0; trial < 300; ++trial) {
    const int n = ulen(rng);
    const bool biased = trial % 2 == 0;
    std::vector<double> a(static_cast<size_t>(n));
    double sum = 0.0;
    for (double& v : a) {
      v = biased ? upos(rng) : uval(rng);
      sum += v;
    }
    PlissConfig cfg;
    cfg.c1 = uc(rng);
    cfg.c2 = cfg.c1 + 0.1;
    cfg.A = 2.0;
    PlissResult res = pliss_times(a, cfg);
    CHECK(res.indices == pliss_oracle(a, cfg.c1));
    if (n > 0 && sum >= cfg.c2 * n) {
      CHECK(res.ell > res.density_bound);
    }
    // Re-verify the defining inequality for every returned index.
    for (int k : res.indices) {
      for (int m = 0; m < k; ++m) {
        double window = 0.0;
        for (int j = m; j < k; ++j) window += a[static_cast<size_t>(j)];
        CHECK(window >= cfg.c1 * (k - m) - 1e-9);
      }
    }
  }
}

TEST_CASE("terms above the bound are a named precondition failure") {
  PlissConfig cfg{1.0, 0.0, 0.5};
  std::vector<double> a{0.2, 0.3, 1.5, 0.1};
  try {
    pliss_times(a, cfg);
    FAIL("expected PreconditionError");
  } catch (const PreconditionError& e) {
    CHECK(std::string(e.what()).find("a[3]") != std::string::npos);
  }
}

TEST_CASE("flow variant marks everything below the critical slope") {
  const double dt = 0.01;
  const int m = 500;
  std::vector<double> h(static_cast<size_t>(m) + 1);
  for (int i = 0; i <= m; ++i) h[static_cast<size_t>(i)] = 0.5 * i * dt;
  FlowPliss res = flow_pliss(h, dt, 1.0, 0.5, -1.0);
  for (char f : res.mask) CHECK(f == 1);
  CHECK(res.measure == doctest::Approx(m * dt).epsilon(1e-12));
  CHECK(res.theta == doctest::Approx(0.5 / 2.5).epsilon(1e-12));
}

TEST_CASE("flow variant agrees with the double-loop oracle") {
  const double dt = 0.01;
  const double c = 1.0, eps = 0.5, bound = -1.0;

  // Steep start then flat, with both slopes strictly away from c + eps (a
  // slope exactly at the critical value ties the strict inequality and the
  // tie-break depends on rounding order). Everything before the crossover
  // still sees steep growth ahead and is unmarked; the flat tail is marked.
  std::vector<double> h(1001);
  for (size_t i = 0; i < h.size(); ++i) {
    const double t = static_cast<double>(i) * dt;
    h[i] = std::min(2.0 * t, 6.0);
  }
  FlowPliss res = flow_pliss(h, dt, c, eps, bound);
  CHECK(res.mask == flow_mask_oracle(h, dt, c, eps));
  for (size_t i = 0; i < h.size(); ++i) {
    CHECK(static_cast<int>(res.mask[i]) == (i >= 300 ? 1 : 0));
  }

  // Fuzzed piecewise-random slopes in (A, 1.8).
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> uslope(-0.95, 1.6);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<double> g(801, 0.0);
    for (size_t i = 1; i < g.size(); ++i) g[i] = g[i - 1] + uslope(rng) * dt;
    if (!(g.back() < c * 8.0)) continue;
    FlowPliss r = flow_pliss(g, dt, c, eps, bound);
    CHECK(r.mask == flow_mask_oracle(g, dt, c, eps));
    CHECK(r.measure >= r.theta * 8.0 - dt);
  }
}

TEST_CASE("flow variant meets the guaranteed measure") {
  // A=-1, c=1, eps=0.5 over T=100: theta T = 20.
  const double dt = 0.01;
  const int m = 10000;
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> uslope(-0.95, 1.6);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<double> h(static_cast<size_t>(m) + 1, 0.0);
    for (int i = 1; i <= m; ++i) {
      h[static_cast<size_t>(i)] =
          h[static_cast<size_t>(i) - 1] + uslope(rng) * dt;
    }
    REQUIRE(h.back() < 100.0);
    FlowPliss res = flow_pliss(h, dt, 1.0, 0.5, -1.0);
    CHECK(res.theta * 100.0 == doctest::Approx(20.0));
    CHECK(res.measure >= 20.0 - dt);
  }
}

TEST_CASE("marked times shift by one cell under a widened tolerance") {
  // Slopes just above A with c + eps - A <= the tolerance increment, the
  // regime where the shift property is provable.
  const double dt = 0.01;
  const double c = 1.0, eps = 0.05, bound = 0.96;
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> uslope(0.961, 1.03);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<double> h(5001, 0.0);
    for (size_t i = 1; i < h.size(); ++i) h[i] = h[i - 1] + uslope(rng) * dt;
    if (!(h.back() < c * 50.0)) continue;
    FlowPliss narrow = flow_pliss(h, dt, c, eps, bound);
    FlowPliss wide = flow_pliss(h, dt, c, eps + 0.1, bound);
    for (size_t i = 0; i + 1 < h.size(); ++i) {
      if (narrow.mask[i]) CHECK(wide.mask[i + 1] == 1);
    }
  }
}

TEST_CASE("flow variant names its precondition failures") {
  const double dt = 0.01;
  std::vector<double> h{0.1, 0.2, 0.3};
  CHECK_THROWS_AS(flow_pliss(h, dt, 1.0, 0.5, -1.0), PreconditionError);
  std::vector<double> steep{0.0, 0.02, 0.04};
  CHECK_THROWS_AS(flow_pliss(steep, dt, 1.0, 0.5, -1.0), PreconditionError);
  std::vector<double> drop{0.0, -0.5, -1.0};
  CHECK_THROWS_AS(flow_pliss(drop, dt, 1.0, 0.5, -1.0), PreconditionError);
  CHECK_THROWS_AS(flow_pliss({0.0}, dt, 1.0, 0.5, -1.0), PreconditionError);
  CHECK_THROWS_AS(flow_pliss({0.0, 0.001, 0.002}, 0.0, 1.0, 0.5, -1.0),
                  PreconditionError);
  CHECK_THROWS_AS(flow_pliss({0.0, 0.001, 0.002}, dt, 1.0, -0.5, -1.0),
                  PreconditionError);
}

TEST_CASE("hyperbolic time config enforces the tolerance window") {
  HyperbolicTimeConfig cfg;
  cfg.c0 = 0.1;
  cfg.eps0 = 0.1 / 32.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.eps0 = 0.1 / 33.0;
  cfg.lip_bound = 1.0;
  CHECK_NOTHROW(cfg.validate());
  cfg.c0 = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.c0 = 0.1;
  cfg.delta0 = 0.5;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("hyperbolic times degrade gracefully without expansion") {
  SystemSpec sys = make_system("constant");
  IntegratorConfig icfg;
  CocycleTrace tr = cocycle_trace(sys, Vec::Zero(3), 5, 0.01, icfg);
  HyperbolicTimeConfig cfg;
  cfg.c0 = 0.1;
  cfg.eps0 = 0.1 / 40.0;
  cfg.lip_bound = 1.0;
  HyperbolicTimes res = hyperbolic_times(tr, cfg);
  CHECK(res.indices.empty());
  CHECK(res.reason == "NUE sum hypothesis unmet");
}

TEST_CASE("uniformly expanding synthetic trace marks every time") {
  const double c0 = 0.2;
  CocycleTrace tr = synthetic_trace(30, -c0, 1.0);
  HyperbolicTimeConfig cfg;
  cfg.c0 = c0;
  cfg.eps0 = c0 / 40.0;
  cfg.lip_bound = 2.0;
  HyperbolicTimes res = hyperbolic_times(tr, cfg);
  REQUIRE(res.indices.size() == 30);
  for (int k = 1; k <= 30; ++k) CHECK(res.indices[static_cast<size_t>(k - 1)] == k);
  CHECK(res.density == doctest::Approx(1.0));
  for (const auto& rep : res.reports) {
    CHECK(rep.hyp_margin == doctest::Approx(0.75 * c0).epsilon(1e-9));
    CHECK(rep.sr_margin > 0.0);
  }
}

TEST_CASE("a close encounter disqualifies all later times in range") {
  // One deep dip in the truncated distance blocks every index whose
  // recurrence window reaches back to it.
  CocycleTrace tr = synthetic_trace(30, -1.0, 1.0);
  tr.dist_trunc[4] = std::exp(-20.0);
  HyperbolicTimeConfig cfg;
  cfg.c0 = 1.0;
  cfg.eps0 = 1.0 / 40.0;
  cfg.lip_bound = 0.0;
  HyperbolicTimes res = hyperbolic_times(tr, cfg);
  CHECK(res.indices == std::vector<int>{1, 2, 3, 4});
  for (const auto& rep : res.reports) CHECK(rep.sr_margin > 0.0);

  // A generous Lipschitz constant absorbs the dip entirely.
  cfg.lip_bound = 30.0;
  HyperbolicTimes all = hyperbolic_times(tr, cfg);
  CHECK(all.indices.size() == 30);
}

TEST_CASE("lead-time cutoff drops early indices") {
  CocycleTrace tr = synthetic_trace(20, -0.5, 1.0);
  HyperbolicTimeConfig cfg;
  cfg.c0 = 0.5;
  cfg.eps0 = 0.5 / 40.0;
  cfg.lip_bound = 1.0;
  cfg.kappa_min = 8;
  HyperbolicTimes res = hyperbolic_times(tr, cfg);
  REQUIRE(!res.indices.empty());
  CHECK(res.indices.front() == 8);
  CHECK(res.indices.back() == 20);
}

TEST_CASE("hyperbolic times on a lorenz trace verify independently") {
  SystemSpec sys = make_system("lorenz");
  IntegratorConfig icfg;
  Vec x0(3);
  x0 << 1.0, 1.0, 1.0;
  Vec x = advance(sys, x0, 30.0, icfg);
  CocycleTrace tr = cocycle_trace(sys, x, 300, 0.01, icfg);

  HyperbolicTimeConfig cfg;
  cfg.c0 = 0.1;
  cfg.delta0 = 0.01;
  cfg.eps0 = 0.1 / 40.0;
  cfg.lip_bound = sys.lip_bound;
  HyperbolicTimes res = hyperbolic_times(tr, cfg);
  REQUIRE(!res.indices.empty());
  CHECK(res.density > 0.3);
  CHECK(res.reason.empty());

  // No false positives: re-check both inequalities from the raw trace.
  for (size_t r = 0; r < res.indices.size(); ++r) {
    const int k = res.indices[r];
    for (int m = 0; m < k; ++m) {
      double window = 0.0;
      for (int j = m; j < k; ++j) window -= tr.a[static_cast<size_t>(j)];
      CHECK(window >= cfg.c0 / 4.0 * (k - m) - 1e-9);
    }
    for (int j = 0; j < k; ++j) {
      CHECK(tr.dist_trunc[static_cast<size_t>(j)] >
            std::exp(-cfg.c0 * (k - j) / 16.0 - cfg.lip_bound) - 1e-12);
    }
    CHECK(res.reports[r].hyp_margin >= -1e-12);
    CHECK(res.reports[r].sr_margin > 0.0);
  }

  HyperbolicTimes again = hyperbolic_times(tr, cfg);
  CHECK(again.indices == res.indices);
}
