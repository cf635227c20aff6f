#include "flowlab/criteria.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "parallel.hpp"

namespace flowlab {

namespace {

Verdict verdict_below(double stat, double threshold) {
  const double band = 0.1 * std::abs(threshold);
  if (std::abs(stat - threshold) <= band) return Verdict::kInconclusive;
  return stat < threshold ? Verdict::kPass : Verdict::kFail;
}

Verdict verdict_at_least(double stat, double threshold) {
  const double band = 0.1 * std::abs(threshold);
  if (std::abs(stat - threshold) <= band) return Verdict::kInconclusive;
  return stat >= threshold ? Verdict::kPass : Verdict::kFail;
}

using OrbitFn = std::function<OrbitOutcome(int, const Vec&)>;

// Samples the ensemble, evaluates orbits (possibly in parallel) into
// per-index slots, and aggregates in index order. Orbit-level flow errors
// exclude the orbit; anything else is a bug and propagates.
CriterionReport run_ensemble(const SystemSpec& sys, const EnsembleSpec& ens,
                             int threads, const OrbitFn& fn) {
  const std::vector<Vec> xs = sample_ensemble(sys, ens);
  CriterionReport rep;
  rep.system = ens.system;
  rep.seed = ens.seed;
  rep.orbits.resize(xs.size());
  detail::parallel_for(static_cast<int>(xs.size()), threads, [&](int i) {
    OrbitOutcome out;
    try {
      out = fn(i, xs[static_cast<size_t>(i)]);
    } catch (const FlowError& e) {
      out = OrbitOutcome{};
      out.error = e.what();
    }
    out.index = i;
    rep.orbits[static_cast<size_t>(i)] = std::move(out);
  });
  int passes = 0;
  int evaluated = 0;
  for (const OrbitOutcome& o : rep.orbits) {
    if (!o.error.empty()) {
      ++rep.excluded;
      continue;
    }
    ++evaluated;
    if (o.verdict == Verdict::kPass) ++passes;
  }
  rep.pass_fraction =
      evaluated > 0 ? static_cast<double>(passes) / evaluated : 0.0;
  return rep;
}

double nearest_equilibrium(const SystemSpec& sys, const Vec& p) {
  double d = std::numeric_limits<double>::infinity();
  for (const Vec& s : sys.equilibria) d = std::min(d, (p - s).norm());
  return d;
}

}  // namespace

const char* to_string(Verdict v) {
  switch (v) {
    case Verdict::kPass:
      return "PASS";
    case Verdict::kFail:
      return "FAIL";
    default:
      return "INCONCLUSIVE";
  }
}

void EnsembleSpec::validate() const {
  if (system.empty()) throw ConfigError("ensemble: system name is empty");
  if (count < 1) throw ConfigError("ensemble: count must be >= 1");
  if (!(burn_in >= 0.0) || !std::isfinite(burn_in)) {
    throw ConfigError("ensemble: burn_in must be >= 0");
  }
}

std::vector<Vec> sample_ensemble(const SystemSpec& sys,
                                 const EnsembleSpec& ens) {
  ens.validate();
  std::mt19937_64 rng(ens.seed);
  std::vector<Vec> out;
  out.reserve(static_cast<size_t>(ens.count));
  Vec p(sys.dim);
  for (int c = 0; c < ens.count; ++c) {
    bool accepted = false;
    for (int attempt = 0; attempt < 100000 && !accepted; ++attempt) {
      for (int k = 0; k < sys.dim; ++k) {
        std::uniform_real_distribution<double> u(sys.box.lo[k], sys.box.hi[k]);
        p[k] = u(rng);
      }
      if (!sys.trap || sys.trap(p)) {
        out.push_back(p);
        accepted = true;
      }
    }
    if (!accepted) {
      throw ConfigError(
          "sample_ensemble: trap predicate rejected 100000 consecutive draws");
    }
  }
  return out;
}

CriterionReport nue_T_test(const EnsembleSpec& ens, double c0, double T,
                           int n, const IntegratorConfig& cfg, int threads) {
  if (!(T > 0.0)) throw PreconditionError("nue_T_test: T must be > 0");
  if (n < 100) throw PreconditionError("nue_T_test: n must be >= 100");
  if (!(c0 >= 0.0)) throw PreconditionError("nue_T_test: c0 must be >= 0");
  const SystemSpec sys = make_system(ens.system);

  CriterionReport rep =
      run_ensemble(sys, ens, threads, [&](int i, const Vec& x0) {
        OrbitOutcome out;
        const Vec x =
            ens.burn_in > 0.0 ? advance(sys, x0, ens.burn_in, cfg) : x0;
        TraceOptions opts;
        opts.seed = detail::derive_seed(ens.seed, static_cast<uint64_t>(i));
        opts.step_time = T;
        const CocycleTrace tr = cocycle_trace(sys, x, n, 0.01, cfg, opts);
        out.curve.resize(static_cast<size_t>(n));
        double sum = 0.0;
        for (int k = 0; k < n; ++k) {
          sum += tr.a[static_cast<size_t>(k)] / T;
          out.curve[static_cast<size_t>(k)] = sum / (k + 1);
        }
        const int half = n / 2;
        double tail = 0.0;
        for (int k = half; k < n; ++k) tail += tr.a[static_cast<size_t>(k)] / T;
        out.statistic = tail / (n - half);
        out.verdict = verdict_below(out.statistic, -c0);
        return out;
      });
  rep.criterion = "nueT";
  rep.curve_dt = T;
  rep.thresholds["c0"] = c0;
  rep.thresholds["T"] = T;
  rep.thresholds["n"] = n;
  return rep;
}

CriterionReport nue_test(const EnsembleSpec& ens, double c0, int n,
                         const IntegratorConfig& cfg, int threads) {
  CriterionReport rep = nue_T_test(ens, c0, 1.0, n, cfg, threads);
  rep.criterion = "nue";
  rep.thresholds.erase("T");
  return rep;
}

namespace {

// Trapezoid integrals of -log d_delta along one orbit, one value per delta,
// with running curves sampled at chunk boundaries for the first delta.
struct SrOrbit {
  std::vector<double> tail_mean;  // per delta
  std::vector<double> curve;      // running average, first delta
};

SrOrbit sr_integrate(const SystemSpec& sys, const Vec& x0, double burn_in,
                     const std::vector<double>& deltas, double horizon,
                     int nchunks, const IntegratorConfig& cfg) {
  const double chunk = horizon / nchunks;
  Vec y = burn_in > 0.0 ? advance(sys, x0, burn_in, cfg) : x0;
  const size_t nd = deltas.size();
  std::vector<double> integral(nd, 0.0);
  std::vector<double> at_half(nd, 0.0);
  SrOrbit out;
  out.curve.reserve(static_cast<size_t>(nchunks));

  std::vector<double> prev(nd), cur(nd);
  for (int c = 0; c < nchunks; ++c) {
    const OrbitGrid grid = orbit_grid(sys, y, chunk, cfg);
    for (size_t i = 0; i + 1 < grid.points.size(); ++i) {
      const Vec& a = grid.points[i];
      const Vec& b = grid.points[i + 1];
      if (nearest_equilibrium(sys, a) < 1e-12 ||
          nearest_equilibrium(sys, b) < 1e-12) {
        throw SingularityError(
            "sr: orbit hit an equilibrium to within 1e-12",
            burn_in + c * chunk + static_cast<double>(i) * cfg.step);
      }
      for (size_t d = 0; d < nd; ++d) {
        if (i == 0) prev[d] = -std::log(truncated_distance(a, sys.equilibria,
                                                           deltas[d]));
        cur[d] = -std::log(truncated_distance(b, sys.equilibria, deltas[d]));
        integral[d] += 0.5 * (prev[d] + cur[d]) * grid.dts[i];
        prev[d] = cur[d];
      }
    }
    y = grid.points.back();
    if (c + 1 == nchunks / 2) at_half = integral;
    out.curve.push_back(integral[0] / ((c + 1) * chunk));
  }
  out.tail_mean.resize(nd);
  for (size_t d = 0; d < nd; ++d) {
    out.tail_mean[d] = (integral[d] - at_half[d]) / (horizon / 2.0);
  }
  return out;
}

int sr_chunks(double horizon) {
  return 2 * std::max(1, static_cast<int>(std::ceil(horizon / 2.0)));
}

}  // namespace

CriterionReport sr_test(const EnsembleSpec& ens, double delta, double eps,
                        double T_horizon, const IntegratorConfig& cfg,
                        int threads) {
  if (!(delta > 0.0) || !(delta < 0.5)) {
    throw PreconditionError("sr_test: delta must lie in (0, 1/2)");
  }
  if (!(eps > 0.0)) throw PreconditionError("sr_test: eps must be > 0");
  if (!(T_horizon > 0.0)) throw PreconditionError("sr_test: horizon must be > 0");
  const SystemSpec sys = make_system(ens.system);
  const bool vacuous = sys.equilibria.empty();
  const int nchunks = sr_chunks(T_horizon);

  CriterionReport rep =
      run_ensemble(sys, ens, threads, [&](int i, const Vec& x0) {
        (void)i;
        OrbitOutcome out;
        if (vacuous) {
          // d_delta saturates at 1 without equilibria, integrand is zero.
          out.statistic = 0.0;
          out.verdict = Verdict::kPass;
          return out;
        }
        const SrOrbit so = sr_integrate(sys, x0, ens.burn_in, {delta},
                                        T_horizon, nchunks, cfg);
        out.curve = so.curve;
        out.statistic = so.tail_mean[0];
        out.verdict = verdict_below(out.statistic, eps);
        return out;
      });
  rep.criterion = "sr";
  rep.curve_dt = T_horizon / nchunks;
  rep.thresholds["delta"] = delta;
  rep.thresholds["eps"] = eps;
  rep.thresholds["T"] = T_horizon;
  rep.thresholds["equilibria"] = static_cast<double>(sys.equilibria.size());
  return rep;
}

SrSweep sr_sweep(const EnsembleSpec& ens, const std::vector<double>& deltas,
                 const std::vector<double>& epss, double T_horizon,
                 const IntegratorConfig& cfg, int threads) {
  for (double d : deltas) {
    if (!(d > 0.0) || !(d < 0.5)) {
      throw PreconditionError("sr_sweep: every delta must lie in (0, 1/2)");
    }
  }
  if (deltas.empty() || epss.empty()) {
    throw PreconditionError("sr_sweep: delta and eps lists must be nonempty");
  }
  const SystemSpec sys = make_system(ens.system);
  const int nchunks = sr_chunks(T_horizon);
  const bool vacuous = sys.equilibria.empty();

  const std::vector<Vec> xs = sample_ensemble(sys, ens);
  std::vector<std::vector<double>> tails(xs.size());
  std::vector<std::string> errors(xs.size());
  detail::parallel_for(static_cast<int>(xs.size()), threads, [&](int i) {
    if (vacuous) {
      tails[static_cast<size_t>(i)].assign(deltas.size(), 0.0);
      return;
    }
    try {
      tails[static_cast<size_t>(i)] =
          sr_integrate(sys, xs[static_cast<size_t>(i)], ens.burn_in, deltas,
                       T_horizon, nchunks, cfg)
              .tail_mean;
    } catch (const FlowError& e) {
      errors[static_cast<size_t>(i)] = e.what();
    }
  });

  SrSweep sweep;
  sweep.deltas = deltas;
  sweep.epss = epss;
  sweep.pass_fraction.assign(deltas.size(),
                             std::vector<double>(epss.size(), 0.0));
  int evaluated = 0;
  for (size_t i = 0; i < xs.size(); ++i) {
    if (!errors[i].empty()) {
      ++sweep.excluded;
      continue;
    }
    ++evaluated;
    for (size_t d = 0; d < deltas.size(); ++d) {
      for (size_t e = 0; e < epss.size(); ++e) {
        if (tails[i][d] < epss[e]) sweep.pass_fraction[d][e] += 1.0;
      }
    }
  }
  if (evaluated > 0) {
    for (auto& row : sweep.pass_fraction) {
      for (double& v : row) v /= evaluated;
    }
  }
  return sweep;
}

CriterionReport ase_test(const EnsembleSpec& ens, double c_star,
                         double T_horizon, int plane_samples,
                         const IntegratorConfig& cfg, int threads) {
  if (!(T_horizon > 0.0)) {
    throw PreconditionError("ase_test: horizon must be > 0");
  }
  const SystemSpec sys = make_system(ens.system);
  if (sys.dcu < 2) throw PreconditionError("ase_test: needs dcu >= 2");
  const int planes = sys.dcu == 2 ? 1 : std::max(1, plane_samples);
  const int nchunks = std::max(1, static_cast<int>(std::ceil(T_horizon)));
  const double chunk = T_horizon / nchunks;

  CriterionReport rep =
      run_ensemble(sys, ens, threads, [&](int i, const Vec& x0) {
        OrbitOutcome out;
        const Vec xb =
            ens.burn_in > 0.0 ? advance(sys, x0, ens.burn_in, cfg) : x0;
        const std::uint64_t oseed =
            detail::derive_seed(ens.seed, static_cast<uint64_t>(i));
        const SplittingEstimate est =
            estimate_splitting(sys, xb, 20.0, 20.0, cfg, oseed);

        std::mt19937_64 rng(detail::derive_seed(oseed, 0xA5E));
        std::normal_distribution<double> n01(0.0, 1.0);
        std::vector<Mat> frames;
        if (sys.dcu == 2) {
          frames.push_back(est.ecu);
        } else {
          for (int p = 0; p < planes; ++p) {
            Mat b(sys.dcu, 2);
            for (int c = 0; c < 2; ++c) {
              for (int r = 0; r < sys.dcu; ++r) b(r, c) = n01(rng);
            }
            Mat q(sys.dcu, 2), rr(2, 2);
            qr_positive(b, q, rr);
            frames.push_back(est.ecu * q);
          }
        }

        out.curve.assign(static_cast<size_t>(nchunks),
                         std::numeric_limits<double>::infinity());
        double worst = std::numeric_limits<double>::infinity();
        for (const Mat& plane : frames) {
          Vec y = est.base;
          Mat f = plane;
          double cum = 0.0;
          for (int c = 0; c < nchunks; ++c) {
            TangentResult tr = tangent_advance(sys, y, f, chunk, cfg);
            cum += tr.logdet;
            y = std::move(tr.point);
            f = std::move(tr.frame);
            const double rate = cum / ((c + 1) * chunk);
            out.curve[static_cast<size_t>(c)] =
                std::min(out.curve[static_cast<size_t>(c)], rate);
          }
          worst = std::min(worst, cum / T_horizon);
        }
        out.statistic = worst;
        out.verdict = verdict_at_least(out.statistic, c_star);
        return out;
      });
  rep.criterion = "ase";
  rep.curve_dt = chunk;
  rep.thresholds["c_star"] = c_star;
  rep.thresholds["T"] = T_horizon;
  rep.thresholds["planes"] = planes;
  return rep;
}

double det_identity_check(const CocycleTrace& trace) {
  if (trace.dcu != 2) {
    throw PreconditionError(
        "det_identity_check: identity reduces to a scalar only for dcu = 2");
  }
  const int n = trace.n;
  if (n < 1 || trace.logdet_cu.size() != static_cast<size_t>(n) ||
      trace.logp.size() != static_cast<size_t>(n) ||
      trace.logg.size() != static_cast<size_t>(n)) {
    throw PreconditionError("det_identity_check: incomplete trace");
  }
  double mean_det = 0.0;
  double mean_p = 0.0;
  for (int i = 0; i < n; ++i) {
    mean_det += trace.logdet_cu[static_cast<size_t>(i)];
    mean_p += trace.logp[static_cast<size_t>(i)];
  }
  mean_det /= n;
  mean_p /= n;
  const double lhs = mean_det + (trace.logg.front() - trace.logg_end) / n;
  return std::abs(lhs - mean_p);
}

double multiplicativity_check(const SystemSpec& sys, const Vec& x, double s,
                              double t, const IntegratorConfig& cfg,
                              double warm, std::uint64_t seed) {
  if (!(s > 0.0) || !(t > 0.0)) {
    throw PreconditionError("multiplicativity_check: s and t must be > 0");
  }
  const SplittingEstimate at_z =
      estimate_splitting(sys, x, warm, warm, cfg, seed);
  const SplittingEstimate at_w = estimate_splitting(
      sys, x, warm + t, warm, cfg, detail::derive_seed(seed, 1));

  const double d_full =
      tangent_advance(sys, at_z.base, at_z.ecu, t + s, cfg).logdet;
  const double d_first =
      tangent_advance(sys, at_z.base, at_z.ecu, t, cfg).logdet;
  const double d_second =
      tangent_advance(sys, at_w.base, at_w.ecu, s, cfg).logdet;
  return std::abs(d_full - d_first - d_second);
}

}  // namespace flowlab
