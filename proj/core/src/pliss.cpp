#include "flowlab/pliss.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace flowlab {

void PlissConfig::validate() const {
  if (!std::isfinite(A) || !std::isfinite(c1) || !std::isfinite(c2)) {
    throw ConfigError("pliss config: rates must be finite");
  }
  if (!(c2 > c1)) throw ConfigError("pliss config: requires c2 > c1");
  if (!(A >= c2)) throw ConfigError("pliss config: requires A >= c2");
}

double PlissConfig::zeta() const {
  validate();
  return (c2 - c1) / (A - c1);
}

PlissResult pliss_times(const std::vector<double>& a, const PlissConfig& cfg) {
  cfg.validate();
  const int n = static_cast<int>(a.size());
  for (int j = 0; j < n; ++j) {
    if (!(a[j] <= cfg.A)) {
      std::ostringstream os;
      os << "pliss_times: a[" << (j + 1) << "] = " << a[j]
         << " exceeds the bound A = " << cfg.A;
      throw PreconditionError(os.str());
    }
  }

  PlissResult res;
  res.N = n;
  res.density_bound = cfg.zeta() * n;

  // k qualifies iff S_k - c1*k >= S_m - c1*m for every earlier m, with the
  // empty prefix contributing 0.
  double s = 0.0;
  double runmax = 0.0;
  for (int k = 1; k <= n; ++k) {
    s += a[k - 1];
    const double t = s - cfg.c1 * k;
    if (t >= runmax) res.indices.push_back(k);
    runmax = std::max(runmax, t);
  }
  res.ell = static_cast<int>(res.indices.size());
  return res;
}

std::vector<int> pliss_oracle(const std::vector<double>& a, double c1) {
  const int n = static_cast<int>(a.size());
  std::vector<int> out;
  for (int k = 1; k <= n; ++k) {
    bool ok = true;
    for (int m = 0; m < k && ok; ++m) {
      double window = 0.0;
      for (int j = m + 1; j <= k; ++j) window += a[j - 1];
      if (!(window >= c1 * (k - m))) ok = false;
    }
    if (ok) out.push_back(k);
  }
  return out;
}

FlowPliss flow_pliss(const std::vector<double>& h, double dt, double c,
                     double eps, double A) {
  if (h.size() < 2) {
    throw PreconditionError("flow_pliss: need at least two grid values");
  }
  if (!(dt > 0.0) || !std::isfinite(dt)) {
    throw PreconditionError("flow_pliss: grid spacing must be positive");
  }
  if (!(eps > 0.0)) throw PreconditionError("flow_pliss: eps must be > 0");
  for (double v : h) {
    if (!std::isfinite(v)) {
      throw PreconditionError("flow_pliss: grid values must be finite");
    }
  }
  if (h.front() != 0.0) throw PreconditionError("flow_pliss: H(0) must be 0");

  const size_t m = h.size() - 1;
  const double total = static_cast<double>(m) * dt;
  if (!(h.back() < c * total)) {
    throw PreconditionError("flow_pliss: requires H(T) < c*T");
  }
  double min_slope = std::numeric_limits<double>::infinity();
  for (size_t i = 0; i < m; ++i) {
    min_slope = std::min(min_slope, (h[i + 1] - h[i]) / dt);
  }
  if (!(min_slope > A)) {
    throw PreconditionError("flow_pliss: a discrete slope falls to A or below");
  }
  if (!(c + eps > min_slope)) {
    throw PreconditionError("flow_pliss: c + eps must exceed the least slope");
  }

  FlowPliss res;
  res.theta = eps / (c + eps - A);
  res.mask.assign(h.size(), 0);

  // tau qualifies iff K(tau) strictly dominates every later K, with
  // K(t) = H(t) - (c + eps) t; scan backward with a running max.
  res.mask[m] = 1;
  double runmax = h[m] - (c + eps) * (static_cast<double>(m) * dt);
  for (size_t i = m; i-- > 0;) {
    const double k = h[i] - (c + eps) * (static_cast<double>(i) * dt);
    if (k > runmax) {
      res.mask[i] = 1;
      res.measure += dt;
    }
    runmax = std::max(runmax, k);
  }
  return res;
}

void HyperbolicTimeConfig::validate() const {
  if (!(c0 > 0.0) || !std::isfinite(c0)) {
    throw ConfigError("hyperbolic times: c0 must be positive");
  }
  if (!(delta0 > 0.0) || !(delta0 < 0.5)) {
    throw ConfigError("hyperbolic times: delta0 must lie in (0, 1/2)");
  }
  if (!(eps0 > 0.0) || !(eps0 < c0 / 32.0)) {
    throw ConfigError("hyperbolic times: eps0 must lie in (0, c0/32)");
  }
  if (!(lip_bound >= 0.0) || !std::isfinite(lip_bound)) {
    throw ConfigError("hyperbolic times: lip_bound must be >= 0");
  }
  if (kappa_min < 0) {
    throw ConfigError("hyperbolic times: kappa_min must be >= 0");
  }
}

HyperbolicTimes hyperbolic_times(const CocycleTrace& trace,
                                 const HyperbolicTimeConfig& cfg) {
  cfg.validate();
  const int n = trace.n;
  HyperbolicTimes res;
  res.N = n;
  res.c0 = cfg.c0;
  if (n < 1) {
    res.reason = "empty trace";
    return res;
  }

  std::vector<double> b(trace.a.size());
  double bsum = 0.0;
  double bmax = -std::numeric_limits<double>::infinity();
  for (size_t i = 0; i < trace.a.size(); ++i) {
    b[i] = -trace.a[i];
    bsum += b[i];
    bmax = std::max(bmax, b[i]);
  }
  if (!(bsum >= cfg.c0 * n / 2.0)) {
    res.reason = "NUE sum hypothesis unmet";
    return res;
  }

  // The term bound only affects the density guarantee, never which indices
  // qualify, so widen it when a step exceeded the declared Lipschitz bound.
  PlissConfig pc;
  pc.c1 = cfg.c0 / 4.0;
  pc.c2 = cfg.c0 / 2.0;
  pc.A = std::max(cfg.lip_bound, bmax);
  PlissResult pliss = pliss_times(b, pc);

  // Expansion margin: T_k - max earlier T, with T_k = sum(b) - c0/4 * k.
  std::vector<double> tvals(static_cast<size_t>(n) + 1, 0.0);
  std::vector<double> runmax(static_cast<size_t>(n) + 1, 0.0);
  double s = 0.0;
  for (int k = 1; k <= n; ++k) {
    s += b[k - 1];
    tvals[k] = s - pc.c1 * k;
    runmax[k] = std::max(runmax[k - 1], tvals[k]);
  }

  // Recurrence margin via prefix minima of u_j = log d_j - c0 j / 16:
  // dist_trunc[j] > exp(-c0 (k - j)/16 - L) for all j < k is equivalent to
  // min_{j<k} u_j + c0 k / 16 + L > 0.
  std::vector<double> umin(static_cast<size_t>(n), 0.0);
  for (int j = 0; j < n; ++j) {
    const double u = std::log(trace.dist_trunc[j]) - cfg.c0 * j / 16.0;
    umin[j] = j == 0 ? u : std::min(umin[j - 1], u);
  }

  for (int k : pliss.indices) {
    if (k < cfg.kappa_min) continue;
    const double sr = umin[k - 1] + cfg.c0 * k / 16.0 + cfg.lip_bound;
    if (!(sr > 0.0)) continue;
    HyperbolicIndexReport rep;
    rep.index = k;
    rep.hyp_margin = tvals[k] - runmax[k - 1];
    rep.sr_margin = sr;
    res.indices.push_back(k);
    res.reports.push_back(rep);
  }
  res.density = static_cast<double>(res.indices.size()) / n;
  return res;
}

}  // namespace flowlab
