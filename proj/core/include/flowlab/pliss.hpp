#pragma once

#include <string>
#include <vector>

#include "flowlab/lpf.hpp"
#include "flowlab/types.hpp"

namespace flowlab {

// Pliss-time machinery: given per-step expansion logs, find the times from
// which every lookback window already shows expansion at a guaranteed rate.

struct PlissConfig {
  double A = 1.0;  // upper bound on the terms
  double c1 = 0.0;
  double c2 = 0.0;
  // Requires A >= c2 > c1 and finite values.
  void validate() const;
  // Guaranteed density (c2 - c1) / (A - c1) of qualifying indices when the
  // sequence averages at least c2.
  double zeta() const;
};

struct PlissResult {
  std::vector<int> indices;  // 1-based, strictly increasing
  int ell = 0;               // indices.size()
  double density_bound = 0.0;  // zeta * N
  int N = 0;
};

/// All indices k in {1..N} with sum(a[n+1..k]) >= c1 * (k - n) for every
/// 0 <= n < k, via a single pass over the shifted partial sums S_k - c1*k.
/// When mean(a) >= c2 the count is guaranteed to exceed zeta * N.
PlissResult pliss_times(const std::vector<double>& a, const PlissConfig& cfg);

/// Quadratic-time reference: checks the defining inequality for every
/// (candidate, lookback) pair directly. Used to cross-validate pliss_times.
std::vector<int> pliss_oracle(const std::vector<double>& a, double c1);

// Continuous-time variant on a sampled function h over [0, T], grid spacing
// dt. A grid time tau is marked when h(s) - h(tau) < (c + eps)(s - tau) for
// every later grid time s. measure counts marked cells [t_i, t_i + dt);
// theta = eps / (c + eps - A) is the guaranteed fraction of T.
struct FlowPliss {
  std::vector<char> mask;  // one flag per grid point; the last is vacuous
  double measure = 0.0;
  double theta = 0.0;
};

/// Preconditions, each reported by name: h[0] == 0, h back below c*T, every
/// discrete slope above A, and c + eps above the smallest slope.
FlowPliss flow_pliss(const std::vector<double>& h, double dt, double c,
                     double eps, double A);

// Joint selection of hyperbolic times with recurrence control on a cocycle
// trace: an index qualifies when the lookback expansion test (Pliss on -a
// with rates c0/4 against c0/2) and the recurrence lower bound
// dist_trunc[j] > exp(-c0 (k - j)/16 - L) for all j < k both hold.

struct HyperbolicTimeConfig {
  double c0 = 0.1;        // asymptotic expansion rate to certify
  double delta0 = 0.01;   // truncation scale the trace must resolve
  double eps0 = 0.001;    // recurrence tolerance, must stay below c0/32
  double lip_bound = 1.0;  // L, bounds one-step log-derivative growth
  int kappa_min = 0;       // discard indices earlier than this lead time
  void validate() const;
};

struct HyperbolicIndexReport {
  int index = 0;          // 1-based trace position
  double hyp_margin = 0;  // worst slack of the expansion windows, >= 0
  double sr_margin = 0;   // worst log-scale slack of the recurrence bound
};

struct HyperbolicTimes {
  std::vector<int> indices;
  std::vector<HyperbolicIndexReport> reports;
  int N = 0;
  double c0 = 0.0;
  double density = 0.0;  // indices.size() / N
  std::string reason;    // set when the result is empty by hypothesis failure
};

/// Returns empty with a reason when sum(-a) < c0 * N / 2; otherwise every
/// returned index passed both inequalities, with the margins recorded.
HyperbolicTimes hyperbolic_times(const CocycleTrace& trace,
                                 const HyperbolicTimeConfig& cfg);

}  // namespace flowlab
