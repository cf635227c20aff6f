#pragma once

#include <cstdint>
#include <vector>

#include "flowlab/flow.hpp"
#include "flowlab/types.hpp"

namespace flowlab {

// The linear Poincare flow acts on the bundle of hyperplanes normal to the
// field: P^t_x v = O(Dphi_t(x) v), with O the orthogonal projection onto
// G(phi_t x)^perp. All of it is evaluated only at regular points, |G| > 1e-8.

constexpr double kRegularNorm = 1e-8;

/// Orthogonal projection of v onto the hyperplane normal to g.
Vec project_normal(const Vec& g, const Vec& v);

/// One application of the linear Poincare flow: transport v in N_x by the
/// variational flow over time t and project onto N_{phi_t x}. The orbit must
/// stay regular throughout.
Vec lpf_step(const SystemSpec& sys, const Vec& x, double t, const Vec& v,
             const IntegratorConfig& cfg);

/// Estimated invariant splitting at a point downstream from the seed x.
/// ecu comes from pushing a generic dcu-frame (anchored on the field
/// direction) forward for warm_fwd; es comes from pulling a generic ds-frame
/// back along the stored forward orbit of length warm_bwd, i.e. through the
/// inverse one-step propagators. Both legs converge at the domination rate,
/// so base = phi_{warm_fwd}(x) is where the estimate lives.
struct SplittingEstimate {
  Vec base;
  Mat es;          // dim x ds, orthonormal
  Mat ecu;         // dim x dcu, orthonormal
  double angle_gap;  // smallest principal angle between the bundles
  double residual;   // | (I - ecu ecu^T) G/|G| | at base; flow-in-center defect
};

SplittingEstimate estimate_splitting(const SystemSpec& sys, const Vec& x,
                                     double warm_fwd, double warm_bwd,
                                     const IntegratorConfig& cfg,
                                     std::uint64_t seed = 0xf1befeedULL);

/// Orthonormal basis of span(ecu) intersected with G(base)^perp. Columns are
/// exactly orthogonal to g by construction.
struct NormalSection {
  Vec base;
  Mat ncu;  // dim x (dcu - 1)
};
NormalSection normal_cu(const Mat& ecu, const Vec& g, const Vec& base);
NormalSection normal_cu(const SplittingEstimate& est, const Vec& g);

/// Per-step record of the LPF restricted to the center-unstable normal
/// section along an orbit: for i = 0..n-1, with y_i the i-th time-step_time
/// iterate of the base point,
///   a[i]          log |(P^step | N^cu_{y_i})^{-1}|
///   logp[i]       log |P^step | N^cu_{y_i}|
///   logg[i]       log |G(y_i)|
///   logdet_cu[i]  log |det(Dphi_step | E^cu_{y_i})|
///   dist_trunc[i] truncated distance of y_i to the equilibria at scale delta
/// The center-unstable frame is re-orthonormalized every step; the base is
/// the splitting estimate's base (downstream of the seed point by the
/// warm-up time) unless an initial frame was supplied.
struct CocycleTrace {
  std::string system;
  Vec base;
  double delta = 0.0;
  int n = 0;
  int dcu = 0;
  double step_time = 1.0;
  std::vector<double> a;
  std::vector<double> logp;
  std::vector<double> logg;
  std::vector<double> logdet_cu;
  std::vector<double> dist_trunc;
  std::vector<Vec> points;  // y_0 .. y_n
  double logg_end = 0.0;    // log |G| at y_n
  IntegratorConfig cfg;
};

struct TraceOptions {
  double warm_fwd = 20.0;
  double warm_bwd = 20.0;
  std::uint64_t seed = 0xf1befeedULL;
  double min_equilibrium_dist = 1e-8;
  double step_time = 1.0;
  // When non-empty, orthonormalized and used as the cu-frame at the seed
  // point itself; no warm-up transport or splitting estimation happens.
  Mat initial_ecu;
};

CocycleTrace cocycle_trace(const SystemSpec& sys, const Vec& x, int n,
                           double delta, const IntegratorConfig& cfg,
                           const TraceOptions& opts = {});

/// Push boundary vectors of the center-unstable cone of width a and measure
/// how far inside the image cone they land: ratio = |stable part| / a |cu
/// part| < 1 means the cone contracted.
struct ConeReport {
  double max_ratio = 0.0;
  std::vector<double> ratios;
  Vec base;
  Vec target;
};
ConeReport cone_invariance_check(const SystemSpec& sys, const Vec& x, double a,
                                 double t, int samples,
                                 const IntegratorConfig& cfg,
                                 std::uint64_t seed = 0xc04eULL);

}  // namespace flowlab
