#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "flowlab/criteria.hpp"
#include "flowlab/flow.hpp"
#include "flowlab/lpf.hpp"
#include "flowlab/pliss.hpp"
#include "flowlab/types.hpp"

namespace flowlab {

// Empirical measures on a fixed uniform grid: occupation histograms of
// orbits, particle pushforwards of disk mass at hyperbolic times, clustering
// of the resulting histograms, and basin assignment by observable averages.
// Histograms accumulate integer counts and normalize once at the end, so
// every builder is exactly invariant under particle or sample reordering.

struct GridSpec {
  Box box;
  int res = 64;  // cells per axis

  void validate() const;        // res >= 1 and res^dim <= 2^24
  long cells() const;
  // Flattened cell index, axis 0 fastest; -1 when p lies outside the box.
  long cell_of(const Vec& p) const;
  Vec cell_center(long cell) const;
  bool matches(const GridSpec& o) const;
};

struct EmpiricalMeasure {
  GridSpec grid;
  std::map<long, double> weights;  // nonnegative, sums to 1 within 1e-12
  std::uint64_t sample_count = 0;
};

/// Compensated sum of the weights (used by the normalization invariant).
double measure_sum(const EmpiricalMeasure& m);

/// L1 distance between histograms on the same grid (2 = disjoint supports).
double l1_distance(const EmpiricalMeasure& a, const EmpiricalMeasure& b);

struct BirkhoffResult {
  double value = 0.0;
  std::vector<double> curve;  // running average at curve_dt spacing
  double curve_dt = 0.0;
};

/// Trapezoid time average of obs along the orbit of x over [0, T_horizon].
BirkhoffResult birkhoff_average(const SystemSpec& sys, const Vec& x,
                                const std::function<double(const Vec&)>& obs,
                                double T_horizon, const IntegratorConfig& cfg);

/// Occupation histogram of the integrator grid points of the orbit.
EmpiricalMeasure empirical_measure(const SystemSpec& sys, const Vec& x,
                                   double T_horizon, int grid_res,
                                   const IntegratorConfig& cfg);

/// Histograms of the time-(i + k/slices) samples for k = 0..slices-1; all
/// members share the grid and the sample count.
std::vector<EmpiricalMeasure> time_shifted_family(const SystemSpec& sys,
                                                  const Vec& x, int n_samples,
                                                  int slices, int grid_res,
                                                  const IntegratorConfig& cfg);

/// Cell-wise mean of a family on one grid. Exact identity on a constant
/// family; the output inherits normalization from the members.
EmpiricalMeasure flow_smooth(const std::vector<EmpiricalMeasure>& family);

// Flat disk through the estimated splitting base, tangent to the cu-frame,
// sampled by a jittered grid with uniform Lebesgue weights.
struct DiskSample {
  Vec center;
  Mat frame;  // dim x dcu, orthonormal
  double radius = 0.0;
  std::vector<Vec> points;
  std::vector<double> weights;  // uniform, sums to 1
};

DiskSample make_disk(const SystemSpec& sys, const Vec& x, double radius,
                     int target_count, const IntegratorConfig& cfg,
                     std::uint64_t seed = 0xd15cULL, double warm = 20.0);

struct PushforwardResult {
  EmpiricalMeasure measure;
  // Pre-normalization mass: retained_pairs / (n_max * particle count).
  double retained_fraction = 0.0;
  long retained_pairs = 0;
  long dropped_pairs = 0;     // hyperbolic iterates outside the grid
  int excluded_particles = 0; // trace aborted (escape, singularity)
  int empty_particles = 0;    // no hyperbolic times within n_max
  std::string diagnostic;     // nonempty when nothing was retained
};

/// Histogram of particle positions at their own hyperbolic times k < n_max,
/// one equally weighted particle per trace. Traces must carry their orbit
/// points and satisfy trace.n >= n_max.
PushforwardResult pushforward_at_hyperbolic_times(
    const std::vector<CocycleTrace>& traces,
    const std::vector<HyperbolicTimes>& times, int n_max,
    const GridSpec& grid);

/// Streaming form: traces each disk particle with the disk frame as its
/// cu-frame, selects that particle's hyperbolic times, and accumulates.
PushforwardResult disk_pushforward(const SystemSpec& sys,
                                   const DiskSample& disk, int n_max,
                                   double delta,
                                   const HyperbolicTimeConfig& htcfg,
                                   const GridSpec& grid,
                                   const IntegratorConfig& cfg,
                                   int threads = 1);

struct Clustering {
  // Clusters list member indices ascending and are ordered by first member.
  std::vector<std::vector<int>> clusters;
  std::vector<EmpiricalMeasure> representatives;  // cell-wise member means
};

/// Single-linkage partition joining measures at L1 distance strictly below
/// radius. Permutation of the input induces the same partition.
Clustering cluster_measures(const std::vector<EmpiricalMeasure>& ms,
                            double radius);

struct Observable {
  std::string name;
  std::function<double(const Vec&)> fn;
};

/// Box-normalized coordinates and their squares (2 * dim observables).
std::vector<Observable> default_observable_panel(const Box& box);

/// Panel averages under the measure, observables evaluated at cell centers.
std::vector<double> measure_panel_average(const EmpiricalMeasure& m,
                                          const std::vector<Observable>& panel);

struct BasinCoverage {
  std::vector<double> fraction;  // assigned share per representative
  double unassigned = 0.0;       // remainder, including aborted orbits
  std::vector<int> assignment;   // representative index or -1
  int excluded = 0;
};

/// Assigns each sampled IC to the representative whose panel averages match
/// the orbit's Birkhoff averages within tol (max deviation over the panel).
BasinCoverage basin_coverage(const EnsembleSpec& ens,
                             const std::vector<EmpiricalMeasure>& reps,
                             const std::vector<Observable>& panel, double tol,
                             double T_horizon, const IntegratorConfig& cfg,
                             int threads = 1);

}  // namespace flowlab
