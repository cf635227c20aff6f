#include "flowlab/srb.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "parallel.hpp"

namespace flowlab {

namespace {

constexpr long kMaxCells = 1L << 24;

// Streams the integrator grid points of the orbit of x over [0, T] in chunks
// of at most one time unit; fn sees every point exactly once, start included.
template <typename Fn>
void walk_points(const SystemSpec& sys, const Vec& x, double horizon,
                 const IntegratorConfig& cfg, Fn&& fn) {
  const int nchunks = std::max(1, static_cast<int>(std::ceil(horizon)));
  const double chunk = horizon / nchunks;
  Vec y = x;
  for (int c = 0; c < nchunks; ++c) {
    const OrbitGrid grid = orbit_grid(sys, y, chunk, cfg);
    for (size_t i = c == 0 ? 0 : 1; i < grid.points.size(); ++i) {
      fn(grid.points[i]);
    }
    y = grid.points.back();
  }
}

EmpiricalMeasure from_counts(const GridSpec& grid,
                             const std::map<long, std::uint64_t>& counts,
                             std::uint64_t total) {
  EmpiricalMeasure m;
  m.grid = grid;
  m.sample_count = total;
  for (const auto& [cell, c] : counts) {
    m.weights[cell] =
        static_cast<double>(c) / static_cast<double>(total);
  }
  return m;
}

// Cell-wise mean, centered on the first member so a constant family is
// reproduced bit for bit.
EmpiricalMeasure mean_measure(const std::vector<const EmpiricalMeasure*>& ms) {
  const EmpiricalMeasure& head = *ms.front();
  EmpiricalMeasure out;
  out.grid = head.grid;
  std::set<long> keys;
  for (const EmpiricalMeasure* m : ms) {
    out.sample_count += m->sample_count;
    for (const auto& [cell, w] : m->weights) {
      (void)w;
      keys.insert(cell);
    }
  }
  const double k = static_cast<double>(ms.size());
  for (long cell : keys) {
    const auto it0 = head.weights.find(cell);
    const double w0 = it0 == head.weights.end() ? 0.0 : it0->second;
    double dev = 0.0;
    for (size_t i = 1; i < ms.size(); ++i) {
      const auto it = ms[i]->weights.find(cell);
      dev += (it == ms[i]->weights.end() ? 0.0 : it->second) - w0;
    }
    const double v = w0 + dev / k;
    if (v != 0.0) out.weights[cell] = v;
  }
  return out;
}

}  // namespace

void GridSpec::validate() const {
  if (res < 1) throw ConfigError("grid: res must be >= 1");
  if (box.dim() < 1) throw ConfigError("grid: empty box");
  long c = 1;
  for (int k = 0; k < box.dim(); ++k) {
    if (!(box.lo[k] < box.hi[k])) {
      throw ConfigError("grid: box lo must be < hi componentwise");
    }
    c *= res;
    if (c > kMaxCells) {
      throw ConfigError("grid: res^dim exceeds 2^24 cells");
    }
  }
}

long GridSpec::cells() const {
  long c = 1;
  for (int k = 0; k < box.dim(); ++k) c *= res;
  return c;
}

long GridSpec::cell_of(const Vec& p) const {
  long cell = 0;
  long stride = 1;
  for (int k = 0; k < box.dim(); ++k) {
    const double lo = box.lo[k];
    const double hi = box.hi[k];
    if (!(p[k] >= lo) || !(p[k] <= hi)) return -1;
    long idx = static_cast<long>((p[k] - lo) / (hi - lo) * res);
    if (idx >= res) idx = res - 1;
    cell += idx * stride;
    stride *= res;
  }
  return cell;
}

Vec GridSpec::cell_center(long cell) const {
  if (cell < 0 || cell >= cells()) {
    throw PreconditionError("grid: cell index out of range");
  }
  Vec center(box.dim());
  for (int k = 0; k < box.dim(); ++k) {
    const long idx = cell % res;
    cell /= res;
    center[k] =
        box.lo[k] + (idx + 0.5) * (box.hi[k] - box.lo[k]) / res;
  }
  return center;
}

bool GridSpec::matches(const GridSpec& o) const {
  return res == o.res && box.dim() == o.box.dim() &&
         (box.lo.array() == o.box.lo.array()).all() &&
         (box.hi.array() == o.box.hi.array()).all();
}

double measure_sum(const EmpiricalMeasure& m) {
  double s = 0.0;
  double comp = 0.0;
  for (const auto& [cell, w] : m.weights) {
    (void)cell;
    const double y = w - comp;
    const double t = s + y;
    comp = (t - s) - y;
    s = t;
  }
  return s;
}

double l1_distance(const EmpiricalMeasure& a, const EmpiricalMeasure& b) {
  if (!a.grid.matches(b.grid)) {
    throw PreconditionError("l1_distance: measures live on different grids");
  }
  double d = 0.0;
  auto ia = a.weights.begin();
  auto ib = b.weights.begin();
  while (ia != a.weights.end() || ib != b.weights.end()) {
    if (ib == b.weights.end() ||
        (ia != a.weights.end() && ia->first < ib->first)) {
      d += std::abs(ia->second);
      ++ia;
    } else if (ia == a.weights.end() || ib->first < ia->first) {
      d += std::abs(ib->second);
      ++ib;
    } else {
      d += std::abs(ia->second - ib->second);
      ++ia;
      ++ib;
    }
  }
  return d;
}

BirkhoffResult birkhoff_average(const SystemSpec& sys, const Vec& x,
                                const std::function<double(const Vec&)>& obs,
                                double T_horizon, const IntegratorConfig& cfg) {
  if (!(T_horizon > 0.0) || !std::isfinite(T_horizon)) {
    throw PreconditionError("birkhoff_average: horizon must be > 0");
  }
  const int nchunks = std::max(1, static_cast<int>(std::ceil(T_horizon)));
  const double chunk = T_horizon / nchunks;
  BirkhoffResult out;
  out.curve_dt = chunk;
  out.curve.reserve(static_cast<size_t>(nchunks));

  Vec y = x;
  double integral = 0.0;
  double prev = obs(y);
  for (int c = 0; c < nchunks; ++c) {
    const OrbitGrid grid = orbit_grid(sys, y, chunk, cfg);
    for (size_t i = 0; i + 1 < grid.points.size(); ++i) {
      const double cur = obs(grid.points[i + 1]);
      integral += 0.5 * (prev + cur) * grid.dts[i];
      prev = cur;
    }
    y = grid.points.back();
    out.curve.push_back(integral / ((c + 1) * chunk));
  }
  out.value = integral / T_horizon;
  return out;
}

EmpiricalMeasure empirical_measure(const SystemSpec& sys, const Vec& x,
                                   double T_horizon, int grid_res,
                                   const IntegratorConfig& cfg) {
  if (!(T_horizon > 0.0) || !std::isfinite(T_horizon)) {
    throw PreconditionError("empirical_measure: horizon must be > 0");
  }
  GridSpec grid{sys.box, grid_res};
  grid.validate();
  std::map<long, std::uint64_t> counts;
  std::uint64_t total = 0;
  walk_points(sys, x, T_horizon, cfg, [&](const Vec& p) {
    const long cell = grid.cell_of(p);
    // advance() already confines the orbit to the box
    ++counts[cell];
    ++total;
  });
  return from_counts(grid, counts, total);
}

std::vector<EmpiricalMeasure> time_shifted_family(const SystemSpec& sys,
                                                  const Vec& x, int n_samples,
                                                  int slices, int grid_res,
                                                  const IntegratorConfig& cfg) {
  if (n_samples < 1) {
    throw PreconditionError("time_shifted_family: n_samples must be >= 1");
  }
  if (slices < 1) {
    throw PreconditionError("time_shifted_family: slices must be >= 1");
  }
  GridSpec grid{sys.box, grid_res};
  grid.validate();
  std::vector<std::map<long, std::uint64_t>> counts(
      static_cast<size_t>(slices));
  Vec y = x;
  for (int i = 0; i < n_samples; ++i) {
    for (int k = 0; k < slices; ++k) {
      ++counts[static_cast<size_t>(k)][grid.cell_of(y)];
      y = advance(sys, y, 1.0 / slices, cfg);
    }
  }
  std::vector<EmpiricalMeasure> family;
  family.reserve(static_cast<size_t>(slices));
  for (int k = 0; k < slices; ++k) {
    family.push_back(from_counts(grid, counts[static_cast<size_t>(k)],
                                 static_cast<std::uint64_t>(n_samples)));
  }
  return family;
}

EmpiricalMeasure flow_smooth(const std::vector<EmpiricalMeasure>& family) {
  if (family.empty()) {
    throw PreconditionError("flow_smooth: empty measure family");
  }
  std::vector<const EmpiricalMeasure*> ptrs;
  ptrs.reserve(family.size());
  for (const EmpiricalMeasure& m : family) {
    if (!m.grid.matches(family.front().grid)) {
      throw PreconditionError("flow_smooth: family members on different grids");
    }
    ptrs.push_back(&m);
  }
  return mean_measure(ptrs);
}

DiskSample make_disk(const SystemSpec& sys, const Vec& x, double radius,
                     int target_count, const IntegratorConfig& cfg,
                     std::uint64_t seed, double warm) {
  if (!(radius > 0.0) || !std::isfinite(radius)) {
    throw PreconditionError("make_disk: radius must be > 0");
  }
  if (target_count < 1) {
    throw PreconditionError("make_disk: target_count must be >= 1");
  }
  const SplittingEstimate est = estimate_splitting(sys, x, warm, warm, cfg, seed);
  const int d = sys.dcu;

  // Jittered grid over the bounding cube, kept when inside the ball. The
  // side is sized so the kept count lands near target_count.
  const double ball_fraction =
      std::pow(std::acos(-1.0), d / 2.0) /
      (std::tgamma(d / 2.0 + 1.0) * std::pow(2.0, d));
  const int side = std::max(
      1, static_cast<int>(std::ceil(
             std::pow(target_count / ball_fraction, 1.0 / d))));

  DiskSample disk;
  disk.center = est.base;
  disk.frame = est.ecu;
  disk.radius = radius;

  std::mt19937_64 rng(seed ^ 0xd15c5a3fULL);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::vector<int> idx(static_cast<size_t>(d), 0);
  Vec u(d);
  for (;;) {
    for (int k = 0; k < d; ++k) {
      u[k] = ((idx[static_cast<size_t>(k)] + u01(rng)) / side) * 2.0 * radius -
             radius;
    }
    if (u.norm() <= radius) {
      disk.points.push_back(disk.center + disk.frame * u);
    }
    int k = 0;
    while (k < d && ++idx[static_cast<size_t>(k)] == side) {
      idx[static_cast<size_t>(k)] = 0;
      ++k;
    }
    if (k == d) break;
  }
  if (disk.points.empty()) disk.points.push_back(disk.center);
  disk.weights.assign(disk.points.size(),
                      1.0 / static_cast<double>(disk.points.size()));
  return disk;
}

namespace {

PushforwardResult assemble_pushforward(
    const std::vector<std::vector<long>>& cells,
    const std::vector<long>& dropped, const std::vector<int>& status,
    int n_max, const GridSpec& grid) {
  PushforwardResult out;
  out.measure.grid = grid;
  std::map<long, std::uint64_t> counts;
  for (size_t i = 0; i < cells.size(); ++i) {
    if (status[i] == 1) {
      ++out.excluded_particles;
      continue;
    }
    out.dropped_pairs += dropped[i];
    if (cells[i].empty() && dropped[i] == 0) {
      ++out.empty_particles;
      continue;
    }
    for (long c : cells[i]) {
      ++counts[c];
      ++out.retained_pairs;
    }
  }
  out.retained_fraction =
      static_cast<double>(out.retained_pairs) /
      (static_cast<double>(n_max) * static_cast<double>(cells.size()));
  if (out.retained_pairs == 0) {
    out.diagnostic =
        "no hyperbolic times retained before n_max for any particle";
    return out;
  }
  out.measure = from_counts(
      grid, counts, static_cast<std::uint64_t>(out.retained_pairs));
  return out;
}

}  // namespace

PushforwardResult pushforward_at_hyperbolic_times(
    const std::vector<CocycleTrace>& traces,
    const std::vector<HyperbolicTimes>& times, int n_max,
    const GridSpec& grid) {
  grid.validate();
  if (n_max < 1) {
    throw PreconditionError("pushforward: n_max must be >= 1");
  }
  if (traces.empty() || traces.size() != times.size()) {
    throw PreconditionError(
        "pushforward: need one hyperbolic-time list per trace");
  }
  const size_t np = traces.size();
  std::vector<std::vector<long>> cells(np);
  std::vector<long> dropped(np, 0);
  std::vector<int> status(np, 0);
  for (size_t i = 0; i < np; ++i) {
    const CocycleTrace& tr = traces[i];
    if (tr.n < n_max ||
        tr.points.size() != static_cast<size_t>(tr.n) + 1) {
      throw PreconditionError(
          "pushforward: trace must carry orbit points covering n_max steps");
    }
    for (int k : times[i].indices) {
      if (k >= n_max) break;
      const long c = grid.cell_of(tr.points[static_cast<size_t>(k)]);
      if (c < 0) {
        ++dropped[i];
      } else {
        cells[i].push_back(c);
      }
    }
  }
  return assemble_pushforward(cells, dropped, status, n_max, grid);
}

PushforwardResult disk_pushforward(const SystemSpec& sys,
                                   const DiskSample& disk, int n_max,
                                   double delta,
                                   const HyperbolicTimeConfig& htcfg,
                                   const GridSpec& grid,
                                   const IntegratorConfig& cfg, int threads) {
  grid.validate();
  htcfg.validate();
  if (n_max < 1) {
    throw PreconditionError("disk_pushforward: n_max must be >= 1");
  }
  if (disk.points.empty()) {
    throw PreconditionError("disk_pushforward: disk has no particles");
  }
  const int np = static_cast<int>(disk.points.size());
  std::vector<std::vector<long>> cells(static_cast<size_t>(np));
  std::vector<long> dropped(static_cast<size_t>(np), 0);
  std::vector<int> status(static_cast<size_t>(np), 0);

  detail::parallel_for(np, threads, [&](int i) {
    const size_t s = static_cast<size_t>(i);
    try {
      TraceOptions opts;
      opts.initial_ecu = disk.frame;
      const CocycleTrace tr =
          cocycle_trace(sys, disk.points[s], n_max, delta, cfg, opts);
      const HyperbolicTimes ht = hyperbolic_times(tr, htcfg);
      for (int k : ht.indices) {
        if (k >= n_max) break;
        const long c = grid.cell_of(tr.points[static_cast<size_t>(k)]);
        if (c < 0) {
          ++dropped[s];
        } else {
          cells[s].push_back(c);
        }
      }
    } catch (const FlowError&) {
      status[s] = 1;
    }
  });
  return assemble_pushforward(cells, dropped, status, n_max, grid);
}

Clustering cluster_measures(const std::vector<EmpiricalMeasure>& ms,
                            double radius) {
  if (ms.empty()) {
    throw PreconditionError("cluster_measures: empty measure list");
  }
  if (!(radius > 0.0)) {
    throw PreconditionError("cluster_measures: radius must be > 0");
  }
  const int n = static_cast<int>(ms.size());
  std::vector<int> parent(static_cast<size_t>(n));
  std::iota(parent.begin(), parent.end(), 0);
  std::function<int(int)> find = [&](int i) {
    while (parent[static_cast<size_t>(i)] != i) {
      parent[static_cast<size_t>(i)] =
          parent[static_cast<size_t>(parent[static_cast<size_t>(i)])];
      i = parent[static_cast<size_t>(i)];
    }
    return i;
  };
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      if (l1_distance(ms[static_cast<size_t>(i)],
                      ms[static_cast<size_t>(j)]) < radius) {
        parent[static_cast<size_t>(find(j))] = find(i);
      }
    }
  }
  std::map<int, std::vector<int>> groups;
  for (int i = 0; i < n; ++i) groups[find(i)].push_back(i);

  Clustering out;
  std::vector<std::pair<int, const std::vector<int>*>> ordered;
  for (const auto& [root, members] : groups) {
    (void)root;
    ordered.emplace_back(members.front(), &members);
  }
  std::sort(ordered.begin(), ordered.end());
  for (const auto& [first, members] : ordered) {
    (void)first;
    out.clusters.push_back(*members);
    std::vector<const EmpiricalMeasure*> ptrs;
    for (int i : *members) ptrs.push_back(&ms[static_cast<size_t>(i)]);
    out.representatives.push_back(mean_measure(ptrs));
  }
  return out;
}

std::vector<Observable> default_observable_panel(const Box& box) {
  std::vector<Observable> panel;
  for (int k = 0; k < box.dim(); ++k) {
    const double lo = box.lo[k];
    const double span = box.hi[k] - box.lo[k];
    if (!(span > 0.0)) {
      throw PreconditionError("observable panel: degenerate box axis");
    }
    panel.push_back({"x" + std::to_string(k + 1),
                     [lo, span, k](const Vec& p) { return (p[k] - lo) / span; }});
  }
  for (int k = 0; k < box.dim(); ++k) {
    const double lo = box.lo[k];
    const double span = box.hi[k] - box.lo[k];
    panel.push_back({"x" + std::to_string(k + 1) + "sq",
                     [lo, span, k](const Vec& p) {
                       const double u = (p[k] - lo) / span;
                       return u * u;
                     }});
  }
  return panel;
}

std::vector<double> measure_panel_average(const EmpiricalMeasure& m,
                                          const std::vector<Observable>& panel) {
  std::vector<double> avg(panel.size(), 0.0);
  for (const auto& [cell, w] : m.weights) {
    const Vec center = m.grid.cell_center(cell);
    for (size_t j = 0; j < panel.size(); ++j) {
      avg[j] += w * panel[j].fn(center);
    }
  }
  return avg;
}

namespace {

std::vector<double> panel_birkhoff(const SystemSpec& sys, const Vec& x,
                                   const std::vector<Observable>& panel,
                                   double horizon,
                                   const IntegratorConfig& cfg) {
  const int nchunks = std::max(1, static_cast<int>(std::ceil(horizon)));
  const double chunk = horizon / nchunks;
  const size_t m = panel.size();
  std::vector<double> integral(m, 0.0);
  std::vector<double> prev(m), cur(m);
  for (size_t j = 0; j < m; ++j) prev[j] = panel[j].fn(x);
  Vec y = x;
  for (int c = 0; c < nchunks; ++c) {
    const OrbitGrid grid = orbit_grid(sys, y, chunk, cfg);
    for (size_t i = 0; i + 1 < grid.points.size(); ++i) {
      for (size_t j = 0; j < m; ++j) {
        cur[j] = panel[j].fn(grid.points[i + 1]);
        integral[j] += 0.5 * (prev[j] + cur[j]) * grid.dts[i];
        prev[j] = cur[j];
      }
    }
    y = grid.points.back();
  }
  for (size_t j = 0; j < m; ++j) integral[j] /= horizon;
  return integral;
}

}  // namespace

BasinCoverage basin_coverage(const EnsembleSpec& ens,
                             const std::vector<EmpiricalMeasure>& reps,
                             const std::vector<Observable>& panel, double tol,
                             double T_horizon, const IntegratorConfig& cfg,
                             int threads) {
  if (reps.empty()) {
    throw PreconditionError("basin_coverage: no representatives");
  }
  if (panel.empty()) {
    throw PreconditionError("basin_coverage: empty observable panel");
  }
  if (!(tol > 0.0)) {
    throw PreconditionError("basin_coverage: tol must be > 0");
  }
  if (!(T_horizon > 0.0)) {
    throw PreconditionError("basin_coverage: horizon must be > 0");
  }
  const SystemSpec sys = make_system(ens.system);
  std::vector<std::vector<double>> ravg;
  ravg.reserve(reps.size());
  for (const EmpiricalMeasure& r : reps) {
    ravg.push_back(measure_panel_average(r, panel));
  }

  const std::vector<Vec> xs = sample_ensemble(sys, ens);
  BasinCoverage out;
  out.assignment.assign(xs.size(), -1);
  std::vector<int> failed(xs.size(), 0);
  detail::parallel_for(static_cast<int>(xs.size()), threads, [&](int i) {
    const size_t s = static_cast<size_t>(i);
    try {
      const Vec y = ens.burn_in > 0.0
                        ? advance(sys, xs[s], ens.burn_in, cfg)
                        : xs[s];
      const std::vector<double> avg =
          panel_birkhoff(sys, y, panel, T_horizon, cfg);
      int best = -1;
      double best_dist = std::numeric_limits<double>::infinity();
      for (size_t r = 0; r < ravg.size(); ++r) {
        double dist = 0.0;
        for (size_t j = 0; j < panel.size(); ++j) {
          dist = std::max(dist, std::abs(avg[j] - ravg[r][j]));
        }
        if (dist < best_dist) {
          best_dist = dist;
          best = static_cast<int>(r);
        }
      }
      if (best_dist <= tol) out.assignment[s] = best;
    } catch (const FlowError&) {
      failed[s] = 1;
    }
  });

  out.fraction.assign(reps.size(), 0.0);
  int unassigned = 0;
  for (size_t i = 0; i < xs.size(); ++i) {
    out.excluded += failed[i];
    if (out.assignment[i] < 0) {
      ++unassigned;
    } else {
      out.fraction[static_cast<size_t>(out.assignment[i])] += 1.0;
    }
  }
  for (double& f : out.fraction) f /= static_cast<double>(xs.size());
  out.unassigned = static_cast<double>(unassigned) / static_cast<double>(xs.size());
  return out;
}

}  // namespace flowlab
