#include "flowlab/lpf.hpp"

#include <Eigen/LU>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

namespace flowlab {

namespace {

double min_equilibrium_distance(const SystemSpec& sys, const Vec& x) {
  double d = std::numeric_limits<double>::infinity();
  for (const Vec& s : sys.equilibria) d = std::min(d, (x - s).norm());
  return d;
}

void require_regular(const SystemSpec& sys, const Vec& x, double t,
                     const char* who) {
  Vec g(sys.dim);
  sys.eval(x, g);
  if (g.norm() <= kRegularNorm) {
    std::ostringstream os;
    os << who << ": point is not regular (|G| <= 1e-8) at t=" << t;
    throw SingularityError(os.str(), t);
  }
}

Mat random_gaussian(std::mt19937_64& rng, int rows, int cols) {
  std::normal_distribution<double> n01(0.0, 1.0);
  Mat m(rows, cols);
  for (int j = 0; j < cols; ++j) {
    for (int i = 0; i < rows; ++i) m(i, j) = n01(rng);
  }
  return m;
}

// Declared splitting dimensions must be usable before any estimation starts.
void require_splitting_dims(const SystemSpec& sys, const char* who) {
  if (sys.ds < 1) {
    throw PreconditionError(std::string(who) + ": declared ds must be >= 1");
  }
  if (sys.dcu < 2) {
    throw PreconditionError(std::string(who) + ": declared dcu must be >= 2");
  }
  if (sys.ds + sys.dcu != sys.dim) {
    throw PreconditionError(std::string(who) + ": ds + dcu must equal dim");
  }
}

// Pull a generic ds-frame back along the stored forward orbit of x through
// the inverse one-step propagators; the result aligns with the directions
// most expanded under backward transport, i.e. the stable bundle at x.
Mat stable_pullback(const SystemSpec& sys, const Vec& x, double t,
                    const IntegratorConfig& cfg, std::mt19937_64& rng) {
  OrbitGrid grid = orbit_grid(sys, x, t, cfg);
  Mat w = random_gaussian(rng, sys.dim, sys.ds);
  Mat q(sys.dim, sys.ds), r(sys.ds, sys.ds);
  qr_positive(w, q, r);
  w = q;
  int since = 0;
  for (long k = static_cast<long>(grid.dts.size()) - 1; k >= 0; --k) {
    Mat s = step_propagator(sys, grid.points[static_cast<size_t>(k)],
                            grid.dts[static_cast<size_t>(k)], cfg);
    w = Eigen::PartialPivLU<Mat>(s).solve(w);
    if (++since == cfg.renorm_every) {
      qr_positive(w, q, r);
      w = q;
      since = 0;
    }
  }
  qr_positive(w, q, r);
  return q;
}

}  // namespace

Vec project_normal(const Vec& g, const Vec& v) {
  const double gn2 = g.squaredNorm();
  if (!(gn2 > kRegularNorm * kRegularNorm)) {
    throw PreconditionError("project_normal: field vanishes (|G| <= 1e-8)");
  }
  return v - (v.dot(g) / gn2) * g;
}

Vec lpf_step(const SystemSpec& sys, const Vec& x, double t, const Vec& v,
             const IntegratorConfig& cfg) {
  require_regular(sys, x, 0.0, "lpf_step");
  Vec g(sys.dim);
  sys.eval(x, g);
  if (std::abs(v.dot(g)) > 1e-8 * v.norm() * g.norm()) {
    throw PreconditionError("lpf_step: v is not normal to the field at x");
  }
  OrbitGuard guard{kRegularNorm};
  VectorPush push = push_vector(sys, x, v, t, cfg, &guard);
  require_regular(sys, push.point, t, "lpf_step");
  sys.eval(push.point, g);
  return project_normal(g, push.vector);
}

SplittingEstimate estimate_splitting(const SystemSpec& sys, const Vec& x,
                                     double warm_fwd, double warm_bwd,
                                     const IntegratorConfig& cfg,
                                     std::uint64_t seed) {
  require_splitting_dims(sys, "estimate_splitting");
  require_regular(sys, x, 0.0, "estimate_splitting");
  if (!(warm_fwd >= 0.0) || !(warm_bwd >= 0.0)) {
    throw PreconditionError("estimate_splitting: warm-up times must be >= 0");
  }

  std::mt19937_64 rng(seed);

  // Center-unstable leg: anchor the seed frame on the field direction (the
  // flow line always belongs to E^cu) and push it downstream.
  Vec g(sys.dim);
  sys.eval(x, g);
  Mat seed_frame(sys.dim, sys.dcu);
  seed_frame.col(0) = g / g.norm();
  seed_frame.rightCols(sys.dcu - 1) = random_gaussian(rng, sys.dim, sys.dcu - 1);
  Mat q(sys.dim, sys.dcu), r(sys.dcu, sys.dcu);
  qr_positive(seed_frame, q, r);

  SplittingEstimate est;
  if (warm_fwd > 0.0) {
    TangentResult fwd = tangent_advance(sys, x, q, warm_fwd, cfg);
    est.base = std::move(fwd.point);
    est.ecu = std::move(fwd.frame);
  } else {
    est.base = x;
    est.ecu = std::move(q);
  }
  require_regular(sys, est.base, warm_fwd, "estimate_splitting");

  est.es = stable_pullback(sys, est.base, warm_bwd, cfg, rng);

  Eigen::JacobiSVD<Mat> svd(est.es.transpose() * est.ecu);
  const double cosangle = std::min(1.0, svd.singularValues()(0));
  est.angle_gap = std::acos(cosangle);
  if (est.angle_gap < 1e-6) {
    throw NoDominationError(
        "estimate_splitting: stable and center-unstable estimates fell "
        "within 1e-6 of each other (no usable angle gap)");
  }

  sys.eval(est.base, g);
  est.residual = (g / g.norm() - est.ecu * (est.ecu.transpose() * (g / g.norm()))).norm();
  return est;
}

NormalSection normal_cu(const Mat& ecu, const Vec& g, const Vec& base) {
  const int dcu = static_cast<int>(ecu.cols());
  if (dcu < 2) {
    throw PreconditionError("normal_cu: dcu must be >= 2");
  }
  Vec w = ecu.transpose() * g;
  if (w.norm() <= kRegularNorm * std::max(1.0, g.norm())) {
    throw PreconditionError(
        "normal_cu: field has no component in the center-unstable space");
  }
  // Full QR of w: trailing columns are an orthonormal basis of w^perp in
  // frame coordinates, so ecu * those columns is orthogonal to g exactly.
  Eigen::HouseholderQR<Mat> qr(w);
  Mat full = qr.householderQ() * Mat::Identity(dcu, dcu);
  NormalSection ns;
  ns.base = base;
  ns.ncu = ecu * full.rightCols(dcu - 1);
  return ns;
}

NormalSection normal_cu(const SplittingEstimate& est, const Vec& g) {
  return normal_cu(est.ecu, g, est.base);
}

CocycleTrace cocycle_trace(const SystemSpec& sys, const Vec& x, int n,
                           double delta, const IntegratorConfig& cfg,
                           const TraceOptions& opts) {
  if (n < 1) throw PreconditionError("cocycle_trace: n must be >= 1");
  if (!(delta > 0.0) || !(delta < 0.5)) {
    throw PreconditionError("cocycle_trace: delta must lie in (0, 1/2)");
  }
  if (!(opts.step_time > 0.0)) {
    throw PreconditionError("cocycle_trace: step_time must be > 0");
  }

  CocycleTrace tr;
  Mat e;
  if (opts.initial_ecu.size() > 0) {
    if (opts.initial_ecu.rows() != sys.dim ||
        opts.initial_ecu.cols() != sys.dcu) {
      throw PreconditionError("cocycle_trace: initial frame has wrong shape");
    }
    require_splitting_dims(sys, "cocycle_trace");
    Mat r(sys.dcu, sys.dcu);
    e.resize(sys.dim, sys.dcu);
    qr_positive(opts.initial_ecu, e, r);
    tr.base = x;
  } else {
    SplittingEstimate est = estimate_splitting(sys, x, opts.warm_fwd,
                                               opts.warm_bwd, cfg, opts.seed);
    tr.base = est.base;
    e = std::move(est.ecu);
  }
  tr.system = sys.name;
  tr.delta = delta;
  tr.n = n;
  tr.dcu = sys.dcu;
  tr.step_time = opts.step_time;
  tr.cfg = cfg;
  tr.a.reserve(static_cast<size_t>(n));
  tr.logp.reserve(static_cast<size_t>(n));
  tr.logg.reserve(static_cast<size_t>(n));
  tr.logdet_cu.reserve(static_cast<size_t>(n));
  tr.dist_trunc.reserve(static_cast<size_t>(n));
  tr.points.reserve(static_cast<size_t>(n) + 1);

  Vec y = tr.base;
  Vec g(sys.dim), gn(sys.dim);

  auto check_point = [&](const Vec& p, int i) {
    if (!sys.equilibria.empty() &&
        min_equilibrium_distance(sys, p) <= opts.min_equilibrium_dist) {
      std::ostringstream os;
      os << "cocycle_trace: orbit within " << opts.min_equilibrium_dist
         << " of an equilibrium at step " << i;
      throw SingularityError(os.str(), static_cast<double>(i));
    }
    sys.eval(p, g);
    if (g.norm() <= kRegularNorm) {
      std::ostringstream os;
      os << "cocycle_trace: point not regular at step " << i;
      throw SingularityError(os.str(), static_cast<double>(i));
    }
  };

  check_point(y, 0);
  for (int i = 0; i < n; ++i) {
    sys.eval(y, g);
    tr.points.push_back(y);
    tr.logg.push_back(std::log(g.norm()));
    tr.dist_trunc.push_back(sys.equilibria.empty()
                                ? 1.0
                                : truncated_distance(y, sys.equilibria, delta));

    NormalSection ns = normal_cu(e, g, y);
    Mat coords = e.transpose() * ns.ncu;  // dcu x (dcu-1)

    TangentResult step = tangent_advance(sys, y, e, opts.step_time, cfg);
    check_point(step.point, i + 1);
    sys.eval(step.point, gn);

    NormalSection ns_next = normal_cu(step.frame, gn, step.point);
    // Matrix of P^step restricted to the center-unstable normal section, in
    // the orthonormal bases ns -> ns_next. The raw push of ns is recovered
    // from the accumulated QR factors of the frame transport.
    Mat m = (ns_next.ncu.transpose() * step.frame) *
            (step.r_total * coords) * std::exp(step.r_log_scale);
    Eigen::JacobiSVD<Mat> svd(m);
    const double smax = svd.singularValues()(0);
    const double smin = svd.singularValues()(svd.singularValues().size() - 1);
    if (!(smin > 1e-300)) {
      throw DegenerateFrameError(
          "cocycle_trace: normal cocycle step is numerically singular");
    }
    tr.a.push_back(-std::log(smin));
    tr.logp.push_back(std::log(smax));
    tr.logdet_cu.push_back(step.logdet);

    y = std::move(step.point);
    e = std::move(step.frame);
  }
  sys.eval(y, g);
  tr.points.push_back(y);
  tr.logg_end = std::log(g.norm());
  return tr;
}

ConeReport cone_invariance_check(const SystemSpec& sys, const Vec& x, double a,
                                 double t, int samples,
                                 const IntegratorConfig& cfg,
                                 std::uint64_t seed) {
  if (!(a > 0.0)) throw PreconditionError("cone_invariance_check: a must be > 0");
  if (!(t > 0.0)) throw PreconditionError("cone_invariance_check: t must be > 0");
  std::mt19937_64 rng(seed);

  SplittingEstimate est = estimate_splitting(sys, x, 20.0, 20.0, cfg, seed);

  TangentResult fwd = tangent_advance(sys, est.base, est.ecu, t, cfg);
  const Mat& ecu_t = fwd.frame;
  Mat es_t = stable_pullback(sys, fwd.point, 20.0, cfg, rng);

  Mat basis(sys.dim, sys.dim);
  basis.leftCols(sys.ds) = es_t;
  basis.rightCols(sys.dcu) = ecu_t;
  Eigen::PartialPivLU<Mat> lu(basis);

  ConeReport rep;
  rep.base = est.base;
  rep.target = fwd.point;

  std::normal_distribution<double> n01(0.0, 1.0);
  auto unit_combo = [&](const Mat& cols, int deterministic_idx) {
    if (deterministic_idx >= 0 && deterministic_idx < cols.cols()) {
      return Vec(cols.col(deterministic_idx));
    }
    Vec c(cols.cols());
    for (int i = 0; i < c.size(); ++i) c[i] = n01(rng);
    if (c.norm() < 1e-12) c.setOnes();
    Vec v = cols * c;
    return Vec(v / v.norm());
  };

  for (int k = 0; k < samples; ++k) {
    // First sweep the frame axes themselves so the weakest center-unstable
    // direction is always probed, then random boundary vectors.
    const int det_cu = k < sys.dcu ? k : -1;
    const int det_s = (k >= sys.dcu && k < sys.dcu + sys.ds) ? k - sys.dcu : -1;
    Vec vc = unit_combo(est.ecu, det_cu);
    Vec vs = unit_combo(est.es, det_s);
    Vec v = vc + a * vs;

    VectorPush push = push_vector(sys, est.base, v, t, cfg);
    Vec coords = lu.solve(push.vector);
    const double sn = coords.head(sys.ds).norm();
    const double cn = coords.tail(sys.dcu).norm();
    const double ratio = sn / std::max(a * cn, 1e-300);
    rep.ratios.push_back(ratio);
    rep.max_ratio = std::max(rep.max_ratio, ratio);
  }
  return rep;
}

}  // namespace flowlab
