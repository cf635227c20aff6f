#include "flowlab/flow.hpp"

#include <Eigen/QR>
#include <cmath>
#include <sstream>

namespace flowlab {

namespace {

constexpr double kPartialStepFloor = 1e-12;

// Splits t into full steps of h plus a remainder, snapping to a whole number
// of steps when t/h is within roundoff of an integer.
void split_steps(double t, double h, long& nfull, double& rem) {
  const double ratio = t / h;
  nfull = static_cast<long>(std::floor(ratio));
  if (ratio - static_cast<double>(nfull) > 1.0 - 1e-9) ++nfull;
  rem = t - static_cast<double>(nfull) * h;
  if (rem < kPartialStepFloor) rem = 0.0;
}

void check_state(const SystemSpec& sys, const Vec& x, double t) {
  if (!x.allFinite()) {
    std::ostringstream os;
    os << sys.name << ": non-finite state at t=" << t;
    throw FlowError(os.str());
  }
  if (!sys.box.contains(x)) {
    std::ostringstream os;
    os << sys.name << ": orbit left the bounding box at t=" << t;
    throw EscapeError(os.str(), t);
  }
}

void check_guard(const SystemSpec& sys, const OrbitGuard* guard, const Vec& x,
                 double t) {
  if (!guard) return;
  for (const Vec& s : sys.equilibria) {
    if ((x - s).norm() <= guard->min_dist) {
      std::ostringstream os;
      os << sys.name << ": orbit within " << guard->min_dist
         << " of an equilibrium at t=" << t;
      throw SingularityError(os.str(), t);
    }
  }
}

// One RK4 step of x' = G(x), preallocated workspace.
struct Rk4 {
  explicit Rk4(int m) : k1(m), k2(m), k3(m), k4(m), xs(m) {}

  void step(const SystemSpec& sys, Vec& x, double h) {
    sys.eval(x, k1);
    xs = x + (0.5 * h) * k1;
    sys.eval(xs, k2);
    xs = x + (0.5 * h) * k2;
    sys.eval(xs, k3);
    xs = x + h * k3;
    sys.eval(xs, k4);
    x += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }

  Vec k1, k2, k3, k4, xs;
};

// One RK4 step of the coupled system (x, V), V' = DG(x) V.
struct Rk4Var {
  Rk4Var(int m, int k)
      : k1(m), k2(m), k3(m), k4(m), xs(m), J(m, m),
        f1(m, k), f2(m, k), f3(m, k), f4(m, k), vs(m, k) {}

  void step(const SystemSpec& sys, Vec& x, Mat& v, double h) {
    sys.eval(x, k1);
    sys.jac(x, J);
    f1.noalias() = J * v;

    xs = x + (0.5 * h) * k1;
    vs = v + (0.5 * h) * f1;
    sys.eval(xs, k2);
    sys.jac(xs, J);
    f2.noalias() = J * vs;

    xs = x + (0.5 * h) * k2;
    vs = v + (0.5 * h) * f2;
    sys.eval(xs, k3);
    sys.jac(xs, J);
    f3.noalias() = J * vs;

    xs = x + h * k3;
    vs = v + h * f3;
    sys.eval(xs, k4);
    sys.jac(xs, J);
    f4.noalias() = J * vs;

    x += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    v += (h / 6.0) * (f1 + 2.0 * f2 + 2.0 * f3 + f4);
  }

  Vec k1, k2, k3, k4, xs;
  Mat J, f1, f2, f3, f4, vs;
};

}  // namespace

void qr_positive(const Mat& v, Mat& q, Mat& r) {
  const int m = static_cast<int>(v.rows());
  const int k = static_cast<int>(v.cols());
  Eigen::HouseholderQR<Mat> qr(v);
  q = qr.householderQ() * Mat::Identity(m, k);
  r = qr.matrixQR().topRows(k).triangularView<Eigen::Upper>();
  for (int i = 0; i < k; ++i) {
    if (r(i, i) < 0) {
      r.row(i) = -r.row(i);
      q.col(i) = -q.col(i);
    }
  }
}

void IntegratorConfig::validate() const {
  if (!(step > 0.0) || step > 0.1) {
    throw ConfigError("integrator step must lie in (0, 0.1]");
  }
  if (renorm_every < 1) {
    throw ConfigError("renorm_every must be >= 1");
  }
}

Vec advance(const SystemSpec& sys, const Vec& x, double t,
            const IntegratorConfig& cfg, const OrbitGuard* guard) {
  cfg.validate();
  if (!(t >= 0.0) || !std::isfinite(t)) {
    throw PreconditionError("advance: time must be finite and >= 0");
  }
  if (x.size() != sys.dim) {
    throw PreconditionError("advance: state dimension mismatch");
  }
  check_state(sys, x, 0.0);
  check_guard(sys, guard, x, 0.0);

  Vec y = x;
  Rk4 rk(sys.dim);
  const double h = cfg.step;
  long nfull = 0;
  double rem = 0.0;
  split_steps(t, h, nfull, rem);
  for (long i = 0; i < nfull; ++i) {
    rk.step(sys, y, h);
    const double now = static_cast<double>(i + 1) * h;
    check_state(sys, y, now);
    check_guard(sys, guard, y, now);
  }
  if (rem > 0.0) {
    rk.step(sys, y, rem);
    check_state(sys, y, t);
    check_guard(sys, guard, y, t);
  }
  return y;
}

TangentResult tangent_advance(const SystemSpec& sys, const Vec& x,
                              const Mat& frame, double t,
                              const IntegratorConfig& cfg,
                              const OrbitGuard* guard) {
  cfg.validate();
  if (!(t >= 0.0) || !std::isfinite(t)) {
    throw PreconditionError("tangent_advance: time must be finite and >= 0");
  }
  if (x.size() != sys.dim || frame.rows() != sys.dim) {
    throw PreconditionError("tangent_advance: dimension mismatch");
  }
  const int k = static_cast<int>(frame.cols());
  if (k < 1 || k > sys.dim) {
    throw PreconditionError("tangent_advance: frame must have 1..dim columns");
  }
  check_state(sys, x, 0.0);
  check_guard(sys, guard, x, 0.0);

  TangentResult out;
  out.point = x;
  out.frame = frame;
  out.logdet = 0.0;
  out.r_total = Mat::Identity(k, k);
  out.r_log_scale = 0.0;

  Mat q(sys.dim, k), r(k, k);
  auto renorm = [&]() {
    qr_positive(out.frame, q, r);
    double dmax = 0.0;
    for (int i = 0; i < k; ++i) dmax = std::max(dmax, r(i, i));
    for (int i = 0; i < k; ++i) {
      if (!(r(i, i) > 1e-300) || r(i, i) < 1e-13 * dmax) {
        throw DegenerateFrameError(
            "tangent_advance: frame columns became numerically dependent");
      }
      out.logdet += std::log(r(i, i));
    }
    out.frame = q;
    out.r_total = r * out.r_total;
    const double scale = out.r_total.cwiseAbs().maxCoeff();
    if (scale > 1e100) {
      out.r_total /= scale;
      out.r_log_scale += std::log(scale);
    }
  };

  Rk4Var rk(sys.dim, k);
  const double h = cfg.step;
  long nfull = 0;
  double rem = 0.0;
  split_steps(t, h, nfull, rem);
  long since = 0;
  for (long i = 0; i < nfull; ++i) {
    rk.step(sys, out.point, out.frame, h);
    const double now = static_cast<double>(i + 1) * h;
    check_state(sys, out.point, now);
    check_guard(sys, guard, out.point, now);
    if (++since == cfg.renorm_every) {
      renorm();
      since = 0;
    }
  }
  if (rem > 0.0) {
    rk.step(sys, out.point, out.frame, rem);
    check_state(sys, out.point, t);
    check_guard(sys, guard, out.point, t);
  }
  renorm();
  return out;
}

VectorPush push_vector(const SystemSpec& sys, const Vec& x, const Vec& v,
                       double t, const IntegratorConfig& cfg,
                       const OrbitGuard* guard) {
  const double vin = v.norm();
  if (!(vin > 0.0)) {
    throw PreconditionError("push_vector: zero vector");
  }
  TangentResult r = tangent_advance(sys, x, v, t, cfg, guard);
  VectorPush out;
  out.point = std::move(r.point);
  out.vector = r.frame.col(0) * std::exp(r.logdet);
  out.log_growth = r.logdet - std::log(vin);
  return out;
}

double truncated_distance(const Vec& x, const std::vector<Vec>& equilibria,
                          double delta) {
  if (!(delta > 0.0) || !(delta < 0.5)) {
    throw PreconditionError("truncated_distance: delta must lie in (0, 1/2)");
  }
  double d = std::numeric_limits<double>::infinity();
  for (const Vec& s : equilibria) {
    d = std::min(d, (x - s).norm());
  }
  if (d >= 2.0 * delta) return 1.0;
  if (d > delta) return (1.0 - delta) / delta * d + 2.0 * delta - 1.0;
  if (d > 0.0) return d;
  throw PreconditionError(
      "truncated_distance: point coincides with an equilibrium");
}

OrbitGrid orbit_grid(const SystemSpec& sys, const Vec& x, double t,
                     const IntegratorConfig& cfg) {
  cfg.validate();
  if (!(t >= 0.0) || !std::isfinite(t)) {
    throw PreconditionError("orbit_grid: time must be finite and >= 0");
  }
  check_state(sys, x, 0.0);
  OrbitGrid grid;
  Vec y = x;
  Rk4 rk(sys.dim);
  const double h = cfg.step;
  long nfull = 0;
  double rem = 0.0;
  split_steps(t, h, nfull, rem);
  grid.points.reserve(static_cast<size_t>(nfull) + 2);
  grid.points.push_back(y);
  for (long i = 0; i < nfull; ++i) {
    rk.step(sys, y, h);
    check_state(sys, y, static_cast<double>(i + 1) * h);
    grid.points.push_back(y);
    grid.dts.push_back(h);
  }
  if (rem > 0.0) {
    rk.step(sys, y, rem);
    check_state(sys, y, t);
    grid.points.push_back(y);
    grid.dts.push_back(rem);
  }
  return grid;
}

Mat step_propagator(const SystemSpec& sys, const Vec& x, double dt,
                    const IntegratorConfig& cfg) {
  cfg.validate();
  if (!(dt > 0.0) || dt > 0.1) {
    throw PreconditionError("step_propagator: dt must lie in (0, 0.1]");
  }
  Rk4Var rk(sys.dim, sys.dim);
  Vec y = x;
  Mat v = Mat::Identity(sys.dim, sys.dim);
  rk.step(sys, y, v, dt);
  return v;
}

std::vector<OrbitSample> sample_orbit(const SystemSpec& sys, const Vec& x,
                                      double t, double out_stride,
                                      const IntegratorConfig& cfg) {
  if (!(out_stride > 0.0)) {
    throw PreconditionError("sample_orbit: output stride must be positive");
  }
  std::vector<OrbitSample> rows;
  Vec y = x;
  Vec g(sys.dim);
  double now = 0.0;
  sys.eval(y, g);
  rows.push_back({now, y, g.norm()});
  while (now + out_stride <= t + 1e-9) {
    y = advance(sys, y, out_stride, cfg);
    now += out_stride;
    sys.eval(y, g);
    rows.push_back({now, y, g.norm()});
  }
  return rows;
}

}  // namespace flowlab
