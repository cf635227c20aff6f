#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "flowlab/types.hpp"

namespace flowlab {

/// A concrete vector field on a working box U together with the metadata the
/// rest of the library needs: equilibria, a positively invariant trap test,
/// a Lipschitz bound for the field on U, and the declared splitting
/// dimensions (ds stable, dcu center-unstable, ds + dcu == dim).
struct SystemSpec {
  std::string name;
  int dim = 0;
  int ds = 0;
  int dcu = 0;
  std::function<void(const Vec&, Vec&)> eval;  // G(x) -> out
  std::function<void(const Vec&, Mat&)> jac;   // DG(x) -> out
  std::vector<Vec> equilibria;
  std::function<bool(const Vec&)> trap;  // positively invariant region test
  Box box;                               // bounding box of the trap region
  double lip_bound = 0.0;                // sup_U |DG|, any valid upper bound
};

inline Vec eval_at(const SystemSpec& sys, const Vec& x) {
  Vec g(sys.dim);
  sys.eval(x, g);
  return g;
}

inline Mat jac_at(const SystemSpec& sys, const Vec& x) {
  Mat j(sys.dim, sys.dim);
  sys.jac(x, j);
  return j;
}

/// Fixed-step RK4; the step is never adapted so runs are reproducible.
struct IntegratorConfig {
  double step = 1e-3;     // in (0, 0.1]
  int renorm_every = 10;  // QR cadence for frame transport, >= 1

  void validate() const;
};

/// A base point with a set of tangent vectors (columns).
struct TangentFrame {
  Vec base;
  Mat frame;
};

struct TangentResult {
  Vec point;      // flow endpoint
  Mat frame;      // orthonormalized image of the input frame
  double logdet;  // log |det (Dphi_t restricted to span of the input frame)|
  // Product of the QR factors, scaled so the raw pushed frame can be
  // recovered as frame * r_total * exp(r_log_scale) when needed.
  Mat r_total;
  double r_log_scale = 0.0;
};

/// Optional per-step proximity check against the system's equilibria;
/// violation raises SingularityError carrying the offending time.
struct OrbitGuard {
  double min_dist = 1e-8;
};

/// Flow x forward by time t >= 0. Throws EscapeError if the orbit leaves the
/// bounding box.
Vec advance(const SystemSpec& sys, const Vec& x, double t,
            const IntegratorConfig& cfg, const OrbitGuard* guard = nullptr);

/// Flow the base point and transport a tangent frame by the variational
/// equation, QR-renormalizing every cfg.renorm_every steps and once at the
/// end. logdet accumulates the diagonal of every R factor.
TangentResult tangent_advance(const SystemSpec& sys, const Vec& x,
                              const Mat& frame, double t,
                              const IntegratorConfig& cfg,
                              const OrbitGuard* guard = nullptr);

/// Transport a single tangent vector and return it at its true scale.
struct VectorPush {
  Vec point;
  Vec vector;
  double log_growth;  // log(|out| / |in|)
};
VectorPush push_vector(const SystemSpec& sys, const Vec& x, const Vec& v,
                       double t, const IntegratorConfig& cfg,
                       const OrbitGuard* guard = nullptr);

/// Thin QR with the diagonal of R forced positive, so an orthonormal input
/// reproduces itself and log det factors are well defined.
void qr_positive(const Mat& v, Mat& q, Mat& r);

/// Orbit positions at every integrator step over [0, t]; dts[i] is the step
/// from points[i] to points[i+1] (equal to cfg.step except a final partial).
struct OrbitGrid {
  std::vector<Vec> points;
  std::vector<double> dts;
};
OrbitGrid orbit_grid(const SystemSpec& sys, const Vec& x, double t,
                     const IntegratorConfig& cfg);

/// Fundamental matrix of the variational equation across a single step of
/// size dt at x, without renormalization.
Mat step_propagator(const SystemSpec& sys, const Vec& x, double dt,
                    const IntegratorConfig& cfg);

/// Distance to the nearest listed equilibrium, truncated at scale delta:
/// identity on (0, delta], linear ramp on (delta, 2*delta), 1 beyond.
/// delta must lie in (0, 1/2); exact coincidence with an equilibrium is a
/// domain error. No equilibria means the distance saturates at 1.
double truncated_distance(const Vec& x, const std::vector<Vec>& equilibria,
                          double delta);

/// Orbit sample row: time, state, field magnitude.
struct OrbitSample {
  double t;
  Vec x;
  double gnorm;
};

/// Sampled forward orbit, one row per output stride.
std::vector<OrbitSample> sample_orbit(const SystemSpec& sys, const Vec& x,
                                      double t, double out_stride,
                                      const IntegratorConfig& cfg);

// ---------------------------------------------------------------------------
// System registry

/// Look up a system by name, e.g. "lorenz", "saddle(1,1,2)",
/// "linear(1,0.5,-2)", "constant", "bistable", "hopf", "shear",
/// "lorenz(10,28,2.6667)", "lorenz_contracting". Throws ConfigError for
/// unknown names or bad parameter lists.
SystemSpec make_system(const std::string& spec);

/// Names of all registered families (base names, without parameters).
std::vector<std::string> builtin_systems();

/// Linear field x' = A x with declared stable dimension ds.
SystemSpec make_linear(const std::string& name, const Mat& A, int ds,
                       const Box& box);

/// Load a polynomial system from a JSON text definition: dimension, declared
/// splitting dimensions, monomial coefficients per coordinate, equilibria,
/// box, Lipschitz bound.
SystemSpec load_system_json(const std::string& json_text);
SystemSpec load_system_file(const std::string& path);

/// Check SystemSpec invariants by deterministic sampling: listed equilibria
/// satisfy |G| < 1e-10, the Lipschitz bound holds on sampled pairs, and the
/// Jacobian matches central differences. Throws PreconditionError on failure.
void validate_system(const SystemSpec& sys, std::uint64_t seed = 0x5eedULL,
                     int samples = 200);

}  // namespace flowlab
