// Flow transport, variational transport, truncated distance, and the system
// registry. Closed forms for linear fields come from the matrix exponential;
// volume growth is cross-checked against the divergence integral.

#include <cmath>
#include <random>
#include <unsupported/Eigen/MatrixFunctions>

#include "doctest.h"
#include "flowlab/flow.hpp"

using namespace flowlab;

namespace {

const IntegratorConfig kCfg{};

Vec vec3(double a, double b, double c) {
  Vec v(3);
  v << a, b, c;
  return v;
}

// Trapezoid integral of div G along a stored orbit, used as an independent
// check of accumulated log-volume growth.
double divergence_integral(const SystemSpec& sys, Vec x, double t, double h) {
  IntegratorConfig cfg;
  cfg.step = h;
  const long n = std::lround(t / h);
  Mat j(sys.dim, sys.dim);
  double acc = 0.0;
  sys.jac(x, j);
  double prev = j.trace();
  for (long i = 0; i < n; ++i) {
    x = advance(sys, x, h, cfg);
    sys.jac(x, j);
    const double cur = j.trace();
    acc += 0.5 * h * (prev + cur);
    prev = cur;
  }
  return acc;
}

}  // namespace

TEST_CASE("advance: constant field translates exactly") {
  SystemSpec sys = make_system("constant");
  Vec x = vec3(0, 0, 0);
  Vec y = advance(sys, x, 2.5, kCfg);
  CHECK(std::abs(y[0] - 2.5) < 1e-12);
  CHECK(y[1] == 0.0);
  CHECK(y[2] == 0.0);
}

TEST_CASE("advance: saddle matches closed form to 1e-8") {
  SystemSpec sys = make_system("saddle(1,1,2)");
  Vec y = advance(sys, vec3(1, 0, 0), 1.0, kCfg);
  CHECK(std::abs(y[0] - std::exp(1.0)) < 1e-8);
  CHECK(std::abs(y[1]) < 1e-300);
  CHECK(std::abs(y[2]) < 1e-300);

  Vec z = advance(sys, vec3(1, 1, 1), 1.0, kCfg);
  CHECK(std::abs(z[0] - std::exp(1.0)) < 1e-8);
  CHECK(std::abs(z[1] - std::exp(-1.0)) < 1e-8);
  CHECK(std::abs(z[2] - std::exp(-2.0)) < 1e-8);
}

TEST_CASE("advance: matrix exponential oracle on a non-normal linear field") {
  Mat a(3, 3);
  a << 0.2, 1.0, 0.0,
       0.0, -0.3, 0.5,
       0.0, 0.0, -2.0;
  SystemSpec sys = make_linear("tri", a, 1, Box::cube(3, -100, 100));
  Vec x = vec3(0.3, -0.7, 1.1);
  for (double t : {0.37, 1.0, 4.2}) {
    Vec want = (t * a).exp() * x;
    Vec got = advance(sys, x, t, kCfg);
    CHECK((want - got).norm() < 1e-9 * std::max(1.0, want.norm()));
  }
}

TEST_CASE("advance: group property phi_{s+t} = phi_s . phi_t within 1e-7") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  for (const char* name : {"lorenz", "saddle(1,1,2)", "hopf"}) {
    SystemSpec sys = make_system(name);
    for (int k = 0; k < 5; ++k) {
      Vec x = vec3(1.0 + u(rng), 1.0 + u(rng), 1.0 + u(rng));
      const double s = 0.7 + u(rng), t = 1.3 + u(rng);
      Vec one = advance(sys, x, s + t, kCfg);
      Vec two = advance(sys, advance(sys, x, t, kCfg), s, kCfg);
      CHECK((one - two).norm() < 1e-7 * std::max(1.0, one.norm()));
    }
  }
}

TEST_CASE("advance: identical inputs give bitwise identical output") {
  SystemSpec sys = make_system("lorenz");
  Vec x = vec3(1, 1, 1);
  Vec a = advance(sys, x, 3.21, kCfg);
  Vec b = advance(sys, x, 3.21, kCfg);
  for (int i = 0; i < 3; ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("advance: escape raises with exit time") {
  SystemSpec sys = make_system("constant");
  Vec x = vec3(999.5, 0, 0);
  try {
    advance(sys, x, 1.0, kCfg);
    FAIL("expected EscapeError");
  } catch (const EscapeError& e) {
    CHECK(e.exit_time > 0.49);
    CHECK(e.exit_time < 0.52);
  }
}

TEST_CASE("advance: rejects negative time and bad config") {
  SystemSpec sys = make_system("constant");
  CHECK_THROWS_AS(advance(sys, vec3(0, 0, 0), -1.0, kCfg), PreconditionError);
  IntegratorConfig bad;
  bad.step = 0.0;
  CHECK_THROWS_AS(advance(sys, vec3(0, 0, 0), 1.0, bad), ConfigError);
  bad.step = 1e-3;
  bad.renorm_every = 0;
  CHECK_THROWS_AS(advance(sys, vec3(0, 0, 0), 1.0, bad), ConfigError);
}

TEST_CASE("lorenz: trap region is positively invariant over t=50") {
  SystemSpec sys = make_system("lorenz");
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  int tested = 0;
  while (tested < 4) {
    Vec x(3);
    for (int i = 0; i < 3; ++i) {
      x[i] = sys.box.lo[i] + u01(rng) * (sys.box.hi[i] - sys.box.lo[i]);
    }
    if (!sys.trap(x)) continue;
    ++tested;
    Vec y = advance(sys, x, 50.0, kCfg);
    CHECK(sys.trap(y));
  }
}

TEST_CASE("tangent_advance: constant field leaves an orthonormal frame fixed") {
  SystemSpec sys = make_system("constant");
  Mat f = Mat::Identity(3, 3);
  TangentResult r = tangent_advance(sys, vec3(0, 0, 0), f, 5.0, kCfg);
  CHECK((r.frame - f).norm() < 1e-13);
  CHECK(std::abs(r.logdet) < 1e-13);
}

TEST_CASE("tangent_advance: matrix exponential oracle for frame and logdet") {
  Mat a(3, 3);
  a << 0.5, 0.2, 0.0,
       0.0, -0.4, 0.1,
       0.3, 0.0, -1.5;
  SystemSpec sys = make_linear("full", a, 1, Box::cube(3, -100, 100));
  Vec x = vec3(0.1, 0.2, 0.3);
  Mat f(3, 2);
  f << 1, 0,
       0, 1,
       0, 0;
  const double t = 2.0;
  TangentResult r = tangent_advance(sys, x, f, t, kCfg);

  Mat pushed = (t * a).exp() * f;
  // Oracle: log |det| of the restriction from Gram determinants.
  const double want = 0.5 * std::log((pushed.transpose() * pushed).determinant());
  CHECK(std::abs(r.logdet - want) < 1e-9);
  // Span agreement: projector difference.
  Eigen::HouseholderQR<Mat> qr(pushed);
  Mat q = qr.householderQ() * Mat::Identity(3, 2);
  Mat p1 = q * q.transpose();
  Mat p2 = r.frame * r.frame.transpose();
  CHECK((p1 - p2).norm() < 1e-9);
  // Raw frame recovery through the accumulated R factors.
  Mat raw = r.frame * r.r_total * std::exp(r.r_log_scale);
  CHECK((raw - pushed).norm() < 1e-8 * std::max(1.0, pushed.norm()));
}

TEST_CASE("tangent_advance: Liouville volume growth") {
  SUBCASE("diagonal linear field, exact trace") {
    SystemSpec sys = make_system("saddle(1,1,2)");
    Mat f = Mat::Identity(3, 3);
    TangentResult r = tangent_advance(sys, vec3(1, 1, 1), f, 2.0, kCfg);
    CHECK(std::abs(r.logdet - (-2.0 * 2.0)) < 1e-10);
  }
  SUBCASE("lorenz, constant divergence -(sigma+1+beta)") {
    SystemSpec sys = make_system("lorenz");
    Vec x = advance(sys, vec3(1, 1, 1), 30.0, kCfg);  // settle near the attractor
    const double t = 2.0;
    TangentResult r = tangent_advance(sys, x, Mat::Identity(3, 3), t, kCfg);
    const double want = -(10.0 + 1.0 + 8.0 / 3.0) * t;
    CHECK(std::abs(r.logdet - want) < 1e-5);
  }
  SUBCASE("hopf, position dependent divergence vs quadrature") {
    SystemSpec sys = make_system("hopf");
    Vec x = vec3(0.3, 0.1, 0.4);
    const double t = 5.0;
    TangentResult r = tangent_advance(sys, x, Mat::Identity(3, 3), t, kCfg);
    const double want = divergence_integral(sys, x, t, kCfg.step);
    CHECK(std::abs(r.logdet - want) < 1e-5);
  }
}

TEST_CASE("tangent_advance: duplicate columns are rejected as degenerate") {
  SystemSpec sys = make_system("lorenz");
  Mat f(3, 2);
  f << 1, 1,
       1, 1,
       0, 0;
  CHECK_THROWS_AS(tangent_advance(sys, vec3(1, 1, 1), f, 1.0, kCfg),
                  DegenerateFrameError);
}

TEST_CASE("push_vector: saddle contracts e2 by exp(-1)") {
  SystemSpec sys = make_system("saddle(1,1,2)");
  VectorPush r = push_vector(sys, vec3(1, 0, 0), Vec(vec3(0, 1, 0)), 1.0, kCfg);
  CHECK(std::abs(r.log_growth - (-1.0)) < 1e-9);
  CHECK((r.vector - vec3(0, std::exp(-1.0), 0)).norm() < 1e-9);
}

TEST_CASE("truncated_distance: branch values and saturation") {
  std::vector<Vec> eq = {Vec::Zero(3)};
  const double delta = 0.1;
  CHECK(truncated_distance(vec3(0.05, 0, 0), eq, delta) == doctest::Approx(0.05));
  CHECK(truncated_distance(vec3(0.15, 0, 0), eq, delta) == doctest::Approx(0.55));
  CHECK(truncated_distance(vec3(0.25, 0, 0), eq, delta) == doctest::Approx(1.0));
  CHECK(truncated_distance(vec3(7, 7, 7), eq, delta) == 1.0);
  // no equilibria: saturates at 1
  CHECK(truncated_distance(vec3(0.01, 0, 0), {}, delta) == 1.0);
}

TEST_CASE("truncated_distance: continuous across branch points") {
  std::vector<Vec> eq = {Vec::Zero(3)};
  const double delta = 0.2;
  const double eps = 1e-9;
  const double at = truncated_distance(vec3(delta - eps, 0, 0), eq, delta);
  const double above = truncated_distance(vec3(delta + eps, 0, 0), eq, delta);
  CHECK(std::abs(at - above) < 1e-7);
  const double b2 = truncated_distance(vec3(2 * delta - eps, 0, 0), eq, delta);
  CHECK(std::abs(b2 - 1.0) < 1e-7);
}

TEST_CASE("truncated_distance: Lipschitz in d with slope (1-delta)/delta") {
  std::vector<Vec> eq = {Vec::Zero(3)};
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(1e-4, 0.6);
  for (double delta : {0.05, 0.1, 0.3}) {
    const double slope = (1.0 - delta) / delta;
    for (int k = 0; k < 200; ++k) {
      const double d1 = u(rng), d2 = u(rng);
      const double v1 = truncated_distance(vec3(d1, 0, 0), eq, delta);
      const double v2 = truncated_distance(vec3(d2, 0, 0), eq, delta);
      CHECK(std::abs(v1 - v2) <= slope * std::abs(d1 - d2) + 1e-12);
    }
  }
}

TEST_CASE("truncated_distance: domain errors") {
  std::vector<Vec> eq = {Vec::Zero(3)};
  CHECK_THROWS_AS(truncated_distance(Vec(Vec::Zero(3)), eq, 0.1), PreconditionError);
  CHECK_THROWS_AS(truncated_distance(vec3(1, 0, 0), eq, 0.5), PreconditionError);
  CHECK_THROWS_AS(truncated_distance(vec3(1, 0, 0), eq, 0.0), PreconditionError);
}

TEST_CASE("registry: lookups, parameters, and rejection") {
  for (const std::string& name : builtin_systems()) {
    // every family instantiates with defaults
    SystemSpec sys = make_system(name);
    CHECK(sys.dim >= 3);
    CHECK(sys.ds >= 1);
    CHECK(sys.dcu >= 2);
  }
  CHECK_THROWS_AS(make_system("does_not_exist"), ConfigError);
  CHECK_THROWS_AS(make_system("saddle(1,zap,2)"), ConfigError);
  CHECK_THROWS_AS(make_system("saddle(1,1"), ConfigError);
  CHECK_THROWS_AS(make_system("lorenz(1,2)"), ConfigError);
  CHECK_THROWS_AS(make_system("linear(1,2,3)"), ConfigError);  // no contraction

  SystemSpec lin = make_system("linear(1,0.5,-2)");
  CHECK(lin.ds == 1);
  Mat j(3, 3);
  lin.jac(Vec(Vec::Zero(3)), j);
  CHECK(j(0, 0) == 1.0);
  CHECK(j(1, 1) == 0.5);
  CHECK(j(2, 2) == -2.0);
}

TEST_CASE("registry: every builtin passes spec validation") {
  for (const std::string& name : builtin_systems()) {
    SystemSpec sys = make_system(name);
    CHECK_NOTHROW(validate_system(sys));
  }
}

TEST_CASE("lorenz equilibria: origin and the two wings") {
  SystemSpec sys = make_system("lorenz");
  REQUIRE(sys.equilibria.size() == 3);
  const double w = std::sqrt(8.0 / 3.0 * 27.0);
  CHECK((sys.equilibria[1] - vec3(w, w, 27)).norm() < 1e-12);
  CHECK((sys.equilibria[2] - vec3(-w, -w, 27)).norm() < 1e-12);
}

TEST_CASE("custom system: polynomial JSON definition round trip") {
  // Lorenz written out as monomials; must agree with the builtin.
  const std::string text = R"({
    "name": "lorenz_poly",
    "dim": 3, "ds": 1, "dcu": 2,
    "rhs": [
      [{"c": -10.0, "p": [1,0,0]}, {"c": 10.0, "p": [0,1,0]}],
      [{"c": 28.0, "p": [1,0,0]}, {"c": -1.0, "p": [0,1,0]}, {"c": -1.0, "p": [1,0,1]}],
      [{"c": 1.0, "p": [1,1,0]}, {"c": -2.6666666666666665, "p": [0,0,1]}]
    ],
    "equilibria": [[0,0,0]],
    "box": {"lo": [-45,-45,-10], "hi": [45,45,85]},
    "lip_bound": 110.0
  })";
  SystemSpec poly = load_system_json(text);
  SystemSpec ref = make_system("lorenz");
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-10.0, 10.0);
  Mat jp(3, 3), jr(3, 3);
  for (int k = 0; k < 20; ++k) {
    Vec x = vec3(u(rng), u(rng), u(rng));
    CHECK((eval_at(poly, x) - eval_at(ref, x)).norm() < 1e-12);
    poly.jac(x, jp);
    ref.jac(x, jr);
    CHECK((jp - jr).norm() < 1e-12);
  }

  CHECK_THROWS_AS(load_system_json(R"({"dim": 3})"), ConfigError);
  CHECK_THROWS_AS(load_system_json("not json at all"), ConfigError);
  const std::string unknown_key = R"({
    "dim": 3, "ds": 1, "dcu": 2, "rhs": [[],[],[]],
    "box": {"lo": [-1,-1,-1], "hi": [1,1,1]},
    "lip_bound": 1.0, "surprise": true
  })";
  CHECK_THROWS_AS(load_system_json(unknown_key), ConfigError);
}

TEST_CASE("validate_system: catches a wrong Jacobian and a fake equilibrium") {
  SystemSpec sys = make_system("lorenz");
  sys.jac = [](const Vec&, Mat& out) { out.setZero(); };
  CHECK_THROWS_AS(validate_system(sys), PreconditionError);

  SystemSpec sys2 = make_system("lorenz");
  sys2.equilibria.push_back(vec3(1, 2, 3));
  CHECK_THROWS_AS(validate_system(sys2), PreconditionError);

  SystemSpec sys3 = make_system("lorenz");
  sys3.lip_bound = 0.5;
  CHECK_THROWS_AS(validate_system(sys3), PreconditionError);
}

TEST_CASE("sample_orbit: stride sampling with field magnitude") {
  SystemSpec sys = make_system("constant");
  auto rows = sample_orbit(sys, vec3(0, 0, 0), 1.0, 0.25, kCfg);
  REQUIRE(rows.size() == 5);
  CHECK(rows[0].t == 0.0);
  CHECK(rows[4].t == doctest::Approx(1.0));
  CHECK(rows[2].x[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(rows[3].gnorm == doctest::Approx(1.0));
}
