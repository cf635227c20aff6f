#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <memory>
#include <random>
#include <sstream>

#include "flowlab/flow.hpp"
#include "json.hpp"

namespace flowlab {

namespace {

using nlohmann::json;

std::vector<double> parse_params(const std::string& spec, std::string& base) {
  const auto open = spec.find('(');
  if (open == std::string::npos) {
    base = spec;
    return {};
  }
  if (spec.back() != ')') {
    throw ConfigError("system spec '" + spec + "': unbalanced parentheses");
  }
  base = spec.substr(0, open);
  std::vector<double> params;
  std::string body = spec.substr(open + 1, spec.size() - open - 2);
  std::istringstream is(body);
  std::string tok;
  while (std::getline(is, tok, ',')) {
    size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(tok, &used);
    } catch (const std::exception&) {
      throw ConfigError("system spec '" + spec + "': bad parameter '" + tok + "'");
    }
    while (used < tok.size() && std::isspace(static_cast<unsigned char>(tok[used]))) ++used;
    if (used != tok.size()) {
      throw ConfigError("system spec '" + spec + "': bad parameter '" + tok + "'");
    }
    params.push_back(v);
  }
  if (params.empty()) {
    throw ConfigError("system spec '" + spec + "': empty parameter list");
  }
  return params;
}

double spectral_norm(const Mat& a) {
  Eigen::JacobiSVD<Mat> svd(a);
  return svd.singularValues()(0);
}

SystemSpec make_constant() {
  SystemSpec s;
  s.name = "constant";
  s.dim = 3;
  s.ds = 1;
  s.dcu = 2;
  s.eval = [](const Vec&, Vec& out) {
    out.setZero();
    out[0] = 1.0;
  };
  s.jac = [](const Vec&, Mat& out) { out.setZero(); };
  s.box = Box::cube(3, -1000.0, 1000.0);
  s.trap = [b = s.box](const Vec& x) { return b.contains(x); };
  s.lip_bound = 1e-9;  // field is constant; any positive bound is valid
  return s;
}

// Lorenz-family field for general positive (sigma, rho, beta).
// Trapping region: V = x^2 + y^2 + (z - rho - sigma)^2 decreases outside the
// ellipsoid E: sigma x^2 + y^2 + beta (z - m)^2 <= beta m^2, m = (rho+sigma)/2,
// so any sublevel set of V containing E is positively invariant. We bound
// max_E V crudely by evaluating V on E's axis-aligned bounding box.
SystemSpec make_lorenz(double sigma, double rho, double beta,
                       const std::string& name) {
  if (!(sigma > 0.0) || !(rho > 0.0) || !(beta > 0.0)) {
    throw ConfigError("lorenz: parameters must be positive");
  }
  SystemSpec s;
  s.name = name;
  s.dim = 3;
  s.ds = 1;
  s.dcu = 2;
  s.eval = [sigma, rho, beta](const Vec& x, Vec& out) {
    out[0] = sigma * (x[1] - x[0]);
    out[1] = x[0] * (rho - x[2]) - x[1];
    out[2] = x[0] * x[1] - beta * x[2];
  };
  s.jac = [sigma, rho, beta](const Vec& x, Mat& out) {
    out(0, 0) = -sigma; out(0, 1) = sigma;  out(0, 2) = 0.0;
    out(1, 0) = rho - x[2]; out(1, 1) = -1.0; out(1, 2) = -x[0];
    out(2, 0) = x[1]; out(2, 1) = x[0]; out(2, 2) = -beta;
  };

  const double m = 0.5 * (rho + sigma);
  const double zc = rho + sigma;
  const double vbb = m * m * (beta / sigma + beta + 4.0);
  const double c = 1.05 * vbb;
  const double rad = std::sqrt(c) * 1.02;
  s.trap = [zc, c](const Vec& x) {
    const double dz = x[2] - zc;
    return x[0] * x[0] + x[1] * x[1] + dz * dz <= c;
  };
  s.box.lo = Vec(3);
  s.box.hi = Vec(3);
  s.box.lo << -rad, -rad, zc - rad;
  s.box.hi << rad, rad, zc + rad;

  s.equilibria.push_back(Vec::Zero(3));
  if (beta * (rho - 1.0) > 0.0) {
    const double w = std::sqrt(beta * (rho - 1.0));
    Vec cp(3), cm(3);
    cp << w, w, rho - 1.0;
    cm << -w, -w, rho - 1.0;
    s.equilibria.push_back(cp);
    s.equilibria.push_back(cm);
  }

  // Frobenius bound on DG over the box dominates the spectral norm.
  const double xm = rad, ym = rad;
  const double zdev = std::max(std::abs(rho - s.box.lo[2]), std::abs(s.box.hi[2] - rho));
  s.lip_bound = std::sqrt(2.0 * sigma * sigma + zdev * zdev + 1.0 +
                          2.0 * xm * xm + ym * ym + beta * beta);
  return s;
}

SystemSpec make_bistable() {
  SystemSpec s;
  s.name = "bistable";
  s.dim = 3;
  s.ds = 1;
  s.dcu = 2;
  s.eval = [](const Vec& x, Vec& out) {
    out[0] = x[0] - x[0] * x[0] * x[0];
    out[1] = -x[1];
    out[2] = -x[2];
  };
  s.jac = [](const Vec& x, Mat& out) {
    out.setZero();
    out(0, 0) = 1.0 - 3.0 * x[0] * x[0];
    out(1, 1) = -1.0;
    out(2, 2) = -1.0;
  };
  // The box is offset so the equilibria stay strictly inside histogram
  // cells at common even resolutions (0 and +-1 must not be cell walls).
  s.box = Box::cube(3, -2.9, 3.1);
  s.trap = [b = s.box](const Vec& x) { return b.contains(x); };
  Vec p = Vec::Zero(3), q = Vec::Zero(3);
  p[0] = 1.0;
  q[0] = -1.0;
  s.equilibria = {Vec::Zero(3), p, q};
  s.lip_bound = 28.0;  // sup |1 - 3x^2| over the box, plus slack
  return s;
}

SystemSpec make_hopf() {
  SystemSpec s;
  s.name = "hopf";
  s.dim = 3;
  s.ds = 1;
  s.dcu = 2;
  const double w = 1.0;
  s.eval = [w](const Vec& x, Vec& out) {
    const double r2 = x[0] * x[0] + x[1] * x[1];
    out[0] = x[0] * (1.0 - r2) - w * x[1];
    out[1] = x[1] * (1.0 - r2) + w * x[0];
    out[2] = -x[2];
  };
  s.jac = [w](const Vec& x, Mat& out) {
    const double r2 = x[0] * x[0] + x[1] * x[1];
    out(0, 0) = 1.0 - r2 - 2.0 * x[0] * x[0];
    out(0, 1) = -2.0 * x[0] * x[1] - w;
    out(0, 2) = 0.0;
    out(1, 0) = -2.0 * x[0] * x[1] + w;
    out(1, 1) = 1.0 - r2 - 2.0 * x[1] * x[1];
    out(1, 2) = 0.0;
    out(2, 0) = 0.0;
    out(2, 1) = 0.0;
    out(2, 2) = -1.0;
  };
  s.box = Box::cube(3, -2.5, 2.5);
  s.trap = [b = s.box](const Vec& x) { return b.contains(x); };
  s.equilibria = {Vec::Zero(3)};
  s.lip_bound = 42.0;  // Frobenius bound of DG at the box corners
  return s;
}

}  // namespace

SystemSpec make_linear(const std::string& name, const Mat& a, int ds,
                       const Box& box) {
  const int m = static_cast<int>(a.rows());
  if (a.cols() != m) throw ConfigError("make_linear: matrix must be square");
  if (ds < 1 || m - ds < 2) {
    throw ConfigError(
        "make_linear: need ds >= 1 and dcu >= 2 (declared splitting)");
  }
  SystemSpec s;
  s.name = name;
  s.dim = m;
  s.ds = ds;
  s.dcu = m - ds;
  s.eval = [a](const Vec& x, Vec& out) { out.noalias() = a * x; };
  s.jac = [a](const Vec&, Mat& out) { out = a; };
  s.box = box;
  s.trap = [box](const Vec& x) { return box.contains(x); };
  // The origin is always an equilibrium; singular A has a whole kernel of
  // them, which stays unlisted (the list is not required to be exhaustive).
  s.equilibria = {Vec::Zero(m)};
  s.lip_bound = std::max(spectral_norm(a), 1e-9);
  return s;
}

SystemSpec make_system(const std::string& spec) {
  std::string base;
  std::vector<double> params = parse_params(spec, base);

  if (base == "constant") {
    if (!params.empty()) throw ConfigError("constant takes no parameters");
    return make_constant();
  }
  if (base == "lorenz") {
    if (params.empty()) return make_lorenz(10.0, 28.0, 8.0 / 3.0, "lorenz");
    if (params.size() != 3) throw ConfigError("lorenz(sigma,rho,beta) takes 3 parameters");
    return make_lorenz(params[0], params[1], params[2], spec);
  }
  if (base == "lorenz_contracting") {
    // Same family, parameters with a contracting saddle at the origin
    // (unstable eigenvalue (-(s+1)+sqrt((s+1)^2+4s(r-1)))/2 < beta).
    if (!params.empty()) throw ConfigError("lorenz_contracting takes no parameters");
    return make_lorenz(10.0, 2.5, 8.0 / 3.0, "lorenz_contracting");
  }
  if (base == "saddle") {
    std::vector<double> p = params.empty() ? std::vector<double>{1.0, 1.0, 2.0} : params;
    if (p.size() != 3) throw ConfigError("saddle(lu,ls,lss) takes 3 parameters");
    if (!(p[0] > 0.0) || !(p[1] > 0.0) || !(p[2] > 0.0)) {
      throw ConfigError("saddle rates must be positive");
    }
    Mat a = Mat::Zero(3, 3);
    a(0, 0) = p[0];
    a(1, 1) = -p[1];
    a(2, 2) = -p[2];
    return make_linear(spec, a, 1, Box::cube(3, -50.0, 50.0));
  }
  if (base == "linear") {
    // Diagonal field; declared stable dimension = number of negative rates.
    if (params.empty()) params = {1.0, 0.5, -2.0};
    const int m = static_cast<int>(params.size());
    if (m < 3) throw ConfigError("linear(...) needs at least 3 rates");
    Mat a = Mat::Zero(m, m);
    int neg = 0;
    std::vector<double> sorted = params;
    std::sort(sorted.begin(), sorted.end());
    for (int i = 0; i < m; ++i) {
      // Most negative rates go last so the declared E^s is the trailing block.
      a(i, i) = sorted[m - 1 - i];
      if (params[static_cast<size_t>(i)] < 0.0) ++neg;
    }
    if (neg < 1 || m - neg < 2) {
      throw ConfigError("linear(...): need >= 1 negative and >= 2 remaining rates");
    }
    return make_linear(spec, a, neg, Box::cube(m, -100.0, 100.0));
  }
  if (base == "shear") {
    if (!params.empty()) throw ConfigError("shear takes no parameters");
    Mat a = Mat::Zero(3, 3);
    a(0, 1) = 1.0;
    a(2, 2) = -1.0;
    return make_linear("shear", a, 1, Box::cube(3, -100.0, 100.0));
  }
  if (base == "bistable") {
    if (!params.empty()) throw ConfigError("bistable takes no parameters");
    return make_bistable();
  }
  if (base == "hopf") {
    if (!params.empty()) throw ConfigError("hopf takes no parameters");
    return make_hopf();
  }
  throw ConfigError("unknown system '" + spec + "'");
}

std::vector<std::string> builtin_systems() {
  return {"constant", "saddle",   "linear", "shear",
          "lorenz",   "lorenz_contracting", "bistable", "hopf"};
}

namespace {

struct Monomial {
  double c;
  std::vector<int> p;
};
using Poly = std::vector<Monomial>;

double eval_monomial(const Monomial& m, const Vec& x) {
  double v = m.c;
  for (size_t i = 0; i < m.p.size(); ++i) {
    for (int k = 0; k < m.p[i]; ++k) v *= x[static_cast<int>(i)];
  }
  return v;
}

double eval_monomial_deriv(const Monomial& m, const Vec& x, int wrt) {
  if (m.p[static_cast<size_t>(wrt)] == 0) return 0.0;
  double v = m.c * m.p[static_cast<size_t>(wrt)];
  for (size_t i = 0; i < m.p.size(); ++i) {
    int e = m.p[i];
    if (static_cast<int>(i) == wrt) --e;
    for (int k = 0; k < e; ++k) v *= x[static_cast<int>(i)];
  }
  return v;
}

void reject_unknown_keys(const json& j, std::initializer_list<const char*> allowed,
                         const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : allowed) {
      if (it.key() == k) { ok = true; break; }
    }
    if (!ok) throw ConfigError("system definition: unknown key '" + it.key() + "' in " + where);
  }
}

}  // namespace

SystemSpec load_system_json(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("system definition: bad JSON: ") + e.what());
  }
  reject_unknown_keys(j, {"name", "dim", "ds", "dcu", "rhs", "equilibria", "box", "lip_bound"},
                      "top level");
  for (const char* req : {"dim", "ds", "dcu", "rhs", "box", "lip_bound"}) {
    if (!j.contains(req)) throw ConfigError(std::string("system definition: missing key '") + req + "'");
  }

  SystemSpec s;
  s.name = j.value("name", std::string("custom"));
  s.dim = j.at("dim").get<int>();
  s.ds = j.at("ds").get<int>();
  s.dcu = j.at("dcu").get<int>();
  if (s.dim < 3 || s.ds < 1 || s.dcu < 2 || s.ds + s.dcu != s.dim) {
    throw ConfigError("system definition: need dim >= 3, ds >= 1, dcu >= 2, ds + dcu == dim");
  }

  auto polys = std::make_shared<std::vector<Poly>>();
  const json& rhs = j.at("rhs");
  if (!rhs.is_array() || static_cast<int>(rhs.size()) != s.dim) {
    throw ConfigError("system definition: rhs must list one polynomial per coordinate");
  }
  for (const json& coord : rhs) {
    Poly poly;
    for (const json& mono : coord) {
      reject_unknown_keys(mono, {"c", "p"}, "rhs monomial");
      Monomial m;
      m.c = mono.at("c").get<double>();
      m.p = mono.at("p").get<std::vector<int>>();
      if (static_cast<int>(m.p.size()) != s.dim) {
        throw ConfigError("system definition: monomial exponent list length != dim");
      }
      for (int e : m.p) {
        if (e < 0) throw ConfigError("system definition: negative exponent");
      }
      poly.push_back(std::move(m));
    }
    polys->push_back(std::move(poly));
  }

  const json& jb = j.at("box");
  reject_unknown_keys(jb, {"lo", "hi"}, "box");
  auto lo = jb.at("lo").get<std::vector<double>>();
  auto hi = jb.at("hi").get<std::vector<double>>();
  if (static_cast<int>(lo.size()) != s.dim || static_cast<int>(hi.size()) != s.dim) {
    throw ConfigError("system definition: box dimensions mismatch");
  }
  s.box.lo = Eigen::Map<const Vec>(lo.data(), s.dim);
  s.box.hi = Eigen::Map<const Vec>(hi.data(), s.dim);
  for (int i = 0; i < s.dim; ++i) {
    if (!(s.box.lo[i] < s.box.hi[i])) {
      throw ConfigError("system definition: box lo must be < hi componentwise");
    }
  }

  if (j.contains("equilibria")) {
    for (const json& je : j.at("equilibria")) {
      auto v = je.get<std::vector<double>>();
      if (static_cast<int>(v.size()) != s.dim) {
        throw ConfigError("system definition: equilibrium dimension mismatch");
      }
      s.equilibria.push_back(Eigen::Map<const Vec>(v.data(), s.dim));
    }
  }

  s.lip_bound = j.at("lip_bound").get<double>();
  if (!(s.lip_bound > 0.0)) {
    throw ConfigError("system definition: lip_bound must be positive");
  }

  const int dim = s.dim;
  s.eval = [polys, dim](const Vec& x, Vec& out) {
    for (int i = 0; i < dim; ++i) {
      double v = 0.0;
      for (const Monomial& m : (*polys)[static_cast<size_t>(i)]) {
        v += eval_monomial(m, x);
      }
      out[i] = v;
    }
  };
  s.jac = [polys, dim](const Vec& x, Mat& out) {
    for (int i = 0; i < dim; ++i) {
      for (int k = 0; k < dim; ++k) {
        double v = 0.0;
        for (const Monomial& m : (*polys)[static_cast<size_t>(i)]) {
          v += eval_monomial_deriv(m, x, k);
        }
        out(i, k) = v;
      }
    }
  };
  s.trap = [b = s.box](const Vec& x) { return b.contains(x); };

  validate_system(s);
  return s;
}

SystemSpec load_system_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open system definition file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return load_system_json(ss.str());
}

void validate_system(const SystemSpec& sys, std::uint64_t seed, int samples) {
  if (sys.dim < 3 || sys.ds < 1 || sys.dcu < 2 || sys.ds + sys.dcu != sys.dim) {
    throw PreconditionError(sys.name + ": bad declared dimensions");
  }
  if (!(sys.lip_bound > 0.0)) {
    throw PreconditionError(sys.name + ": lip_bound must be positive");
  }

  Vec g(sys.dim);
  for (size_t i = 0; i < sys.equilibria.size(); ++i) {
    sys.eval(sys.equilibria[i], g);
    if (g.norm() >= 1e-10) {
      std::ostringstream os;
      os << sys.name << ": listed equilibrium " << i << " has |G| = " << g.norm();
      throw PreconditionError(os.str());
    }
  }

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  auto draw = [&]() {
    Vec x(sys.dim);
    for (int i = 0; i < sys.dim; ++i) {
      x[i] = sys.box.lo[i] + u01(rng) * (sys.box.hi[i] - sys.box.lo[i]);
    }
    return x;
  };

  Vec gx(sys.dim), gy(sys.dim);
  for (int k = 0; k < samples; ++k) {
    Vec x = draw(), y = draw();
    sys.eval(x, gx);
    sys.eval(y, gy);
    const double lhs = (gx - gy).norm();
    const double rhs = sys.lip_bound * (x - y).norm() * (1.0 + 1e-6);
    if (lhs > rhs) {
      std::ostringstream os;
      os << sys.name << ": Lipschitz bound violated, |G(x)-G(y)| = " << lhs
         << " > " << rhs;
      throw PreconditionError(os.str());
    }
  }

  Mat j(sys.dim, sys.dim), jfd(sys.dim, sys.dim);
  Vec xp(sys.dim), xm(sys.dim);
  for (int k = 0; k < samples / 4 + 1; ++k) {
    Vec x = draw();
    sys.jac(x, j);
    for (int c = 0; c < sys.dim; ++c) {
      const double h = 6e-6 * std::max(1.0, std::abs(x[c]));
      xp = x; xm = x;
      xp[c] += h;
      xm[c] -= h;
      sys.eval(xp, gx);
      sys.eval(xm, gy);
      jfd.col(c) = (gx - gy) / (2.0 * h);
    }
    const double rel = (jfd - j).norm() / std::max(1.0, j.norm());
    if (rel >= 1e-5) {
      std::ostringstream os;
      os << sys.name << ": Jacobian does not match central differences, rel = " << rel;
      throw PreconditionError(os.str());
    }
  }
}

}  // namespace flowlab
