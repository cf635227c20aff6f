#include "flowlab/io.hpp"

#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <utility>

namespace flowlab::io {

using nlohmann::json;

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

namespace {

std::string hash_hex(std::uint64_t h) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "0x%016llx", static_cast<unsigned long long>(h));
  return buf;
}

json prov_json(const Provenance& prov) {
  return json{{"tool_version", prov.tool_version},
              {"config_hash", hash_hex(prov.config_hash)}};
}

json vec_json(const Vec& v) {
  json a = json::array();
  for (int i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

json mat_cols_json(const Mat& m) {
  json cols = json::array();
  for (int c = 0; c < m.cols(); ++c) cols.push_back(vec_json(m.col(c)));
  return cols;
}

// CSV artifacts start with the metadata as a single comment line.
void put_header(std::ostream& os, const json& meta) {
  os << "# " << meta.dump() << "\n";
}

const char* verdict_name(Verdict v) {
  switch (v) {
    case Verdict::kPass: return "PASS";
    case Verdict::kFail: return "FAIL";
    default: return "INCONCLUSIVE";
  }
}

Verdict verdict_from(const std::string& s) {
  if (s == "PASS") return Verdict::kPass;
  if (s == "FAIL") return Verdict::kFail;
  if (s == "INCONCLUSIVE") return Verdict::kInconclusive;
  throw ConfigError("report: unknown verdict '" + s + "'");
}

}  // namespace

std::string serialize_config(const RunConfig& cfg) {
  json j;
  j["command"] = cfg.command;
  j["system"] = cfg.system;
  j["x0"] = cfg.x0;
  j["step"] = cfg.step;
  j["T"] = cfg.T;
  j["burn_in"] = cfg.burn_in;
  j["n"] = cfg.n;
  j["delta"] = cfg.delta;
  j["c0"] = cfg.c0;
  j["eps"] = cfg.eps;
  j["c_star"] = cfg.c_star;
  j["kappa_min"] = cfg.kappa_min;
  j["plane_samples"] = cfg.plane_samples;
  j["which"] = cfg.which;
  j["count"] = cfg.count;
  j["seed"] = cfg.seed;
  j["warm"] = cfg.warm;
  j["grid_res"] = cfg.grid_res;
  j["n_max"] = cfg.n_max;
  j["disk_radius"] = cfg.disk_radius;
  j["disk_count"] = cfg.disk_count;
  j["cluster_radius"] = cfg.cluster_radius;
  j["basin_tol"] = cfg.basin_tol;
  j["basin_count"] = cfg.basin_count;
  j["basin_T"] = cfg.basin_T;
  j["sample_stride"] = cfg.sample_stride;
  j["threads"] = cfg.threads;
  j["outdir"] = cfg.outdir;
  j["input"] = cfg.input;
  return j.dump(2) + "\n";
}

ConfigParse parse_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: not valid JSON: ") + e.what());
  }
  if (!j.is_object()) {
    throw ConfigError("config: top level must be an object");
  }

  ConfigParse out;
  auto str = [](const json& v, const char* key) {
    if (!v.is_string()) {
      throw ConfigError(std::string("config: '") + key + "' must be a string");
    }
    return v.get<std::string>();
  };
  auto num = [](const json& v, const char* key) {
    if (!v.is_number()) {
      throw ConfigError(std::string("config: '") + key + "' must be a number");
    }
    return v.get<double>();
  };
  auto integer = [](const json& v, const char* key) {
    if (!v.is_number_integer() && !v.is_number_unsigned()) {
      throw ConfigError(std::string("config: '") + key + "' must be an integer");
    }
    return v.get<int>();
  };

  RunConfig& c = out.cfg;
  for (const auto& [key, val] : j.items()) {
    out.keys.insert(key);
    if (key == "command") c.command = str(val, "command");
    else if (key == "system") c.system = str(val, "system");
    else if (key == "x0") {
      if (!val.is_array()) throw ConfigError("config: 'x0' must be an array");
      c.x0.clear();
      for (const json& e : val) c.x0.push_back(num(e, "x0"));
    }
    else if (key == "step") c.step = num(val, "step");
    else if (key == "T") c.T = num(val, "T");
    else if (key == "burn_in") c.burn_in = num(val, "burn_in");
    else if (key == "n") c.n = integer(val, "n");
    else if (key == "delta") c.delta = num(val, "delta");
    else if (key == "c0") c.c0 = num(val, "c0");
    else if (key == "eps") c.eps = num(val, "eps");
    else if (key == "c_star") c.c_star = num(val, "c_star");
    else if (key == "kappa_min") c.kappa_min = integer(val, "kappa_min");
    else if (key == "plane_samples") c.plane_samples = integer(val, "plane_samples");
    else if (key == "which") c.which = str(val, "which");
    else if (key == "count") c.count = integer(val, "count");
    else if (key == "seed") {
      if (!val.is_number_unsigned() &&
          !(val.is_number_integer() && val.get<long long>() >= 0)) {
        throw ConfigError("config: 'seed' must be a nonnegative integer");
      }
      c.seed = val.get<std::uint64_t>();
    }
    else if (key == "warm") c.warm = num(val, "warm");
    else if (key == "grid_res") c.grid_res = integer(val, "grid_res");
    else if (key == "n_max") c.n_max = integer(val, "n_max");
    else if (key == "disk_radius") c.disk_radius = num(val, "disk_radius");
    else if (key == "disk_count") c.disk_count = integer(val, "disk_count");
    else if (key == "cluster_radius") c.cluster_radius = num(val, "cluster_radius");
    else if (key == "basin_tol") c.basin_tol = num(val, "basin_tol");
    else if (key == "basin_count") c.basin_count = integer(val, "basin_count");
    else if (key == "basin_T") c.basin_T = num(val, "basin_T");
    else if (key == "sample_stride") c.sample_stride = integer(val, "sample_stride");
    else if (key == "threads") c.threads = integer(val, "threads");
    else if (key == "outdir") c.outdir = str(val, "outdir");
    else if (key == "input") c.input = str(val, "input");
    else throw ConfigError("config: unknown key '" + key + "'");
  }
  return out;
}

std::uint64_t config_hash(const RunConfig& cfg) {
  // Worker count and output location do not influence results, so they must
  // not influence the fingerprint either.
  RunConfig c = cfg;
  c.threads = 0;
  c.outdir.clear();
  return fnv1a(serialize_config(c));
}

void write_trajectory_csv(std::ostream& os, const SystemSpec& sys,
                          const Vec& x0, double T, int stride,
                          const IntegratorConfig& cfg, const Provenance& prov) {
  if (!(T > 0.0)) throw PreconditionError("trajectory: horizon must be > 0");
  if (stride < 1) throw PreconditionError("trajectory: stride must be >= 1");

  json meta{{"system", sys.name}, {"x0", vec_json(x0)},   {"T", T},
            {"step", cfg.step},   {"stride", stride},     {"provenance", prov_json(prov)}};
  put_header(os, meta);
  os << "t";
  for (int k = 0; k < sys.dim; ++k) os << ",x" << (k + 1);
  os << ",field_norm\n";

  auto row = [&](double t, const Vec& p) {
    os << fmt(t);
    for (int k = 0; k < sys.dim; ++k) os << ',' << fmt(p[k]);
    os << ',' << fmt(eval_at(sys, p).norm()) << "\n";
  };

  Vec y = x0;
  double t = 0.0;
  double remaining = T;
  long index = 0;
  row(0.0, y);
  while (remaining > 1e-12) {
    const double chunk = std::min(1.0, remaining);
    const OrbitGrid grid = orbit_grid(sys, y, chunk, cfg);
    for (size_t i = 0; i + 1 < grid.points.size(); ++i) {
      t += grid.dts[i];
      ++index;
      if (index % stride == 0 || (remaining - chunk <= 1e-12 &&
                                  i + 2 == grid.points.size())) {
        row(t, grid.points[i + 1]);
      }
    }
    y = grid.points.back();
    remaining -= chunk;
  }
}

void write_trace_csv(std::ostream& os, const CocycleTrace& trace,
                     const Provenance& prov) {
  const size_t n = static_cast<size_t>(trace.n);
  if (trace.a.size() != n || trace.logg.size() != n ||
      trace.logdet_cu.size() != n || trace.dist_trunc.size() != n) {
    throw PreconditionError("trace csv: incomplete trace");
  }
  json meta{{"system", trace.system},
            {"x", vec_json(trace.base)},
            {"delta", trace.delta},
            {"step_time", trace.step_time},
            {"cfg", json{{"step", trace.cfg.step},
                         {"renorm_every", trace.cfg.renorm_every}}},
            {"provenance", prov_json(prov)}};
  put_header(os, meta);
  os << "i,a_i,logG_i,logdet_cu_i,dist_trunc_i\n";
  for (size_t i = 1; i <= n; ++i) {
    const double logg_i = (i < n) ? trace.logg[i] : trace.logg_end;
    os << i << ',' << fmt(trace.a[i - 1]) << ',' << fmt(logg_i) << ','
       << fmt(trace.logdet_cu[i - 1]) << ',' << fmt(trace.dist_trunc[i - 1])
       << "\n";
  }
}

void write_splitting_json(std::ostream& os, const std::string& system,
                          const SplittingEstimate& est, const Provenance& prov) {
  json j{{"system", system},
         {"base", vec_json(est.base)},
         {"es", mat_cols_json(est.es)},
         {"ecu", mat_cols_json(est.ecu)},
         {"angle_gap", est.angle_gap},
         {"residual", est.residual},
         {"provenance", prov_json(prov)}};
  os << j.dump(2) << "\n";
}

void write_hyperbolic_json(std::ostream& os, const HyperbolicTimes& ht,
                           const Provenance& prov) {
  json margins = json::array();
  for (const HyperbolicIndexReport& r : ht.reports) margins.push_back(r.hyp_margin);
  json j{{"N", ht.N},
         {"c0", ht.c0},
         {"indices", ht.indices},
         {"margins", margins},
         {"density", ht.density},
         {"provenance", prov_json(prov)}};
  if (!ht.reason.empty()) j["reason"] = ht.reason;
  os << j.dump(2) << "\n";
}

void write_hyperbolic_csv(std::ostream& os, const HyperbolicTimes& ht,
                          const Provenance& prov) {
  json meta{{"N", ht.N},
            {"c0", ht.c0},
            {"density", ht.density},
            {"provenance", prov_json(prov)}};
  put_header(os, meta);
  os << "index,hyp_margin,sr_margin\n";
  for (const HyperbolicIndexReport& r : ht.reports) {
    os << r.index << ',' << fmt(r.hyp_margin) << ',' << fmt(r.sr_margin)
       << "\n";
  }
}

void write_report_json(std::ostream& os, const CriterionReport& report,
                       const Provenance& prov) {
  json per_orbit = json::array();
  for (const OrbitOutcome& o : report.orbits) {
    json e{{"index", o.index}};
    if (!o.error.empty()) {
      e["error"] = o.error;
    } else {
      e["verdict"] = verdict_name(o.verdict);
      e["statistic"] = o.statistic;
      e["curve"] = o.curve;
    }
    per_orbit.push_back(std::move(e));
  }
  json j{{"criterion", report.criterion},
         {"system", report.system},
         {"seed", report.seed},
         {"thresholds", report.thresholds},
         {"curve_dt", report.curve_dt},
         {"pass_fraction", report.pass_fraction},
         {"excluded_count", report.excluded},
         {"per_orbit", std::move(per_orbit)},
         {"provenance", prov_json(prov)}};
  os << j.dump(2) << "\n";
}

CriterionReport read_report_json(std::istream& is) {
  json j;
  try {
    j = json::parse(is);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("report: not valid JSON: ") + e.what());
  }
  CriterionReport r;
  try {
    r.criterion = j.at("criterion").get<std::string>();
    r.system = j.at("system").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.curve_dt = j.at("curve_dt").get<double>();
    r.pass_fraction = j.at("pass_fraction").get<double>();
    r.excluded = j.at("excluded_count").get<int>();
    for (const auto& [key, val] : j.at("thresholds").items()) {
      r.thresholds[key] = val.get<double>();
    }
    for (const json& e : j.at("per_orbit")) {
      OrbitOutcome o;
      o.index = e.at("index").get<int>();
      if (e.contains("error")) {
        o.error = e.at("error").get<std::string>();
      } else {
        o.verdict = verdict_from(e.at("verdict").get<std::string>());
        o.statistic = e.at("statistic").get<double>();
        o.curve = e.at("curve").get<std::vector<double>>();
      }
      r.orbits.push_back(std::move(o));
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("report: malformed: ") + e.what());
  }
  return r;
}

void write_curves_csv(std::ostream& os, const CriterionReport& report,
                      const Provenance& prov) {
  json meta{{"criterion", report.criterion},
            {"system", report.system},
            {"curve_dt", report.curve_dt},
            {"provenance", prov_json(prov)}};
  put_header(os, meta);

  std::vector<const OrbitOutcome*> cols;
  size_t rows = 0;
  for (const OrbitOutcome& o : report.orbits) {
    if (o.error.empty() && !o.curve.empty()) {
      cols.push_back(&o);
      rows = std::max(rows, o.curve.size());
    }
  }
  os << "t";
  for (const OrbitOutcome* o : cols) os << ",orbit_" << o->index;
  os << "\n";
  for (size_t k = 0; k < rows; ++k) {
    os << fmt((static_cast<double>(k) + 1.0) * report.curve_dt);
    for (const OrbitOutcome* o : cols) {
      os << ',';
      if (k < o->curve.size()) os << fmt(o->curve[k]);
    }
    os << "\n";
  }
}

void write_measure_csv(std::ostream& os, const EmpiricalMeasure& m,
                       const std::string& system, const Provenance& prov) {
  json meta{{"grid", json{{"res", m.grid.res},
                          {"lo", vec_json(m.grid.box.lo)},
                          {"hi", vec_json(m.grid.box.hi)}}},
            {"system", system},
            {"sample_count", m.sample_count},
            {"provenance", prov_json(prov)}};
  put_header(os, meta);
  os << "cell,weight\n";
  for (const auto& [cell, w] : m.weights) {
    os << cell << ',' << fmt(w) << "\n";
  }
}

void write_measure_plot_csv(std::ostream& os, const EmpiricalMeasure& m,
                            int axis_x, int axis_y, const Provenance& prov) {
  const int dim = m.grid.box.dim();
  if (axis_x < 0 || axis_x >= dim || axis_y < 0 || axis_y >= dim ||
      axis_x == axis_y) {
    throw PreconditionError("measure plot: invalid axis pair");
  }
  json meta{{"axes", json::array({axis_x, axis_y})},
            {"res", m.grid.res},
            {"provenance", prov_json(prov)}};
  put_header(os, meta);
  os << "x,y,weight\n";

  auto axis_index = [&](long cell, int axis) {
    long idx = cell;
    for (int k = 0; k < axis; ++k) idx /= m.grid.res;
    return idx % m.grid.res;
  };
  auto center = [&](long idx, int axis) {
    const double lo = m.grid.box.lo[axis];
    const double hi = m.grid.box.hi[axis];
    return lo + (static_cast<double>(idx) + 0.5) * (hi - lo) / m.grid.res;
  };
  std::map<std::pair<long, long>, double> marginal;
  for (const auto& [cell, w] : m.weights) {
    marginal[{axis_index(cell, axis_x), axis_index(cell, axis_y)}] += w;
  }
  for (const auto& [xy, w] : marginal) {
    os << fmt(center(xy.first, axis_x)) << ',' << fmt(center(xy.second, axis_y))
       << ',' << fmt(w) << "\n";
  }
}

void write_file(const std::string& path, const std::string& content) {
  const std::filesystem::path p(path);
  std::error_code ec;
  if (p.has_parent_path()) {
    std::filesystem::create_directories(p.parent_path(), ec);
    if (ec) throw ConfigError("cannot create directory " + p.parent_path().string());
  }
  std::ofstream os(p, std::ios::binary);
  os << content;
  if (!os.good()) throw ConfigError("cannot write " + path);
}

}  // namespace flowlab::io
