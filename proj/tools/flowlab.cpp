// Batch front-end over the flowlab library: single-orbit artifacts
// (simulate, splitting, pliss), ensemble verdicts (criteria), the empirical
// measure pipeline (srb), and report summarization (report). Every artifact
// embeds the tool version and a hash of the effective configuration; equal
// configurations produce byte-identical outputs regardless of --threads.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "flowlab/flow.hpp"
#include "flowlab/io.hpp"
#include "flowlab/lpf.hpp"
#include "flowlab/pliss.hpp"
#include "flowlab/srb.hpp"

namespace {

using namespace flowlab;

constexpr int kExitOk = 0;
constexpr int kExitFail = 1;    // a criterion reported FAIL; the run is valid
constexpr int kExitUsage = 2;   // configuration or usage error
constexpr int kExitHard = 3;    // numerical hard error

nlohmann::json prov_json(const io::Provenance& prov) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "0x%016llx",
                static_cast<unsigned long long>(prov.config_hash));
  return nlohmann::json{{"tool_version", prov.tool_version},
                        {"config_hash", buf}};
}

SystemSpec resolve_system(const std::string& name) {
  // A name that points at a readable file is a custom system definition.
  std::error_code ec;
  if (std::filesystem::is_regular_file(name, ec)) {
    std::ifstream in(name);
    std::stringstream buf;
    buf << in.rdbuf();
    return load_system_json(buf.str());
  }
  try {
    return make_system(name);
  } catch (const ConfigError& e) {
    std::string names;
    for (const std::string& s : builtin_systems()) names += " " + s;
    throw ConfigError(std::string(e.what()) + "; registry:" + names);
  }
}

Vec start_point(const SystemSpec& sys, const io::RunConfig& cfg) {
  if (cfg.x0.empty()) {
    return 0.5 * (sys.box.lo + sys.box.hi);
  }
  if (static_cast<int>(cfg.x0.size()) != sys.dim) {
    throw ConfigError("x0 must have " + std::to_string(sys.dim) +
                      " coordinates for " + sys.name);
  }
  Vec x(sys.dim);
  for (int i = 0; i < sys.dim; ++i) x[i] = cfg.x0[i];
  return x;
}

std::string out_path(const io::RunConfig& cfg, const std::string& name) {
  return (std::filesystem::path(cfg.outdir) / name).string();
}

void emit(const io::RunConfig& cfg, const std::string& name,
          const std::string& content) {
  const std::string path = out_path(cfg, name);
  io::write_file(path, content);
  std::cout << "wrote " << path << "\n";
}

int resolve_threads(int requested) {
  if (requested > 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

int cmd_simulate(const io::RunConfig& cfg, const io::Provenance& prov) {
  const SystemSpec sys = resolve_system(cfg.system);
  IntegratorConfig icfg;
  icfg.step = cfg.step;
  icfg.validate();
  std::ostringstream os;
  io::write_trajectory_csv(os, sys, start_point(sys, cfg), cfg.T,
                           cfg.sample_stride, icfg, prov);
  emit(cfg, "trajectory.csv", os.str());
  return kExitOk;
}

int cmd_splitting(const io::RunConfig& cfg, const io::Provenance& prov,
                  bool seed_given) {
  const SystemSpec sys = resolve_system(cfg.system);
  IntegratorConfig icfg;
  icfg.step = cfg.step;
  icfg.validate();
  Vec x = start_point(sys, cfg);
  if (cfg.burn_in > 0.0) x = advance(sys, x, cfg.burn_in, icfg);
  const SplittingEstimate est =
      seed_given
          ? estimate_splitting(sys, x, cfg.warm, cfg.warm, icfg, cfg.seed)
          : estimate_splitting(sys, x, cfg.warm, cfg.warm, icfg);
  std::ostringstream os;
  io::write_splitting_json(os, sys.name, est, prov);
  emit(cfg, "splitting.json", os.str());
  std::cout << "angle_gap " << io::fmt(est.angle_gap) << " residual "
            << io::fmt(est.residual) << "\n";
  return kExitOk;
}

int cmd_pliss(const io::RunConfig& cfg, const io::Provenance& prov,
              bool seed_given) {
  const SystemSpec sys = resolve_system(cfg.system);
  IntegratorConfig icfg;
  icfg.step = cfg.step;
  icfg.validate();
  Vec x = start_point(sys, cfg);
  if (cfg.burn_in > 0.0) x = advance(sys, x, cfg.burn_in, icfg);
  TraceOptions opts;
  if (seed_given) opts.seed = cfg.seed;
  const CocycleTrace trace = cocycle_trace(sys, x, cfg.n, cfg.delta, icfg, opts);

  HyperbolicTimeConfig hc;
  hc.c0 = cfg.c0;
  hc.delta0 = cfg.delta;
  hc.lip_bound = sys.lip_bound;
  hc.kappa_min = cfg.kappa_min;
  const HyperbolicTimes ht = hyperbolic_times(trace, hc);

  std::ostringstream ts;
  io::write_trace_csv(ts, trace, prov);
  emit(cfg, "trace.csv", ts.str());
  std::ostringstream js;
  io::write_hyperbolic_json(js, ht, prov);
  emit(cfg, "hyperbolic.json", js.str());
  std::ostringstream cs;
  io::write_hyperbolic_csv(cs, ht, prov);
  emit(cfg, "hyperbolic.csv", cs.str());

  if (!ht.reason.empty()) {
    std::cout << "no hyperbolic times: " << ht.reason << "\n";
  } else {
    std::cout << ht.indices.size() << " hyperbolic times of " << ht.N
              << " (density " << io::fmt(ht.density) << ")\n";
  }
  return kExitOk;
}

int report_exit_code(const CriterionReport& rep) {
  if (rep.excluded > 0) return kExitHard;
  for (const OrbitOutcome& o : rep.orbits) {
    if (o.error.empty() && o.verdict == Verdict::kFail) return kExitFail;
  }
  return kExitOk;
}

void print_report(const CriterionReport& rep) {
  int pass = 0, fail = 0, inconclusive = 0;
  for (const OrbitOutcome& o : rep.orbits) {
    if (!o.error.empty()) continue;
    if (o.verdict == Verdict::kPass) ++pass;
    else if (o.verdict == Verdict::kFail) ++fail;
    else ++inconclusive;
  }
  std::cout << rep.criterion << " on " << rep.system << ": pass_fraction "
            << io::fmt(rep.pass_fraction) << " (" << pass << " PASS, " << fail
            << " FAIL, " << inconclusive << " INCONCLUSIVE, " << rep.excluded
            << " excluded)\n";
}

int cmd_criteria(const io::RunConfig& cfg, const io::Provenance& prov,
                 bool seed_given) {
  const SystemSpec sys = resolve_system(cfg.system);
  IntegratorConfig icfg;
  icfg.step = cfg.step;
  icfg.validate();

  if (cfg.which == "identity") {
    Vec x = start_point(sys, cfg);
    if (cfg.burn_in > 0.0) x = advance(sys, x, cfg.burn_in, icfg);
    TraceOptions opts;
    if (seed_given) opts.seed = cfg.seed;
    const CocycleTrace trace =
        cocycle_trace(sys, x, cfg.n, cfg.delta, icfg, opts);
    const double residual = det_identity_check(trace);
    nlohmann::json j{{"criterion", "identity"},
                     {"system", sys.name},
                     {"n", cfg.n},
                     {"residual", residual},
                     {"provenance", prov_json(prov)}};
    emit(cfg, "identity.json", j.dump(2) + "\n");
    std::cout << "identity residual " << io::fmt(residual) << "\n";
    return kExitOk;
  }

  if (!seed_given) {
    throw ConfigError("criteria: --seed is required for ensemble runs");
  }
  EnsembleSpec ens;
  ens.system = cfg.system;
  ens.count = cfg.count;
  ens.seed = cfg.seed;
  ens.burn_in = cfg.burn_in;
  const int threads = resolve_threads(cfg.threads);

  CriterionReport rep;
  if (cfg.which == "nue") {
    rep = nue_test(ens, cfg.c0, cfg.n, icfg, threads);
  } else if (cfg.which == "nueT") {
    rep = nue_T_test(ens, cfg.c0, cfg.T, cfg.n, icfg, threads);
  } else if (cfg.which == "sr") {
    rep = sr_test(ens, cfg.delta, cfg.eps, cfg.T, icfg, threads);
  } else if (cfg.which == "ase") {
    rep = ase_test(ens, cfg.c_star, cfg.T, cfg.plane_samples, icfg, threads);
  } else {
    throw ConfigError("criteria: unknown --which '" + cfg.which +
                      "' (nue|nueT|sr|ase|identity)");
  }

  std::ostringstream js;
  io::write_report_json(js, rep, prov);
  emit(cfg, "report.json", js.str());
  std::ostringstream cs;
  io::write_curves_csv(cs, rep, prov);
  emit(cfg, "curves.csv", cs.str());
  print_report(rep);
  return report_exit_code(rep);
}

int cmd_srb(const io::RunConfig& cfg, const io::Provenance& prov,
            bool seed_given) {
  if (!seed_given) {
    throw ConfigError("srb: --seed is required for ensemble runs");
  }
  const SystemSpec sys = resolve_system(cfg.system);
  IntegratorConfig icfg;
  icfg.step = cfg.step;
  icfg.validate();

  EnsembleSpec ens;
  ens.system = cfg.system;
  ens.count = cfg.count;
  ens.seed = cfg.seed;
  ens.burn_in = cfg.burn_in;
  const std::vector<Vec> xs = sample_ensemble(sys, ens);

  std::vector<EmpiricalMeasure> measures;
  int excluded = 0;
  for (const Vec& x0 : xs) {
    try {
      const Vec x = advance(sys, x0, cfg.burn_in, icfg);
      measures.push_back(
          empirical_measure(sys, x, cfg.T, cfg.grid_res, icfg));
    } catch (const FlowError&) {
      ++excluded;
    }
  }
  if (measures.empty()) {
    throw FlowError("srb: every orbit failed during measure construction");
  }

  const Clustering cl = cluster_measures(measures, cfg.cluster_radius);
  std::vector<std::string> files;
  for (size_t k = 0; k < cl.representatives.size(); ++k) {
    const std::string name = "measure_" + std::to_string(k) + ".csv";
    std::ostringstream ms;
    io::write_measure_csv(ms, cl.representatives[k], sys.name, prov);
    emit(cfg, name, ms.str());
    files.push_back(name);
    std::ostringstream ps;
    io::write_measure_plot_csv(ps, cl.representatives[k], 0, 2, prov);
    emit(cfg, "measure_" + std::to_string(k) + "_xz.csv", ps.str());
  }

  EnsembleSpec fresh;
  fresh.system = cfg.system;
  fresh.count = cfg.basin_count;
  fresh.seed = cfg.seed + 1;  // fresh ICs, disjoint from the measure ensemble
  fresh.burn_in = cfg.burn_in;
  const BasinCoverage cov =
      basin_coverage(fresh, cl.representatives, default_observable_panel(sys.box),
                     cfg.basin_tol, cfg.basin_T, icfg,
                     resolve_threads(cfg.threads));

  nlohmann::json j;
  j["system"] = sys.name;
  j["grid_res"] = cfg.grid_res;
  j["cluster_radius"] = cfg.cluster_radius;
  j["cluster_count"] = cl.clusters.size();
  j["clusters"] = cl.clusters;
  j["measure_files"] = files;
  j["excluded_orbits"] = excluded;
  j["basin"] = nlohmann::json{{"fraction", cov.fraction},
                              {"unassigned", cov.unassigned},
                              {"excluded", cov.excluded},
                              {"tol", cfg.basin_tol}};
  // The particle surrogate keeps every disk sample; no disjoint ball family
  // is extracted, so finite-resolution histograms may overweight overlaps.
  j["notes"] = "pushforward skips ball-family disjointification";
  j["provenance"] = prov_json(prov);
  emit(cfg, "cluster.json", j.dump(2) + "\n");

  std::cout << cl.clusters.size() << " cluster(s); basin coverage";
  for (double f : cov.fraction) std::cout << ' ' << io::fmt(f);
  std::cout << " unassigned " << io::fmt(cov.unassigned) << "\n";
  return kExitOk;
}

int cmd_report(const io::RunConfig& cfg, const io::Provenance& prov) {
  if (cfg.input.empty()) {
    throw ConfigError("report: --input must name a criterion report JSON");
  }
  std::ifstream in(cfg.input);
  if (!in.good()) {
    throw ConfigError("report: cannot read " + cfg.input);
  }
  const CriterionReport rep = io::read_report_json(in);
  std::ostringstream cs;
  io::write_curves_csv(cs, rep, prov);
  emit(cfg, "report_curves.csv", cs.str());
  print_report(rep);
  return kExitOk;
}

std::string prescan_config_path(int argc, char** argv) {
  for (int i = 1; i + 1 < argc; ++i) {
    if (std::string(argv[i]) == "--config") return argv[i + 1];
  }
  return {};
}

}  // namespace

int main(int argc, char** argv) {
  io::RunConfig cfg;
  std::set<std::string> config_keys;
  const std::string config_path = prescan_config_path(argc, argv);
  if (!config_path.empty()) {
    std::ifstream in(config_path);
    if (!in.good()) {
      std::cerr << "error: cannot read config " << config_path << "\n";
      return kExitUsage;
    }
    std::stringstream buf;
    buf << in.rdbuf();
    try {
      io::ConfigParse parsed = io::parse_config(buf.str());
      cfg = parsed.cfg;
      config_keys = parsed.keys;
    } catch (const ConfigError& e) {
      std::cerr << "error: " << e.what() << "\n";
      return kExitUsage;
    }
  }

  CLI::App app{
      "flowlab: numerical checks of sectional expansion, slow recurrence,\n"
      "hyperbolic times, and empirical measures for three-dimensional flows"};
  app.fallthrough();
  std::string config_path_opt;
  app.add_option("--config", config_path_opt,
                 "JSON configuration file; explicit flags override its keys");
  app.add_option("--system", cfg.system,
                 "registry name perhaps with parameters, or a JSON file path");
  app.add_option("--x0", cfg.x0, "start point (default: box center)");
  app.add_option("--step", cfg.step, "integrator step");
  app.add_option("-T,--horizon", cfg.T, "orbit or averaging horizon");
  app.add_option("--burn-in", cfg.burn_in, "settling time before measuring");
  app.add_option("-n,--trace-steps", cfg.n, "cocycle trace length");
  app.add_option("--delta", cfg.delta, "recurrence truncation radius");
  app.add_option("--c0", cfg.c0, "expansion rate threshold");
  app.add_option("--eps", cfg.eps, "slow recurrence threshold");
  app.add_option("--c-star", cfg.c_star, "sectional expansion threshold");
  app.add_option("--kappa-min", cfg.kappa_min, "minimum hyperbolic lead time");
  app.add_option("--plane-samples", cfg.plane_samples,
                 "cu-plane samples when the center bundle has dim > 2");
  app.add_option("--which", cfg.which, "criterion: nue|nueT|sr|ase|identity");
  app.add_option("--count", cfg.count, "ensemble size");
  auto* seed_opt = app.add_option("--seed", cfg.seed,
                                  "ensemble seed (required for criteria/srb)");
  app.add_option("--warm", cfg.warm, "splitting warm-up time");
  app.add_option("--grid-res", cfg.grid_res, "histogram cells per axis");
  app.add_option("--n-max", cfg.n_max, "pushforward iterate cap");
  app.add_option("--disk-radius", cfg.disk_radius, "particle disk radius");
  app.add_option("--disk-count", cfg.disk_count, "particle count target");
  app.add_option("--cluster-radius", cfg.cluster_radius,
                 "L1 radius joining measures into one cluster");
  app.add_option("--basin-tol", cfg.basin_tol,
                 "observable tolerance for basin assignment");
  app.add_option("--basin-count", cfg.basin_count, "basin ensemble size");
  app.add_option("--basin-T", cfg.basin_T, "basin averaging horizon");
  app.add_option("--sample-stride", cfg.sample_stride,
                 "trajectory row thinning");
  app.add_option("--threads", cfg.threads, "worker count (0 = all cores)");
  app.add_option("--outdir", cfg.outdir, "output directory");
  app.add_option("--input", cfg.input, "report: criterion report JSON path");

  CLI::App* sub_simulate = app.add_subcommand("simulate", "write a trajectory CSV");
  CLI::App* sub_splitting =
      app.add_subcommand("splitting", "estimate the stable/center-unstable frames");
  CLI::App* sub_pliss =
      app.add_subcommand("pliss", "trace the flow cocycle and extract hyperbolic times");
  CLI::App* sub_criteria =
      app.add_subcommand("criteria", "run an ensemble criterion and write a report");
  CLI::App* sub_srb =
      app.add_subcommand("srb", "cluster occupation measures and measure basin coverage");
  CLI::App* sub_report =
      app.add_subcommand("report", "summarize a report JSON and emit plot data");
  app.require_subcommand(1);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  if (sub_simulate->parsed()) cfg.command = "simulate";
  else if (sub_splitting->parsed()) cfg.command = "splitting";
  else if (sub_pliss->parsed()) cfg.command = "pliss";
  else if (sub_criteria->parsed()) cfg.command = "criteria";
  else if (sub_srb->parsed()) cfg.command = "srb";
  else if (sub_report->parsed()) cfg.command = "report";

  const bool seed_given =
      seed_opt->count() > 0 || config_keys.count("seed") > 0;

  try {
    io::Provenance prov;
    prov.config_hash = io::config_hash(cfg);
    io::write_file(out_path(cfg, "run_config.json"), io::serialize_config(cfg));

    if (cfg.command == "simulate") return cmd_simulate(cfg, prov);
    if (cfg.command == "splitting") return cmd_splitting(cfg, prov, seed_given);
    if (cfg.command == "pliss") return cmd_pliss(cfg, prov, seed_given);
    if (cfg.command == "criteria") return cmd_criteria(cfg, prov, seed_given);
    if (cfg.command == "srb") return cmd_srb(cfg, prov, seed_given);
    return cmd_report(cfg, prov);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const PreconditionError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const FlowError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kExitHard;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitHard;
  }
}
