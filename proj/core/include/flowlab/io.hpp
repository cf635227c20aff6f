#pragma once

#include <cstdint>
#include <iosfwd>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "flowlab/criteria.hpp"
#include "flowlab/flow.hpp"
#include "flowlab/lpf.hpp"
#include "flowlab/pliss.hpp"
#include "flowlab/srb.hpp"

namespace flowlab::io {

inline constexpr const char* kToolVersion = "0.1.0";

/// Shortest text that parses back to the same double (printf %.17g).
std::string fmt(double v);

/// 64-bit FNV-1a, used to fingerprint configurations in output headers.
std::uint64_t fnv1a(std::string_view s);

// Stamped into every artifact so outputs are traceable to the run that
// produced them. Deliberately contains no timestamps: artifacts from equal
// configurations must be byte-identical.
struct Provenance {
  std::string tool_version = kToolVersion;
  std::uint64_t config_hash = 0;
};

// One flat record configuring every subcommand of the batch tool. Defaults
// are usable for lorenz; the loader rejects unknown keys and the canonical
// form round-trips losslessly.
struct RunConfig {
  std::string command;         // simulate|splitting|pliss|criteria|srb|report
  std::string system = "lorenz";
  std::vector<double> x0;      // empty selects the box center
  double step = 1e-3;
  double T = 10.0;             // orbit or averaging horizon
  double burn_in = 50.0;
  int n = 2000;                // cocycle trace length in time-1 steps
  double delta = 0.01;         // recurrence truncation radius
  double c0 = 0.1;             // expansion rate threshold
  double eps = 0.05;           // slow recurrence threshold
  double c_star = 0.0;         // sectional expansion threshold
  int kappa_min = 1;
  int plane_samples = 2;       // cu-plane samples when dcu > 2
  std::string which = "nue";   // criteria dispatch
  int count = 100;             // ensemble size
  std::uint64_t seed = 0;
  double warm = 20.0;          // splitting warm-up time
  int grid_res = 64;
  int n_max = 200;             // pushforward iterate cap
  double disk_radius = 0.05;
  int disk_count = 1000;
  double cluster_radius = 0.3;
  double basin_tol = 0.05;
  int basin_count = 100;
  double basin_T = 500.0;
  int sample_stride = 1;       // trajectory row thinning
  int threads = 0;             // 0 = hardware concurrency
  std::string outdir = "out";
  std::string input;           // report: path to a criterion report JSON
};

/// Canonical textual form: JSON object, keys sorted, 2-space indent.
std::string serialize_config(const RunConfig& cfg);

struct ConfigParse {
  RunConfig cfg;
  std::set<std::string> keys;  // keys present in the text
};

/// Parses the canonical form. Unknown keys or wrong types are ConfigError.
ConfigParse parse_config(const std::string& text);

/// FNV-1a of the canonical form, independent of input formatting and of the
/// execution-only fields (threads, outdir).
std::uint64_t config_hash(const RunConfig& cfg);

// CSV and JSON emitters. CSV files open with a single `# {json}` comment
// line carrying the metadata, then a column-name row, then data rows with
// '.' as the decimal separator. JSON artifacts embed the same metadata under
// a "provenance" key. All emitters are deterministic.

void write_trajectory_csv(std::ostream& os, const SystemSpec& sys,
                          const Vec& x0, double T, int stride,
                          const IntegratorConfig& cfg, const Provenance& prov);

void write_trace_csv(std::ostream& os, const CocycleTrace& trace,
                     const Provenance& prov);

void write_splitting_json(std::ostream& os, const std::string& system,
                          const SplittingEstimate& est, const Provenance& prov);

void write_hyperbolic_json(std::ostream& os, const HyperbolicTimes& ht,
                           const Provenance& prov);

void write_hyperbolic_csv(std::ostream& os, const HyperbolicTimes& ht,
                          const Provenance& prov);

void write_report_json(std::ostream& os, const CriterionReport& report,
                       const Provenance& prov);

/// Inverse of write_report_json; malformed input is ConfigError.
CriterionReport read_report_json(std::istream& is);

/// Running-average curves, one column per evaluated orbit.
void write_curves_csv(std::ostream& os, const CriterionReport& report,
                      const Provenance& prov);

void write_measure_csv(std::ostream& os, const EmpiricalMeasure& m,
                       const std::string& system, const Provenance& prov);

/// 2-d projection for plotting: cell-center coordinates on the chosen axes
/// and the weight marginalized over all other axes.
void write_measure_plot_csv(std::ostream& os, const EmpiricalMeasure& m,
                            int axis_x, int axis_y, const Provenance& prov);

/// Writes content to path, creating parent directories; failure is ConfigError.
void write_file(const std::string& path, const std::string& content);

}  // namespace flowlab::io
