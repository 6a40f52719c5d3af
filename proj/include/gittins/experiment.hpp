#pragma once

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "gittins/bounds.hpp"
#include "gittins/palm.hpp"
#include "gittins/sim.hpp"

namespace gittins {

/// Everything needed to run one configuration: the simulator config plus the
/// r-grid resolution used when no explicit grid is given.
struct PointConfig {
    std::string label;
    SimConfig sim;
    int r_points = 64;
    /// json text of the same point with the baseline overrides merged in
    std::optional<std::string> baseline_json;
};

struct ExperimentSpec {
    std::string name = "experiment";
    std::string base_json;  // the configuration object without sweep/suite keys
    std::vector<double> rho_sweep;
    std::vector<int> k_sweep;
    std::vector<std::string> policy_sweep;
    std::vector<std::string> suite;
    int replications = 1;
    std::string output_dir = "out";
    std::optional<std::string> baseline_json;  // overrides applied on top of the base
    std::vector<std::string> compare_policies{"fcfs", "lcfs", "random"};
    // heavy-traffic verdict: limit (nan = analytic), final relative tolerance and upper
    // cap at the largest load; with neither set the tolerance is 10%
    double ht_limit = std::numeric_limits<double>::quiet_NaN();
    double ht_final_rel_tol = std::numeric_limits<double>::quiet_NaN();
    double ht_final_max = std::numeric_limits<double>::infinity();
};

Distribution distribution_from_json(const std::string& json_text);
/// Parses a single configuration object (no sweep). Throws ConfigError naming the field.
PointConfig point_from_json(const std::string& json_text);
/// Parses an experiment file; parse errors report line and column.
ExperimentSpec parse_experiment(const std::string& text);
ExperimentSpec load_experiment(const std::string& path);

/// Sweep points in (rho, k, policy) order.
std::vector<PointConfig> expand_points(const ExperimentSpec& spec);

/// Canonical text of every field that affects results.
std::string describe(const SimConfig& cfg);
std::uint64_t config_hash(const SimConfig& cfg);
std::string hash_hex(std::uint64_t h);

std::uint64_t replication_seed(std::uint64_t base, int replication);

struct PointResult {
    PointConfig point;
    SimConfig sim;  // with r-grid filled in
    std::uint64_t hash = 0;
    std::vector<SimStats> replications;
    SimStats merged;
};

/// Runs replications of all points on a bounded pool of `workers` threads.
/// Results are independent of the worker count.
std::vector<PointResult> run_points(const std::vector<PointConfig>& points, int replications, int workers);

int default_workers();

void write_simulate_csv(std::ostream& os, const std::vector<PointResult>& results);
void write_per_r_csv(std::ostream& os, const std::vector<PointResult>& results);
void write_bounds_csv(std::ostream& os, const std::vector<std::pair<std::string, BoundsReport>>& rows);

struct VerifyLine {
    std::string check;
    bool pass = false;
    std::string text;
};

/// Runs every check in spec.suite; writes CSV artifacts under out_dir when nonempty.
std::vector<VerifyLine> run_verify(const ExperimentSpec& spec, int workers, const std::string& out_dir);

/// CSV trace row writer for the debug trace sink.
TraceSink csv_trace_sink(std::ostream& os);

}  // namespace gittins
