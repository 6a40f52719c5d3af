#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "gittins/dists.hpp"
#include "gittins/jobs.hpp"
#include "gittins/stats.hpp"

namespace gittins {

enum class Policy { Gittins, FCFS, LCFS, RandomOrder };

std::string policy_name(Policy p);
Policy parse_policy(const std::string& s);

struct SimConfig {
    int k = 1;
    Distribution arrival = Distribution::exponential(0.5);
    JobModel job_model;
    Distribution setup = Distribution::zero();
    Policy policy = Policy::Gittins;
    double horizon = 1e5;
    double warmup_fraction = 0.2;
    std::uint64_t seed = 1;
    /// Finite, strictly increasing. An r = infinity column is always added.
    std::vector<double> r_grid;
    int batch_count = 32;
    int snapshot_count = 1000;
    /// Unknown-size Gittins serves by rank class floor(log rank / log(1 + res)).
    double rank_resolution = 0.02;
    bool detect_nonconvergence = true;
    int setup_age_bins = 20;

    double lambda() const { return 1.0 / arrival.mean(); }
    double rho() const { return job_model.size_dist.mean() / arrival.mean(); }
};

/// Throws ConfigError on violated invariants.
void validate(const SimConfig& cfg);

/// Default r-grid: `points` log-spaced values spanning the rank range, plus
/// pairs bracketing any rank value held over an interval of ages.
std::vector<double> default_r_grid(const RankFunction& rf, int points = 64);

enum class ServerMode { Idle, SettingUp, Busy };

struct ServerState {
    ServerMode mode = ServerMode::Idle;
    double setup_remaining = 0.0;  // setup work left
    double setup_start = 0.0;
    int serving = -1;
};

/// Applies the three setup rules one at a time until none fires. `start_setup`
/// returns the sampled setup work of a server that begins setting up.
/// Returns the number of setups started.
int step_setup_transitions(std::vector<ServerState>& servers, int n_jobs,
                           const std::function<double()>& start_setup);

struct RBatch {
    double i_w = 0, i_j = 0, i_jw = 0, i_sw = 0, i_jares = 0;
    double n_rcy = 0, rcy_m1 = 0, rcy_m2 = 0, rcy_m1_w = 0, rcy_m1_ares = 0;
    double rcy_s = 0, rcy_s2 = 0, rcy_s_w = 0, rcy_s_ares = 0;
    double arr_s = 0, arr_s2 = 0;
};

struct Batch {
    double duration = 0, arrivals = 0, departures = 0;
    double i_n = 0, i_w = 0, i_setup = 0, i_busy = 0, i_ares = 0, setup_starts = 0;
    double i_setup_age = 0;  // integral of the summed ages of in-progress setups
    std::vector<RBatch> r;
    std::vector<double> bin_time, bin_n, bin_age;
};

struct Snapshot {
    double time = 0.0;
    std::vector<double> states;
};

struct SimStats {
    std::vector<double> r_grid;  // finite part; column r_grid.size() is r = infinity
    std::vector<Batch> batches;
    std::vector<Snapshot> snapshots;
    std::vector<double> setup_bin_edges;
    std::uint64_t arrivals = 0;
    std::uint64_t post_warmup_arrivals = 0;
    std::uint64_t setup_starts = 0;
    double warmup_end = 0.0;
    double horizon = 0.0;
    std::uint64_t events = 0;

    std::size_t columns() const { return r_grid.size() + 1; }

    Estimate mean_n() const;
    Estimate mean_w() const;
    Estimate mean_j_setup() const;
    Estimate mean_busy() const;
    Estimate mean_ares() const;
    Estimate mean_w_r(std::size_t j) const;
    Estimate mean_j_r(std::size_t j) const;
    Estimate lambda_rcy(std::size_t j) const;
    /// rho_rcy = lambda_rcy * E_rcy[S_rcy] with S_rcy at its conditional mean.
    Estimate rho_rcy(std::size_t j) const;
    /// rho_rcy * E[(S_rcy)_e] = lambda_rcy E[S_rcy^2] / 2.
    Estimate rho_rcy_excess(std::size_t j) const;
    Estimate rho_r_empirical(std::size_t j) const;
    Estimate palm_rcy_swr(std::size_t j) const;
    Estimate palm_rcy_sares(std::size_t j) const;
    Estimate idle_wr(std::size_t j) const;
    Estimate setup_wr(std::size_t j) const;
    /// Time-conditional mean of N given a setting-up server with age in bin b.
    Estimate cond_n_setup(std::size_t b) const;
    Estimate cond_age_setup(std::size_t b) const;
    double bin_time(std::size_t b) const;

    /// Per-batch series of a quantity divided by batch duration.
    std::vector<double> per_batch(const std::function<double(const Batch&)>& f) const;

    /// Pools batches and snapshots of replications of one configuration.
    static SimStats merge(const std::vector<SimStats>& parts);
};

struct TraceEvent {
    double time = 0.0;
    const char* kind = "";
    int n = 0;
    double w = 0.0;
    const std::vector<ServerState>* servers = nullptr;
};

using TraceSink = std::function<void(const TraceEvent&)>;

/// Age pieces of the unknown-size rank function: within a piece every
/// r-grid relevance and the rank class are constant.
struct AgePieces {
    std::vector<double> start;   // start age of each piece
    std::vector<int> rel;        // first r-grid column with r > rank
    std::vector<long> cls;       // rank class
    // r-work entries for columns that turn relevant on entering a piece
    std::vector<std::size_t> entry_offset;  // size pieces + 1
    std::vector<double> entry_y, entry_m1, entry_m2;
    std::vector<double> arrival_y;  // y*(0, r_j) per column
};

AgePieces build_age_pieces(const RankFunction& rf, const std::vector<double>& r_grid, double resolution,
                           bool with_classes);

/// E[S_r] and E[S_r^2] for a fresh job at every column (last is r = infinity),
/// computed from the same structures the simulator uses.
struct RWorkMoments {
    std::vector<double> m1, m2;
};
RWorkMoments fresh_r_work_moments(const RankFunction& rf, const std::vector<double>& r_grid);

/// Non-convergence screen over consecutive window integrals of W: strictly
/// increasing and the last exceeds the first by more than 10% of the last.
bool sustained_growth(const std::vector<double>& windows);

/// More than 1e6 recyclings at one r and more than 100 per arrival.
bool recycling_storm(double recyclings, double arrivals);

SimStats run(const SimConfig& cfg, const RankFunction& rf, const TraceSink& trace = {});
SimStats run(const SimConfig& cfg);

}  // namespace gittins
