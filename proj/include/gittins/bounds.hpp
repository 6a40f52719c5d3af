#pragma once

#include <string>
#include <utility>
#include <vector>

#include "gittins/sim.hpp"
#include "gittins/stats.hpp"

namespace gittins {

/// 9 / (8 log 1.5) + 1
double gap_constant();

struct Verdict {
    std::string name;
    bool pass = false;
    double observed = 0.0;
    double bound = 0.0;
    double ci = 0.0;
    std::string detail;
};

struct BoundsReport {
    double loss_a = 0.0, loss_b = 0.0, loss_c = 0.0;
    double c_const = 0.0;
    double a_min = 0.0, a_max = 0.0;
    double setup_excess = 0.0;  // E[U_e]
    Estimate gap_observed;
    std::vector<Verdict> verdicts;

    double total() const { return loss_a + loss_b + loss_c; }
};

/// The three loss terms of the multiserver gap bound.
BoundsReport loss_terms(const SimConfig& cfg);

/// Gittins in G/G/k/setup against G/G/1 SRPT with the same A and S.
Verdict check_gap_multiserver(const SimStats& gtn, const SimStats& baseline, BoundsReport& report);

/// One verdict per competitor: E[N] of Gittins <= E[N] of the competitor + 3 CI.
std::vector<Verdict> check_single_server_optimality(
    const SimStats& gittins, const std::vector<std::pair<std::string, SimStats>>& others);

/// Ratio of mean numbers in system with a delta-method CI.
Estimate mean_n_ratio(const SimStats& num, const SimStats& den);

/// (c_S^2 + c_A^2) / (c_S^2 + 1)
double heavy_traffic_limit(double cv2_s, double cv2_a);

struct RatioPoint {
    double rho = 0.0;
    Estimate ratio;
};

/// Ratios per rho for paired runs (num[i], den[i]).
std::vector<RatioPoint> heavy_traffic_ratio(const std::vector<double>& rhos, const std::vector<SimStats>& num,
                                            const std::vector<SimStats>& den);

/// Per setup-age bin: E[N | setting up, age in bin] <= lambda E[age | bin] + lambda A_max + k - 1.
/// Throws InsufficientSamples below 100 observed setups.
std::vector<Verdict> check_setup_number_bound(const SimStats& stats, const SimConfig& cfg);

}  // namespace gittins
