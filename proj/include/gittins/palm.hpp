#pragma once

#include <iosfwd>
#include <vector>

#include "gittins/jobs.hpp"
#include "gittins/sim.hpp"
#include "gittins/stats.hpp"

namespace gittins {

/// Exact model quantities per r-grid column (last column is r = infinity).
struct ModelMoments {
    double lambda = 0.0;
    double a_excess = 0.0;  // E[A_e]
    std::vector<double> r;  // column r values, +inf last
    std::vector<double> m1, m2, rho_r;
};

ModelMoments model_moments(const SimConfig& cfg, const RankFunction& rf);

/// Weights w_j with  int_0^inf f(r)/r^2 dr ~ sum_j w_j f(r_j): trapezoid in
/// log r on the grid, f ~ r^2 below the grid and f = f(inf) above it.
std::vector<double> r_integral_weights(const std::vector<double>& r_grid);

struct DecompositionRow {
    double r = 0.0;
    Estimate lhs;
    double rhs_fixed = 0.0;
    double rhs_rcy = 0.0;
    double rhs_acc_w = 0.0;
    double rhs_acc_ares = 0.0;
    double residual = 0.0;
    double residual_ci = 0.0;
    bool pass = false;
};

struct DecompositionReport {
    std::vector<DecompositionRow> rows;
    bool pass = false;
    /// max |residual| / (3 ci + floor) over rows; <= 1 means pass
    double worst = 0.0;
};

/// Per-batch residuals of the work decomposition law at every column. With
/// `realized`, recycled r-work enters at its sampled value instead of its
/// conditional mean given the crossing state.
DecompositionReport decomposition_check(const SimStats& stats, const ModelMoments& mm, bool realized = false);

/// E_acc[1] per column; should be 1.
std::vector<Estimate> e_acc_one(const SimStats& stats, const ModelMoments& mm);

struct CostTerms {
    Estimate m_res, m_rcy, m_idle, m_setup;
    Estimate fixed;      // integral of the policy-invariant terms (incl. recycling excess)
    Estimate wine_n;     // integral of E[W_r]/r^2
    Estimate residual;   // wine_n - (fixed + m_res + m_rcy + m_idle + m_setup)
};

CostTerms cost_terms(const SimStats& stats, const ModelMoments& mm);

struct WineReport {
    Estimate direct;          // time-average N
    Estimate integral;        // integral of E[W_r]/r^2 over the r-grid
    double snapshot_mean = 0.0;  // mean over snapshots of sum_i single-job WINE
    double snapshot_n = 0.0;     // mean N over snapshots
    double pathwise_max_error = 0.0;
    std::size_t snapshots = 0;
};

WineReport wine_check(const SimStats& stats, const RankFunction& rf);

struct SrptMoments {
    double es_r = 0.0;         // E[S 1(S <= r)]
    double rho_r_excess = 0.0; // (lambda/2) E[S^2 1(S <= r)]
    double rho_rcy_excess = 0.0; // (lambda/2) r^2 P(S > r)
};

SrptMoments srpt_closed_form_moments(const Distribution& s, double r, double lambda);

void write_decomposition_csv(std::ostream& os, const DecompositionReport& rep);
void write_cost_terms_csv(std::ostream& os, const CostTerms& c);

}  // namespace gittins
