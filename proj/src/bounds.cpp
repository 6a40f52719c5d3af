#include "gittins/bounds.hpp"

#include <cmath>
#include <cstdio>

#include "gittins/errors.hpp"

namespace gittins {

double gap_constant() { return 9.0 / (8.0 * std::log(1.5)) + 1.0; }

BoundsReport loss_terms(const SimConfig& cfg) {
    BoundsReport b;
    ResidualBounds rb = cfg.arrival.residual_bounds();
    double lambda = cfg.lambda(), rho = cfg.rho();
    b.c_const = gap_constant();
    b.a_min = rb.a_min;
    b.a_max = rb.a_max;
    b.setup_excess = cfg.setup.excess_mean();
    b.loss_a = b.c_const * (cfg.k - 1) * std::log(1.0 / (1.0 - rho));
    b.loss_b = lambda * (rb.a_max - rb.a_min);
    if (!cfg.setup.is_zero())
        b.loss_c = 2.0 * (cfg.k - 1) + lambda * (rb.a_max + cfg.k * b.setup_excess);
    return b;
}

Verdict check_gap_multiserver(const SimStats& gtn, const SimStats& baseline, BoundsReport& report) {
    Estimate a = gtn.mean_n(), c = baseline.mean_n();
    report.gap_observed = {a.mean - c.mean, combined_ci(a.ci, c.ci)};
    Verdict v;
    v.name = "gap";
    v.observed = report.gap_observed.mean;
    v.ci = report.gap_observed.ci;
    v.bound = report.total();
    v.pass = v.observed <= v.bound + 3.0 * v.ci;
    report.verdicts.push_back(v);
    return v;
}

std::vector<Verdict> check_single_server_optimality(
    const SimStats& gittins, const std::vector<std::pair<std::string, SimStats>>& others) {
    std::vector<Verdict> out;
    Estimate g = gittins.mean_n();
    for (const auto& [name, st] : others) {
        Estimate o = st.mean_n();
        Verdict v;
        v.name = "gittins<=" + name;
        v.observed = g.mean;
        v.bound = o.mean;
        v.ci = combined_ci(g.ci, o.ci);
        v.pass = g.mean <= o.mean + 3.0 * v.ci;
        out.push_back(v);
    }
    return out;
}

Estimate mean_n_ratio(const SimStats& num, const SimStats& den) {
    Estimate a = num.mean_n(), b = den.mean_n();
    Estimate r;
    if (!(b.mean > 0.0)) return r;
    r.mean = a.mean / b.mean;
    double ra = a.mean > 0.0 ? a.ci / a.mean : 0.0, rb = b.ci / b.mean;
    r.ci = r.mean * std::sqrt(ra * ra + rb * rb);
    return r;
}

double heavy_traffic_limit(double cv2_s, double cv2_a) { return (cv2_s + cv2_a) / (cv2_s + 1.0); }

std::vector<RatioPoint> heavy_traffic_ratio(const std::vector<double>& rhos, const std::vector<SimStats>& num,
                                            const std::vector<SimStats>& den) {
    std::vector<RatioPoint> out;
    for (std::size_t i = 0; i < rhos.size() && i < num.size() && i < den.size(); ++i)
        out.push_back({rhos[i], mean_n_ratio(num[i], den[i])});
    return out;
}

std::vector<Verdict> check_setup_number_bound(const SimStats& stats, const SimConfig& cfg) {
    std::vector<Verdict> out;
    if (cfg.setup.is_zero()) return out;
    if (stats.setup_starts < 100)
        throw InsufficientSamples("only " + std::to_string(stats.setup_starts) + " setups observed (need 100)");
    double lambda = cfg.lambda();
    double a_max = cfg.arrival.residual_bounds().a_max;
    std::size_t nb = stats.setup_bin_edges.empty() ? 0 : stats.setup_bin_edges.size() - 1;
    for (std::size_t b = 0; b < nb; ++b) {
        if (!(stats.bin_time(b) > 0.0)) continue;
        Estimate n = stats.cond_n_setup(b);
        Estimate age = stats.cond_age_setup(b);
        Verdict v;
        char buf[32];
        std::snprintf(buf, sizeof buf, "setup_bin_%02zu", b);
        v.name = buf;
        v.observed = n.mean;
        v.ci = n.ci;
        v.bound = lambda * age.mean + lambda * a_max + cfg.k - 1;
        v.pass = v.observed <= v.bound + 3.0 * v.ci;
        out.push_back(v);
    }
    return out;
}

}  // namespace gittins
