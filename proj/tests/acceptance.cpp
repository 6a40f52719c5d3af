// Acceptance suite: one PASS/FAIL line per criterion.
#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <sstream>

#include "gittins/bounds.hpp"
#include "gittins/experiment.hpp"
#include "gittins/palm.hpp"
#include "gittins/rng.hpp"
#include "oracles.hpp"

using namespace gittins;

namespace {

double g_scale = 1.0;
int g_workers = 1;

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

SimConfig cfg(int k, Distribution a, Distribution s, JobKind kind, Distribution u = Distribution::zero(),
              Policy p = Policy::Gittins) {
    SimConfig c;
    c.k = k;
    c.arrival = a;
    c.job_model = {kind, s};
    c.setup = u;
    c.policy = p;
    c.seed = 20240611;
    return c;
}

SimConfig with_arrivals(SimConfig c, double n) {
    c.horizon = n * g_scale * c.arrival.mean();
    return c;
}

// Poisson arrivals at load rho for the given size distribution
Distribution poisson_at(double rho, const Distribution& s) { return Distribution::exponential(rho / s.mean()); }

std::vector<PointResult> simulate(const std::vector<SimConfig>& cs, int r_points = 64) {
    std::vector<PointConfig> ps;
    for (const auto& c : cs) ps.push_back({"", c, r_points, std::nullopt});
    return run_points(ps, 1, g_workers);
}

const char* pf(bool p) { return p ? "ok" : "MISS"; }

// ---------------------------------------------------------------------------

Outcome single_job_wine_identity() {
    std::vector<JobModel> models{{JobKind::KnownSize, Distribution::exponential(1.0)},
                                 {JobKind::UnknownSize, Distribution::exponential(1.0)},
                                 {JobKind::UnknownSize, Distribution::bimodal(1.0, 0.9, 10.0)},
                                 {JobKind::UnknownSize, Distribution::uniform(0.0, 2.0)}};
    Rng rng(derive_seed(1, 1));
    double worst_known = 0.0, worst_unknown = 0.0;
    for (int i = 0; i < 100; ++i) {
        const JobModel& m = models[i % models.size()];
        RankFunction rf = make_rank_function(m);
        double x = m.size_dist.quantile(0.05 + 0.9 * rng.uniform01());
        JobState js = make_job(m, x);
        if (m.kind == JobKind::UnknownSize) js = advance(m, make_job(m, 1e300), x);
        double lib = single_job_wine(rf, js);
        // independent check: integrate E[S_r(x)] / r^2 with r = e^u by adaptive quadrature
        double lo = rf.known_size() ? x : rf.rank_clamped(js.value);
        double hi = rf.known_size() ? x : rf.max_rank_from(js.value);
        double quad;
        if (rf.known_size()) {
            quad = x / lo;  // E[S_r] = x for r >= x, so the integral is x / x
        } else {
            auto f = [&](double u) {
                double r = std::exp(u);
                return rf.expected_r_work(js.value, r) / r;
            };
            double a = std::log(lo * (1 - 1e-12)), b = std::log(hi * (1 + 1e-9));
            quad = oracle::integrate(f, a, b, 2000, 1e-13) + rf.expected_r_work(js.value, hi * 2) / (hi * (1 + 1e-9));
        }
        double err = std::max(std::abs(lib - 1.0), std::abs(quad - 1.0));
        (m.kind == JobKind::KnownSize ? worst_known : worst_unknown) =
            std::max(m.kind == JobKind::KnownSize ? worst_known : worst_unknown, err);
    }
    bool ok = worst_known <= 1e-12 && worst_unknown <= 1e-3;
    return {ok, fmt("100 states, max |I-1| known %.2e (tol 1e-12), unknown %.2e (tol 1e-3)", worst_known,
                    worst_unknown)};
}

Outcome pathwise_wine() {
    SimConfig c = cfg(1, Distribution::zero(), Distribution::uniform(0.0, 2.0), JobKind::KnownSize);
    c.arrival = poisson_at(0.8, c.job_model.size_dist);
    c = with_arrivals(c, 2e5);
    c.snapshot_count = 1000;
    auto res = simulate({c});
    WineReport w = wine_check(res[0].merged, make_rank_function(c.job_model));
    bool ok = w.snapshots >= 1000 && w.pathwise_max_error <= 1e-6;
    return {ok, fmt("%zu epochs, mean N %.4f, max |integral - N| %.2e (tol 1e-6)", w.snapshots, w.snapshot_n,
                    w.pathwise_max_error)};
}

Outcome mm1_oracle() {
    std::vector<SimConfig> cs;
    std::vector<std::string> names;
    // sizes unknown to the scheduler, so every non-idling policy has the same E[N]
    for (Policy p : {Policy::Gittins, Policy::FCFS, Policy::LCFS, Policy::RandomOrder}) {
        SimConfig c = cfg(1, Distribution::exponential(0.5), Distribution::exponential(1.0), JobKind::UnknownSize,
                          Distribution::zero(), p);
        cs.push_back(with_arrivals(c, 1e6));
        names.push_back(policy_name(p));
    }
    auto res = simulate(cs, 16);
    bool ok = true;
    std::string d;
    for (std::size_t i = 0; i < res.size(); ++i) {
        Estimate n = res[i].merged.mean_n();
        bool p = std::abs(n.mean - 1.0) <= 3 * n.ci;
        ok = ok && p;
        d += fmt("%s %.4f+-%.4f (ci %.1f%%) %s; ", names[i].c_str(), n.mean, n.ci, 100 * n.ci / n.mean, pf(p));
    }
    return {ok, d + "target 1.000 within 3 CI"};
}

Outcome pk_oracle() {
    Distribution s = Distribution::hyperexponential_balanced(1.0, 4.0);
    SimConfig c = cfg(1, poisson_at(0.7, s), s, JobKind::UnknownSize, Distribution::zero(), Policy::FCFS);
    c = with_arrivals(c, 2e6);
    auto res = simulate({c}, 16);
    double lambda = c.lambda(), rho = c.rho();
    double es2 = (s.cv2() + 1.0) * s.mean() * s.mean();
    double want = rho + lambda * lambda * es2 / (2 * (1 - rho));
    Estimate n = res[0].merged.mean_n();
    bool ok = std::abs(n.mean - want) <= 3 * n.ci;
    return {ok, fmt("mean_n %.4f+-%.4f vs P-K %.4f", n.mean, n.ci, want)};
}

std::vector<std::pair<std::string, SimConfig>> six_configs(double arrivals) {
    std::vector<std::pair<std::string, SimConfig>> v;
    auto add = [&](const char* name, SimConfig c) { v.push_back({name, with_arrivals(c, arrivals)}); };
    add("M/M/1", cfg(1, Distribution::exponential(0.7), Distribution::exponential(1.0), JobKind::UnknownSize));
    add("M/G/2 bimodal", cfg(2, Distribution::exponential(0.7 / 1.9), Distribution::bimodal(1.0, 0.9, 10.0),
                             JobKind::UnknownSize));
    add("D/M/1", cfg(1, Distribution::deterministic(1 / 0.7), Distribution::exponential(1.0), JobKind::KnownSize));
    add("U/H2/2", cfg(2, Distribution::uniform(0.0, 2 / 0.7), Distribution::hyperexponential_balanced(1.0, 4.0),
                      JobKind::UnknownSize));
    add("M/U/1/setup", cfg(1, Distribution::exponential(1.2), Distribution::uniform(0.0, 1.0), JobKind::UnknownSize,
                           Distribution::deterministic(0.5)));
    add("E2/M/2/setup", cfg(2, Distribution::erlang(2, 1.2), Distribution::exponential(1.0), JobKind::KnownSize,
                            Distribution::exponential(2.0)));
    return v;
}

Outcome decomposition_law() {
    auto six = six_configs(1e6);
    std::vector<SimConfig> cs;
    for (auto& [n, c] : six) cs.push_back(c);
    auto res = simulate(cs);
    bool ok = true;
    std::string d;
    for (std::size_t i = 0; i < res.size(); ++i) {
        ModelMoments mm = model_moments(res[i].sim, make_rank_function(res[i].sim.job_model));
        DecompositionReport rep = decomposition_check(res[i].merged, mm);
        ok = ok && rep.pass;
        d += fmt("%s worst %.2f over %zu r %s; ", six[i].first.c_str(), rep.worst, rep.rows.size(), pf(rep.pass));
    }
    return {ok, d + "(worst = max |residual| / 3 CI)"};
}

Outcome srpt_moments() {
    Distribution s = Distribution::hyperexponential_balanced(1.0, 4.0);
    SimConfig c = cfg(1, poisson_at(0.7, s), s, JobKind::KnownSize);
    for (int i = 0; i < 16; ++i) c.r_grid.push_back(0.05 * std::pow(200.0, i / 15.0));
    c = with_arrivals(c, 1e6);
    auto res = simulate({c});
    const SimStats& st = res[0].merged;
    bool ok = true;
    double worst = 0.0;
    int miss = 0;
    for (std::size_t j = 0; j < c.r_grid.size(); ++j) {
        SrptMoments m = srpt_closed_form_moments(s, c.r_grid[j], c.lambda());
        Estimate rr = st.rho_r_empirical(j), rx = st.rho_rcy_excess(j);
        double z1 = std::abs(rr.mean - c.lambda() * m.es_r) / (3 * rr.ci);
        double z2 = std::abs(rx.mean - m.rho_rcy_excess) / (3 * rx.ci);
        worst = std::max({worst, z1, z2});
        if (z1 > 1 || z2 > 1) ++miss, ok = false;
    }
    return {ok, fmt("16 r values in [0.05, 10]: %d outside 3 CI, worst |diff| / 3 CI %.2f", miss, worst)};
}

Outcome single_server_optimality() {
    Distribution s = Distribution::hyperexponential_balanced(1.0, 4.0);
    std::vector<SimConfig> cs;
    const std::vector<Policy> pols{Policy::Gittins, Policy::FCFS, Policy::LCFS, Policy::RandomOrder};
    for (double rho : {0.5, 0.8})
        for (Policy p : pols)
            cs.push_back(with_arrivals(
                cfg(1, poisson_at(rho, s), s, JobKind::UnknownSize, Distribution::deterministic(1.0), p), 1e6));
    auto res = simulate(cs, 16);
    bool ok = true;
    std::string d;
    for (std::size_t b = 0; b < res.size(); b += pols.size()) {
        std::vector<std::pair<std::string, SimStats>> others;
        for (std::size_t i = 1; i < pols.size(); ++i) others.push_back({policy_name(pols[i]), res[b + i].merged});
        d += fmt("rho %.1f gittins %.3f: ", res[b].sim.rho(), res[b].merged.mean_n().mean);
        for (const auto& v : check_single_server_optimality(res[b].merged, others)) {
            ok = ok && v.pass;
            d += fmt("%s %.3f %s, ", v.name.c_str() + 9, v.bound, pf(v.pass));
        }
    }
    return {ok, d};
}

Outcome gap_bound() {
    auto six = six_configs(5e5);
    std::vector<SimConfig> cs;
    for (auto& [n, c] : six) {
        cs.push_back(c);
        SimConfig b = cfg(1, c.arrival, c.job_model.size_dist, JobKind::KnownSize);
        b.horizon = c.horizon;
        cs.push_back(b);
    }
    auto res = simulate(cs, 16);
    bool ok = true;
    std::string d;
    for (std::size_t i = 0; i < six.size(); ++i) {
        BoundsReport rep = loss_terms(res[2 * i].sim);
        Verdict v = check_gap_multiserver(res[2 * i].merged, res[2 * i + 1].merged, rep);
        ok = ok && v.pass;
        d += fmt("%s gap %.3f+-%.3f <= %.3f %s; ", six[i].first.c_str(), v.observed, v.ci, v.bound, pf(v.pass));
    }
    return {ok, d};
}

Outcome setup_number_bound() {
    std::vector<std::pair<std::string, SimConfig>> v{
        {"M/M/1/setup D(1)", cfg(1, Distribution::exponential(0.5), Distribution::exponential(1.0),
                                 JobKind::UnknownSize, Distribution::deterministic(1.0))},
        {"U/M/2/setup M", cfg(2, Distribution::uniform(0.0, 2.0), Distribution::exponential(1.4), JobKind::KnownSize,
                              Distribution::exponential(1.0))}};
    std::vector<SimConfig> cs;
    for (auto& [n, c] : v) cs.push_back(with_arrivals(c, 1e6));
    auto res = simulate(cs, 16);
    bool ok = true;
    std::string d;
    for (std::size_t i = 0; i < res.size(); ++i) {
        auto vs = check_setup_number_bound(res[i].merged, res[i].sim);
        int bad = 0;
        double slack = INFINITY;
        for (const auto& x : vs) {
            bad += !x.pass;
            slack = std::min(slack, x.bound + 3 * x.ci - x.observed);
        }
        ok = ok && bad == 0 && !vs.empty();
        d += fmt("%s %zu bins, %d violated, min slack %.3f; ", v[i].first.c_str(), vs.size(), bad, slack);
    }
    return {ok, d};
}

// arrivals grow as 1/(1 - rho)^2 relative to rho = 0.8
double ht_arrivals(double base, double rho) { return base * std::pow(0.2 / (1.0 - rho), 2); }

Outcome srpt_heavy_traffic_ratio() {
    const std::vector<double> rhos{0.8, 0.9, 0.95};
    std::vector<SimConfig> cs;
    Distribution s = Distribution::exponential(1.0);
    for (double rho : rhos) {
        SimConfig d = cfg(1, Distribution::deterministic(1.0 / rho), s, JobKind::KnownSize);
        SimConfig m = cfg(1, Distribution::exponential(rho), s, JobKind::KnownSize);
        cs.push_back(with_arrivals(d, ht_arrivals(4e5, rho)));
        cs.push_back(with_arrivals(m, ht_arrivals(4e5, rho)));
    }
    auto res = simulate(cs, 16);
    double limit = heavy_traffic_limit(1.0, 0.0);
    std::vector<double> dist;
    std::string d;
    Estimate last;
    for (std::size_t i = 0; i < rhos.size(); ++i) {
        last = mean_n_ratio(res[2 * i].merged, res[2 * i + 1].merged);
        dist.push_back(std::abs(last.mean - limit));
        d += fmt("rho %.2f ratio %.4f+-%.4f; ", rhos[i], last.mean, last.ci);
    }
    bool within = std::abs(last.mean - limit) <= 0.1 * limit;
    bool monotone = dist[1] < dist[0] && dist[2] < dist[1];
    return {within && monotone, d + fmt("limit %.2f, final within 10%% %s, monotone approach %s", limit, pf(within),
                                        pf(monotone))};
}

Outcome gittins_heavy_traffic_proxy() {
    const std::vector<double> rhos{0.8, 0.9, 0.95};
    Distribution s = Distribution::hyperexponential_balanced(1.0, 4.0);
    std::vector<SimConfig> cs;
    for (double rho : rhos) {
        double n = ht_arrivals(2e5, rho);
        cs.push_back(with_arrivals(cfg(2, poisson_at(rho, s), s, JobKind::UnknownSize), n));
        cs.push_back(with_arrivals(cfg(1, poisson_at(rho, s), s, JobKind::KnownSize), n));
        cs.push_back(with_arrivals(cfg(1, poisson_at(rho, s), s, JobKind::UnknownSize), n));
    }
    auto res = simulate(cs, 16);
    std::vector<double> ratio;
    std::string d;
    for (std::size_t i = 0; i < rhos.size(); ++i) {
        Estimate r = mean_n_ratio(res[3 * i].merged, res[3 * i + 1].merged);
        Estimate same = mean_n_ratio(res[3 * i].merged, res[3 * i + 2].merged);
        ratio.push_back(r.mean);
        d += fmt("rho %.2f Gtn/SRPT %.3f+-%.3f (vs 1-server Gittins %.3f); ", rhos[i], r.mean, r.ci, same.mean);
    }
    bool decreasing = ratio[1] < ratio[0] && ratio[2] < ratio[1];
    bool below = ratio[2] < 1.5;
    return {decreasing && below, d + fmt("decreasing %s, < 1.5 at 0.95 %s", pf(decreasing), pf(below))};
}

Outcome determinism() {
    const char* text = R"({
      "k": 2,
      "arrival": {"family": "uniform", "low": 0, "high": 2},
      "size": {"family": "hyperexponential", "mean": 0.7, "cv2": 4},
      "setup": {"family": "exponential", "rate": 2},
      "arrivals": 20000,
      "seed": 77,
      "replications": 3,
      "sweep": {"policy": ["gittins", "fcfs", "lcfs", "random"]}
    })";
    ExperimentSpec spec = parse_experiment(text);
    auto csv = [&](int workers) {
        auto res = run_points(expand_points(spec), spec.replications, workers);
        std::ostringstream os;
        write_simulate_csv(os, res);
        write_per_r_csv(os, res);
        for (const auto& r : res) {
            ModelMoments mm = model_moments(r.sim, make_rank_function(r.sim.job_model));
            write_decomposition_csv(os, decomposition_check(r.merged, mm));
            write_cost_terms_csv(os, cost_terms(r.merged, mm));
        }
        return os.str();
    };
    std::string a = csv(1), b = csv(1), c = csv(std::max(2, g_workers));
    bool ok = a == b && a == c && !a.empty();
    return {ok, fmt("%zu bytes, repeat identical %s, across worker counts identical %s", a.size(), pf(a == b),
                    pf(a == c))};
}

struct Criterion {
    int id;
    const char* name;
    std::function<Outcome()> fn;
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"acceptance criteria"};
    int only = 0;
    app.add_option("--only", only, "run a single criterion (1-12)");
    app.add_option("--scale", g_scale, "multiply every run length");
    app.add_option("--workers", g_workers, "worker threads (default: GITTINS_WORKERS or all cores)");
    CLI11_PARSE(app, argc, argv);
    if (g_workers <= 0) g_workers = default_workers();

    const std::vector<Criterion> all{
        {1, "single-job WINE", single_job_wine_identity},
        {2, "pathwise WINE", pathwise_wine},
        {3, "M/M/1 oracle", mm1_oracle},
        {4, "Pollaczek-Khinchine oracle", pk_oracle},
        {5, "work decomposition law", decomposition_law},
        {6, "SRPT r-work moments", srpt_moments},
        {7, "single-server optimality", single_server_optimality},
        {8, "multiserver gap bound", gap_bound},
        {9, "setup number bound", setup_number_bound},
        {10, "SRPT heavy-traffic ratio", srpt_heavy_traffic_ratio},
        {11, "Gittins heavy-traffic proxy", gittins_heavy_traffic_proxy},
        {12, "determinism", determinism},
    };
    bool ok = true, ran = false;
    for (const auto& c : all) {
        if (only != 0 && c.id != only) continue;
        ran = true;
        auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.fn();
        } catch (const std::exception& e) {
            o = {false, std::string("error: ") + e.what()};
        }
        double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::cout << "criterion " << c.id << " " << c.name << ": " << (o.pass ? "PASS" : "FAIL") << " [" << o.detail
                  << "] (" << fmt("%.1f", secs) << "s)" << std::endl;
        ok = ok && o.pass;
    }
    if (!ran) {
        std::cerr << "no criterion " << only << '\n';
        return 2;
    }
    return ok ? 0 : 1;
}
