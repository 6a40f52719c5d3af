#include "gittins/palm.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>

namespace gittins {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}
}  // namespace

ModelMoments model_moments(const SimConfig& cfg, const RankFunction& rf) {
    ModelMoments mm;
    mm.lambda = cfg.lambda();
    mm.a_excess = cfg.arrival.excess_mean();
    mm.r = cfg.r_grid;
    mm.r.push_back(kInf);
    RWorkMoments fm = fresh_r_work_moments(rf, cfg.r_grid);
    mm.m1 = fm.m1;
    mm.m2 = fm.m2;
    for (double m : mm.m1) mm.rho_r.push_back(mm.lambda * m);
    return mm;
}

std::vector<double> r_integral_weights(const std::vector<double>& g) {
    const std::size_t R = g.size();
    std::vector<double> w(R + 1, 0.0);
    if (R == 0) return w;
    w[0] += 1.0 / g[0];
    for (std::size_t i = 0; i + 1 < R; ++i) {
        double du = std::log(g[i + 1] / g[i]);
        w[i] += 0.5 * du / g[i];
        w[i + 1] += 0.5 * du / g[i + 1];
    }
    w[R] = 1.0 / g[R - 1];
    return w;
}

namespace {

struct BatchTerms {
    double lhs, fixed, rcy, acc_w, acc_ares, acc_one;
    double idle, setup, rcy_w;
};

BatchTerms batch_terms(const Batch& b, const ModelMoments& mm, std::size_t j, bool realized) {
    const RBatch& x = b.r[j];
    double d = b.duration;
    double rho = mm.rho_r[j], den = 1.0 - rho;
    BatchTerms t{};
    t.lhs = x.i_w / d;
    t.fixed = (0.5 * mm.lambda * mm.m2[j] - rho * mm.m1[j] + rho * mm.a_excess) / den;
    double sw = realized ? x.rcy_s_w : x.rcy_m1_w;
    double sa = realized ? x.rcy_s_ares : x.rcy_m1_ares;
    double s2 = realized ? x.rcy_s2 : x.rcy_m2;
    double s1 = realized ? x.rcy_s : x.rcy_m1;
    t.rcy = 0.5 * s2 / d / den;
    t.acc_w = ((x.i_w - x.i_jw) + sw) / d / den;
    t.acc_ares = rho * ((b.i_ares - x.i_jares) + sa) / d / den;
    t.acc_one = ((d - x.i_j) + s1) / d / den;
    t.idle = (x.i_w - x.i_jw - x.i_sw) / d / den;
    t.setup = x.i_sw / d / den;
    t.rcy_w = sw / d / den;
    return t;
}

}  // namespace

DecompositionReport decomposition_check(const SimStats& stats, const ModelMoments& mm, bool realized) {
    DecompositionReport rep;
    rep.pass = true;
    const std::size_t C = stats.columns();
    for (std::size_t j = 0; j < C; ++j) {
        DecompositionRow row;
        row.r = mm.r[j];
        std::vector<double> lhs, res;
        double f = 0, rc = 0, aw = 0, aa = 0;
        for (const auto& b : stats.batches) {
            BatchTerms t = batch_terms(b, mm, j, realized);
            lhs.push_back(t.lhs);
            res.push_back(t.lhs - (t.fixed + t.rcy + t.acc_w - t.acc_ares));
            f += t.fixed;
            rc += t.rcy;
            aw += t.acc_w;
            aa += t.acc_ares;
        }
        double nb = static_cast<double>(stats.batches.size());
        row.lhs = batch_mean(lhs);
        row.rhs_fixed = f / nb;
        row.rhs_rcy = rc / nb;
        row.rhs_acc_w = aw / nb;
        row.rhs_acc_ares = aa / nb;
        Estimate e = batch_mean(res);
        row.residual = e.mean;
        row.residual_ci = e.ci;
        // the float floor matters only for deterministic systems where the CI collapses
        double tol = 3.0 * e.ci + 1e-9 * (1.0 + std::abs(row.lhs.mean));
        row.pass = std::abs(e.mean) <= tol;
        rep.worst = std::max(rep.worst, std::abs(e.mean) / tol);
        rep.pass = rep.pass && row.pass;
        rep.rows.push_back(row);
    }
    return rep;
}

std::vector<Estimate> e_acc_one(const SimStats& stats, const ModelMoments& mm) {
    std::vector<Estimate> out;
    for (std::size_t j = 0; j < stats.columns(); ++j) {
        std::vector<double> v;
        for (const auto& b : stats.batches) v.push_back(batch_terms(b, mm, j, false).acc_one);
        out.push_back(batch_mean(v));
    }
    return out;
}

CostTerms cost_terms(const SimStats& stats, const ModelMoments& mm) {
    std::vector<double> w = r_integral_weights(stats.r_grid);
    const std::size_t C = stats.columns();
    std::vector<double> res, rcy, idle, setup, fixed, wine, resid;
    for (const auto& b : stats.batches) {
        double s_res = 0, s_rcy = 0, s_idle = 0, s_setup = 0, s_fixed = 0, s_wine = 0;
        for (std::size_t j = 0; j < C; ++j) {
            BatchTerms t = batch_terms(b, mm, j, false);
            s_res += -w[j] * t.acc_ares;
            s_rcy += w[j] * t.rcy_w;
            s_idle += w[j] * t.idle;
            s_setup += w[j] * t.setup;
            s_fixed += w[j] * (t.fixed + t.rcy);
            s_wine += w[j] * t.lhs;
        }
        res.push_back(s_res);
        rcy.push_back(s_rcy);
        idle.push_back(s_idle);
        setup.push_back(s_setup);
        fixed.push_back(s_fixed);
        wine.push_back(s_wine);
        resid.push_back(s_wine - (s_fixed + s_res + s_rcy + s_idle + s_setup));
    }
    CostTerms c;
    c.m_res = batch_mean(res);
    c.m_rcy = batch_mean(rcy);
    c.m_idle = batch_mean(idle);
    c.m_setup = batch_mean(setup);
    c.fixed = batch_mean(fixed);
    c.wine_n = batch_mean(wine);
    c.residual = batch_mean(resid);
    return c;
}

WineReport wine_check(const SimStats& stats, const RankFunction& rf) {
    WineReport r;
    r.direct = stats.mean_n();
    std::vector<double> w = r_integral_weights(stats.r_grid);
    std::vector<double> per;
    for (const auto& b : stats.batches) {
        double s = 0.0;
        for (std::size_t j = 0; j < stats.columns(); ++j) s += w[j] * b.r[j].i_w / b.duration;
        per.push_back(s);
    }
    r.integral = batch_mean(per);
    double sum = 0.0, sn = 0.0;
    for (const auto& snap : stats.snapshots) {
        double v = 0.0;
        for (double x : snap.states) {
            JobState js;
            js.value = x;
            v += single_job_wine(rf, js);
        }
        double n = static_cast<double>(snap.states.size());
        r.pathwise_max_error = std::max(r.pathwise_max_error, std::abs(v - n));
        sum += v;
        sn += n;
    }
    r.snapshots = stats.snapshots.size();
    if (r.snapshots > 0) {
        r.snapshot_mean = sum / r.snapshots;
        r.snapshot_n = sn / r.snapshots;
    }
    return r;
}

SrptMoments srpt_closed_form_moments(const Distribution& s, double r, double lambda) {
    SrptMoments m;
    if (!(r > 0.0)) return m;
    if (std::isinf(r)) {
        m.es_r = s.mean();
        m.rho_r_excess = 0.5 * lambda * s.second_moment();
        return m;
    }
    double t = s.tail(r);
    m.es_r = std::max(0.0, s.integrated_tail(r) - r * t);
    m.rho_r_excess = 0.5 * lambda * std::max(0.0, 2.0 * s.integrated_moment_tail(r) - r * r * t);
    m.rho_rcy_excess = 0.5 * lambda * r * r * t;
    return m;
}

void write_decomposition_csv(std::ostream& os, const DecompositionReport& rep) {
    os << "r,lhs,lhs_ci,rhs_fixed,rhs_rcy,rhs_acc_w,rhs_acc_ares,residual,residual_ci,pass\n";
    for (const auto& row : rep.rows) {
        os << fmt(row.r) << ',' << fmt(row.lhs.mean) << ',' << fmt(row.lhs.ci) << ',' << fmt(row.rhs_fixed) << ','
           << fmt(row.rhs_rcy) << ',' << fmt(row.rhs_acc_w) << ',' << fmt(row.rhs_acc_ares) << ','
           << fmt(row.residual) << ',' << fmt(row.residual_ci) << ',' << (row.pass ? 1 : 0) << '\n';
    }
}

void write_cost_terms_csv(std::ostream& os, const CostTerms& c) {
    os << "term,value,ci\n";
    auto row = [&](const char* n, const Estimate& e) { os << n << ',' << fmt(e.mean) << ',' << fmt(e.ci) << '\n'; };
    row("m_res", c.m_res);
    row("m_rcy", c.m_rcy);
    row("m_idle", c.m_idle);
    row("m_setup", c.m_setup);
    row("fixed", c.fixed);
    row("wine_n", c.wine_n);
    row("residual", c.residual);
}

}  // namespace gittins
