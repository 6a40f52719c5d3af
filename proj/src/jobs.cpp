#include "gittins/jobs.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>

#include "gittins/errors.hpp"

namespace gittins {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr std::size_t npos = static_cast<std::size_t>(-1);

// Values within ~1e-12 of each other are treated as equal, so that constant
// rank functions (exponential sizes) come out exactly constant.
double snap(double v) {
    if (!(v > 0.0) || !std::isfinite(v)) return v;
    double e = std::floor(std::log10(v));
    double scale = std::pow(10.0, 11.0 - e);
    return std::round(v * scale) / scale;
}

}  // namespace

JobState make_job(const JobModel& model, double size) {
    JobState s;
    s.size = size;
    s.value = model.kind == JobKind::KnownSize ? size : 0.0;
    s.completed = size <= 0.0;
    return s;
}

JobState advance(const JobModel& model, JobState state, double service) {
    if (state.completed) return state;
    if (model.kind == JobKind::KnownSize) {
        state.value -= service;
        if (state.value <= 0.0) {
            state.value = 0.0;
            state.completed = true;
        }
    } else {
        state.value += service;
        if (state.value >= state.size) {
            state.value = state.size;
            state.completed = true;
        }
    }
    return state;
}

double gittins_ratio(const Distribution& s, double x, double y) {
    double den = s.tail(x) - s.tail(y);
    if (!(den > 0.0)) return kInf;
    return (s.excess_integral(x) - s.excess_integral(y)) / den;
}

std::vector<double> default_age_grid(const Distribution& size) {
    const int n = 4096;
    double top = size.support_max();
    if (!std::isfinite(top)) top = size.quantile(1.0 - 1e-9);
    double lo = 1e-6 * size.mean();
    std::vector<double> g;
    g.reserve(n + 8);
    g.push_back(0.0);
    double ratio = std::log(top / lo) / (n - 1);
    for (int i = 0; i < n; ++i) g.push_back(lo * std::exp(i * ratio));
    g.back() = top;
    for (double a : size.atoms())
        if (a > 0.0 && a <= top) g.push_back(a);
    if (auto* u = std::get_if<Uniform>(&size.params()); u && u->low > 0.0) g.push_back(u->low);
    if (auto* p = std::get_if<BoundedPareto>(&size.params())) g.push_back(p->low);
    std::sort(g.begin(), g.end());
    g.erase(std::unique(g.begin(), g.end()), g.end());
    return g;
}

RankFunction make_known_rank(const JobModel& model) {
    RankFunction rf;
    rf.model_ = model;
    rf.model_.kind = JobKind::KnownSize;
    return rf;
}

RankFunction build_rank_table(const JobModel& model, const std::vector<double>& grid) {
    RankFunction rf;
    rf.model_ = model;
    rf.model_.kind = JobKind::UnknownSize;
    const Distribution& s = model.size_dist;
    std::vector<double> x = grid;
    std::sort(x.begin(), x.end());
    x.erase(std::unique(x.begin(), x.end()), x.end());
    if (x.empty() || x.front() != 0.0) x.insert(x.begin(), 0.0);
    const std::size_t n = x.size();

    std::vector<double> t(n), rem(n);
    for (std::size_t i = 0; i < n; ++i) {
        t[i] = s.tail(x[i]);
        rem[i] = s.excess_integral(x[i]);
    }

    std::vector<double> v(n, 0.0), lv(n, 0.0);
    const double g = 0.5 * (std::sqrt(5.0) - 1.0);
    for (std::size_t i = 0; i < n; ++i) {
        if (!(t[i] > 0.0)) {
            v[i] = 0.0;  // end of a bounded support
            continue;
        }
        double best = rem[i] / t[i];
        std::size_t arg = npos;
        double f = s.density(x[i]);
        if (f > 0.0) best = std::min(best, t[i] / f);
        for (std::size_t j = i + 1; j < n; ++j) {
            double den = t[i] - t[j];
            if (!(den > 0.0)) continue;
            double q = (rem[i] - rem[j]) / den;
            if (q < best) {
                best = q;
                arg = j;
            }
        }
        if (arg != npos && s.mass_at(x[arg]) == 0.0) {
            double lo = arg - 1 > i ? x[arg - 1] : x[i] + 1e-9 * (x[arg] - x[i]);
            double hi = arg + 1 < n ? x[arg + 1] : x[arg];
            auto ratio = [&](double y) { return gittins_ratio(s, x[i], y); };
            for (int it = 0; it < 80 && hi - lo > 1e-14 * hi; ++it) {
                double m1 = hi - g * (hi - lo), m2 = lo + g * (hi - lo);
                if (ratio(m1) < ratio(m2))
                    hi = m2;
                else
                    lo = m1;
            }
            best = std::min(best, ratio(0.5 * (lo + hi)));
        }
        v[i] = snap(best);
    }
    for (std::size_t i = 0; i < n; ++i) {
        // approaching an atom, stopping at it costs almost nothing
        lv[i] = (i > 0 && s.mass_at(x[i]) > 0.0) ? 0.0 : v[i];
    }

    rf.ages_ = std::move(x);
    rf.values_ = std::move(v);
    rf.left_ = std::move(lv);

    std::size_t segs = n > 1 ? n - 1 : 1;
    rf.leaves_ = 1;
    while (rf.leaves_ < segs) rf.leaves_ <<= 1;
    rf.tree_.assign(2 * rf.leaves_, -kInf);
    for (std::size_t i = 0; i + 1 < n; ++i) rf.tree_[rf.leaves_ + i] = rf.segment_max(i);
    for (std::size_t i = rf.leaves_ - 1; i >= 1; --i) rf.tree_[i] = std::max(rf.tree_[2 * i], rf.tree_[2 * i + 1]);
    return rf;
}

RankFunction make_rank_function(const JobModel& model) {
    if (model.kind == JobKind::KnownSize) return make_known_rank(model);
    return build_rank_table(model, default_age_grid(model.size_dist));
}

double RankFunction::segment_max(std::size_t i) const { return std::max(values_[i], left_[i + 1]); }

std::size_t RankFunction::segment_of(double x) const {
    auto it = std::upper_bound(ages_.begin(), ages_.end(), x);
    std::size_t i = static_cast<std::size_t>(it - ages_.begin());
    return i == 0 ? 0 : i - 1;
}

double RankFunction::segment_value(std::size_t i, double x) const {
    if (i + 1 >= ages_.size()) return values_.back();
    if (x == ages_[i]) return values_[i];
    double w = (x - ages_[i]) / (ages_[i + 1] - ages_[i]);
    return values_[i] + (left_[i + 1] - values_[i]) * w;
}

double RankFunction::domain_max() const { return known_size() ? kInf : ages_.back(); }

double RankFunction::rank(double x) const {
    if (known_size()) return x;
    if (x < 0.0 || x > ages_.back()) throw DomainExceeded("age " + std::to_string(x) + " outside rank table");
    return segment_value(segment_of(x), x);
}

double RankFunction::rank_clamped(double x) const {
    if (known_size()) return x;
    if (x >= ages_.back()) return values_.back();
    return segment_value(segment_of(std::max(x, 0.0)), std::max(x, 0.0));
}

std::size_t RankFunction::first_segment_at_least(std::size_t i, double r) const {
    std::size_t segs = ages_.size() - 1;
    if (i >= segs) return npos;
    // climb from the leaf, then descend to the leftmost qualifying leaf
    std::size_t node = leaves_ + i;
    if (tree_[node] >= r) return i;
    while (true) {
        // move to the next subtree to the right
        while (node > 1 && (node & 1)) node >>= 1;
        if (node == 1) return npos;
        ++node;
        if (tree_[node] >= r) break;
    }
    while (node < leaves_) node = tree_[2 * node] >= r ? 2 * node : 2 * node + 1;
    std::size_t idx = node - leaves_;
    return idx < segs ? idx : npos;
}

double RankFunction::first_irrelevant_age(double x, double r) const {
    if (known_size()) return x < r ? kInf : x;
    double rx = rank_clamped(x);
    if (rx >= r) return x;
    if (x >= ages_.back()) return kInf;
    std::size_t i = segment_of(x);
    auto solve = [&](std::size_t seg, double from) {
        double b = ages_[seg + 1];
        double va = segment_value(seg, from);
        double vb = left_[seg + 1];
        if (va >= r) return from;
        // linear rise from va at `from` to vb at b
        double w = (r - va) / (vb - va);
        return std::min(b, from + w * (b - from));
    };
    if (left_[i + 1] >= r) return solve(i, x);
    std::size_t j = first_segment_at_least(i + 1, r);
    if (j == npos) return values_.back() >= r ? ages_.back() : kInf;
    if (values_[j] >= r) return ages_[j];
    return solve(j, ages_[j]);
}

double RankFunction::tail_mean_after(double x) const {
    const Distribution& s = model_.size_dist;
    double t = s.tail(x);
    return t > 0.0 ? s.excess_integral(x) / t : 0.0;
}

double RankFunction::expected_r_work(double x, double r) const {
    if (known_size()) return x < r ? x : 0.0;
    if (rank_clamped(x) >= r) return 0.0;
    const Distribution& s = model_.size_dist;
    double t = s.tail(x);
    if (!(t > 0.0)) return 0.0;
    double y = first_irrelevant_age(x, r);
    double ry = std::isfinite(y) ? s.excess_integral(y) : 0.0;
    return std::max(0.0, (s.excess_integral(x) - ry) / t);
}

double RankFunction::second_r_work(double x, double r) const {
    if (known_size()) return x < r ? x * x : 0.0;
    if (rank_clamped(x) >= r) return 0.0;
    const Distribution& s = model_.size_dist;
    double t = s.tail(x);
    if (!(t > 0.0)) return 0.0;
    double y = first_irrelevant_age(x, r);
    double k = s.excess_moment_integral(x);
    if (std::isfinite(y)) k -= s.excess_moment_integral(y) + (y - x) * s.excess_integral(y);
    return std::max(0.0, 2.0 * k / t);
}

double RankFunction::realized_r_work(double x, double r, double size) const {
    if (known_size()) return x < r ? x : 0.0;
    if (rank_clamped(x) >= r) return 0.0;
    double y = first_irrelevant_age(x, r);
    return std::max(0.0, std::min(size, y) - x);
}

double RankFunction::max_rank_from(double x) const {
    if (known_size()) return x;
    double m = rank_clamped(x);
    if (x >= ages_.back()) return m;
    std::size_t i = segment_of(x);
    m = std::max(m, left_[i + 1]);
    // max over segments i+1 .. end
    std::size_t lo = leaves_ + i + 1, hi = leaves_ + (ages_.size() - 1);
    while (lo < hi) {
        if (lo & 1) m = std::max(m, tree_[lo++]);
        if (hi & 1) m = std::max(m, tree_[--hi]);
        lo >>= 1;
        hi >>= 1;
    }
    return m;
}

double gittins_rank(const RankFunction& rf, const JobState& state) {
    if (state.completed) throw std::invalid_argument("rank of a completed job");
    return rf.rank(state.value);
}

double expected_r_work(const RankFunction& rf, const JobState& state, double r) {
    if (state.completed) return 0.0;
    return rf.expected_r_work(state.value, r);
}

double single_job_wine(const RankFunction& rf, const JobState& state) {
    if (state.completed) return 0.0;
    double x = state.value;
    if (rf.known_size()) return x > 0.0 ? x * (1.0 / x) : 1.0;

    double r0 = rf.rank_clamped(x);
    double rtop = rf.max_rank_from(x);
    const Distribution& s = rf.model().size_dist;
    double t = s.tail(x);
    if (!(t > 0.0) || !(r0 > 0.0)) return 1.0;
    double c = s.excess_integral(x) / t;  // r-work once nothing stops the job
    if (rtop <= r0) return c / r0;

    // E[S_r(x)] is zero up to r0, constant c past rtop, and jumps wherever r
    // crosses a table value, so those values are bracketed explicitly.
    std::vector<double> rs;
    const int base = 512;
    double lo = r0 * (1.0 + 1e-12);
    double span = std::log(rtop / lo);
    for (int i = 0; i < base; ++i) rs.push_back(lo * std::exp(span * i / (base - 1)));
    const auto& ages = rf.ages();
    const auto& vals = rf.values();
    const auto& lefts = rf.left_values();
    for (std::size_t i = 0; i < ages.size(); ++i) {
        if (ages[i] < x) continue;
        for (double v : {vals[i], lefts[i]}) {
            if (v > lo && v < rtop) {
                rs.push_back(v * (1.0 - 1e-12));
                rs.push_back(v * (1.0 + 1e-12));
            }
        }
    }
    rs.push_back(rtop);
    std::sort(rs.begin(), rs.end());
    rs.erase(std::unique(rs.begin(), rs.end()), rs.end());

    double total = 0.0;
    double prev_r = rs[0];
    double prev_g = rf.expected_r_work(x, prev_r) / prev_r;
    for (std::size_t i = 1; i < rs.size(); ++i) {
        double r = rs[i];
        double gi = rf.expected_r_work(x, r) / r;
        total += 0.5 * (prev_g + gi) * std::log(r / prev_r);
        prev_r = r;
        prev_g = gi;
    }
    return total + c / rtop;
}

void write_rank_table_csv(const RankFunction& rf, std::ostream& out) {
    out << "age,rank,left_limit\n";
    char buf[96];
    if (rf.known_size()) return;
    for (std::size_t i = 0; i < rf.ages().size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.12g,%.12g,%.12g\n", rf.ages()[i], rf.values()[i],
                      rf.left_values()[i]);
        out << buf;
    }
}

}  // namespace gittins
