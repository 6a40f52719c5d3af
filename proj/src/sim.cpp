#include "gittins/sim.hpp"

#include <algorithm>
#include <climits>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "gittins/errors.hpp"
#include "gittins/rng.hpp"

namespace gittins {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr long kBottomClass = LONG_MIN / 4;

long rank_class(double rank, double res, double floor_rank) {
    if (!(rank > floor_rank)) return kBottomClass;
    return static_cast<long>(std::floor(std::log(rank) / std::log1p(res)));
}

}  // namespace

std::string policy_name(Policy p) {
    switch (p) {
        case Policy::Gittins: return "gittins";
        case Policy::FCFS: return "fcfs";
        case Policy::LCFS: return "lcfs";
        case Policy::RandomOrder: return "random";
    }
    return "?";
}

Policy parse_policy(const std::string& s) {
    if (s == "gittins" || s == "srpt") return Policy::Gittins;
    if (s == "fcfs") return Policy::FCFS;
    if (s == "lcfs" || s == "lcfs_preemptive") return Policy::LCFS;
    if (s == "random" || s == "random_order") return Policy::RandomOrder;
    throw ConfigError("unknown policy '" + s + "'");
}

void validate(const SimConfig& cfg) {
    if (cfg.k < 1) throw ConfigError("k must be >= 1");
    if (!(cfg.arrival.mean() > 0.0)) throw ConfigError("arrival distribution must have positive mean");
    if (!(cfg.job_model.size_dist.mean() > 0.0)) throw ConfigError("size distribution must have positive mean");
    if (!(cfg.rho() < 1.0)) throw ConfigError("load rho = " + std::to_string(cfg.rho()) + " must be < 1");
    if (!(cfg.horizon > 0.0)) throw ConfigError("horizon must be > 0");
    if (!(cfg.warmup_fraction >= 0.0 && cfg.warmup_fraction < 1.0))
        throw ConfigError("warmup_fraction must be in [0, 1)");
    if (cfg.batch_count < 20) throw ConfigError("batch_count must be >= 20");
    if (cfg.snapshot_count < 0) throw ConfigError("snapshot_count must be >= 0");
    if (!(cfg.rank_resolution > 0.0)) throw ConfigError("rank_resolution must be > 0");
    if (cfg.setup_age_bins < 1) throw ConfigError("setup_age_bins must be >= 1");
    for (std::size_t i = 0; i < cfg.r_grid.size(); ++i) {
        double r = cfg.r_grid[i];
        if (!(r > 0.0) || !std::isfinite(r)) throw ConfigError("r_grid values must be finite and > 0");
        if (i > 0 && !(r > cfg.r_grid[i - 1])) throw ConfigError("r_grid must be strictly increasing");
    }
    cfg.arrival.residual_bounds();  // UnboundedResidual propagates
}

std::vector<double> default_r_grid(const RankFunction& rf, int points) {
    const Distribution& s = rf.model().size_dist;
    double mean = s.mean();
    std::vector<double> g;
    double lo, hi;
    if (rf.known_size()) {
        lo = 1e-2 * mean;
        double top = s.support_max();
        if (!std::isfinite(top)) top = s.quantile(1.0 - 1e-6);
        hi = top * 1.0001;
    } else {
        double rmin = kInf, rmax = 0.0;
        for (std::size_t i = 0; i < rf.ages().size(); ++i) {
            double v = rf.values()[i];
            if (v > 0.0) rmin = std::min(rmin, v);
            rmax = std::max({rmax, v, rf.left_values()[i]});
        }
        lo = 0.25 * std::min(rmin, mean);
        hi = 4.0 * std::max(rmax, mean);
        lo = std::max(lo, 1e-3 * mean);
    }
    for (int i = 0; i < points; ++i) g.push_back(lo * std::pow(hi / lo, static_cast<double>(i) / (points - 1)));
    if (!rf.known_size()) {
        // rank values held over an interval of ages put a jump into E[W_r]
        const auto& v = rf.values();
        for (std::size_t i = 1; i < v.size(); ++i) {
            if (v[i] > 0.0 && v[i] == v[i - 1]) {
                g.push_back(v[i] * (1.0 - 1e-6));
                g.push_back(v[i] * (1.0 + 1e-6));
            }
        }
    }
    std::sort(g.begin(), g.end());
    std::vector<double> out;
    for (double r : g)
        if (out.empty() || r > out.back() * (1.0 + 1e-9)) out.push_back(r);
    return out;
}

int step_setup_transitions(std::vector<ServerState>& servers, int n_jobs,
                           const std::function<double()>& start_setup) {
    int started = 0;
    const int k = static_cast<int>(servers.size());
    for (int guard = 0; guard < 16 * k + 16; ++guard) {
        int busy = 0, setting = 0;
        for (auto& s : servers) {
            busy += s.mode == ServerMode::Busy;
            setting += s.mode == ServerMode::SettingUp;
        }
        // rule 1: setting up -> busy once the setup work is done
        bool fired = false;
        for (auto& s : servers) {
            if (s.mode == ServerMode::SettingUp && s.setup_remaining <= 0.0) {
                s.mode = ServerMode::Busy;
                s.setup_remaining = 0.0;
                fired = true;
                break;
            }
        }
        if (fired) continue;
        // rule 2: busy -> idle when fewer jobs than busy servers
        if (n_jobs < busy) {
            int pick = -1;
            for (int i = k - 1; i >= 0; --i)
                if (servers[i].mode == ServerMode::Busy && servers[i].serving < 0) {
                    pick = i;
                    break;
                }
            if (pick < 0)
                for (int i = k - 1; i >= 0; --i)
                    if (servers[i].mode == ServerMode::Busy) {
                        pick = i;
                        break;
                    }
            servers[pick].mode = ServerMode::Idle;
            continue;
        }
        // rule 3: idle -> setting up when jobs outnumber busy plus setting-up servers
        if (n_jobs > busy + setting) {
            int pick = -1;
            for (int i = 0; i < k; ++i)
                if (servers[i].mode == ServerMode::Idle) {
                    pick = i;
                    break;
                }
            if (pick >= 0) {
                servers[pick].mode = ServerMode::SettingUp;
                servers[pick].setup_remaining = start_setup ? start_setup() : 0.0;
                ++started;
                continue;
            }
        }
        break;
    }
    return started;
}

AgePieces build_age_pieces(const RankFunction& rf, const std::vector<double>& r_grid, double resolution,
                           bool with_classes) {
    AgePieces p;
    const std::size_t R = r_grid.size();
    const auto& x = rf.ages();
    const auto& v = rf.values();
    const auto& lv = rf.left_values();
    double rmax = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) rmax = std::max({rmax, v[i], lv[i]});
    double floor_rank = rmax * 1e-6;

    std::vector<double> levels(r_grid.begin(), r_grid.end());
    if (with_classes && rmax > 0.0) {
        long lo = rank_class(floor_rank, resolution, 0.0), hi = rank_class(rmax, resolution, 0.0) + 1;
        for (long m = lo; m <= hi; ++m) levels.push_back(std::pow(1.0 + resolution, static_cast<double>(m)));
    }
    std::sort(levels.begin(), levels.end());

    std::vector<double> cuts{0.0, x.back()};
    for (std::size_t i = 0; i + 1 < x.size(); ++i) {
        if (i > 0 && lv[i] != v[i]) cuts.push_back(x[i]);
        double a = v[i], b = lv[i + 1];
        if (a == b) continue;
        double lo = std::min(a, b), hi = std::max(a, b);
        auto it = std::upper_bound(levels.begin(), levels.end(), lo);
        for (; it != levels.end() && *it < hi; ++it) {
            double w = (*it - a) / (b - a);
            cuts.push_back(x[i] + w * (x[i + 1] - x[i]));
        }
    }
    std::sort(cuts.begin(), cuts.end());
    cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());

    auto rel_of = [&](double rank) {
        return static_cast<int>(std::upper_bound(r_grid.begin(), r_grid.end(), rank) - r_grid.begin());
    };
    for (std::size_t i = 0; i < cuts.size(); ++i) {
        double a = cuts[i];
        double b = i + 1 < cuts.size() ? cuts[i + 1] : a;
        double rk = rf.rank_clamped(0.5 * (a + b));
        int rel = rel_of(rk);
        long cls = with_classes ? rank_class(rk, resolution, floor_rank) : 0;
        if (!p.start.empty() && p.rel.back() == rel && p.cls.back() == cls) continue;
        p.start.push_back(a);
        p.rel.push_back(rel);
        p.cls.push_back(cls);
    }

    const Distribution& s = rf.model().size_dist;
    const std::size_t P = p.start.size();
    // nxt[j]: first piece after the current one whose rel exceeds j
    std::vector<std::size_t> nxt(R + 1, P);
    std::vector<std::vector<double>> ey(P), e1(P), e2(P);
    auto ystar = [&](std::size_t q) { return q < P ? p.start[q] : kInf; };
    auto moments = [&](double a, double y, double& m1, double& m2) {
        double t = s.tail(a);
        if (!(t > 0.0)) {
            m1 = m2 = 0.0;
            return;
        }
        double ra = s.excess_integral(a), ka = s.excess_moment_integral(a);
        double ry = std::isfinite(y) ? s.excess_integral(y) : 0.0;
        double ky = std::isfinite(y) ? s.excess_moment_integral(y) + (y - a) * ry : 0.0;
        m1 = std::max(0.0, (ra - ry) / t);
        m2 = std::max(0.0, 2.0 * (ka - ky) / t);
    };
    for (std::size_t q = P; q-- > 0;) {
        if (q > 0 && p.rel[q] < p.rel[q - 1]) {
            for (int j = p.rel[q]; j < p.rel[q - 1]; ++j) {
                double y = ystar(nxt[j]);
                double m1, m2;
                moments(p.start[q], y, m1, m2);
                ey[q].push_back(y);
                e1[q].push_back(m1);
                e2[q].push_back(m2);
            }
        }
        if (q == 0) {
            p.arrival_y.assign(R + 1, 0.0);
            for (std::size_t j = p.rel[0]; j <= R; ++j) p.arrival_y[j] = ystar(nxt[j]);
        }
        for (int j = 0; j < p.rel[q]; ++j) nxt[j] = q;
    }
    p.entry_offset.assign(P + 1, 0);
    for (std::size_t q = 0; q < P; ++q) {
        p.entry_offset[q + 1] = p.entry_offset[q] + ey[q].size();
        p.entry_y.insert(p.entry_y.end(), ey[q].begin(), ey[q].end());
        p.entry_m1.insert(p.entry_m1.end(), e1[q].begin(), e1[q].end());
        p.entry_m2.insert(p.entry_m2.end(), e2[q].begin(), e2[q].end());
    }
    return p;
}

RWorkMoments fresh_r_work_moments(const RankFunction& rf, const std::vector<double>& r_grid) {
    const Distribution& s = rf.model().size_dist;
    const std::size_t R = r_grid.size();
    RWorkMoments out;
    out.m1.assign(R + 1, 0.0);
    out.m2.assign(R + 1, 0.0);
    if (rf.known_size()) {
        for (std::size_t j = 0; j < R; ++j) {
            double r = r_grid[j];
            double ge = s.tail(r) + s.mass_at(r);  // P(S >= r)
            out.m1[j] = std::max(0.0, s.integrated_tail(r) - r * ge);
            out.m2[j] = std::max(0.0, 2.0 * s.integrated_moment_tail(r) - r * r * ge);
        }
    } else {
        AgePieces p = build_age_pieces(rf, r_grid, 0.02, false);
        double ra = s.excess_integral(0.0), ka = s.excess_moment_integral(0.0), t = s.tail(0.0);
        for (std::size_t j = p.rel[0]; j < R; ++j) {
            double y = p.arrival_y[j];
            double ry = std::isfinite(y) ? s.excess_integral(y) : 0.0;
            double ky = std::isfinite(y) ? s.excess_moment_integral(y) + y * ry : 0.0;
            out.m1[j] = (ra - ry) / t;
            out.m2[j] = 2.0 * (ka - ky) / t;
        }
    }
    out.m1[R] = s.mean();
    out.m2[R] = s.second_moment();
    return out;
}

namespace {

struct Job {
    double size = 0.0;
    double value = 0.0;  // remaining work (known) or age (unknown)
    double arrival = 0.0;
    std::uint64_t id = 0;
    int piece = 0;
    int rel = 0;
    double label = 0.0;
    int server = -1;
};

struct Key {
    double a = 0.0;
    double b = 0.0;
    std::uint64_t id = 0;
    bool operator<(const Key& o) const {
        if (a != o.a) return a < o.a;
        if (b != o.b) return b < o.b;
        return id < o.id;
    }
};

struct HeapItem {
    Key key;
    int job;
    bool operator>(const HeapItem& o) const { return o.key < key; }
};

enum class Sched { Warmup, BatchEnd, Snapshot, Window, End };

class Engine {
public:
    Engine(const SimConfig& cfg, const RankFunction& rf, const TraceSink& trace)
        : cfg_(cfg),
          rf_(rf),
          trace_(trace),
          known_(rf.known_size()),
          k_(cfg.k),
          R_(cfg.r_grid.size()),
          arr_rng_(derive_seed(cfg.seed, 1)),
          size_rng_(derive_seed(cfg.seed, 2)),
          setup_rng_(derive_seed(cfg.seed, 3)),
          label_rng_(derive_seed(cfg.seed, 4)),
          snap_rng_(derive_seed(cfg.seed, 5)) {
        if (!known_)
            pieces_ = build_age_pieces(rf, cfg.r_grid, cfg.rank_resolution, cfg.policy == Policy::Gittins);
        servers_.resize(k_);
        setup_end_.assign(k_, kInf);
        w_.assign(R_ + 1, 0.0);
        last_t_.assign(R_ + 1, 0.0);
        nserv_.assign(R_ + 1, 0);
        rcy_total_.assign(R_ + 1, 0.0);
        preemptive_ = cfg.policy == Policy::Gittins || cfg.policy == Policy::LCFS;

        stats_.r_grid = cfg.r_grid;
        stats_.horizon = cfg.horizon;
        stats_.warmup_end = cfg.warmup_fraction * cfg.horizon;
        Batch proto;
        proto.r.assign(R_ + 1, RBatch{});
        if (!cfg.setup.is_zero()) {
            make_setup_bins();
            proto.bin_time.assign(cfg.setup_age_bins, 0.0);
            proto.bin_n.assign(cfg.setup_age_bins, 0.0);
            proto.bin_age.assign(cfg.setup_age_bins, 0.0);
        }
        stats_.batches.assign(cfg.batch_count, proto);
        sink_ = proto;
        cur_ = &sink_;
        schedule();
    }

    SimStats run() {
        t_arr_ = cfg_.arrival.sample(arr_rng_);
        std::size_t si = 0;
        while (true) {
            double t_sched = si < sched_.size() ? sched_[si].first : kInf;
            int jsrv = -1;
            double t_job = kInf;
            for (int i = 0; i < k_; ++i) {
                if (servers_[i].mode != ServerMode::Busy || servers_[i].serving < 0) continue;
                double t = job_event_time(jobs_[servers_[i].serving]);
                if (t < t_job) t_job = t, jsrv = i;
            }
            int ssrv = -1;
            double t_setup = kInf;
            for (int i = 0; i < k_; ++i)
                if (servers_[i].mode == ServerMode::SettingUp && setup_end_[i] < t_setup)
                    t_setup = setup_end_[i], ssrv = i;
            double t_next = std::min({t_sched, t_job, t_arr_, t_setup});
            advance(t_next);
            ++stats_.events;
            if (t_sched <= t_next) {
                Sched kind = sched_[si].second;
                ++si;
                if (kind == Sched::End) {
                    flush_all();
                    break;
                }
                on_scheduled(kind);
            } else if (t_job <= t_next) {
                on_job_event(servers_[jsrv].serving);
            } else if (t_arr_ <= t_next) {
                on_arrival();
            } else {
                on_setup_done(ssrv);
            }
        }
        finish();
        return std::move(stats_);
    }

private:
    void schedule() {
        double warm = stats_.warmup_end;
        double len = (cfg_.horizon - warm) / cfg_.batch_count;
        if (warm > 0.0) sched_.push_back({warm, Sched::Warmup});
        for (int b = 1; b < cfg_.batch_count; ++b) sched_.push_back({warm + b * len, Sched::BatchEnd});
        for (int i = 0; i < cfg_.snapshot_count; ++i)
            sched_.push_back({warm + (cfg_.horizon - warm) * snap_rng_.uniform01(), Sched::Snapshot});
        for (int i = 0; i < 8; ++i) sched_.push_back({cfg_.horizon * (0.75 + 0.03125 * i), Sched::Window});
        sched_.push_back({cfg_.horizon, Sched::End});
        std::stable_sort(sched_.begin(), sched_.end(), [](const auto& a, const auto& b) {
            if (a.first != b.first) return a.first < b.first;
            return static_cast<int>(a.second) < static_cast<int>(b.second);
        });
        if (warm <= 0.0) cur_ = &stats_.batches[0];
        batch_idx_ = warm <= 0.0 ? 0 : -1;
        window_.assign(8, 0.0);
    }

    void make_setup_bins() {
        Distribution ku = cfg_.setup.scaled(k_);
        double m = ku.mean();
        int nb = cfg_.setup_age_bins;
        edges_.assign(nb + 1, 0.0);
        edges_[nb] = kInf;
        double top = ku.support_max();
        if (!std::isfinite(top)) top = ku.quantile(1.0 - 1e-12);
        for (int b = 1; b < nb; ++b) {
            double q = static_cast<double>(b) / nb;
            double lo = 0.0, hi = top;
            for (int it = 0; it < 200; ++it) {
                double mid = 0.5 * (lo + hi);
                if (1.0 - ku.excess_integral(mid) / m < q)
                    lo = mid;
                else
                    hi = mid;
            }
            edges_[b] = 0.5 * (lo + hi);
        }
        stats_.setup_bin_edges = edges_;
    }

    double job_event_time(const Job& j) const {
        if (known_) {
            double target = j.rel > 0 ? cfg_.r_grid[j.rel - 1] : 0.0;
            return now_ + (j.value - target) * k_;
        }
        double nb = j.piece + 1 < static_cast<int>(pieces_.start.size()) ? pieces_.start[j.piece + 1] : kInf;
        return now_ + (std::min(j.size, nb) - j.value) * k_;
    }

    int busy_count() const {
        int b = 0;
        for (auto& s : servers_) b += s.mode == ServerMode::Busy;
        return b;
    }
    int setting_count() const {
        int b = 0;
        for (auto& s : servers_) b += s.mode == ServerMode::SettingUp;
        return b;
    }

    void advance(double t) {
        double dt = t - now_;
        if (dt <= 0.0) return;
        Batch& B = *cur_;
        int busy = busy_count(), setting = setting_count();
        double jb = static_cast<double>(busy) / k_;
        double ares0 = t_arr_ - now_;
        B.i_n += n_ * dt;
        double iw = wtot_ * dt - 0.5 * jb * dt * dt;
        B.i_w += iw;
        B.i_setup += static_cast<double>(setting) / k_ * dt;
        B.i_busy += jb * dt;
        B.i_ares += ares0 * dt - 0.5 * dt * dt;
        if (window_idx_ >= 0) window_[window_idx_] += iw;
        wtot_ = std::max(0.0, wtot_ - jb * dt);
        if (setting > 0) {
            for (int i = 0; i < k_; ++i) {
                if (servers_[i].mode != ServerMode::SettingUp) continue;
                double a0 = now_ - servers_[i].setup_start, a1 = a0 + dt;
                B.i_setup_age += 0.5 * (a1 * a1 - a0 * a0);
                if (edges_.empty()) continue;
                std::size_t b = std::upper_bound(edges_.begin(), edges_.end(), a0) - edges_.begin() - 1;
                for (; b + 1 < edges_.size() && edges_[b] < a1; ++b) {
                    double lo = std::max(a0, edges_[b]), hi = std::min(a1, edges_[b + 1]);
                    if (hi <= lo) continue;
                    B.bin_time[b] += hi - lo;
                    B.bin_n[b] += n_ * (hi - lo);
                    B.bin_age[b] += 0.5 * (hi * hi - lo * lo);
                }
            }
        }
        double step = dt / k_;
        for (int i = 0; i < k_; ++i) {
            int jb_ = servers_[i].serving;
            if (servers_[i].mode != ServerMode::Busy || jb_ < 0) continue;
            if (known_)
                jobs_[jb_].value -= step;
            else
                jobs_[jb_].value += step;
        }
        now_ = t;
    }

    void flush(std::size_t j) {
        double dt = now_ - last_t_[j];
        if (dt <= 0.0) return;
        RBatch& rb = cur_->r[j];
        double J = static_cast<double>(nserv_[j]) / k_;
        double js = static_cast<double>(setting_) / k_;
        double w0 = w_[j];
        double iw = w0 * dt - 0.5 * J * dt * dt;
        double ares0 = t_arr_ - last_t_[j];
        rb.i_w += iw;
        rb.i_j += J * dt;
        rb.i_jw += J * iw;
        rb.i_sw += js * iw;
        rb.i_jares += J * (ares0 * dt - 0.5 * dt * dt);
        w_[j] = std::max(0.0, w0 - J * dt);
        last_t_[j] = now_;
    }

    void flush_range(std::size_t from, std::size_t to) {
        for (std::size_t j = from; j < to; ++j) flush(j);
    }
    void flush_all() { flush_range(0, R_ + 1); }

    Key key_of(const Job& j) const {
        switch (cfg_.policy) {
            case Policy::Gittins:
                if (known_) return {j.value, j.arrival, j.id};
                return {static_cast<double>(pieces_.cls[j.piece]), j.arrival, j.id};
            case Policy::FCFS: return {j.arrival, 0.0, j.id};
            case Policy::LCFS: return {-j.arrival, 0.0, j.id};
            case Policy::RandomOrder: return {j.label, 0.0, j.id};
        }
        return {};
    }

    void push_waiting(int ji) {
        heap_.push_back({key_of(jobs_[ji]), ji});
        std::push_heap(heap_.begin(), heap_.end(), std::greater<>());
    }
    int pop_waiting() {
        std::pop_heap(heap_.begin(), heap_.end(), std::greater<>());
        int ji = heap_.back().job;
        heap_.pop_back();
        return ji;
    }

    void start_service(int ji, int srv) {
        Job& j = jobs_[ji];
        j.server = srv;
        servers_[srv].serving = ji;
        flush_range(j.rel, R_ + 1);
        for (std::size_t c = j.rel; c <= R_; ++c) ++nserv_[c];
    }
    void stop_service(int ji) {
        Job& j = jobs_[ji];
        flush_range(j.rel, R_ + 1);
        for (std::size_t c = j.rel; c <= R_; ++c) --nserv_[c];
        if (j.server >= 0) servers_[j.server].serving = -1;
        j.server = -1;
    }

    void rebalance() {
        for (int i = 0; i < k_; ++i) {
            if (servers_[i].mode != ServerMode::Busy && servers_[i].serving >= 0) {
                int ji = servers_[i].serving;
                stop_service(ji);
                push_waiting(ji);
            }
        }
        for (int i = 0; i < k_; ++i)
            if (servers_[i].mode == ServerMode::Busy && servers_[i].serving < 0 && !heap_.empty())
                start_service(pop_waiting(), i);
        if (!preemptive_) return;
        while (!heap_.empty()) {
            int worst = -1;
            Key wk;
            for (int i = 0; i < k_; ++i) {
                int ji = servers_[i].serving;
                if (ji < 0) continue;
                Key kk = key_of(jobs_[ji]);
                if (worst < 0 || wk < kk) worst = i, wk = kk;
            }
            if (worst < 0 || !(heap_.front().key < wk)) break;
            int out = servers_[worst].serving;
            stop_service(out);
            start_service(pop_waiting(), worst);
            push_waiting(out);
        }
    }

    void transitions() {
        int before_setting = setting_;
        auto starter = [this]() {
            double u = cfg_.setup.sample(setup_rng_);
            if (batch_idx_ >= 0) {
                cur_->setup_starts += 1;
                ++stats_.setup_starts;
            }
            return u;
        };
        // setup_start/end are filled in after the fact for servers that just began
        std::vector<ServerMode> prev(k_);
        for (int i = 0; i < k_; ++i) prev[i] = servers_[i].mode;
        step_setup_transitions(servers_, n_, starter);
        for (int i = 0; i < k_; ++i) {
            if (servers_[i].mode == ServerMode::SettingUp && prev[i] != ServerMode::SettingUp) {
                servers_[i].setup_start = now_;
                setup_end_[i] = now_ + k_ * servers_[i].setup_remaining;
            }
            if (servers_[i].mode != ServerMode::SettingUp) setup_end_[i] = kInf;
        }
        setting_ = setting_count();
        (void)before_setting;
    }

    void emit(const char* kind) {
        if (!trace_) return;
        TraceEvent e;
        e.time = now_;
        e.kind = kind;
        e.n = n_;
        e.w = wtot_;
        e.servers = &servers_;
        trace_(e);
    }

    void on_arrival() {
        flush_all();
        int ji;
        if (!free_.empty()) {
            ji = free_.back();
            free_.pop_back();
        } else {
            ji = static_cast<int>(jobs_.size());
            jobs_.emplace_back();
        }
        Job& j = jobs_[ji];
        j = Job{};
        j.size = cfg_.job_model.size_dist.sample(size_rng_);
        j.arrival = now_;
        j.id = next_id_++;
        if (cfg_.policy == Policy::RandomOrder) j.label = label_rng_.uniform01();
        if (known_) {
            j.value = j.size;
            j.rel = static_cast<int>(std::upper_bound(cfg_.r_grid.begin(), cfg_.r_grid.end(), j.size) -
                                     cfg_.r_grid.begin());
        } else {
            j.value = 0.0;
            j.piece = 0;
            j.rel = pieces_.rel[0];
        }
        RBatch* rb = cur_->r.data();
        for (std::size_t c = j.rel; c <= R_; ++c) {
            double s = known_ || c == R_ ? j.size : std::min(j.size, pieces_.arrival_y[c]);
            w_[c] += s;
            rb[c].arr_s += s;
            rb[c].arr_s2 += s * s;
        }
        wtot_ += j.size;
        ++n_;
        ++stats_.arrivals;
        if (batch_idx_ >= 0) {
            cur_->arrivals += 1;
            ++stats_.post_warmup_arrivals;
        }
        t_arr_ = now_ + cfg_.arrival.sample(arr_rng_);
        push_waiting(ji);
        transitions();
        rebalance();
        emit("arrival");
    }

    void on_departure(int ji) {
        flush_all();
        stop_service(ji);
        free_.push_back(ji);
        --n_;
        if (batch_idx_ >= 0) cur_->departures += 1;
        if (n_ == 0) {
            std::fill(w_.begin(), w_.end(), 0.0);
            wtot_ = 0.0;
        }
        transitions();
        rebalance();
        emit("departure");
    }

    void recycle(std::size_t c, double m1, double m2, double s) {
        flush(c);
        RBatch& rb = cur_->r[c];
        double w = w_[c], ares = t_arr_ - now_;
        rb.n_rcy += 1;
        rb.rcy_m1 += m1;
        rb.rcy_m2 += m2;
        rb.rcy_m1_w += m1 * w;
        rb.rcy_m1_ares += m1 * ares;
        rb.rcy_s += s;
        rb.rcy_s2 += s * s;
        rb.rcy_s_w += s * w;
        rb.rcy_s_ares += s * ares;
        w_[c] += s;
        rcy_total_[c] += 1;
    }

    void on_job_event(int ji) {
        Job& j = jobs_[ji];
        if (known_) {
            if (j.rel == 0) {
                j.value = 0.0;
                on_departure(ji);
                return;
            }
            // remaining work drops below r_{rel-1}: that column turns relevant
            std::size_t c = j.rel - 1;
            double r = cfg_.r_grid[c];
            j.value = r;
            recycle(c, r, r * r, r);
            ++nserv_[c];
            j.rel = static_cast<int>(c);
            emit("recycle");
            return;
        }
        double nb = j.piece + 1 < static_cast<int>(pieces_.start.size()) ? pieces_.start[j.piece + 1] : kInf;
        if (j.size <= nb) {
            j.value = j.size;
            on_departure(ji);
            return;
        }
        j.value = nb;
        int q = j.piece + 1;
        int a = j.rel, b = pieces_.rel[q];
        long old_cls = pieces_.cls[j.piece];
        j.piece = q;
        j.rel = b;
        if (b < a) {
            std::size_t off = pieces_.entry_offset[q];
            for (int c = b; c < a; ++c, ++off) {
                double y = pieces_.entry_y[off];
                double s = std::max(0.0, std::min(j.size, y) - nb);
                recycle(c, pieces_.entry_m1[off], pieces_.entry_m2[off], s);
                ++nserv_[c];
            }
        } else if (b > a) {
            flush_range(a, b);
            for (int c = a; c < b; ++c) --nserv_[c];
        }
        if (cfg_.policy == Policy::Gittins && pieces_.cls[q] > old_cls) rebalance();
        emit("crossing");
    }

    void on_setup_done(int srv) {
        flush_all();
        servers_[srv].setup_remaining = 0.0;
        setup_end_[srv] = kInf;
        transitions();
        rebalance();
        emit("setup_done");
    }

    void on_scheduled(Sched kind) {
        switch (kind) {
            case Sched::Warmup:
                flush_all();
                cur_ = &stats_.batches[0];
                batch_idx_ = 0;
                break;
            case Sched::BatchEnd:
                flush_all();
                ++batch_idx_;
                cur_ = &stats_.batches[batch_idx_];
                break;
            case Sched::Snapshot: {
                Snapshot s;
                s.time = now_;
                s.states.reserve(n_);
                for (std::size_t i = 0; i < jobs_.size(); ++i)
                    if (is_live(static_cast<int>(i))) s.states.push_back(jobs_[i].value);
                stats_.snapshots.push_back(std::move(s));
                break;
            }
            case Sched::Window: ++window_idx_; break;
            case Sched::End: break;
        }
    }

    bool is_live(int ji) const {
        // free slots are listed in free_; a linear check is fine at snapshot rate
        return std::find(free_.begin(), free_.end(), ji) == free_.end();
    }

    void finish() {
        double warm = stats_.warmup_end;
        double len = (cfg_.horizon - warm) / cfg_.batch_count;
        for (auto& b : stats_.batches) b.duration = len;
        for (std::size_t c = 0; c <= R_; ++c) {
            if (recycling_storm(rcy_total_[c], static_cast<double>(stats_.arrivals)))
                throw RecyclingStorm("recycling storm at r = " +
                                     (c < R_ ? std::to_string(cfg_.r_grid[c]) : std::string("inf")) + ": " +
                                     std::to_string(rcy_total_[c]) + " recyclings for " +
                                     std::to_string(stats_.arrivals) + " arrivals");
        }
        if (cfg_.detect_nonconvergence && sustained_growth(window_))
            throw NonConvergence("work kept growing over the final quarter of the horizon");
    }

    const SimConfig& cfg_;
    const RankFunction& rf_;
    TraceSink trace_;
    bool known_;
    int k_;
    std::size_t R_;
    AgePieces pieces_;
    Rng arr_rng_, size_rng_, setup_rng_, label_rng_, snap_rng_;
    bool preemptive_ = true;

    double now_ = 0.0, t_arr_ = kInf, wtot_ = 0.0;
    int n_ = 0, setting_ = 0;
    std::uint64_t next_id_ = 0;
    std::vector<Job> jobs_;
    std::vector<int> free_;
    std::vector<HeapItem> heap_;
    std::vector<ServerState> servers_;
    std::vector<double> setup_end_;
    std::vector<double> w_, last_t_, rcy_total_;
    std::vector<int> nserv_;
    std::vector<double> edges_;

    SimStats stats_;
    Batch sink_;
    Batch* cur_ = nullptr;
    int batch_idx_ = -1;
    std::vector<std::pair<double, Sched>> sched_;
    std::vector<double> window_;
    int window_idx_ = -1;
};

}  // namespace

bool sustained_growth(const std::vector<double>& w) {
    if (w.size() < 2) return false;
    for (std::size_t i = 1; i < w.size(); ++i)
        if (!(w[i] > w[i - 1])) return false;
    return w.back() - w.front() > 0.1 * w.back();
}

bool recycling_storm(double recyclings, double arrivals) {
    return recyclings > 1e6 && recyclings > 100.0 * arrivals;
}

SimStats run(const SimConfig& cfg, const RankFunction& rf, const TraceSink& trace) {
    validate(cfg);
    Engine e(cfg, rf, trace);
    return e.run();
}

SimStats run(const SimConfig& cfg) {
    RankFunction rf = make_rank_function(cfg.job_model);
    if (cfg.r_grid.empty()) {
        SimConfig c = cfg;
        c.r_grid = default_r_grid(rf);
        return run(c, rf);
    }
    return run(cfg, rf);
}

// ---- SimStats accessors ----

std::vector<double> SimStats::per_batch(const std::function<double(const Batch&)>& f) const {
    std::vector<double> v;
    v.reserve(batches.size());
    for (const auto& b : batches) v.push_back(b.duration > 0.0 ? f(b) / b.duration : 0.0);
    return v;
}

Estimate SimStats::mean_n() const {
    return batch_mean(per_batch([](const Batch& b) { return b.i_n; }));
}
Estimate SimStats::mean_w() const {
    return batch_mean(per_batch([](const Batch& b) { return b.i_w; }));
}
Estimate SimStats::mean_j_setup() const {
    return batch_mean(per_batch([](const Batch& b) { return b.i_setup; }));
}
Estimate SimStats::mean_busy() const {
    return batch_mean(per_batch([](const Batch& b) { return b.i_busy; }));
}
Estimate SimStats::mean_ares() const {
    return batch_mean(per_batch([](const Batch& b) { return b.i_ares; }));
}
Estimate SimStats::mean_w_r(std::size_t j) const {
    return batch_mean(per_batch([j](const Batch& b) { return b.r[j].i_w; }));
}
Estimate SimStats::mean_j_r(std::size_t j) const {
    return batch_mean(per_batch([j](const Batch& b) { return b.r[j].i_j; }));
}
Estimate SimStats::lambda_rcy(std::size_t j) const {
    return batch_mean(per_batch([j](const Batch& b) { return b.r[j].n_rcy; }));
}
Estimate SimStats::rho_rcy(std::size_t j) const {
    return batch_mean(per_batch([j](const Batch& b) { return b.r[j].rcy_m1; }));
}
Estimate SimStats::rho_rcy_excess(std::size_t j) const {
    return batch_mean(per_batch([j](const Batch& b) { return 0.5 * b.r[j].rcy_m2; }));
}
Estimate SimStats::rho_r_empirical(std::size_t j) const {
    return batch_mean(per_batch([j](const Batch& b) { return b.r[j].arr_s; }));
}
Estimate SimStats::palm_rcy_swr(std::size_t j) const {
    return batch_mean(per_batch([j](const Batch& b) { return b.r[j].rcy_m1_w; }));
}
Estimate SimStats::palm_rcy_sares(std::size_t j) const {
    return batch_mean(per_batch([j](const Batch& b) { return b.r[j].rcy_m1_ares; }));
}
Estimate SimStats::idle_wr(std::size_t j) const {
    return batch_mean(per_batch([j](const Batch& b) { return b.r[j].i_w - b.r[j].i_jw - b.r[j].i_sw; }));
}
Estimate SimStats::setup_wr(std::size_t j) const {
    return batch_mean(per_batch([j](const Batch& b) { return b.r[j].i_sw; }));
}

double SimStats::bin_time(std::size_t b) const {
    double t = 0.0;
    for (const auto& x : batches)
        if (b < x.bin_time.size()) t += x.bin_time[b];
    return t;
}

Estimate SimStats::cond_n_setup(std::size_t b) const {
    std::vector<double> num, den;
    for (const auto& x : batches) {
        if (b >= x.bin_time.size()) continue;
        num.push_back(x.bin_n[b]);
        den.push_back(x.bin_time[b]);
    }
    return ratio_estimate(num, den);
}

Estimate SimStats::cond_age_setup(std::size_t b) const {
    std::vector<double> num, den;
    for (const auto& x : batches) {
        if (b >= x.bin_time.size()) continue;
        num.push_back(x.bin_age[b]);
        den.push_back(x.bin_time[b]);
    }
    return ratio_estimate(num, den);
}

SimStats SimStats::merge(const std::vector<SimStats>& parts) {
    if (parts.empty()) return {};
    SimStats m;
    m.r_grid = parts[0].r_grid;
    m.setup_bin_edges = parts[0].setup_bin_edges;
    m.warmup_end = parts[0].warmup_end;
    m.horizon = parts[0].horizon;
    for (const auto& p : parts) {
        if (p.r_grid != m.r_grid) throw std::invalid_argument("merging runs with different r-grids");
        m.batches.insert(m.batches.end(), p.batches.begin(), p.batches.end());
        m.snapshots.insert(m.snapshots.end(), p.snapshots.begin(), p.snapshots.end());
        m.arrivals += p.arrivals;
        m.post_warmup_arrivals += p.post_warmup_arrivals;
        m.setup_starts += p.setup_starts;
        m.events += p.events;
    }
    return m;
}

}  // namespace gittins
