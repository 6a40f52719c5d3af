#include "gittins/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "gittins/errors.hpp"
#include "gittins/rng.hpp"

namespace gittins {

using nlohmann::json;

namespace {

std::string g17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}
std::string g12(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

double num(const json& j, const std::string& key, const std::string& path) {
    if (!j.contains(key)) throw ConfigError(path + "." + key + ": missing");
    if (!j[key].is_number()) throw ConfigError(path + "." + key + ": expected a number");
    return j[key].get<double>();
}

std::vector<double> num_list(const json& j, const std::string& key, const std::string& path) {
    if (!j.contains(key)) throw ConfigError(path + "." + key + ": missing");
    if (!j[key].is_array()) throw ConfigError(path + "." + key + ": expected a list of numbers");
    std::vector<double> v;
    for (const auto& x : j[key]) {
        if (!x.is_number()) throw ConfigError(path + "." + key + ": expected a list of numbers");
        v.push_back(x.get<double>());
    }
    return v;
}

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& path) {
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!allowed.count(it.key())) throw ConfigError(path + "." + it.key() + ": unknown field");
}

Distribution parse_dist(const json& j, const std::string& path) {
    if (!j.is_object()) throw ConfigError(path + ": expected an object with a 'family' field");
    if (!j.contains("family") || !j["family"].is_string()) throw ConfigError(path + ".family: missing");
    std::string f = j["family"].get<std::string>();
    try {
        if (f == "zero") {
            check_keys(j, {"family"}, path);
            return Distribution::zero();
        }
        if (f == "deterministic") {
            check_keys(j, {"family", "value"}, path);
            return Distribution::deterministic(num(j, "value", path));
        }
        if (f == "exponential") {
            check_keys(j, {"family", "rate", "mean"}, path);
            if (j.contains("mean")) return Distribution::exponential(1.0 / num(j, "mean", path));
            return Distribution::exponential(num(j, "rate", path));
        }
        if (f == "uniform") {
            check_keys(j, {"family", "low", "high"}, path);
            return Distribution::uniform(num(j, "low", path), num(j, "high", path));
        }
        if (f == "hyperexponential") {
            check_keys(j, {"family", "probs", "rates", "mean", "cv2"}, path);
            if (j.contains("cv2"))
                return Distribution::hyperexponential_balanced(num(j, "mean", path), num(j, "cv2", path));
            return Distribution::hyperexponential(num_list(j, "probs", path), num_list(j, "rates", path));
        }
        if (f == "erlang") {
            check_keys(j, {"family", "phases", "rate"}, path);
            double ph = num(j, "phases", path);
            if (ph != std::floor(ph)) throw ConfigError(path + ".phases: expected an integer");
            return Distribution::erlang(static_cast<int>(ph), num(j, "rate", path));
        }
        if (f == "bounded_pareto") {
            check_keys(j, {"family", "alpha", "low", "high"}, path);
            return Distribution::bounded_pareto(num(j, "alpha", path), num(j, "low", path), num(j, "high", path));
        }
        if (f == "bimodal") {
            check_keys(j, {"family", "low", "p_low", "high"}, path);
            return Distribution::bimodal(num(j, "low", path), num(j, "p_low", path), num(j, "high", path));
        }
    } catch (const std::invalid_argument& e) {
        throw ConfigError(path + ": " + e.what());
    }
    throw ConfigError(path + ".family: unknown family '" + f + "'");
}

const std::set<std::string> kPointKeys{"label", "k", "arrival", "size", "job_model", "setup", "policy", "rho",
                                       "horizon", "arrivals", "horizon_ref_rho", "warmup_fraction", "seed",
                                       "batch_count", "snapshot_count", "rank_resolution",
                                       "detect_nonconvergence", "setup_age_bins", "r_grid", "r_points"};

PointConfig parse_point(const json& j) {
    const std::string p = "config";
    if (!j.is_object()) throw ConfigError("config: expected an object");
    check_keys(j, kPointKeys, p);
    PointConfig pc;
    SimConfig& c = pc.sim;
    if (j.contains("label")) pc.label = j["label"].get<std::string>();
    if (j.contains("k")) {
        double k = num(j, "k", p);
        if (k < 1 || k != std::floor(k)) throw ConfigError("config.k: expected an integer >= 1");
        c.k = static_cast<int>(k);
    }
    if (!j.contains("arrival")) throw ConfigError("config.arrival: missing");
    if (!j.contains("size")) throw ConfigError("config.size: missing");
    c.arrival = parse_dist(j["arrival"], p + ".arrival");
    c.job_model.size_dist = parse_dist(j["size"], p + ".size");
    std::string jm = j.value("job_model", std::string("unknown"));
    if (jm == "known" || jm == "known_size")
        c.job_model.kind = JobKind::KnownSize;
    else if (jm == "unknown" || jm == "unknown_size")
        c.job_model.kind = JobKind::UnknownSize;
    else
        throw ConfigError("config.job_model: expected 'known' or 'unknown'");
    if (j.contains("setup")) c.setup = parse_dist(j["setup"], p + ".setup");
    if (j.contains("policy")) {
        try {
            c.policy = parse_policy(j["policy"].get<std::string>());
        } catch (const ConfigError& e) {
            throw ConfigError(std::string("config.policy: ") + e.what());
        }
    }
    if (c.arrival.is_zero()) throw ConfigError("config.arrival: must have positive mean");
    if (c.job_model.size_dist.is_zero()) throw ConfigError("config.size: must have positive mean");
    if (j.contains("rho")) {
        double rho = num(j, "rho", p);
        if (!(rho > 0.0 && rho < 1.0)) throw ConfigError("config.rho: must be in (0, 1)");
        c.arrival = c.arrival.scaled(c.rho() / rho);
    }
    if (j.contains("arrivals"))
        c.horizon = num(j, "arrivals", p) * c.arrival.mean();
    else if (j.contains("horizon"))
        c.horizon = num(j, "horizon", p);
    if (j.contains("horizon_ref_rho")) {
        double r0 = num(j, "horizon_ref_rho", p);
        double s = (1.0 - r0) / (1.0 - c.rho());
        c.horizon *= s * s;
    }
    if (j.contains("warmup_fraction")) c.warmup_fraction = num(j, "warmup_fraction", p);
    if (j.contains("seed")) {
        if (!j["seed"].is_number_unsigned()) throw ConfigError("config.seed: expected an unsigned integer");
        c.seed = j["seed"].get<std::uint64_t>();
    }
    if (j.contains("batch_count")) c.batch_count = static_cast<int>(num(j, "batch_count", p));
    if (j.contains("snapshot_count")) c.snapshot_count = static_cast<int>(num(j, "snapshot_count", p));
    if (j.contains("rank_resolution")) c.rank_resolution = num(j, "rank_resolution", p);
    if (j.contains("detect_nonconvergence")) c.detect_nonconvergence = j["detect_nonconvergence"].get<bool>();
    if (j.contains("setup_age_bins")) c.setup_age_bins = static_cast<int>(num(j, "setup_age_bins", p));
    if (j.contains("r_grid")) c.r_grid = num_list(j, "r_grid", p);
    if (j.contains("r_points")) pc.r_points = static_cast<int>(num(j, "r_points", p));
    if (pc.r_points < 8) throw ConfigError("config.r_points: must be >= 8");
    try {
        c.arrival.residual_bounds();
    } catch (const UnboundedResidual& e) {
        throw ConfigError(std::string("config.arrival: ") + e.what());
    }
    validate(c);
    return pc;
}

json parse_text(const std::string& text) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        std::size_t line = 1, col = 1;
        for (std::size_t i = 0; i < e.byte && i < text.size(); ++i) {
            if (text[i] == '\n')
                ++line, col = 1;
            else
                ++col;
        }
        throw ConfigError("line " + std::to_string(line) + ", column " + std::to_string(col) + ": " + e.what());
    }
}

std::string point_label(const json& j) {
    std::string s;
    for (const char* k : {"rho", "k", "policy"}) {
        if (!j.contains(k)) continue;
        if (!s.empty()) s += ",";
        s += k;
        s += "=";
        s += j[k].is_string() ? j[k].get<std::string>() : g12(j[k].get<double>());
    }
    return s.empty() ? "base" : s;
}

const char* kind_name(JobKind k) { return k == JobKind::KnownSize ? "known" : "unknown"; }

std::string dist_text(const Distribution& d) {
    std::string s = d.family_name() + "(";
    std::visit(
        [&](const auto& p) {
            using T = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<T, Deterministic>)
                s += g17(p.value);
            else if constexpr (std::is_same_v<T, Exponential>)
                s += g17(p.rate);
            else if constexpr (std::is_same_v<T, Uniform>)
                s += g17(p.low) + "," + g17(p.high);
            else if constexpr (std::is_same_v<T, Hyperexponential>) {
                for (std::size_t i = 0; i < p.probs.size(); ++i)
                    s += (i ? "," : "") + g17(p.probs[i]) + ":" + g17(p.rates[i]);
            } else if constexpr (std::is_same_v<T, Erlang>)
                s += std::to_string(p.phases) + "," + g17(p.rate);
            else if constexpr (std::is_same_v<T, BoundedPareto>)
                s += g17(p.alpha) + "," + g17(p.low) + "," + g17(p.high);
            else if constexpr (std::is_same_v<T, Bimodal>)
                s += g17(p.low) + "," + g17(p.p_low) + "," + g17(p.high);
        },
        d.params());
    return s + ")";
}

}  // namespace

Distribution distribution_from_json(const std::string& text) { return parse_dist(parse_text(text), "dist"); }

PointConfig point_from_json(const std::string& text) { return parse_point(parse_text(text)); }

ExperimentSpec parse_experiment(const std::string& text) {
    json j = parse_text(text);
    if (!j.is_object()) throw ConfigError("experiment: expected an object");
    ExperimentSpec s;
    json base = j;
    for (const char* k : {"name", "sweep", "suite", "replications", "output_dir", "baseline", "compare_policies",
                          "heavy_traffic"})
        base.erase(k);
    if (j.contains("name")) s.name = j["name"].get<std::string>();
    if (j.contains("replications")) {
        double r = num(j, "replications", "experiment");
        if (r < 1 || r != std::floor(r)) throw ConfigError("experiment.replications: expected an integer >= 1");
        s.replications = static_cast<int>(r);
    }
    if (j.contains("output_dir")) s.output_dir = j["output_dir"].get<std::string>();
    if (j.contains("suite")) {
        static const std::set<std::string> known{"simulate",  "wine", "decomposition", "gap",
                                                 "single-server-optimality", "heavy-traffic", "setup-bound"};
        for (const auto& x : j["suite"]) {
            std::string n = x.get<std::string>();
            if (!known.count(n)) throw ConfigError("experiment.suite: unknown check '" + n + "'");
            s.suite.push_back(n);
        }
    }
    if (j.contains("sweep")) {
        const json& sw = j["sweep"];
        check_keys(sw, {"rho", "k", "policy"}, "experiment.sweep");
        if (sw.contains("rho")) s.rho_sweep = num_list(sw, "rho", "experiment.sweep");
        if (sw.contains("k"))
            for (double k : num_list(sw, "k", "experiment.sweep")) s.k_sweep.push_back(static_cast<int>(k));
        if (sw.contains("policy"))
            for (const auto& x : sw["policy"]) s.policy_sweep.push_back(x.get<std::string>());
        for (const char* k : {"rho", "k", "policy"})
            if (sw.contains(k) && sw[k].empty()) throw ConfigError(std::string("experiment.sweep.") + k + ": empty");
    }
    if (j.contains("baseline")) {
        if (!j["baseline"].is_object()) throw ConfigError("experiment.baseline: expected an object");
        s.baseline_json = j["baseline"].dump();
    }
    if (j.contains("compare_policies")) {
        s.compare_policies.clear();
        for (const auto& x : j["compare_policies"]) s.compare_policies.push_back(x.get<std::string>());
    }
    if (j.contains("heavy_traffic")) {
        const json& h = j["heavy_traffic"];
        check_keys(h, {"limit", "final_rel_tol", "final_max"}, "experiment.heavy_traffic");
        if (h.contains("limit")) s.ht_limit = num(h, "limit", "experiment.heavy_traffic");
        if (h.contains("final_rel_tol")) s.ht_final_rel_tol = num(h, "final_rel_tol", "experiment.heavy_traffic");
        if (h.contains("final_max")) s.ht_final_max = num(h, "final_max", "experiment.heavy_traffic");
    }
    s.base_json = base.dump();
    // validates the base and every sweep point up front
    expand_points(s);
    return s;
}

ExperimentSpec load_experiment(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_experiment(ss.str());
}

std::vector<PointConfig> expand_points(const ExperimentSpec& spec) {
    json base = json::parse(spec.base_json);
    std::vector<json> rhos{json()}, ks{json()}, pols{json()};
    if (!spec.rho_sweep.empty()) {
        rhos.clear();
        for (double r : spec.rho_sweep) rhos.push_back(r);
    }
    if (!spec.k_sweep.empty()) {
        ks.clear();
        for (int k : spec.k_sweep) ks.push_back(k);
    }
    if (!spec.policy_sweep.empty()) {
        pols.clear();
        for (const auto& p : spec.policy_sweep) pols.push_back(p);
    }
    std::vector<PointConfig> out;
    for (const auto& r : rhos)
        for (const auto& k : ks)
            for (const auto& p : pols) {
                json pj = base, over = json::object();
                if (!r.is_null()) over["rho"] = r;
                if (!k.is_null()) over["k"] = k;
                if (!p.is_null()) over["policy"] = p;
                pj.merge_patch(over);
                PointConfig pc = parse_point(pj);
                std::string lab = point_label(over);
                pc.label = pc.label.empty() ? lab : pc.label + (lab == "base" ? "" : "[" + lab + "]");
                if (spec.baseline_json) {
                    // baseline keys replace whole fields, so a distribution is swapped, not merged
                    json bj = base, over_b = json::parse(*spec.baseline_json);
                    for (const auto& [key, value] : over_b.items()) bj[key] = value;
                    // the baseline follows the load of its point
                    if (!r.is_null()) bj["rho"] = r;
                    pc.baseline_json = bj.dump();
                    parse_point(bj);
                }
                out.push_back(std::move(pc));
            }
    return out;
}

std::string describe(const SimConfig& c) {
    std::string s;
    s += "k=" + std::to_string(c.k);
    s += ";arrival=" + dist_text(c.arrival);
    s += ";size=" + dist_text(c.job_model.size_dist);
    s += ";job_model=" + std::string(kind_name(c.job_model.kind));
    s += ";setup=" + dist_text(c.setup);
    s += ";policy=" + policy_name(c.policy);
    s += ";horizon=" + g17(c.horizon);
    s += ";warmup=" + g17(c.warmup_fraction);
    s += ";seed=" + std::to_string(c.seed);
    s += ";batches=" + std::to_string(c.batch_count);
    s += ";snapshots=" + std::to_string(c.snapshot_count);
    s += ";resolution=" + g17(c.rank_resolution);
    s += ";nonconv=" + std::to_string(c.detect_nonconvergence ? 1 : 0);
    s += ";setup_bins=" + std::to_string(c.setup_age_bins);
    s += ";r_grid=";
    for (double r : c.r_grid) s += g17(r) + ",";
    return s;
}

std::uint64_t config_hash(const SimConfig& cfg) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char ch : describe(cfg)) {
        h ^= ch;
        h *= 1099511628211ULL;
    }
    return h;
}

std::string hash_hex(std::uint64_t h) {
    char buf[24];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::uint64_t replication_seed(std::uint64_t base, int replication) {
    return derive_seed(base, 0x100 + static_cast<std::uint64_t>(replication));
}

int default_workers() {
    if (const char* e = std::getenv("GITTINS_WORKERS")) {
        int w = std::atoi(e);
        if (w >= 1) return w;
    }
    unsigned hc = std::thread::hardware_concurrency();
    return hc == 0 ? 1 : static_cast<int>(hc);
}

std::vector<PointResult> run_points(const std::vector<PointConfig>& points, int replications, int workers) {
    std::vector<PointResult> res(points.size());
    std::vector<std::shared_ptr<RankFunction>> rfs(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) {
        res[i].point = points[i];
        res[i].sim = points[i].sim;
        rfs[i] = std::make_shared<RankFunction>(make_rank_function(points[i].sim.job_model));
        if (res[i].sim.r_grid.empty()) res[i].sim.r_grid = default_r_grid(*rfs[i], points[i].r_points);
        res[i].hash = config_hash(res[i].sim);
        res[i].replications.resize(replications);
    }
    const std::size_t tasks = points.size() * static_cast<std::size_t>(replications);
    std::vector<std::exception_ptr> errors(tasks);
    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        for (std::size_t t; (t = next.fetch_add(1)) < tasks;) {
            std::size_t i = t / replications;
            int r = static_cast<int>(t % replications);
            try {
                SimConfig c = res[i].sim;
                c.seed = replication_seed(c.seed, r);
                res[i].replications[r] = run(c, *rfs[i]);
            } catch (...) {
                errors[t] = std::current_exception();
            }
        }
    };
    int w = std::max(1, std::min<int>(workers, static_cast<int>(tasks)));
    std::vector<std::thread> pool;
    for (int i = 1; i < w; ++i) pool.emplace_back(worker);
    worker();
    for (auto& th : pool) th.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    for (auto& r : res) r.merged = SimStats::merge(r.replications);
    return res;
}

namespace {

void stats_cols(std::ostream& os, const SimStats& s) {
    for (Estimate e : {s.mean_n(), s.mean_w(), s.mean_j_setup(), s.mean_busy()})
        os << ',' << g12(e.mean) << ',' << g12(e.ci);
}

}  // namespace

void write_simulate_csv(std::ostream& os, const std::vector<PointResult>& results) {
    os << "config_hash,label,replication,seed,rho,k,policy,job_model,horizon,arrivals,"
          "mean_n,mean_n_ci,mean_w,mean_w_ci,mean_j_setup,mean_j_setup_ci,mean_busy,mean_busy_ci\n";
    for (const auto& r : results) {
        auto head = [&](const std::string& rep, std::uint64_t seed, std::uint64_t arrivals) {
            os << hash_hex(r.hash) << ',' << r.point.label << ',' << rep << ',' << seed << ',' << g12(r.sim.rho())
               << ',' << r.sim.k << ',' << policy_name(r.sim.policy) << ',' << kind_name(r.sim.job_model.kind)
               << ',' << g12(r.sim.horizon) << ',' << arrivals;
        };
        for (std::size_t i = 0; i < r.replications.size(); ++i) {
            head(std::to_string(i), replication_seed(r.sim.seed, static_cast<int>(i)), r.replications[i].arrivals);
            stats_cols(os, r.replications[i]);
            os << '\n';
        }
        head("merged", r.sim.seed, r.merged.arrivals);
        stats_cols(os, r.merged);
        os << '\n';
    }
}

void write_per_r_csv(std::ostream& os, const std::vector<PointResult>& results) {
    os << "config_hash,label,r,mean_w_r,mean_w_r_ci,mean_j_r,mean_j_r_ci,rho_r,rho_r_ci,rho_rcy,rho_rcy_ci,"
          "lambda_rcy,lambda_rcy_ci\n";
    for (const auto& r : results) {
        const SimStats& s = r.merged;
        for (std::size_t j = 0; j < s.columns(); ++j) {
            os << hash_hex(r.hash) << ',' << r.point.label << ','
               << (j < s.r_grid.size() ? g12(s.r_grid[j]) : std::string("inf"));
            for (Estimate e : {s.mean_w_r(j), s.mean_j_r(j), s.rho_r_empirical(j), s.rho_rcy(j), s.lambda_rcy(j)})
                os << ',' << g12(e.mean) << ',' << g12(e.ci);
            os << '\n';
        }
    }
}

void write_bounds_csv(std::ostream& os, const std::vector<std::pair<std::string, BoundsReport>>& rows) {
    os << "label,loss_a,loss_b,loss_c,total,c_const,a_min,a_max,setup_excess,gap,gap_ci\n";
    for (const auto& [label, b] : rows)
        os << label << ',' << g12(b.loss_a) << ',' << g12(b.loss_b) << ',' << g12(b.loss_c) << ',' << g12(b.total())
           << ',' << g12(b.c_const) << ',' << g12(b.a_min) << ',' << g12(b.a_max) << ',' << g12(b.setup_excess)
           << ',' << g12(b.gap_observed.mean) << ',' << g12(b.gap_observed.ci) << '\n';
}

namespace {

std::string pm(const Estimate& e) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "%.4f ± %.4f", e.mean, e.ci);
    return buf;
}

std::string verdict_word(bool p) { return p ? "PASS" : "FAIL"; }

void write_file(const std::string& dir, const std::string& name, const std::function<void(std::ostream&)>& f) {
    if (dir.empty()) return;
    std::filesystem::create_directories(dir);
    std::ofstream out(std::filesystem::path(dir) / name, std::ios::binary);
    f(out);
}

bool has(const std::vector<std::string>& v, const char* s) { return std::find(v.begin(), v.end(), s) != v.end(); }

}  // namespace

std::vector<VerifyLine> run_verify(const ExperimentSpec& spec, int workers, const std::string& out_dir) {
    std::vector<VerifyLine> lines;
    if (spec.suite.empty()) throw ConfigError("experiment.suite: empty");
    std::vector<PointConfig> points = expand_points(spec);
    const bool need_baseline = has(spec.suite, "gap") || has(spec.suite, "heavy-traffic");
    if (need_baseline && !spec.baseline_json)
        throw ConfigError("experiment.baseline: required by the gap and heavy-traffic checks");
    if (has(spec.suite, "heavy-traffic") && spec.rho_sweep.size() < 2)
        throw ConfigError("experiment.sweep.rho: heavy-traffic needs at least two load values");

    // every run the suite needs, executed together
    std::vector<PointConfig> all = points;
    std::vector<std::size_t> base_idx(points.size(), 0);
    std::vector<std::vector<std::size_t>> comp_idx(points.size());
    if (need_baseline)
        for (std::size_t i = 0; i < points.size(); ++i) {
            PointConfig b = point_from_json(*points[i].baseline_json);
            b.label = points[i].label + "/baseline";
            base_idx[i] = all.size();
            all.push_back(b);
        }
    if (has(spec.suite, "single-server-optimality"))
        for (std::size_t i = 0; i < points.size(); ++i) {
            for (const auto& pol : spec.compare_policies) {
                PointConfig c = points[i];
                c.sim.policy = parse_policy(pol);
                c.label = points[i].label + "/" + pol;
                comp_idx[i].push_back(all.size());
                all.push_back(c);
            }
        }
    std::vector<PointResult> res = run_points(all, spec.replications, workers);

    std::vector<PointResult> main(res.begin(), res.begin() + points.size());
    write_file(out_dir, "simulate.csv", [&](std::ostream& os) { write_simulate_csv(os, res); });
    write_file(out_dir, "per_r.csv", [&](std::ostream& os) { write_per_r_csv(os, res); });

    std::vector<std::pair<std::string, BoundsReport>> bounds_rows;
    for (std::size_t i = 0; i < points.size(); ++i) {
        const PointResult& pr = res[i];
        const std::string& lab = pr.point.label;
        RankFunction rf = make_rank_function(pr.sim.job_model);
        if (has(spec.suite, "wine")) {
            WineReport w = wine_check(pr.merged, rf);
            std::vector<double> diff;
            std::vector<double> wt = r_integral_weights(pr.merged.r_grid);
            for (const auto& b : pr.merged.batches) {
                double s = 0.0;
                for (std::size_t j = 0; j < pr.merged.columns(); ++j) s += wt[j] * b.r[j].i_w / b.duration;
                diff.push_back(b.i_n / b.duration - s);
            }
            Estimate d = batch_mean(diff);
            // 2% allowance for the r-grid quadrature
            bool ok = std::abs(d.mean) <= 3.0 * d.ci + 0.02 * std::abs(w.direct.mean) &&
                      w.pathwise_max_error <= (rf.known_size() ? 1e-6 : 1e-3);
            char buf[256];
            std::snprintf(buf, sizeof buf, "direct %s vs integral %s; snapshots %zu, pathwise max error %.3g",
                          pm(w.direct).c_str(), pm(w.integral).c_str(), w.snapshots, w.pathwise_max_error);
            lines.push_back({"WINE[" + lab + "]", ok, buf});
        }
        if (has(spec.suite, "decomposition")) {
            ModelMoments mm = model_moments(pr.sim, rf);
            DecompositionReport rep = decomposition_check(pr.merged, mm);
            auto acc = e_acc_one(pr.merged, mm);
            bool acc_ok = true;
            for (const auto& e : acc) acc_ok = acc_ok && std::abs(e.mean - 1.0) <= 3.0 * e.ci + 1e-9;
            CostTerms ct = cost_terms(pr.merged, mm);
            char buf[512];
            std::snprintf(buf, sizeof buf,
                          "%zu r values, worst |residual|/(3 CI) %.3f; E_acc[1] %s; m_res %s m_rcy %s m_idle %s "
                          "m_setup %s",
                          rep.rows.size(), rep.worst, acc_ok ? "ok" : "off", pm(ct.m_res).c_str(),
                          pm(ct.m_rcy).c_str(), pm(ct.m_idle).c_str(), pm(ct.m_setup).c_str());
            lines.push_back({"DECOMPOSITION[" + lab + "]", rep.pass && acc_ok, buf});
            write_file(out_dir, "decomposition_" + hash_hex(pr.hash) + ".csv",
                       [&](std::ostream& os) { write_decomposition_csv(os, rep); });
            write_file(out_dir, "cost_terms_" + hash_hex(pr.hash) + ".csv",
                       [&](std::ostream& os) { write_cost_terms_csv(os, ct); });
        }
        BoundsReport br = loss_terms(pr.sim);
        if (has(spec.suite, "gap")) {
            Verdict v = check_gap_multiserver(pr.merged, res[base_idx[i]].merged, br);
            char buf[256];
            std::snprintf(buf, sizeof buf, "gap %.4f ± %.4f vs bound %.4f (l_a %.4f, l_b %.4f, l_c %.4f)", v.observed,
                          v.ci, v.bound, br.loss_a, br.loss_b, br.loss_c);
            lines.push_back({"GAP[" + lab + "]", v.pass, buf});
        }
        bounds_rows.push_back({lab, br});
        if (has(spec.suite, "single-server-optimality")) {
            std::vector<std::pair<std::string, SimStats>> others;
            for (std::size_t c = 0; c < comp_idx[i].size(); ++c)
                others.push_back({spec.compare_policies[c], res[comp_idx[i][c]].merged});
            for (const Verdict& v : check_single_server_optimality(pr.merged, others)) {
                char buf[200];
                std::snprintf(buf, sizeof buf, "E[N] %.4f vs %.4f (combined CI %.4f)", v.observed, v.bound, v.ci);
                lines.push_back({"OPTIMALITY[" + lab + "] " + v.name, v.pass, buf});
            }
        }
        if (has(spec.suite, "setup-bound")) {
            if (pr.sim.setup.is_zero()) {
                lines.push_back({"SETUP-BOUND[" + lab + "]", true, "no setup times; skipped"});
            } else {
                try {
                    auto vs = check_setup_number_bound(pr.merged, pr.sim);
                    bool ok = true;
                    double worst = -1e300;
                    for (const auto& v : vs) {
                        ok = ok && v.pass;
                        worst = std::max(worst, v.observed - v.bound - 3.0 * v.ci);
                    }
                    char buf[200];
                    std::snprintf(buf, sizeof buf, "%zu bins, max (mean - bound - 3 CI) = %.4f, %llu setups",
                                  vs.size(), worst, static_cast<unsigned long long>(pr.merged.setup_starts));
                    lines.push_back({"SETUP-BOUND[" + lab + "]", ok, buf});
                } catch (const InsufficientSamples& e) {
                    lines.push_back({"SETUP-BOUND[" + lab + "]", false, e.what()});
                }
            }
        }
    }
    write_file(out_dir, "bounds.csv", [&](std::ostream& os) { write_bounds_csv(os, bounds_rows); });

    if (has(spec.suite, "heavy-traffic")) {
        // group points that differ only in rho
        std::map<std::string, std::vector<std::size_t>> groups;
        for (std::size_t i = 0; i < points.size(); ++i)
            groups[std::to_string(points[i].sim.k) + "/" + policy_name(points[i].sim.policy)].push_back(i);
        for (const auto& [key, idx] : groups) {
            std::vector<double> rhos;
            std::vector<SimStats> nums, dens;
            for (std::size_t i : idx) {
                rhos.push_back(res[i].sim.rho());
                nums.push_back(res[i].merged);
                dens.push_back(res[base_idx[i]].merged);
            }
            auto pts = heavy_traffic_ratio(rhos, nums, dens);
            const SimConfig& c0 = res[idx[0]].sim;
            double limit = std::isnan(spec.ht_limit) ? heavy_traffic_limit(c0.job_model.size_dist.cv2(),
                                                                           c0.arrival.cv2())
                                                     : spec.ht_limit;
            bool monotone = true;
            std::string text;
            for (std::size_t p = 0; p < pts.size(); ++p) {
                if (p > 0 && std::abs(pts[p].ratio.mean - limit) > std::abs(pts[p - 1].ratio.mean - limit))
                    monotone = false;
                char buf[96];
                std::snprintf(buf, sizeof buf, "%srho %.3g: %s", p ? "; " : "", pts[p].rho, pm(pts[p].ratio).c_str());
                text += buf;
            }
            double last = pts.back().ratio.mean;
            double tol = spec.ht_final_rel_tol;
            if (std::isnan(tol) && std::isinf(spec.ht_final_max)) tol = 0.1;
            bool final_ok = (std::isnan(tol) || std::abs(last - limit) <= tol * limit) && last < spec.ht_final_max;
            char buf[96];
            std::snprintf(buf, sizeof buf, "; limit %.4f", limit);
            lines.push_back({"HEAVY-TRAFFIC[k=" + key + "]", monotone && final_ok, text + buf});
        }
    }
    write_file(out_dir, "verify.txt", [&](std::ostream& os) {
        for (const auto& l : lines) os << l.check << ": " << l.text << " " << verdict_word(l.pass) << '\n';
    });
    return lines;
}

TraceSink csv_trace_sink(std::ostream& os) {
    os << "time,kind,n,w,servers\n";
    return [&os](const TraceEvent& e) {
        os << g12(e.time) << ',' << e.kind << ',' << e.n << ',' << g12(e.w) << ',';
        if (e.servers)
            for (const auto& s : *e.servers)
                os << (s.mode == ServerMode::Idle ? 'I' : s.mode == ServerMode::SettingUp ? 'S' : 'B');
        os << '\n';
    };
}

}  // namespace gittins
