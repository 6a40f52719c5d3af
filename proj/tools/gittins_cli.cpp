// Command-line driver: simulate, verify, rank-table, bounds.
#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "gittins/errors.hpp"
#include "gittins/experiment.hpp"

using namespace gittins;

namespace {

struct Options {
    std::string config;
    std::optional<std::uint64_t> seed;
    int workers = 0;
    std::string out;
    std::string suite;
    std::string trace;
};

ExperimentSpec load(const Options& o) {
    ExperimentSpec s = load_experiment(o.config);
    if (o.seed) {
        auto j = nlohmann::json::parse(s.base_json);
        j["seed"] = *o.seed;
        s.base_json = j.dump();
    }
    if (!o.suite.empty()) {
        s.suite.clear();
        std::stringstream ss(o.suite);
        for (std::string item; std::getline(ss, item, ',');)
            if (!item.empty()) s.suite.push_back(item);
    }
    expand_points(s);
    return s;
}

int workers_of(const Options& o) { return o.workers > 0 ? o.workers : default_workers(); }

std::string out_dir(const Options& o, const ExperimentSpec& s) { return o.out.empty() ? s.output_dir : o.out; }

int cmd_simulate(const Options& o) {
    ExperimentSpec s = load(o);
    auto points = expand_points(s);
    std::cerr << "simulate: " << points.size() << " point(s) x " << s.replications << " replication(s)\n";
    auto res = run_points(points, s.replications, workers_of(o));
    std::string dir = out_dir(o, s);
    std::filesystem::create_directories(dir);
    {
        std::ofstream f(std::filesystem::path(dir) / "simulate.csv", std::ios::binary);
        write_simulate_csv(f, res);
    }
    {
        std::ofstream f(std::filesystem::path(dir) / "per_r.csv", std::ios::binary);
        write_per_r_csv(f, res);
    }
    if (!o.trace.empty()) {
        std::ofstream f(o.trace, std::ios::binary);
        SimConfig c = res[0].sim;
        c.seed = replication_seed(c.seed, 0);
        run(c, make_rank_function(c.job_model), csv_trace_sink(f));
    }
    write_simulate_csv(std::cout, res);
    return 0;
}

int cmd_verify(const Options& o) {
    ExperimentSpec s = load(o);
    if (s.suite.empty()) throw ConfigError("no checks selected: set \"suite\" in the config or pass --suite");
    auto lines = run_verify(s, workers_of(o), out_dir(o, s));
    bool ok = true;
    for (const auto& l : lines) {
        std::cout << l.check << ": " << l.text << " " << (l.pass ? "PASS" : "FAIL") << '\n';
        ok = ok && l.pass;
    }
    return ok ? 0 : 4;
}

int cmd_rank_table(const Options& o) {
    ExperimentSpec s = load(o);
    auto points = expand_points(s);
    RankFunction rf = make_rank_function(points[0].sim.job_model);
    if (o.out.empty()) {
        write_rank_table_csv(rf, std::cout);
    } else {
        std::ofstream f(o.out, std::ios::binary);
        write_rank_table_csv(rf, f);
    }
    return 0;
}

int cmd_bounds(const Options& o) {
    ExperimentSpec s = load(o);
    std::vector<std::pair<std::string, BoundsReport>> rows;
    for (const auto& p : expand_points(s)) rows.push_back({p.label, loss_terms(p.sim)});
    if (o.out.empty()) {
        write_bounds_csv(std::cout, rows);
    } else {
        std::ofstream f(o.out, std::ios::binary);
        write_bounds_csv(f, rows);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Gittins scheduling simulator and verifier"};
    app.require_subcommand(1);
    Options o;
    auto common = [&](CLI::App* c) {
        c->add_option("--config", o.config, "experiment JSON file")->required();
        c->add_option("--seed", o.seed, "override the base seed");
        c->add_option("--workers", o.workers, "worker threads (default: GITTINS_WORKERS or all cores)");
    };
    auto* sim = app.add_subcommand("simulate", "run replications and write CSV");
    common(sim);
    sim->add_option("--out", o.out, "output directory");
    sim->add_option("--trace", o.trace, "write an event trace of the first replication to this CSV");
    auto* ver = app.add_subcommand("verify", "run verification checks");
    common(ver);
    ver->add_option("--out", o.out, "output directory");
    ver->add_option("--suite", o.suite, "comma-separated checks");
    auto* rt = app.add_subcommand("rank-table", "export the rank table as CSV");
    common(rt);
    rt->add_option("--out", o.out, "output file (default stdout)");
    auto* bd = app.add_subcommand("bounds", "evaluate the loss terms only");
    common(bd);
    bd->add_option("--out", o.out, "output file (default stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }
    try {
        if (*sim) return cmd_simulate(o);
        if (*ver) return cmd_verify(o);
        if (*rt) return cmd_rank_table(o);
        if (*bd) return cmd_bounds(o);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const UnboundedResidual& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const NonConvergence& e) {
        std::cerr << "non-convergence: " << e.what() << '\n';
        return 3;
    } catch (const RecyclingStorm& e) {
        std::cerr << "recycling storm: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
