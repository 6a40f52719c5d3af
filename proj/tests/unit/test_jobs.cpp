#include <doctest.h>

#include <cmath>
#include <sstream>

#include "gittins/errors.hpp"
#include "gittins/jobs.hpp"
#include "gittins/rng.hpp"
#include "oracles.hpp"

using namespace gittins;

namespace {
JobModel known(Distribution d) { return {JobKind::KnownSize, std::move(d)}; }
JobModel unknown(Distribution d) { return {JobKind::UnknownSize, std::move(d)}; }
JobState at(double v) {
    JobState s;
    s.value = v;
    return s;
}
}  // namespace

TEST_CASE("advance") {
    auto k = known(Distribution::exponential(1.0));
    JobState s = make_job(k, 3.0);
    s = advance(k, s, 1.0);
    CHECK(s.value == doctest::Approx(2.0));
    CHECK_FALSE(s.completed);
    CHECK(advance(k, make_job(k, 1.0), 1.0).completed);

    auto u = unknown(Distribution::exponential(1.0));
    JobState j = make_job(u, 2.5);
    j = advance(u, j, 2.0);
    CHECK(j.value == doctest::Approx(2.0));
    CHECK_FALSE(j.completed);
    CHECK(advance(u, j, 0.5).completed);
}

TEST_CASE("known-size rank is the remaining work") {
    RankFunction rf = make_rank_function(known(Distribution::exponential(1.0)));
    CHECK(gittins_rank(rf, at(4.2)) == 4.2);
    CHECK(rf.rank(0.37) == 0.37);
}

TEST_CASE("exponential unknown-size rank is 1/mu everywhere") {
    for (double mu : {0.5, 1.0, 3.0}) {
        RankFunction rf = make_rank_function(unknown(Distribution::exponential(mu)));
        for (double x : {0.0, 0.1, 1.0, 5.0 / mu})
            CHECK(gittins_rank(rf, at(x)) == doctest::Approx(1.0 / mu).epsilon(1e-9));
    }
}

TEST_CASE("bimodal rank jumps up at the small atom") {
    auto d = Distribution::bimodal(1.0, 0.9, 10.0);
    RankFunction rf = make_rank_function(unknown(d));
    double before = rf.rank(0.999), after = rf.rank(1.0 + 1e-9);
    CHECK(after > before * 100);
    CHECK(rf.rank(0.0) == doctest::Approx(oracle::brute_rank(d, 0.0)).epsilon(1e-4));
    CHECK(after == doctest::Approx(9.0).epsilon(1e-6));
}

TEST_CASE("deterministic size: rank is s - x") {
    RankFunction rf = make_rank_function(unknown(Distribution::deterministic(2.0)));
    for (double x : {0.0, 0.5, 1.5, 1.99}) CHECK(rf.rank(x) == doctest::Approx(2.0 - x).epsilon(1e-9));
}

TEST_CASE("uniform(0,1) at age 0 has rank 1/2") {
    RankFunction rf = make_rank_function(unknown(Distribution::uniform(0.0, 1.0)));
    CHECK(rf.rank(0.0) == doctest::Approx(0.5).epsilon(1e-9));
    // 1 - y/2 over (0, 1]: the infimum sits at y = 1
    CHECK(gittins_ratio(Distribution::uniform(0.0, 1.0), 0.0, 1.0) == doctest::Approx(0.5));
    CHECK(gittins_ratio(Distribution::uniform(0.0, 1.0), 0.0, 0.01) == doctest::Approx(0.995));
}

TEST_CASE("rank table agrees with brute-force minimization on random states") {
    std::vector<Distribution> ds{Distribution::exponential(1.3),
                                 Distribution::uniform(0.2, 2.0),
                                 Distribution::hyperexponential_balanced(1.0, 4.0),
                                 Distribution::erlang(3, 3.0),
                                 Distribution::bounded_pareto(1.5, 1.0, 50.0),
                                 Distribution::bimodal(1.0, 0.9, 10.0)};
    std::vector<RankFunction> rfs;
    for (const auto& d : ds) rfs.push_back(make_rank_function(unknown(d)));
    Rng rng(2024);
    for (int i = 0; i < 50; ++i) {
        std::size_t m = static_cast<std::size_t>(rng.uniform01() * ds.size());
        const auto& d = ds[m];
        double x = d.quantile(0.95 * rng.uniform01());
        CAPTURE(d.family_name());
        CAPTURE(x);
        double want = oracle::brute_rank(d, x);
        CHECK(std::abs(rfs[m].rank(x) - want) <= 1e-4 * want);
    }
}

TEST_CASE("rank past the table throws") {
    RankFunction rf = make_rank_function(unknown(Distribution::uniform(0.0, 1.0)));
    CHECK_THROWS_AS(rf.rank(rf.domain_max() * 2 + 1), DomainExceeded);
}

TEST_CASE("expected r-work") {
    RankFunction k = make_rank_function(known(Distribution::exponential(1.0)));
    CHECK(expected_r_work(k, at(2.0), 3.0) == 2.0);
    CHECK(expected_r_work(k, at(3.0), 3.0) == 0.0);
    RankFunction u = make_rank_function(unknown(Distribution::exponential(1.0)));
    for (double x : {0.0, 0.7, 3.0}) CHECK(expected_r_work(u, at(x), 2.0) == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(expected_r_work(u, at(0.3), 0.5) == 0.0);
}

TEST_CASE("bimodal r-work stops at the jump") {
    auto d = Distribution::bimodal(1.0, 0.9, 10.0);
    RankFunction u = make_rank_function(unknown(d));
    // r between the rank before and after the atom: y* = 1, so E[min(S, 1)] = 1
    CHECK(expected_r_work(u, at(0.0), 5.0) == doctest::Approx(oracle::service_to(d, 0.0, 1.0)).epsilon(1e-9));
    CHECK(expected_r_work(u, at(0.0), 20.0) == doctest::Approx(d.mean()).epsilon(1e-9));
}

TEST_CASE("expected r-work is nondecreasing in r") {
    for (const auto& d : {Distribution::bimodal(1.0, 0.9, 10.0), Distribution::hyperexponential_balanced(1.0, 4.0),
                          Distribution::uniform(0.0, 1.0)}) {
        RankFunction u = make_rank_function(unknown(d));
        for (double x : {0.0, 0.4, 1.2}) {
            if (!(d.tail(x) > 0)) continue;
            double prev = 0.0;
            for (int i = 0; i < 300; ++i) {
                double r = 1e-3 * std::pow(1e5, i / 299.0);
                double v = u.expected_r_work(x, r);
                CHECK(v >= prev - 1e-12);
                prev = v;
            }
        }
    }
}

TEST_CASE("single-job WINE") {
    RankFunction k = make_rank_function(known(Distribution::exponential(1.0)));
    CHECK(single_job_wine(k, at(1.0)) == 1.0);
    CHECK(single_job_wine(make_rank_function(unknown(Distribution::exponential(1.0))), at(0.0)) ==
          doctest::Approx(1.0).epsilon(1e-3));
    CHECK(single_job_wine(make_rank_function(unknown(Distribution::bimodal(1.0, 0.9, 10.0))), at(0.0)) ==
          doctest::Approx(1.0).epsilon(1e-3));
}

TEST_CASE("single-job WINE is 1 for random states of every model") {
    std::vector<JobModel> ms{known(Distribution::exponential(1.0)),
                             unknown(Distribution::exponential(2.0)),
                             unknown(Distribution::bimodal(1.0, 0.9, 10.0)),
                             unknown(Distribution::uniform(0.0, 1.0)),
                             unknown(Distribution::hyperexponential_balanced(1.0, 4.0)),
                             unknown(Distribution::erlang(2, 2.0)),
                             unknown(Distribution::bounded_pareto(1.5, 1.0, 50.0)),
                             unknown(Distribution::deterministic(1.5))};
    Rng rng(77);
    for (const auto& m : ms) {
        RankFunction rf = make_rank_function(m);
        for (int i = 0; i < 100; ++i) {
            double x = m.size_dist.quantile(0.99 * rng.uniform01());
            if (m.kind == JobKind::KnownSize && x == 0.0) continue;
            CAPTURE(m.size_dist.family_name());
            CAPTURE(x);
            CHECK(std::abs(single_job_wine(rf, at(x)) - 1.0) <= (m.kind == JobKind::KnownSize ? 1e-12 : 1e-3));
        }
    }
}

TEST_CASE("rank table CSV") {
    RankFunction rf = make_rank_function(unknown(Distribution::exponential(1.0)));
    std::ostringstream os;
    write_rank_table_csv(rf, os);
    std::string s = os.str();
    CHECK(s.rfind("age,rank,left_limit\n", 0) == 0);
    CHECK(std::count(s.begin(), s.end(), '\n') == static_cast<long>(rf.ages().size()) + 1);
}
