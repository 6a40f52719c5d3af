#pragma once

#include <iosfwd>
#include <vector>

#include "gittins/dists.hpp"

namespace gittins {

enum class JobKind { KnownSize, UnknownSize };

struct JobModel {
    JobKind kind = JobKind::KnownSize;
    Distribution size_dist = Distribution::exponential(1.0);
};

/// KnownSize: value is remaining work. UnknownSize: value is attained service.
/// `size` is the pre-sampled hidden size; scheduling code must not read it.
struct JobState {
    double value = 0.0;
    bool completed = false;
    double size = 0.0;
};

JobState make_job(const JobModel& model, double size);
/// Applies `service` units of work.
JobState advance(const JobModel& model, JobState state, double service);

/// Gittins rank as a function of the job state. Closed form (rank = x) for
/// known sizes; for unknown sizes a piecewise-linear table over age whose
/// nodes store both the value at the node and the limit from the left, so
/// jumps at atoms of S are represented exactly.
class RankFunction {
public:
    RankFunction() = default;

    const JobModel& model() const { return model_; }
    bool known_size() const { return model_.kind == JobKind::KnownSize; }

    /// Throws DomainExceeded past the tabulated ages.
    double rank(double x) const;
    /// Same as rank() but holds the last tabulated value past the table.
    double rank_clamped(double x) const;
    /// Largest age covered by the table (infinity for known sizes).
    double domain_max() const;

    /// y*(x, r): first age >= x whose rank is >= r; infinity if none.
    double first_irrelevant_age(double x, double r) const;
    /// E[S_r(x)] and E[S_r(x)^2] for a state that has not completed.
    double expected_r_work(double x, double r) const;
    double second_r_work(double x, double r) const;
    /// Realized r-work min(S, y*) - x of a job whose hidden size is `size`.
    double realized_r_work(double x, double r, double size) const;

    /// Sup of the rank over [x, end of table].
    double max_rank_from(double x) const;

    const std::vector<double>& ages() const { return ages_; }
    const std::vector<double>& values() const { return values_; }
    const std::vector<double>& left_values() const { return left_; }

    friend RankFunction make_known_rank(const JobModel& model);
    friend RankFunction build_rank_table(const JobModel& model, const std::vector<double>& grid);

private:
    std::size_t segment_of(double x) const;
    double segment_value(std::size_t i, double x) const;
    double segment_max(std::size_t i) const;
    // first segment index >= i whose max is >= r, or npos
    std::size_t first_segment_at_least(std::size_t i, double r) const;
    double tail_mean_after(double x) const;

    JobModel model_;
    std::vector<double> ages_;
    std::vector<double> values_;
    std::vector<double> left_;
    std::vector<double> tree_;  // max segment tree over segment maxima
    std::size_t leaves_ = 0;
};

/// Default age grid: 0, 4096 log-spaced ages up to the 1 - 1e-9 quantile
/// (or the end of the support), and every atom of S.
std::vector<double> default_age_grid(const Distribution& size);

RankFunction make_known_rank(const JobModel& model);
RankFunction build_rank_table(const JobModel& model, const std::vector<double>& grid);
/// Known sizes get the closed form, unknown sizes the default table.
RankFunction make_rank_function(const JobModel& model);

/// Ex. 4.2 ratio (G(y) - G(x)) / (T(x) - T(y)) evaluated directly.
double gittins_ratio(const Distribution& s, double x, double y);

double gittins_rank(const RankFunction& rf, const JobState& state);
double expected_r_work(const RankFunction& rf, const JobState& state, double r);
double single_job_wine(const RankFunction& rf, const JobState& state);

void write_rank_table_csv(const RankFunction& rf, std::ostream& out);

}  // namespace gittins
