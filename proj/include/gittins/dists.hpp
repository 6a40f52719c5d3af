#pragma once

#include <functional>
#include <string>
#include <variant>
#include <vector>

#include "gittins/rng.hpp"

namespace gittins {

struct Deterministic {
    double value;
    bool operator==(const Deterministic&) const = default;
};
struct Exponential {
    double rate;
    bool operator==(const Exponential&) const = default;
};
struct Uniform {
    double low;
    double high;
    bool operator==(const Uniform&) const = default;
};
struct Hyperexponential {
    std::vector<double> probs;
    std::vector<double> rates;
    bool operator==(const Hyperexponential&) const = default;
};
struct Erlang {
    int phases;
    double rate;
    bool operator==(const Erlang&) const = default;
};
struct BoundedPareto {
    double alpha;
    double low;
    double high;
    bool operator==(const BoundedPareto&) const = default;
};
/// Two-point distribution: `low` with probability `p_low`, otherwise `high`.
struct Bimodal {
    double low;
    double p_low;
    double high;
    bool operator==(const Bimodal&) const = default;
};

/// Bounds on E[A - a | A > a] over all ages a >= 0.
struct ResidualBounds {
    double a_min = 0.0;
    double a_max = 0.0;
    bool operator==(const ResidualBounds&) const = default;
};

/// Nonnegative parametric distribution with exact moments, tail and the
/// partial integrals the rank and r-work computations need.
class Distribution {
public:
    using Params = std::variant<Deterministic, Exponential, Uniform, Hyperexponential, Erlang,
                                BoundedPareto, Bimodal>;

    /// Validates parameters; throws std::invalid_argument.
    explicit Distribution(Params params);

    static Distribution deterministic(double value) { return Distribution(Deterministic{value}); }
    static Distribution exponential(double rate) { return Distribution(Exponential{rate}); }
    static Distribution uniform(double low, double high) { return Distribution(Uniform{low, high}); }
    static Distribution hyperexponential(std::vector<double> probs, std::vector<double> rates) {
        return Distribution(Hyperexponential{std::move(probs), std::move(rates)});
    }
    static Distribution erlang(int phases, double rate) { return Distribution(Erlang{phases, rate}); }
    static Distribution bounded_pareto(double alpha, double low, double high) {
        return Distribution(BoundedPareto{alpha, low, high});
    }
    static Distribution bimodal(double low, double p_low, double high) {
        return Distribution(Bimodal{low, p_low, high});
    }
    static Distribution zero() { return deterministic(0.0); }

    /// Two-branch hyperexponential with balanced means, given mean and cv^2 > 1.
    static Distribution hyperexponential_balanced(double mean, double cv2);

    const Params& params() const { return params_; }
    std::string family_name() const;

    double mean() const;
    double second_moment() const;
    double variance() const;
    double cv2() const;
    /// E[V_e] = E[V^2] / (2 E[V]); zero for the identically-zero distribution.
    double excess_mean() const;
    bool is_zero() const;

    /// P(V > t), right-continuous.
    double tail(double t) const;
    /// Density of the absolutely continuous part.
    double density(double t) const;
    /// P(V = t).
    double mass_at(double t) const;
    /// E[min(V, y)] = integral of tail over [0, y].
    double integrated_tail(double y) const;
    /// E[min(V, y)^2] / 2 = integral of u * tail(u) over [0, y].
    double integrated_moment_tail(double y) const;
    /// E[(V - x)^+] = integral of tail over [x, inf); accurate far in the tail.
    double excess_integral(double x) const;
    /// E[((V - x)^+)^2] / 2.
    double excess_moment_integral(double x) const;
    double quantile(double p) const;
    /// Supremum of the support (infinity if unbounded).
    double support_max() const;
    std::vector<double> atoms() const;

    double sample(Rng& rng) const;
    /// Distribution of c * V.
    Distribution scaled(double c) const;

    ResidualBounds residual_bounds() const;

    bool operator==(const Distribution& other) const;

private:
    Params params_;
};

double sample(const Distribution& d, Rng& rng);
double excess_mean(const Distribution& d);
double cv2(const Distribution& d);
/// Throws UnboundedResidual when the conditional residual mean is not bounded.
ResidualBounds residual_bounds(const Distribution& d);

/// Sweep of E[A - a | A > a] on a 10^4-point age grid over [0, upper], with the
/// integrated tail obtained by trapezoid quadrature of `tail`.
ResidualBounds residual_bounds_numeric(const std::function<double(double)>& tail, double mean,
                                       double upper);

}  // namespace gittins
