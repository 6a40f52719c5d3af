#include "gittins/dists.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include <boost/math/special_functions/gamma.hpp>

#include "gittins/errors.hpp"

namespace gittins {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kResidualCap = 1e3;

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

void require(bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(what);
}

// integral of t^-beta over [a, b]
double power_integral(double beta, double a, double b) {
    if (std::abs(beta - 1.0) < 1e-12) return std::log(b / a);
    return (std::pow(b, 1.0 - beta) - std::pow(a, 1.0 - beta)) / (1.0 - beta);
}

double gamma_cdf(int shape, double rate, double y) {
    if (y <= 0.0) return 0.0;
    return boost::math::gamma_p(static_cast<double>(shape), rate * y);
}

struct ParetoParts {
    double c;  // 1 / (1 - q)
    double q;  // (L/H)^alpha
    double la; // L^alpha
};

ParetoParts pareto_parts(const BoundedPareto& p) {
    double q = std::pow(p.low / p.high, p.alpha);
    return {1.0 / (1.0 - q), q, std::pow(p.low, p.alpha)};
}

// Smallest t with tail(t) <= 1 - p, by bisection on a bracket grown from `scale`.
template <class Tail>
double bisect_quantile(Tail tail, double p, double scale) {
    double lo = 0.0, hi = scale;
    while (1.0 - tail(hi) < p) {
        lo = hi;
        hi *= 2.0;
        if (hi > 1e300) return kInf;
    }
    for (int i = 0; i < 200 && hi - lo > 1e-15 * hi; ++i) {
        double mid = 0.5 * (lo + hi);
        if (1.0 - tail(mid) < p)
            lo = mid;
        else
            hi = mid;
    }
    return hi;
}

}  // namespace

Distribution::Distribution(Params params) : params_(std::move(params)) {
    std::visit(overloaded{
                   [](const Deterministic& d) {
                       require(std::isfinite(d.value) && d.value >= 0.0, "deterministic value must be >= 0");
                   },
                   [](const Exponential& d) { require(d.rate > 0.0 && std::isfinite(d.rate), "exponential rate must be > 0"); },
                   [](const Uniform& d) {
                       require(d.low >= 0.0 && d.high > d.low && std::isfinite(d.high),
                               "uniform needs 0 <= low < high");
                   },
                   [](const Hyperexponential& d) {
                       require(!d.probs.empty() && d.probs.size() == d.rates.size(),
                               "hyperexponential needs matching non-empty probs and rates");
                       double s = 0.0;
                       for (std::size_t i = 0; i < d.probs.size(); ++i) {
                           require(d.probs[i] > 0.0, "hyperexponential probs must be > 0");
                           require(d.rates[i] > 0.0 && std::isfinite(d.rates[i]), "hyperexponential rates must be > 0");
                           s += d.probs[i];
                       }
                       require(std::abs(s - 1.0) < 1e-9, "hyperexponential probs must sum to 1");
                   },
                   [](const Erlang& d) {
                       require(d.phases >= 1, "erlang phases must be >= 1");
                       require(d.rate > 0.0 && std::isfinite(d.rate), "erlang rate must be > 0");
                   },
                   [](const BoundedPareto& d) {
                       require(d.alpha > 0.0, "bounded pareto alpha must be > 0");
                       require(d.low > 0.0 && d.high > d.low && std::isfinite(d.high),
                               "bounded pareto needs 0 < low < high");
                   },
                   [](const Bimodal& d) {
                       require(d.low > 0.0 && d.high > d.low && std::isfinite(d.high), "bimodal needs 0 < low < high");
                       require(d.p_low > 0.0 && d.p_low < 1.0, "bimodal p_low must be in (0, 1)");
                   },
               },
               params_);
}

Distribution Distribution::hyperexponential_balanced(double mean, double cv2) {
    require(mean > 0.0 && cv2 > 1.0, "balanced hyperexponential needs mean > 0 and cv2 > 1");
    double p1 = 0.5 * (1.0 + std::sqrt((cv2 - 1.0) / (cv2 + 1.0)));
    double p2 = 1.0 - p1;
    return hyperexponential({p1, p2}, {2.0 * p1 / mean, 2.0 * p2 / mean});
}

std::string Distribution::family_name() const {
    return std::visit(overloaded{
                          [](const Deterministic&) { return std::string("deterministic"); },
                          [](const Exponential&) { return std::string("exponential"); },
                          [](const Uniform&) { return std::string("uniform"); },
                          [](const Hyperexponential&) { return std::string("hyperexponential"); },
                          [](const Erlang&) { return std::string("erlang"); },
                          [](const BoundedPareto&) { return std::string("bounded_pareto"); },
                          [](const Bimodal&) { return std::string("bimodal"); },
                      },
                      params_);
}

double Distribution::mean() const {
    return std::visit(overloaded{
                          [](const Deterministic& d) { return d.value; },
                          [](const Exponential& d) { return 1.0 / d.rate; },
                          [](const Uniform& d) { return 0.5 * (d.low + d.high); },
                          [](const Hyperexponential& d) {
                              double m = 0.0;
                              for (std::size_t i = 0; i < d.probs.size(); ++i) m += d.probs[i] / d.rates[i];
                              return m;
                          },
                          [](const Erlang& d) { return d.phases / d.rate; },
                          [this](const BoundedPareto& d) { return integrated_tail(d.high); },
                          [](const Bimodal& d) { return d.p_low * d.low + (1.0 - d.p_low) * d.high; },
                      },
                      params_);
}

double Distribution::second_moment() const {
    return std::visit(overloaded{
                          [](const Deterministic& d) { return d.value * d.value; },
                          [](const Exponential& d) { return 2.0 / (d.rate * d.rate); },
                          [](const Uniform& d) {
                              return (d.low * d.low + d.low * d.high + d.high * d.high) / 3.0;
                          },
                          [](const Hyperexponential& d) {
                              double m = 0.0;
                              for (std::size_t i = 0; i < d.probs.size(); ++i)
                                  m += 2.0 * d.probs[i] / (d.rates[i] * d.rates[i]);
                              return m;
                          },
                          [](const Erlang& d) { return d.phases * (d.phases + 1.0) / (d.rate * d.rate); },
                          [this](const BoundedPareto& d) { return 2.0 * integrated_moment_tail(d.high); },
                          [](const Bimodal& d) {
                              return d.p_low * d.low * d.low + (1.0 - d.p_low) * d.high * d.high;
                          },
                      },
                      params_);
}

double Distribution::variance() const {
    double m = mean();
    return std::max(0.0, second_moment() - m * m);
}

double Distribution::cv2() const {
    double m = mean();
    if (m <= 0.0) throw std::domain_error("cv2 of a zero-mean distribution");
    return variance() / (m * m);
}

double Distribution::excess_mean() const {
    double m = mean();
    if (m <= 0.0) return 0.0;
    return second_moment() / (2.0 * m);
}

bool Distribution::is_zero() const {
    auto* d = std::get_if<Deterministic>(&params_);
    return d && d->value == 0.0;
}

double Distribution::tail(double t) const {
    if (t < 0.0) return 1.0;
    return std::visit(overloaded{
                          [t](const Deterministic& d) { return t < d.value ? 1.0 : 0.0; },
                          [t](const Exponential& d) { return std::exp(-d.rate * t); },
                          [t](const Uniform& d) {
                              if (t < d.low) return 1.0;
                              if (t >= d.high) return 0.0;
                              return (d.high - t) / (d.high - d.low);
                          },
                          [t](const Hyperexponential& d) {
                              double s = 0.0;
                              for (std::size_t i = 0; i < d.probs.size(); ++i)
                                  s += d.probs[i] * std::exp(-d.rates[i] * t);
                              return s;
                          },
                          [t](const Erlang& d) { return 1.0 - gamma_cdf(d.phases, d.rate, t); },
                          [t](const BoundedPareto& d) {
                              if (t < d.low) return 1.0;
                              if (t >= d.high) return 0.0;
                              auto pp = pareto_parts(d);
                              return std::max(0.0, pp.c * (pp.la * std::pow(t, -d.alpha) - pp.q));
                          },
                          [t](const Bimodal& d) {
                              if (t < d.low) return 1.0;
                              if (t < d.high) return 1.0 - d.p_low;
                              return 0.0;
                          },
                      },
                      params_);
}

double Distribution::density(double t) const {
    if (t < 0.0) return 0.0;
    return std::visit(overloaded{
                          [](const Deterministic&) { return 0.0; },
                          [t](const Exponential& d) { return d.rate * std::exp(-d.rate * t); },
                          [t](const Uniform& d) {
                              return (t >= d.low && t < d.high) ? 1.0 / (d.high - d.low) : 0.0;
                          },
                          [t](const Hyperexponential& d) {
                              double s = 0.0;
                              for (std::size_t i = 0; i < d.probs.size(); ++i)
                                  s += d.probs[i] * d.rates[i] * std::exp(-d.rates[i] * t);
                              return s;
                          },
                          [t](const Erlang& d) {
                              if (t == 0.0) return d.phases == 1 ? d.rate : 0.0;
                              double n = d.phases;
                              return std::exp(n * std::log(d.rate) + (n - 1.0) * std::log(t) - d.rate * t -
                                              std::lgamma(n));
                          },
                          [t](const BoundedPareto& d) {
                              if (t < d.low || t >= d.high) return 0.0;
                              auto pp = pareto_parts(d);
                              return pp.c * d.alpha * pp.la * std::pow(t, -d.alpha - 1.0);
                          },
                          [](const Bimodal&) { return 0.0; },
                      },
                      params_);
}

double Distribution::mass_at(double t) const {
    return std::visit(overloaded{
                          [t](const Deterministic& d) { return t == d.value ? 1.0 : 0.0; },
                          [t](const Bimodal& d) {
                              if (t == d.low) return d.p_low;
                              if (t == d.high) return 1.0 - d.p_low;
                              return 0.0;
                          },
                          [](const auto&) { return 0.0; },
                      },
                      params_);
}

double Distribution::integrated_tail(double y) const {
    if (y <= 0.0) return 0.0;
    return std::visit(
        overloaded{
            [y](const Deterministic& d) { return std::min(y, d.value); },
            [y](const Exponential& d) { return -std::expm1(-d.rate * y) / d.rate; },
            [y](const Uniform& d) {
                if (y <= d.low) return y;
                double u = std::min(y, d.high);
                return d.low + (d.high * (u - d.low) - 0.5 * (u * u - d.low * d.low)) / (d.high - d.low);
            },
            [y](const Hyperexponential& d) {
                double s = 0.0;
                for (std::size_t i = 0; i < d.probs.size(); ++i)
                    s += d.probs[i] * -std::expm1(-d.rates[i] * y) / d.rates[i];
                return s;
            },
            [y](const Erlang& d) {
                double s = 0.0;
                for (int j = 0; j < d.phases; ++j) s += gamma_cdf(j + 1, d.rate, y);
                return s / d.rate;
            },
            [y](const BoundedPareto& d) {
                if (y <= d.low) return y;
                double u = std::min(y, d.high);
                auto pp = pareto_parts(d);
                return d.low + pp.c * (pp.la * power_integral(d.alpha, d.low, u) - pp.q * (u - d.low));
            },
            [y](const Bimodal& d) {
                double g = std::min(y, d.low);
                if (y > d.low) g += (1.0 - d.p_low) * (std::min(y, d.high) - d.low);
                return g;
            },
        },
        params_);
}

double Distribution::integrated_moment_tail(double y) const {
    if (y <= 0.0) return 0.0;
    return std::visit(
        overloaded{
            [y](const Deterministic& d) {
                double u = std::min(y, d.value);
                return 0.5 * u * u;
            },
            [y](const Exponential& d) {
                double z = d.rate * y;
                // 1 - e^{-z}(1+z), written to avoid cancellation at small z
                double v = z < 1e-4 ? z * z * (0.5 - z / 3.0 + z * z / 8.0) : 1.0 - std::exp(-z) * (1.0 + z);
                return v / (d.rate * d.rate);
            },
            [y](const Uniform& d) {
                if (y <= d.low) return 0.5 * y * y;
                double u = std::min(y, d.high);
                double a = d.low;
                return 0.5 * a * a +
                       (0.5 * d.high * (u * u - a * a) - (u * u * u - a * a * a) / 3.0) / (d.high - d.low);
            },
            [y](const Hyperexponential& d) {
                double s = 0.0;
                for (std::size_t i = 0; i < d.probs.size(); ++i) {
                    double mu = d.rates[i], z = mu * y;
                    double v = z < 1e-4 ? z * z * (0.5 - z / 3.0 + z * z / 8.0) : 1.0 - std::exp(-z) * (1.0 + z);
                    s += d.probs[i] * v / (mu * mu);
                }
                return s;
            },
            [y](const Erlang& d) {
                double s = 0.0;
                for (int j = 0; j < d.phases; ++j) s += (j + 1.0) * gamma_cdf(j + 2, d.rate, y);
                return s / (d.rate * d.rate);
            },
            [y](const BoundedPareto& d) {
                if (y <= d.low) return 0.5 * y * y;
                double u = std::min(y, d.high);
                auto pp = pareto_parts(d);
                return 0.5 * d.low * d.low +
                       pp.c * (pp.la * power_integral(d.alpha - 1.0, d.low, u) -
                               0.5 * pp.q * (u * u - d.low * d.low));
            },
            [y](const Bimodal& d) {
                double u = std::min(y, d.low);
                double h = 0.5 * u * u;
                if (y > d.low) {
                    double v = std::min(y, d.high);
                    h += 0.5 * (1.0 - d.p_low) * (v * v - d.low * d.low);
                }
                return h;
            },
        },
        params_);
}

double Distribution::excess_integral(double x) const {
    if (x <= 0.0) return mean() - x;
    return std::visit(
        overloaded{
            [x](const Deterministic& d) { return std::max(d.value - x, 0.0); },
            [x](const Exponential& d) { return std::exp(-d.rate * x) / d.rate; },
            [this, x](const Uniform& d) {
                if (x < d.low) return mean() - x;
                if (x >= d.high) return 0.0;
                return (d.high - x) * (d.high - x) / (2.0 * (d.high - d.low));
            },
            [x](const Hyperexponential& d) {
                double s = 0.0;
                for (std::size_t i = 0; i < d.probs.size(); ++i)
                    s += d.probs[i] * std::exp(-d.rates[i] * x) / d.rates[i];
                return s;
            },
            [x](const Erlang& d) {
                double s = 0.0;
                for (int j = 0; j < d.phases; ++j) s += boost::math::gamma_q(j + 1.0, d.rate * x);
                return s / d.rate;
            },
            [this, x](const BoundedPareto& d) {
                if (x < d.low) return mean() - x;
                if (x >= d.high) return 0.0;
                auto pp = pareto_parts(d);
                return std::max(0.0, pp.c * (pp.la * power_integral(d.alpha, x, d.high) - pp.q * (d.high - x)));
            },
            [this, x](const Bimodal& d) {
                if (x < d.low) return mean() - x;
                if (x >= d.high) return 0.0;
                return (1.0 - d.p_low) * (d.high - x);
            },
        },
        params_);
}

double Distribution::excess_moment_integral(double x) const {
    if (x <= 0.0) return 0.5 * second_moment() - x * mean() + 0.5 * x * x;
    auto full = [this, x]() { return 0.5 * second_moment() - x * mean() + 0.5 * x * x; };
    return std::visit(
        overloaded{
            [x](const Deterministic& d) {
                double u = std::max(d.value - x, 0.0);
                return 0.5 * u * u;
            },
            [x](const Exponential& d) { return std::exp(-d.rate * x) / (d.rate * d.rate); },
            [&](const Uniform& d) {
                if (x < d.low) return full();
                if (x >= d.high) return 0.0;
                double u = d.high - x;
                return u * u * u / (6.0 * (d.high - d.low));
            },
            [x](const Hyperexponential& d) {
                double s = 0.0;
                for (std::size_t i = 0; i < d.probs.size(); ++i)
                    s += d.probs[i] * std::exp(-d.rates[i] * x) / (d.rates[i] * d.rates[i]);
                return s;
            },
            [x](const Erlang& d) {
                double a = 0.0, b = 0.0;
                for (int j = 0; j < d.phases; ++j) {
                    a += (j + 1.0) * boost::math::gamma_q(j + 2.0, d.rate * x);
                    b += boost::math::gamma_q(j + 1.0, d.rate * x);
                }
                return std::max(0.0, a / (d.rate * d.rate) - x * b / d.rate);
            },
            [&](const BoundedPareto& d) {
                if (x < d.low) return full();
                if (x >= d.high) return 0.0;
                auto pp = pareto_parts(d);
                double u = d.high - x;
                return std::max(0.0, pp.c * (pp.la * (power_integral(d.alpha - 1.0, x, d.high) -
                                                      x * power_integral(d.alpha, x, d.high)) -
                                             0.5 * pp.q * u * u));
            },
            [&](const Bimodal& d) {
                if (x < d.low) return full();
                if (x >= d.high) return 0.0;
                double u = d.high - x;
                return 0.5 * (1.0 - d.p_low) * u * u;
            },
        },
        params_);
}

double Distribution::quantile(double p) const {
    if (!(p >= 0.0 && p <= 1.0)) throw std::domain_error("quantile needs p in [0, 1]");
    return std::visit(overloaded{
                          [](const Deterministic& d) { return d.value; },
                          [p](const Exponential& d) { return p >= 1.0 ? kInf : -std::log1p(-p) / d.rate; },
                          [p](const Uniform& d) { return d.low + p * (d.high - d.low); },
                          [this, p](const Hyperexponential&) {
                              if (p >= 1.0) return kInf;
                              return bisect_quantile([this](double t) { return tail(t); }, p, mean());
                          },
                          [p](const Erlang& d) {
                              if (p >= 1.0) return kInf;
                              if (p <= 0.0) return 0.0;
                              return boost::math::gamma_p_inv(static_cast<double>(d.phases), p) / d.rate;
                          },
                          [p](const BoundedPareto& d) {
                              auto pp = pareto_parts(d);
                              double t = d.low * std::pow(1.0 - p * (1.0 - pp.q), -1.0 / d.alpha);
                              return std::min(t, d.high);
                          },
                          [p](const Bimodal& d) { return p <= d.p_low ? d.low : d.high; },
                      },
                      params_);
}

double Distribution::support_max() const {
    return std::visit(overloaded{
                          [](const Deterministic& d) { return d.value; },
                          [](const Uniform& d) { return d.high; },
                          [](const BoundedPareto& d) { return d.high; },
                          [](const Bimodal& d) { return d.high; },
                          [](const auto&) { return kInf; },
                      },
                      params_);
}

std::vector<double> Distribution::atoms() const {
    return std::visit(overloaded{
                          [](const Deterministic& d) { return std::vector<double>{d.value}; },
                          [](const Bimodal& d) { return std::vector<double>{d.low, d.high}; },
                          [](const auto&) { return std::vector<double>{}; },
                      },
                      params_);
}

double Distribution::sample(Rng& rng) const {
    return std::visit(overloaded{
                          [](const Deterministic& d) { return d.value; },
                          [&rng](const Exponential& d) { return -std::log1p(-rng.uniform01()) / d.rate; },
                          [&rng](const Uniform& d) { return d.low + rng.uniform01() * (d.high - d.low); },
                          [&rng](const Hyperexponential& d) {
                              double u = rng.uniform01();
                              std::size_t i = 0;
                              double acc = d.probs[0];
                              while (u >= acc && i + 1 < d.probs.size()) acc += d.probs[++i];
                              return -std::log1p(-rng.uniform01()) / d.rates[i];
                          },
                          [&rng](const Erlang& d) {
                              double s = 0.0;
                              for (int j = 0; j < d.phases; ++j) s -= std::log1p(-rng.uniform01());
                              return s / d.rate;
                          },
                          [this, &rng](const BoundedPareto&) { return quantile(rng.uniform01()); },
                          [&rng](const Bimodal& d) { return rng.uniform01() < d.p_low ? d.low : d.high; },
                      },
                      params_);
}

Distribution Distribution::scaled(double c) const {
    require(c > 0.0 && std::isfinite(c), "scale factor must be > 0");
    return std::visit(overloaded{
                          [c](const Deterministic& d) { return Distribution(Deterministic{d.value * c}); },
                          [c](const Exponential& d) { return Distribution(Exponential{d.rate / c}); },
                          [c](const Uniform& d) { return Distribution(Uniform{d.low * c, d.high * c}); },
                          [c](const Hyperexponential& d) {
                              auto r = d.rates;
                              for (auto& x : r) x /= c;
                              return Distribution(Hyperexponential{d.probs, r});
                          },
                          [c](const Erlang& d) { return Distribution(Erlang{d.phases, d.rate / c}); },
                          [c](const BoundedPareto& d) {
                              return Distribution(BoundedPareto{d.alpha, d.low * c, d.high * c});
                          },
                          [c](const Bimodal& d) { return Distribution(Bimodal{d.low * c, d.p_low, d.high * c}); },
                      },
                      params_);
}

ResidualBounds Distribution::residual_bounds() const {
    if (is_zero()) return {0.0, 0.0};
    return std::visit(
        overloaded{
            [](const Deterministic& d) { return ResidualBounds{0.0, d.value}; },
            [](const Exponential& d) { return ResidualBounds{1.0 / d.rate, 1.0 / d.rate}; },
            [this](const Uniform&) { return ResidualBounds{0.0, mean()}; },
            [this](const Hyperexponential& d) {
                double slow = *std::min_element(d.rates.begin(), d.rates.end());
                return ResidualBounds{mean(), 1.0 / slow};
            },
            [](const Erlang& d) { return ResidualBounds{1.0 / d.rate, d.phases / d.rate}; },
            [this](const BoundedPareto& d) {
                // Sup with the exact integrated tail on a log grid, refined by
                // golden section. The sup is always finite; a Pareto body makes it
                // grow with `high`, so anything beyond kResidualCap means is rejected.
                auto resid = [this, &d](double a) {
                    if (a < d.low) return mean() - a;
                    double t = tail(a);
                    if (t <= 0.0) return 0.0;
                    return (mean() - integrated_tail(a)) / t;
                };
                const int n = 10000;
                double best = resid(0.0), best_a = 0.0;
                double span = std::log(d.high / d.low);
                double step = span / (n - 1);
                for (int i = 0; i < n; ++i) {
                    double a = d.low * std::exp(i * step);
                    double v = resid(a);
                    if (v > best) best = v, best_a = a;
                }
                if (best_a > 0.0) {
                    double lo = std::max(d.low, best_a * std::exp(-step));
                    double hi = std::min(d.high, best_a * std::exp(step));
                    const double g = 0.5 * (std::sqrt(5.0) - 1.0);
                    for (int it = 0; it < 100; ++it) {
                        double m1 = hi - g * (hi - lo), m2 = lo + g * (hi - lo);
                        if (resid(m1) > resid(m2))
                            hi = m2;
                        else
                            lo = m1;
                    }
                    best = std::max(best, resid(0.5 * (lo + hi)));
                }
                if (best > kResidualCap * mean())
                    throw UnboundedResidual("conditional mean residual reaches " + std::to_string(best) +
                                            ", more than " + std::to_string(kResidualCap) + " means");
                return ResidualBounds{0.0, best};
            },
            [this](const Bimodal& d) { return ResidualBounds{0.0, std::max(mean(), d.high - d.low)}; },
        },
        params_);
}

bool Distribution::operator==(const Distribution& other) const { return params_ == other.params_; }

double sample(const Distribution& d, Rng& rng) { return d.sample(rng); }
double excess_mean(const Distribution& d) { return d.excess_mean(); }
double cv2(const Distribution& d) { return d.cv2(); }
ResidualBounds residual_bounds(const Distribution& d) { return d.residual_bounds(); }

ResidualBounds residual_bounds_numeric(const std::function<double(double)>& tail, double mean,
                                       double upper) {
    const int n = 10000;
    if (!(upper > 0.0) || !std::isfinite(upper)) throw UnboundedResidual("residual sweep needs a finite upper age");
    double h = upper / (n - 1);
    std::vector<double> t(n), suffix(n, 0.0);
    for (int i = 0; i < n; ++i) t[i] = tail(i * h);
    for (int i = n - 2; i >= 0; --i) suffix[i] = suffix[i + 1] + 0.5 * h * (t[i] + t[i + 1]);
    // Truncation at `upper` biases the residual down near the end, so the
    // growth screen only looks at ages whose tail is still >= 1e-6.
    int last = 0;
    ResidualBounds b{kInf, 0.0};
    std::vector<double> m;
    for (int i = 0; i < n; ++i) {
        if (t[i] < 1e-6) break;
        double v = i == 0 ? mean / t[0] : suffix[i] / t[i];
        m.push_back(v);
        b.a_min = std::min(b.a_min, v);
        b.a_max = std::max(b.a_max, v);
        last = i;
    }
    if (m.size() >= 20) {
        std::size_t start = m.size() - m.size() / 10;
        bool rising = true;
        for (std::size_t i = start + 1; i < m.size(); ++i)
            if (m[i] < m[i - 1]) {
                rising = false;
                break;
            }
        if (rising && m.back() > 1.01 * m[start])
            throw UnboundedResidual("conditional mean residual keeps growing up to age " +
                                    std::to_string(last * h));
    }
    if (m.empty()) b = {0.0, 0.0};
    return b;
}

}  // namespace gittins
