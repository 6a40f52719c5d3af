#include "gittins/stats.hpp"

#include <boost/math/distributions/students_t.hpp>

namespace gittins {

double t_quantile_975(int dof) {
    if (dof < 1) return 0.0;
    boost::math::students_t dist(static_cast<double>(dof));
    return boost::math::quantile(dist, 0.975);
}

Estimate batch_mean(const std::vector<double>& values) {
    Estimate e;
    const std::size_t b = values.size();
    if (b == 0) return e;
    double s = 0.0;
    for (double v : values) s += v;
    e.mean = s / b;
    if (b < 2) return e;
    double ss = 0.0;
    for (double v : values) ss += (v - e.mean) * (v - e.mean);
    e.ci = t_quantile_975(static_cast<int>(b) - 1) * std::sqrt(ss / (b - 1) / b);
    return e;
}

Estimate ratio_estimate(const std::vector<double>& num, const std::vector<double>& den) {
    Estimate e;
    const std::size_t b = std::min(num.size(), den.size());
    double sn = 0.0, sd = 0.0;
    for (std::size_t i = 0; i < b; ++i) {
        sn += num[i];
        sd += den[i];
    }
    if (!(sd > 0.0)) return e;
    e.mean = sn / sd;
    if (b < 2) return e;
    double dbar = sd / b, ss = 0.0;
    for (std::size_t i = 0; i < b; ++i) {
        double r = num[i] - e.mean * den[i];
        ss += r * r;
    }
    e.ci = t_quantile_975(static_cast<int>(b) - 1) * std::sqrt(ss / (b - 1) / b) / dbar;
    return e;
}

}  // namespace gittins
