#include "coagulab/stats.hpp"

#include "coagulab/core.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace coagulab::stats {

double mean(std::span<const double> xs)
{
    if (xs.empty())
    {
        throw ContractViolation("mean of an empty sample");
    }
    long double s = 0.0L;
    for (double x : xs)
    {
        s += x;
    }
    return static_cast<double>(s / xs.size());
}

double median(std::vector<double> xs)
{
    if (xs.empty())
    {
        throw ContractViolation("median of an empty sample");
    }
    std::sort(xs.begin(), xs.end());
    const std::size_t n = xs.size();
    return n % 2 == 1 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

double sample_variance(std::span<const double> xs)
{
    if (xs.size() < 2)
    {
        return 0.0;
    }
    const double m = mean(xs);
    long double s = 0.0L;
    for (double x : xs)
    {
        s += (x - m) * (x - m);
    }
    return static_cast<double>(s / (xs.size() - 1));
}

Interval mean_confidence_interval(std::span<const double> xs, double z)
{
    const double m = mean(xs);
    const double half = z * std::sqrt(sample_variance(xs) / static_cast<double>(xs.size()));
    return {m - half, m + half};
}

double kolmogorov_survival(double lambda)
{
    if (lambda <= 0.0)
    {
        return 1.0;
    }
    if (lambda < 1.18)
    {
        // Jacobi theta form of the CDF, fast for small lambda.
        const double pi = std::numbers::pi;
        const double w = pi * pi / (8.0 * lambda * lambda);
        double cdf = 0.0;
        for (int k = 1; k <= 20; ++k)
        {
            const double odd = 2.0 * k - 1.0;
            cdf += std::exp(-odd * odd * w);
        }
        cdf *= std::sqrt(2.0 * pi) / lambda;
        return std::clamp(1.0 - cdf, 0.0, 1.0);
    }
    double q = 0.0;
    double sign = 1.0;
    for (int k = 1; k <= 100; ++k)
    {
        const double term = std::exp(-2.0 * k * k * lambda * lambda);
        q += sign * term;
        sign = -sign;
        if (term < 1e-18)
        {
            break;
        }
    }
    return std::clamp(2.0 * q, 0.0, 1.0);
}

KsResult ks_one_sample(std::vector<double> xs, const Cdf& cdf)
{
    if (xs.empty())
    {
        throw ContractViolation("ks_one_sample: empty sample");
    }
    std::sort(xs.begin(), xs.end());
    const double n = static_cast<double>(xs.size());
    double d = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i)
    {
        const double f = cdf(xs[i]);
        d = std::max({d, (i + 1) / n - f, f - i / n});
    }
    const double root = std::sqrt(n);
    return {d, kolmogorov_survival((root + 0.12 + 0.11 / root) * d)};
}

KsResult ks_two_sample(std::vector<double> xs, std::vector<double> ys)
{
    if (xs.empty() || ys.empty())
    {
        throw ContractViolation("ks_two_sample: empty sample");
    }
    std::sort(xs.begin(), xs.end());
    std::sort(ys.begin(), ys.end());
    const double n = static_cast<double>(xs.size());
    const double m = static_cast<double>(ys.size());
    std::size_t i = 0;
    std::size_t j = 0;
    double d = 0.0;
    while (i < xs.size() && j < ys.size())
    {
        const double v = std::min(xs[i], ys[j]);
        while (i < xs.size() && xs[i] == v)
        {
            ++i;
        }
        while (j < ys.size() && ys[j] == v)
        {
            ++j;
        }
        d = std::max(d, std::abs(i / n - j / m));
    }
    const double ne = std::sqrt(n * m / (n + m));
    return {d, kolmogorov_survival((ne + 0.12 + 0.11 / ne) * d)};
}

double total_variation(std::span<const double> p, std::span<const double> q)
{
    if (p.size() != q.size())
    {
        throw ContractViolation("total_variation: supports differ in size");
    }
    double s = 0.0;
    for (std::size_t k = 0; k < p.size(); ++k)
    {
        s += std::abs(p[k] - q[k]);
    }
    return 0.5 * s;
}

double slope(std::span<const double> x, std::span<const double> y)
{
    if (x.size() != y.size() || x.size() < 2)
    {
        throw ContractViolation("slope: need at least two paired points");
    }
    const double mx = mean(x);
    const double my = mean(y);
    double sxy = 0.0;
    double sxx = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k)
    {
        sxy += (x[k] - mx) * (y[k] - my);
        sxx += (x[k] - mx) * (x[k] - mx);
    }
    return sxx > 0.0 ? sxy / sxx : 0.0;
}

} // namespace coagulab::stats
