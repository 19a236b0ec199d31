#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace coagulab::stats {

double mean(std::span<const double> xs);
double median(std::vector<double> xs);
double sample_variance(std::span<const double> xs);

struct Interval
{
    double lower = 0.0;
    double upper = 0.0;
};

// Normal-approximation interval mean ± z s / sqrt(n).
Interval mean_confidence_interval(std::span<const double> xs, double z = 1.959963984540054);

// P(K > lambda) for the Kolmogorov distribution.
double kolmogorov_survival(double lambda);

struct KsResult
{
    double statistic = 0.0;
    double p_value = 1.0;
};

using Cdf = std::function<double(double)>;

// One-sample test against a continuous CDF, with Stephens' small-sample
// correction of the asymptotic p-value.
KsResult ks_one_sample(std::vector<double> xs, const Cdf& cdf);

// Two-sample test, asymptotic p-value with the effective sample size.
KsResult ks_two_sample(std::vector<double> xs, std::vector<double> ys);

// ½ sum |p_k - q_k| between two discrete distributions on the same support.
double total_variation(std::span<const double> p, std::span<const double> q);

// Least-squares slope of y on x.
double slope(std::span<const double> x, std::span<const double> y);

} // namespace coagulab::stats
