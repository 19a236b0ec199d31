#include "coagulab/stats.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

using namespace coagulab;

TEST_SUITE("stats")
{
    TEST_CASE("location and spread")
    {
        const std::vector<double> xs{3, 1, 4, 1, 5};
        CHECK(stats::mean(xs) == doctest::Approx(2.8));
        CHECK(stats::median(xs) == 3.0);
        CHECK(stats::median({1, 2, 3, 4}) == 2.5);
        CHECK(stats::sample_variance(xs) == doctest::Approx(3.2));
    }

    TEST_CASE("confidence interval is centered on the mean")
    {
        const std::vector<double> xs{1, 2, 3, 4, 5, 6, 7, 8};
        const auto ci = stats::mean_confidence_interval(xs);
        CHECK((ci.lower + ci.upper) / 2 == doctest::Approx(4.5));
        const double half = 1.959963984540054 * std::sqrt(stats::sample_variance(xs) / 8.0);
        CHECK(ci.upper - 4.5 == doctest::Approx(half));
    }

    TEST_CASE("Kolmogorov survival function reference values")
    {
        CHECK(stats::kolmogorov_survival(0.0) == 1.0);
        CHECK(stats::kolmogorov_survival(1.0) == doctest::Approx(0.26999967).epsilon(1e-6));
        CHECK(stats::kolmogorov_survival(1.3581) == doctest::Approx(0.05).epsilon(1e-3));
        CHECK(stats::kolmogorov_survival(1.6276) == doctest::Approx(0.01).epsilon(1e-3));
    }

    TEST_CASE("one-sample KS on a perfect grid and a shifted sample")
    {
        std::vector<double> grid;
        for (int i = 0; i < 1000; ++i)
        {
            grid.push_back((i + 0.5) / 1000.0);
        }
        const auto uniform = [](double x) { return std::clamp(x, 0.0, 1.0); };
        const auto good = stats::ks_one_sample(grid, uniform);
        CHECK(good.statistic == doctest::Approx(0.0005));
        CHECK(good.p_value > 0.99);
        std::vector<double> shifted;
        for (double x : grid)
        {
            shifted.push_back(x * x);
        }
        CHECK(stats::ks_one_sample(shifted, uniform).p_value < 1e-6);
    }

    TEST_CASE("two-sample KS")
    {
        std::vector<double> a;
        std::vector<double> b;
        for (int i = 0; i < 500; ++i)
        {
            a.push_back(i / 500.0);
            b.push_back((i + 0.5) / 500.0);
        }
        const auto same = stats::ks_two_sample(a, b);
        CHECK(same.statistic <= 0.003);
        CHECK(same.p_value > 0.99);
        for (double& x : b)
        {
            x += 0.3;
        }
        const auto apart = stats::ks_two_sample(a, b);
        CHECK(apart.statistic == doctest::Approx(0.3).epsilon(0.01));
        CHECK(apart.p_value < 1e-10);
    }

    TEST_CASE("total variation and slope")
    {
        const std::vector<double> p{0.5, 0.5};
        const std::vector<double> q{0.25, 0.75};
        CHECK(stats::total_variation(p, q) == doctest::Approx(0.25));
        CHECK(stats::total_variation(p, p) == 0.0);
        const std::vector<double> x{0, 1, 2, 3};
        const std::vector<double> y{1, 3, 5, 7};
        CHECK(stats::slope(x, y) == doctest::Approx(2.0));
    }
}
