#include "coagulab/core.hpp"
#include "coagulab/kernels.hpp"
#include "coagulab/prefix_sum_tree.hpp"
#include "coagulab/rng.hpp"
#include "coagulab/union_find.hpp"

#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <cmath>
#include <set>

using namespace coagulab;

namespace {

Configuration masses(std::vector<double> ms, std::shared_ptr<const RateKernel> kernel = nullptr)
{
    std::vector<ClusterType> cs;
    Label l = 0;
    for (double m : ms)
    {
        cs.push_back(ClusterType{m, {}, {l++}});
    }
    const auto n = static_cast<std::uint64_t>(std::llround(std::accumulate(ms.begin(), ms.end(), 0.0)));
    return Configuration(std::move(cs), std::max<std::uint64_t>(n, 1), std::move(kernel));
}

ClusterType merged(const Configuration& c, ClusterId a, ClusterId b)
{
    return mass_point(c.cluster(a).mass + c.cluster(b).mass);
}

} // namespace

TEST_SUITE("rng")
{
    TEST_CASE("philox4x32-10 known-answer vectors")
    {
        using B = CounterRng::Block;
        using K = CounterRng::Key;
        CHECK(CounterRng::philox(B{0, 0, 0, 0}, K{0, 0}) == B{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8});
        CHECK(CounterRng::philox(B{0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff}, K{0xffffffff, 0xffffffff}) ==
              B{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd});
        CHECK(CounterRng::philox(B{0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344}, K{0xa4093822, 0x299f31d0}) ==
              B{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1});
    }

    TEST_CASE("uniform lies in [0, 1) and exponential is positive with mean 1")
    {
        CounterRng rng(42);
        double sum = 0.0;
        for (int i = 0; i < 100000; ++i)
        {
            const double u = rng.uniform();
            REQUIRE(u >= 0.0);
            REQUIRE(u < 1.0);
            const double e = rng.exponential();
            REQUIRE(e >= 0.0);
            REQUIRE(std::isfinite(e));
            sum += e;
        }
        CHECK(sum / 100000 == doctest::Approx(1.0).epsilon(0.02));
    }

    TEST_CASE("streams are reproducible and distinct")
    {
        CounterRng a(7, 3);
        CounterRng b(7, 3);
        CounterRng c(7, 4);
        bool differs = false;
        for (int i = 0; i < 16; ++i)
        {
            const auto x = a();
            CHECK(x == b());
            differs |= x != c();
        }
        CHECK(differs);
        CHECK(a.seed() == 7);
        CHECK(a.stream() == 3);
    }

    TEST_CASE("derived seeds are distinct across replicas and N")
    {
        std::set<std::uint64_t> seen;
        for (std::uint32_t r = 0; r < 200; ++r)
        {
            for (std::uint32_t n : {100u, 1000u, 10000u})
            {
                CHECK(seen.insert(derive_seed(12345, r, n)).second);
            }
        }
        CHECK(derive_seed(1, 0, 0) != derive_seed(2, 0, 0));
    }
}

TEST_SUITE("prefix sum tree")
{
    TEST_CASE("prefix sums and search match a linear scan")
    {
        CounterRng rng(5);
        std::vector<double> w(37);
        for (auto& x : w)
        {
            x = rng.uniform() < 0.2 ? 0.0 : rng.uniform();
        }
        PrefixSumTree t;
        t.assign(w);
        t.add(5, 0.75);
        w[5] += 0.75;
        double acc = 0.0;
        for (std::size_t k = 0; k <= w.size(); ++k)
        {
            CHECK(t.prefix(k) == doctest::Approx(acc));
            if (k < w.size())
            {
                acc += w[k];
            }
        }
        for (int trial = 0; trial < 1000; ++trial)
        {
            const double target = rng.uniform() * t.total();
            const std::size_t k = t.find(target);
            REQUIRE(k < w.size());
            CHECK(w[k] > 0.0);
            CHECK(t.prefix(k) <= target + 1e-12);
            CHECK(t.prefix(k + 1) > target - 1e-12);
        }
    }
}

TEST_SUITE("union find")
{
    TEST_CASE("components merge and never split")
    {
        UnionFind uf(6);
        CHECK(uf.components() == 6);
        uf.unite(0, 1);
        uf.unite(2, 3);
        uf.unite(1, 3);
        CHECK(uf.components() == 3);
        CHECK(uf.connected(0, 2));
        CHECK(uf.component_size(3) == 4);
        CHECK(uf.largest_component() == 4);
        uf.unite(0, 3);
        CHECK(uf.components() == 3);
        auto sizes = uf.component_sizes();
        std::sort(sizes.begin(), sizes.end());
        CHECK(sizes == std::vector<std::size_t>{1, 1, 4});
    }
}

TEST_SUITE("total_mass")
{
    TEST_CASE("empty configuration has zero mass")
    {
        const Configuration c({}, 1);
        CHECK(total_mass(c) == 0.0);
    }

    TEST_CASE("three unit clusters, before and after a coagulation")
    {
        Configuration c = masses({1, 1, 1});
        CHECK(total_mass(c) == 3.0);
        c.apply_coagulation(0, 1, mass_point(2));
        CHECK(total_mass(c) == 3.0);
        CHECK(c.total_mass() == 3.0);
    }
}

TEST_SUITE("mass_above")
{
    TEST_CASE("threshold examples")
    {
        const Configuration c = masses({1, 1, 4});
        CHECK(mass_above(c, 2) == 4.0);
        CHECK(mass_above(c, 5) == 0.0);
    }

    TEST_CASE("inclusive and strict boundary")
    {
        const Configuration c = masses({2, 2});
        CHECK(mass_above(c, 2, Threshold::inclusive) == 4.0);
        CHECK(mass_above(c, 2, Threshold::strict) == 0.0);
    }

    TEST_CASE("nonpositive threshold is rejected")
    {
        const Configuration c = masses({1});
        CHECK_THROWS_AS(mass_above(c, 0.0), ContractViolation);
    }
}

TEST_SUITE("apply_coagulation")
{
    TEST_CASE("two clusters merge into one")
    {
        Configuration c = masses({1, 1});
        const ClusterId z = c.apply_coagulation(0, 1, mass_point(2));
        CHECK(c.size() == 1);
        CHECK(z == 2);
        CHECK(c.cluster(z).mass == 2.0);
        CHECK_FALSE(c.is_live(0));
        CHECK_FALSE(c.is_live(1));
        auto labels = c.cluster(z).labels;
        std::sort(labels.begin(), labels.end());
        CHECK(labels == std::vector<Label>{0, 1});
    }

    TEST_CASE("mass mismatch is a contract violation")
    {
        Configuration c = masses({1, 1});
        CHECK_THROWS_AS(c.apply_coagulation(0, 1, mass_point(2.5)), ContractViolation);
    }

    TEST_CASE("self merge and dead ids are rejected")
    {
        Configuration c = masses({1, 1, 1});
        CHECK_THROWS_AS(c.apply_coagulation(1, 1, mass_point(2)), ContractViolation);
        c.apply_coagulation(0, 1, mass_point(2));
        CHECK_THROWS_AS(c.apply_coagulation(0, 2, mass_point(2)), ContractViolation);
    }

    TEST_CASE("multiplicative kernel: survivor rate after merging two of three unit clusters")
    {
        const KernelSpec k = multiplicative();
        Configuration c = masses({1, 1, 1}, k.rate_kernel());
        CHECK(c.cluster_rate(0) == 2.0);
        CHECK(static_cast<double>(c.total_rate()) == 3.0);
        const ClusterId z = c.apply_coagulation(0, 1, mass_point(2));
        CHECK(c.cluster_rate(z) == 2.0);
        CHECK(c.cluster_rate(2) == 2.0);
        CHECK(static_cast<double>(c.total_rate()) == 2.0);
    }

    TEST_CASE("functional form leaves the input untouched")
    {
        const Configuration c = masses({1, 2});
        const Configuration d = apply_coagulation(c, 0, 1, mass_point(3));
        CHECK(c.size() == 2);
        CHECK(d.size() == 1);
    }
}

TEST_SUITE("configuration invariants")
{
    TEST_CASE("random coagulation sequences keep mass, labels and rate caches coherent")
    {
        const KernelSpec k = additive();
        CounterRng rng(99);
        for (int trial = 0; trial < 20; ++trial)
        {
            const std::size_t n = 20 + trial * 7;
            Configuration c(monodispersed_clusters(n), n, k.rate_kernel());
            c.set_recompute_interval(1u << 30);
            while (c.size() > 1)
            {
                const std::size_t before = c.size();
                const auto a = c.id_at(static_cast<std::size_t>(rng.uniform() * c.size()));
                auto b = a;
                while (b == a)
                {
                    b = c.id_at(static_cast<std::size_t>(rng.uniform() * c.size()));
                }
                c.apply_coagulation(a, b, merged(c, a, b));
                REQUIRE(c.size() == before - 1);
                REQUIRE(c.total_mass() == doctest::Approx(static_cast<double>(n)).epsilon(1e-12));
                long double half = 0.0L;
                for (double r : c.per_cluster_rates())
                {
                    half += r;
                }
                REQUIRE(static_cast<double>(c.total_rate()) ==
                        doctest::Approx(static_cast<double>(half / 2)).epsilon(1e-9));
                REQUIRE(c.rate_cache_drift() < 1e-8);
                std::vector<Label> all;
                for (const auto& cl : c.clusters())
                {
                    REQUIRE(cl.labels.size() == static_cast<std::size_t>(cl.mass));
                    all.insert(all.end(), cl.labels.begin(), cl.labels.end());
                }
                std::sort(all.begin(), all.end());
                for (std::size_t l = 0; l < n; ++l)
                {
                    REQUIRE(all[l] == l);
                }
            }
        }
    }

    TEST_CASE("cluster sampling follows per-cluster rates")
    {
        const KernelSpec k = multiplicative();
        const Configuration c = masses({1, 2, 3}, k.rate_kernel());
        // R = (5, 8, 9), total 22.
        std::vector<int> counts(3, 0);
        CounterRng rng(3);
        const int draws = 220000;
        for (int i = 0; i < draws; ++i)
        {
            ++counts[c.sample_cluster(rng.uniform())];
        }
        const double r[] = {5, 8, 9};
        for (std::size_t p = 0; p < 3; ++p)
        {
            const std::size_t id = c.id_at(p);
            CHECK(counts[p] / static_cast<double>(draws) == doctest::Approx(r[id] / 22.0).epsilon(0.02));
        }
    }
}
