#include "coagulab/gelation.hpp"
#include "coagulab/graphcoupling.hpp"
#include "coagulab/stats.hpp"

#include <doctest.h>

#include <Eigen/Dense>

#include <cmath>

using namespace coagulab;

namespace {

std::vector<std::vector<double>> uniform_positions(std::size_t n, std::uint64_t seed)
{
    CounterRng rng(seed, 1);
    std::vector<std::vector<double>> p(n);
    for (auto& x : p)
    {
        x = {rng.uniform()};
    }
    return p;
}

// Largest root of theta = 1 - exp(-t theta), by fixed-point iteration.
double giant_fraction(double t)
{
    double theta = 1.0;
    for (int i = 0; i < 10000; ++i)
    {
        theta = 1.0 - std::exp(-t * theta);
    }
    return theta;
}

double dense_top_eigenvalue(std::span<const ClusterType> types, const KernelSpec& k, std::span<const double> w)
{
    const auto n = static_cast<Eigen::Index>(types.size());
    Eigen::MatrixXd m(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
    {
        for (Eigen::Index j = 0; j < n; ++j)
        {
            m(i, j) = std::sqrt(w[i] * w[j]) * k.rate(types[i], types[j]);
        }
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(m);
    return solver.eigenvalues().cwiseAbs().maxCoeff();
}

void check_refinement_and_domination(const CoupledResult& r, std::size_t n, Domination dir)
{
    // Final partitions: the finer one must refine the coarser one.
    const Configuration coag = replay(r.coagulation);
    UnionFind graph = r.graph.components_at(r.graph.final_time);
    std::vector<std::size_t> cluster_of(n);
    for (std::size_t p = 0; p < coag.size(); ++p)
    {
        for (Label l : coag.clusters()[p].labels)
        {
            cluster_of[l] = p;
        }
    }
    for (std::uint32_t v = 0; v < n; ++v)
    {
        for (std::uint32_t u = 0; u < v; ++u)
        {
            const bool same_cluster = cluster_of[u] == cluster_of[v];
            const bool same_component = graph.connected(u, v);
            if (dir == Domination::dominating)
            {
                REQUIRE((!same_component || same_cluster));
            }
            else
            {
                REQUIRE((!same_cluster || same_component));
            }
        }
    }
}

} // namespace

TEST_SUITE("sample_graph_at")
{
    TEST_CASE("time zero gives the empty graph")
    {
        const auto types = monodispersed_clusters(100);
        const GraphState g = sample_graph_at(types, multiplicative(), 0.0, 1);
        CHECK(g.components.components() == 100);
    }

    TEST_CASE("constant kernel is Erdos-Renyi with the matching edge probability")
    {
        // Edge count over all pairs is Binomial(N(N-1)/2, 1 - exp(-c t / N)).
        const std::size_t n = 200;
        const double c = 2.0;
        const double t = 0.5;
        const double p = -std::expm1(-c * t / n);
        const auto types = monodispersed_clusters(n);
        double components = 0.0;
        const int reps = 200;
        for (int s = 0; s < reps; ++s)
        {
            const GraphState g = sample_graph_at(types, constant_kernel(c), t, s);
            components += static_cast<double>(g.components.components());
        }
        // Sparse regime: components ~ N - edges, edges ~ p N (N-1) / 2.
        const double edges = p * n * (n - 1) / 2.0;
        CHECK(components / reps == doctest::Approx(n - edges).epsilon(0.02));
    }

    TEST_CASE("multiplicative at t = 2: giant component near the fixed point")
    {
        const double theta = giant_fraction(2.0);
        CHECK(theta == doctest::Approx(0.7968).epsilon(1e-3));
        const std::size_t n = 10000;
        const auto types = monodispersed_clusters(n);
        GraphState g = sample_graph_at(types, multiplicative(), 2.0, 42);
        const double frac = static_cast<double>(g.components.largest_component()) / n;
        CHECK(frac == doctest::Approx(theta).epsilon(0.03));
    }

    TEST_CASE("non-unit masses are rejected")
    {
        std::vector<ClusterType> types{mass_point(1), mass_point(2)};
        CHECK_THROWS_AS(sample_graph_at(types, multiplicative(), 1.0, 1), ContractViolation);
    }
}

TEST_SUITE("coupled_run")
{
    TEST_CASE("multiplicative: partitions coincide and the residual is zero")
    {
        const KernelSpec k = multiplicative();
        for (std::uint64_t s = 0; s < 5; ++s)
        {
            const CoupledResult r = coupled_run(monodispersed(300, k), k, 1.5, s);
            CHECK(r.residual_merges == 0);
            CHECK(r.inner_merges == 0);
            CHECK(r.induced_merges == r.coagulation.events.size());
            CHECK(r.graph.events.size() == r.coagulation.events.size());
            CHECK(r.min_residual == 0.0);
            for (std::size_t i = 0; i < r.graph.events.size(); ++i)
            {
                CHECK(r.graph.events[i].time == r.coagulation.events[i].time);
            }
        }
    }

    TEST_CASE("concave tent kernel: refinement and domination over many seeds")
    {
        const KernelSpec k = concave_rho(tent_rho(2.0), 1);
        for (std::uint64_t s = 0; s < 10; ++s)
        {
            const Configuration init = monodispersed(200, k, uniform_positions(200, s));
            const CoupledResult r = coupled_run(init, k, 2.0, s);
            CHECK(r.refinement_checks == r.induced_merges + r.residual_merges + r.inner_merges);
            CHECK(r.min_residual >= -1e-9);
            check_refinement_and_domination(r, 200, Domination::dominating);
            for (double j : {2.0, 8.0, 32.0})
            {
                for (const auto& sample : domination_check(r.coagulation, r.graph, j, Domination::dominating))
                {
                    REQUIRE(sample.holds);
                }
            }
        }
    }

    TEST_CASE("dominated kernels: cluster masses stay below matched components")
    {
        const KernelSpec convex =
            convex_rho([](std::span<const double> u) { return 1.0 + u[0] * u[0]; }, 1);
        for (const KernelSpec& k : {additive(), constant_kernel(), convex})
        {
            CAPTURE(k.name());
            for (std::uint64_t s = 0; s < 5; ++s)
            {
                const Configuration init =
                    k.mass_only() ? monodispersed(150, k) : monodispersed(150, k, uniform_positions(150, s));
                const CoupledResult r = coupled_run(init, k, 3.0, s);
                CHECK(r.min_residual >= -1e-9);
                check_refinement_and_domination(r, 150, Domination::dominated);
                for (double j : {2.0, 8.0, 32.0})
                {
                    for (const auto& sample : domination_check(r.coagulation, r.graph, j, Domination::dominated))
                    {
                        REQUIRE(sample.holds);
                    }
                }
            }
        }
    }

    TEST_CASE("coagulation marginal replays cleanly")
    {
        const KernelSpec k = concave_rho(tent_rho(2.0), 1);
        const Configuration init = monodispersed(100, k, uniform_positions(100, 3));
        const CoupledResult r = coupled_run(init, k, 2.0, 3);
        const Configuration fin = replay(r.coagulation);
        CHECK(fin.total_mass() == 100.0);
        CHECK(fin.size() == 100 - r.coagulation.events.size());
        double last = 0.0;
        for (const Event& e : r.coagulation.events)
        {
            CHECK(e.time >= last);
            last = e.time;
        }
    }

    TEST_CASE("a kernel flagged dominating that is not raises a domination violation")
    {
        const KernelSpec k = additive().with_domination(Domination::dominating);
        bool thrown = false;
        try
        {
            coupled_run(monodispersed(100, k), k, 5.0, 1);
        }
        catch (const DominationViolation& e)
        {
            thrown = true;
            CHECK(e.residual < 0.0);
            CHECK(e.z.mass == e.x.mass + e.y.mass);
            CHECK(k.rate(e.z, e.q) < k.rate(e.x, e.q) + k.rate(e.y, e.q));
        }
        CHECK(thrown);
    }

    TEST_CASE("preconditions")
    {
        const KernelSpec neither = additive().with_domination(Domination::neither);
        CHECK_THROWS_AS(coupled_run(monodispersed(10, neither), neither, 1.0, 1), ContractViolation);
        const KernelSpec unknown = mass_log(0.1);
        CHECK_THROWS_AS(coupled_run(monodispersed(10, unknown), unknown, 1.0, 1), ContractViolation);
        const KernelSpec k = multiplicative();
        const Configuration heavy({mass_point(2), mass_point(1)}, 3, k.rate_kernel());
        CHECK_THROWS_AS(coupled_run(heavy, k, 1.0, 1), ContractViolation);
    }

    TEST_CASE("coagulation marginal matches the plain simulator in law")
    {
        const KernelSpec k = multiplicative();
        const std::size_t n = 200;
        const double t = 0.8;
        std::vector<double> coupled;
        std::vector<double> plain;
        for (std::uint64_t s = 0; s < 1000; ++s)
        {
            const CoupledResult r = coupled_run(monodispersed(n, k), k, t, s);
            coupled.push_back(MassHistory(r.coagulation).largest_at(t));
            const Trajectory p = run(monodispersed(n, k), k, StopCondition::at_time(t), s + 1000000);
            plain.push_back(MassHistory(p).largest_at(t));
        }
        CHECK(stats::ks_two_sample(coupled, plain).p_value > 0.001);
    }

    TEST_CASE("graph marginal matches sample_graph_at in law")
    {
        const KernelSpec k = concave_rho(tent_rho(2.0), 1);
        const std::size_t n = 150;
        const double t = 1.2;
        std::vector<double> coupled;
        std::vector<double> sampled;
        for (std::uint64_t s = 0; s < 600; ++s)
        {
            const auto pos = uniform_positions(n, s);
            const Configuration init = monodispersed(n, k, pos);
            const CoupledResult r = coupled_run(init, k, t, s);
            coupled.push_back(static_cast<double>(r.graph.components_at(t).largest_component()));
            GraphState g = sample_graph_at(init.clusters(), k, t, s + 1000000);
            sampled.push_back(static_cast<double>(g.components.largest_component()));
        }
        CHECK(stats::ks_two_sample(coupled, sampled).p_value > 0.001);
    }
}

TEST_SUITE("domination_check")
{
    TEST_CASE("j = 1 counts everything and j = N + 1 counts nothing")
    {
        const KernelSpec k = concave_rho(tent_rho(2.0), 1);
        const Configuration init = monodispersed(60, k, uniform_positions(60, 9));
        const CoupledResult r = coupled_run(init, k, 3.0, 9);
        for (const auto& s : domination_check(r.coagulation, r.graph, 1.0, Domination::dominating))
        {
            CHECK(s.coagulation_side == 60.0);
            CHECK(s.graph_side == 60.0);
        }
        for (const auto& s : domination_check(r.coagulation, r.graph, 61.0, Domination::dominating))
        {
            CHECK(s.coagulation_side == 0.0);
            CHECK(s.graph_side == 0.0);
        }
    }

    TEST_CASE("dominating kernel with j = N / 10")
    {
        const KernelSpec k = concave_rho(tent_rho(2.0), 1);
        const Configuration init = monodispersed(500, k, uniform_positions(500, 4));
        const CoupledResult r = coupled_run(init, k, 2.0, 4);
        const auto samples = domination_check(r.coagulation, r.graph, 50.0, Domination::dominating);
        CHECK(samples.size() >= 2);
        for (const auto& s : samples)
        {
            CHECK(s.coagulation_side >= s.graph_side);
        }
    }

    TEST_CASE("direction must be decided")
    {
        const KernelSpec k = multiplicative();
        const CoupledResult r = coupled_run(monodispersed(10, k), k, 1.0, 1);
        CHECK_THROWS_AS(domination_check(r.coagulation, r.graph, 2.0, Domination::unknown), ContractViolation);
    }
}

TEST_SUITE("operator_norm")
{
    TEST_CASE("constant kernel on one type")
    {
        const auto types = monodispersed_clusters(50);
        const OperatorNorm o = operator_norm(types, constant_kernel(2.5));
        CHECK(o.sigma == doctest::Approx(2.5).epsilon(1e-10));
        CHECK(o.t_star == doctest::Approx(0.4).epsilon(1e-10));
    }

    TEST_CASE("multiplicative mono-dispersed gives sigma = 1, t* = 1")
    {
        const auto types = monodispersed_clusters(1000);
        const OperatorNorm o = operator_norm(types, multiplicative());
        CHECK(std::abs(o.sigma - 1.0) <= 1e-10);
        CHECK(std::abs(o.t_star - 1.0) <= 1e-10);
    }

    TEST_CASE("bilinear two-type kernel against the dense eigensolver")
    {
        const KernelSpec k = bilinear({{2, 1}, {1, 2}});
        std::vector<ClusterType> types;
        for (int i = 0; i < 100; ++i)
        {
            types.push_back(ClusterType{1.0, i < 50 ? std::vector<double>{1, 0} : std::vector<double>{0, 1}, {}});
        }
        const std::vector<double> w(100, 0.01);
        const OperatorNorm o = operator_norm(types, k, w);
        const double oracle = dense_top_eigenvalue(types, k, w);
        CHECK(oracle == doctest::Approx(1.5).epsilon(1e-12));
        CHECK(std::abs(o.sigma - oracle) <= 1e-6 * oracle);
    }

    TEST_CASE("random spatial kernel against the dense eigensolver")
    {
        const KernelSpec k = concave_rho(tent_rho(2.0), 2);
        CounterRng rng(6);
        std::vector<ClusterType> types;
        std::vector<double> w;
        for (int i = 0; i < 120; ++i)
        {
            types.push_back(ClusterType{1.0 + std::floor(4 * rng.uniform()), {rng.uniform(), rng.uniform()}, {}});
            w.push_back(rng.uniform());
        }
        const OperatorNorm o = operator_norm(types, k, w);
        const double oracle = dense_top_eigenvalue(types, k, w);
        CHECK(std::abs(o.sigma - oracle) <= 1e-6 * oracle);
    }

    TEST_CASE("scaling the kernel scales sigma and inverts t*")
    {
        const KernelSpec k = concave_rho(tent_rho(2.0), 1);
        std::vector<ClusterType> types;
        for (const auto& p : uniform_positions(200, 2))
        {
            types.push_back(ClusterType{1.0, p, {}});
        }
        const OperatorNorm a = operator_norm(types, k);
        const OperatorNorm b = operator_norm(types, k.scaled(3.0));
        CHECK(b.sigma == doctest::Approx(3.0 * a.sigma).epsilon(1e-9));
        CHECK(b.t_star == doctest::Approx(a.t_star / 3.0).epsilon(1e-9));
    }

    TEST_CASE("zero kernel gives infinite t*")
    {
        const KernelSpec k = bilinear({{0, 0}, {0, 0}});
        std::vector<ClusterType> types(10, ClusterType{1.0, {1, 0}, {}});
        const OperatorNorm o = operator_norm(types, k);
        CHECK(o.sigma == 0.0);
        CHECK(std::isinf(o.t_star));
    }

    TEST_CASE("an iteration cap that is too small reports non-convergence")
    {
        const KernelSpec k = concave_rho(tent_rho(2.0), 1);
        std::vector<ClusterType> types;
        for (const auto& p : uniform_positions(50, 2))
        {
            types.push_back(ClusterType{1.0, p, {}});
        }
        OperatorNormOptions opts;
        opts.max_iterations = 1;
        opts.tolerance = 1e-300;
        CHECK_THROWS_AS(operator_norm(types, k, opts), SimulationError);
    }
}
