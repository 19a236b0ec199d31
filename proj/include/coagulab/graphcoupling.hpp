#pragma once

#include "coagulab/core.hpp"
#include "coagulab/kernels.hpp"
#include "coagulab/simulator.hpp"
#include "coagulab/union_find.hpp"

#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

namespace coagulab {

// The coupled graph and coagulation partitions stopped being nested; this is
// a bug in the coupling, never a property of the kernel.
class CouplingError : public std::logic_error
{
public:
    using std::logic_error::logic_error;
};

// A kernel flagged dominating (dominated) produced a negative residual rate.
class DominationViolation : public std::runtime_error
{
public:
    DominationViolation(const std::string& what, ClusterType x, ClusterType y, ClusterType z, ClusterType q,
                        double residual)
        : std::runtime_error(what)
        , x(std::move(x))
        , y(std::move(y))
        , z(std::move(z))
        , q(std::move(q))
        , residual(residual)
    {
    }

    ClusterType x;
    ClusterType y;
    ClusterType z;
    ClusterType q;
    double residual;
};

// Associated random graph at one time: vertex types frozen at time zero.
struct GraphState
{
    std::vector<ClusterType> vertex_types;
    UnionFind components;
    double time = 0.0;
};

// Each pair {i, j} is present independently with probability
// 1 - exp(-K̄(x_i, x_j) t / N), N = vertex count.
GraphState sample_graph_at(std::span<const ClusterType> vertex_types, const KernelSpec& kernel, double t,
                           std::uint64_t seed);

struct GraphEvent
{
    double time = 0.0;
    // One vertex from each of the two components joined by the new edge.
    std::uint32_t u = 0;
    std::uint32_t v = 0;
};

// Component merges of the graph process in time order.
struct GraphTrajectory
{
    std::size_t vertices = 0;
    std::vector<GraphEvent> events;
    double final_time = 0.0;

    UnionFind components_at(double t) const;
};

struct CoupledRunOptions
{
    std::uint64_t stream = 0;
    // r < -tolerance * max(1, K̄) is a domination violation.
    double residual_tolerance = 1e-9;
    bool check_refinement = true;
    std::size_t recompute_interval = 1024;
    std::size_t max_vertices = 2048;
};

struct CoupledResult
{
    Trajectory coagulation;
    GraphTrajectory graph;
    Domination direction = Domination::unknown;
    std::size_t refinement_checks = 0;
    // Smallest residual rate seen (0 when the decomposition was exact).
    double min_residual = 0.0;
    std::size_t induced_merges = 0;  // joint graph + coagulation merges
    std::size_t residual_merges = 0; // outer-only merges at the residual rate
    std::size_t inner_merges = 0;    // inner-only merges within an outer block
};

// Joint Markov chain of the coagulation process and its associated graph,
// run to the normalized horizon. For dominating kernels graph components
// refine coagulation clusters; for dominated kernels the reverse.
CoupledResult coupled_run(const Configuration& initial, const KernelSpec& kernel, double horizon,
                          std::uint64_t seed, CoupledRunOptions options = {});

struct DominationSample
{
    double time = 0.0;
    double coagulation_side = 0.0; // <m 1_{m >= j}, L_t>
    double graph_side = 0.0;       // sum_{n >= j} n M_n(t)
    bool holds = false;
};

// Compares both sides at time zero and after every event time of either
// process (simultaneous events are applied together).
std::vector<DominationSample> domination_check(const Trajectory& coagulation, const GraphTrajectory& graph,
                                               double j, Domination direction);

struct OperatorNorm
{
    double sigma = 0.0;
    double t_star = std::numeric_limits<double>::infinity();
    std::size_t iterations = 0;
    double residual = 0.0;
};

struct OperatorNormOptions
{
    double tolerance = 1e-10;
    std::size_t max_iterations = 100000;
    double perturbation = 1e-3;
    std::uint64_t seed = 0x0b5e;
};

// Norm of f -> sum_j w_j K̄(x_i, x_j) f(x_j) on L^2(w), by power iteration on
// W^{1/2} K W^{1/2}; t* = 1 / sigma.
OperatorNorm operator_norm(std::span<const ClusterType> vertex_types, const KernelSpec& kernel,
                           std::span<const double> weights, OperatorNormOptions options = {});

// Uniform weights 1/N over the vertex types.
OperatorNorm operator_norm(std::span<const ClusterType> vertex_types, const KernelSpec& kernel,
                           OperatorNormOptions options = {});

struct FourSetCheck
{
    double merged_rate = 0.0; // K̄(x_{12}, x_{34})
    double split_rate = 0.0;  // sum of the four cross rates
    bool holds = false;
};

// Samples x_{12} and x_{34} from the offspring law and compares the merged
// rate with the four cross rates in the direction of `direction`.
FourSetCheck four_set_check(const KernelSpec& kernel, const ClusterType& x1, const ClusterType& x2,
                            const ClusterType& x3, const ClusterType& x4, Domination direction, CounterRng& rng,
                            double tolerance = 1e-12);

} // namespace coagulab
