#include "coagulab/graphcoupling.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <sstream>
#include <string>

namespace coagulab {

namespace {

// Index of a weighted draw from `candidates` (weights via `weight`), or the
// last positive candidate when rounding overshoots. Returns npos if none.
template <class Weight>
std::size_t pick_weighted(std::span<const std::uint32_t> candidates, Weight weight, double u)
{
    double total = 0.0;
    for (std::uint32_t c : candidates)
    {
        const double w = weight(c);
        if (w > 0.0)
        {
            total += w;
        }
    }
    if (!(total > 0.0))
    {
        return static_cast<std::size_t>(-1);
    }
    const double target = u * total;
    double acc = 0.0;
    std::size_t last = static_cast<std::size_t>(-1);
    for (std::size_t k = 0; k < candidates.size(); ++k)
    {
        const double w = weight(candidates[k]);
        if (w > 0.0)
        {
            acc += w;
            last = k;
            if (acc > target)
            {
                return k;
            }
        }
    }
    return last;
}

class LiveSet
{
public:
    explicit LiveSet(std::size_t n)
        : list_(n)
        , pos_(n)
        , live_(n, 1)
    {
        std::iota(list_.begin(), list_.end(), std::uint32_t{0});
        std::iota(pos_.begin(), pos_.end(), std::uint32_t{0});
    }

    std::span<const std::uint32_t> items() const { return list_; }
    bool contains(std::uint32_t s) const { return live_[s] != 0; }
    std::size_t size() const { return list_.size(); }

    void erase(std::uint32_t s)
    {
        const std::uint32_t p = pos_[s];
        const std::uint32_t back = list_.back();
        list_[p] = back;
        pos_[back] = p;
        list_.pop_back();
        live_[s] = 0;
    }

private:
    std::vector<std::uint32_t> list_;
    std::vector<std::uint32_t> pos_;
    std::vector<char> live_;
};

// Joint chain of two nested partitions of the vertex set. The outer
// partition is coarser; every inner block lies inside one outer block.
// Pair rates: A between outer blocks, B between inner blocks, with
// A(X, Y) >= E(X, Y) = sum of B over inner pairs across X and Y.
//
// Dominating kernels: outer = coagulation clusters, inner = graph components.
// Dominated kernels: outer = graph components, inner = coagulation clusters.
class Coupler
{
public:
    Coupler(const Configuration& initial, const KernelSpec& kernel, std::uint64_t seed,
            const CoupledRunOptions& options)
        : n_(initial.size())
        , kernel_(kernel)
        , options_(options)
        , outer_is_coag_(kernel.domination() == Domination::dominating)
        , rng_(seed, options.stream)
        , A_(n_ * n_, 0.0)
        , B_(n_ * n_, 0.0)
        , MB_(n_ * n_, 0.0)
        , E_(n_ * n_, 0.0)
        , A_row_(n_, 0.0)
        , H_(n_, 0.0)
        , outer_(n_)
        , inner_(n_)
        , parent_(n_)
        , children_(n_)
        , child_pos_(n_, 0)
        , outer_members_(n_)
        , inner_members_(n_)
        , outer_of_(n_)
        , inner_of_(n_)
        , types_(initial.clusters().begin(), initial.clusters().end())
        , coag_id_(n_)
        , shadow_(std::vector<ClusterType>(initial.clusters().begin(), initial.clusters().end()), initial.n_param())
        , scratch_(n_, 0.0)
        , block_sum_(n_, 0.0)
    {
        for (std::uint32_t v = 0; v < n_; ++v)
        {
            parent_[v] = v;
            children_[v] = {v};
            outer_members_[v] = {v};
            inner_members_[v] = {v};
            outer_of_[v] = v;
            inner_of_[v] = v;
            coag_id_[v] = v;
        }
        for (std::uint32_t v = 0; v < n_; ++v)
        {
            for (std::uint32_t w = v + 1; w < n_; ++w)
            {
                const double k = kernel_.rate(types_[v], types_[w]);
                if (!(k >= 0.0) || !std::isfinite(k))
                {
                    throw SimulationError("nonfinite or negative rate for pair (" + std::to_string(v) + ", " +
                                          std::to_string(w) + ")");
                }
                A(v, w) = A(w, v) = k;
                B(v, w) = B(w, v) = k;
                E(v, w) = E(w, v) = k;
                MB(v, w) = MB(w, v) = k;
            }
        }
        recompute_aggregates();
    }

    CoupledResult run(double horizon, Trajectory initial_traj)
    {
        CoupledResult result;
        result.direction = kernel_.domination();
        result.coagulation = std::move(initial_traj);
        result.graph.vertices = n_;
        result_ = &result;
        double time = 0.0;
        std::size_t events = 0;
        while (true)
        {
            double outer_total = 0.0;
            for (std::uint32_t x : outer_.items())
            {
                outer_total += std::max(0.0, A_row_[x]);
            }
            outer_total *= 0.5;
            double inner_total = 0.0;
            for (std::uint32_t x : outer_.items())
            {
                inner_total += std::max(0.0, H_[x]);
            }
            const double total = outer_total + inner_total;
            if (!(total > 0.0))
            {
                result.coagulation.absorbed = outer_is_coag_ ? true : inner_.size() <= 1;
                break;
            }
            const double dt = rng_.exponential() * static_cast<double>(n_) / total;
            if (time + dt > horizon)
            {
                break;
            }
            time += dt;
            time_ = time;
            const double u = rng_.uniform() * total;
            if (u < inner_total)
            {
                inner_event();
            }
            else
            {
                outer_event();
            }
            ++events;
            if (options_.check_refinement)
            {
                check_refinement();
                ++result.refinement_checks;
            }
            if (options_.recompute_interval != 0 && events % options_.recompute_interval == 0)
            {
                recompute_aggregates();
            }
        }
        result.coagulation.final_time = horizon;
        result.graph.final_time = horizon;
        result.min_residual = min_residual_;
        result_ = nullptr;
        return result;
    }

private:
    double& A(std::size_t x, std::size_t y) { return A_[x * n_ + y]; }
    double& B(std::size_t i, std::size_t j) { return B_[i * n_ + j]; }
    double& MB(std::size_t i, std::size_t x) { return MB_[i * n_ + x]; }
    double& E(std::size_t x, std::size_t y) { return E_[x * n_ + y]; }

    void recompute_aggregates()
    {
        for (std::uint32_t x : outer_.items())
        {
            double s = 0.0;
            for (std::uint32_t y : outer_.items())
            {
                if (y != x)
                {
                    s += A(x, y);
                }
            }
            A_row_[x] = s;
        }
        for (std::uint32_t i : inner_.items())
        {
            for (std::uint32_t x : outer_.items())
            {
                MB(i, x) = 0.0;
            }
            for (std::uint32_t j : inner_.items())
            {
                if (j != i)
                {
                    MB(i, parent_[j]) += B(i, j);
                }
            }
        }
        for (std::uint32_t x : outer_.items())
        {
            H_[x] = 0.0;
            for (std::uint32_t y : outer_.items())
            {
                E(x, y) = 0.0;
            }
        }
        for (std::uint32_t i : inner_.items())
        {
            const std::uint32_t x = parent_[i];
            for (std::uint32_t y : outer_.items())
            {
                if (y == x)
                {
                    H_[x] += 0.5 * MB(i, x);
                }
                else
                {
                    E(x, y) += MB(i, y);
                }
            }
        }
    }

    void inner_event()
    {
        const auto outers = outer_.items();
        const std::size_t px = pick_weighted(outers, [&](std::uint32_t x) { return H_[x]; }, rng_.uniform());
        if (px == static_cast<std::size_t>(-1))
        {
            throw CouplingError("inner event drawn with no positive intra-block rate");
        }
        const std::uint32_t x = outers[px];
        const std::span<const std::uint32_t> kids = children_[x];
        const std::size_t pi = pick_weighted(kids, [&](std::uint32_t i) { return MB(i, x); }, rng_.uniform());
        if (pi == static_cast<std::size_t>(-1))
        {
            throw CouplingError("inner event found no block with a positive partner rate");
        }
        const std::uint32_t i = kids[pi];
        const std::size_t pj = pick_weighted(
            kids, [&](std::uint32_t j) { return j == i ? 0.0 : B(i, j); }, rng_.uniform());
        if (pj == static_cast<std::size_t>(-1))
        {
            throw CouplingError("inner event found no partner block");
        }
        const std::uint32_t j = kids[pj];
        merge_inner(i, j);
        ++result_->inner_merges;
    }

    void outer_event()
    {
        const auto outers = outer_.items();
        const std::size_t px = pick_weighted(outers, [&](std::uint32_t x) { return A_row_[x]; }, rng_.uniform());
        if (px == static_cast<std::size_t>(-1))
        {
            throw CouplingError("outer event drawn with no positive rate");
        }
        const std::uint32_t x = outers[px];
        const std::size_t py = pick_weighted(
            outers, [&](std::uint32_t y) { return y == x ? 0.0 : A(x, y); }, rng_.uniform());
        if (py == static_cast<std::size_t>(-1))
        {
            throw CouplingError("outer event found no partner block");
        }
        const std::uint32_t y = outers[py];
        const double w = rng_.uniform() * A(x, y);
        if (w < E(x, y))
        {
            // The pair fires through one of the inner cross clocks.
            const std::span<const std::uint32_t> kx = children_[x];
            const std::span<const std::uint32_t> ky = children_[y];
            const std::size_t pi = pick_weighted(kx, [&](std::uint32_t i) { return MB(i, y); }, rng_.uniform());
            if (pi == static_cast<std::size_t>(-1))
            {
                throw CouplingError("induced merge found no inner block with a cross rate");
            }
            const std::uint32_t i = kx[pi];
            const std::size_t pj = pick_weighted(ky, [&](std::uint32_t j) { return B(i, j); }, rng_.uniform());
            if (pj == static_cast<std::size_t>(-1))
            {
                throw CouplingError("induced merge found no inner partner");
            }
            const std::uint32_t j = ky[pj];
            const std::uint32_t z = merge_outer(x, y);
            merge_inner(i, j);
            (void)z;
            ++result_->induced_merges;
        }
        else
        {
            merge_outer(x, y);
            ++result_->residual_merges;
        }
    }

    // Merge the types of two coagulation slots; records the event and returns the offspring.
    ClusterType coagulate(std::uint32_t a, std::uint32_t b)
    {
        ClusterType z = kernel_.offspring(types_[a], types_[b], rng_);
        z.labels.clear();
        Event e;
        e.time = time_;
        e.left = coag_id_[a];
        e.right = coag_id_[b];
        e.offspring = z;
        coag_id_[a] = shadow_.apply_coagulation(coag_id_[a], coag_id_[b], z);
        result_->coagulation.events.push_back(std::move(e));
        return z;
    }

    void record_graph(std::uint32_t a, std::uint32_t b)
    {
        result_->graph.events.push_back(GraphEvent{time_, a, b});
    }

    void fresh_row(const ClusterType& z, LiveSet& live, std::uint32_t keep, std::uint32_t drop)
    {
        for (std::uint32_t u : live.items())
        {
            if (u == keep || u == drop)
            {
                continue;
            }
            const double k = kernel_.rate(z, types_[u]);
            if (!(k >= 0.0) || !std::isfinite(k))
            {
                throw SimulationError("nonfinite or negative rate after a coagulation at time " +
                                      std::to_string(time_));
            }
            scratch_[u] = k;
        }
    }

    std::uint32_t merge_outer(std::uint32_t x, std::uint32_t y)
    {
        ClusterType old_x;
        ClusterType old_y;
        if (outer_is_coag_)
        {
            old_x = types_[x];
            old_y = types_[y];
            ClusterType z = coagulate(x, y);
            fresh_row(z, outer_, x, y);
            types_[x] = std::move(z);
        }
        else
        {
            for (std::uint32_t u : outer_.items())
            {
                scratch_[u] = A(x, u) + A(y, u);
            }
            record_graph(x, y);
        }
        double row = 0.0;
        for (std::uint32_t u : outer_.items())
        {
            if (u == x || u == y)
            {
                continue;
            }
            A_row_[u] += scratch_[u] - A(x, u) - A(y, u);
            A(x, u) = A(u, x) = scratch_[u];
            row += scratch_[u];
            E(x, u) += E(y, u);
            E(u, x) = E(x, u);
        }
        A_row_[x] = row;
        H_[x] += H_[y] + E(x, y);
        for (std::uint32_t i : inner_.items())
        {
            MB(i, x) += MB(i, y);
        }
        for (std::uint32_t i : children_[y])
        {
            parent_[i] = x;
            child_pos_[i] = static_cast<std::uint32_t>(children_[x].size());
            children_[x].push_back(i);
        }
        children_[y].clear();
        for (std::uint32_t v : outer_members_[y])
        {
            outer_of_[v] = x;
            outer_members_[x].push_back(v);
        }
        outer_members_[y].clear();
        outer_.erase(y);
        check_residual_row(x, [&](std::uint32_t w) {
            return outer_is_coag_ ? std::array<ClusterType, 4>{old_x, old_y, types_[x], types_[w]}
                                  : std::array<ClusterType, 4>{};
        });
        return x;
    }

    void merge_inner(std::uint32_t i, std::uint32_t j)
    {
        const std::uint32_t x = parent_[i];
        if (parent_[j] != x)
        {
            throw CouplingError("inner merge across outer blocks");
        }
        ClusterType old_i;
        ClusterType old_j;
        if (!outer_is_coag_)
        {
            old_i = types_[i];
            old_j = types_[j];
            ClusterType z = coagulate(i, j);
            fresh_row(z, inner_, i, j);
            types_[i] = std::move(z);
        }
        else
        {
            for (std::uint32_t u : inner_.items())
            {
                scratch_[u] = B(i, u) + B(j, u);
            }
            record_graph(i, j);
        }
        for (std::uint32_t y : outer_.items())
        {
            block_sum_[y] = 0.0;
        }
        for (std::uint32_t u : inner_.items())
        {
            if (u != i && u != j)
            {
                block_sum_[parent_[u]] += scratch_[u];
            }
        }
        H_[x] += B(i, j) - MB(i, x) - MB(j, x) + block_sum_[x];
        for (std::uint32_t y : outer_.items())
        {
            if (y == x)
            {
                continue;
            }
            const double d = block_sum_[y] - MB(i, y) - MB(j, y);
            E(x, y) += d;
            E(y, x) += d;
        }
        for (std::uint32_t u : inner_.items())
        {
            if (u == i || u == j)
            {
                continue;
            }
            MB(u, x) += scratch_[u] - B(u, i) - B(u, j);
            B(i, u) = B(u, i) = scratch_[u];
        }
        for (std::uint32_t y : outer_.items())
        {
            MB(i, y) = block_sum_[y];
        }
        auto& kids = children_[x];
        const std::uint32_t pj = child_pos_[j];
        kids[pj] = kids.back();
        child_pos_[kids[pj]] = pj;
        kids.pop_back();
        for (std::uint32_t v : inner_members_[j])
        {
            inner_of_[v] = i;
            inner_members_[i].push_back(v);
        }
        inner_members_[j].clear();
        inner_.erase(j);
        if (!outer_is_coag_)
        {
            check_residual_row(x, [&](std::uint32_t w) {
                // The third cluster in block w whose rate grew the most.
                std::uint32_t q = children_[w].front();
                double best = -std::numeric_limits<double>::infinity();
                for (std::uint32_t u : children_[w])
                {
                    const double d = B(i, u) - kernel_.rate(old_i, types_[u]) - kernel_.rate(old_j, types_[u]);
                    if (d > best)
                    {
                        best = d;
                        q = u;
                    }
                }
                return std::array<ClusterType, 4>{old_i, old_j, types_[i], types_[q]};
            });
        }
    }

    template <class Witness>
    void check_residual_row(std::uint32_t x, Witness witness)
    {
        for (std::uint32_t w : outer_.items())
        {
            if (w == x)
            {
                continue;
            }
            const double a = A(x, w);
            const double r = a - E(x, w);
            min_residual_ = std::min(min_residual_, r);
            if (r < -options_.residual_tolerance * std::max(1.0, a))
            {
                auto wit = witness(w);
                std::ostringstream os;
                os << "domination violated at time " << time_ << ": residual rate " << r << " (outer rate " << a
                   << ", inner cross rates " << E(x, w) << ")";
                throw DominationViolation(os.str(), wit[0], wit[1], wit[2], wit[3], r);
            }
        }
    }

    void check_refinement() const
    {
        for (std::uint32_t v = 0; v < n_; ++v)
        {
            if (parent_[inner_of_[v]] != outer_of_[v])
            {
                throw CouplingError("refinement violated at time " + std::to_string(time_) + " for vertex " +
                                    std::to_string(v));
            }
        }
    }

    std::size_t n_;
    const KernelSpec& kernel_;
    CoupledRunOptions options_;
    bool outer_is_coag_;
    CounterRng rng_;
    std::vector<double> A_;
    std::vector<double> B_;
    std::vector<double> MB_;
    std::vector<double> E_;
    std::vector<double> A_row_;
    std::vector<double> H_;
    LiveSet outer_;
    LiveSet inner_;
    std::vector<std::uint32_t> parent_;
    std::vector<std::vector<std::uint32_t>> children_;
    std::vector<std::uint32_t> child_pos_;
    std::vector<std::vector<std::uint32_t>> outer_members_;
    std::vector<std::vector<std::uint32_t>> inner_members_;
    std::vector<std::uint32_t> outer_of_;
    std::vector<std::uint32_t> inner_of_;
    std::vector<ClusterType> types_;
    std::vector<ClusterId> coag_id_;
    Configuration shadow_;
    std::vector<double> scratch_;
    std::vector<double> block_sum_;
    double time_ = 0.0;
    double min_residual_ = 0.0;
    CoupledResult* result_ = nullptr;
};

} // namespace

GraphState sample_graph_at(std::span<const ClusterType> vertex_types, const KernelSpec& kernel, double t,
                           std::uint64_t seed)
{
    if (!(t >= 0.0))
    {
        throw ContractViolation("sample_graph_at: time must be nonnegative");
    }
    for (const auto& x : vertex_types)
    {
        if (x.mass != 1.0)
        {
            throw ContractViolation("sample_graph_at: vertex types must have mass 1");
        }
    }
    GraphState g;
    g.vertex_types.assign(vertex_types.begin(), vertex_types.end());
    g.components = UnionFind(vertex_types.size());
    g.time = t;
    if (t == 0.0 || vertex_types.size() < 2)
    {
        return g;
    }
    const double scale = t / static_cast<double>(vertex_types.size());
    CounterRng rng(seed);
    std::vector<double> row(vertex_types.size());
    for (std::size_t i = 0; i + 1 < vertex_types.size(); ++i)
    {
        const auto rest = vertex_types.subspan(i + 1);
        std::span<double> out(row.data(), rest.size());
        kernel.model().rate_row(vertex_types[i], rest, out);
        for (std::size_t k = 0; k < rest.size(); ++k)
        {
            if (!(out[k] > 0.0))
            {
                continue;
            }
            const double p = -std::expm1(-out[k] * scale);
            if (rng.uniform() < p)
            {
                g.components.unite(static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(i + 1 + k));
            }
        }
    }
    return g;
}

UnionFind GraphTrajectory::components_at(double t) const
{
    UnionFind uf(vertices);
    for (const GraphEvent& e : events)
    {
        if (e.time > t)
        {
            break;
        }
        uf.unite(e.u, e.v);
    }
    return uf;
}

CoupledResult coupled_run(const Configuration& initial, const KernelSpec& kernel, double horizon,
                          std::uint64_t seed, CoupledRunOptions options)
{
    const Domination d = kernel.domination();
    if (d != Domination::dominating && d != Domination::dominated)
    {
        throw ContractViolation("coupled_run: kernel '" + kernel.name() + "' is " + to_string(d) +
                                "; the coupling needs a dominating or dominated kernel");
    }
    if (initial.coagulations() != 0 || initial.empty())
    {
        throw ContractViolation("coupled_run: needs a fresh, nonempty initial configuration");
    }
    if (initial.size() > options.max_vertices)
    {
        throw ContractViolation("coupled_run: " + std::to_string(initial.size()) + " vertices exceeds the limit of " +
                                std::to_string(options.max_vertices));
    }
    for (const auto& c : initial.clusters())
    {
        if (c.mass != 1.0)
        {
            throw ContractViolation("coupled_run: initial configuration must be mono-dispersed");
        }
    }
    if (!(horizon >= 0.0))
    {
        throw ContractViolation("coupled_run: horizon must be nonnegative");
    }
    Trajectory traj;
    traj.initial = Configuration(std::vector<ClusterType>(initial.clusters().begin(), initial.clusters().end()),
                                 initial.n_param(), kernel.rate_kernel());
    traj.rng_seed = seed;
    traj.rng_stream = options.stream;
    Coupler coupler(traj.initial, kernel, seed, options);
    return coupler.run(horizon, std::move(traj));
}

std::vector<DominationSample> domination_check(const Trajectory& coagulation, const GraphTrajectory& graph,
                                               double j, Domination direction)
{
    if (direction != Domination::dominating && direction != Domination::dominated)
    {
        throw ContractViolation("domination_check: direction must be dominating or dominated");
    }
    const Configuration& init = coagulation.initial;
    std::vector<double> mass(init.next_id() + coagulation.events.size(), 0.0);
    double coag_side = 0.0;
    for (std::size_t p = 0; p < init.size(); ++p)
    {
        const double m = init.clusters()[p].mass;
        mass[init.id_at(p)] = m;
        if (m >= j)
        {
            coag_side += m;
        }
    }
    UnionFind uf(graph.vertices);
    double graph_side = j <= 1.0 ? static_cast<double>(graph.vertices) : 0.0;

    auto sample = [&](double t) {
        DominationSample s;
        s.time = t;
        s.coagulation_side = coag_side;
        s.graph_side = graph_side;
        s.holds = direction == Domination::dominating ? coag_side >= graph_side : coag_side <= graph_side;
        return s;
    };
    std::vector<DominationSample> out;
    out.push_back(sample(0.0));
    std::size_t ci = 0;
    std::size_t gi = 0;
    const auto& ce = coagulation.events;
    const auto& ge = graph.events;
    while (ci < ce.size() || gi < ge.size())
    {
        const double tc = ci < ce.size() ? ce[ci].time : std::numeric_limits<double>::infinity();
        const double tg = gi < ge.size() ? ge[gi].time : std::numeric_limits<double>::infinity();
        const double t = std::min(tc, tg);
        while (ci < ce.size() && ce[ci].time == t)
        {
            const Event& e = ce[ci];
            for (ClusterId p : {e.left, e.right})
            {
                if (mass[p] >= j)
                {
                    coag_side -= mass[p];
                }
            }
            mass[coagulation.offspring_id(ci)] = e.offspring.mass;
            if (e.offspring.mass >= j)
            {
                coag_side += e.offspring.mass;
            }
            ++ci;
        }
        while (gi < ge.size() && ge[gi].time == t)
        {
            const auto a = static_cast<double>(uf.component_size(ge[gi].u));
            const auto b = static_cast<double>(uf.component_size(ge[gi].v));
            if (!uf.connected(ge[gi].u, ge[gi].v))
            {
                graph_side -= (a >= j ? a : 0.0) + (b >= j ? b : 0.0);
                graph_side += a + b >= j ? a + b : 0.0;
                uf.unite(ge[gi].u, ge[gi].v);
            }
            ++gi;
        }
        out.push_back(sample(t));
    }
    return out;
}

OperatorNorm operator_norm(std::span<const ClusterType> vertex_types, const KernelSpec& kernel,
                           std::span<const double> weights, OperatorNormOptions options)
{
    const std::size_t n = vertex_types.size();
    if (n == 0 || weights.size() != n)
    {
        throw ContractViolation("operator_norm: need one weight per vertex type");
    }
    std::vector<double> sw(n);
    for (std::size_t i = 0; i < n; ++i)
    {
        if (!(weights[i] >= 0.0) || !std::isfinite(weights[i]))
        {
            throw ContractViolation("operator_norm: weights must be nonnegative and finite");
        }
        sw[i] = std::sqrt(weights[i]);
    }

    std::vector<double> row(n);
    // y = W^{1/2} K W^{1/2} v from the upper triangle of K (diagonal included).
    auto apply = [&](const std::vector<double>& v, std::vector<double>& y) {
        std::fill(y.begin(), y.end(), 0.0);
        for (std::size_t i = 0; i < n; ++i)
        {
            const auto rest = vertex_types.subspan(i);
            std::span<double> out(row.data(), rest.size());
            kernel.model().rate_row(vertex_types[i], rest, out);
            const double si = sw[i] * v[i];
            double acc = out[0] * sw[i] * v[i];
            for (std::size_t k = 1; k < rest.size(); ++k)
            {
                const std::size_t jdx = i + k;
                acc += out[k] * sw[jdx] * v[jdx];
                y[jdx] += out[k] * si;
            }
            y[i] += acc;
        }
        for (std::size_t i = 0; i < n; ++i)
        {
            y[i] *= sw[i];
        }
    };
    auto dot = [](const std::vector<double>& a, const std::vector<double>& b) {
        long double s = 0.0L;
        for (std::size_t i = 0; i < a.size(); ++i)
        {
            s += static_cast<long double>(a[i]) * b[i];
        }
        return static_cast<double>(s);
    };
    auto normalize = [&](std::vector<double>& v) {
        const double norm = std::sqrt(dot(v, v));
        if (norm > 0.0)
        {
            for (double& c : v)
            {
                c /= norm;
            }
        }
        return norm;
    };

    CounterRng rng(options.seed);
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i)
    {
        v[i] = sw[i] * (1.0 + options.perturbation * (2.0 * rng.uniform() - 1.0));
    }
    OperatorNorm result;
    if (normalize(v) == 0.0)
    {
        return result;
    }
    std::vector<double> y(n);
    apply(v, y);
    double rayleigh = dot(v, y);
    if (!(rayleigh > 0.0))
    {
        return result;
    }
    // A positive shift separates the Perron root from a negative eigenvalue
    // of equal modulus, which would otherwise make the iteration oscillate.
    const double shift = rayleigh / 4.0;
    for (std::size_t it = 1; it <= options.max_iterations; ++it)
    {
        for (std::size_t i = 0; i < n; ++i)
        {
            v[i] = y[i] + shift * v[i];
        }
        normalize(v);
        apply(v, y);
        const double next = dot(v, y);
        const bool converged = std::abs(next - rayleigh) <= options.tolerance * std::abs(next);
        rayleigh = next;
        if (converged)
        {
            double res = 0.0;
            for (std::size_t i = 0; i < n; ++i)
            {
                const double d = y[i] - rayleigh * v[i];
                res += d * d;
            }
            result.sigma = rayleigh;
            result.t_star = 1.0 / rayleigh;
            result.iterations = it;
            result.residual = std::sqrt(res);
            return result;
        }
    }
    double res = 0.0;
    for (std::size_t i = 0; i < n; ++i)
    {
        const double d = y[i] - rayleigh * v[i];
        res += d * d;
    }
    throw SimulationError("operator_norm: power iteration did not converge in " +
                          std::to_string(options.max_iterations) + " iterations (residual " +
                          std::to_string(std::sqrt(res)) + ")");
}

OperatorNorm operator_norm(std::span<const ClusterType> vertex_types, const KernelSpec& kernel,
                           OperatorNormOptions options)
{
    std::vector<double> w(vertex_types.size(), vertex_types.empty() ? 0.0 : 1.0 / vertex_types.size());
    return operator_norm(vertex_types, kernel, w, options);
}

FourSetCheck four_set_check(const KernelSpec& kernel, const ClusterType& x1, const ClusterType& x2,
                            const ClusterType& x3, const ClusterType& x4, Domination direction, CounterRng& rng,
                            double tolerance)
{
    const ClusterType z12 = kernel.offspring(x1, x2, rng);
    const ClusterType z34 = kernel.offspring(x3, x4, rng);
    FourSetCheck c;
    c.merged_rate = kernel.rate(z12, z34);
    c.split_rate = kernel.rate(x1, x3) + kernel.rate(x1, x4) + kernel.rate(x2, x3) + kernel.rate(x2, x4);
    const double slack = tolerance * std::max({1.0, c.merged_rate, c.split_rate});
    if (direction == Domination::dominating)
    {
        c.holds = c.merged_rate >= c.split_rate - slack;
    }
    else if (direction == Domination::dominated)
    {
        c.holds = c.merged_rate <= c.split_rate + slack;
    }
    else
    {
        throw ContractViolation("four_set_check: direction must be dominating or dominated");
    }
    return c;
}

} // namespace coagulab
