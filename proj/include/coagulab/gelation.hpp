#pragma once

#include "coagulab/core.hpp"
#include "coagulab/kernels.hpp"
#include "coagulab/simulator.hpp"

#include <json.hpp>

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace coagulab {

// Total mass per dyadic band j: clusters with mass in [2^j, 2^{j+1}).
// Clusters lighter than 1 are not banded.
struct DyadicSpectrum
{
    std::map<int, double> bands;

    double total() const;
    double band(int j) const;
};

int dyadic_band(double mass);
DyadicSpectrum dyadic_spectrum(std::span<const double> masses);
DyadicSpectrum dyadic_spectrum(const Configuration& config);

using IntegerFunction = std::function<std::uint64_t(std::uint64_t)>;

struct GelationRule
{
    IntegerFunction psi;
    double delta = 0.1;
    std::optional<double> alpha;

    // Throws ContractViolation unless delta in (0, 1), alpha in (0, 1] and psi set.
    void validate() const;
};

// Cluster masses of a trajectory at chosen times, by replaying the events.
class MassHistory
{
public:
    explicit MassHistory(const Trajectory& trajectory);

    // Live masses after all events with time <= t. Requires t <= final_time
    // unless the trajectory absorbed.
    std::vector<double> masses_at(double t) const;
    double largest_at(double t) const;

    std::size_t event_count() const noexcept { return event_times_.size(); }

private:
    const Trajectory* traj_;
    std::vector<double> mass_by_id_;
    std::vector<double> event_times_;
};

// First time some cluster has mass > alpha N (strict).
std::optional<double> tau_alpha(const Trajectory& trajectory, double alpha);

// First time the normalized mass in clusters with m >= psi(N) reaches delta.
std::optional<double> tau_psi_delta(const Trajectory& trajectory, const GelationRule& rule);
std::optional<double> tau_psi_delta(const Trajectory& trajectory, double psi_value, double delta);

// T_k for k = 0..k_max: first time the mass in clusters with m >= 2^i is at
// least rho_i times the initial mass, for every i <= k.
std::vector<std::optional<double>> cascade_times(const Trajectory& trajectory, std::span<const double> rho_seq,
                                                 std::size_t k_max);

// rho_k = rho_limit + scale * sum_{i >= k} f_i over the given f, with the
// scale chosen so that rho_0 = rho0. Strictly decreasing for positive f.
std::vector<double> rho_sequence(std::span<const double> f_seq, double rho_limit, double rho0);

// Stop predicates for simulator::run.
StopCondition::Predicate stop_when_mass_exceeds(double threshold);
StopCondition::Predicate stop_when_mass_fraction_reached(const Configuration& initial, double psi_value,
                                                         double delta);

struct PsiPrime
{
    std::uint64_t value = 1;
    std::optional<std::size_t> k_max;
    std::string warning;
};

// psi'(N) = psi(N) ∧ 2^{k_max}, k_max = max{k : 2^{k+2} / (init_mass f_k) <= N / xi(N)}.
PsiPrime compute_psi_prime(std::uint64_t n, const IntegerFunction& psi, const IntegerFunction& xi, double init_mass,
                           std::span<const double> f_seq);

enum class Verdict
{
    converging,
    diverging,
    inconclusive,
};

std::string to_string(Verdict v);

struct CriterionReport
{
    std::vector<double> summands;
    std::vector<double> partial_sums;
    Verdict verdict = Verdict::inconclusive;
    std::string f_description;
    int j_min = 0;
    int j_max = 0;
    // Per band: estimated inf of K̄ over the band (classical), or the least
    // cell estimate c'(P, j) at the largest N (partition).
    std::vector<double> c_prime;
    // Mean ratio of consecutive summands over the last quarter of bands.
    double tail_ratio = 0.0;
    std::optional<int> zero_band;
    std::string note;

    // Partition diagnostic only: sums and psi xi / N along the N ladder.
    std::vector<std::uint64_t> n_ladder;
    std::vector<double> ladder_sums;
    std::vector<double> psi_xi_over_n;
    std::optional<double> ladder_slope;
    bool psi_xi_vanishing = false;
    std::vector<std::string> flagged_cells;
};

nlohmann::json to_json(const CriterionReport& report);

struct FSequence
{
    std::vector<double> values;
    std::string description;
};

FSequence geometric_f(double exponent, std::size_t count);  // 2^{-exponent j}
FSequence polynomial_f(double exponent, std::size_t count); // (j + 1)^{-exponent}
// 2^{-(gamma - 1) j / 4} for a known gamma > 1, else (j + 1)^{-1.05}.
FSequence default_f(const KernelSpec& kernel, std::size_t count);

struct ClassicalDiagnosticOptions
{
    int j_max = 20;
    std::size_t grid = 64;
};

// Per-band summand sup_{m,n in band j} 2^j / (K̄(m, n) f_j^2), with the sup
// taken over a grid of the band; verdict from the tail ratio of summands.
CriterionReport classical_criterion_diagnostic(const KernelSpec& kernel, const FSequence& f,
                                               ClassicalDiagnosticOptions options = {});

// A finite partition of the spatial domain, used to estimate c'(P, j).
class Partition
{
public:
    virtual ~Partition() = default;
    virtual std::size_t dimension() const = 0;
    virtual std::size_t cell_count() const = 0;
    virtual bool contains(std::size_t cell, std::span<const double> point) const = 0;
    // Uniform point in the cell.
    virtual void sample(std::size_t cell, CounterRng& rng, std::span<double> out) const = 0;
    // A vertex of the cell (index taken modulo the vertex count).
    virtual void vertex(std::size_t cell, std::size_t index, std::span<double> out) const = 0;
};

// [0,1]^d split into cells_per_axis^d equal hypercubes.
class HypercubePartition final : public Partition
{
public:
    HypercubePartition(std::size_t dimension, std::size_t cells_per_axis);

    std::size_t dimension() const override { return dim_; }
    std::size_t cell_count() const override { return count_; }
    bool contains(std::size_t cell, std::span<const double> point) const override;
    void sample(std::size_t cell, CounterRng& rng, std::span<double> out) const override;
    void vertex(std::size_t cell, std::size_t index, std::span<double> out) const override;

private:
    std::size_t dim_;
    std::size_t per_axis_;
    std::size_t count_;
};

// Partition family indexed by band j and N.
using PartitionFamily = std::function<std::shared_ptr<const Partition>(int j, std::uint64_t n)>;

struct PartitionDiagnosticOptions
{
    int j_max = 64;
    std::size_t samples_per_cell = 1000;
    std::uint64_t seed = 0x9a27;
};

// Estimates c'(P, j) by sampling pairs inside each cell (half at cell
// vertices and band endpoints, half uniform) and evaluates
// S(N) = sum_{j <= log2 psi(N)} f_j^{-2} (sum_P 1 / c'(P, j)) 2^j at each N of
// the ladder. Sampled infima over-estimate c', so "converging" is advisory.
CriterionReport partition_criterion_diagnostic(const KernelSpec& kernel, const PartitionFamily& partitions,
                                               const FSequence& f, std::span<const std::uint64_t> n_ladder,
                                               const IntegerFunction& psi, const IntegerFunction& xi,
                                               PartitionDiagnosticOptions options = {});

struct Lemma52Result
{
    double lhs = 0.0;
    double rhs = 0.0;
    bool holds = false;
};

// sum_i c_i (v_i^2 - v_i) >= (k1 - n)^2 / (2 k2), k1 = sum v_i, k2 = sum 1/c_i.
Lemma52Result check_lemma_52(std::span<const std::int64_t> v, std::span<const double> c);

// (1/N^2) sum_{i != j} K̄(x_i, x_j) m(x_i), the double integral bounded by g_pi.
double g_pi_estimate(const Configuration& config);

// Smallest integer r with r^k >= x, computed exactly.
std::uint64_t ceil_root(std::uint64_t x, unsigned k);

} // namespace coagulab
