#pragma once

#include "coagulab/prefix_sum_tree.hpp"

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace coagulab {

using ClusterId = std::uint32_t;
using Label = std::uint32_t;

// A point of the type space: a mass, optional coordinates (a spatial
// position, or a feature vector for bilinear kernels), and the labels of the
// founding clusters it is made of.
struct ClusterType
{
    double mass = 1.0;
    std::vector<double> position;
    std::vector<Label> labels;
};

// Broken precondition or internal invariant.
class ContractViolation : public std::logic_error
{
public:
    using std::logic_error::logic_error;
};

// Failure while advancing a trajectory (nonfinite rate, observer failure, ...).
class SimulationError : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

// Total pair rate K̄(x, y) of a coagulation kernel.
class RateKernel
{
public:
    virtual ~RateKernel() = default;

    virtual double rate(const ClusterType& x, const ClusterType& y) const = 0;

    // out[k] = rate(x, ys[k]). Implementations override this with a loop the
    // compiler can inline; it sits on the hot path of every event.
    virtual void rate_row(const ClusterType& x, std::span<const ClusterType> ys, std::span<double> out) const;
};

enum class TimeMode
{
    normalized, // pair clocks run at K̄/N, times reported as is
    raw,        // pair clocks run at K̄, raw time s maps to normalized t = N s
};

struct TimeConvention
{
    TimeMode mode = TimeMode::normalized;

    static double to_normalized(double raw_time, std::uint64_t n) { return raw_time * static_cast<double>(n); }
    static double to_raw(double normalized_time, std::uint64_t n) { return normalized_time / static_cast<double>(n); }
};

enum class Threshold
{
    inclusive, // m >= a
    strict,    // m > a
};

// The point measure L^(N)_t: live clusters plus cached rate aggregates
// R_i = sum_{j != i} K̄(x_i, x_j) and Λ = ½ sum_i R_i (unnormalized).
//
// Cluster ids are stable: the initial clusters get ids 0..n-1 and every
// coagulation retires both parents and assigns the offspring the next id.
// Live clusters are stored densely (swap-remove), so dense positions are
// not stable across coagulations.
class Configuration
{
public:
    static constexpr std::size_t default_recompute_interval = 4096;

    Configuration() = default;

    // A null kernel means every pair rate is zero (mass bookkeeping only).
    Configuration(std::vector<ClusterType> clusters, std::uint64_t n_param,
                  std::shared_ptr<const RateKernel> kernel = nullptr);

    std::size_t size() const noexcept { return clusters_.size(); }
    bool empty() const noexcept { return clusters_.empty(); }
    std::uint64_t n_param() const noexcept { return n_param_; }
    std::size_t initial_count() const noexcept { return initial_count_; }
    ClusterId next_id() const noexcept { return static_cast<ClusterId>(dense_of_.size()); }
    std::size_t coagulations() const noexcept { return coagulations_; }

    double total_mass() const noexcept { return total_mass_; }
    long double total_rate() const noexcept { return total_rate_; }

    std::span<const ClusterType> clusters() const noexcept { return clusters_; }
    std::span<const double> per_cluster_rates() const noexcept { return rates_; }
    std::span<const ClusterId> ids() const noexcept { return ids_; }

    ClusterId id_at(std::size_t dense) const { return ids_.at(dense); }
    bool is_live(ClusterId id) const noexcept;
    std::size_t dense_index(ClusterId id) const;
    const ClusterType& cluster(ClusterId id) const { return clusters_[dense_index(id)]; }
    double cluster_rate(ClusterId id) const { return rates_[dense_index(id)]; }

    const RateKernel* kernel() const noexcept { return kernel_.get(); }
    std::shared_ptr<const RateKernel> shared_kernel() const noexcept { return kernel_; }

    // Rates K̄(x_id, x_k) against every live cluster in dense order, with the
    // self entry set to zero. Valid until the next mutation.
    std::span<const double> rate_row(ClusterId id) const;

    // Draw a dense position with probability R_i / sum R, given u in [0, 1).
    std::size_t sample_cluster(double u) const;

    // Replace clusters i and j by z. z.mass must equal the parents' mass sum;
    // empty z.labels are filled with the union of the parents' labels.
    // Returns the offspring id.
    ClusterId apply_coagulation(ClusterId i, ClusterId j, ClusterType z);

    // Refresh R_i for one cluster from scratch (used when the cache is stale).
    void refresh_rate(ClusterId id);

    void recompute_rates();
    void set_recompute_interval(std::size_t every) noexcept { recompute_interval_ = every; }
    std::size_t recompute_interval() const noexcept { return recompute_interval_; }

    // Max relative deviation of cached R_i (and Λ) from a full O(n²) recompute.
    double rate_cache_drift() const;

private:
    void compute_row(const ClusterType& x, std::size_t self, std::vector<double>& out) const;
    void check_row(ClusterId id, std::span<const double> row) const;
    void refresh_total();

    std::vector<ClusterType> clusters_;
    std::vector<double> rates_;
    std::vector<ClusterId> ids_;
    std::vector<std::int64_t> dense_of_; // by id; -1 when retired
    std::uint64_t n_param_ = 0;
    std::size_t initial_count_ = 0;
    std::size_t coagulations_ = 0;
    std::size_t recompute_interval_ = default_recompute_interval;
    double total_mass_ = 0.0;
    long double total_rate_ = 0.0L;
    std::shared_ptr<const RateKernel> kernel_;

    mutable std::vector<double> row_scratch_;
    mutable std::optional<ClusterId> row_owner_;
    mutable PrefixSumTree tree_;
    mutable bool tree_dirty_ = true;
    std::vector<double> row_a_;
    std::vector<double> row_b_;
};

// N mass-1 clusters labelled 0..n-1, optionally with positions.
std::vector<ClusterType> monodispersed_clusters(std::size_t n, std::vector<std::vector<double>> positions = {});

double total_mass(const Configuration& config);

double mass_above(const Configuration& config, double threshold, Threshold mode = Threshold::inclusive);

// Functional form of Configuration::apply_coagulation.
Configuration apply_coagulation(Configuration config, ClusterId i, ClusterId j, ClusterType z);

} // namespace coagulab
