#include "coagulab/core.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <unordered_set>
#include <utility>

namespace coagulab {

namespace {

constexpr double mass_tolerance = 1e-9;

bool same_mass(double a, double b)
{
    return std::abs(a - b) <= mass_tolerance * std::max({1.0, std::abs(a), std::abs(b)});
}

} // namespace

void RateKernel::rate_row(const ClusterType& x, std::span<const ClusterType> ys, std::span<double> out) const
{
    for (std::size_t k = 0; k < ys.size(); ++k)
    {
        out[k] = rate(x, ys[k]);
    }
}

Configuration::Configuration(std::vector<ClusterType> clusters, std::uint64_t n_param,
                             std::shared_ptr<const RateKernel> kernel)
    : clusters_(std::move(clusters))
    , n_param_(n_param)
    , initial_count_(clusters_.size())
    , kernel_(std::move(kernel))
{
    if (n_param_ == 0)
    {
        throw ContractViolation("Configuration: N must be positive");
    }
    const bool assign_labels =
        std::all_of(clusters_.begin(), clusters_.end(), [](const ClusterType& c) { return c.labels.empty(); });
    std::unordered_set<Label> seen;
    for (std::size_t i = 0; i < clusters_.size(); ++i)
    {
        auto& c = clusters_[i];
        if (!(c.mass > 0.0) || !std::isfinite(c.mass))
        {
            throw ContractViolation("Configuration: cluster " + std::to_string(i) + " has non-positive mass");
        }
        if (assign_labels)
        {
            c.labels = {static_cast<Label>(i)};
        }
        if (c.labels.empty())
        {
            throw ContractViolation("Configuration: cluster " + std::to_string(i) + " has no labels");
        }
        for (Label l : c.labels)
        {
            if (!seen.insert(l).second)
            {
                throw ContractViolation("Configuration: label " + std::to_string(l) + " is shared by two clusters");
            }
        }
        total_mass_ += c.mass;
    }
    ids_.resize(clusters_.size());
    std::iota(ids_.begin(), ids_.end(), ClusterId{0});
    dense_of_.resize(clusters_.size());
    std::iota(dense_of_.begin(), dense_of_.end(), std::int64_t{0});
    recompute_rates();
}

bool Configuration::is_live(ClusterId id) const noexcept
{
    return id < dense_of_.size() && dense_of_[id] >= 0;
}

std::size_t Configuration::dense_index(ClusterId id) const
{
    if (!is_live(id))
    {
        throw ContractViolation("cluster " + std::to_string(id) + " is not live");
    }
    return static_cast<std::size_t>(dense_of_[id]);
}

void Configuration::compute_row(const ClusterType& x, std::size_t self, std::vector<double>& out) const
{
    out.resize(clusters_.size());
    if (kernel_)
    {
        kernel_->rate_row(x, clusters_, out);
    }
    else
    {
        std::fill(out.begin(), out.end(), 0.0);
    }
    if (self < out.size())
    {
        out[self] = 0.0;
    }
}

void Configuration::check_row(ClusterId id, std::span<const double> row) const
{
    for (std::size_t k = 0; k < row.size(); ++k)
    {
        const double v = row[k];
        if (!(v >= 0.0) || !std::isfinite(v))
        {
            throw SimulationError("nonfinite or negative rate " + std::to_string(v) + " for pair (" +
                                  std::to_string(id) + ", " + std::to_string(ids_[k]) + ")");
        }
    }
}

std::span<const double> Configuration::rate_row(ClusterId id) const
{
    if (row_owner_ != id)
    {
        const std::size_t self = dense_index(id);
        compute_row(clusters_[self], self, row_scratch_);
        check_row(id, row_scratch_);
        row_owner_ = id;
    }
    return row_scratch_;
}

std::size_t Configuration::sample_cluster(double u) const
{
    if (clusters_.empty())
    {
        throw ContractViolation("sample_cluster on an empty configuration");
    }
    if (tree_dirty_)
    {
        tree_.assign(rates_);
        tree_dirty_ = false;
    }
    const double total = tree_.total();
    if (!(total > 0.0))
    {
        throw ContractViolation("sample_cluster with zero total rate");
    }
    std::size_t pick = tree_.find(u * total);
    if (rates_[pick] > 0.0)
    {
        return pick;
    }
    // Rounding at the top end of the prefix sums can land on a zero weight.
    for (std::size_t k = pick; k-- > 0;)
    {
        if (rates_[k] > 0.0)
        {
            return k;
        }
    }
    for (std::size_t k = pick + 1; k < rates_.size(); ++k)
    {
        if (rates_[k] > 0.0)
        {
            return k;
        }
    }
    throw ContractViolation("sample_cluster found no positive rate");
}

ClusterId Configuration::apply_coagulation(ClusterId i, ClusterId j, ClusterType z)
{
    if (i == j)
    {
        throw ContractViolation("apply_coagulation: a cluster cannot merge with itself");
    }
    std::size_t pi = dense_index(i);
    const std::size_t pj = dense_index(j);
    const double parent_mass = clusters_[pi].mass + clusters_[pj].mass;
    if (!same_mass(z.mass, parent_mass))
    {
        throw ContractViolation("apply_coagulation: offspring mass " + std::to_string(z.mass) +
                                " does not equal parent mass " + std::to_string(parent_mass));
    }

    auto& li = clusters_[pi].labels;
    auto& lj = clusters_[pj].labels;
    if (z.labels.empty())
    {
        if (li.size() >= lj.size())
        {
            z.labels = std::move(li);
            z.labels.insert(z.labels.end(), lj.begin(), lj.end());
        }
        else
        {
            z.labels = std::move(lj);
            z.labels.insert(z.labels.end(), li.begin(), li.end());
        }
    }
    else
    {
        std::vector<Label> expected = li;
        expected.insert(expected.end(), lj.begin(), lj.end());
        std::vector<Label> given = z.labels;
        std::sort(expected.begin(), expected.end());
        std::sort(given.begin(), given.end());
        if (expected != given)
        {
            throw ContractViolation("apply_coagulation: offspring labels are not the union of the parents' labels");
        }
    }

    if (kernel_)
    {
        if (row_owner_ == i)
        {
            row_a_.swap(row_scratch_);
        }
        else
        {
            compute_row(clusters_[pi], pi, row_a_);
            check_row(i, row_a_);
        }
        compute_row(clusters_[pj], pj, row_b_);
        check_row(j, row_b_);
        for (std::size_t k = 0; k < rates_.size(); ++k)
        {
            rates_[k] -= row_a_[k] + row_b_[k];
        }
    }

    const auto new_id = static_cast<ClusterId>(dense_of_.size());
    total_mass_ += z.mass - parent_mass;
    clusters_[pi] = std::move(z);
    ids_[pi] = new_id;
    dense_of_.push_back(static_cast<std::int64_t>(pi));
    dense_of_[i] = -1;
    dense_of_[j] = -1;

    const std::size_t last = clusters_.size() - 1;
    if (pj != last)
    {
        clusters_[pj] = std::move(clusters_[last]);
        rates_[pj] = rates_[last];
        ids_[pj] = ids_[last];
        dense_of_[ids_[pj]] = static_cast<std::int64_t>(pj);
        if (pi == last)
        {
            pi = pj;
        }
    }
    clusters_.pop_back();
    rates_.pop_back();
    ids_.pop_back();

    if (kernel_)
    {
        compute_row(clusters_[pi], pi, row_a_);
        check_row(new_id, std::span<const double>(row_a_).first(clusters_.size()));
        double own = 0.0;
        for (std::size_t k = 0; k < clusters_.size(); ++k)
        {
            own += row_a_[k];
            double r = rates_[k] + row_a_[k];
            rates_[k] = r > 0.0 ? r : 0.0;
        }
        rates_[pi] = own;
    }
    else
    {
        rates_[pi] = 0.0;
    }

    ++coagulations_;
    row_owner_.reset();
    tree_dirty_ = true;
    if (recompute_interval_ != 0 && coagulations_ % recompute_interval_ == 0)
    {
        recompute_rates();
    }
    else
    {
        refresh_total();
    }
    return new_id;
}

void Configuration::refresh_rate(ClusterId id)
{
    const std::size_t p = dense_index(id);
    compute_row(clusters_[p], p, row_a_);
    check_row(id, row_a_);
    rates_[p] = std::accumulate(row_a_.begin(), row_a_.end(), 0.0);
    tree_dirty_ = true;
    refresh_total();
}

void Configuration::recompute_rates()
{
    rates_.assign(clusters_.size(), 0.0);
    if (kernel_)
    {
        for (std::size_t p = 0; p < clusters_.size(); ++p)
        {
            compute_row(clusters_[p], p, row_a_);
            check_row(ids_[p], row_a_);
            rates_[p] = std::accumulate(row_a_.begin(), row_a_.end(), 0.0);
        }
    }
    row_owner_.reset();
    tree_dirty_ = true;
    refresh_total();
}

void Configuration::refresh_total()
{
    long double s = 0.0L;
    for (double r : rates_)
    {
        s += r;
    }
    total_rate_ = s / 2.0L;
}

double Configuration::rate_cache_drift() const
{
    if (clusters_.empty())
    {
        return 0.0;
    }
    std::vector<double> fresh(clusters_.size(), 0.0);
    std::vector<double> row;
    for (std::size_t p = 0; p < clusters_.size(); ++p)
    {
        compute_row(clusters_[p], p, row);
        fresh[p] = std::accumulate(row.begin(), row.end(), 0.0);
    }
    const double scale = *std::max_element(fresh.begin(), fresh.end());
    double worst = 0.0;
    long double fresh_total = 0.0L;
    for (std::size_t p = 0; p < fresh.size(); ++p)
    {
        fresh_total += fresh[p];
        const double denom = std::max(fresh[p], 1e-12 * scale);
        if (denom > 0.0)
        {
            worst = std::max(worst, std::abs(rates_[p] - fresh[p]) / denom);
        }
    }
    fresh_total /= 2.0L;
    if (fresh_total > 0.0L)
    {
        worst = std::max(worst, static_cast<double>(std::abs(total_rate_ - fresh_total) / fresh_total));
    }
    return worst;
}

std::vector<ClusterType> monodispersed_clusters(std::size_t n, std::vector<std::vector<double>> positions)
{
    if (!positions.empty() && positions.size() != n)
    {
        throw ContractViolation("monodispersed_clusters: position count does not match n");
    }
    std::vector<ClusterType> out(n);
    for (std::size_t i = 0; i < n; ++i)
    {
        out[i].mass = 1.0;
        out[i].labels = {static_cast<Label>(i)};
        if (!positions.empty())
        {
            out[i].position = std::move(positions[i]);
        }
    }
    return out;
}

double total_mass(const Configuration& config)
{
    double s = 0.0;
    for (const auto& c : config.clusters())
    {
        s += c.mass;
    }
    return s;
}

double mass_above(const Configuration& config, double threshold, Threshold mode)
{
    if (!(threshold > 0.0))
    {
        throw ContractViolation("mass_above: threshold must be positive");
    }
    double s = 0.0;
    for (const auto& c : config.clusters())
    {
        const bool counted = mode == Threshold::inclusive ? c.mass >= threshold : c.mass > threshold;
        if (counted)
        {
            s += c.mass;
        }
    }
    return s;
}

Configuration apply_coagulation(Configuration config, ClusterId i, ClusterId j, ClusterType z)
{
    config.apply_coagulation(i, j, std::move(z));
    return config;
}

} // namespace coagulab
