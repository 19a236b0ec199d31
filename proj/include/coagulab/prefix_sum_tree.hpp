#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace coagulab {

// Fenwick tree over nonnegative weights, used for O(log n) weighted draws.
class PrefixSumTree
{
public:
    PrefixSumTree() = default;

    // Linear-time construction.
    void assign(std::span<const double> weights)
    {
        const std::size_t n = weights.size();
        tree_.assign(weights.begin(), weights.end());
        for (std::size_t i = 1; i <= n; ++i)
        {
            const std::size_t parent = i + (i & (~i + 1));
            if (parent <= n)
            {
                tree_[parent - 1] += tree_[i - 1];
            }
        }
        mask_ = 1;
        while (mask_ * 2 <= n)
        {
            mask_ *= 2;
        }
    }

    std::size_t size() const noexcept { return tree_.size(); }

    void add(std::size_t index, double delta)
    {
        for (std::size_t i = index + 1; i <= tree_.size(); i += i & (~i + 1))
        {
            tree_[i - 1] += delta;
        }
    }

    // Sum of weights[0..count).
    double prefix(std::size_t count) const
    {
        double s = 0.0;
        for (std::size_t i = count; i > 0; i -= i & (~i + 1))
        {
            s += tree_[i - 1];
        }
        return s;
    }

    double total() const { return prefix(tree_.size()); }

    // Smallest index whose inclusive prefix sum exceeds target. Zero-weight
    // entries are never returned for target in [0, total).
    std::size_t find(double target) const
    {
        std::size_t pos = 0;
        for (std::size_t step = mask_; step > 0; step /= 2)
        {
            const std::size_t next = pos + step;
            if (next <= tree_.size() && tree_[next - 1] <= target)
            {
                pos = next;
                target -= tree_[next - 1];
            }
        }
        return pos < tree_.size() ? pos : tree_.size() - 1;
    }

private:
    std::vector<double> tree_;
    std::size_t mask_ = 0;
};

} // namespace coagulab
