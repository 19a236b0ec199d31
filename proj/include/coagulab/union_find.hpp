#pragma once

#include <cstddef>
#include <cstdint>
#include <numeric>
#include <vector>

namespace coagulab {

// Disjoint sets with union by size and path halving.
class UnionFind
{
public:
    UnionFind() = default;
    explicit UnionFind(std::size_t n)
        : parent_(n)
        , size_(n, 1)
        , components_(n)
    {
        std::iota(parent_.begin(), parent_.end(), std::uint32_t{0});
    }

    std::size_t size() const noexcept { return parent_.size(); }
    std::size_t components() const noexcept { return components_; }

    std::uint32_t find(std::uint32_t v)
    {
        while (parent_[v] != v)
        {
            parent_[v] = parent_[parent_[v]];
            v = parent_[v];
        }
        return v;
    }

    // Returns the root of the merged set.
    std::uint32_t unite(std::uint32_t a, std::uint32_t b)
    {
        a = find(a);
        b = find(b);
        if (a == b)
        {
            return a;
        }
        if (size_[a] < size_[b])
        {
            std::swap(a, b);
        }
        parent_[b] = a;
        size_[a] += size_[b];
        --components_;
        return a;
    }

    bool connected(std::uint32_t a, std::uint32_t b) { return find(a) == find(b); }
    std::size_t component_size(std::uint32_t v) { return size_[find(v)]; }

    std::vector<std::size_t> component_sizes()
    {
        std::vector<std::size_t> out;
        for (std::uint32_t v = 0; v < parent_.size(); ++v)
        {
            if (find(v) == v)
            {
                out.push_back(size_[v]);
            }
        }
        return out;
    }

    std::size_t largest_component()
    {
        std::size_t best = 0;
        for (std::uint32_t v = 0; v < parent_.size(); ++v)
        {
            if (parent_[v] == v && size_[v] > best)
            {
                best = size_[v];
            }
        }
        return best;
    }

private:
    std::vector<std::uint32_t> parent_;
    std::vector<std::size_t> size_;
    std::size_t components_ = 0;
};

} // namespace coagulab
