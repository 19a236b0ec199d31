#pragma once

#include "coagulab/core.hpp"
#include "coagulab/rng.hpp"

#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace coagulab {

// Kernel parameters that fail validation at construction time.
class KernelError : public std::invalid_argument
{
public:
    using std::invalid_argument::invalid_argument;
};

// How a merged cluster's rate toward a third cluster compares with the sum
// of its parents' rates: K̄(z, q) >= K̄(x, q) + K̄(y, q) for dominating kernels,
// <= for dominated ones.
enum class Domination
{
    dominating,
    dominated,
    neither,
    unknown,
};

std::string to_string(Domination d);

enum class Placement
{
    center_of_mass,
    mass_proportional,
};

// Full kernel K(x, y, dz): the total rate plus a sampler for the offspring law.
class KernelModel : public RateKernel
{
public:
    virtual ClusterType offspring(const ClusterType& x, const ClusterType& y, CounterRng& rng) const = 0;
};

// Immutable, shareable kernel description.
class KernelSpec
{
public:
    struct Info
    {
        std::string name;
        Domination domination = Domination::unknown;
        // Set when K̄ at masses (c m, c n) equals c^gamma K̄ at (m, n) for large masses,
        // positions held fixed.
        std::optional<double> homogeneity_gamma;
        // Rate depends on masses only (no coordinates).
        bool mass_only = false;
    };

    KernelSpec(std::shared_ptr<const KernelModel> model, Info info);

    double rate(const ClusterType& x, const ClusterType& y) const { return model_->rate(x, y); }
    ClusterType offspring(const ClusterType& x, const ClusterType& y, CounterRng& rng) const
    {
        return model_->offspring(x, y, rng);
    }

    const std::string& name() const noexcept { return info_.name; }
    Domination domination() const noexcept { return info_.domination; }
    std::optional<double> homogeneity_gamma() const noexcept { return info_.homogeneity_gamma; }
    bool mass_only() const noexcept { return info_.mass_only; }
    const Info& info() const noexcept { return info_; }

    std::shared_ptr<const RateKernel> rate_kernel() const noexcept { return model_; }
    const KernelModel& model() const noexcept { return *model_; }

    // Same kernel with a user-asserted domination class.
    KernelSpec with_domination(Domination d) const;

    // Kernel with every rate multiplied by factor > 0.
    KernelSpec scaled(double factor) const;

private:
    std::shared_ptr<const KernelModel> model_;
    Info info_;
};

// A cluster of the given mass with no coordinates.
ClusterType mass_point(double mass);

using MassRate = std::function<double(double, double)>;

// Marcus–Lushnikov kernel K(x, y, ·) = K̄(m, n) δ_{m+n}. The rate is checked for
// symmetry, finiteness and nonnegativity on random mass pairs.
KernelSpec classical(MassRate rate, std::string name = "classical", std::optional<double> gamma = std::nullopt,
                     Domination domination = Domination::unknown);

KernelSpec multiplicative();
KernelSpec additive();
KernelSpec constant_kernel(double value = 1.0);
// K̄(m, n) = (m n)^{gamma / 2}.
KernelSpec homogeneous_power(double gamma);
// K̄(m, n) = (m∧n) log(m∧n)^{3+eps} for m∧n >= 2, floor below.
KernelSpec mass_log(double epsilon, double floor = 1.0);

// K̄((p, n), (s, o)) = kappa0 / |p - s|^alpha, zero at coincident positions.
KernelSpec spatial_distance_power(double kappa0, double alpha, Placement placement = Placement::center_of_mass);

using DistanceProfile = std::function<double(double)>;

// K̄((p, n), (s, o)) = h(|p - s|) W(n, o) with h nonincreasing and W a classical kernel.
KernelSpec product_kernel(DistanceProfile h, const KernelSpec& mass_kernel,
                          Placement placement = Placement::center_of_mass);

using Projection = std::function<std::vector<double>(const ClusterType&)>;

// K̄(x, y) = π(x)ᵀ A π(y); coordinates add on coagulation. The default
// projection is the coordinate vector itself.
KernelSpec bilinear(std::vector<std::vector<double>> a, Projection projection = {});

using RhoFunction = std::function<double(std::span<const double>)>;

struct ShapeCheck
{
    std::size_t samples = 1000;
    // Differences are drawn from [-half_width, half_width]^d, the difference
    // set of the unit cube for half_width = 1.
    double half_width = 1.0;
    std::uint64_t seed = 0x5eed;
};

// K̄((p, m), (s, n)) = m n ρ(p - s) with center-of-mass placement, for an even
// concave ρ (graph dominating). Shape is spot-checked on random triples.
KernelSpec concave_rho(RhoFunction rho, std::size_t dimension, ShapeCheck check = {});

// Same form with an even convex ρ (graph dominated).
KernelSpec convex_rho(RhoFunction rho, std::size_t dimension, ShapeCheck check = {});

// ρ(u) = radius - |u|.
RhoFunction tent_rho(double radius);

double euclidean_distance(std::span<const double> p, std::span<const double> s);

} // namespace coagulab
