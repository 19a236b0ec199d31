#include "coagulab/kernels.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <sstream>
#include <utility>

namespace coagulab {

namespace {

// Shared rate_row/rate plumbing: Derived provides an inline pair_rate().
template <class Derived>
class BatchedKernel : public KernelModel
{
public:
    double rate(const ClusterType& x, const ClusterType& y) const final
    {
        return static_cast<const Derived&>(*this).pair_rate(x, y);
    }

    void rate_row(const ClusterType& x, std::span<const ClusterType> ys, std::span<double> out) const final
    {
        const auto& self = static_cast<const Derived&>(*this);
        for (std::size_t k = 0; k < ys.size(); ++k)
        {
            out[k] = self.pair_rate(x, ys[k]);
        }
    }
};

ClusterType sum_mass_offspring(const ClusterType& x, const ClusterType& y)
{
    ClusterType z;
    z.mass = x.mass + y.mass;
    return z;
}

void require_same_dimension(const ClusterType& x, const ClusterType& y)
{
    if (x.position.size() != y.position.size())
    {
        throw ContractViolation("clusters have positions of different dimension");
    }
}

ClusterType place_offspring(const ClusterType& x, const ClusterType& y, Placement placement, CounterRng& rng)
{
    require_same_dimension(x, y);
    ClusterType z;
    z.mass = x.mass + y.mass;
    z.position.resize(x.position.size());
    if (placement == Placement::center_of_mass)
    {
        for (std::size_t d = 0; d < z.position.size(); ++d)
        {
            z.position[d] = (x.mass * x.position[d] + y.mass * y.position[d]) / z.mass;
        }
    }
    else
    {
        const bool keep_x = rng.uniform() < x.mass / z.mass;
        z.position = keep_x ? x.position : y.position;
    }
    return z;
}

inline double squared_distance(const std::vector<double>& p, const std::vector<double>& s)
{
    if (p.size() != s.size())
    {
        throw ContractViolation("clusters have positions of different dimension");
    }
    double acc = 0.0;
    for (std::size_t d = 0; d < p.size(); ++d)
    {
        const double diff = p[d] - s[d];
        acc += diff * diff;
    }
    return acc;
}

// Memoizes f on integer masses below the table size; masses stay integral in
// mono-dispersed runs, so transcendental calls drop out of the hot loop.
template <class F>
class IntegerMassTable
{
public:
    static constexpr std::size_t table_size = std::size_t{1} << 16;

    explicit IntegerMassTable(F f)
        : f_(std::move(f))
        , values_(table_size)
    {
        for (std::size_t m = 1; m < table_size; ++m)
        {
            values_[m] = f_(static_cast<double>(m));
        }
    }

    double operator()(double m) const
    {
        if (m < static_cast<double>(table_size))
        {
            const auto k = static_cast<std::size_t>(m);
            if (static_cast<double>(k) == m && k > 0)
            {
                return values_[k];
            }
        }
        return f_(m);
    }

private:
    F f_;
    std::vector<double> values_;
};

class UserMassKernel final : public BatchedKernel<UserMassKernel>
{
public:
    explicit UserMassKernel(MassRate rate)
        : rate_(std::move(rate))
    {
    }
    double pair_rate(const ClusterType& x, const ClusterType& y) const { return rate_(x.mass, y.mass); }
    ClusterType offspring(const ClusterType& x, const ClusterType& y, CounterRng&) const override
    {
        return sum_mass_offspring(x, y);
    }

private:
    MassRate rate_;
};

class MultiplicativeKernel final : public BatchedKernel<MultiplicativeKernel>
{
public:
    double pair_rate(const ClusterType& x, const ClusterType& y) const { return x.mass * y.mass; }
    ClusterType offspring(const ClusterType& x, const ClusterType& y, CounterRng&) const override
    {
        return sum_mass_offspring(x, y);
    }
};

class AdditiveKernel final : public BatchedKernel<AdditiveKernel>
{
public:
    double pair_rate(const ClusterType& x, const ClusterType& y) const { return x.mass + y.mass; }
    ClusterType offspring(const ClusterType& x, const ClusterType& y, CounterRng&) const override
    {
        return sum_mass_offspring(x, y);
    }
};

class ConstantKernel final : public BatchedKernel<ConstantKernel>
{
public:
    explicit ConstantKernel(double value)
        : value_(value)
    {
    }
    double pair_rate(const ClusterType&, const ClusterType&) const { return value_; }
    ClusterType offspring(const ClusterType& x, const ClusterType& y, CounterRng&) const override
    {
        return sum_mass_offspring(x, y);
    }

private:
    double value_;
};

struct HalfPower
{
    double exponent;
    double operator()(double m) const { return std::pow(m, exponent); }
};

class PowerKernel final : public BatchedKernel<PowerKernel>
{
public:
    explicit PowerKernel(double gamma)
        : factor_(HalfPower{gamma / 2.0})
    {
    }
    double pair_rate(const ClusterType& x, const ClusterType& y) const { return factor_(x.mass) * factor_(y.mass); }
    ClusterType offspring(const ClusterType& x, const ClusterType& y, CounterRng&) const override
    {
        return sum_mass_offspring(x, y);
    }

private:
    IntegerMassTable<HalfPower> factor_;
};

struct MassLogProfile
{
    double exponent;
    double floor;
    double operator()(double m) const { return m >= 2.0 ? m * std::pow(std::log(m), exponent) : floor; }
};

class MassLogKernel final : public BatchedKernel<MassLogKernel>
{
public:
    MassLogKernel(double epsilon, double floor)
        : profile_(MassLogProfile{3.0 + epsilon, floor})
    {
    }
    double pair_rate(const ClusterType& x, const ClusterType& y) const { return profile_(std::min(x.mass, y.mass)); }
    ClusterType offspring(const ClusterType& x, const ClusterType& y, CounterRng&) const override
    {
        return sum_mass_offspring(x, y);
    }

private:
    IntegerMassTable<MassLogProfile> profile_;
};

class DistancePowerKernel final : public BatchedKernel<DistancePowerKernel>
{
public:
    DistancePowerKernel(double kappa0, double alpha, Placement placement)
        : kappa0_(kappa0)
        , half_alpha_(alpha / 2.0)
        , placement_(placement)
    {
    }
    double pair_rate(const ClusterType& x, const ClusterType& y) const
    {
        const double d2 = squared_distance(x.position, y.position);
        if (d2 == 0.0)
        {
            return 0.0;
        }
        return half_alpha_ == 1.0 ? kappa0_ / d2 : kappa0_ / std::pow(d2, half_alpha_);
    }
    ClusterType offspring(const ClusterType& x, const ClusterType& y, CounterRng& rng) const override
    {
        return place_offspring(x, y, placement_, rng);
    }

private:
    double kappa0_;
    double half_alpha_;
    Placement placement_;
};

class ProductKernel final : public BatchedKernel<ProductKernel>
{
public:
    ProductKernel(DistanceProfile h, std::shared_ptr<const RateKernel> mass_kernel, Placement placement)
        : h_(std::move(h))
        , mass_kernel_(std::move(mass_kernel))
        , placement_(placement)
    {
    }
    double pair_rate(const ClusterType& x, const ClusterType& y) const
    {
        return h_(std::sqrt(squared_distance(x.position, y.position))) * mass_kernel_->rate(x, y);
    }
    ClusterType offspring(const ClusterType& x, const ClusterType& y, CounterRng& rng) const override
    {
        return place_offspring(x, y, placement_, rng);
    }

private:
    DistanceProfile h_;
    std::shared_ptr<const RateKernel> mass_kernel_;
    Placement placement_;
};

class BilinearKernel final : public BatchedKernel<BilinearKernel>
{
public:
    BilinearKernel(std::vector<std::vector<double>> a, Projection projection)
        : a_(std::move(a))
        , projection_(std::move(projection))
    {
    }
    double pair_rate(const ClusterType& x, const ClusterType& y) const
    {
        if (projection_)
        {
            return form(projection_(x), projection_(y));
        }
        return form(x.position, y.position);
    }
    ClusterType offspring(const ClusterType& x, const ClusterType& y, CounterRng&) const override
    {
        require_same_dimension(x, y);
        ClusterType z;
        z.mass = x.mass + y.mass;
        z.position.resize(x.position.size());
        for (std::size_t d = 0; d < z.position.size(); ++d)
        {
            z.position[d] = x.position[d] + y.position[d];
        }
        return z;
    }

private:
    double form(const std::vector<double>& u, const std::vector<double>& v) const
    {
        if (u.size() != a_.size() || v.size() != a_.size())
        {
            throw ContractViolation("bilinear kernel: feature vector has wrong dimension");
        }
        // Summed over r <= c with symmetrized cross terms so that
        // form(u, v) == form(v, u) bit for bit.
        double acc = 0.0;
        for (std::size_t r = 0; r < a_.size(); ++r)
        {
            acc += a_[r][r] * (u[r] * v[r]);
            for (std::size_t c = r + 1; c < a_.size(); ++c)
            {
                acc += a_[r][c] * (u[r] * v[c] + u[c] * v[r]);
            }
        }
        return acc;
    }

    std::vector<std::vector<double>> a_;
    Projection projection_;
};

struct TentRho
{
    double radius;
    double operator()(std::span<const double> u) const
    {
        double acc = 0.0;
        for (double v : u)
        {
            acc += v * v;
        }
        return radius - std::sqrt(acc);
    }
};

class RhoKernel final : public BatchedKernel<RhoKernel>
{
public:
    explicit RhoKernel(RhoFunction rho)
        : rho_(std::move(rho))
    {
    }
    double pair_rate(const ClusterType& x, const ClusterType& y) const
    {
        const std::size_t d = x.position.size();
        if (d != y.position.size())
        {
            throw ContractViolation("clusters have positions of different dimension");
        }
        std::array<double, 8> small{};
        std::vector<double> large;
        std::span<double> diff;
        if (d <= small.size())
        {
            diff = std::span<double>(small.data(), d);
        }
        else
        {
            large.resize(d);
            diff = large;
        }
        for (std::size_t k = 0; k < d; ++k)
        {
            diff[k] = x.position[k] - y.position[k];
        }
        return x.mass * y.mass * rho_(diff);
    }
    ClusterType offspring(const ClusterType& x, const ClusterType& y, CounterRng& rng) const override
    {
        return place_offspring(x, y, Placement::center_of_mass, rng);
    }

private:
    RhoFunction rho_;
};

// m n (R - |p - s|) without the std::function hop.
class TentKernel final : public BatchedKernel<TentKernel>
{
public:
    explicit TentKernel(double radius)
        : radius_(radius)
    {
    }
    double pair_rate(const ClusterType& x, const ClusterType& y) const
    {
        return x.mass * y.mass * (radius_ - std::sqrt(squared_distance(x.position, y.position)));
    }
    ClusterType offspring(const ClusterType& x, const ClusterType& y, CounterRng& rng) const override
    {
        return place_offspring(x, y, Placement::center_of_mass, rng);
    }

private:
    double radius_;
};

class ScaledKernel final : public KernelModel
{
public:
    ScaledKernel(std::shared_ptr<const KernelModel> inner, double factor)
        : inner_(std::move(inner))
        , factor_(factor)
    {
    }
    double rate(const ClusterType& x, const ClusterType& y) const override { return factor_ * inner_->rate(x, y); }
    void rate_row(const ClusterType& x, std::span<const ClusterType> ys, std::span<double> out) const override
    {
        inner_->rate_row(x, ys, out);
        for (double& v : out)
        {
            v *= factor_;
        }
    }
    ClusterType offspring(const ClusterType& x, const ClusterType& y, CounterRng& rng) const override
    {
        return inner_->offspring(x, y, rng);
    }

private:
    std::shared_ptr<const KernelModel> inner_;
    double factor_;
};

void check_mass_rate(const MassRate& rate, const std::string& name)
{
    CounterRng rng(0xC1A551CA1ull);
    auto draw = [&rng] { return std::exp(rng.uniform() * std::log(1e6)) * 0.5; };
    for (int trial = 0; trial < 1000; ++trial)
    {
        const double m = trial < 64 ? static_cast<double>(trial % 8 + 1) : draw();
        const double n = trial < 64 ? static_cast<double>(trial / 8 + 1) : draw();
        const double a = rate(m, n);
        const double b = rate(n, m);
        if (!std::isfinite(a) || a < 0.0)
        {
            std::ostringstream os;
            os << name << ": rate(" << m << ", " << n << ") = " << a << " is not a finite nonnegative number";
            throw KernelError(os.str());
        }
        if (std::abs(a - b) > 1e-12 * std::max(std::abs(a), std::abs(b)))
        {
            std::ostringstream os;
            os << name << ": asymmetric rate, K(" << m << ", " << n << ") = " << a << " but K(" << n << ", " << m
               << ") = " << b;
            throw KernelError(os.str());
        }
    }
}

enum class Shape
{
    concave,
    convex,
};

void check_rho_shape(const RhoFunction& rho, std::size_t dimension, const ShapeCheck& check, Shape shape)
{
    CounterRng rng(check.seed);
    std::vector<double> u(dimension), v(dimension), mid(dimension), neg(dimension);
    auto fill = [&](std::vector<double>& w) {
        for (double& c : w)
        {
            c = (2.0 * rng.uniform() - 1.0) * check.half_width;
        }
    };
    auto describe = [](const std::vector<double>& w) {
        std::ostringstream os;
        os << '(';
        for (std::size_t k = 0; k < w.size(); ++k)
        {
            os << (k ? ", " : "") << w[k];
        }
        os << ')';
        return os.str();
    };
    for (std::size_t trial = 0; trial < check.samples; ++trial)
    {
        fill(u);
        fill(v);
        const double lambda = rng.uniform();
        for (std::size_t k = 0; k < dimension; ++k)
        {
            mid[k] = lambda * u[k] + (1.0 - lambda) * v[k];
            neg[k] = -u[k];
        }
        const double ru = rho(u);
        const double rv = rho(v);
        const double rm = rho(mid);
        const double scale = std::max({1.0, std::abs(ru), std::abs(rv)});
        if (ru < 0.0 || !std::isfinite(ru))
        {
            throw KernelError("rho is negative or nonfinite at " + describe(u));
        }
        if (std::abs(rho(neg) - ru) > 1e-12 * scale)
        {
            throw KernelError("rho is not even at " + describe(u));
        }
        const double chord = lambda * ru + (1.0 - lambda) * rv;
        const bool bad = shape == Shape::concave ? rm < chord - 1e-12 * scale : rm > chord + 1e-12 * scale;
        if (bad)
        {
            std::ostringstream os;
            os << "rho is not " << (shape == Shape::concave ? "concave" : "convex") << " on the triple u="
               << describe(u) << ", v=" << describe(v) << ", lambda=" << lambda;
            throw KernelError(os.str());
        }
    }
}

} // namespace

std::string to_string(Domination d)
{
    switch (d)
    {
    case Domination::dominating:
        return "dominating";
    case Domination::dominated:
        return "dominated";
    case Domination::neither:
        return "neither";
    case Domination::unknown:
        return "unknown";
    }
    return "unknown";
}

KernelSpec::KernelSpec(std::shared_ptr<const KernelModel> model, Info info)
    : model_(std::move(model))
    , info_(std::move(info))
{
    if (!model_)
    {
        throw KernelError("KernelSpec requires a model");
    }
}

KernelSpec KernelSpec::with_domination(Domination d) const
{
    Info info = info_;
    info.domination = d;
    return KernelSpec(model_, std::move(info));
}

KernelSpec KernelSpec::scaled(double factor) const
{
    if (!(factor > 0.0) || !std::isfinite(factor))
    {
        throw KernelError("kernel scale factor must be positive");
    }
    Info info = info_;
    info.name = info_.name + "*" + std::to_string(factor);
    return KernelSpec(std::make_shared<ScaledKernel>(model_, factor), std::move(info));
}

ClusterType mass_point(double mass)
{
    ClusterType c;
    c.mass = mass;
    return c;
}

KernelSpec classical(MassRate rate, std::string name, std::optional<double> gamma, Domination domination)
{
    if (!rate)
    {
        throw KernelError("classical kernel requires a rate function");
    }
    check_mass_rate(rate, name);
    return KernelSpec(std::make_shared<UserMassKernel>(std::move(rate)),
                      {std::move(name), domination, gamma, true});
}

KernelSpec multiplicative()
{
    // Equality in the domination inequality; flagged dominating.
    return KernelSpec(std::make_shared<MultiplicativeKernel>(), {"multiplicative", Domination::dominating, 2.0, true});
}

KernelSpec additive()
{
    return KernelSpec(std::make_shared<AdditiveKernel>(), {"additive", Domination::dominated, 1.0, true});
}

KernelSpec constant_kernel(double value)
{
    if (!(value > 0.0) || !std::isfinite(value))
    {
        throw KernelError("constant kernel value must be positive and finite");
    }
    return KernelSpec(std::make_shared<ConstantKernel>(value), {"constant", Domination::dominated, 0.0, true});
}

KernelSpec homogeneous_power(double gamma)
{
    if (!(gamma >= 0.0) || !std::isfinite(gamma))
    {
        throw KernelError("homogeneous power kernel needs a finite gamma >= 0");
    }
    // (m + n)^a >= m^a + n^a iff a >= 1, with a = gamma / 2.
    const Domination d = gamma >= 2.0 ? Domination::dominating : Domination::dominated;
    return KernelSpec(std::make_shared<PowerKernel>(gamma), {"power", d, gamma, true});
}

KernelSpec mass_log(double epsilon, double floor)
{
    if (!(epsilon > 0.0) || !(floor > 0.0))
    {
        throw KernelError("mass_log kernel needs epsilon > 0 and a positive floor");
    }
    return KernelSpec(std::make_shared<MassLogKernel>(epsilon, floor),
                      {"mass_log", Domination::unknown, std::nullopt, true});
}

KernelSpec spatial_distance_power(double kappa0, double alpha, Placement placement)
{
    if (!(kappa0 > 0.0) || !(alpha > 0.0))
    {
        throw KernelError("distance-power kernel needs kappa0 > 0 and alpha > 0");
    }
    return KernelSpec(std::make_shared<DistancePowerKernel>(kappa0, alpha, placement),
                      {"distance_power", Domination::unknown, 0.0, false});
}

KernelSpec product_kernel(DistanceProfile h, const KernelSpec& mass_kernel, Placement placement)
{
    if (!h)
    {
        throw KernelError("product kernel requires a distance profile");
    }
    if (!mass_kernel.mass_only())
    {
        throw KernelError("product kernel: W must be a mass-only kernel");
    }
    if (!(h(0.0) > 0.0))
    {
        throw KernelError("product kernel: h must be nonzero");
    }
    CounterRng rng(0x9d15ull);
    for (int trial = 0; trial < 1000; ++trial)
    {
        double a = 4.0 * rng.uniform();
        double b = 4.0 * rng.uniform();
        if (a > b)
        {
            std::swap(a, b);
        }
        const double ha = h(a);
        const double hb = h(b);
        if (!(hb >= 0.0) || !std::isfinite(ha))
        {
            throw KernelError("product kernel: h must be finite and nonnegative");
        }
        if (hb > ha + 1e-12 * std::max(1.0, ha))
        {
            throw KernelError("product kernel: h is not nonincreasing between " + std::to_string(a) + " and " +
                              std::to_string(b));
        }
    }
    return KernelSpec(std::make_shared<ProductKernel>(std::move(h), mass_kernel.rate_kernel(), placement),
                      {"product(" + mass_kernel.name() + ")", Domination::unknown, mass_kernel.homogeneity_gamma(),
                       false});
}

KernelSpec bilinear(std::vector<std::vector<double>> a, Projection projection)
{
    const std::size_t d = a.size();
    if (d == 0)
    {
        throw KernelError("bilinear kernel needs a nonempty matrix");
    }
    for (std::size_t r = 0; r < d; ++r)
    {
        if (a[r].size() != d)
        {
            throw KernelError("bilinear kernel matrix must be square");
        }
        for (std::size_t c = 0; c < d; ++c)
        {
            if (!(a[r][c] >= 0.0) || !std::isfinite(a[r][c]))
            {
                throw KernelError("bilinear kernel matrix entries must be nonnegative and finite");
            }
            if (a[r][c] != a[c][r])
            {
                throw KernelError("bilinear kernel matrix must be symmetric");
            }
        }
    }
    // Additive features make K̄(x + y, q) = K̄(x, q) + K̄(y, q).
    return KernelSpec(std::make_shared<BilinearKernel>(std::move(a), std::move(projection)),
                      {"bilinear", Domination::dominating, std::nullopt, false});
}

KernelSpec concave_rho(RhoFunction rho, std::size_t dimension, ShapeCheck check)
{
    if (!rho || dimension == 0)
    {
        throw KernelError("concave_rho needs a function and a positive dimension");
    }
    check_rho_shape(rho, dimension, check, Shape::concave);
    std::shared_ptr<const KernelModel> model;
    if (const auto* tent = rho.target<TentRho>())
    {
        model = std::make_shared<TentKernel>(tent->radius);
    }
    else
    {
        model = std::make_shared<RhoKernel>(std::move(rho));
    }
    return KernelSpec(std::move(model), {"concave_rho", Domination::dominating, 2.0, false});
}

KernelSpec convex_rho(RhoFunction rho, std::size_t dimension, ShapeCheck check)
{
    if (!rho || dimension == 0)
    {
        throw KernelError("convex_rho needs a function and a positive dimension");
    }
    check_rho_shape(rho, dimension, check, Shape::convex);
    return KernelSpec(std::make_shared<RhoKernel>(std::move(rho)), {"convex_rho", Domination::dominated, 2.0, false});
}

RhoFunction tent_rho(double radius)
{
    return TentRho{radius};
}

double euclidean_distance(std::span<const double> p, std::span<const double> s)
{
    if (p.size() != s.size())
    {
        throw ContractViolation("euclidean_distance: dimension mismatch");
    }
    double acc = 0.0;
    for (std::size_t d = 0; d < p.size(); ++d)
    {
        const double diff = p[d] - s[d];
        acc += diff * diff;
    }
    return std::sqrt(acc);
}

} // namespace coagulab
