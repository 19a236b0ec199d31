#include "coagulab/gelation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace coagulab {

namespace {

std::vector<double> initial_mass_by_id(const Trajectory& traj)
{
    const Configuration& init = traj.initial;
    std::vector<double> mass(init.next_id() + traj.events.size(), 0.0);
    for (std::size_t p = 0; p < init.size(); ++p)
    {
        mass[init.id_at(p)] = init.clusters()[p].mass;
    }
    for (std::size_t e = 0; e < traj.events.size(); ++e)
    {
        mass[traj.offspring_id(e)] = traj.events[e].offspring.mass;
    }
    return mass;
}

double pow2(int j)
{
    return std::ldexp(1.0, j);
}

int floor_log2(std::uint64_t x)
{
    int r = -1;
    while (x != 0)
    {
        x >>= 1;
        ++r;
    }
    return r;
}

} // namespace

double DyadicSpectrum::total() const
{
    double s = 0.0;
    for (const auto& [j, m] : bands)
    {
        s += m;
    }
    return s;
}

double DyadicSpectrum::band(int j) const
{
    auto it = bands.find(j);
    return it == bands.end() ? 0.0 : it->second;
}

int dyadic_band(double mass)
{
    if (!(mass >= 1.0))
    {
        return -1;
    }
    int e = 0;
    std::frexp(mass, &e);
    return e - 1;
}

DyadicSpectrum dyadic_spectrum(std::span<const double> masses)
{
    DyadicSpectrum s;
    for (double m : masses)
    {
        const int j = dyadic_band(m);
        if (j >= 0)
        {
            s.bands[j] += m;
        }
    }
    return s;
}

DyadicSpectrum dyadic_spectrum(const Configuration& config)
{
    std::vector<double> masses;
    masses.reserve(config.size());
    for (const auto& c : config.clusters())
    {
        masses.push_back(c.mass);
    }
    return dyadic_spectrum(masses);
}

void GelationRule::validate() const
{
    if (!psi)
    {
        throw ContractViolation("gelation rule: psi is not set");
    }
    if (!(delta > 0.0 && delta < 1.0))
    {
        throw ContractViolation("gelation rule: delta must lie in (0, 1)");
    }
    if (alpha && !(*alpha > 0.0 && *alpha <= 1.0))
    {
        throw ContractViolation("gelation rule: alpha must lie in (0, 1]");
    }
}

MassHistory::MassHistory(const Trajectory& trajectory)
    : traj_(&trajectory)
    , mass_by_id_(initial_mass_by_id(trajectory))
{
    event_times_.reserve(trajectory.events.size());
    for (const Event& e : trajectory.events)
    {
        event_times_.push_back(e.time);
    }
}

std::vector<double> MassHistory::masses_at(double t) const
{
    if (t > traj_->final_time && !traj_->absorbed)
    {
        throw ContractViolation("masses_at: time " + std::to_string(t) + " lies beyond the simulated range");
    }
    std::vector<char> live(mass_by_id_.size(), 0);
    const Configuration& init = traj_->initial;
    for (ClusterId id : init.ids())
    {
        live[id] = 1;
    }
    for (std::size_t e = 0; e < traj_->events.size() && event_times_[e] <= t; ++e)
    {
        const Event& ev = traj_->events[e];
        live[ev.left] = 0;
        live[ev.right] = 0;
        live[traj_->offspring_id(e)] = 1;
    }
    std::vector<double> out;
    for (std::size_t id = 0; id < live.size(); ++id)
    {
        if (live[id])
        {
            out.push_back(mass_by_id_[id]);
        }
    }
    return out;
}

double MassHistory::largest_at(double t) const
{
    const auto m = masses_at(t);
    return m.empty() ? 0.0 : *std::max_element(m.begin(), m.end());
}

std::optional<double> tau_alpha(const Trajectory& trajectory, double alpha)
{
    if (!(alpha > 0.0))
    {
        throw ContractViolation("tau_alpha: alpha must be positive");
    }
    const double threshold = alpha * static_cast<double>(trajectory.initial.n_param());
    for (const auto& c : trajectory.initial.clusters())
    {
        if (c.mass > threshold)
        {
            return 0.0;
        }
    }
    for (const Event& e : trajectory.events)
    {
        if (e.offspring.mass > threshold)
        {
            return e.time;
        }
    }
    return std::nullopt;
}

std::optional<double> tau_psi_delta(const Trajectory& trajectory, const GelationRule& rule)
{
    rule.validate();
    const auto psi = static_cast<double>(rule.psi(trajectory.initial.n_param()));
    return tau_psi_delta(trajectory, psi, rule.delta);
}

std::optional<double> tau_psi_delta(const Trajectory& trajectory, double psi_value, double delta)
{
    if (!(psi_value > 0.0) || !(delta > 0.0))
    {
        throw ContractViolation("tau_psi_delta: psi and delta must be positive");
    }
    const auto mass = initial_mass_by_id(trajectory);
    const double n = static_cast<double>(trajectory.initial.n_param());
    const double total0 = trajectory.initial.total_mass() / n;
    // Heavy and light masses are tracked separately so that the complement
    // form of the stopping condition can be cross-checked at each step.
    double heavy = 0.0;
    double light = 0.0;
    for (const auto& c : trajectory.initial.clusters())
    {
        (c.mass >= psi_value ? heavy : light) += c.mass;
    }
    auto reached = [&]() {
        const bool direct = heavy / n >= delta;
        const bool complement = light / n <= total0 - delta;
        if (direct != complement &&
            std::abs(heavy / n - delta) > 1e-9 * std::max(1.0, total0))
        {
            throw ContractViolation("tau_psi_delta: mass bookkeeping identity failed (heavy " +
                                    std::to_string(heavy / n) + ", light " + std::to_string(light / n) + ")");
        }
        return direct;
    };
    if (reached())
    {
        return 0.0;
    }
    for (const Event& e : trajectory.events)
    {
        for (ClusterId parent : {e.left, e.right})
        {
            const double m = mass[parent];
            (m >= psi_value ? heavy : light) -= m;
        }
        (e.offspring.mass >= psi_value ? heavy : light) += e.offspring.mass;
        if (reached())
        {
            return e.time;
        }
    }
    return std::nullopt;
}

std::vector<std::optional<double>> cascade_times(const Trajectory& trajectory, std::span<const double> rho_seq,
                                                 std::size_t k_max)
{
    if (rho_seq.size() <= k_max)
    {
        throw ContractViolation("cascade_times: rho sequence shorter than k_max + 1");
    }
    for (std::size_t i = 0; i <= k_max; ++i)
    {
        if (!(rho_seq[i] > 0.0 && rho_seq[i] < 1.0) || (i > 0 && !(rho_seq[i] < rho_seq[i - 1])))
        {
            throw ContractViolation("cascade_times: rho must be strictly decreasing in (0, 1)");
        }
    }
    const auto mass = initial_mass_by_id(trajectory);
    const double m0 = trajectory.initial.total_mass();
    std::vector<double> threshold(k_max + 1);
    std::vector<double> above(k_max + 1, 0.0);
    std::vector<std::optional<double>> hit(k_max + 1);
    for (std::size_t i = 0; i <= k_max; ++i)
    {
        threshold[i] = pow2(static_cast<int>(i));
        for (const auto& c : trajectory.initial.clusters())
        {
            if (c.mass >= threshold[i])
            {
                above[i] += c.mass;
            }
        }
        if (above[i] >= rho_seq[i] * m0)
        {
            hit[i] = 0.0;
        }
    }
    for (const Event& e : trajectory.events)
    {
        const double ml = mass[e.left];
        const double mr = mass[e.right];
        const double mz = e.offspring.mass;
        for (std::size_t i = 0; i <= k_max; ++i)
        {
            if (hit[i])
            {
                continue;
            }
            above[i] += (mz >= threshold[i] ? mz : 0.0) - (ml >= threshold[i] ? ml : 0.0) -
                        (mr >= threshold[i] ? mr : 0.0);
            if (above[i] >= rho_seq[i] * m0)
            {
                hit[i] = e.time;
            }
        }
    }
    // Mass above a fixed threshold never decreases, so each condition holds
    // from its first hit on and T_k is the running maximum of the hits.
    std::vector<std::optional<double>> out(k_max + 1);
    std::optional<double> running = 0.0;
    for (std::size_t k = 0; k <= k_max; ++k)
    {
        if (!running || !hit[k])
        {
            running.reset();
        }
        else
        {
            running = std::max(*running, *hit[k]);
        }
        out[k] = running;
    }
    return out;
}

std::vector<double> rho_sequence(std::span<const double> f_seq, double rho_limit, double rho0)
{
    if (!(rho_limit > 0.0 && rho_limit < rho0 && rho0 < 1.0))
    {
        throw ContractViolation("rho_sequence: need 0 < rho_limit < rho0 < 1");
    }
    if (f_seq.empty())
    {
        throw ContractViolation("rho_sequence: empty f sequence");
    }
    std::vector<double> tail(f_seq.size() + 1, 0.0);
    for (std::size_t k = f_seq.size(); k-- > 0;)
    {
        if (!(f_seq[k] > 0.0))
        {
            throw ContractViolation("rho_sequence: f must be positive");
        }
        tail[k] = tail[k + 1] + f_seq[k];
    }
    const double scale = (rho0 - rho_limit) / tail[0];
    std::vector<double> rho(f_seq.size());
    for (std::size_t k = 0; k < f_seq.size(); ++k)
    {
        rho[k] = rho_limit + scale * tail[k];
    }
    return rho;
}

StopCondition::Predicate stop_when_mass_exceeds(double threshold)
{
    return [threshold](const Configuration&, const Event& e) { return e.offspring.mass > threshold; };
}

StopCondition::Predicate stop_when_mass_fraction_reached(const Configuration& initial, double psi_value, double delta)
{
    struct State
    {
        std::vector<double> mass_by_id;
        double heavy = 0.0;
        double goal = 0.0;
        double psi = 0.0;
    };
    auto state = std::make_shared<State>();
    state->mass_by_id.assign(initial.next_id(), 0.0);
    state->psi = psi_value;
    state->goal = delta * static_cast<double>(initial.n_param());
    for (std::size_t p = 0; p < initial.size(); ++p)
    {
        const double m = initial.clusters()[p].mass;
        state->mass_by_id[initial.id_at(p)] = m;
        if (m >= psi_value)
        {
            state->heavy += m;
        }
    }
    return [state](const Configuration& after, const Event& e) {
        State& s = *state;
        for (ClusterId parent : {e.left, e.right})
        {
            if (s.mass_by_id[parent] >= s.psi)
            {
                s.heavy -= s.mass_by_id[parent];
            }
        }
        const ClusterId child = after.next_id() - 1;
        if (s.mass_by_id.size() <= child)
        {
            s.mass_by_id.resize(child + 1, 0.0);
        }
        s.mass_by_id[child] = e.offspring.mass;
        if (e.offspring.mass >= s.psi)
        {
            s.heavy += e.offspring.mass;
        }
        return s.heavy >= s.goal;
    };
}

PsiPrime compute_psi_prime(std::uint64_t n, const IntegerFunction& psi, const IntegerFunction& xi, double init_mass,
                           std::span<const double> f_seq)
{
    if (n == 0 || !psi || !xi || !(init_mass > 0.0))
    {
        throw ContractViolation("compute_psi_prime: invalid arguments");
    }
    for (std::size_t k = 0; k < f_seq.size(); ++k)
    {
        if (!(f_seq[k] > 0.0) || (k > 0 && !(f_seq[k] < f_seq[k - 1])))
        {
            throw ContractViolation("compute_psi_prime: f must be positive and strictly decreasing");
        }
    }
    const std::uint64_t xi_n = xi(n);
    if (xi_n == 0)
    {
        throw ContractViolation("compute_psi_prime: xi(N) must be positive");
    }
    const long double bound = static_cast<long double>(n) / static_cast<long double>(xi_n);
    PsiPrime out;
    for (std::size_t k = 0; k < f_seq.size() && k < 62; ++k)
    {
        const long double lhs =
            std::ldexp(1.0L, static_cast<int>(k) + 2) / (static_cast<long double>(init_mass) * f_seq[k]);
        if (lhs <= bound)
        {
            out.k_max = k;
        }
    }
    const std::uint64_t psi_n = psi(n);
    if (!out.k_max)
    {
        out.value = 1;
        out.warning = "no band index satisfies the bound at N=" + std::to_string(n) + "; using band 0";
        return out;
    }
    out.value = std::min<std::uint64_t>(psi_n, std::uint64_t{1} << *out.k_max);
    return out;
}

std::string to_string(Verdict v)
{
    switch (v)
    {
    case Verdict::converging:
        return "converging";
    case Verdict::diverging:
        return "diverging";
    case Verdict::inconclusive:
        return "inconclusive";
    }
    return "inconclusive";
}

nlohmann::json to_json(const CriterionReport& r)
{
    auto finite_or_null = [](double x) { return std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(nullptr); };
    nlohmann::json j;
    j["verdict"] = to_string(r.verdict);
    j["f"] = r.f_description;
    j["j_min"] = r.j_min;
    j["j_max"] = r.j_max;
    j["summands"] = nlohmann::json::array();
    for (double s : r.summands)
    {
        j["summands"].push_back(finite_or_null(s));
    }
    j["partial_sums"] = nlohmann::json::array();
    for (double s : r.partial_sums)
    {
        j["partial_sums"].push_back(finite_or_null(s));
    }
    j["c_prime"] = r.c_prime;
    j["tail_ratio"] = finite_or_null(r.tail_ratio);
    j["zero_band"] = r.zero_band ? nlohmann::json(*r.zero_band) : nlohmann::json(nullptr);
    j["note"] = r.note;
    if (!r.n_ladder.empty())
    {
        j["n_ladder"] = r.n_ladder;
        j["ladder_sums"] = r.ladder_sums;
        j["psi_xi_over_n"] = r.psi_xi_over_n;
        j["ladder_slope"] = r.ladder_slope ? nlohmann::json(*r.ladder_slope) : nlohmann::json(nullptr);
        j["psi_xi_vanishing"] = r.psi_xi_vanishing;
        j["flagged_cells"] = r.flagged_cells;
    }
    return j;
}

FSequence geometric_f(double exponent, std::size_t count)
{
    if (!(exponent > 0.0))
    {
        throw ContractViolation("geometric_f: exponent must be positive");
    }
    FSequence f;
    f.description = "2^(-" + std::to_string(exponent) + " j)";
    for (std::size_t j = 0; j < count; ++j)
    {
        f.values.push_back(std::exp2(-exponent * static_cast<double>(j)));
    }
    return f;
}

FSequence polynomial_f(double exponent, std::size_t count)
{
    if (!(exponent > 1.0))
    {
        throw ContractViolation("polynomial_f: exponent must exceed 1 for summability");
    }
    FSequence f;
    f.description = "(j+1)^(-" + std::to_string(exponent) + ")";
    for (std::size_t j = 0; j < count; ++j)
    {
        f.values.push_back(std::pow(static_cast<double>(j + 1), -exponent));
    }
    return f;
}

FSequence default_f(const KernelSpec& kernel, std::size_t count)
{
    const auto gamma = kernel.homogeneity_gamma();
    if (gamma && *gamma > 1.0)
    {
        return geometric_f((*gamma - 1.0) / 4.0, count);
    }
    return polynomial_f(1.05, count);
}

namespace {

Verdict ratio_verdict(const std::vector<double>& summands, double& tail_ratio)
{
    const std::size_t bands = summands.size();
    const std::size_t window = std::max<std::size_t>(2, bands / 4);
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t j = bands > window ? bands - window : 1; j < bands; ++j)
    {
        if (summands[j - 1] > 0.0)
        {
            sum += summands[j] / summands[j - 1];
            ++count;
        }
    }
    if (count == 0)
    {
        tail_ratio = std::numeric_limits<double>::quiet_NaN();
        return Verdict::inconclusive;
    }
    tail_ratio = sum / static_cast<double>(count);
    if (tail_ratio < 0.95)
    {
        return Verdict::converging;
    }
    if (tail_ratio >= 1.0)
    {
        return Verdict::diverging;
    }
    return Verdict::inconclusive;
}

} // namespace

CriterionReport classical_criterion_diagnostic(const KernelSpec& kernel, const FSequence& f,
                                               ClassicalDiagnosticOptions options)
{
    if (!kernel.mass_only())
    {
        throw ContractViolation("classical_criterion_diagnostic needs a mass-only kernel");
    }
    if (options.j_max < 1 || options.grid == 0)
    {
        throw ContractViolation("classical_criterion_diagnostic: need j_max >= 1 and a nonempty grid");
    }
    if (f.values.size() < static_cast<std::size_t>(options.j_max) + 1)
    {
        throw ContractViolation("classical_criterion_diagnostic: f sequence shorter than the band range");
    }
    CriterionReport report;
    report.f_description = f.description;
    report.j_max = options.j_max;
    report.note = "finite-band heuristic; band sup taken over a " + std::to_string(options.grid) + "x" +
                  std::to_string(options.grid) + " grid (under-estimate)";

    std::vector<ClusterType> points(options.grid);
    std::vector<double> row(options.grid);
    double running = 0.0;
    for (int j = 0; j <= options.j_max; ++j)
    {
        const double lo = pow2(j);
        for (std::size_t a = 0; a < options.grid; ++a)
        {
            points[a] = mass_point(lo * (1.0 + static_cast<double>(a) / static_cast<double>(options.grid)));
        }
        double min_k = std::numeric_limits<double>::infinity();
        for (std::size_t a = 0; a < options.grid; ++a)
        {
            kernel.model().rate_row(points[a], points, row);
            min_k = std::min(min_k, *std::min_element(row.begin(), row.end()));
        }
        report.c_prime.push_back(min_k);
        if (!(min_k > 0.0))
        {
            report.zero_band = j;
            report.summands.push_back(std::numeric_limits<double>::infinity());
            report.partial_sums.push_back(std::numeric_limits<double>::infinity());
            report.verdict = Verdict::diverging;
            report.note += "; kernel vanishes on band " + std::to_string(j);
            report.j_max = j;
            return report;
        }
        const double fj = f.values[static_cast<std::size_t>(j)];
        const double summand = lo / (min_k * fj * fj);
        running += summand;
        report.summands.push_back(summand);
        report.partial_sums.push_back(running);
    }
    report.verdict = ratio_verdict(report.summands, report.tail_ratio);
    return report;
}

HypercubePartition::HypercubePartition(std::size_t dimension, std::size_t cells_per_axis)
    : dim_(dimension)
    , per_axis_(cells_per_axis)
    , count_(1)
{
    if (cells_per_axis == 0)
    {
        throw ContractViolation("HypercubePartition: need at least one cell per axis");
    }
    for (std::size_t d = 0; d < dim_; ++d)
    {
        count_ *= per_axis_;
    }
}

bool HypercubePartition::contains(std::size_t cell, std::span<const double> point) const
{
    if (point.size() != dim_ || cell >= count_)
    {
        return false;
    }
    const double side = 1.0 / static_cast<double>(per_axis_);
    for (std::size_t d = 0; d < dim_; ++d)
    {
        const std::size_t k = cell % per_axis_;
        cell /= per_axis_;
        const double lo = static_cast<double>(k) * side;
        const double hi = static_cast<double>(k + 1) * side;
        const bool last = k + 1 == per_axis_;
        if (point[d] < lo || point[d] > hi || (!last && point[d] == hi))
        {
            return false;
        }
    }
    return true;
}

void HypercubePartition::sample(std::size_t cell, CounterRng& rng, std::span<double> out) const
{
    const double side = 1.0 / static_cast<double>(per_axis_);
    for (std::size_t d = 0; d < dim_; ++d)
    {
        const std::size_t k = cell % per_axis_;
        cell /= per_axis_;
        out[d] = (static_cast<double>(k) + rng.uniform()) * side;
    }
}

void HypercubePartition::vertex(std::size_t cell, std::size_t index, std::span<double> out) const
{
    const double side = 1.0 / static_cast<double>(per_axis_);
    for (std::size_t d = 0; d < dim_; ++d)
    {
        const std::size_t k = cell % per_axis_;
        cell /= per_axis_;
        const std::size_t corner = (index >> d) & 1u;
        out[d] = static_cast<double>(k + corner) * side;
    }
}

CriterionReport partition_criterion_diagnostic(const KernelSpec& kernel, const PartitionFamily& partitions,
                                               const FSequence& f, std::span<const std::uint64_t> n_ladder,
                                               const IntegerFunction& psi, const IntegerFunction& xi,
                                               PartitionDiagnosticOptions options)
{
    if (!partitions || !psi || !xi || n_ladder.empty() || options.samples_per_cell < 2)
    {
        throw ContractViolation("partition_criterion_diagnostic: invalid arguments");
    }
    CriterionReport report;
    report.f_description = f.description;
    report.note = "c' estimated by sampling " + std::to_string(options.samples_per_cell) +
                  " pairs per cell (over-estimate of the infimum); verdict is advisory";
    report.verdict = Verdict::inconclusive;
    CounterRng rng(options.seed);
    bool flagged = false;

    for (std::size_t ni = 0; ni < n_ladder.size(); ++ni)
    {
        const std::uint64_t n = n_ladder[ni];
        const std::uint64_t psi_n = psi(n);
        const std::uint64_t xi_n = xi(n);
        if (psi_n == 0 || xi_n == 0)
        {
            throw ContractViolation("partition_criterion_diagnostic: psi(N) and xi(N) must be positive");
        }
        const int top = std::min(options.j_max, floor_log2(psi_n));
        if (f.values.size() < static_cast<std::size_t>(top) + 1)
        {
            throw ContractViolation("partition_criterion_diagnostic: f sequence shorter than log2 psi(N)");
        }
        const bool last_n = ni + 1 == n_ladder.size();
        if (last_n)
        {
            report.j_max = top;
            report.summands.clear();
            report.partial_sums.clear();
            report.c_prime.clear();
        }
        double total = 0.0;
        for (int j = 0; j <= top; ++j)
        {
            const auto part = partitions(j, n);
            if (!part)
            {
                throw ContractViolation("partition_criterion_diagnostic: no partition for band " + std::to_string(j));
            }
            if (part->cell_count() > xi_n)
            {
                throw ContractViolation("partition_criterion_diagnostic: partition has more than xi(N) cells");
            }
            const std::size_t dim = part->dimension();
            const double lo = pow2(j);
            const double hi_mass = std::nextafter(pow2(j + 1), 0.0);
            const std::size_t vertices = std::size_t{1} << dim;
            ClusterType x;
            ClusterType y;
            x.position.resize(dim);
            y.position.resize(dim);
            double inverse_sum = 0.0;
            double band_min = std::numeric_limits<double>::infinity();
            for (std::size_t cell = 0; cell < part->cell_count(); ++cell)
            {
                double c_min = std::numeric_limits<double>::infinity();
                for (std::size_t s = 0; s < options.samples_per_cell; ++s)
                {
                    if (s < options.samples_per_cell / 2)
                    {
                        const auto bits = rng();
                        x.mass = (bits & 1u) ? hi_mass : lo;
                        y.mass = (bits & 2u) ? hi_mass : lo;
                        const std::size_t a = static_cast<std::size_t>(bits >> 8) % vertices;
                        std::size_t mask = dim == 0 ? 0 : 1 + static_cast<std::size_t>(bits >> 40) % (vertices - 1);
                        part->vertex(cell, a, x.position);
                        part->vertex(cell, a ^ mask, y.position);
                    }
                    else
                    {
                        x.mass = lo * (1.0 + rng.uniform());
                        y.mass = lo * (1.0 + rng.uniform());
                        part->sample(cell, rng, x.position);
                        part->sample(cell, rng, y.position);
                    }
                    c_min = std::min(c_min, kernel.rate(x, y));
                }
                band_min = std::min(band_min, c_min);
                if (!(c_min > 0.0))
                {
                    flagged = true;
                    report.flagged_cells.push_back("N=" + std::to_string(n) + " j=" + std::to_string(j) +
                                                   " cell=" + std::to_string(cell));
                    continue;
                }
                inverse_sum += 1.0 / c_min;
            }
            const double fj = f.values[static_cast<std::size_t>(j)];
            const double term = inverse_sum * lo / (fj * fj);
            total += term;
            if (last_n)
            {
                report.summands.push_back(term);
                report.partial_sums.push_back(total);
                report.c_prime.push_back(band_min);
            }
        }
        report.n_ladder.push_back(n);
        report.ladder_sums.push_back(total);
        report.psi_xi_over_n.push_back(static_cast<double>(psi_n) * static_cast<double>(xi_n) /
                                       static_cast<double>(n));
    }

    if (report.n_ladder.size() >= 2)
    {
        // Least-squares slope of log S(N) against log N.
        double sx = 0.0;
        double sy = 0.0;
        double sxx = 0.0;
        double sxy = 0.0;
        bool positive = true;
        for (std::size_t i = 0; i < report.n_ladder.size(); ++i)
        {
            if (!(report.ladder_sums[i] > 0.0))
            {
                positive = false;
                break;
            }
            const double lx = std::log(static_cast<double>(report.n_ladder[i]));
            const double ly = std::log(report.ladder_sums[i]);
            sx += lx;
            sy += ly;
            sxx += lx * lx;
            sxy += lx * ly;
        }
        const double k = static_cast<double>(report.n_ladder.size());
        const double denom = k * sxx - sx * sx;
        if (positive && denom > 0.0)
        {
            report.ladder_slope = (k * sxy - sx * sy) / denom;
        }
    }
    bool vanishing = report.psi_xi_over_n.size() >= 2;
    for (std::size_t i = 1; i < report.psi_xi_over_n.size(); ++i)
    {
        vanishing = vanishing && report.psi_xi_over_n[i] < report.psi_xi_over_n[i - 1];
    }
    report.psi_xi_vanishing =
        vanishing && report.psi_xi_over_n.back() <= 0.1 * report.psi_xi_over_n.front();
    report.tail_ratio = std::numeric_limits<double>::quiet_NaN();

    if (flagged)
    {
        report.verdict = Verdict::diverging;
        report.note += "; zero-rate pairs sampled in some cells";
    }
    else if (report.ladder_slope)
    {
        if (*report.ladder_slope <= 0.05)
        {
            report.verdict = Verdict::converging;
        }
        else if (*report.ladder_slope > 0.2)
        {
            report.verdict = Verdict::diverging;
        }
    }
    return report;
}

Lemma52Result check_lemma_52(std::span<const std::int64_t> v, std::span<const double> c)
{
    if (v.empty() || v.size() != c.size())
    {
        throw ContractViolation("check_lemma_52: v and c must be nonempty and of equal length");
    }
    long double lhs = 0.0L;
    long double k1 = 0.0L;
    long double k2 = 0.0L;
    for (std::size_t i = 0; i < v.size(); ++i)
    {
        if (v[i] <= 0 || !(c[i] > 0.0) || !std::isfinite(c[i]))
        {
            throw ContractViolation("check_lemma_52: entries must be positive (index " + std::to_string(i) + ")");
        }
        const long double vi = static_cast<long double>(v[i]);
        lhs += c[i] * (vi * vi - vi);
        k1 += vi;
        k2 += 1.0L / c[i];
    }
    const long double gap = k1 - static_cast<long double>(v.size());
    const long double rhs = gap * gap / (2.0L * k2);
    Lemma52Result r;
    r.lhs = static_cast<double>(lhs);
    r.rhs = static_cast<double>(rhs);
    r.holds = lhs >= rhs - 1e-12L * std::max(1.0L, rhs);
    return r;
}

double g_pi_estimate(const Configuration& config)
{
    const double n = static_cast<double>(config.n_param());
    long double s = 0.0L;
    const auto rates = config.per_cluster_rates();
    const auto clusters = config.clusters();
    for (std::size_t p = 0; p < clusters.size(); ++p)
    {
        s += static_cast<long double>(clusters[p].mass) * rates[p];
    }
    return static_cast<double>(s / (n * n));
}

std::uint64_t ceil_root(std::uint64_t x, unsigned k)
{
    if (k == 0)
    {
        throw ContractViolation("ceil_root: k must be positive");
    }
    if (x <= 1)
    {
        return x;
    }
    // r^k >= x, evaluated without overflow.
    auto at_least = [x, k](std::uint64_t r) {
        std::uint64_t p = 1;
        for (unsigned i = 0; i < k; ++i)
        {
            if (p > (x - 1) / r)
            {
                return true;
            }
            p *= r;
        }
        return p >= x;
    };
    auto r = static_cast<std::uint64_t>(std::llround(std::pow(static_cast<double>(x), 1.0 / k)));
    r = std::max<std::uint64_t>(r, 1);
    while (!at_least(r))
    {
        ++r;
    }
    while (r > 1 && at_least(r - 1))
    {
        --r;
    }
    return r;
}

} // namespace coagulab
