#include "coagulab/simulator.hpp"

#include <cmath>
#include <exception>
#include <string>
#include <utility>

namespace coagulab {

namespace {

Configuration rebind(Configuration config, const KernelSpec& kernel)
{
    if (config.kernel() == kernel.rate_kernel().get())
    {
        return config;
    }
    std::vector<ClusterType> clusters(config.clusters().begin(), config.clusters().end());
    return Configuration(std::move(clusters), config.n_param(), kernel.rate_kernel());
}

} // namespace

Configuration replay(const Trajectory& trajectory)
{
    Configuration config = trajectory.initial;
    for (const Event& e : trajectory.events)
    {
        config.apply_coagulation(e.left, e.right, e.offspring);
    }
    return config;
}

Engine::Engine(Configuration initial, KernelSpec kernel, std::uint64_t seed, std::uint64_t stream, TimeMode mode)
    : config_(rebind(std::move(initial), kernel))
    , kernel_(std::move(kernel))
    , rng_(seed, stream)
    , mode_(mode)
{
}

std::optional<Event> Engine::step(double horizon)
{
    if (config_.size() <= 1 || !(config_.total_rate() > 0.0L))
    {
        absorbed_ = true;
        return std::nullopt;
    }
    const long double lambda = config_.total_rate();
    const double n = static_cast<double>(config_.n_param());
    const double e = rng_.exponential();
    double next_time = 0.0;
    double next_raw = 0.0;
    if (mode_ == TimeMode::normalized)
    {
        // Pair clocks at K̄/N: total rate Λ/N.
        next_time = time_ + static_cast<double>(e * n / lambda);
    }
    else
    {
        next_raw = raw_time_ + static_cast<double>(e / lambda);
        next_time = TimeConvention::to_normalized(next_raw, config_.n_param());
    }
    if (next_time > horizon)
    {
        // No event before the horizon: by memorylessness the clocks restart
        // there, so a later call with a larger horizon stays exact.
        time_ = horizon;
        raw_time_ = TimeConvention::to_raw(horizon, config_.n_param());
        return std::nullopt;
    }

    const std::size_t pi = config_.sample_cluster(rng_.uniform());
    const ClusterId id_i = config_.id_at(pi);
    const auto row = config_.rate_row(id_i);
    double row_sum = 0.0;
    for (double r : row)
    {
        row_sum += r;
    }
    const double target = rng_.uniform() * row_sum;
    std::size_t pj = row.size();
    double acc = 0.0;
    std::size_t last_positive = row.size();
    for (std::size_t k = 0; k < row.size(); ++k)
    {
        if (row[k] > 0.0)
        {
            acc += row[k];
            last_positive = k;
            if (acc > target)
            {
                pj = k;
                break;
            }
        }
    }
    if (pj == row.size())
    {
        pj = last_positive;
    }
    if (pj == row.size())
    {
        throw SimulationError("cluster " + std::to_string(id_i) + " was drawn with no positive partner rate");
    }
    const ClusterId id_j = config_.id_at(pj);

    Event event;
    event.time = next_time;
    event.left = id_i;
    event.right = id_j;
    event.offspring = kernel_.offspring(config_.clusters()[pi], config_.clusters()[pj], rng_);
    event.offspring.labels.clear();
    config_.apply_coagulation(id_i, id_j, event.offspring);
    time_ = next_time;
    raw_time_ = next_raw;
    return event;
}

Trajectory run(const Configuration& initial, const KernelSpec& kernel, const StopCondition& stop,
               std::span<Observer* const> observers, std::uint64_t seed, std::uint64_t stream, TimeMode mode)
{
    if (initial.empty())
    {
        throw ContractViolation("run: initial configuration has no clusters");
    }
    Engine engine(initial, kernel, seed, stream, mode);
    Trajectory traj;
    traj.initial = engine.configuration();
    traj.rng_seed = seed;
    traj.rng_stream = stream;

    auto notify = [&](auto&& call, const char* phase) {
        for (Observer* o : observers)
        {
            try
            {
                call(*o);
            }
            catch (const std::exception& ex)
            {
                throw SimulationError(std::string("observer failed during ") + phase + " after " +
                                      std::to_string(traj.events.size()) + " events (seed " + std::to_string(seed) +
                                      "): " + ex.what());
            }
        }
    };

    notify([&](Observer& o) { o.on_start(engine.configuration()); }, "start");
    bool stopped_early = false;
    while (true)
    {
        if (stop.max_events && traj.events.size() >= *stop.max_events)
        {
            stopped_early = true;
            break;
        }
        if (stop.min_clusters && engine.configuration().size() <= *stop.min_clusters)
        {
            stopped_early = true;
            break;
        }
        auto event = engine.step(stop.horizon);
        if (!event)
        {
            break;
        }
        traj.events.push_back(std::move(*event));
        const Event& last = traj.events.back();
        notify([&](Observer& o) { o.on_event(last, engine.configuration()); }, "on_event");
        if (stop.predicate && stop.predicate(engine.configuration(), last))
        {
            stopped_early = true;
            break;
        }
    }
    traj.absorbed = engine.absorbed();
    if (stopped_early || (traj.absorbed && !std::isfinite(stop.horizon)))
    {
        traj.final_time = engine.time();
    }
    else
    {
        traj.final_time = stop.horizon;
    }
    notify([&](Observer& o) { o.on_finish(engine.configuration(), traj.final_time); }, "finish");
    return traj;
}

Configuration monodispersed(std::size_t n, const KernelSpec& kernel, std::vector<std::vector<double>> positions)
{
    return Configuration(monodispersed_clusters(n, std::move(positions)), n, kernel.rate_kernel());
}

} // namespace coagulab
