#pragma once

#include "coagulab/core.hpp"
#include "coagulab/kernels.hpp"
#include "coagulab/rng.hpp"

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <vector>

namespace coagulab {

// One coagulation: clusters `left` and `right` (ids) merged into `offspring`
// at normalized time `time`. The offspring id is initial.next_id() plus the
// event index. Offspring labels are not stored; they follow from replay.
struct Event
{
    double time = 0.0;
    ClusterId left = 0;
    ClusterId right = 0;
    ClusterType offspring;
};

struct Trajectory
{
    Configuration initial;
    std::vector<Event> events;
    std::uint64_t rng_seed = 0;
    std::uint64_t rng_stream = 0;
    // No further event can happen (one cluster left, or all pair rates zero).
    bool absorbed = false;
    // Normalized time up to which the trajectory is known: the horizon when
    // it stopped there (or absorbed before it), else the last event time.
    double final_time = 0.0;

    ClusterId offspring_id(std::size_t event_index) const
    {
        return static_cast<ClusterId>(initial.next_id() + event_index);
    }
};

// Rebuild the final configuration by applying every event to the initial one.
Configuration replay(const Trajectory& trajectory);

struct StopCondition
{
    using Predicate = std::function<bool(const Configuration&, const Event&)>;

    double horizon = std::numeric_limits<double>::infinity();
    std::optional<std::size_t> max_events;
    std::optional<std::size_t> min_clusters;
    // Checked after every event; true stops the run.
    Predicate predicate;

    static StopCondition at_time(double t)
    {
        StopCondition s;
        s.horizon = t;
        return s;
    }
    static StopCondition after_events(std::size_t n)
    {
        StopCondition s;
        s.max_events = n;
        return s;
    }
    static StopCondition at_cluster_count(std::size_t n)
    {
        StopCondition s;
        s.min_clusters = n;
        return s;
    }
};

class Observer
{
public:
    virtual ~Observer() = default;
    virtual void on_start(const Configuration&) {}
    // Called after the event has been applied.
    virtual void on_event(const Event& event, const Configuration& after) = 0;
    virtual void on_finish(const Configuration&, double /*final_time*/) {}
};

// Direct-method Gillespie engine over one configuration.
class Engine
{
public:
    // The configuration is rebuilt around kernel's rate function when it was
    // built with a different one.
    Engine(Configuration initial, KernelSpec kernel, std::uint64_t seed, std::uint64_t stream = 0,
           TimeMode mode = TimeMode::normalized);

    // Advance by one coagulation if it happens no later than `horizon`
    // (normalized). Returns none when absorbed or when the next event would
    // pass the horizon; in the latter case the configuration is unchanged and
    // the clock moves to the horizon.
    std::optional<Event> step(double horizon = std::numeric_limits<double>::infinity());

    const Configuration& configuration() const noexcept { return config_; }
    const KernelSpec& kernel() const noexcept { return kernel_; }
    double time() const noexcept { return time_; }
    bool absorbed() const noexcept { return absorbed_; }
    TimeMode mode() const noexcept { return mode_; }
    CounterRng& rng() noexcept { return rng_; }

private:
    Configuration config_;
    KernelSpec kernel_;
    CounterRng rng_;
    TimeMode mode_;
    double time_ = 0.0;
    double raw_time_ = 0.0;
    bool absorbed_ = false;
};

Trajectory run(const Configuration& initial, const KernelSpec& kernel, const StopCondition& stop,
               std::span<Observer* const> observers, std::uint64_t seed, std::uint64_t stream = 0,
               TimeMode mode = TimeMode::normalized);

inline Trajectory run(const Configuration& initial, const KernelSpec& kernel, const StopCondition& stop,
                      std::uint64_t seed, TimeMode mode = TimeMode::normalized)
{
    return run(initial, kernel, stop, {}, seed, 0, mode);
}

// Mono-dispersed starting state for a kernel: n clusters of mass 1.
Configuration monodispersed(std::size_t n, const KernelSpec& kernel, std::vector<std::vector<double>> positions = {});

} // namespace coagulab
