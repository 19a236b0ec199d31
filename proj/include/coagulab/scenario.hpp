#pragma once

#include "coagulab/core.hpp"
#include "coagulab/gelation.hpp"
#include "coagulab/kernels.hpp"
#include "coagulab/simulator.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace coagulab {

// Invalid scenario configuration; `path` names the offending field.
class ConfigError : public std::runtime_error
{
public:
    ConfigError(const std::string& path, const std::string& message)
        : std::runtime_error(path + ": " + message)
        , path(path)
    {
    }

    std::string path;
};

// Closed-form or tabulated ψ(N).
struct PsiSpec
{
    std::string tag = "sqrt"; // sqrt, cbrt, log, alphaN, power, custom_table
    double parameter = 0.0;   // alpha for alphaN, exponent for power
    std::map<std::uint64_t, std::uint64_t> table;

    std::uint64_t operator()(std::uint64_t n) const;
    nlohmann::json to_json() const;
};

enum class OutputFormat
{
    csv,
    json,
};

struct Scenario
{
    std::string id = "scenario";
    nlohmann::json kernel;  // normalized kernel block
    std::string initial = "monodispersed"; // monodispersed, uniform_positions, typed
    std::size_t dimension = 0;
    std::vector<double> type_weights; // typed initial condition
    std::vector<std::uint64_t> ladder;
    double horizon = 1.0;
    TimeMode time_mode = TimeMode::normalized;
    std::optional<double> alpha;
    std::optional<double> delta;
    std::optional<PsiSpec> psi;
    std::size_t replicas = 1;
    std::uint64_t seed = 0;
    std::string output_dir = "out";
    OutputFormat format = OutputFormat::csv;
    std::vector<double> checkpoints;
    bool record_timing = false;

    KernelSpec build_kernel() const;
    // Fully resolved configuration, defaults included.
    nlohmann::json to_json() const;
};

// YAML (or JSON, a YAML subset) text or file to a validated scenario.
Scenario parse_scenario(const std::string& text);
Scenario load_scenario(const std::filesystem::path& path);
Scenario scenario_from_json(const nlohmann::json& config);
nlohmann::json yaml_to_json(const std::string& text);

// Kernel from a config block such as {type: power, gamma: 1.5}.
KernelSpec build_kernel(const nlohmann::json& config);

struct SpectrumRow
{
    double time = 0.0;
    int band = 0;
    double mass = 0.0;
};

struct ReplicaResult
{
    std::uint64_t n = 0;
    std::size_t replica = 0;
    std::uint64_t seed = 0;
    std::optional<double> tau_alpha;
    std::optional<double> tau_psi_delta;
    double final_largest_mass = 0.0;
    std::size_t events = 0;
    bool absorbed = false;
    std::optional<double> wall_ms;
    std::vector<SpectrumRow> spectra;
};

struct Summary
{
    std::size_t found = 0;
    std::optional<double> mean;
    std::optional<double> median;
    std::optional<double> ci_low;
    std::optional<double> ci_high;
};

struct LadderSummary
{
    std::uint64_t n = 0;
    std::size_t replicas = 0;
    std::size_t absorbed = 0;
    Summary tau_alpha;
    Summary tau_psi_delta;
    Summary final_largest_mass;
};

struct EnsembleResult
{
    std::string scenario_id;
    nlohmann::json config;
    std::vector<ReplicaResult> rows; // ordered by (N, replica)
    std::vector<LadderSummary> summaries;
};

struct EnsembleOptions
{
    std::size_t threads = 1;
};

// Initial configuration of one replica (positions drawn from its own stream).
Configuration initial_configuration(const Scenario& scenario, const KernelSpec& kernel, std::uint64_t n,
                                    std::uint64_t seed);

ReplicaResult run_replica(const Scenario& scenario, const KernelSpec& kernel, std::uint64_t n, std::size_t replica);

EnsembleResult run_ensemble(const Scenario& scenario, EnsembleOptions options = {});

std::vector<LadderSummary> summarize(const Scenario& scenario, const std::vector<ReplicaResult>& rows);

// Shortest round-trip decimal form.
std::string format_number(double x);

void write_rows_csv(const EnsembleResult& result, std::ostream& out);
void write_spectra_csv(const EnsembleResult& result, std::uint64_t n, std::ostream& out);
void write_summary_csv(const EnsembleResult& result, std::ostream& out);
nlohmann::json to_json(const EnsembleResult& result);

// Writes the result files into `dir` and returns their paths.
std::vector<std::filesystem::path> emit(const EnsembleResult& result, const std::filesystem::path& dir,
                                        OutputFormat format);

// Explicit count, else COAGULAB_THREADS, else 1.
std::size_t resolve_threads(std::optional<std::size_t> requested);

} // namespace coagulab
