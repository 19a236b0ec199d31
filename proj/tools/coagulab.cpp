#include "coagulab/gelation.hpp"
#include "coagulab/graphcoupling.hpp"
#include "coagulab/scenario.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <optional>

using namespace coagulab;

namespace {

void print_summary(const EnsembleResult& result)
{
    write_summary_csv(result, std::cout);
}

int run_command(const std::string& config_path, std::optional<std::uint64_t> seed_override,
                std::optional<std::size_t> replicas, std::optional<std::string> out_dir,
                std::optional<std::string> format, std::optional<std::size_t> threads)
{
    Scenario scenario = load_scenario(config_path);
    if (seed_override)
    {
        scenario.seed = *seed_override;
    }
    if (replicas)
    {
        scenario.replicas = *replicas;
    }
    if (out_dir)
    {
        scenario.output_dir = *out_dir;
    }
    if (format)
    {
        scenario.format = *format == "json" ? OutputFormat::json : OutputFormat::csv;
    }
    const EnsembleResult result = run_ensemble(scenario, {resolve_threads(threads)});
    for (const auto& path : emit(result, scenario.output_dir, scenario.format))
    {
        std::cerr << "wrote " << path.string() << '\n';
    }
    print_summary(result);
    return 0;
}

int criterion_command(const std::string& config_path, int j_max)
{
    const Scenario scenario = load_scenario(config_path);
    const KernelSpec kernel = scenario.build_kernel();
    if (!kernel.mass_only())
    {
        std::cerr << "the classical criterion applies to mass-only kernels; '" << kernel.name()
                  << "' depends on positions\n";
        return 2;
    }
    const FSequence f = default_f(kernel, static_cast<std::size_t>(j_max) + 1);
    const CriterionReport report = classical_criterion_diagnostic(kernel, f, {j_max, 64});
    std::cout << to_json(report).dump(2) << '\n';
    return 0;
}

int opnorm_command(const std::string& config_path, std::uint64_t n)
{
    const Scenario scenario = load_scenario(config_path);
    const KernelSpec kernel = scenario.build_kernel();
    const std::uint64_t size = n > 0 ? n : scenario.ladder.front();
    const Configuration initial = initial_configuration(scenario, kernel, size, derive_seed(scenario.seed, 0, size));
    const OperatorNorm norm = operator_norm(initial.clusters(), kernel);
    nlohmann::json j{{"N", size},
                     {"sigma", norm.sigma},
                     {"t_star", norm.t_star},
                     {"iterations", norm.iterations},
                     {"residual", norm.residual}};
    std::cout << j.dump(2) << '\n';
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"coagulab: exact simulation of cluster coagulation and gelation diagnostics"};
    app.require_subcommand(1);

    std::string config;
    std::optional<std::uint64_t> seed_override;
    std::optional<std::size_t> replicas;
    std::optional<std::string> out_dir;
    std::optional<std::string> format;
    std::optional<std::size_t> threads;
    auto* run = app.add_subcommand("run", "Run a scenario ensemble and write CSV or JSON results");
    run->add_option("--config", config, "Scenario file (YAML)")->required()->check(CLI::ExistingFile);
    run->add_option("--seed-override", seed_override, "Replace the master seed");
    run->add_option("--replicas", replicas, "Replace the replica count");
    run->add_option("--out", out_dir, "Output directory");
    run->add_option("--format", format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
    run->add_option("--threads", threads, "Worker threads (default: COAGULAB_THREADS or 1)");

    int j_max = 20;
    auto* criterion = app.add_subcommand("criterion", "Classical summability diagnostic for a scenario kernel");
    criterion->add_option("--config", config, "Scenario file (YAML)")->required()->check(CLI::ExistingFile);
    criterion->add_option("--j-max", j_max, "Largest dyadic band")->check(CLI::Range(1, 60));

    std::uint64_t opnorm_n = 0;
    auto* opnorm = app.add_subcommand("opnorm", "Operator norm and strong-gelation time bound");
    opnorm->add_option("--config", config, "Scenario file (YAML)")->required()->check(CLI::ExistingFile);
    opnorm->add_option("-n,--size", opnorm_n, "Cluster count (default: first ladder entry)");

    CLI11_PARSE(app, argc, argv);
    try
    {
        if (*run)
        {
            return run_command(config, seed_override, replicas, out_dir, format, threads);
        }
        if (*criterion)
        {
            return criterion_command(config, j_max);
        }
        return opnorm_command(config, opnorm_n);
    }
    catch (const ConfigError& e)
    {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    }
    catch (const std::exception& e)
    {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
