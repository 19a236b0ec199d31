#include "coagulab/scenario.hpp"

#include "coagulab/stats.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <mutex>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

namespace coagulab {

namespace {

using json = nlohmann::json;

// ---- config field access with error paths ----

const json& require(const json& obj, const std::string& key, const std::string& path)
{
    if (!obj.is_object() || !obj.contains(key))
    {
        throw ConfigError(path + "." + key, "required field is missing");
    }
    return obj.at(key);
}

double number_at(const json& obj, const std::string& key, const std::string& path, std::optional<double> fallback)
{
    if (!obj.is_object() || !obj.contains(key))
    {
        if (fallback)
        {
            return *fallback;
        }
        throw ConfigError(path + "." + key, "required field is missing");
    }
    const json& v = obj.at(key);
    if (!v.is_number())
    {
        throw ConfigError(path + "." + key, "expected a number, got " + v.dump());
    }
    const double x = v.get<double>();
    if (!std::isfinite(x))
    {
        throw ConfigError(path + "." + key, "must be finite");
    }
    return x;
}

std::uint64_t count_at(const json& obj, const std::string& key, const std::string& path,
                       std::optional<std::uint64_t> fallback)
{
    if (!obj.is_object() || !obj.contains(key))
    {
        if (fallback)
        {
            return *fallback;
        }
        throw ConfigError(path + "." + key, "required field is missing");
    }
    const json& v = obj.at(key);
    if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0))
    {
        throw ConfigError(path + "." + key, "expected a nonnegative integer, got " + v.dump());
    }
    return v.get<std::uint64_t>();
}

std::string string_at(const json& obj, const std::string& key, const std::string& path,
                      std::optional<std::string> fallback)
{
    if (!obj.is_object() || !obj.contains(key))
    {
        if (fallback)
        {
            return *fallback;
        }
        throw ConfigError(path + "." + key, "required field is missing");
    }
    const json& v = obj.at(key);
    if (!v.is_string())
    {
        throw ConfigError(path + "." + key, "expected a string, got " + v.dump());
    }
    return v.get<std::string>();
}

bool bool_at(const json& obj, const std::string& key, const std::string& path, bool fallback)
{
    if (!obj.is_object() || !obj.contains(key))
    {
        return fallback;
    }
    const json& v = obj.at(key);
    if (!v.is_boolean())
    {
        throw ConfigError(path + "." + key, "expected true or false, got " + v.dump());
    }
    return v.get<bool>();
}

void reject_unknown(const json& obj, const std::set<std::string>& allowed, const std::string& path)
{
    if (!obj.is_object())
    {
        throw ConfigError(path, "expected a mapping");
    }
    for (const auto& [key, _] : obj.items())
    {
        if (!allowed.contains(key))
        {
            throw ConfigError(path + "." + key, "unknown field");
        }
    }
}

Domination parse_domination(const std::string& s, const std::string& path)
{
    if (s == "dominating")
    {
        return Domination::dominating;
    }
    if (s == "dominated")
    {
        return Domination::dominated;
    }
    if (s == "neither")
    {
        return Domination::neither;
    }
    if (s == "unknown")
    {
        return Domination::unknown;
    }
    throw ConfigError(path, "unknown domination class '" + s + "'");
}

bool kernel_uses_positions(const std::string& type)
{
    return type == "distance_power" || type == "concave_rho" || type == "convex_rho" || type == "product";
}

json yaml_node_to_json(const YAML::Node& node)
{
    switch (node.Type())
    {
    case YAML::NodeType::Null:
    case YAML::NodeType::Undefined:
        return nullptr;
    case YAML::NodeType::Sequence: {
        json arr = json::array();
        for (const auto& item : node)
        {
            arr.push_back(yaml_node_to_json(item));
        }
        return arr;
    }
    case YAML::NodeType::Map: {
        json obj = json::object();
        for (const auto& kv : node)
        {
            obj[kv.first.as<std::string>()] = yaml_node_to_json(kv.second);
        }
        return obj;
    }
    case YAML::NodeType::Scalar:
        break;
    }
    const std::string s = node.Scalar();
    if (node.Tag() == "!")
    {
        return s; // quoted
    }
    if (s == "true" || s == "True")
    {
        return true;
    }
    if (s == "false" || s == "False")
    {
        return false;
    }
    if (s == "~" || s == "null")
    {
        return nullptr;
    }
    {
        std::uint64_t u = 0;
        const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), u);
        if (ec == std::errc() && p == s.data() + s.size())
        {
            return u;
        }
    }
    {
        std::int64_t i = 0;
        const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), i);
        if (ec == std::errc() && p == s.data() + s.size())
        {
            return i;
        }
    }
    {
        double d = 0.0;
        const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), d);
        if (ec == std::errc() && p == s.data() + s.size() && !s.empty())
        {
            return d;
        }
    }
    return s;
}

RhoFunction quadratic_rho(double a, double b)
{
    return [a, b](std::span<const double> u) {
        double s = 0.0;
        for (double c : u)
        {
            s += c * c;
        }
        return a + b * s;
    };
}

json optional_json(const std::optional<double>& x)
{
    return x ? json(*x) : json(nullptr);
}

Summary summarize_values(std::vector<double> values)
{
    Summary s;
    s.found = values.size();
    if (values.empty())
    {
        return s;
    }
    s.mean = stats::mean(values);
    const auto ci = stats::mean_confidence_interval(values);
    s.ci_low = ci.lower;
    s.ci_high = ci.upper;
    s.median = stats::median(std::move(values));
    return s;
}

std::string cell(const std::optional<double>& x)
{
    return x ? format_number(*x) : std::string();
}

json summary_json(const Summary& s)
{
    return json{{"found", s.found},
                {"mean", optional_json(s.mean)},
                {"median", optional_json(s.median)},
                {"ci_low", optional_json(s.ci_low)},
                {"ci_high", optional_json(s.ci_high)}};
}

} // namespace

// ---- psi ----

std::uint64_t PsiSpec::operator()(std::uint64_t n) const
{
    std::uint64_t v = 0;
    if (tag == "sqrt")
    {
        v = ceil_root(n, 2);
    }
    else if (tag == "cbrt")
    {
        v = ceil_root(n, 3);
    }
    else if (tag == "log")
    {
        v = static_cast<std::uint64_t>(std::ceil(std::log(static_cast<double>(n))));
    }
    else if (tag == "alphaN")
    {
        v = static_cast<std::uint64_t>(std::ceil(parameter * static_cast<double>(n)));
    }
    else if (tag == "power")
    {
        v = static_cast<std::uint64_t>(std::ceil(std::pow(static_cast<double>(n), parameter) - 1e-9));
    }
    else if (tag == "custom_table")
    {
        const auto it = table.find(n);
        if (it == table.end())
        {
            throw ContractViolation("psi table has no entry for N = " + std::to_string(n));
        }
        v = it->second;
    }
    else
    {
        throw ContractViolation("unknown psi tag '" + tag + "'");
    }
    return std::max<std::uint64_t>(v, 1);
}

json PsiSpec::to_json() const
{
    json j{{"type", tag}};
    if (tag == "alphaN")
    {
        j["alpha"] = parameter;
    }
    else if (tag == "power")
    {
        j["exponent"] = parameter;
    }
    else if (tag == "custom_table")
    {
        json t = json::object();
        for (const auto& [n, v] : table)
        {
            t[std::to_string(n)] = v;
        }
        j["table"] = t;
    }
    return j;
}

// ---- kernels ----

KernelSpec build_kernel(const json& config)
{
    const std::string path = "kernel";
    const std::string type = string_at(config, "type", path, std::nullopt);
    auto only = [&](std::set<std::string> keys) {
        keys.insert("type");
        keys.insert("domination");
        keys.insert("dimension");
        reject_unknown(config, keys, path);
    };
    const auto dimension = static_cast<std::size_t>(count_at(config, "dimension", path, 1));
    std::optional<KernelSpec> spec;
    try
    {
        if (type == "multiplicative")
        {
            only({});
            spec = multiplicative();
        }
        else if (type == "additive")
        {
            only({});
            spec = additive();
        }
        else if (type == "constant")
        {
            only({"value"});
            spec = constant_kernel(number_at(config, "value", path, 1.0));
        }
        else if (type == "power")
        {
            only({"gamma"});
            spec = homogeneous_power(number_at(config, "gamma", path, std::nullopt));
        }
        else if (type == "mass_log")
        {
            only({"epsilon", "floor"});
            spec = mass_log(number_at(config, "epsilon", path, std::nullopt), number_at(config, "floor", path, 1.0));
        }
        else if (type == "distance_power")
        {
            only({"kappa0", "alpha"});
            spec = spatial_distance_power(number_at(config, "kappa0", path, 1.0),
                                          number_at(config, "alpha", path, std::nullopt));
        }
        else if (type == "concave_rho")
        {
            only({"profile", "radius"});
            const std::string profile = string_at(config, "profile", path, "tent");
            if (profile != "tent")
            {
                throw ConfigError(path + ".profile", "concave profiles: tent");
            }
            spec = concave_rho(tent_rho(number_at(config, "radius", path, 2.0)), dimension);
        }
        else if (type == "convex_rho")
        {
            only({"profile", "a", "b"});
            const std::string profile = string_at(config, "profile", path, "quadratic");
            if (profile != "quadratic")
            {
                throw ConfigError(path + ".profile", "convex profiles: quadratic");
            }
            spec = convex_rho(quadratic_rho(number_at(config, "a", path, 1.0), number_at(config, "b", path, 1.0)),
                              dimension);
        }
        else if (type == "product")
        {
            only({"length", "gamma"});
            const double length = number_at(config, "length", path, 1.0);
            if (!(length > 0.0))
            {
                throw ConfigError(path + ".length", "must be positive");
            }
            spec = product_kernel([length](double r) { return std::exp(-r / length); },
                                  homogeneous_power(number_at(config, "gamma", path, std::nullopt)));
        }
        else if (type == "bilinear")
        {
            only({"matrix"});
            const json& m = require(config, "matrix", path);
            std::vector<std::vector<double>> a;
            try
            {
                a = m.get<std::vector<std::vector<double>>>();
            }
            catch (const json::exception&)
            {
                throw ConfigError(path + ".matrix", "expected a list of numeric rows");
            }
            spec = bilinear(std::move(a));
        }
        else
        {
            throw ConfigError(path + ".type", "unknown kernel type '" + type + "'");
        }
    }
    catch (const KernelError& e)
    {
        throw ConfigError(path, e.what());
    }
    if (config.contains("domination"))
    {
        spec = spec->with_domination(
            parse_domination(string_at(config, "domination", path, std::nullopt), path + ".domination"));
    }
    return *spec;
}

KernelSpec Scenario::build_kernel() const
{
    return coagulab::build_kernel(kernel);
}

// ---- scenario ----

json yaml_to_json(const std::string& text)
{
    try
    {
        return yaml_node_to_json(YAML::Load(text));
    }
    catch (const YAML::Exception& e)
    {
        throw ConfigError("<document>", std::string("YAML parse error: ") + e.what());
    }
}

Scenario scenario_from_json(const json& config)
{
    reject_unknown(config,
                   {"scenario_id", "kernel", "initial", "ladder", "horizon", "time_mode", "gelation", "replicas",
                    "seed", "output", "checkpoints", "record_timing"},
                   "config");
    Scenario s;
    s.id = string_at(config, "scenario_id", "config", "scenario");
    if (s.id.empty() || s.id.find_first_of("/\\ ,") != std::string::npos)
    {
        throw ConfigError("config.scenario_id", "must be nonempty, without spaces, commas or slashes");
    }

    const json init = config.contains("initial") ? config.at("initial") : json{{"type", "monodispersed"}};
    reject_unknown(init, {"type", "dimension", "weights"}, "config.initial");
    s.initial = string_at(init, "type", "config.initial", "monodispersed");
    if (s.initial == "monodispersed")
    {
        s.dimension = 0;
    }
    else if (s.initial == "uniform_positions")
    {
        s.dimension = static_cast<std::size_t>(count_at(init, "dimension", "config.initial", 1));
        if (s.dimension == 0)
        {
            throw ConfigError("config.initial.dimension", "must be at least 1");
        }
    }
    else if (s.initial == "typed")
    {
        const json& w = require(init, "weights", "config.initial");
        try
        {
            s.type_weights = w.get<std::vector<double>>();
        }
        catch (const json::exception&)
        {
            throw ConfigError("config.initial.weights", "expected a list of numbers");
        }
        double total = 0.0;
        for (double x : s.type_weights)
        {
            if (!(x >= 0.0) || !std::isfinite(x))
            {
                throw ConfigError("config.initial.weights", "weights must be nonnegative");
            }
            total += x;
        }
        if (s.type_weights.empty() || !(total > 0.0))
        {
            throw ConfigError("config.initial.weights", "need at least one positive weight");
        }
        s.dimension = s.type_weights.size();
    }
    else
    {
        throw ConfigError("config.initial.type", "expected monodispersed, uniform_positions or typed");
    }

    json kernel = require(config, "kernel", "config");
    if (!kernel.is_object())
    {
        throw ConfigError("config.kernel", "expected a mapping");
    }
    const std::string ktype = string_at(kernel, "type", "config.kernel", std::nullopt);
    if (kernel_uses_positions(ktype))
    {
        if (s.initial != "uniform_positions")
        {
            throw ConfigError("config.initial.type", "kernel '" + ktype + "' needs uniform_positions");
        }
        kernel["dimension"] = s.dimension;
    }
    else if (ktype == "bilinear" && s.initial != "typed")
    {
        throw ConfigError("config.initial.type", "kernel 'bilinear' needs a typed initial condition");
    }
    else
    {
        kernel.erase("dimension");
    }
    s.kernel = kernel;
    KernelSpec spec = [&] {
        try
        {
            return s.build_kernel();
        }
        catch (const ConfigError& e)
        {
            throw ConfigError("config." + e.path, std::string(e.what()).substr(e.path.size() + 2));
        }
    }();
    if (ktype == "bilinear")
    {
        const auto rows = s.kernel.at("matrix").size();
        if (rows != s.type_weights.size())
        {
            throw ConfigError("config.initial.weights", "need one weight per row of kernel.matrix");
        }
    }

    const json& ladder = require(config, "ladder", "config");
    if (!ladder.is_array() || ladder.empty())
    {
        throw ConfigError("config.ladder", "expected a nonempty list of cluster counts");
    }
    for (std::size_t k = 0; k < ladder.size(); ++k)
    {
        const std::string p = "config.ladder[" + std::to_string(k) + "]";
        if (!ladder[k].is_number_integer() || ladder[k].get<std::int64_t>() < 1)
        {
            throw ConfigError(p, "expected a positive integer");
        }
        const auto n = ladder[k].get<std::uint64_t>();
        if (n > (std::uint64_t{1} << 31))
        {
            throw ConfigError(p, "too large");
        }
        if (std::find(s.ladder.begin(), s.ladder.end(), n) != s.ladder.end())
        {
            throw ConfigError(p, "duplicate N");
        }
        s.ladder.push_back(n);
    }

    s.horizon = number_at(config, "horizon", "config", std::nullopt);
    if (!(s.horizon > 0.0))
    {
        throw ConfigError("config.horizon", "must be positive");
    }
    const std::string mode = string_at(config, "time_mode", "config", "normalized");
    if (mode == "normalized")
    {
        s.time_mode = TimeMode::normalized;
    }
    else if (mode == "raw")
    {
        s.time_mode = TimeMode::raw;
    }
    else
    {
        throw ConfigError("config.time_mode", "expected normalized or raw");
    }

    if (config.contains("gelation"))
    {
        const json& g = config.at("gelation");
        reject_unknown(g, {"alpha", "delta", "psi"}, "config.gelation");
        if (g.contains("alpha"))
        {
            s.alpha = number_at(g, "alpha", "config.gelation", std::nullopt);
            if (!(*s.alpha > 0.0 && *s.alpha <= 1.0))
            {
                throw ConfigError("config.gelation.alpha", "must lie in (0, 1]");
            }
        }
        if (g.contains("delta") != g.contains("psi"))
        {
            throw ConfigError("config.gelation", "psi and delta go together");
        }
        if (g.contains("delta"))
        {
            s.delta = number_at(g, "delta", "config.gelation", std::nullopt);
            if (!(*s.delta > 0.0 && *s.delta < 1.0))
            {
                throw ConfigError("config.gelation.delta", "must lie in (0, 1)");
            }
            json pj = g.at("psi");
            if (pj.is_string())
            {
                pj = json{{"type", pj}};
            }
            const std::string pp = "config.gelation.psi";
            reject_unknown(pj, {"type", "alpha", "exponent", "table"}, pp);
            PsiSpec psi;
            psi.tag = string_at(pj, "type", pp, std::nullopt);
            if (psi.tag == "alphaN")
            {
                psi.parameter = number_at(pj, "alpha", pp, std::nullopt);
                if (!(psi.parameter > 0.0 && psi.parameter <= 1.0))
                {
                    throw ConfigError(pp + ".alpha", "must lie in (0, 1]");
                }
            }
            else if (psi.tag == "power")
            {
                psi.parameter = number_at(pj, "exponent", pp, std::nullopt);
                if (!(psi.parameter > 0.0 && psi.parameter <= 1.0))
                {
                    throw ConfigError(pp + ".exponent", "must lie in (0, 1]");
                }
            }
            else if (psi.tag == "custom_table")
            {
                const json& t = require(pj, "table", pp);
                if (!t.is_object())
                {
                    throw ConfigError(pp + ".table", "expected a mapping from N to psi(N)");
                }
                for (const auto& [key, value] : t.items())
                {
                    std::uint64_t n = 0;
                    const auto [p, ec] = std::from_chars(key.data(), key.data() + key.size(), n);
                    if (ec != std::errc() || p != key.data() + key.size() || !value.is_number_integer() ||
                        value.get<std::int64_t>() < 1)
                    {
                        throw ConfigError(pp + ".table." + key, "expected positive integer N and psi(N)");
                    }
                    psi.table[n] = value.get<std::uint64_t>();
                }
                for (std::uint64_t n : s.ladder)
                {
                    if (!psi.table.contains(n))
                    {
                        throw ConfigError(pp + ".table", "no entry for N = " + std::to_string(n));
                    }
                }
            }
            else if (psi.tag != "sqrt" && psi.tag != "cbrt" && psi.tag != "log")
            {
                throw ConfigError(pp + ".type", "expected sqrt, cbrt, log, alphaN, power or custom_table");
            }
            s.psi = psi;
        }
    }

    s.replicas = static_cast<std::size_t>(count_at(config, "replicas", "config", 1));
    s.seed = count_at(config, "seed", "config", 0);
    s.record_timing = bool_at(config, "record_timing", "config", false);

    if (config.contains("checkpoints"))
    {
        try
        {
            s.checkpoints = config.at("checkpoints").get<std::vector<double>>();
        }
        catch (const json::exception&)
        {
            throw ConfigError("config.checkpoints", "expected a list of times");
        }
        for (std::size_t k = 0; k < s.checkpoints.size(); ++k)
        {
            const double t = s.checkpoints[k];
            if (!(t >= 0.0) || t > s.horizon || (k > 0 && !(t > s.checkpoints[k - 1])))
            {
                throw ConfigError("config.checkpoints[" + std::to_string(k) + "]",
                                  "checkpoints must increase and lie in [0, horizon]");
            }
        }
    }

    if (config.contains("output"))
    {
        const json& o = config.at("output");
        reject_unknown(o, {"dir", "format"}, "config.output");
        s.output_dir = string_at(o, "dir", "config.output", "out");
        const std::string fmt = string_at(o, "format", "config.output", "csv");
        if (fmt == "csv")
        {
            s.format = OutputFormat::csv;
        }
        else if (fmt == "json")
        {
            s.format = OutputFormat::json;
        }
        else
        {
            throw ConfigError("config.output.format", "expected csv or json");
        }
    }
    return s;
}

Scenario parse_scenario(const std::string& text)
{
    return scenario_from_json(yaml_to_json(text));
}

Scenario load_scenario(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
    {
        throw ConfigError(path.string(), "cannot open config file");
    }
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_scenario(buf.str());
}

json Scenario::to_json() const
{
    json j;
    j["scenario_id"] = id;
    j["kernel"] = kernel;
    json init{{"type", initial}};
    if (initial == "uniform_positions")
    {
        init["dimension"] = dimension;
    }
    else if (initial == "typed")
    {
        init["weights"] = type_weights;
    }
    j["initial"] = init;
    j["ladder"] = ladder;
    j["horizon"] = horizon;
    j["time_mode"] = time_mode == TimeMode::normalized ? "normalized" : "raw";
    json g = json::object();
    if (alpha)
    {
        g["alpha"] = *alpha;
    }
    if (delta && psi)
    {
        g["delta"] = *delta;
        g["psi"] = psi->to_json();
    }
    j["gelation"] = g;
    j["replicas"] = replicas;
    j["seed"] = seed;
    j["checkpoints"] = checkpoints;
    j["record_timing"] = record_timing;
    j["output"] = json{{"dir", output_dir}, {"format", format == OutputFormat::csv ? "csv" : "json"}};
    return j;
}

// ---- running ----

Configuration initial_configuration(const Scenario& scenario, const KernelSpec& kernel, std::uint64_t n,
                                    std::uint64_t seed)
{
    std::vector<std::vector<double>> positions;
    if (scenario.initial == "uniform_positions")
    {
        // Stream 1 keeps the positions independent of the event stream.
        CounterRng rng(seed, 1);
        positions.assign(n, std::vector<double>(scenario.dimension));
        for (auto& p : positions)
        {
            for (double& c : p)
            {
                c = rng.uniform();
            }
        }
    }
    else if (scenario.initial == "typed")
    {
        // Deterministic allocation by cumulative weight, type k is the unit vector e_k.
        const double total = std::accumulate(scenario.type_weights.begin(), scenario.type_weights.end(), 0.0);
        positions.reserve(n);
        double cum = 0.0;
        for (std::size_t k = 0; k < scenario.type_weights.size(); ++k)
        {
            const auto begin = static_cast<std::size_t>(std::llround(cum / total * static_cast<double>(n)));
            cum += scenario.type_weights[k];
            const auto end = static_cast<std::size_t>(std::llround(cum / total * static_cast<double>(n)));
            for (std::size_t i = begin; i < end; ++i)
            {
                std::vector<double> e(scenario.type_weights.size(), 0.0);
                e[k] = 1.0;
                positions.push_back(std::move(e));
            }
        }
    }
    return monodispersed(static_cast<std::size_t>(n), kernel, std::move(positions));
}

ReplicaResult run_replica(const Scenario& scenario, const KernelSpec& kernel, std::uint64_t n, std::size_t replica)
{
    ReplicaResult r;
    r.n = n;
    r.replica = replica;
    r.seed = derive_seed(scenario.seed, replica, n);
    const auto start = std::chrono::steady_clock::now();
    const Configuration initial = initial_configuration(scenario, kernel, n, r.seed);
    const Trajectory traj = run(initial, kernel, StopCondition::at_time(scenario.horizon), {}, r.seed, 0,
                                scenario.time_mode);
    if (scenario.alpha)
    {
        r.tau_alpha = tau_alpha(traj, *scenario.alpha);
    }
    if (scenario.psi && scenario.delta)
    {
        r.tau_psi_delta = tau_psi_delta(traj, static_cast<double>((*scenario.psi)(n)), *scenario.delta);
    }
    r.events = traj.events.size();
    r.absorbed = traj.absorbed;
    const MassHistory history(traj);
    r.final_largest_mass = history.largest_at(traj.final_time);
    for (double t : scenario.checkpoints)
    {
        const auto masses = history.masses_at(t);
        for (const auto& [band, mass] : dyadic_spectrum(masses).bands)
        {
            if (mass > 0.0)
            {
                r.spectra.push_back({t, band, mass});
            }
        }
    }
    if (scenario.record_timing)
    {
        r.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    }
    return r;
}

std::vector<LadderSummary> summarize(const Scenario& scenario, const std::vector<ReplicaResult>& rows)
{
    std::vector<LadderSummary> out;
    for (std::uint64_t n : scenario.ladder)
    {
        LadderSummary s;
        s.n = n;
        std::vector<double> ta;
        std::vector<double> tp;
        std::vector<double> lm;
        for (const auto& r : rows)
        {
            if (r.n != n)
            {
                continue;
            }
            ++s.replicas;
            s.absorbed += r.absorbed ? 1 : 0;
            if (r.tau_alpha)
            {
                ta.push_back(*r.tau_alpha);
            }
            if (r.tau_psi_delta)
            {
                tp.push_back(*r.tau_psi_delta);
            }
            lm.push_back(r.final_largest_mass);
        }
        s.tau_alpha = summarize_values(std::move(ta));
        s.tau_psi_delta = summarize_values(std::move(tp));
        s.final_largest_mass = summarize_values(std::move(lm));
        out.push_back(s);
    }
    return out;
}

EnsembleResult run_ensemble(const Scenario& scenario, EnsembleOptions options)
{
    const KernelSpec kernel = scenario.build_kernel();
    struct Job
    {
        std::uint64_t n;
        std::size_t replica;
    };
    std::vector<Job> jobs;
    for (std::uint64_t n : scenario.ladder)
    {
        for (std::size_t r = 0; r < scenario.replicas; ++r)
        {
            jobs.push_back({n, r});
        }
    }
    std::vector<ReplicaResult> results(jobs.size());
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::mutex error_mutex;
    std::size_t error_index = jobs.size();
    std::string error_message;

    auto worker = [&] {
        while (!failed.load(std::memory_order_relaxed))
        {
            const std::size_t k = next.fetch_add(1);
            if (k >= jobs.size())
            {
                return;
            }
            try
            {
                results[k] = run_replica(scenario, kernel, jobs[k].n, jobs[k].replica);
            }
            catch (const std::exception& e)
            {
                std::lock_guard lock(error_mutex);
                if (k < error_index)
                {
                    error_index = k;
                    error_message = e.what();
                }
                failed.store(true);
            }
        }
    };
    const std::size_t threads = std::max<std::size_t>(1, std::min(options.threads, jobs.size()));
    if (threads <= 1)
    {
        worker();
    }
    else
    {
        std::vector<std::jthread> pool;
        for (std::size_t t = 0; t < threads; ++t)
        {
            pool.emplace_back(worker);
        }
    }
    if (failed)
    {
        const Job& j = jobs[error_index];
        throw SimulationError("replica " + std::to_string(j.replica) + " at N = " + std::to_string(j.n) +
                              " (seed " + std::to_string(derive_seed(scenario.seed, j.replica, j.n)) +
                              ") failed: " + error_message);
    }
    EnsembleResult result;
    result.scenario_id = scenario.id;
    result.config = scenario.to_json();
    result.summaries = summarize(scenario, results);
    result.rows = std::move(results);
    return result;
}

// ---- output ----

std::string format_number(double x)
{
    if (std::isnan(x))
    {
        return "nan";
    }
    if (std::isinf(x))
    {
        return x > 0 ? "inf" : "-inf";
    }
    char buf[64];
    const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, p);
}

void write_rows_csv(const EnsembleResult& result, std::ostream& out)
{
    out << "scenario_id,N,replica,seed,tau_alpha,tau_psi_delta,final_largest_mass,events,wall_ms\n";
    for (const auto& r : result.rows)
    {
        out << result.scenario_id << ',' << r.n << ',' << r.replica << ',' << r.seed << ',' << cell(r.tau_alpha)
            << ',' << cell(r.tau_psi_delta) << ',' << format_number(r.final_largest_mass) << ',' << r.events << ','
            << cell(r.wall_ms) << '\n';
    }
}

void write_spectra_csv(const EnsembleResult& result, std::uint64_t n, std::ostream& out)
{
    out << "replica,t_checkpoint,band_j,band_mass\n";
    for (const auto& r : result.rows)
    {
        if (r.n != n)
        {
            continue;
        }
        for (const auto& s : r.spectra)
        {
            out << r.replica << ',' << format_number(s.time) << ',' << s.band << ',' << format_number(s.mass) << '\n';
        }
    }
}

void write_summary_csv(const EnsembleResult& result, std::ostream& out)
{
    out << "scenario_id,N,replicas,absorbed,tau_alpha_found,tau_alpha_mean,tau_alpha_median,tau_alpha_ci_low,"
           "tau_alpha_ci_high,tau_psi_delta_found,tau_psi_delta_mean,tau_psi_delta_median,tau_psi_delta_ci_low,"
           "tau_psi_delta_ci_high,final_largest_mass_mean\n";
    for (const auto& s : result.summaries)
    {
        out << result.scenario_id << ',' << s.n << ',' << s.replicas << ',' << s.absorbed << ',' << s.tau_alpha.found
            << ',' << cell(s.tau_alpha.mean) << ',' << cell(s.tau_alpha.median) << ',' << cell(s.tau_alpha.ci_low)
            << ',' << cell(s.tau_alpha.ci_high) << ',' << s.tau_psi_delta.found << ','
            << cell(s.tau_psi_delta.mean) << ',' << cell(s.tau_psi_delta.median) << ','
            << cell(s.tau_psi_delta.ci_low) << ',' << cell(s.tau_psi_delta.ci_high) << ','
            << cell(s.final_largest_mass.mean) << '\n';
    }
}

json to_json(const EnsembleResult& result)
{
    json rows = json::array();
    json spectra = json::array();
    for (const auto& r : result.rows)
    {
        rows.push_back(json{{"scenario_id", result.scenario_id},
                            {"N", r.n},
                            {"replica", r.replica},
                            {"seed", r.seed},
                            {"tau_alpha", optional_json(r.tau_alpha)},
                            {"tau_psi_delta", optional_json(r.tau_psi_delta)},
                            {"final_largest_mass", r.final_largest_mass},
                            {"events", r.events},
                            {"wall_ms", optional_json(r.wall_ms)}});
        for (const auto& s : r.spectra)
        {
            spectra.push_back(json{{"N", r.n},
                                   {"replica", r.replica},
                                   {"t_checkpoint", s.time},
                                   {"band_j", s.band},
                                   {"band_mass", s.mass}});
        }
    }
    json summaries = json::array();
    for (const auto& s : result.summaries)
    {
        summaries.push_back(json{{"N", s.n},
                                 {"replicas", s.replicas},
                                 {"absorbed", s.absorbed},
                                 {"tau_alpha", summary_json(s.tau_alpha)},
                                 {"tau_psi_delta", summary_json(s.tau_psi_delta)},
                                 {"final_largest_mass", summary_json(s.final_largest_mass)}});
    }
    return json{{"config", result.config}, {"rows", rows}, {"spectra", spectra}, {"summaries", summaries}};
}

std::vector<std::filesystem::path> emit(const EnsembleResult& result, const std::filesystem::path& dir,
                                        OutputFormat format)
{
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec)
    {
        throw std::runtime_error("cannot create output directory " + dir.string() + ": " + ec.message());
    }
    std::vector<std::filesystem::path> written;
    auto open = [&](const std::filesystem::path& p) {
        std::ofstream f(p, std::ios::binary);
        if (!f)
        {
            throw std::runtime_error("cannot write " + p.string());
        }
        written.push_back(p);
        return f;
    };
    if (format == OutputFormat::json)
    {
        auto f = open(dir / (result.scenario_id + ".json"));
        f << to_json(result).dump(2) << '\n';
        return written;
    }
    {
        auto f = open(dir / (result.scenario_id + ".csv"));
        write_rows_csv(result, f);
    }
    {
        auto f = open(dir / (result.scenario_id + "_summary.csv"));
        write_summary_csv(result, f);
    }
    const bool has_checkpoints =
        result.config.contains("checkpoints") && !result.config.at("checkpoints").empty();
    if (has_checkpoints)
    {
        std::set<std::uint64_t> ns;
        for (const auto& r : result.rows)
        {
            ns.insert(r.n);
        }
        for (std::uint64_t n : ns)
        {
            auto f = open(dir / (result.scenario_id + "_spectra_N" + std::to_string(n) + ".csv"));
            write_spectra_csv(result, n, f);
        }
    }
    return written;
}

std::size_t resolve_threads(std::optional<std::size_t> requested)
{
    if (requested && *requested > 0)
    {
        return *requested;
    }
    if (const char* env = std::getenv("COAGULAB_THREADS"))
    {
        std::size_t v = 0;
        const std::string s(env);
        const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec == std::errc() && p == s.data() + s.size() && v > 0)
        {
            return v;
        }
    }
    return 1;
}

} // namespace coagulab
