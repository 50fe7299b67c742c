#pragma once
/**
 * @file config.hpp
 * @brief JSON run configuration: schema validation (unknown keys rejected
 *        with the offending path), typed accessors, and the mapping onto the
 *        library specs.
 */

#include <array>
#include <cstdint>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "msqg/ensemble.hpp"
#include "msqg/geometry.hpp"
#include "msqg/integrator.hpp"
#include "msqg/kernel.hpp"
#include "msqg/noise.hpp"

namespace msqg {

using json = nlohmann::ordered_json;

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

namespace cfg_detail {

inline void reject_unknown(const json& obj, const std::string& path,
                           const std::set<std::string>& allowed) {
    if (!obj.is_object()) throw ConfigError("config error at " + path + ": expected an object");
    for (auto it = obj.begin(); it != obj.end(); ++it)
        if (!allowed.count(it.key()))
            throw ConfigError("config error at " + path + "." + it.key() + ": unknown key");
}

inline const json* find(const json& obj, const std::string& key) {
    auto it = obj.find(key);
    return it == obj.end() ? nullptr : &*it;
}

inline double get_number(const json& obj, const std::string& path, const std::string& key) {
    const json* v = find(obj, key);
    if (!v) throw ConfigError("config error at " + path + "." + key + ": missing required key");
    if (!v->is_number()) throw ConfigError("config error at " + path + "." + key + ": expected a number");
    return v->get<double>();
}

inline double get_number_or(const json& obj, const std::string& path, const std::string& key,
                            double fallback) {
    const json* v = find(obj, key);
    if (!v) return fallback;
    if (!v->is_number()) throw ConfigError("config error at " + path + "." + key + ": expected a number");
    return v->get<double>();
}

inline long get_integer_or(const json& obj, const std::string& path, const std::string& key,
                           long fallback) {
    const json* v = find(obj, key);
    if (!v) return fallback;
    if (!v->is_number_integer()) throw ConfigError("config error at " + path + "." + key + ": expected an integer");
    return v->get<long>();
}

inline bool get_bool_or(const json& obj, const std::string& path, const std::string& key, bool fallback) {
    const json* v = find(obj, key);
    if (!v) return fallback;
    if (!v->is_boolean()) throw ConfigError("config error at " + path + "." + key + ": expected a boolean");
    return v->get<bool>();
}

inline std::string get_string_or(const json& obj, const std::string& path, const std::string& key,
                                 const std::string& fallback) {
    const json* v = find(obj, key);
    if (!v) return fallback;
    if (!v->is_string()) throw ConfigError("config error at " + path + "." + key + ": expected a string");
    return v->get<std::string>();
}

inline std::vector<double> get_number_list(const json& v, const std::string& path) {
    if (!v.is_array()) throw ConfigError("config error at " + path + ": expected an array of numbers");
    std::vector<double> out;
    for (const auto& e : v) {
        if (!e.is_number()) throw ConfigError("config error at " + path + ": expected an array of numbers");
        out.push_back(e.get<double>());
    }
    return out;
}

inline std::vector<Point2> get_point_list(const json& v, const std::string& path) {
    if (!v.is_array()) throw ConfigError("config error at " + path + ": expected an array of [x, y] pairs");
    std::vector<Point2> out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        const auto& e = v[i];
        if (!e.is_array() || e.size() != 2 || !e[0].is_number() || !e[1].is_number())
            throw ConfigError("config error at " + path + "[" + std::to_string(i) + "]: expected [x, y]");
        out.push_back({e[0].get<double>(), e[1].get<double>()});
    }
    return out;
}

}  // namespace cfg_detail

/// Parsed and schema-validated run configuration.
struct RunConfig {
    DomainSpec domain = DomainSpec::plane();
    bool domain_given = false;

    KernelSpec kernel;

    NoiseSpec noise;
    bool noise_enabled = false;
    std::uint64_t noise_seed = 1;

    IntegratorSpec integrator;
    std::string scheme = "rk45";  ///< rk4 | rk45 | euler_maruyama | strat_heun

    StoppingRule stopping;

    std::optional<std::vector<Point2>> vortex_positions;
    std::optional<std::vector<double>> vortex_intensities;

    // collapse section
    bool has_collapse = false;
    std::optional<std::array<double, 3>> collapse_distances;  // l12, l23, l31
    std::optional<std::array<Point2, 3>> collapse_positions;
    double collapse_xi2 = 1.0;
    double collapse_lambda = 100.0;

    // ensemble section
    bool has_ensemble = false;
    EnsembleSpec ensemble;

    std::string output_dir = ".";
    int output_cadence = 1;

    bool stochastic_scheme() const { return scheme == "euler_maruyama" || scheme == "strat_heun"; }
};

inline RunConfig parse_run_config(const json& root) {
    using namespace cfg_detail;
    RunConfig rc;
    reject_unknown(root, "$",
                   {"domain", "kernel", "noise", "integrator", "stopping", "vortices", "collapse",
                    "ensemble", "output"});

    if (const json* d = find(root, "domain")) {
        reject_unknown(*d, "domain", {"kind"});
        const std::string kind = get_string_or(*d, "domain", "kind", "plane");
        if (kind == "plane") rc.domain = DomainSpec::plane();
        else if (kind == "torus") rc.domain = DomainSpec::torus();
        else throw ConfigError("config error at domain.kind: expected \"plane\" or \"torus\"");
        rc.domain_given = true;
    }

    {
        const json* k = find(root, "kernel");
        if (!k) throw ConfigError("config error at kernel: missing required section");
        reject_unknown(*k, "kernel", {"epsilon", "c_eps", "delta", "lattice_M", "method", "fourier_cutoff"});
        rc.kernel.epsilon = get_number(*k, "kernel", "epsilon");
        rc.kernel.c_eps = get_number_or(*k, "kernel", "c_eps", 1.0);
        if (find(*k, "delta")) rc.kernel.delta = get_number(*k, "kernel", "delta");
        rc.kernel.lattice_truncation = static_cast<int>(get_integer_or(*k, "kernel", "lattice_M", 20));
        const std::string method = get_string_or(*k, "kernel", "method", "direct");
        if (method == "direct") rc.kernel.method = TorusMethod::DirectLattice;
        else if (method == "fourier") rc.kernel.method = TorusMethod::FourierSeries;
        else throw ConfigError("config error at kernel.method: expected \"direct\" or \"fourier\"");
        rc.kernel.fourier_cutoff = static_cast<int>(get_integer_or(*k, "kernel", "fourier_cutoff", 64));
        try {
            rc.kernel.validate();
        } catch (const std::exception& e) {
            throw ConfigError(std::string("config error at kernel: ") + e.what());
        }
    }

    if (const json* n = find(root, "noise")) {
        reject_unknown(*n, "noise", {"gamma", "k_max", "scale", "enabled", "seed"});
        rc.noise.gamma = get_number_or(*n, "noise", "gamma", 4.0);
        rc.noise.k_max = static_cast<int>(get_integer_or(*n, "noise", "k_max", 8));
        rc.noise.global_scale = get_number_or(*n, "noise", "scale", 1.0);
        rc.noise_enabled = get_bool_or(*n, "noise", "enabled", true);
        rc.noise_seed = static_cast<std::uint64_t>(get_integer_or(*n, "noise", "seed", 1));
        try {
            rc.noise.validate();
        } catch (const std::exception& e) {
            throw ConfigError(std::string("config error at noise: ") + e.what());
        }
    }

    if (const json* i = find(root, "integrator")) {
        reject_unknown(*i, "integrator", {"scheme", "dt", "tol", "T", "substep"});
        rc.scheme = get_string_or(*i, "integrator", "scheme", "rk45");
        if (rc.scheme != "rk4" && rc.scheme != "rk45" && rc.scheme != "euler_maruyama" &&
            rc.scheme != "strat_heun")
            throw ConfigError("config error at integrator.scheme: expected rk4 | rk45 | "
                              "euler_maruyama | strat_heun");
        rc.integrator.scheme_det = rc.scheme == "rk4" ? DetScheme::RK4 : DetScheme::AdaptiveRK45;
        rc.integrator.scheme_sto =
            rc.scheme == "strat_heun" ? StoScheme::StratHeun : StoScheme::EulerMaruyama;
        rc.integrator.dt = get_number_or(*i, "integrator", "dt", 1e-3);
        rc.integrator.adaptive_tol = get_number_or(*i, "integrator", "tol", 1e-10);
        rc.integrator.t_end = get_number_or(*i, "integrator", "T", 1.0);
        rc.integrator.substep_threshold = get_number_or(*i, "integrator", "substep", 0.0);
        try {
            rc.integrator.validate();
        } catch (const std::exception& e) {
            throw ConfigError(std::string("config error at integrator: ") + e.what());
        }
    }

    if (const json* s = find(root, "stopping")) {
        reject_unknown(*s, "stopping", {"delta_stop", "enabled"});
        rc.stopping.delta_stop = get_number_or(*s, "stopping", "delta_stop", 1e-3);
        rc.stopping.enabled = get_bool_or(*s, "stopping", "enabled", true);
        try {
            rc.stopping.validate();
        } catch (const std::exception& e) {
            throw ConfigError(std::string("config error at stopping: ") + e.what());
        }
    }

    if (const json* v = find(root, "vortices")) {
        reject_unknown(*v, "vortices", {"positions", "intensities"});
        if (const json* p = find(*v, "positions")) rc.vortex_positions = get_point_list(*p, "vortices.positions");
        if (const json* xi = find(*v, "intensities"))
            rc.vortex_intensities = get_number_list(*xi, "vortices.intensities");
    }

    if (const json* c = find(root, "collapse")) {
        reject_unknown(*c, "collapse", {"distances", "positions", "xi2", "lambda"});
        rc.has_collapse = true;
        if (const json* d = find(*c, "distances")) {
            const auto v = get_number_list(*d, "collapse.distances");
            if (v.size() != 3)
                throw ConfigError("config error at collapse.distances: expected [l12, l23, l31]");
            rc.collapse_distances = {v[0], v[1], v[2]};
        }
        if (const json* p = find(*c, "positions")) {
            const auto v = get_point_list(*p, "collapse.positions");
            if (v.size() != 3) throw ConfigError("config error at collapse.positions: expected three points");
            rc.collapse_positions = {v[0], v[1], v[2]};
        }
        if (!rc.collapse_distances && !rc.collapse_positions)
            throw ConfigError("config error at collapse: need distances or positions");
        if (rc.collapse_distances && rc.collapse_positions)
            throw ConfigError("config error at collapse: give distances or positions, not both");
        rc.collapse_xi2 = get_number_or(*c, "collapse", "xi2", 1.0);
        rc.collapse_lambda = get_number_or(*c, "collapse", "lambda", 100.0);
    }

    if (const json* e = find(root, "ensemble")) {
        reject_unknown(*e, "ensemble",
                       {"n_samples", "seed", "delta_grid", "workers", "horizon", "init",
                        "reject_near_diagonal", "n_vortices", "intensities"});
        rc.has_ensemble = true;
        rc.ensemble.n_samples = get_integer_or(*e, "ensemble", "n_samples", 100);
        rc.ensemble.master_seed = static_cast<std::uint64_t>(get_integer_or(*e, "ensemble", "seed", 1));
        if (const json* g = find(*e, "delta_grid"))
            rc.ensemble.delta_grid = get_number_list(*g, "ensemble.delta_grid");
        rc.ensemble.workers = static_cast<int>(get_integer_or(*e, "ensemble", "workers", 0));
        rc.ensemble.horizon_T = get_number_or(*e, "ensemble", "horizon", 1.0);
        const std::string init = get_string_or(*e, "ensemble", "init", "uniform");
        if (init == "uniform") rc.ensemble.init = EnsembleInit::UniformOffDiagonal;
        else if (init == "fixed") rc.ensemble.init = EnsembleInit::Fixed;
        else throw ConfigError("config error at ensemble.init: expected \"uniform\" or \"fixed\"");
        rc.ensemble.reject_near_diagonal = get_bool_or(*e, "ensemble", "reject_near_diagonal", true);
        rc.ensemble.n_vortices = static_cast<int>(get_integer_or(*e, "ensemble", "n_vortices", 3));
        if (const json* xi = find(*e, "intensities"))
            rc.ensemble.intensities = get_number_list(*xi, "ensemble.intensities");
    }

    if (const json* o = find(root, "output")) {
        reject_unknown(*o, "output", {"dir", "cadence"});
        rc.output_dir = get_string_or(*o, "output", "dir", ".");
        rc.output_cadence = static_cast<int>(get_integer_or(*o, "output", "cadence", 1));
        if (rc.output_cadence < 1) throw ConfigError("config error at output.cadence: must be >= 1");
    }

    return rc;
}

inline RunConfig parse_run_config_text(const std::string& text) {
    json root;
    try {
        root = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config error: malformed JSON: ") + e.what());
    }
    return parse_run_config(root);
}

}  // namespace msqg
