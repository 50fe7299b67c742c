// msqg: point-vortex simulator for the modified SQG equations.
//
// Subcommands: simulate | collapse | ensemble | selftest; see README.md.

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "msqg/app.hpp"

namespace {

int load_config(const std::string& path, const std::optional<long>& seed_override,
                const std::optional<std::string>& out_override, msqg::RunConfig& rc) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        std::cerr << "config error: cannot open " << path << "\n";
        return msqg::exit_code::config;
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    try {
        rc = msqg::parse_run_config_text(buf.str());
    } catch (const msqg::ConfigError& e) {
        std::cerr << e.what() << "\n";
        return msqg::exit_code::config;
    }
    if (seed_override) {
        rc.noise_seed = static_cast<std::uint64_t>(*seed_override);
        rc.ensemble.master_seed = static_cast<std::uint64_t>(*seed_override);
    }
    if (out_override) rc.output_dir = *out_override;
    return msqg::exit_code::ok;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Point-vortex dynamics of the modified SQG equations: deterministic runs, "
                 "noise-regularized runs, the three-vortex collapse construction, and "
                 "near-collision Monte Carlo"};
    app.require_subcommand(1);

    std::string config_path;
    std::optional<long> seed;
    std::optional<std::string> out_dir;
    std::optional<double> lambda;
    bool simulate_flag = false;

    auto add_common = [&](CLI::App* cmd, bool config_required = true) {
        auto* opt = cmd->add_option("--config", config_path, "JSON configuration file");
        if (config_required) opt->required();
        cmd->add_option("--seed", seed, "override the configured seed");
        cmd->add_option("--out", out_dir, "output directory (overrides output.dir)");
    };

    CLI::App* sim = app.add_subcommand("simulate", "integrate a configured vortex system; writes "
                                                   "trajectory.csv and run_meta.json");
    add_common(sim);

    CLI::App* col = app.add_subcommand("collapse", "solve the three-vortex collapse construction; "
                                                   "writes collapse_report.json");
    add_common(col);
    col->add_option("--lambda", lambda, "torus scaling parameter (overrides collapse.lambda)");
    col->add_flag("--simulate", simulate_flag, "also integrate the collapse trajectory");

    CLI::App* ens = app.add_subcommand("ensemble", "near-collision Monte Carlo; writes "
                                                   "ensemble_report.json");
    add_common(ens);

    app.add_subcommand("selftest", "run the fast invariant battery");

    CLI11_PARSE(app, argc, argv);

    if (app.got_subcommand("selftest")) return msqg::cmd_selftest();

    msqg::RunConfig rc;
    const int rcode = load_config(config_path, seed, out_dir, rc);
    if (rcode != msqg::exit_code::ok) return rcode;

    if (app.got_subcommand("simulate")) return msqg::cmd_simulate(rc);
    if (app.got_subcommand("collapse")) return msqg::cmd_collapse(rc, simulate_flag, lambda);
    if (app.got_subcommand("ensemble")) return msqg::cmd_ensemble(rc);
    return msqg::exit_code::config;
}
