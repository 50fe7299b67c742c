// End-to-end CLI tests: drive the built binary through its exit-code contract.
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "msqg/app.hpp"

namespace fs = std::filesystem;

namespace {

struct CliResult {
    int exit_code;
    std::string err;
};

CliResult run_cli(const std::string& args, const fs::path& dir) {
    const fs::path errfile = dir / "stderr.txt";
    const std::string cmd =
        std::string(MSQG_CLI_PATH) + " " + args + " 2> " + errfile.string() + " > /dev/null";
    const int raw = std::system(cmd.c_str());
    std::ifstream ef(errfile);
    std::ostringstream buf;
    buf << ef.rdbuf();
    return {WEXITSTATUS(raw), buf.str()};
}

fs::path make_work_dir(const std::string& tag) {
    const fs::path dir = fs::temp_directory_path() / ("msqg_cli_" + tag);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

void write_file(const fs::path& p, const std::string& text) {
    std::ofstream out(p);
    out << text;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

}  // namespace

TEST_CASE("cli: selftest battery passes") {
    const fs::path dir = make_work_dir("selftest");
    CHECK(run_cli("selftest", dir).exit_code == 0);
}

TEST_CASE("cli: simulate a two-vortex orbit over one period") {
    const fs::path dir = make_work_dir("simulate");
    write_file(dir / "config.json", R"({
      "domain": {"kind": "plane"},
      "kernel": {"epsilon": 0.5},
      "integrator": {"scheme": "rk45", "dt": 0.01, "tol": 1e-10, "T": 3.14159265358979323846},
      "vortices": {"positions": [[0.5, 0.0], [-0.5, 0.0]], "intensities": [1.0, 1.0]},
      "output": {"dir": ")" + (dir / "out").string() + R"(", "cadence": 1}
    })");
    const CliResult r = run_cli("simulate --config " + (dir / "config.json").string(), dir);
    CHECK(r.exit_code == 0);

    // final CSV row returns to the initial positions within 1e-6
    const std::string csv = slurp(dir / "out" / "trajectory.csv");
    const auto last_nl = csv.find_last_of('\n', csv.size() - 2);
    std::istringstream row(csv.substr(last_nl + 1));
    std::string cell;
    std::vector<double> vals;
    while (std::getline(row, cell, ',')) vals.push_back(std::stod(cell));
    REQUIRE(vals.size() >= 5);
    CHECK(std::fabs(vals[1] - 0.5) < 1e-6);
    CHECK(std::fabs(vals[2]) < 1e-6);
    CHECK(std::fabs(vals[3] + 0.5) < 1e-6);
    CHECK(std::fabs(vals[4]) < 1e-6);
}

TEST_CASE("cli: simulate exits 2 on a collapse config, with the stop time in metadata") {
    const fs::path dir = make_work_dir("simulate_stop");
    write_file(dir / "config.json", R"({
      "domain": {"kind": "plane"},
      "kernel": {"epsilon": 0.5},
      "integrator": {"scheme": "rk45", "dt": 0.01, "tol": 1e-10, "T": 10.0},
      "stopping": {"delta_stop": 0.001, "enabled": true},
      "vortices": {"positions": [[-1.0, 0.0], [1.0, 0.0], [1.0, -1.4142135623730951]],
                    "intensities": [1.1556160804937574, 1.0, -0.51741900240180905]},
      "output": {"dir": ")" + (dir / "out").string() + R"("}
    })");
    const CliResult r = run_cli("simulate --config " + (dir / "config.json").string(), dir);
    CHECK(r.exit_code == 2);
    const auto meta = nlohmann::json::parse(slurp(dir / "out" / "run_meta.json"));
    CHECK(meta.at("stop_reason") == "hit_delta_stop");
    CHECK(std::fabs(meta.at("stop_time").get<double>() - 3.482262367518539) < 0.035);
}

TEST_CASE("cli: simulate exits 3 on a singularity with stopping disabled") {
    const fs::path dir = make_work_dir("simulate_singular");
    write_file(dir / "config.json", R"({
      "domain": {"kind": "plane"},
      "kernel": {"epsilon": 0.5},
      "integrator": {"scheme": "rk45", "dt": 0.01, "T": 1.0},
      "vortices": {"positions": [[0.1, 0.1], [0.1, 0.1]], "intensities": [1.0, -1.0]},
      "output": {"dir": ")" + (dir / "out").string() + R"("}
    })");
    const CliResult r = run_cli("simulate --config " + (dir / "config.json").string(), dir);
    CHECK(r.exit_code == 3);
    const auto meta = nlohmann::json::parse(slurp(dir / "out" / "run_meta.json"));
    CHECK(meta.at("stop_reason") == "singularity");
}

TEST_CASE("cli: collapse honors the orientation of explicit positions") {
    const fs::path dir = make_work_dir("collapse_orientation");
    // counter-clockwise orientation: expansion, no collapse
    write_file(dir / "ccw.json", R"({
      "kernel": {"epsilon": 0.5},
      "collapse": {"positions": [[-1.0, 0.0], [1.0, 0.0], [1.0, 1.4142135623730951]]},
      "output": {"dir": ")" + (dir / "out").string() + R"("}
    })");
    const CliResult r1 = run_cli("collapse --config " + (dir / "ccw.json").string(), dir);
    CHECK(r1.exit_code == 4);
    CHECK(r1.err.find("no collapse") != std::string::npos);
    // clockwise mirror: genuine collapse
    write_file(dir / "cw.json", R"({
      "kernel": {"epsilon": 0.5},
      "collapse": {"positions": [[-1.0, 0.0], [1.0, 0.0], [1.0, -1.4142135623730951]]},
      "output": {"dir": ")" + (dir / "out").string() + R"("}
    })");
    CHECK(run_cli("collapse --config " + (dir / "cw.json").string(), dir).exit_code == 0);
}

TEST_CASE("cli: config errors exit 1 and name the offending path") {
    const fs::path dir = make_work_dir("config_err");
    write_file(dir / "missing.json", R"({"kernel": {"c_eps": 1.0}})");
    const CliResult r1 = run_cli("simulate --config " + (dir / "missing.json").string(), dir);
    CHECK(r1.exit_code == 1);
    CHECK(r1.err.find("kernel.epsilon") != std::string::npos);

    write_file(dir / "broken.json", "{\"kernel\": {\"epsilon\": 0.5,}}");
    const CliResult r2 = run_cli("simulate --config " + (dir / "broken.json").string(), dir);
    CHECK(r2.exit_code == 1);
    CHECK(r2.err.find("line") != std::string::npos);

    const CliResult r3 = run_cli("simulate --config " + (dir / "nonexistent.json").string(), dir);
    CHECK(r3.exit_code == 1);
}

TEST_CASE("cli: collapse reports the reference intensities and scales onto the torus") {
    const fs::path dir = make_work_dir("collapse");
    write_file(dir / "config.json", R"({
      "kernel": {"epsilon": 0.5},
      "integrator": {"scheme": "rk45", "dt": 0.01, "tol": 1e-10, "T": 10.0},
      "stopping": {"delta_stop": 0.001, "enabled": true},
      "collapse": {"distances": [2.0, 1.4142135623730951, 2.449489742783178], "xi2": 1.0,
                    "lambda": 200.0},
      "output": {"dir": ")" + (dir / "out").string() + R"("}
    })");
    const CliResult r =
        run_cli("collapse --config " + (dir / "config.json").string() + " --simulate", dir);
    CHECK(r.exit_code == 0);
    const auto rep = nlohmann::json::parse(slurp(dir / "out" / "collapse_report.json"));
    CHECK(std::fabs(rep.at("xi1").get<double>() - 1.155616) < 1e-5);
    CHECK(std::fabs(rep.at("xi3").get<double>() + 0.517419) < 1e-5);
    CHECK(std::fabs(rep.at("t_star").get<double>() - 3.482262367518539) < 1e-9);
    for (const auto& c : rep.at("c_coeffs")) CHECK(c.get<double>() < 0.0);
    for (const auto& p : rep.at("scaled_positions")) {
        CHECK(std::fabs(p[0].get<double>()) < 0.25);
        CHECK(std::fabs(p[1].get<double>()) < 0.25);
    }
    CHECK(rep.at("simulation").at("stop_reason") == "hit_delta_stop");
    const double measured = rep.at("simulation").at("measured_stop_time").get<double>();
    CHECK(std::fabs(measured - 3.482262367518539) < 0.01 * 3.482262367518539);

    // equilateral input: degenerate geometry, exit 4
    write_file(dir / "equilateral.json", R"({
      "kernel": {"epsilon": 0.5},
      "collapse": {"distances": [1.0, 1.0, 1.0]},
      "output": {"dir": ")" + (dir / "out").string() + R"("}
    })");
    CHECK(run_cli("collapse --config " + (dir / "equilateral.json").string(), dir).exit_code == 4);
}

TEST_CASE("cli: ensemble smoke run, schema, and byte determinism") {
    const fs::path dir = make_work_dir("ensemble");
    write_file(dir / "config.json", R"({
      "domain": {"kind": "torus"},
      "kernel": {"epsilon": 0.5, "delta": 0.02, "lattice_M": 6},
      "noise": {"gamma": 4.0, "k_max": 8, "scale": 1.0},
      "integrator": {"scheme": "euler_maruyama", "dt": 0.001},
      "ensemble": {"n_samples": 16, "seed": 7, "delta_grid": [0.1, 0.05, 0.02], "horizon": 0.5,
                    "intensities": [1.155616, 1.0, -0.517419], "workers": 2},
      "output": {"dir": ")" + (dir / "out").string() + R"("}
    })");
    const CliResult r = run_cli("ensemble --config " + (dir / "config.json").string(), dir);
    CHECK(r.exit_code == 0);
    auto rep = nlohmann::json::parse(slurp(dir / "out" / "ensemble_report.json"));
    CHECK(rep.at("n_samples") == 16);
    REQUIRE(rep.at("per_delta").size() == 3);
    long prev_hits = 1 << 30;
    for (const auto& d : rep.at("per_delta")) {
        CHECK(d.contains("delta"));
        CHECK(d.contains("hits"));
        CHECK(d.contains("wilson_lo"));
        CHECK(d.contains("wilson_hi"));
        const long h = d.at("hits").get<long>();
        CHECK(h <= prev_hits);
        prev_hits = h;
    }

    // identical config twice: byte-identical minus the runtime block
    const std::string first = slurp(dir / "out" / "ensemble_report.json");
    const CliResult r2 = run_cli("ensemble --config " + (dir / "config.json").string(), dir);
    CHECK(r2.exit_code == 0);
    auto strip = [](std::string text) {
        auto j = nlohmann::ordered_json::parse(text);
        j.erase("runtime");
        return j.dump(2);
    };
    CHECK(strip(first) == strip(slurp(dir / "out" / "ensemble_report.json")));

    // invalid grid: exit 1
    write_file(dir / "badgrid.json", R"({
      "kernel": {"epsilon": 0.5, "delta": 0.02},
      "integrator": {"scheme": "euler_maruyama", "dt": 0.001},
      "ensemble": {"n_samples": 4, "delta_grid": [0.02, 0.05],
                    "intensities": [1.0, -1.0]}
    })");
    const CliResult r3 = run_cli("ensemble --config " + (dir / "badgrid.json").string(), dir);
    CHECK(r3.exit_code == 1);
    CHECK(r3.err.find("decreasing") != std::string::npos);
}

TEST_CASE("cli: seed override changes the ensemble draw") {
    const fs::path dir = make_work_dir("seed_override");
    write_file(dir / "config.json", R"({
      "kernel": {"epsilon": 0.5, "delta": 0.02, "lattice_M": 6},
      "integrator": {"scheme": "euler_maruyama", "dt": 0.001},
      "ensemble": {"n_samples": 4, "seed": 7, "delta_grid": [0.1, 0.05, 0.02], "horizon": 0.1,
                    "intensities": [1.0, -1.0, 0.5]},
      "output": {"dir": ")" + (dir / "out").string() + R"("}
    })");
    CHECK(run_cli("ensemble --config " + (dir / "config.json").string(), dir).exit_code == 0);
    const std::string a = slurp(dir / "out" / "ensemble_report.json");
    CHECK(run_cli("ensemble --config " + (dir / "config.json").string() + " --seed 8", dir)
              .exit_code == 0);
    const std::string b = slurp(dir / "out" / "ensemble_report.json");
    auto seed_of = [](const std::string& text) {
        return nlohmann::json::parse(text).at("seed").get<long>();
    };
    CHECK(seed_of(a) == 7);
    CHECK(seed_of(b) == 8);
}
