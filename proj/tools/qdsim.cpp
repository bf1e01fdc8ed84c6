// qdsim: pulse-driven quantum dot + cavity + phonon bath simulator.
//
//   qdsim run <config>
//   qdsim sweep <config> --axis <name> --values v1,v2,...
//   qdsim check <config>
//   qdsim kernel <config>
//
// Exit codes: 0 ok, 2 config/validation, 3 numerical, 4 io, 5 invariant tolerance exceeded, 1 other.

#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"
#include "qdsim/error.hpp"
#include "qdsim/scenario.hpp"

namespace {

int exit_code(qdsim::ErrorCategory c) {
    switch (c) {
        case qdsim::ErrorCategory::Validation:
        case qdsim::ErrorCategory::InvalidParameter:
        case qdsim::ErrorCategory::Shape:
        case qdsim::ErrorCategory::Domain: return 2;
        case qdsim::ErrorCategory::NumericalAccuracy:
        case qdsim::ErrorCategory::IntegrationDiverged: return 3;
        case qdsim::ErrorCategory::Io: return 4;
    }
    return 1;
}

int report_runs(const std::vector<qdsim::RunManifest>& runs, const std::string& dir) {
    int code = 0;
    for (const auto& m : runs) {
        std::cout << m.config.at("name").get<std::string>() << ": " << m.status;
        for (const auto& o : m.outputs) std::cout << "  " << dir << "/" << o;
        std::cout << "  (" << m.wall_time_s << " s)\n";
        for (const auto& f : m.failures) std::cout << "  failed: " << f << "\n";
        if (m.status != "ok") code = 5;
    }
    return code;
}

nlohmann::json read_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw qdsim::Error(qdsim::ErrorCategory::Io, "cannot open config " + path);
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw qdsim::Error(qdsim::ErrorCategory::Validation, std::string("config is not valid JSON: ") + e.what());
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Quantum-dot exciton, cavity and phonon bath simulator"};
    app.require_subcommand(1);

    std::string config_path;
    std::string axis;
    std::vector<double> values;

    auto* run = app.add_subcommand("run", "Run a scenario (or the sweep it declares)");
    run->add_option("config", config_path, "Scenario JSON")->required();

    auto* sweep = app.add_subcommand("sweep", "Run a scenario for each value of one parameter");
    sweep->add_option("config", config_path, "Scenario JSON")->required();
    sweep->add_option("--axis", axis, "amplitude, width, detuning, coupling, temperature or n_trunc")->required();
    sweep->add_option("--values", values, "Comma-separated values")->delimiter(',');

    auto* check = app.add_subcommand("check", "Validate a scenario and print resolved units");
    check->add_option("config", config_path, "Scenario JSON")->required();

    auto* kernel = app.add_subcommand("kernel", "Tabulate K(t) and Gamma(t) for a scenario");
    kernel->add_option("config", config_path, "Scenario JSON")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (check->parsed()) {
            const auto report = qdsim::check(read_json(config_path));
            std::cout << (report.valid ? "valid" : "invalid") << "\n";
            for (const auto& e : report.errors) std::cout << "error: " << e << "\n";
            for (const auto& w : report.warnings) std::cout << "warning: " << w << "\n";
            for (const auto& i : report.info) std::cout << "  " << i << "\n";
            return report.valid ? 0 : 2;
        }

        auto config = qdsim::load_config(config_path);
        const std::string dir = qdsim::resolve_output_dir(config).string();
        if (run->parsed()) return report_runs(qdsim::run(config), dir);
        if (kernel->parsed()) {
            config.mode = qdsim::Mode::KernelOnly;
            config.sweep.reset();
            return report_runs(qdsim::run(config), dir);
        }
        if (sweep->parsed()) {
            const auto result = qdsim::sweep(config, axis, values);
            std::cout << "summary: " << result.summary.string() << "\n";
            return report_runs(result.runs, dir);
        }
    } catch (const qdsim::Error& e) {
        std::cerr << "qdsim: " << qdsim::to_string(e.category()) << ": " << e.what() << "\n";
        return exit_code(e.category());
    } catch (const std::exception& e) {
        std::cerr << "qdsim: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
