#include <cstdio>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include <csprop/app.hpp>

int main(int argc, char** argv) {
    CLI::App app{"Semiclassical coherent-state propagators with caustic corrections"};
    app.require_subcommand(1);

    std::string config_path, out_dir;
    int threads = 1;
    double tol = 0.0;

    for (const char* name : {"propagate", "caustic-scan", "compare-oracle", "trajectory"}) {
        auto* sub = app.add_subcommand(name);
        sub->add_option("--config", config_path, "configuration file")->required();
        sub->add_option("--out", out_dir, "output directory (overrides [output] dir)");
        sub->add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
        sub->add_option("--tol", tol, "integrator tolerance (overrides [tolerances] integrator)");
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : csp::exit_config;
    }

    std::string command = app.get_subcommands().front()->get_name();
    csp::RunConfig cfg;
    try {
        cfg = csp::load_config(config_path);
        if (!out_dir.empty()) cfg.out_dir = out_dir;
        if (tol != 0.0) {
            if (!(tol >= 1e-13 && tol <= 1e-4)) throw csp::ConfigError(0, "--tol", "must lie in [1e-13, 1e-4]");
            cfg.solver.integrator_tol = tol;
        }
        cfg.build_model();
    } catch (const csp::Error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return csp::exit_config;
    }

    try {
        int rc = csp::run_command(command, cfg, threads);
        if (rc == csp::exit_all_failed) std::cerr << command << ": every point failed\n";
        return rc;
    } catch (const csp::Error& e) {
        std::cerr << command << ": " << e.kind() << ": " << e.what() << "\n";
        return 1;
    }
}
