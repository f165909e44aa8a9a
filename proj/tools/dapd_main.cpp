#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "dapd/cli.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Distributed aggregative optimization simulator"};
    app.require_subcommand(1);

    std::string config_path;
    auto* run_cmd = app.add_subcommand("run", "Run a configured experiment and emit a trace CSV");
    run_cmd->add_option("config", config_path, "JSON experiment config")->required();

    std::string certify_config;
    auto* certify_cmd =
        app.add_subcommand("certify", "Evaluate the linear-rate step-size certificate for a config");
    certify_cmd->add_option("config", certify_config, "JSON experiment config")->required();

    std::string scenario;
    std::string out_dir = ".";
    auto* repro_cmd =
        app.add_subcommand("reproduce", "Re-run a built-in experiment scenario (fig2 or fig3)");
    repro_cmd->add_option("scenario", scenario, "fig2 (step sweep) or fig3 (topology sweep)")
        ->required();
    repro_cmd->add_option("--out", out_dir, "Output directory for the CSV bundle");

    CLI11_PARSE(app, argc, argv);

    if (run_cmd->parsed()) return dapd::cmd_run(config_path, std::cout, std::cerr);
    if (certify_cmd->parsed()) return dapd::cmd_certify(certify_config, std::cout, std::cerr);
    if (repro_cmd->parsed()) return dapd::cmd_reproduce(scenario, out_dir, std::cout, std::cerr);
    return dapd::kExitConfigError;
}
