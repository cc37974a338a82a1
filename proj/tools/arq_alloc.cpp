// arq-alloc: batch front-end for ARQ-round and deadline allocation studies.
//
// Exit codes: 0 success, 1 configuration/parse error, 2 infeasible problem,
// 3 domain/stability error, 4 internal error.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "arq/experiment.hpp"

namespace {

struct CliOverrides {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out_dir;
    std::optional<std::string> format;
};

void attach_common_options(CLI::App* sub, CliOverrides& overrides) {
    sub->add_option("--config", overrides.config_path, "experiment configuration file")
        ->required();
    sub->add_option("--seed", overrides.seed,
                    "override both the solver and the simulation seed");
    sub->add_option("--out", overrides.out_dir, "override the output directory");
    sub->add_option("--format", overrides.format, "output format: csv or json")
        ->check(CLI::IsMember({"csv", "json"}));
}

int run_command(arq::Command command, const CliOverrides& overrides) {
    std::ifstream in(overrides.config_path, std::ios::binary);
    if (!in) {
        std::cerr << "error: cannot read config file '" << overrides.config_path << "'\n";
        return 1;
    }
    std::stringstream buffer;
    buffer << in.rdbuf();

    arq::ExperimentSpec spec = arq::parse_spec(buffer.str());
    spec.command = command;
    if (overrides.seed) {
        spec.sim_seed = *overrides.seed;
        spec.solver.seed = *overrides.seed;
    }
    if (overrides.out_dir) spec.output.directory = *overrides.out_dir;
    if (overrides.format)
        spec.output.format =
            *overrides.format == "json" ? arq::OutputFormat::Json : arq::OutputFormat::Csv;

    const arq::RunReport report = arq::run(spec);
    for (const auto& file : report.files) std::cout << file << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"ARQ-round and deadline allocation for multihop MIMO relay networks"};
    app.require_subcommand(1);

    const std::pair<std::string, arq::Command> commands[] = {
        {"dmt", arq::Command::Dmt},           {"cost", arq::Command::Cost},
        {"optimize", arq::Command::Optimize}, {"simulate", arq::Command::Simulate},
        {"validate", arq::Command::Validate}, {"sweep", arq::Command::Sweep},
    };
    const char* descriptions[] = {
        "per-link diversity-multiplexing breakpoint tables",
        "cost breakdown of a given allocation",
        "solve the allocation problem",
        "Monte-Carlo tandem simulation: tail tables and decay estimates",
        "side-by-side analytic vs empirical validation table",
        "one optimization per sweep value",
    };

    CliOverrides overrides;
    arq::Command selected = arq::Command::Optimize;
    int idx = 0;
    for (const auto& [name, command] : commands) {
        CLI::App* sub = app.add_subcommand(name, descriptions[idx++]);
        attach_common_options(sub, overrides);
        const arq::Command cmd = command;
        sub->callback([&selected, cmd] { selected = cmd; });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        return run_command(selected, overrides);
    } catch (const arq::parse_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const arq::infeasible_error& e) {
        std::cerr << "error: infeasible: " << e.what() << "\n";
        return 2;
    } catch (const std::domain_error& e) {
        std::cerr << "error: domain: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    }
}
