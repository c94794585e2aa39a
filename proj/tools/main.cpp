#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "reportgap/cli/pipeline.hpp"

namespace {

int fail(int code, const char* kind, const std::exception& e) {
    std::cerr << "reportgap: " << kind << ": " << e.what() << "\n";
    return code;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Reporting-gap estimation pipeline for school closure studies"};
    app.require_subcommand(1, 1);
    app.set_version_flag("--version", reportgap::cli::tool_version);

    std::string config_path;
    std::vector<std::string> sets;
    std::string output_dir;
    int threads = 0;
    long long replicates = 0;
    long long seed = -1;
    for (const auto& name : reportgap::cli::subcommands()) {
        auto* sub = app.add_subcommand(name, "run the " + name + " step");
        sub->add_option("-c,--config", config_path, "YAML run configuration");
        sub->add_option("--set", sets, "override a config key, e.g. --set bootstrap.replicates=100")
            ->type_name("KEY=VALUE");
        sub->add_option("-o,--output", output_dir, "output directory (runtime.output_dir)");
        sub->add_option("-j,--threads", threads, "worker threads (runtime.threads)");
        sub->add_option("-B,--replicates", replicates, "bootstrap replicates (bootstrap.replicates)");
        sub->add_option("--seed", seed, "bootstrap seed (bootstrap.seed)");
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }
    const std::string command = app.get_subcommands().front()->get_name();

    try {
        std::vector<std::pair<std::string, std::string>> overrides;
        for (const auto& s : sets) {
            const auto eq = s.find('=');
            if (eq == std::string::npos || eq == 0)
                throw reportgap::ConfigError("--set expects KEY=VALUE, got '" + s + "'");
            overrides.emplace_back(s.substr(0, eq), s.substr(eq + 1));
        }
        if (!output_dir.empty()) overrides.emplace_back("runtime.output_dir", "'" + output_dir + "'");
        if (threads > 0) overrides.emplace_back("runtime.threads", std::to_string(threads));
        if (replicates > 0) overrides.emplace_back("bootstrap.replicates", std::to_string(replicates));
        if (seed >= 0) overrides.emplace_back("bootstrap.seed", std::to_string(seed));
        std::optional<std::filesystem::path> file;
        if (!config_path.empty()) file = config_path;
        const auto cfg = reportgap::cli::load_config(file, overrides);
        reportgap::cli::run(command, cfg);
    } catch (const reportgap::ConfigError& e) {
        return fail(2, "config error", e);
    } catch (const reportgap::DataError& e) {
        return fail(3, "data error", e);
    } catch (const reportgap::NumericalError& e) {
        return fail(4, "numerical error", e);
    } catch (const std::exception& e) {
        return fail(1, "error", e);
    }
    return 0;
}
