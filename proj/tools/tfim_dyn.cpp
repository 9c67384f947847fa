// tfim_dyn <command> <config.ini | manifest.json> [section.key=value ...]
// tfim_dyn cache <list|verify|purge> [config] [section.key=value ...]

#include <iostream>

#include "CLI11.hpp"
#include "tfim/cli.hpp"
#include "tfim/errors.hpp"

namespace cli = tfim::cli;

namespace {

int run(const std::string& command, const std::string& config_path, const std::vector<std::string>& overrides) {
    cli::RunConfig config;
    if (!config_path.empty()) config = cli::load_config(config_path);
    if (!config.command.empty() && config.command != command)
        throw tfim::ConfigError("config error: manifest was written by '" + config.command + "', not '" + command + "'");
    config.command = command;
    cli::apply_environment(config);
    for (const auto& o : overrides) cli::apply_override(config, o);
    const auto outcome = cli::run_command(config, std::cerr);
    for (const auto& f : outcome.files) std::cout << f.string() << "\n";
    if (!outcome.manifest.empty()) std::cout << outcome.manifest.string() << "\n";
    if (outcome.exit_code != cli::kExitOk) std::cerr << "error: " << outcome.message << "\n";
    return outcome.exit_code;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Dynamical phase diagram of the 2+1D transverse-field Ising model from equilibrium data"};
    app.require_subcommand(1);

    std::string config_path;
    std::vector<std::string> overrides;
    std::string selected;
    for (const auto& name : cli::commands()) {
        auto* sub = app.add_subcommand(name, "run the " + name + " pipeline");
        sub->add_option("config", config_path, "INI config or a manifest.json to replay")->required();
        sub->add_option("overrides", overrides, "section.key=value overrides");
        sub->callback([&selected, name] { selected = name; });
    }
    std::string action;
    auto* cache = app.add_subcommand("cache", "list, verify or purge the result cache");
    cache->add_option("action", action, "list | verify | purge")->required()->check(CLI::IsMember({"list", "verify", "purge"}));
    cache->add_option("config", config_path, "config supplying [run] cache_dir");
    cache->add_option("overrides", overrides, "section.key=value overrides");
    cache->callback([&selected] { selected = "cache"; });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? cli::kExitOk : cli::kExitConfig;
    }

    try {
        if (selected == "cache") {
            // A lone "section.key=value" lands in the config slot.
            if (config_path.find('=') != std::string::npos) {
                overrides.insert(overrides.begin(), config_path);
                config_path.clear();
            }
            cli::RunConfig config;
            if (!config_path.empty()) config = cli::load_config(config_path);
            config.command = "cache";
            cli::apply_environment(config);
            for (const auto& o : overrides) cli::apply_override(config, o);
            return cli::cache_command(action, config, std::cout);
        }
        return run(selected, config_path, overrides);
    } catch (const tfim::ConfigError& e) {
        std::cerr << e.what() << "\n";
        return cli::kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return cli::kExitRuntime;
    }
}
