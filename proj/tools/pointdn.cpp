#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pointdn/experiment.hpp"

namespace {

const std::vector<std::string> kCommands{"forward",     "dn",          "verify-identities",
                                         "measure-data", "reconstruct", "runge-demo"};

void print_error(pointdn::ErrorKind kind, const std::string& message, int code) {
    const pointdn::Json record = {
        {"error", std::string(pointdn::to_string(kind))}, {"message", message}, {"exit_code", code}};
    std::cerr << record.dump() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"pointdn: semilinear DN-map laboratory"};
    app.require_subcommand(1);
    std::string config_path;
    std::vector<std::string> overrides;
    bool check = false;
    for (const auto& name : kCommands) {
        auto* sub = app.add_subcommand(name);
        sub->add_option("--config", config_path, "JSON config file")->required();
        sub->add_option("--set", overrides, "override a config key, key=value (repeatable)");
        sub->add_flag("--check", check, "exit 4 when an acceptance threshold fails");
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : pointdn::kExitConfig;
    }
    const std::string command = app.get_subcommands().front()->get_name();

    pointdn::Json cfg;
    try {
        pointdn::Json user = pointdn::unwrap_manifest(pointdn::load_config(config_path));
        for (const auto& o : overrides) pointdn::apply_override(user, o);
        cfg = pointdn::effective_config(command, user);
    } catch (const pointdn::Error& e) {
        print_error(e.kind(), e.what(), pointdn::kExitConfig);
        return pointdn::kExitConfig;
    }

    pointdn::RunOutcome outcome;
    try {
        outcome = pointdn::run_command(command, cfg, check);
    } catch (const pointdn::Error& e) {
        const int code = pointdn::exit_code_for(e.kind());
        print_error(e.kind(), e.what(), code);
        return code;
    } catch (const std::exception& e) {
        print_error(pointdn::ErrorKind::Io, e.what(), pointdn::kExitSolver);
        return pointdn::kExitSolver;
    }
    if (outcome.manifest.contains("error")) {
        std::cerr << outcome.manifest["error"].dump() << '\n';
    }
    for (const auto& c : outcome.manifest["checks"]) {
        std::cout << (c["passed"].get<bool>() ? "PASS " : "FAIL ") << c["name"].get<std::string>() << ": "
                  << c["detail"].get<std::string>() << '\n';
    }
    std::cout << "wrote " << cfg["output_dir"].get<std::string>() << "/manifest.json\n";
    return outcome.exit_code;
}
