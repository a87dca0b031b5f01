#include <cstdlib>
#include <iostream>

#include <CLI11.hpp>

#include "nnsym/config.hpp"
#include "nnsym/runner.hpp"

int main(int argc, char** argv) {
    CLI::App app{"symmetry checks for neural-network ensembles via Monte-Carlo correlators"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir = "out";
    std::string data_dir;
    std::uint64_t seed = 0;
    int workers = 1;
    std::size_t samples = 0;

    if (const char* env = std::getenv("NNSYM_DATA_DIR")) data_dir = env;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "experiment config (JSON)")->required();
        cmd->add_option("--seed", seed, "master seed");
        cmd->add_option("--workers", workers, "worker threads")->check(CLI::PositiveNumber);
        cmd->add_option("--out", out_dir, "output directory");
        cmd->add_option("--samples", samples, "override every sample count");
        cmd->add_option("--data-dir", data_dir, "dataset directory (IDX files)");
    };
    for (const std::string& name : nnsym::subcommand_names()) add_common(app.add_subcommand(name));

    auto* rerun = app.add_subcommand("rerun", "re-run a previous run from its manifest");
    std::string manifest_path;
    rerun->add_option("--manifest", manifest_path, "manifest.json of a previous run")
        ->required();
    rerun->add_option("--out", out_dir, "output directory");
    rerun->add_option("--data-dir", data_dir, "dataset directory (IDX files)");

    CLI11_PARSE(app, argc, argv);

    try {
        nnsym::RunOptions options;
        if (rerun->parsed()) {
            options = nnsym::options_from_manifest(manifest_path, out_dir);
        } else {
            options.subcommand = app.get_subcommands().front()->get_name();
            options.config = nnsym::json::parse(nnsym::read_text_file(config_path));
            options.seed = seed;
            options.workers = workers;
            if (samples > 0) options.samples_override = samples;
            options.out_dir = out_dir;
        }
        options.data_dir = data_dir;
        nnsym::run_subcommand(options);
    } catch (const nnsym::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    std::cout << "wrote " << out_dir << "/result.json\n";
    return 0;
}
