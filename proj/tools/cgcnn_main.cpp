// Command-line entry point: train, utility, texture, hsi, export-weights.
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "cgcnn/commands.hpp"
#include "cgcnn/config.hpp"

namespace {

struct CommonFlags {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::string bank;
    std::vector<std::string> sets;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
    cmd->add_option("--config", flags.config, "JSON configuration file");
    cmd->add_option("--seed", flags.seed, "master seed (overrides the config)");
    cmd->add_option("--out", flags.out, "output directory (overrides paths.out)");
    cmd->add_option("--bank", flags.bank, "bank file (overrides paths.bank)");
    cmd->add_option("--set", flags.sets, "override one key, e.g. --set trainer.max_iterations=5")->take_all();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Train and evaluate convolutional feature banks"};
    app.require_subcommand(1);

    CommonFlags flags;
    const std::vector<std::pair<std::string, std::string>> commands{
        {"train", "train a feature bank with EM iterations over contextual groups"},
        {"utility", "transfer-utility curves for a trained bank on held-out images"},
        {"texture", "frozen-feature texture classification benchmark"},
        {"hsi", "hyperspectral pixel classification with frozen features and k-NN"},
        {"export-weights", "render the bank's filters as a PNG grid"},
    };
    for (const auto& [name, help] : commands) add_common(app.add_subcommand(name, help), flags);

    CLI11_PARSE(app, argc, argv);

    try {
        const std::string name = app.get_subcommands().front()->get_name();
        std::vector<std::string> overrides = flags.sets;
        if (flags.seed) overrides.push_back("seed=" + std::to_string(*flags.seed));
        if (!flags.out.empty()) overrides.push_back("paths.out=" + nlohmann::json(flags.out).dump());
        if (!flags.bank.empty()) overrides.push_back("paths.bank=" + nlohmann::json(flags.bank).dump());
        std::optional<std::filesystem::path> file;
        if (!flags.config.empty()) file = flags.config;
        const cgcnn::RunConfig config = cgcnn::parse_config(cgcnn::run_mode_from_string(name), file, overrides);
        const cgcnn::CommandOutcome outcome = cgcnn::run_command(config);
        std::cout << outcome.summary << std::endl;
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return 1;
    }
}
