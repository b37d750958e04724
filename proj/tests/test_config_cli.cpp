#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cgcnn/bank_io.hpp"
#include "cgcnn/error.hpp"
#include "cgcnn/commands.hpp"
#include "cgcnn/config.hpp"
#include "cgcnn/image_io.hpp"
#include "cgcnn/synthetic.hpp"

using namespace cgcnn;
namespace fs = std::filesystem;

namespace {

const fs::path& work_dir() {
    static const fs::path dir = [] {
        const fs::path d = fs::temp_directory_path() / "cgcnn_test_cli";
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

fs::path image_fixture() {
    const fs::path dir = work_dir() / "images";
    if (!fs::exists(dir)) {
        fs::create_directories(dir);
        const ImageStore store = synthetic::oriented_bar_images(3, 96, 96, 6, 7);
        for (std::size_t i = 0; i < store.size(); ++i) write_rgb_png(store.images[i], dir / ("img" + std::to_string(i) + ".png"));
    }
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

struct Run {
    int status;
    std::string out;
    std::string err;
};

Run cli(const std::string& args) {
    const char* exe = std::getenv("CGCNN_CLI");
    REQUIRE_MESSAGE(exe != nullptr, "CGCNN_CLI must point at the command-line binary");
    const fs::path out = work_dir() / "stdout.txt";
    const fs::path err = work_dir() / "stderr.txt";
    const std::string cmd = std::string(exe) + " " + args + " >" + out.string() + " 2>" + err.string();
    const int raw = std::system(cmd.c_str());
    return {WEXITSTATUS(raw), slurp(out), slurp(err)};
}

std::string quick_train(const fs::path& out) {
    return "train --seed 3 --out " + out.string() + " --set paths.dataset=" + image_fixture().string() +
           " sampler.C=4 sampler.N=4 bank.d=8 trainer.max_iterations=2 trainer.checkpoint_every=1";
}

}  // namespace

TEST_CASE("default configuration values") {
    const nlohmann::json rgb = default_config(RunMode::Train);
    CHECK(rgb["sampler"]["C"] == 100);
    CHECK(rgb["sampler"]["N"] == 16);
    CHECK(rgb["sampler"]["a"] == 19);
    CHECK(rgb["sampler"]["g"] == 25);
    CHECK(rgb["bank"]["d"] == 64);
    CHECK(rgb["bank"]["w"] == 11);
    CHECK(rgb["bank"]["s"] == 4);
    const nlohmann::json hsi = default_config(RunMode::Hsi, true);
    CHECK(hsi["sampler"]["C"] == 20);
    CHECK(hsi["sampler"]["N"] == 25);
    CHECK(hsi["sampler"]["a"] == 3);
    CHECK(hsi["sampler"]["g"] == 2);
    CHECK(hsi["bank"]["d"] == 30);
    CHECK(hsi["bank"]["w"] == 1);
}

TEST_CASE("overrides resolve into typed settings") {
    const nlohmann::json user = {{"paths", {{"dataset", "imgs"}}}, {"trainer", {{"max_iterations", 7}}}};
    const RunConfig cfg = resolve_config(RunMode::Train, user,
                                         {"trainer.max_iterations=5", "trainer.head_optimizer.kind=sgd",
                                          "trainer.head_optimizer.lr=0.5", "seed=42"});
    CHECK(cfg.trainer.max_iterations == 5);
    CHECK(cfg.trainer.head_optimizer.kind == OptimizerKind::Sgd);
    CHECK(cfg.trainer.head_optimizer.learning_rate == 0.5);
    CHECK(cfg.seed == 42);
    CHECK(cfg.trainer.seed == 42);
    CHECK(cfg.paths.dataset == "imgs");
    CHECK(cfg.geometry == BankGeometry{64, 11, 3, 4});
    CHECK(cfg.resolved["trainer"]["max_iterations"] == 5);
}

TEST_CASE("hyperspectral training switches the defaults") {
    const RunConfig cfg = resolve_config(RunMode::Train, {},
                                         {"sampler.mode=hsi", "paths.cube=c.raw", "paths.labels=l.png"});
    CHECK(cfg.sampler.mode == SamplerMode::Hsi);
    CHECK(cfg.sampler.patch == 3);
    CHECK(cfg.sampler.channels == 220);
    CHECK(cfg.geometry == BankGeometry{30, 1, 220, 1});
}

TEST_CASE("configuration errors name the key") {
    auto message = [](const nlohmann::json& user, const std::vector<std::string>& overrides) -> std::string {
        try {
            resolve_config(RunMode::Train, user, overrides);
        } catch (const ConfigError& e) {
            return e.what();
        }
        return "";
    };
    const nlohmann::json ok = {{"paths", {{"dataset", "d"}}}};
    CHECK(message(ok, {"trainer.max_iteration=5"}).find("trainer.max_iteration") != std::string::npos);
    CHECK(message(ok, {"trainer.minibatch=\"big\""}).find("trainer.minibatch") != std::string::npos);
    CHECK(message(ok, {"trainer.minibatch=-3"}).find("trainer.minibatch") != std::string::npos);
    CHECK(message({}, {}).find("paths.dataset") != std::string::npos);
    CHECK(message(ok, {"novalue"}).find("novalue") != std::string::npos);
    CHECK(message({{"bogus", 1}}, {}).find("bogus") != std::string::npos);
}

TEST_CASE("config files accept comments and must agree on the mode") {
    const fs::path file = work_dir() / "run.json";
    std::ofstream(file) << "{\n  // training images\n  \"paths\": {\"dataset\": \"imgs\"},\n  \"sampler\": {\"C\": 12}\n}\n";
    const RunConfig cfg = parse_config(RunMode::Train, file, {});
    CHECK(cfg.sampler.classes == 12);
    std::ofstream(file) << "{\"mode\": \"texture\"}";
    CHECK_THROWS_AS(parse_config(RunMode::Train, file, {}), ConfigError);
    CHECK_THROWS_AS(parse_config(RunMode::Train, work_dir() / "absent.json", {}), ConfigError);
}

TEST_CASE("cli: train writes its artifacts") {
    const fs::path out = work_dir() / "train_a";
    const Run run = cli(quick_train(out));
    INFO(run.err);
    REQUIRE(run.status == 0);
    CHECK(run.out.rfind("train: iterations=2", 0) == 0);
    for (const char* name : {"manifest.json", "bank.bin", "trace.csv", "filters.png", "checkpoint_00001.bin",
                             "checkpoint_00002.bin"}) {
        CHECK_MESSAGE(fs::exists(out / name), name);
    }
    const ConvFeatureBank bank = read_bank(out / "bank.bin");
    CHECK(bank.geometry() == BankGeometry{8, 11, 3, 4});
    const auto manifest = nlohmann::json::parse(slurp(out / "manifest.json"));
    CHECK(manifest["sampler"]["C"] == 4);
    CHECK(manifest["seed"] == 3);
    std::istringstream trace(slurp(out / "trace.csv"));
    std::string line;
    std::size_t lines = 0;
    while (std::getline(trace, line)) ++lines;
    CHECK(lines == 3);
}

TEST_CASE("cli: repeated runs are byte-identical") {
    const fs::path a = work_dir() / "repeat_a";
    const fs::path b = work_dir() / "repeat_b";
    REQUIRE(cli(quick_train(a)).status == 0);
    REQUIRE(cli(quick_train(b)).status == 0);
    for (const char* name : {"bank.bin", "trace.csv", "filters.png", "checkpoint_00001.bin"}) {
        CHECK_MESSAGE(slurp(a / name) == slurp(b / name), name);
    }
}

TEST_CASE("cli: export-weights and error exits") {
    const fs::path trained = work_dir() / "train_for_export";
    REQUIRE(cli(quick_train(trained)).status == 0);
    const fs::path out = work_dir() / "export";
    const Run ok = cli("export-weights --bank " + (trained / "bank.bin").string() + " --out " + out.string());
    CHECK(ok.status == 0);
    CHECK(fs::exists(out / "filters.png"));

    const Run missing = cli("export-weights --bank " + (work_dir() / "nope.bin").string() + " --out " + out.string());
    CHECK(missing.status != 0);
    CHECK(missing.err.find("bank file not found") != std::string::npos);

    const Run unknown = cli(quick_train(work_dir() / "bad") + " trainer.no_such_key=1");
    CHECK(unknown.status != 0);
    CHECK(unknown.err.find("trainer.no_such_key") != std::string::npos);

    CHECK(cli("").status != 0);
    CHECK(cli("frobnicate").status != 0);
}

TEST_CASE("commands run in-process") {
    const fs::path textures = work_dir() / "textures";
    fs::create_directories(textures);
    const auto images = synthetic::textures(3, 96, 9);
    for (std::size_t i = 0; i < images.size(); ++i) write_gray_png(images[i], textures / ("t" + std::to_string(i) + ".png"));
    const fs::path trained = work_dir() / "train_for_texture";
    REQUIRE(cli(quick_train(trained)).status == 0);
    const RunConfig cfg = resolve_config(RunMode::Texture, {},
                                         {"paths.textures=" + nlohmann::json(textures.string()).dump(),
                                          "paths.bank=" + nlohmann::json((trained / "bank.bin").string()).dump(),
                                          "paths.out=" + nlohmann::json((work_dir() / "texture_out").string()).dump(),
                                          "texture.runs=2", "texture.head.epochs=5"});
    const CommandOutcome outcome = run_command(cfg);
    CHECK(outcome.summary.rfind("texture: accuracy=", 0) == 0);
    const auto report = nlohmann::json::parse(slurp(work_dir() / "texture_out" / "report.json"));
    CHECK(report.contains("frozen_features"));
    CHECK(report.contains("raw_pixel_1nn"));
    CHECK(fs::exists(work_dir() / "texture_out" / "confusion.csv"));
}
