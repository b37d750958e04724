// Acceptance runner: one PASS/FAIL/SKIP line per criterion.
//   cgcnn_acceptance            run all criteria
//   cgcnn_acceptance --only 4   run one; exit 0 pass, 1 fail, 77 skipped
// Criteria 6 and 7 need real data, located through environment variables:
//   CGCNN_TEXTURE_DIR       13 grayscale texture images
//   CGCNN_TEXTURE_BANK      bank trained on natural images, or
//   CGCNN_NATURAL_DIR       natural RGB images to train one with the default protocol
//   CGCNN_INDIAN_PINES_CUBE / CGCNN_INDIAN_PINES_LABELS
//   CGCNN_SALINAS_CUBE / CGCNN_SALINAS_LABELS

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cgcnn/bank_io.hpp"
#include "cgcnn/commands.hpp"
#include "cgcnn/config.hpp"
#include "cgcnn/evaluation.hpp"
#include "cgcnn/image_io.hpp"
#include "cgcnn/synthetic.hpp"
#include "cgcnn/trainer.hpp"
#include "test_util.hpp"

using namespace cgcnn;
namespace fs = std::filesystem;

namespace {

enum class Verdict { Pass, Fail, Skip };

struct Outcome {
    Verdict verdict;
    std::string detail;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

Outcome verdict(bool ok, std::string detail) { return {ok ? Verdict::Pass : Verdict::Fail, std::move(detail)}; }

std::optional<std::string> env(const char* name) {
    const char* v = std::getenv(name);
    if (v == nullptr || *v == '\0') return std::nullopt;
    return std::string(v);
}

// ---------------------------------------------------------------------------
// Shared synthetic fixture: oriented-bar images standing in for natural images.

constexpr std::uint64_t kTrainImagesSeed = 1234;
constexpr std::uint64_t kHeldOutImagesSeed = 999;

const ImageStore& training_images() {
    static const ImageStore store = synthetic::oriented_bar_images(20, 128, 128, 6, kTrainImagesSeed);
    return store;
}

const ImageStore& held_out_images() {
    static const ImageStore store = synthetic::oriented_bar_images(20, 128, 128, 6, kHeldOutImagesSeed);
    return store;
}

SamplerConfig fixture_sampler() {
    SamplerConfig s;
    s.classes = 20;
    return s;
}

// More epochs and a larger head step than the defaults; one epoch per step does not
// move a 32-feature bank within 30 iterations at this data scale.
TrainerConfig fixture_trainer() {
    TrainerConfig t;
    t.epochs_e = 50;
    t.epochs_m = 10;
    t.head_optimizer.learning_rate = 0.01;
    t.bank_optimizer.learning_rate = 0.001;
    t.max_iterations = 30;
    t.convergence_window = 30;
    t.convergence_threshold = 0.0;  // run all 30 iterations
    t.seed = 1;
    return t;
}

const TrainingResult& fixture_training() {
    static const TrainingResult result =
        train_cgcnn(training_images(), fixture_sampler(), BankGeometry{32, 11, 3, 4}, fixture_trainer());
    return result;
}

// ---------------------------------------------------------------------------

Outcome gradient_correctness() {
    std::mt19937_64 rng(20240601);
    std::uniform_int_distribution<std::size_t> pick_w(1, 5), pick_s(1, 2), pick_d(1, 4), pick_c(2, 4), pick_b(1, 3),
        pick_batch(1, 3);
    std::size_t instances = 0, coords = 0, failures = 0;
    double worst = 0.0, worst_abs = 0.0;
    while (instances < 25) {
        const std::size_t w = pick_w(rng), s = pick_s(rng);
        const std::size_t min_a = w + 2 * s;  // conv output side >= 3
        if (min_a > 9) continue;
        const std::size_t a = std::uniform_int_distribution<std::size_t>(min_a, 9)(rng);
        const BankGeometry g{pick_d(rng), w, pick_b(rng), s};
        const std::size_t classes = pick_c(rng);
        const auto bank = testing::random_bank(g, rng);
        const auto head = testing::random_head(classes, feature_length(a, g), rng);
        std::vector<Tensor3> xs;
        std::vector<std::size_t> labels;
        const std::size_t batch = pick_batch(rng);
        for (std::size_t i = 0; i < batch; ++i) {
            xs.push_back(testing::random_tensor(a, a, g.channels, rng));
            labels.push_back(std::uniform_int_distribution<std::size_t>(0, classes - 1)(rng));
        }
        const auto stats = testing::finite_difference_check(xs, labels, bank, head);
        coords += stats.checked;
        failures += stats.failures;
        worst = std::max(worst, stats.worst_relative);
        worst_abs = std::max(worst_abs, stats.worst_absolute);
        ++instances;
    }
    return verdict(failures == 0, fmt("%zu instances, %zu coordinates, %zu mismatches, worst relative error %.2e, "
                                      "worst absolute %.2e",
                                      instances, coords, failures, worst, worst_abs));
}

std::vector<std::uint8_t> head_bytes(const ClassifierHead& head) {
    std::vector<std::uint8_t> out(head.weights().size() * sizeof(double));
    std::memcpy(out.data(), head.weights().data(), out.size());
    return out;
}

Outcome freeze_contracts() {
    const ImageStore store = synthetic::oriented_bar_images(4, 96, 96, 5, 77);
    SamplerConfig sampler;
    sampler.classes = 8;
    sampler.per_class = 8;
    TrainerConfig cfg = fixture_trainer();
    cfg.epochs_e = 5;
    cfg.epochs_m = 2;
    cfg.max_iterations = 5;
    cfg.convergence_window = 5;
    cfg.seed = 3;
    const BankGeometry geometry{16, 11, 3, 4};

    // The step sequence of train_cgcnn, with byte snapshots around each step.
    Rng rng(cfg.seed);
    ConvFeatureBank bank = ConvFeatureBank::random(geometry, rng);
    OptimizerState bank_state(cfg.bank_optimizer);
    std::size_t bank_violations = 0, head_violations = 0;
    for (std::size_t it = 0; it < cfg.max_iterations; ++it) {
        const TaskDataset task = build_task(store, sampler, rng);
        const auto [x_e, x_m] = split_em(task, cfg.e_fraction, rng);
        const auto bank_before = encode_bank(bank);
        const HeadFit head = e_step(bank, x_e, cfg, rng);
        if (encode_bank(bank) != bank_before) ++bank_violations;
        measure_transfer_accuracy(bank, head.head, x_m);
        const auto head_before = head_bytes(head.head);
        BankFit fit = m_step(bank, head.head, x_m, cfg, rng, &bank_state);
        if (head_bytes(head.head) != head_before) ++head_violations;
        bank = std::move(fit.bank);
    }
    const TrainingResult reference = train_cgcnn(store, sampler, geometry, cfg);
    const bool same_path = encode_bank(reference.bank) == encode_bank(bank);
    return verdict(bank_violations == 0 && head_violations == 0 && same_path,
                   fmt("5 iterations: bank changed across E-step %zu times, head changed across M-step %zu times, "
                       "instrumented loop %s the trainer",
                       bank_violations, head_violations, same_path ? "reproduces" : "DIVERGES FROM"));
}

Outcome em_learning_signal() {
    const TrainingResult& result = fixture_training();
    const auto& r = result.trace.records();
    if (r.size() < 30) return verdict(false, fmt("only %zu iterations recorded", r.size()));
    const double first = (r[0].accuracy + r[1].accuracy) / 2.0;
    double last = 0.0;
    for (std::size_t i = r.size() - 5; i < r.size(); ++i) last += r[i].accuracy / 5.0;
    const double chance = 1.0 / 20.0;
    return verdict(last - first >= 0.10 && last >= 5.0 * chance,
                   fmt("C=20 d=32, 30 iterations on 20 synthetic images: mean A first 2 = %.3f, last 5 = %.3f "
                       "(gain %.3f, need >= 0.10; need >= %.3f = 5x chance)",
                       first, last, last - first, 5.0 * chance));
}

Outcome utility_ordering() {
    const ConvFeatureBank& bank = fixture_training().bank;
    UtilityConfig cfg;
    cfg.grid = {1, 2, 4, 8, 16, 32};
    cfg.trials = 10;
    cfg.seed = 7;
    cfg.frozen.epochs = 50;
    cfg.frozen.optimizer.learning_rate = 0.01;
    cfg.specific.epochs = 300;
    cfg.specific.minibatch = 32;
    cfg.specific.optimizer.learning_rate = 0.0005;
    SamplerConfig sampler = fixture_sampler();
    sampler.per_class = 32;
    const UtilityReport rep = utility_curves(
        bank,
        [&](std::size_t classes, Rng& rng) {
            SamplerConfig s = sampler;
            s.classes = classes;
            return build_task(held_out_images(), s, rng);
        },
        cfg);
    bool ok = true;
    std::ostringstream detail;
    for (const auto* curve : {&rep.random, &rep.guided, &rep.specific}) {
        if (curve->points.front().mean != 1.0) ok = false;
    }
    for (std::size_t i = 0; i < cfg.grid.size(); ++i) {
        const double r = rep.random.points[i].mean, g = rep.guided.points[i].mean, s = rep.specific.points[i].mean;
        if (cfg.grid[i] >= 4 && !(s - g >= 0.02 && g - r >= 0.02)) ok = false;
        detail << fmt("C=%zu %.3f/%.3f/%.3f ", cfg.grid[i], r, g, s);
    }
    if (!(rep.utility > 0.3 && rep.utility < 1.0)) ok = false;
    return verdict(ok, fmt("random/CG/specific means: %sU=%.3f", detail.str().c_str(), rep.utility));
}

Outcome utility_identities() {
    const std::vector<std::size_t> grid{1, 2, 4, 8, 16, 32, 64};
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<double> random(grid.size()), specific(grid.size()), mid(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
        random[i] = i == 0 ? 1.0 : 0.5 * unit(rng);
        specific[i] = i == 0 ? 1.0 : random[i] + 0.1 + 0.4 * unit(rng);
        mid[i] = 0.5 * (random[i] + specific[i]);
    }
    const double one = transfer_utility(grid, random, specific, specific);
    const double zero = transfer_utility(grid, random, random, specific);
    const double half = transfer_utility(grid, random, mid, specific);
    const bool ok = std::abs(one - 1.0) <= 1e-12 && std::abs(zero) <= 1e-12 && std::abs(half - 0.5) <= 1e-12;
    return verdict(ok, fmt("U(CG=specific)-1 = %.1e, U(CG=random) = %.1e, U(midpoint)-0.5 = %.1e", one - 1.0, zero,
                           half - 0.5));
}

Outcome brodatz_texture() {
    const auto dir = env("CGCNN_TEXTURE_DIR");
    const auto bank_path = env("CGCNN_TEXTURE_BANK");
    const auto natural = env("CGCNN_NATURAL_DIR");
    if (!dir || (!bank_path && !natural)) {
        return {Verdict::Skip,
                "texture images not available (set CGCNN_TEXTURE_DIR and CGCNN_TEXTURE_BANK or CGCNN_NATURAL_DIR)"};
    }
    ConvFeatureBank bank;
    if (bank_path) {
        bank = read_bank(*bank_path);
    } else {
        const RunConfig cfg = resolve_config(RunMode::Train, {}, {"paths.dataset=" + nlohmann::json(*natural).dump()});
        bank = train_cgcnn(load_rgb_dataset(cfg.paths.dataset), cfg.sampler, cfg.geometry, cfg.trainer).bank;
    }
    const auto textures = load_texture_directory(*dir);
    const RunConfig cfg = resolve_config(RunMode::Texture, {},
                                         {"paths.textures=" + nlohmann::json(*dir).dump(), "paths.bank=\"unused\""});
    const BenchResult frozen = texture_benchmark(bank, textures, cfg.texture);
    const BenchResult pixels = texture_pixel_baseline(textures, cfg.texture);
    return verdict(frozen.overall_accuracy >= 0.65 && pixels.overall_accuracy <= 0.35,
                   fmt("%zu textures, %zu runs: frozen features %.1f%% +/- %.1f (need >= 65), raw-pixel 1-NN %.1f%% "
                       "(need <= 35)",
                       textures.size(), cfg.texture.runs, 100 * frozen.overall_accuracy, 100 * frozen.std_accuracy,
                       100 * pixels.overall_accuracy));
}

BenchResult hsi_run(const std::string& cube_path, const std::string& labels_path) {
    const HsiCube cube = load_hsi(cube_path, labels_path);
    const RunConfig cfg = resolve_config(RunMode::Hsi, {},
                                         {"paths.cube=" + nlohmann::json(cube_path).dump(),
                                          "paths.labels=" + nlohmann::json(labels_path).dump(),
                                          "sampler.b=" + std::to_string(cube.bands())});
    const TrainingResult trained = train_cgcnn(cube, cfg.sampler, cfg.geometry, cfg.trainer);
    return hsi_benchmark(trained.bank, cube, cfg.hsi);
}

Outcome hsi_benchmarks() {
    const auto ip_cube = env("CGCNN_INDIAN_PINES_CUBE"), ip_labels = env("CGCNN_INDIAN_PINES_LABELS");
    const auto sa_cube = env("CGCNN_SALINAS_CUBE"), sa_labels = env("CGCNN_SALINAS_LABELS");
    const bool have_ip = ip_cube && ip_labels, have_sa = sa_cube && sa_labels;
    if (!have_ip || !have_sa) {
        return {Verdict::Skip, "hyperspectral scenes not available (set CGCNN_INDIAN_PINES_CUBE/_LABELS and "
                               "CGCNN_SALINAS_CUBE/_LABELS)"};
    }
    const BenchResult ip = hsi_run(*ip_cube, *ip_labels);
    const BenchResult sa = hsi_run(*sa_cube, *sa_labels);
    const bool tables = ip.precision.size() == ip.confusion.size() && sa.recall.size() == sa.confusion.size();
    return verdict(ip.overall_accuracy >= 0.90 && sa.overall_accuracy >= 0.93 && tables,
                   fmt("Indian Pines %.1f%% +/- %.1f (need >= 90), Salinas %.1f%% +/- %.1f (need >= 93)",
                       100 * ip.overall_accuracy, 100 * ip.std_accuracy, 100 * sa.overall_accuracy,
                       100 * sa.std_accuracy));
}

Outcome sampler_counting() {
    bool ok = slide_lattice_size(25) == 2601 && slide_lattice_size(2) == 25;

    // Empirical lattice: offsets actually produced for g=2 cover exactly 25 positions.
    const HsiCube scene = synthetic::hsi_scene(24, 24, 2, 2, 0.0, 3);
    SamplerConfig s;
    s.mode = SamplerMode::Hsi;
    s.channels = 2;
    s.patch = 3;
    s.slide = 2;
    s.classes = 50;
    s.per_class = 40;
    Rng rng(11);
    const TaskDataset task = build_task(scene, s, rng);
    std::set<std::pair<long long, long long>> offsets;
    for (std::size_t c = 0; c < s.classes; ++c) {
        const auto& seed = task.examples[c * s.per_class].origin;
        for (std::size_t n = 1; n < s.per_class; ++n) {
            const auto& o = task.examples[c * s.per_class + n].origin;
            offsets.insert({static_cast<long long>(o.row) - static_cast<long long>(seed.row),
                            static_cast<long long>(o.col) - static_cast<long long>(seed.col)});
        }
    }
    ok = ok && offsets.size() == 25;

    // g=0 in both modes, augmentation disabled for RGB.
    std::size_t distinct_groups = 0;
    SamplerConfig rgb;
    rgb.slide = 0;
    rgb.classes = 10;
    rgb.per_class = 8;
    rgb.gray_probability = 0.0;
    rgb.jitter_amplitude = 0.0;
    Rng rng2(12);
    const TaskDataset flat = build_task(training_images(), rgb, rng2);
    s.slide = 0;
    const TaskDataset flat_hsi = build_task(scene, s, rng2);
    for (const auto* t : {&flat, &flat_hsi}) {
        for (std::size_t c = 0; c < t->classes; ++c) {
            bool same = true;
            for (std::size_t n = 1; n < t->per_class; ++n) {
                same = same && t->examples[c * t->per_class + n].patch == t->examples[c * t->per_class].patch;
            }
            distinct_groups += !same;
        }
    }
    ok = ok && distinct_groups == 0;
    return verdict(ok, fmt("lattice(25)=%zu lattice(2)=%zu, %zu distinct g=2 offsets observed, %zu g=0 groups with "
                           "differing patches",
                           slide_lattice_size(25), slide_lattice_size(2), offsets.size(), distinct_groups));
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
    std::map<std::string, std::string> files;
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
        if (!e.is_regular_file()) continue;
        std::ifstream in(e.path(), std::ios::binary);
        std::ostringstream s;
        s << in.rdbuf();
        files[fs::relative(e.path(), dir).string()] = s.str();
    }
    return files;
}

Outcome determinism() {
    const fs::path root = fs::temp_directory_path() / "cgcnn_acceptance_determinism";
    fs::remove_all(root);
    fs::create_directories(root / "images");
    fs::create_directories(root / "holdout");
    fs::create_directories(root / "textures");
    const ImageStore imgs = synthetic::oriented_bar_images(3, 96, 96, 5, 41);
    for (std::size_t i = 0; i < imgs.size(); ++i) {
        write_rgb_png(imgs.images[i], root / "images" / fmt("%02zu.png", i));
    }
    const ImageStore hold = synthetic::oriented_bar_images(3, 96, 96, 5, 42);
    for (std::size_t i = 0; i < hold.size(); ++i) {
        write_rgb_png(hold.images[i], root / "holdout" / fmt("%02zu.png", i));
    }
    const auto tex = synthetic::textures(3, 128, 43);
    for (std::size_t i = 0; i < tex.size(); ++i) write_gray_png(tex[i], root / "textures" / fmt("%02zu.png", i));
    HsiCube scene = synthetic::hsi_scene(32, 32, 6, 3, 0.02, 44);
    write_hsi(scene, root / "cube.raw", root / "labels.png");

    auto q = [](const fs::path& p) { return nlohmann::json(p.string()).dump(); };
    const std::string bank = q(root / "train" / "bank.bin");
    const std::vector<std::pair<RunMode, std::vector<std::string>>> runs{
        {RunMode::Train,
         {"paths.dataset=" + q(root / "images"), "paths.out=" + q(root / "train"), "sampler.C=4", "sampler.N=4",
          "bank.d=8", "trainer.max_iterations=3", "trainer.checkpoint_every=1"}},
        {RunMode::Utility,
         {"paths.holdout=" + q(root / "holdout"), "paths.bank=" + bank, "paths.out=" + q(root / "utility"),
          "sampler.N=4", "sampler.g=4", "utility.grid=[1,2,4]", "utility.trials=2", "utility.frozen.epochs=3",
          "utility.specific.epochs=3"}},
        {RunMode::Texture,
         {"paths.textures=" + q(root / "textures"), "paths.bank=" + bank, "paths.out=" + q(root / "texture"),
          "texture.runs=2", "texture.head.epochs=3"}},
        {RunMode::Hsi,
         {"paths.cube=" + q(root / "cube.raw"), "paths.labels=" + q(root / "labels.png"),
          "paths.out=" + q(root / "hsi"), "sampler.b=6", "sampler.C=4", "sampler.N=6", "trainer.max_iterations=3",
          "hsi.folds=3"}},
        {RunMode::Export, {"paths.bank=" + bank, "paths.out=" + q(root / "export")}},
    };
    std::size_t compared = 0, differing = 0;
    std::string which;
    for (const auto& [mode, overrides] : runs) {
        const RunConfig cfg = resolve_config(mode, nlohmann::json{{"seed", 2024}}, overrides);
        run_command(cfg);
        const auto first = snapshot(cfg.paths.out);
        run_command(cfg);
        const auto second = snapshot(cfg.paths.out);
        if (first != second) {
            ++differing;
            which += " " + to_string(mode);
        }
        compared += first.size();
    }
    return verdict(differing == 0 && compared > 0,
                   fmt("5 commands run twice, %zu artifacts compared, differing commands: %s", compared,
                       differing == 0 ? "none" : which.c_str()));
}

struct Criterion {
    int id;
    const char* name;
    std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
    std::optional<int> only;
    for (int i = 1; i < argc; ++i) {
        if (std::strcmp(argv[i], "--only") == 0 && i + 1 < argc) {
            only = std::atoi(argv[++i]);
        } else {
            std::fprintf(stderr, "usage: %s [--only N]\n", argv[0]);
            return 2;
        }
    }
    const std::vector<Criterion> criteria{
        {1, "gradient correctness", gradient_correctness},
        {2, "freeze contracts", freeze_contracts},
        {3, "EM learning signal", em_learning_signal},
        {4, "transfer-utility ordering", utility_ordering},
        {5, "utility identities", utility_identities},
        {6, "texture benchmark", brodatz_texture},
        {7, "hyperspectral benchmarks", hsi_benchmarks},
        {8, "sampler counting identities", sampler_counting},
        {9, "determinism", determinism},
    };
    int failed = 0, skipped = 0, ran = 0;
    for (const auto& c : criteria) {
        if (only && *only != c.id) continue;
        ++ran;
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {Verdict::Fail, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        const char* tag = o.verdict == Verdict::Pass ? "PASS" : o.verdict == Verdict::Fail ? "FAIL" : "SKIP";
        std::printf("criterion %d %s: %s -- %s (%.1fs)\n", c.id, tag, c.name, o.detail.c_str(), secs);
        std::fflush(stdout);
        failed += o.verdict == Verdict::Fail;
        skipped += o.verdict == Verdict::Skip;
    }
    if (ran == 0) {
        std::fprintf(stderr, "no criterion %d\n", *only);
        return 2;
    }
    if (failed > 0) return 1;
    if (only && skipped > 0) return 77;
    return 0;
}
