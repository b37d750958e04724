#include "cgcnn/config.hpp"

#include <fstream>
#include <sstream>

#include "cgcnn/error.hpp"

namespace cgcnn {

using nlohmann::json;

namespace {

json optimizer_defaults(double lr) {
    return {{"kind", "adam"}, {"lr", lr}, {"momentum", 0.0}, {"beta1", 0.9}, {"beta2", 0.999}, {"epsilon", 1e-8}};
}

json fit_defaults(std::size_t epochs, double lr) {
    return {{"epochs", epochs}, {"minibatch", 64}, {"train_fraction", 0.5}, {"optimizer", optimizer_defaults(lr)}};
}

// Merges `user` into `base`, rejecting keys `base` does not know and values whose
// JSON type differs from the default's.
void merge_strict(json& base, const json& user, const std::string& prefix) {
    if (!user.is_object()) throw ConfigError("configuration section '" + prefix + "' must be an object");
    for (const auto& [key, value] : user.items()) {
        const std::string path = prefix.empty() ? key : prefix + "." + key;
        if (!base.contains(key)) throw ConfigError("unknown configuration key '" + path + "'");
        json& slot = base[key];
        if (slot.is_object()) {
            merge_strict(slot, value, path);
            continue;
        }
        const bool ok = [&] {
            if (slot.is_number_float()) return value.is_number();
            if (slot.is_number_unsigned() || slot.is_number_integer()) {
                return value.is_number_unsigned() || (value.is_number_integer() && value.get<long long>() >= 0);
            }
            if (slot.is_boolean()) return value.is_boolean();
            if (slot.is_string()) return value.is_string();
            if (slot.is_array()) return value.is_array();
            return false;
        }();
        if (!ok) {
            throw ConfigError("type mismatch for '" + path + "': expected " + std::string(slot.type_name()) +
                              ", got " + std::string(value.type_name()));
        }
        slot = slot.is_number_float() ? json(value.get<double>()) : value;
    }
}

json parse_override_value(const std::string& text) {
    try {
        return json::parse(text);
    } catch (const json::parse_error&) {
        return json(text);
    }
}

void apply_override(json& tree, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) {
        throw ConfigError("override '" + assignment + "' is not of the form key=value");
    }
    const std::string key = assignment.substr(0, eq);
    json nested = parse_override_value(assignment.substr(eq + 1));
    std::vector<std::string> parts;
    std::stringstream ss(key);
    for (std::string part; std::getline(ss, part, '.');) parts.push_back(part);
    for (auto it = parts.rbegin(); it != parts.rend(); ++it) nested = json{{*it, nested}};
    merge_strict(tree, nested, "");
}

OptimizerSettings read_optimizer(const json& j) {
    OptimizerSettings s;
    s.kind = optimizer_kind_from_string(j.at("kind").get<std::string>());
    s.learning_rate = j.at("lr").get<double>();
    s.momentum = j.at("momentum").get<double>();
    s.beta1 = j.at("beta1").get<double>();
    s.beta2 = j.at("beta2").get<double>();
    s.epsilon = j.at("epsilon").get<double>();
    return s;
}

FitConfig read_fit(const json& j) {
    FitConfig f;
    f.epochs = j.at("epochs").get<std::size_t>();
    f.minibatch = j.at("minibatch").get<std::size_t>();
    f.train_fraction = j.at("train_fraction").get<double>();
    f.optimizer = read_optimizer(j.at("optimizer"));
    return f;
}

void require_path(const json& tree, const std::string& key) {
    if (tree.at("paths").at(key).get<std::string>().empty()) {
        throw ConfigError("missing required key 'paths." + key + "'");
    }
}

}  // namespace

std::string to_string(RunMode mode) {
    switch (mode) {
        case RunMode::Train: return "train";
        case RunMode::Utility: return "utility";
        case RunMode::Texture: return "texture";
        case RunMode::Hsi: return "hsi";
        case RunMode::Export: return "export-weights";
    }
    return "unknown";
}

RunMode run_mode_from_string(const std::string& name) {
    if (name == "train") return RunMode::Train;
    if (name == "utility") return RunMode::Utility;
    if (name == "texture") return RunMode::Texture;
    if (name == "hsi") return RunMode::Hsi;
    if (name == "export" || name == "export-weights") return RunMode::Export;
    throw ConfigError("unknown mode '" + name + "'");
}

json default_config(RunMode mode, bool hsi_sampler) {
    const bool hsi = mode == RunMode::Hsi || hsi_sampler;
    json sampler = hsi ? json{{"C", 20},       {"N", 25},          {"a", 3},
                              {"b", 220},      {"g", 2},           {"gray_probability", 0.0},
                              {"jitter_amplitude", 0.0}, {"mode", "hsi"}}
                       : json{{"C", 100},      {"N", 16},          {"a", 19},
                              {"b", 3},        {"g", 25},          {"gray_probability", 0.5},
                              {"jitter_amplitude", 0.1}, {"mode", "rgb"}};
    json bank = hsi ? json{{"d", 30}, {"w", 1}, {"s", 1}} : json{{"d", 64}, {"w", 11}, {"s", 4}};
    return {
        {"mode", to_string(mode)},
        {"seed", 0},
        {"paths",
         {{"dataset", ""}, {"holdout", ""}, {"cube", ""}, {"labels", ""}, {"textures", ""}, {"bank", ""}, {"out", "out"}}},
        {"sampler", sampler},
        {"bank", bank},
        {"trainer",
         {{"epochs_e", 1},
          {"epochs_m", 1},
          {"minibatch", 64},
          {"max_iterations", 100},
          {"convergence_window", 10},
          {"convergence_threshold", 0.01},
          {"e_fraction", 0.5},
          {"checkpoint_every", 0},
          {"record_wall_time", false},
          {"head_optimizer", optimizer_defaults(1e-3)},
          {"bank_optimizer", optimizer_defaults(1e-3)}}},
        {"utility",
         {{"grid", {1, 2, 4, 8, 16, 32, 64}},
          {"trials", 10},
          {"frozen", fit_defaults(20, 1e-2)},
          {"specific", fit_defaults(100, 1e-3)}}},
        {"texture", {{"patch", 19}, {"subregion", 32}, {"runs", 10}, {"head", fit_defaults(50, 1e-2)}}},
        {"hsi", {{"folds", 10}, {"neighbors", 1}}},
    };
}

RunConfig resolve_config(RunMode mode, const json& user, const std::vector<std::string>& overrides) {
    auto build_tree = [&](bool hsi_sampler) {
        json tree = default_config(mode, hsi_sampler);
        if (!user.is_null()) merge_strict(tree, user, "");
        for (const auto& o : overrides) apply_override(tree, o);
        return tree;
    };
    json tree = build_tree(false);
    // A train run switched to the HSI sampler takes the HSI defaults underneath.
    if (mode == RunMode::Train && tree["sampler"]["mode"] == "hsi") tree = build_tree(true);
    tree["mode"] = to_string(mode);

    RunConfig cfg;
    cfg.mode = mode;
    try {
        cfg.seed = tree.at("seed").get<std::uint64_t>();
        const json& p = tree.at("paths");
        cfg.paths.dataset = p.at("dataset").get<std::string>();
        cfg.paths.holdout = p.at("holdout").get<std::string>();
        cfg.paths.cube = p.at("cube").get<std::string>();
        cfg.paths.labels = p.at("labels").get<std::string>();
        cfg.paths.textures = p.at("textures").get<std::string>();
        cfg.paths.bank = p.at("bank").get<std::string>();
        cfg.paths.out = p.at("out").get<std::string>();

        const json& s = tree.at("sampler");
        cfg.sampler.classes = s.at("C").get<std::size_t>();
        cfg.sampler.per_class = s.at("N").get<std::size_t>();
        cfg.sampler.patch = s.at("a").get<std::size_t>();
        cfg.sampler.channels = s.at("b").get<std::size_t>();
        cfg.sampler.slide = s.at("g").get<std::size_t>();
        cfg.sampler.gray_probability = s.at("gray_probability").get<double>();
        cfg.sampler.jitter_amplitude = s.at("jitter_amplitude").get<double>();
        cfg.sampler.mode = sampler_mode_from_string(s.at("mode").get<std::string>());

        const json& b = tree.at("bank");
        cfg.geometry = {b.at("d").get<std::size_t>(), b.at("w").get<std::size_t>(), cfg.sampler.channels,
                        b.at("s").get<std::size_t>()};

        const json& t = tree.at("trainer");
        cfg.trainer.epochs_e = t.at("epochs_e").get<std::size_t>();
        cfg.trainer.epochs_m = t.at("epochs_m").get<std::size_t>();
        cfg.trainer.minibatch = t.at("minibatch").get<std::size_t>();
        cfg.trainer.max_iterations = t.at("max_iterations").get<std::size_t>();
        cfg.trainer.convergence_window = t.at("convergence_window").get<std::size_t>();
        cfg.trainer.convergence_threshold = t.at("convergence_threshold").get<double>();
        cfg.trainer.e_fraction = t.at("e_fraction").get<double>();
        cfg.trainer.record_wall_time = t.at("record_wall_time").get<bool>();
        cfg.trainer.head_optimizer = read_optimizer(t.at("head_optimizer"));
        cfg.trainer.bank_optimizer = read_optimizer(t.at("bank_optimizer"));
        cfg.trainer.seed = cfg.seed;
        cfg.checkpoint_every = t.at("checkpoint_every").get<std::size_t>();

        const json& u = tree.at("utility");
        cfg.utility.grid = u.at("grid").get<std::vector<std::size_t>>();
        cfg.utility.trials = u.at("trials").get<std::size_t>();
        cfg.utility.frozen = read_fit(u.at("frozen"));
        cfg.utility.specific = read_fit(u.at("specific"));
        cfg.utility.seed = cfg.seed;

        const json& x = tree.at("texture");
        cfg.texture.patch = x.at("patch").get<std::size_t>();
        cfg.texture.subregion = x.at("subregion").get<std::size_t>();
        cfg.texture.runs = x.at("runs").get<std::size_t>();
        cfg.texture.head = read_fit(x.at("head"));
        cfg.texture.seed = cfg.seed;

        const json& h = tree.at("hsi");
        cfg.hsi.folds = h.at("folds").get<std::size_t>();
        cfg.hsi.neighbors = h.at("neighbors").get<std::size_t>();
        cfg.hsi.seed = cfg.seed;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("invalid configuration value: ") + e.what());
    }

    switch (mode) {
        case RunMode::Train:
            if (cfg.sampler.mode == SamplerMode::Hsi) {
                require_path(tree, "cube");
                require_path(tree, "labels");
            } else {
                require_path(tree, "dataset");
            }
            break;
        case RunMode::Utility:
            require_path(tree, "bank");
            require_path(tree, "holdout");
            break;
        case RunMode::Texture:
            require_path(tree, "bank");
            require_path(tree, "textures");
            break;
        case RunMode::Hsi:
            require_path(tree, "cube");
            require_path(tree, "labels");
            break;
        case RunMode::Export:
            require_path(tree, "bank");
            break;
    }
    try {
        cfg.sampler.validate();
        cfg.trainer.validate();
    } catch (const InvalidInput& e) {
        throw ConfigError(e.what());
    }
    cfg.resolved = std::move(tree);
    return cfg;
}

RunConfig parse_config(RunMode mode, const std::optional<std::filesystem::path>& file,
                       const std::vector<std::string>& overrides) {
    json user;
    if (file) {
        std::ifstream in(*file);
        if (!in) throw ConfigError("cannot read config file " + file->string());
        try {
            user = json::parse(in, nullptr, true, true);
        } catch (const json::parse_error& e) {
            throw ConfigError("malformed config file " + file->string() + ": " + e.what());
        }
        // The mode comes from the subcommand; a matching entry in the file is allowed.
        if (user.is_object() && user.contains("mode")) {
            if (run_mode_from_string(user["mode"].get<std::string>()) != mode) {
                throw ConfigError("config file mode '" + user["mode"].get<std::string>() +
                                  "' does not match subcommand '" + to_string(mode) + "'");
            }
            user.erase("mode");
        }
    }
    return resolve_config(mode, user, overrides);
}

}  // namespace cgcnn
