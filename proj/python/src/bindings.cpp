#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <cstring>

#include "cgcnn/bank_io.hpp"
#include "cgcnn/commands.hpp"
#include "cgcnn/config.hpp"
#include "cgcnn/error.hpp"
#include "cgcnn/evaluation.hpp"
#include "cgcnn/filter_grid.hpp"
#include "cgcnn/nn.hpp"
#include "cgcnn/sampler.hpp"
#include "cgcnn/synthetic.hpp"
#include "cgcnn/trainer.hpp"

namespace py = pybind11;
using namespace cgcnn;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor3 to_tensor(const Array& a) {
    if (a.ndim() != 3 && a.ndim() != 2) throw InvalidInput("expected an array of shape (rows, cols[, channels])");
    const std::size_t rows = a.shape(0), cols = a.shape(1), ch = a.ndim() == 3 ? a.shape(2) : 1;
    Tensor3 t(rows, cols, ch);
    std::memcpy(t.data().data(), a.data(), t.size() * sizeof(double));
    return t;
}

Array to_array(const Tensor3& t) {
    Array out({t.rows(), t.cols(), t.channels()});
    std::memcpy(out.mutable_data(), t.data().data(), t.size() * sizeof(double));
    return out;
}

Array vector_array(const std::vector<double>& v) {
    Array out(static_cast<py::ssize_t>(v.size()));
    std::memcpy(out.mutable_data(), v.data(), v.size() * sizeof(double));
    return out;
}

std::vector<double> from_flat(const Array& a, std::size_t expected, const char* what) {
    if (static_cast<std::size_t>(a.size()) != expected) {
        throw InvalidInput(std::string(what) + " has " + std::to_string(a.size()) + " values, expected " +
                           std::to_string(expected));
    }
    return {a.data(), a.data() + a.size()};
}

ImageStore store_from(const std::vector<Array>& images) {
    ImageStore store;
    for (std::size_t i = 0; i < images.size(); ++i) {
        store.images.push_back(to_tensor(images[i]));
        store.ids.push_back("array_" + std::to_string(i));
    }
    return store;
}

py::tuple task_arrays(const TaskDataset& task) {
    if (task.examples.empty()) return py::make_tuple(Array(), py::array_t<std::size_t>());
    const Patch& first = task.examples.front().patch;
    Array patches({task.size(), first.rows(), first.cols(), first.channels()});
    py::array_t<std::size_t> labels(static_cast<py::ssize_t>(task.size()));
    for (std::size_t i = 0; i < task.size(); ++i) {
        std::memcpy(patches.mutable_data() + i * first.size(), task.examples[i].patch.data().data(),
                    first.size() * sizeof(double));
        labels.mutable_at(i) = task.examples[i].label;
    }
    return py::make_tuple(patches, labels);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Convolutional feature banks trained on contextual groups";

    py::register_exception<InvalidInput>(m, "InvalidInput", PyExc_ValueError);
    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<IoError>(m, "IoError", PyExc_OSError);
    py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);
    py::register_exception<TrainingFailure>(m, "TrainingFailure", PyExc_RuntimeError);

    py::class_<ConvFeatureBank>(m, "FeatureBank")
        .def(py::init([](std::size_t d, std::size_t w, std::size_t b, std::size_t s) {
                 return ConvFeatureBank(BankGeometry{d, w, b, s});
             }),
             py::arg("features"), py::arg("kernel"), py::arg("channels"), py::arg("stride"))
        .def_static(
            "random",
            [](std::size_t d, std::size_t w, std::size_t b, std::size_t s, std::uint64_t seed) {
                Rng rng(seed);
                return ConvFeatureBank::random(BankGeometry{d, w, b, s}, rng);
            },
            py::arg("features"), py::arg("kernel"), py::arg("channels"), py::arg("stride"), py::arg("seed") = 0)
        .def_static("load", [](const std::filesystem::path& p) { return read_bank(p); })
        .def("save", [](const ConvFeatureBank& b, const std::filesystem::path& p) { write_bank(b, p); })
        .def_property_readonly("features", &ConvFeatureBank::features)
        .def_property_readonly("kernel", &ConvFeatureBank::kernel)
        .def_property_readonly("channels", &ConvFeatureBank::channels)
        .def_property_readonly("stride", &ConvFeatureBank::stride)
        .def_property_readonly("pooled_window", [](const ConvFeatureBank& b) { return b.geometry().pooled_window(); })
        .def_property(
            "filters",
            [](const ConvFeatureBank& b) {
                Array out({b.features(), b.kernel(), b.kernel(), b.channels()});
                std::memcpy(out.mutable_data(), b.filters().data(), b.filters().size() * sizeof(double));
                return out;
            },
            [](ConvFeatureBank& b, const Array& a) { b.filters() = from_flat(a, b.filters().size(), "filters"); })
        .def_property(
            "biases", [](const ConvFeatureBank& b) { return vector_array(b.biases()); },
            [](ConvFeatureBank& b, const Array& a) { b.biases() = from_flat(a, b.biases().size(), "biases"); })
        .def("__eq__", [](const ConvFeatureBank& a, const ConvFeatureBank& b) { return a == b; })
        .def("__repr__", [](const ConvFeatureBank& b) {
            return "FeatureBank(features=" + std::to_string(b.features()) + ", kernel=" + std::to_string(b.kernel()) +
                   ", channels=" + std::to_string(b.channels()) + ", stride=" + std::to_string(b.stride()) + ")";
        });

    py::class_<ClassifierHead>(m, "ClassifierHead")
        .def(py::init<std::size_t, std::size_t>(), py::arg("classes"), py::arg("dim"))
        .def_property_readonly("classes", &ClassifierHead::classes)
        .def_property_readonly("dim", &ClassifierHead::dim)
        .def_property(
            "weights",
            [](const ClassifierHead& h) {
                Array out({h.classes(), h.dim()});
                std::memcpy(out.mutable_data(), h.weights().data(), h.weights().size() * sizeof(double));
                return out;
            },
            [](ClassifierHead& h, const Array& a) { h.weights() = from_flat(a, h.weights().size(), "weights"); });

    m.def(
        "feature_forward", [](const Array& patch, const ConvFeatureBank& bank) {
            return vector_array(feature_forward(to_tensor(patch), bank));
        },
        py::arg("patch"), py::arg("bank"), "Conv, ReLU and 3x3/2 max-pool; returns the flattened feature vector.");
    m.def(
        "conv_forward", [](const Array& patch, const ConvFeatureBank& bank) {
            return to_array(conv_forward(to_tensor(patch), bank));
        },
        py::arg("patch"), py::arg("bank"));
    m.def(
        "classify", [](const Array& features, const ClassifierHead& head) {
            return vector_array(classify(std::vector<double>(features.data(), features.data() + features.size()), head));
        },
        py::arg("features"), py::arg("head"));
    m.def(
        "loss_and_grads",
        [](const Array& patches, const std::vector<std::size_t>& labels, const ConvFeatureBank& bank,
           const ClassifierHead& head, bool freeze_bank, bool freeze_head) {
            if (patches.ndim() != 4) throw InvalidInput("patches must have shape (n, a, a, b)");
            const std::size_t n = patches.shape(0);
            if (labels.size() != n) throw InvalidInput("one label per patch is required");
            std::vector<Tensor3> xs;
            const std::size_t a = patches.shape(1), b = patches.shape(3);
            for (std::size_t i = 0; i < n; ++i) {
                Tensor3 t(a, patches.shape(2), b);
                std::memcpy(t.data().data(), patches.data() + i * t.size(), t.size() * sizeof(double));
                xs.push_back(std::move(t));
            }
            std::vector<LabeledPatchRef> batch;
            for (std::size_t i = 0; i < n; ++i) batch.push_back({&xs[i], labels[i]});
            const LossAndGrads lg = loss_and_grads(batch, bank, head, freeze_bank, freeze_head);
            py::dict out;
            out["loss"] = lg.loss;
            out["d_filters"] = vector_array(lg.grads.d_filters);
            out["d_biases"] = vector_array(lg.grads.d_biases);
            out["d_head"] = vector_array(lg.grads.d_head);
            return out;
        },
        py::arg("patches"), py::arg("labels"), py::arg("bank"), py::arg("head"), py::arg("freeze_bank") = false,
        py::arg("freeze_head") = false);

    m.def("slide_lattice_size", &slide_lattice_size, py::arg("slide"));
    m.def(
        "build_task",
        [](const std::vector<Array>& images, std::size_t classes, std::size_t per_class, std::size_t patch,
           std::size_t slide, double gray_probability, double jitter_amplitude, std::uint64_t seed) {
            const ImageStore store = store_from(images);
            SamplerConfig cfg;
            cfg.classes = classes;
            cfg.per_class = per_class;
            cfg.patch = patch;
            cfg.slide = slide;
            cfg.gray_probability = gray_probability;
            cfg.jitter_amplitude = jitter_amplitude;
            Rng rng(seed);
            return task_arrays(build_task(store, cfg, rng));
        },
        py::arg("images"), py::arg("classes"), py::arg("per_class"), py::arg("patch") = 19, py::arg("slide") = 25,
        py::arg("gray_probability") = 0.5, py::arg("jitter_amplitude") = 0.10, py::arg("seed") = 0,
        "Contextual-group task from RGB images in [0,1]; returns (patches, labels).");

    m.def(
        "transfer_utility",
        [](const std::vector<std::size_t>& grid, const std::vector<double>& random, const std::vector<double>& guided,
           const std::vector<double>& specific) { return transfer_utility(grid, random, guided, specific); },
        py::arg("grid"), py::arg("random"), py::arg("guided"), py::arg("specific"));
    m.def(
        "knn_classify",
        [](const Array& train, const std::vector<std::size_t>& labels, const Array& queries, std::size_t k) {
            auto rows = [](const Array& a) {
                if (a.ndim() != 2) throw InvalidInput("expected a 2-D array");
                std::vector<FeatureVector> out;
                for (py::ssize_t i = 0; i < a.shape(0); ++i) out.emplace_back(a.data(i, 0), a.data(i, 0) + a.shape(1));
                return out;
            };
            return knn_classify(rows(train), labels, rows(queries), k);
        },
        py::arg("train"), py::arg("labels"), py::arg("queries"), py::arg("k") = 1);
    m.def(
        "has_converged",
        [](const std::vector<double>& accuracies, std::size_t window, double threshold) {
            TrainingTrace trace;
            for (std::size_t i = 0; i < accuracies.size(); ++i) trace.append({i + 1, accuracies[i], 0.0, 0.0, 0.0});
            return has_converged(trace, window, threshold);
        },
        py::arg("accuracies"), py::arg("window"), py::arg("threshold"));

    m.def(
        "synthetic_images",
        [](std::size_t count, std::size_t rows, std::size_t cols, std::size_t cells, std::uint64_t seed) {
            std::vector<Array> out;
            for (const auto& img : synthetic::oriented_bar_images(count, rows, cols, cells, seed).images) {
                out.push_back(to_array(img));
            }
            return out;
        },
        py::arg("count"), py::arg("rows"), py::arg("cols"), py::arg("cells") = 6, py::arg("seed") = 0,
        "RGB images tiled with colored oriented gratings.");

    m.def(
        "train",
        [](const std::vector<Array>& images, std::size_t classes, std::size_t per_class, std::size_t features,
           std::size_t iterations, std::size_t epochs_e, std::size_t epochs_m, double head_lr, double bank_lr,
           std::size_t slide, std::uint64_t seed) {
            const ImageStore store = store_from(images);
            SamplerConfig sampler;
            sampler.classes = classes;
            sampler.per_class = per_class;
            sampler.slide = slide;
            TrainerConfig cfg;
            cfg.max_iterations = iterations;
            cfg.epochs_e = epochs_e;
            cfg.epochs_m = epochs_m;
            cfg.head_optimizer.learning_rate = head_lr;
            cfg.bank_optimizer.learning_rate = bank_lr;
            cfg.seed = seed;
            cfg.convergence_window = std::max<std::size_t>(2, std::min<std::size_t>(10, iterations));
            TrainingResult result;
            {
                py::gil_scoped_release release;
                result = train_cgcnn(store, sampler, BankGeometry{features, 11, 3, 4}, cfg);
            }
            std::vector<double> accuracy;
            for (const auto& r : result.trace.records()) accuracy.push_back(r.accuracy);
            return py::make_tuple(result.bank, accuracy);
        },
        py::arg("images"), py::arg("classes") = 100, py::arg("per_class") = 16, py::arg("features") = 64,
        py::arg("iterations") = 100, py::arg("epochs_e") = 1, py::arg("epochs_m") = 1, py::arg("head_lr") = 1e-3,
        py::arg("bank_lr") = 1e-3, py::arg("slide") = 25, py::arg("seed") = 0,
        "EM training on RGB images; returns (bank, per-iteration transferable accuracy).");

    m.def(
        "default_config",
        [](const std::string& mode, bool hsi) { return default_config(run_mode_from_string(mode), hsi).dump(); },
        py::arg("mode"), py::arg("hsi") = false, "Default configuration tree as a JSON string.");
    m.def(
        "run_command",
        [](const std::string& mode, const std::string& config_json, const std::vector<std::string>& overrides) {
            const nlohmann::json user = config_json.empty() ? nlohmann::json::object() : nlohmann::json::parse(config_json);
            const RunConfig cfg = resolve_config(run_mode_from_string(mode), user, overrides);
            CommandOutcome outcome;
            {
                py::gil_scoped_release release;
                outcome = run_command(cfg);
            }
            return py::make_tuple(outcome.summary, outcome.artifacts);
        },
        py::arg("mode"), py::arg("config_json") = "", py::arg("overrides") = std::vector<std::string>{});
}
