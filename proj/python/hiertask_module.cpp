// Python bindings for the main operations: synthetic data, training runs,
// metrics, head accounting and the one-cycle schedule.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "hiertask/checkpoint.hpp"
#include "hiertask/experiment.hpp"
#include "hiertask/metrics.hpp"

namespace py = pybind11;
using namespace hiertask;

namespace {

std::pair<std::vector<double>, std::pair<std::size_t, std::size_t>> matrix_from(
    const py::array_t<double, py::array::c_style | py::array::forcecast>& arr) {
    if (arr.ndim() != 2) throw ContractError("expected a 2-d logits array");
    const std::size_t n = static_cast<std::size_t>(arr.shape(0));
    const std::size_t c = static_cast<std::size_t>(arr.shape(1));
    std::vector<double> values(arr.data(), arr.data() + n * c);
    return {std::move(values), {n, c}};
}

py::dict metrics_to_dict(const MetricsReport& m) {
    py::dict out;
    out["n_samples"] = m.n_samples;
    out["model_acc"] = m.model_acc;
    out["make_acc_derived"] = m.make_acc_derived;
    if (m.make_acc_direct) out["make_acc_direct"] = *m.make_acc_direct;
    if (m.consistency_rate) out["consistency"] = *m.consistency_rate;
    py::dict topk;
    for (const auto& [k, acc] : m.top_k_acc) topk[py::int_(k)] = acc;
    out["top_k_acc"] = topk;
    return out;
}

py::dict run_experiment_from_text(const std::string& config_text) {
    const ConfigFile file = ConfigFile::parse(config_text, "<python>");
    ExperimentConfig cfg = experiment_from_config(file);
    cfg.validate();
    RunResult result = run_experiment(cfg);
    if (result.failed()) throw std::runtime_error(result.error);
    py::dict out;
    out["run_id"] = result.run_id;
    out["params"] = result.params;
    out["flops"] = result.flops;
    out["best_epoch"] = result.training.best_epoch;
    out["metrics"] = metrics_to_dict(result.test_metrics);
    py::list epochs;
    for (const EpochRecord& r : result.training.epochs) {
        py::dict row;
        row["epoch"] = r.epoch;
        row["train_loss"] = r.train_loss;
        row["val_model_acc"] = r.val_model_acc;
        row["val_make_acc"] = r.val_make_acc;
        row["lr"] = r.lr;
        epochs.append(row);
    }
    out["epochs"] = epochs;
    return out;
}

}  // namespace

PYBIND11_MODULE(_hiertask, m) {
    m.doc() = "hierarchical multi-task learning engine";

    py::class_<Taxonomy>(m, "Taxonomy")
        .def(py::init([](std::vector<std::string> makes, std::vector<std::string> models,
                         std::vector<int> parent) {
                 Taxonomy tax{std::move(makes), std::move(models), std::move(parent)};
                 tax.validate();
                 return tax;
             }),
             py::arg("makes"), py::arg("models"), py::arg("parent"))
        .def_readonly("makes", &Taxonomy::makes)
        .def_readonly("models", &Taxonomy::models)
        .def_readonly("parent", &Taxonomy::parent)
        .def("hash", &Taxonomy::hash);

    m.def(
        "accounting",
        [](std::size_t d, std::size_t k, std::size_t mm) {
            py::dict out;
            out["params_parallel_delta"] = parallel_param_delta(d, k);
            out["params_cascaded_extra_delta"] = cascaded_extra_param_delta(mm, k);
            out["flops_parallel_delta"] = parallel_flop_delta(d, k);
            out["flops_cascaded_extra_delta"] = cascaded_extra_flop_delta(mm, k);
            return out;
        },
        py::arg("d"), py::arg("k"), py::arg("m"),
        "Parameter and FLOP deltas of the parallel and cascaded task heads");

    m.def(
        "generate_synthetic",
        [](std::size_t makes, std::size_t models_per_make, std::size_t dim,
           std::size_t n_per_model, double make_separation, double model_separation,
           double noise_sigma, std::uint64_t seed) {
            SyntheticSpec spec{makes,           models_per_make,  dim,         n_per_model,
                               make_separation, model_separation, noise_sigma, seed};
            Dataset data = generate_synthetic(spec);
            py::array_t<double> features({data.samples.size(), data.feature_dim});
            auto view = features.mutable_unchecked<2>();
            std::vector<int> model_labels, make_labels;
            for (std::size_t i = 0; i < data.samples.size(); ++i) {
                for (std::size_t j = 0; j < data.feature_dim; ++j)
                    view(i, j) = data.samples[i].features[j];
                model_labels.push_back(data.samples[i].model_label);
                make_labels.push_back(data.samples[i].make_label);
            }
            py::dict out;
            out["features"] = features;
            out["model_labels"] = model_labels;
            out["make_labels"] = make_labels;
            out["taxonomy"] = data.taxonomy;
            return out;
        },
        py::arg("makes") = 8, py::arg("models_per_make") = 4, py::arg("dim") = 64,
        py::arg("n_per_model") = 25, py::arg("make_separation") = 6.0,
        py::arg("model_separation") = 3.0, py::arg("noise_sigma") = 1.0, py::arg("seed") = 0,
        "Seeded hierarchical Gaussian cluster dataset");

    m.def("model_accuracy",
          [](const py::array_t<double, py::array::c_style | py::array::forcecast>& logits,
             const std::vector<int>& labels) {
              auto [values, shape] = matrix_from(logits);
              return model_accuracy(values, shape.first, shape.second, labels);
          });
    m.def("top_k_accuracy",
          [](const py::array_t<double, py::array::c_style | py::array::forcecast>& logits,
             const std::vector<int>& labels, std::size_t k) {
              auto [values, shape] = matrix_from(logits);
              return top_k_accuracy(values, shape.first, shape.second, labels, k);
          });
    m.def("derived_make_accuracy",
          [](const py::array_t<double, py::array::c_style | py::array::forcecast>& logits,
             const std::vector<int>& make_labels, const Taxonomy& tax) {
              auto [values, shape] = matrix_from(logits);
              return derived_make_accuracy(values, shape.first, shape.second, make_labels, tax);
          });
    m.def("consistency_rate",
          [](const py::array_t<double, py::array::c_style | py::array::forcecast>& model_logits,
             const py::array_t<double, py::array::c_style | py::array::forcecast>& make_logits,
             const Taxonomy& tax) {
              auto [model_values, model_shape] = matrix_from(model_logits);
              auto [make_values, make_shape] = matrix_from(make_logits);
              return consistency_rate(model_values, make_values, model_shape.first, tax);
          });

    m.def(
        "cross_entropy",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& logits,
           const std::vector<int>& labels) {
            auto [values, shape] = matrix_from(logits);
            Tape tape;
            return cross_entropy(tape.leaf({shape.first, shape.second}, values), labels).scalar();
        },
        "Mean cross entropy of logits against labels");

    m.def(
        "cross_entropy_grad",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& logits,
           const std::vector<int>& labels) {
            auto [values, shape] = matrix_from(logits);
            Tape tape;
            Tensor x = tape.leaf({shape.first, shape.second}, values, true);
            tape.backward(cross_entropy(x, labels));
            py::array_t<double> grad({shape.first, shape.second});
            auto view = grad.mutable_unchecked<2>();
            for (std::size_t i = 0; i < shape.first; ++i)
                for (std::size_t j = 0; j < shape.second; ++j)
                    view(i, j) = x.grad()[i * shape.second + j];
            return grad;
        },
        "Gradient of the mean cross entropy with respect to the logits");

    m.def(
        "one_cycle_lr",
        [](std::size_t step, std::size_t total_steps, double max_lr, double div_factor,
           double final_div_factor, double pct_up) {
            OneCycleSchedule s{max_lr, div_factor, final_div_factor, pct_up, total_steps};
            return lr_at(s, step);
        },
        py::arg("step"), py::arg("total_steps"), py::arg("max_lr") = 3e-4,
        py::arg("div_factor") = 25.0, py::arg("final_div_factor") = 1e4, py::arg("pct_up") = 0.3);

    m.def("run_experiment", &run_experiment_from_text, py::arg("config"),
          "Run one training experiment from a config string; returns metrics and epoch records");

    m.def(
        "evaluate_checkpoint",
        [](const std::string& checkpoint, const std::string& manifest) {
            Dataset data = load_manifest(manifest);
            MtlNetwork net = load_checkpoint(checkpoint, data.taxonomy);
            return metrics_to_dict(evaluate(net, data.samples));
        },
        py::arg("checkpoint"), py::arg("manifest"));
}
