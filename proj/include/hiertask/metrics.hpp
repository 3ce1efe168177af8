#pragma once

#include <map>
#include <optional>

#include "hiertask/network.hpp"
#include "hiertask/taxonomy.hpp"

namespace hiertask {

/// Per-run evaluation record. top_k_acc maps k in {1,3,5} (clamped to the
/// class count) to its accuracy; top_1 equals model_acc.
struct MetricsReport {
    double model_acc = 0.0;
    std::optional<double> make_acc_direct;  // MTL outputs only
    double make_acc_derived = 0.0;
    std::map<std::size_t, double> top_k_acc;
    std::optional<double> consistency_rate;  // MTL outputs only
    std::size_t n_samples = 0;
};

/// Argmax with ties broken to the lowest index.
std::size_t argmax_row(const double* row, std::size_t width);

double model_accuracy(const std::vector<double>& logits, std::size_t n, std::size_t classes,
                      const std::vector<int>& labels);
double model_accuracy(const Tensor& logits, const std::vector<int>& labels);

/// Fraction of rows whose predicted model maps to the true make.
double derived_make_accuracy(const std::vector<double>& model_logits, std::size_t n,
                             std::size_t classes, const std::vector<int>& make_labels,
                             const Taxonomy& taxonomy);
double derived_make_accuracy(const Tensor& model_logits, const std::vector<int>& make_labels,
                             const Taxonomy& taxonomy);

/// Correct when the label ranks among the k highest logits (ties resolved
/// toward lower class indices).
double top_k_accuracy(const std::vector<double>& logits, std::size_t n, std::size_t classes,
                      const std::vector<int>& labels, std::size_t k);
double top_k_accuracy(const Tensor& logits, const std::vector<int>& labels, std::size_t k);

/// Fraction of rows where the predicted make equals the parent of the
/// predicted model.
double consistency_rate(const std::vector<double>& model_logits, const std::vector<double>& make_logits,
                        std::size_t n, const Taxonomy& taxonomy);
double consistency_rate(const Tensor& model_logits, const Tensor& make_logits,
                        const Taxonomy& taxonomy);

/// Full evaluation pass over a sample set (eval mode, batched).
MetricsReport evaluate(MtlNetwork& net, const std::vector<Sample>& samples);

}  // namespace hiertask
