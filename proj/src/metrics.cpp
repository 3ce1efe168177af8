#include "hiertask/metrics.hpp"

#include <numeric>

namespace hiertask {

std::size_t argmax_row(const double* row, std::size_t width) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < width; ++j)
        if (row[j] > row[best]) best = j;
    return best;
}

namespace {

void check_logits(std::size_t n, std::size_t classes, std::size_t data_size,
                  std::size_t label_count) {
    if (n * classes != data_size)
        throw ContractError("logits buffer holds " + std::to_string(data_size) +
                            " values, expected " + std::to_string(n * classes));
    if (label_count != n)
        throw ContractError("got " + std::to_string(label_count) + " labels for " +
                            std::to_string(n) + " rows");
}

}  // namespace

double model_accuracy(const std::vector<double>& logits, std::size_t n, std::size_t classes,
                      const std::vector<int>& labels) {
    check_logits(n, classes, logits.size(), labels.size());
    if (n == 0) return 0.0;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < n; ++i)
        if (argmax_row(logits.data() + i * classes, classes) ==
            static_cast<std::size_t>(labels[i]))
            ++correct;
    return static_cast<double>(correct) / static_cast<double>(n);
}

double model_accuracy(const Tensor& logits, const std::vector<int>& labels) {
    return model_accuracy(logits.values(), logits.extent(0), logits.extent(1), labels);
}

double derived_make_accuracy(const std::vector<double>& model_logits, std::size_t n,
                             std::size_t classes, const std::vector<int>& make_labels,
                             const Taxonomy& taxonomy) {
    check_logits(n, classes, model_logits.size(), make_labels.size());
    if (classes != taxonomy.model_count())
        throw ContractError("logits width " + std::to_string(classes) +
                            " does not match taxonomy with " +
                            std::to_string(taxonomy.model_count()) + " models");
    if (n == 0) return 0.0;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t predicted = argmax_row(model_logits.data() + i * classes, classes);
        if (taxonomy.parent[predicted] == make_labels[i]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(n);
}

double derived_make_accuracy(const Tensor& model_logits, const std::vector<int>& make_labels,
                             const Taxonomy& taxonomy) {
    return derived_make_accuracy(model_logits.values(), model_logits.extent(0),
                                 model_logits.extent(1), make_labels, taxonomy);
}

double top_k_accuracy(const std::vector<double>& logits, std::size_t n, std::size_t classes,
                      const std::vector<int>& labels, std::size_t k) {
    check_logits(n, classes, logits.size(), labels.size());
    if (k < 1 || k > classes)
        throw ContractError("top-k with k=" + std::to_string(k) + " outside [1, " +
                            std::to_string(classes) + "]");
    if (n == 0) return 0.0;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double* row = logits.data() + i * classes;
        const std::size_t label = static_cast<std::size_t>(labels[i]);
        // rank of the label under (logit desc, index asc) ordering
        std::size_t rank = 0;
        for (std::size_t j = 0; j < classes; ++j) {
            if (row[j] > row[label] || (row[j] == row[label] && j < label)) ++rank;
        }
        if (rank < k) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(n);
}

double top_k_accuracy(const Tensor& logits, const std::vector<int>& labels, std::size_t k) {
    return top_k_accuracy(logits.values(), logits.extent(0), logits.extent(1), labels, k);
}

double consistency_rate(const std::vector<double>& model_logits,
                        const std::vector<double>& make_logits, std::size_t n,
                        const Taxonomy& taxonomy) {
    const std::size_t m = taxonomy.model_count();
    const std::size_t k = taxonomy.make_count();
    if (model_logits.size() != n * m || make_logits.size() != n * k)
        throw ContractError("consistency_rate logits do not match the taxonomy");
    if (n == 0) return 0.0;
    std::size_t consistent = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t predicted_model = argmax_row(model_logits.data() + i * m, m);
        const std::size_t predicted_make = argmax_row(make_logits.data() + i * k, k);
        if (static_cast<std::size_t>(taxonomy.parent[predicted_model]) == predicted_make)
            ++consistent;
    }
    return static_cast<double>(consistent) / static_cast<double>(n);
}

double consistency_rate(const Tensor& model_logits, const Tensor& make_logits,
                        const Taxonomy& taxonomy) {
    if (!make_logits.defined()) throw ContractError("consistency_rate needs make logits");
    return consistency_rate(model_logits.values(), make_logits.values(), model_logits.extent(0),
                            taxonomy);
}

MetricsReport evaluate(MtlNetwork& net, const std::vector<Sample>& samples) {
    MetricsReport report;
    report.n_samples = samples.size();
    if (samples.empty()) return report;

    const Taxonomy& tax = net.taxonomy();
    const std::size_t m = tax.model_count();
    const std::size_t k = tax.make_count();
    const bool mtl = net.mode() != ArchitectureMode::single_task;

    std::vector<double> model_logits;
    std::vector<double> make_logits;
    model_logits.reserve(samples.size() * m);
    if (mtl) make_logits.reserve(samples.size() * k);

    std::vector<std::size_t> order(samples.size());
    std::iota(order.begin(), order.end(), 0);
    Rng unused(0);  // eval mode never draws from it
    constexpr std::size_t kEvalBatch = 512;
    for (std::size_t first = 0; first < samples.size(); first += kEvalBatch) {
        const std::size_t count = std::min(kEvalBatch, samples.size() - first);
        Tape tape;
        Tensor x = features_tensor(tape, samples, order, first, count);
        ForwardOutput out = net.forward(tape, x, false, unused);
        const auto& mv = out.model_logits.values();
        model_logits.insert(model_logits.end(), mv.begin(), mv.end());
        if (mtl) {
            const auto& kv = out.make_logits->values();
            make_logits.insert(make_logits.end(), kv.begin(), kv.end());
        }
    }

    const std::vector<int> model_truth = model_labels(samples);
    const std::vector<int> make_truth = make_labels(samples);
    const std::size_t n = samples.size();

    report.model_acc = model_accuracy(model_logits, n, m, model_truth);
    report.make_acc_derived = derived_make_accuracy(model_logits, n, m, make_truth, tax);
    for (std::size_t kk : {std::size_t{1}, std::size_t{3}, std::size_t{5}})
        report.top_k_acc[kk] = top_k_accuracy(model_logits, n, m, model_truth, std::min(kk, m));
    if (mtl) {
        report.make_acc_direct = model_accuracy(make_logits, n, k, make_truth);
        report.consistency_rate = consistency_rate(model_logits, make_logits, n, tax);
    }
    return report;
}

}  // namespace hiertask
