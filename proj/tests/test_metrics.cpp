#include <doctest.h>

#include <algorithm>
#include <numeric>

#include "hiertask/metrics.hpp"

using namespace hiertask;

namespace {

Taxonomy toy_taxonomy(std::size_t makes, std::size_t models_per_make) {
    Taxonomy tax;
    for (std::size_t k = 0; k < makes; ++k) {
        tax.makes.push_back("make" + std::to_string(k));
        for (std::size_t m = 0; m < models_per_make; ++m) {
            tax.models.push_back("m" + std::to_string(k) + "_" + std::to_string(m));
            tax.parent.push_back(static_cast<int>(k));
        }
    }
    return tax;
}

struct RandomCase {
    std::size_t n, m, k;
    std::vector<double> model_logits;
    std::vector<double> make_logits;
    std::vector<int> model_truth;
    std::vector<int> make_truth;
};

RandomCase random_case(const Taxonomy& tax, std::uint64_t seed, std::size_t n = 50) {
    RandomCase c;
    c.n = n;
    c.m = tax.model_count();
    c.k = tax.make_count();
    Rng rng(seed);
    c.model_logits.resize(n * c.m);
    for (double& v : c.model_logits) v = rng.uniform(-3.0, 3.0);
    c.make_logits.resize(n * c.k);
    for (double& v : c.make_logits) v = rng.uniform(-3.0, 3.0);
    for (std::size_t i = 0; i < n; ++i) {
        const int model = static_cast<int>(rng.uniform_index(c.m));
        c.model_truth.push_back(model);
        c.make_truth.push_back(tax.parent[static_cast<std::size_t>(model)]);
    }
    // make ties routine rather than exceptional
    if (n > 4) {
        c.model_logits[3 * c.m + 1] = c.model_logits[3 * c.m + 4];
        c.model_logits[4 * c.m + 0] = c.model_logits[4 * c.m + 2];
    }
    return c;
}

// brute-force oracles, all by exhaustive enumeration
std::size_t oracle_argmax(const std::vector<double>& row) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < row.size(); ++j)
        if (row[j] > row[best]) best = j;
    return best;
}

std::vector<double> row_of(const std::vector<double>& flat, std::size_t row, std::size_t width) {
    return {flat.begin() + static_cast<std::ptrdiff_t>(row * width),
            flat.begin() + static_cast<std::ptrdiff_t>((row + 1) * width)};
}

double oracle_model_acc(const RandomCase& c) {
    std::size_t hits = 0;
    for (std::size_t i = 0; i < c.n; ++i)
        if (oracle_argmax(row_of(c.model_logits, i, c.m)) ==
            static_cast<std::size_t>(c.model_truth[i]))
            ++hits;
    return static_cast<double>(hits) / static_cast<double>(c.n);
}

double oracle_top_k(const RandomCase& c, std::size_t k) {
    std::size_t hits = 0;
    for (std::size_t i = 0; i < c.n; ++i) {
        const std::vector<double> row = row_of(c.model_logits, i, c.m);
        std::vector<std::size_t> idx(c.m);
        std::iota(idx.begin(), idx.end(), 0);
        std::stable_sort(idx.begin(), idx.end(), [&row](std::size_t a, std::size_t b) {
            if (row[a] != row[b]) return row[a] > row[b];
            return a < b;
        });
        for (std::size_t r = 0; r < k; ++r)
            if (idx[r] == static_cast<std::size_t>(c.model_truth[i])) {
                ++hits;
                break;
            }
    }
    return static_cast<double>(hits) / static_cast<double>(c.n);
}

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("model accuracy trivial cases") {
    const Taxonomy tax = toy_taxonomy(2, 2);
    // perfect one-hot predictions
    std::vector<double> onehot(3 * 4, 0.0);
    onehot[0 * 4 + 2] = 1.0;
    onehot[1 * 4 + 0] = 1.0;
    onehot[2 * 4 + 3] = 1.0;
    CHECK(model_accuracy(onehot, 3, 4, {2, 0, 3}) == 1.0);

    // uniform logits: lowest-index tie break predicts class 0 everywhere
    std::vector<double> uniform(3 * 4, 0.5);
    CHECK(model_accuracy(uniform, 3, 4, {1, 2, 3}) == 0.0);
    CHECK(model_accuracy(uniform, 3, 4, {0, 0, 0}) == 1.0);
}

TEST_CASE("derived make accuracy counts sibling confusions as correct") {
    const Taxonomy tax = toy_taxonomy(2, 2);
    // predicted model 1 is a sibling of truth model 0 (same make)
    std::vector<double> logits = {0.1, 0.9, 0.0, 0.0};
    CHECK(model_accuracy(logits, 1, 4, {0}) == 0.0);
    CHECK(derived_make_accuracy(logits, 1, 4, {0}, tax) == 1.0);
    // perfect model predictions always derive the right make
    std::vector<double> onehot(2 * 4, 0.0);
    onehot[0 * 4 + 3] = 1.0;
    onehot[1 * 4 + 0] = 1.0;
    CHECK(derived_make_accuracy(onehot, 2, 4, {1, 0}, tax) == 1.0);
}

TEST_CASE("top-k trivial cases and contract") {
    std::vector<double> logits = {0.3, 0.2, 0.9, 0.1};
    CHECK(top_k_accuracy(logits, 1, 4, {1}, 4) == 1.0);  // k = M is exhaustive
    CHECK(top_k_accuracy(logits, 1, 4, {1}, 1) == model_accuracy(logits, 1, 4, {1}));
    CHECK_THROWS_AS(top_k_accuracy(logits, 1, 4, {1}, 0), ContractError);
    CHECK_THROWS_AS(top_k_accuracy(logits, 1, 4, {1}, 5), ContractError);
}

TEST_CASE("consistency trivial cases") {
    const Taxonomy tax = toy_taxonomy(3, 2);
    RandomCase c = random_case(tax, 1, 30);
    // one-hot make logits built from the predicted model's parent
    std::vector<double> consistent_makes(c.n * c.k, 0.0);
    for (std::size_t i = 0; i < c.n; ++i) {
        const std::size_t predicted = oracle_argmax(row_of(c.model_logits, i, c.m));
        consistent_makes[i * c.k + static_cast<std::size_t>(tax.parent[predicted])] = 1.0;
    }
    CHECK(consistency_rate(c.model_logits, consistent_makes, c.n, tax) == 1.0);

    const Taxonomy single = toy_taxonomy(1, 4);
    RandomCase s = random_case(single, 2, 25);
    CHECK(consistency_rate(s.model_logits, s.make_logits, s.n, single) == 1.0);
}

TEST_CASE("metrics match enumeration oracles on 1000 random cases") {
    const Taxonomy tax = toy_taxonomy(5, 4);
    for (std::uint64_t seed = 0; seed < 1000; seed += 50) {
        RandomCase c = random_case(tax, seed);
        CHECK(model_accuracy(c.model_logits, c.n, c.m, c.model_truth) == oracle_model_acc(c));
        for (std::size_t k : {std::size_t{1}, std::size_t{3}, std::size_t{5}})
            CHECK(top_k_accuracy(c.model_logits, c.n, c.m, c.model_truth, k) == oracle_top_k(c, k));

        // derived make oracle
        std::size_t derived_hits = 0;
        for (std::size_t i = 0; i < c.n; ++i) {
            const std::size_t pred = oracle_argmax(row_of(c.model_logits, i, c.m));
            if (tax.parent[pred] == c.make_truth[i]) ++derived_hits;
        }
        CHECK(derived_make_accuracy(c.model_logits, c.n, c.m, c.make_truth, tax) ==
              static_cast<double>(derived_hits) / static_cast<double>(c.n));

        // consistency oracle
        std::size_t consistent = 0;
        for (std::size_t i = 0; i < c.n; ++i) {
            const std::size_t pm = oracle_argmax(row_of(c.model_logits, i, c.m));
            const std::size_t pk = oracle_argmax(row_of(c.make_logits, i, c.k));
            if (static_cast<std::size_t>(tax.parent[pm]) == pk) ++consistent;
        }
        CHECK(consistency_rate(c.model_logits, c.make_logits, c.n, tax) ==
              static_cast<double>(consistent) / static_cast<double>(c.n));
    }
}

TEST_CASE("top-k is monotone, exhaustive at M, and bounds derived accuracy") {
    const Taxonomy tax = toy_taxonomy(4, 5);
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        RandomCase c = random_case(tax, seed + 500);
        double prev = 0.0;
        for (std::size_t k = 1; k <= c.m; ++k) {
            const double acc = top_k_accuracy(c.model_logits, c.n, c.m, c.model_truth, k);
            CHECK(acc >= prev);
            prev = acc;
        }
        CHECK(top_k_accuracy(c.model_logits, c.n, c.m, c.model_truth, c.m) == 1.0);
        CHECK(top_k_accuracy(c.model_logits, c.n, c.m, c.model_truth, 1) ==
              model_accuracy(c.model_logits, c.n, c.m, c.model_truth));
        CHECK(derived_make_accuracy(c.model_logits, c.n, c.m, c.make_truth, tax) >=
              model_accuracy(c.model_logits, c.n, c.m, c.model_truth));
    }
}

TEST_CASE("metrics are invariant to positive rescale and shift of logit rows") {
    const Taxonomy tax = toy_taxonomy(3, 3);
    RandomCase c = random_case(tax, 77);
    std::vector<double> transformed = c.model_logits;
    for (std::size_t i = 0; i < c.n; ++i)
        for (std::size_t j = 0; j < c.m; ++j)
            transformed[i * c.m + j] = 2.5 * transformed[i * c.m + j] + 11.0;
    CHECK(model_accuracy(transformed, c.n, c.m, c.model_truth) ==
          model_accuracy(c.model_logits, c.n, c.m, c.model_truth));
    CHECK(top_k_accuracy(transformed, c.n, c.m, c.model_truth, 3) ==
          top_k_accuracy(c.model_logits, c.n, c.m, c.model_truth, 3));
    CHECK(derived_make_accuracy(transformed, c.n, c.m, c.make_truth, tax) ==
          derived_make_accuracy(c.model_logits, c.n, c.m, c.make_truth, tax));
}

TEST_CASE("evaluate produces a coherent report for both network kinds") {
    SyntheticSpec spec;
    spec.makes = 3;
    spec.models_per_make = 3;
    spec.dim = 12;
    spec.n_per_model = 8;
    Dataset data = generate_synthetic(spec);

    for (ArchitectureMode mode : {ArchitectureMode::single_task, ArchitectureMode::parallel}) {
        MtlNetworkConfig cfg;
        cfg.encoder.input_shape = {12};
        cfg.encoder.feature_dim = 8;
        cfg.mode = mode;
        MtlNetwork net(cfg, data.taxonomy, 2);
        MetricsReport report = evaluate(net, data.samples);
        CHECK(report.n_samples == data.samples.size());
        CHECK(report.top_k_acc.at(1) == report.model_acc);
        CHECK(report.top_k_acc.at(3) >= report.top_k_acc.at(1));
        CHECK(report.top_k_acc.at(5) >= report.top_k_acc.at(3));
        CHECK(report.make_acc_derived >= report.model_acc);
        CHECK(report.make_acc_direct.has_value() == (mode == ArchitectureMode::parallel));
        CHECK(report.consistency_rate.has_value() == (mode == ArchitectureMode::parallel));
    }
}

TEST_CASE("consistency rate demands make logits") {
    Tape tape;
    Tensor model_logits = tape.leaf({2, 4}, std::vector<double>(8, 0.0));
    Tensor undefined;
    const Taxonomy tax = toy_taxonomy(2, 2);
    CHECK_THROWS_AS(consistency_rate(model_logits, undefined, tax), ContractError);
}

}  // TEST_SUITE
