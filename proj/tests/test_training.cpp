#include <doctest.h>

#include <cmath>

#include "hiertask/metrics.hpp"
#include "hiertask/training.hpp"

using namespace hiertask;

namespace {

Taxonomy toy_taxonomy(std::size_t makes, std::size_t models_per_make) {
    Taxonomy tax;
    for (std::size_t k = 0; k < makes; ++k) {
        tax.makes.push_back("make" + std::to_string(k));
        for (std::size_t m = 0; m < models_per_make; ++m) {
            tax.models.push_back("make" + std::to_string(k) + "_model" + std::to_string(m));
            tax.parent.push_back(static_cast<int>(k));
        }
    }
    return tax;
}

MtlNetworkConfig mlp_config(ArchitectureMode mode, std::size_t in_dim, std::size_t d,
                            double dropout = 0.0) {
    MtlNetworkConfig cfg;
    cfg.encoder.family = EncoderFamily::mlp;
    cfg.encoder.input_shape = {in_dim};
    cfg.encoder.hidden = {16};
    cfg.encoder.feature_dim = d;
    cfg.mode = mode;
    cfg.dropout_rate = dropout;
    return cfg;
}

ForwardOutput random_mtl_output(Tape& tape, std::size_t n, std::size_t m, std::size_t k,
                                std::uint64_t seed) {
    Rng rng(seed);
    std::vector<double> model_vals(n * m);
    for (double& v : model_vals) v = rng.uniform(-3.0, 3.0);
    std::vector<double> make_vals(n * k);
    for (double& v : make_vals) v = rng.uniform(-3.0, 3.0);
    ForwardOutput out;
    out.model_logits = tape.leaf({n, m}, model_vals);
    out.make_logits = tape.leaf({n, k}, make_vals);
    return out;
}

SyntheticSpec separable_spec() {
    SyntheticSpec spec;
    spec.makes = 8;
    spec.models_per_make = 4;
    spec.dim = 64;
    spec.n_per_model = 25;
    spec.make_separation = 6.0;
    spec.model_separation = 3.0;
    spec.noise_sigma = 1.0;
    spec.seed = 7;
    return spec;
}

}  // namespace

TEST_SUITE("training") {

TEST_CASE("joint loss with degenerate weights equals the model term") {
    Tape tape;
    ForwardOutput out = random_mtl_output(tape, 5, 8, 3, 1);
    std::vector<int> model_truth = {0, 3, 7, 2, 5};
    std::vector<int> make_truth = {0, 1, 2, 0, 1};
    const double ce_model = cross_entropy(out.model_logits, model_truth).scalar();
    const double got = joint_loss(out, model_truth, make_truth, {1.0, 0.0}).scalar();
    CHECK(got == ce_model);
}

TEST_CASE("joint loss combines fixed component losses linearly") {
    // single-sample logits engineered so each cross-entropy is exact:
    // CE([0, c], 0) = log(1 + e^c); choose c so the losses are 2 and 1
    const double c_model = std::log(std::exp(2.0) - 1.0);
    const double c_make = std::log(std::exp(1.0) - 1.0);
    Tape tape;
    ForwardOutput out;
    out.model_logits = tape.leaf({1, 2}, {0.0, c_model});
    out.make_logits = tape.leaf({1, 2}, {0.0, c_make});
    const double got = joint_loss(out, {0}, {0}, {0.5, 0.5}).scalar();
    CHECK(got == doctest::Approx(1.5).epsilon(1e-9));
}

TEST_CASE("joint loss matches an independently weighted sum") {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        Tape tape;
        ForwardOutput out = random_mtl_output(tape, 6, 10, 4, seed);
        std::vector<int> model_truth, make_truth;
        Rng rng(seed + 100);
        for (std::size_t i = 0; i < 6; ++i) {
            model_truth.push_back(static_cast<int>(rng.uniform_index(10)));
            make_truth.push_back(static_cast<int>(rng.uniform_index(4)));
        }
        const double ce1 = cross_entropy(out.model_logits, model_truth).scalar();
        const double ce2 = cross_entropy(*out.make_logits, make_truth).scalar();
        const double got = joint_loss(out, model_truth, make_truth, {0.9, 0.1}).scalar();
        CHECK(std::abs(got - (0.9 * ce1 + 0.1 * ce2)) < 1e-12);
    }
}

TEST_CASE("joint loss is linear in the weight pair") {
    Tape tape;
    ForwardOutput out = random_mtl_output(tape, 4, 6, 2, 9);
    const std::vector<int> model_truth = {0, 5, 2, 3};
    const std::vector<int> make_truth = {0, 1, 1, 0};
    for (double a : {0.0, 0.5, 2.0, 7.25}) {
        const double base = joint_loss(out, model_truth, make_truth, {0.6, 0.4}).scalar();
        if (a == 0.0) continue;  // both-zero weights are rejected by contract
        const double scaled =
            joint_loss(out, model_truth, make_truth, {a * 0.6, a * 0.4}).scalar();
        CHECK(std::abs(scaled - a * base) < 1e-12 * std::max(1.0, a * base));
    }
    CHECK_THROWS_AS(joint_loss(out, model_truth, make_truth, {0.0, 0.0}), ConfigError);
}

TEST_CASE("joint loss demands make labels in multi-task mode") {
    Tape tape;
    ForwardOutput out = random_mtl_output(tape, 3, 4, 2, 11);
    CHECK_THROWS_AS(joint_loss(out, {0, 1, 2}, {}, {0.5, 0.5}), ContractError);
}

TEST_CASE("one-cycle schedule endpoints and monotonicity") {
    OneCycleSchedule s;
    s.max_lr = 3e-4;
    s.div_factor = 25.0;
    s.final_div_factor = 1e4;
    s.pct_up = 0.3;
    s.total_steps = 1000;
    CHECK(lr_at(s, 0) == 3e-4 / 25.0);
    CHECK(lr_at(s, s.peak_step()) == 3e-4);
    CHECK(lr_at(s, 1000) == 3e-4 / 25.0 / 1e4);
    CHECK(lr_at(s, 1000) < lr_at(s, 0));
    for (std::size_t step = 1; step <= 1000; ++step) {
        if (step <= s.peak_step()) {
            CHECK(lr_at(s, step) > lr_at(s, step - 1));
        } else {
            CHECK(lr_at(s, step) < lr_at(s, step - 1));
        }
    }
    CHECK_THROWS_AS(lr_at(s, 1001), ContractError);
}

TEST_CASE("base_lr reading: cycle maximum vs starting rate") {
    TrainConfig cfg;
    cfg.base_lr = 3e-4;
    cfg.epochs = 10;

    cfg.lr_is_max = true;
    OneCycleSchedule as_max = make_schedule(cfg, 10);
    CHECK(as_max.max_lr == 3e-4);
    CHECK(lr_at(as_max, 0) == 3e-4 / 25.0);

    cfg.lr_is_max = false;  // the quoted rate is where the cycle starts
    OneCycleSchedule as_initial = make_schedule(cfg, 10);
    CHECK(lr_at(as_initial, 0) == doctest::Approx(3e-4).epsilon(1e-12));
    CHECK(as_initial.max_lr == doctest::Approx(3e-4 * 25.0).epsilon(1e-12));
    CHECK(lr_at(as_initial, as_initial.total_steps) < lr_at(as_initial, 0));
}

TEST_CASE("adam closed-form cases") {
    AdamConfig cfg;
    AdamState state;
    std::vector<double> value = {1.0};
    std::vector<double> grad = {0.0};
    adam_step(state, value, grad, 0.1, cfg);
    CHECK(value[0] == 1.0);  // zero gradient, fresh state: no motion

    AdamState s2;
    std::vector<double> v2 = {0.7};
    std::vector<double> g2 = {1.0};
    adam_step(s2, v2, g2, 0.05, cfg);
    // bias-corrected moments are exactly 1, so the step is -lr up to eps
    CHECK(v2[0] == doctest::Approx(0.7 - 0.05).epsilon(1e-7));

    AdamState s3;
    std::vector<double> v3 = {1.0};
    double prev = 1.0;
    for (int step = 0; step < 10; ++step) {
        std::vector<double> g3 = {2.0 * v3[0]};  // gradient of theta^2
        adam_step(s3, v3, g3, 0.1, cfg);
        CHECK(std::abs(v3[0]) < std::abs(prev));
        prev = v3[0];
    }

    std::vector<double> bad_grad = {1.0, 2.0};
    AdamState s4;
    CHECK_THROWS_AS(adam_step(s4, v3, bad_grad, 0.1, cfg), ContractError);
}

TEST_CASE("adam with zero learning rate changes nothing") {
    Rng rng(5);
    Parameter p({4}, {0.5, -0.25, 1.5, 2.0});
    for (double& g : p.grad) g = rng.uniform(-1.0, 1.0);
    AdamOptimizer opt({&p});
    const std::vector<double> before = p.value;
    opt.step(0.0);
    CHECK(p.value == before);
}

TEST_CASE("zero epochs returns an untouched network and no records") {
    Dataset data = generate_synthetic(separable_spec());
    DatasetSplit split = split_dataset(data.samples, {0.7, 0.2, 0.1}, 7);
    MtlNetwork net(mlp_config(ArchitectureMode::single_task, 64, 16), data.taxonomy, 1);
    const std::vector<double> before = net.model_head().weight.value;
    TrainConfig cfg;
    cfg.epochs = 0;
    TrainedRun run = train(net, split, cfg);
    CHECK(run.epochs.empty());
    CHECK(run.best_epoch == 0);
    CHECK(net.model_head().weight.value == before);
}

TEST_CASE("training is bitwise deterministic given a seed") {
    Dataset data = generate_synthetic(separable_spec());
    DatasetSplit split = split_dataset(data.samples, {0.7, 0.2, 0.1}, 7);
    auto run_losses = [&]() {
        MtlNetwork net(mlp_config(ArchitectureMode::parallel, 64, 16, 0.25), data.taxonomy, 3);
        TrainConfig cfg;
        cfg.epochs = 4;
        cfg.seed = 3;
        cfg.weights = {0.9, 0.1};
        TrainedRun run = train(net, split, cfg);
        std::vector<double> losses;
        for (const EpochRecord& r : run.epochs) losses.push_back(r.train_loss);
        return losses;
    };
    CHECK(run_losses() == run_losses());
}

TEST_CASE("separable synthetic data trains to high accuracy within 200 epochs") {
    Dataset data = generate_synthetic(separable_spec());
    DatasetSplit split = split_dataset(data.samples, {0.7, 0.2, 0.1}, 7);
    MtlNetworkConfig net_cfg = mlp_config(ArchitectureMode::single_task, 64, 32);
    net_cfg.encoder.hidden = {64};
    MtlNetwork net(net_cfg, data.taxonomy, 1);
    TrainConfig cfg;
    cfg.epochs = 200;
    cfg.seed = 1;
    TrainedRun run = train(net, split, cfg);
    MetricsReport metrics = evaluate(net, split.test);
    CHECK(metrics.model_acc >= 0.95);
    CHECK(run.best_epoch > 0);
}

TEST_CASE("parallel training with a zero make weight tracks single task bitwise") {
    Dataset data = generate_synthetic(separable_spec());
    DatasetSplit split = split_dataset(data.samples, {0.7, 0.2, 0.1}, 7);
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.seed = 5;

    std::vector<std::vector<double>> single_heads;
    {
        MtlNetwork net(mlp_config(ArchitectureMode::single_task, 64, 16, 0.25), data.taxonomy, 5);
        cfg.weights = {1.0, 0.0};
        train(net, split, cfg,
              [&single_heads](const EpochRecord&, MtlNetwork& n) {
                  single_heads.push_back(n.model_head().weight.value);
              });
    }
    std::vector<std::vector<double>> parallel_heads;
    {
        MtlNetwork net(mlp_config(ArchitectureMode::parallel, 64, 16, 0.25), data.taxonomy, 5);
        cfg.weights = {1.0, 0.0};
        train(net, split, cfg,
              [&parallel_heads](const EpochRecord&, MtlNetwork& n) {
                  parallel_heads.push_back(n.model_head().weight.value);
              });
    }
    REQUIRE(single_heads.size() == parallel_heads.size());
    for (std::size_t e = 0; e < single_heads.size(); ++e)
        CHECK(single_heads[e] == parallel_heads[e]);
}

TEST_CASE("training rejects an empty split and reports divergence") {
    Dataset data = generate_synthetic(separable_spec());
    DatasetSplit empty;
    MtlNetwork net(mlp_config(ArchitectureMode::single_task, 64, 16), data.taxonomy, 1);
    TrainConfig cfg;
    CHECK_THROWS_AS(train(net, empty, cfg), DataError);

    DatasetSplit split = split_dataset(data.samples, {0.7, 0.2, 0.1}, 7);
    MtlNetwork net2(mlp_config(ArchitectureMode::single_task, 64, 16), data.taxonomy, 1);
    TrainConfig wild;
    wild.epochs = 3;
    wild.base_lr = 1e308;  // one step overflows the logits out of the reals
    CHECK_THROWS_WITH_AS(train(net2, split, wild), doctest::Contains("epoch"), DivergenceError);
}

}  // TEST_SUITE
