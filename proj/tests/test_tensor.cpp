#include <doctest.h>

#include <cmath>

#include "common/gradcheck.hpp"
#include "hiertask/tensor.hpp"

using namespace hiertask;
using hiertask::testing::check_op_gradients;
using hiertask::testing::rel_err;

namespace {

std::vector<double> random_values(std::size_t n, Rng& rng, double lo = -2.0, double hi = 2.0) {
    std::vector<double> v(n);
    for (double& x : v) x = rng.uniform(lo, hi);
    return v;
}

}  // namespace

TEST_SUITE("tensor") {

TEST_CASE("matmul identity and hand arithmetic") {
    Tape tape;
    Tensor eye = tape.leaf({2, 2}, {1, 0, 0, 1});
    Tensor m = tape.leaf({2, 2}, {3, -1, 2, 5});
    CHECK(matmul(eye, m).values() == m.values());

    Tensor a = tape.leaf({2, 2}, {1, 2, 3, 4});
    Tensor b = tape.leaf({2, 1}, {1, 1});
    const std::vector<double> expected = {3, 7};
    CHECK(matmul(a, b).values() == expected);
}

TEST_CASE("matmul shape mismatch names both shapes") {
    Tape tape;
    Tensor a = tape.leaf({2, 3}, std::vector<double>(6, 0.0));
    Tensor b = tape.leaf({4, 2}, std::vector<double>(8, 0.0));
    CHECK_THROWS_WITH_AS(matmul(a, b), doctest::Contains("2x3"), DimensionError);
    CHECK_THROWS_WITH_AS(matmul(a, b), doctest::Contains("4x2"), DimensionError);
}

TEST_CASE("matmul gradient matches finite differences") {
    Rng rng(11);
    auto r = check_op_gradients(
        [](Tape&, const std::vector<Tensor>& in) { return matmul(in[0], in[1]); },
        {{3, 4}, {4, 2}}, rng);
    CHECK(r.max_rel_err < 1e-5);
}

TEST_CASE("softmax of a zero row is uniform") {
    Tape tape;
    Tensor z = tape.leaf({1, 4}, {0, 0, 0, 0});
    for (double v : softmax(z).values()) CHECK(v == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("softmax shift invariance and row sums") {
    Rng rng(5);
    for (int seed = 0; seed < 20; ++seed) {
        Tape tape;
        std::vector<double> vals = random_values(3 * 6, rng, -4.0, 4.0);
        Tensor z = tape.leaf({3, 6}, vals);
        const std::vector<double> base = softmax(z).values();
        for (std::size_t i = 0; i < vals.size(); ++i) vals[i] += 17.25;
        Tensor shifted = tape.leaf({3, 6}, vals);
        const std::vector<double> moved = softmax(shifted).values();
        for (std::size_t i = 0; i < base.size(); ++i)
            CHECK(std::abs(base[i] - moved[i]) < 1e-12);
        for (std::size_t row = 0; row < 3; ++row) {
            double s = 0.0;
            for (std::size_t j = 0; j < 6; ++j) s += base[row * 6 + j];
            CHECK(std::abs(s - 1.0) < 1e-12);
        }
    }
}

TEST_CASE("softmax preserves argmax with lowest-index ties") {
    Rng rng(9);
    for (int rep = 0; rep < 100; ++rep) {
        Tape tape;
        std::vector<double> vals = random_values(7, rng, -3.0, 3.0);
        if (rep % 3 == 0) vals[2] = vals[5];  // force a tie
        Tensor z = tape.leaf({1, 7}, vals);
        const std::vector<double> y = softmax(z).values();
        std::size_t arg_z = 0, arg_y = 0;
        for (std::size_t j = 1; j < 7; ++j) {
            if (vals[j] > vals[arg_z]) arg_z = j;
            if (y[j] > y[arg_y]) arg_y = j;
        }
        CHECK(arg_z == arg_y);
    }
}

TEST_CASE("softmax rejects non-finite input") {
    Tape tape;
    Tensor bad = tape.leaf({1, 3}, {1.0, std::numeric_limits<double>::infinity(), 0.0});
    CHECK_THROWS_AS(softmax(bad), NumericError);
}

TEST_CASE("softmax gradient matches finite differences") {
    Rng rng(13);
    auto r = check_op_gradients(
        [](Tape&, const std::vector<Tensor>& in) { return softmax(in[0]); }, {{5, 7}}, rng);
    CHECK(r.max_rel_err < 1e-5);
}

TEST_CASE("cross entropy of uniform logits is ln C") {
    Tape tape;
    Tensor z = tape.leaf({2, 196}, std::vector<double>(2 * 196, 0.0));
    const double loss = cross_entropy(z, {0, 77}).scalar();
    CHECK(std::abs(loss - std::log(196.0)) < 1e-9);
}

TEST_CASE("cross entropy vanishes at a large true-class margin") {
    Tape tape;
    std::vector<double> vals(10, 0.0);
    vals[4] = 50.0;
    Tensor z = tape.leaf({1, 10}, vals);
    CHECK(cross_entropy(z, {4}).scalar() < 1e-6);
}

TEST_CASE("cross entropy rejects out-of-range labels") {
    Tape tape;
    Tensor z = tape.leaf({2, 5}, std::vector<double>(10, 0.0));
    CHECK_THROWS_WITH_AS(cross_entropy(z, {1, 5}), doctest::Contains("label 5"), LabelError);
    CHECK_THROWS_AS(cross_entropy(z, {-1, 2}), LabelError);
}

TEST_CASE("cross entropy matches an independent log-sum-exp oracle") {
    Rng rng(21);
    for (int rep = 0; rep < 25; ++rep) {
        const std::size_t n = 4, c = 10;
        std::vector<double> vals = random_values(n * c, rng, -5.0, 5.0);
        std::vector<int> labels(n);
        for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(rng.uniform_index(c));

        // oracle: direct formula, no shared code with the op
        double expected = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double mx = vals[i * c];
            for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, vals[i * c + j]);
            double lse = 0.0;
            for (std::size_t j = 0; j < c; ++j) lse += std::exp(vals[i * c + j] - mx);
            expected += mx + std::log(lse) - vals[i * c + static_cast<std::size_t>(labels[i])];
        }
        expected /= static_cast<double>(n);

        Tape tape;
        const double got = cross_entropy(tape.leaf({n, c}, vals), labels).scalar();
        CHECK(std::abs(got - expected) < 1e-10);
        CHECK(got >= 0.0);
    }
}

TEST_CASE("backward of sum is all ones and non-scalar loss is rejected") {
    Tape tape;
    Rng rng(3);
    Tensor x = tape.leaf({2, 3}, random_values(6, rng), true);
    Tensor s = sum(x);
    tape.backward(s);
    for (double g : x.grad()) CHECK(g == 1.0);

    Tape tape2;
    Tensor y = tape2.leaf({2, 2}, {1, 2, 3, 4}, true);
    Tensor doubled = add(y, y);
    CHECK_THROWS_AS(tape2.backward(doubled), ContractError);
}

TEST_CASE("gradient access on untracked tensors is a contract violation") {
    Tape tape;
    Tensor x = tape.leaf({2}, {1.0, 2.0}, false);
    CHECK_THROWS_AS(x.grad(), ContractError);
    CHECK_THROWS_AS(Tensor{}.values(), ContractError);
}

TEST_CASE("gradients accumulate when a leaf is used twice") {
    Tape tape;
    const std::vector<double> vals = {1.5, -2.0, 0.5};
    Tensor x = tape.leaf({3}, vals, true);
    tape.backward(sum(mul(x, x)));
    for (std::size_t i = 0; i < vals.size(); ++i)
        CHECK(x.grad()[i] == doctest::Approx(2.0 * vals[i]).epsilon(1e-12));
}

TEST_CASE("two-layer mlp with cross entropy passes the gradient check") {
    Rng rng(31);
    const std::size_t n = 4, in = 6, hid = 5, out = 3;
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(rng.uniform_index(out));
    auto r = check_op_gradients(
        [&labels](Tape&, const std::vector<Tensor>& leaf) {
            Tensor h = relu(add_bias(matmul(leaf[0], leaf[1]), leaf[2]));
            Tensor logits = add_bias(matmul(h, leaf[3]), leaf[4]);
            return cross_entropy(logits, labels);
        },
        {{n, in}, {in, hid}, {hid}, {hid, out}, {out}}, rng);
    CHECK(r.max_rel_err < 1e-4);
}

TEST_CASE("elementwise suite passes the gradient check on 100 seeds") {
    struct Case {
        const char* name;
        hiertask::testing::OpBuilder build;
        std::vector<std::vector<std::size_t>> shapes;
    };
    const std::vector<Case> cases = {
        {"add", [](Tape&, const std::vector<Tensor>& in) { return add(in[0], in[1]); },
         {{3, 4}, {3, 4}}},
        {"add_bias", [](Tape&, const std::vector<Tensor>& in) { return add_bias(in[0], in[1]); },
         {{2, 3, 4}, {3, 4}}},
        {"mul", [](Tape&, const std::vector<Tensor>& in) { return mul(in[0], in[1]); },
         {{4, 3}, {4, 3}}},
        {"scale", [](Tape&, const std::vector<Tensor>& in) { return scale(in[0], -1.7); }, {{5}}},
        {"relu", [](Tape&, const std::vector<Tensor>& in) { return relu(in[0]); }, {{4, 4}}},
        {"gelu", [](Tape&, const std::vector<Tensor>& in) { return gelu(in[0]); }, {{4, 4}}},
        {"mean", [](Tape&, const std::vector<Tensor>& in) { return mean(in[0]); }, {{3, 5}}},
        {"mean_axis", [](Tape&, const std::vector<Tensor>& in) { return mean_axis(in[0], 1); },
         {{2, 4, 3}}},
        {"concat", [](Tape&, const std::vector<Tensor>& in) { return concat({in[0], in[1]}, 1); },
         {{2, 3}, {2, 4}}},
        {"reshape", [](Tape&, const std::vector<Tensor>& in) { return reshape(in[0], {6, 2}); },
         {{3, 4}}},
        {"transpose", [](Tape&, const std::vector<Tensor>& in) { return transpose(in[0]); },
         {{2, 3, 4}}},
        {"bmm", [](Tape&, const std::vector<Tensor>& in) { return bmm(in[0], in[1]); },
         {{2, 3, 4}, {2, 4, 2}}},
        {"layer_norm",
         [](Tape&, const std::vector<Tensor>& in) { return layer_norm(in[0], in[1], in[2]); },
         {{3, 6}, {6}, {6}}},
        {"avg_pool2d", [](Tape&, const std::vector<Tensor>& in) { return avg_pool2d(in[0], 2); },
         {{2, 2, 4, 4}}},
        {"global_avg_pool",
         [](Tape&, const std::vector<Tensor>& in) { return global_avg_pool(in[0]); },
         {{2, 3, 4, 4}}},
        {"split",
         [](Tape&, const std::vector<Tensor>& in) {
             auto parts = split(in[0], 1, {2, 3});
             return concat({parts[1], parts[0]}, 1);
         },
         {{3, 5}}},
    };
    for (const Case& c : cases) {
        double worst = 0.0;
        for (std::size_t s = 0; s < 100; ++s) {
            Rng rng(1000 * s + 17);
            worst = std::max(worst, check_op_gradients(c.build, c.shapes, rng).max_rel_err);
        }
        INFO("op ", c.name);
        CHECK(worst < 1e-4);
    }
}

TEST_CASE("concat then split recovers the originals bitwise") {
    Rng rng(40);
    Tape tape;
    const std::vector<double> av = random_values(2 * 3, rng);
    const std::vector<double> bv = random_values(2 * 5, rng);
    Tensor a = tape.leaf({2, 3}, av);
    Tensor b = tape.leaf({2, 5}, bv);
    auto parts = split(concat({a, b}, 1), 1, {3, 5});
    CHECK(parts[0].values() == av);
    CHECK(parts[1].values() == bv);
}

TEST_CASE("dropout identity cases and scaling") {
    Rng rng(50);
    Tape tape;
    Tensor x = tape.leaf({4, 4}, random_values(16, rng));
    // rate 0 and eval mode are exact identities (same handle)
    CHECK(dropout(x, 0.0, true, rng).index() == x.index());
    CHECK(dropout(x, 0.5, false, rng).index() == x.index());
    CHECK_THROWS_AS(dropout(x, 1.0, true, rng), ConfigError);

    Tensor ones = tape.leaf({1, 10000}, std::vector<double>(10000, 1.0));
    Tensor dropped = dropout(ones, 0.25, true, rng);
    double sum_v = 0.0;
    for (double v : dropped.values()) {
        CHECK((v == 0.0 || v == doctest::Approx(1.0 / 0.75).epsilon(1e-12)));
        sum_v += v;
    }
    const double mean_v = sum_v / 10000.0;
    CHECK(mean_v > 0.97);
    CHECK(mean_v < 1.03);
}

TEST_CASE("dropout gradients flow through the mask") {
    Rng data_rng(60);
    const std::vector<double> vals = random_values(24, data_rng);
    Rng mask_rng_a(7);
    Tape tape;
    Tensor x = tape.leaf({4, 6}, vals, true);
    Tensor y = dropout(x, 0.5, true, mask_rng_a);
    tape.backward(sum(y));
    // gradient equals the mask scale wherever the unit survived
    for (std::size_t i = 0; i < vals.size(); ++i) {
        const double kept = y.values()[i] != 0.0 ? 2.0 : 0.0;
        CHECK(x.grad()[i] == kept);
    }
}

TEST_CASE("tape replay is deterministic") {
    auto run = [](std::uint64_t seed) {
        Rng rng(seed);
        Tape tape;
        Tensor x = tape.leaf({3, 4}, random_values(12, rng), true);
        Tensor w = tape.leaf({4, 2}, random_values(8, rng), true);
        Tensor loss = cross_entropy(gelu(matmul(x, w)), {0, 1, 0});
        tape.backward(loss);
        std::vector<double> out = x.grad();
        const auto& wg = w.grad();
        out.insert(out.end(), wg.begin(), wg.end());
        out.push_back(loss.scalar());
        return out;
    };
    CHECK(run(99) == run(99));
}

TEST_CASE("conv2d identity, hand count, and bounds") {
    Tape tape;
    // 1x1 kernel of weight 1 reproduces the input
    Tensor x = tape.leaf({1, 1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
    Tensor k1 = tape.leaf({1, 1, 1, 1}, {1.0});
    Tensor b0 = tape.leaf({1}, {0.0});
    CHECK(conv2d(x, k1, b0, 1, 0).values() == x.values());

    // all-ones 3x3 kernel on a constant-1 5x5 input, padding 1
    Tensor ones = tape.leaf({1, 1, 5, 5}, std::vector<double>(25, 1.0));
    Tensor k3 = tape.leaf({1, 1, 3, 3}, std::vector<double>(9, 1.0));
    Tensor y = conv2d(ones, k3, b0, 1, 1);
    const auto& v = y.values();
    CHECK(v[0] == 4.0);    // corner
    CHECK(v[4] == 4.0);    // corner
    CHECK(v[2] == 6.0);    // edge
    CHECK(v[12] == 9.0);   // interior
    CHECK(v[24] == 4.0);   // corner

    Tensor tiny = tape.leaf({1, 1, 2, 2}, {1, 2, 3, 4});
    CHECK_THROWS_AS(conv2d(tiny, k3, b0, 1, 0), DimensionError);
}

TEST_CASE("conv2d gradient matches finite differences") {
    Rng rng(70);
    auto r = check_op_gradients(
        [](Tape&, const std::vector<Tensor>& in) { return conv2d(in[0], in[1], in[2], 1, 1); },
        {{2, 2, 5, 5}, {3, 2, 3, 3}, {3}}, rng);
    CHECK(r.max_rel_err < 1e-4);
}

}  // TEST_SUITE
