#pragma once

// Central finite-difference gradient oracle. The oracle differentiates the
// forward pass numerically and never touches the tape's backward rules, so
// it stays independent of the implementation it checks.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "hiertask/rng.hpp"
#include "hiertask/tensor.hpp"

namespace hiertask::testing {

inline double rel_err(double analytic, double numeric) {
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1.0});
    return std::abs(analytic - numeric) / denom;
}

struct GradCheckResult {
    double max_rel_err = 0.0;
    std::size_t checked = 0;
};

/// Builds one tensor from leaf inputs already placed on the tape.
using OpBuilder = std::function<Tensor(Tape&, const std::vector<Tensor>&)>;

/// Compares tape gradients of sum(op(inputs) * probe) against central finite
/// differences, for random inputs and a random probe direction.
inline GradCheckResult check_op_gradients(const OpBuilder& build,
                                          const std::vector<std::vector<std::size_t>>& shapes,
                                          Rng& rng, double eps = 1e-6, double input_lo = -2.0,
                                          double input_hi = 2.0) {
    std::vector<std::vector<double>> inputs;
    for (const auto& shape : shapes) {
        std::vector<double> v(numel(shape));
        for (double& x : v) x = rng.uniform(input_lo, input_hi);
        inputs.push_back(std::move(v));
    }

    // forward-only scalar read-out used by the finite differences
    std::vector<double> probe;
    auto forward_scalar = [&](const std::vector<std::vector<double>>& vals) {
        Tape tape;
        std::vector<Tensor> leaves;
        for (std::size_t i = 0; i < shapes.size(); ++i)
            leaves.push_back(tape.leaf(shapes[i], vals[i], false));
        Tensor out = build(tape, leaves);
        if (probe.empty()) {
            Rng probe_rng(12345);
            probe.resize(out.size());
            for (double& w : probe) w = probe_rng.uniform(-1.0, 1.0);
        }
        double s = 0.0;
        for (std::size_t i = 0; i < out.size(); ++i) s += out.values()[i] * probe[i];
        return s;
    };
    forward_scalar(inputs);  // fixes the probe

    // analytic gradients through the tape
    Tape tape;
    std::vector<Tensor> leaves;
    for (std::size_t i = 0; i < shapes.size(); ++i)
        leaves.push_back(tape.leaf(shapes[i], inputs[i], true));
    Tensor out = build(tape, leaves);
    Tensor probed = mul(out, tape.leaf(out.shape(), probe, false));
    tape.backward(sum(probed));

    GradCheckResult result;
    for (std::size_t i = 0; i < shapes.size(); ++i) {
        const std::vector<double>& analytic = leaves[i].grad();
        for (std::size_t j = 0; j < inputs[i].size(); ++j) {
            const double saved = inputs[i][j];
            inputs[i][j] = saved + eps;
            const double up = forward_scalar(inputs);
            inputs[i][j] = saved - eps;
            const double down = forward_scalar(inputs);
            inputs[i][j] = saved;
            const double numeric = (up - down) / (2.0 * eps);
            result.max_rel_err = std::max(result.max_rel_err, rel_err(analytic[j], numeric));
            ++result.checked;
        }
    }
    return result;
}

/// Finite differences over every parameter of a model against the gradients
/// accumulated by one backward pass. `loss` must be a pure function of the
/// current parameter values.
inline GradCheckResult check_param_gradients(const std::vector<Parameter*>& params,
                                             const std::function<double()>& loss,
                                             const std::function<void()>& backward,
                                             double eps = 1e-6) {
    for (Parameter* p : params) p->zero_grad();
    backward();
    GradCheckResult result;
    for (Parameter* p : params) {
        for (std::size_t j = 0; j < p->value.size(); ++j) {
            const double saved = p->value[j];
            p->value[j] = saved + eps;
            const double up = loss();
            p->value[j] = saved - eps;
            const double down = loss();
            p->value[j] = saved;
            const double numeric = (up - down) / (2.0 * eps);
            result.max_rel_err = std::max(result.max_rel_err, rel_err(p->grad[j], numeric));
            ++result.checked;
        }
    }
    return result;
}

}  // namespace hiertask::testing
