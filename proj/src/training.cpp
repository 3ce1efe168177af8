#include "hiertask/training.hpp"

#include <cmath>
#include <numeric>

#include "hiertask/metrics.hpp"

namespace hiertask {

Tensor joint_loss(const ForwardOutput& out, const std::vector<int>& model_labels,
                  const std::vector<int>& make_labels, const LossWeights& weights) {
    weights.validate();
    if (!out.model_logits.defined()) throw ContractError("joint_loss needs model logits");
    if (model_labels.empty()) throw ContractError("joint_loss needs model labels");

    Tensor result;
    if (weights.lambda1 != 0.0) {
        Tensor model_term = cross_entropy(out.model_logits, model_labels);
        result = weights.lambda1 == 1.0 ? model_term : scale(model_term, weights.lambda1);
    }
    if (out.make_logits) {
        if (make_labels.size() != out.make_logits->extent(0))
            throw ContractError("joint_loss needs one make label per row in multi-task mode");
        if (weights.lambda2 != 0.0) {
            Tensor make_term = cross_entropy(*out.make_logits, make_labels);
            Tensor scaled = weights.lambda2 == 1.0 ? make_term : scale(make_term, weights.lambda2);
            result = result.defined() ? add(result, scaled) : scaled;
        }
    }
    if (!result.defined()) {
        // lambda1 == 0 in single-task mode: the surviving term has weight zero
        result = scale(cross_entropy(out.model_logits, model_labels), 0.0);
    }
    return result;
}

// ---- one-cycle schedule --------------------------------------------------------

void OneCycleSchedule::validate() const {
    if (max_lr <= 0.0) throw ConfigError("max_lr must be positive");
    if (div_factor <= 1.0 || final_div_factor <= 1.0)
        throw ConfigError("one-cycle div factors must exceed 1");
    if (pct_up <= 0.0 || pct_up >= 1.0) throw ConfigError("pct_up must lie in (0, 1)");
    if (total_steps < 2) throw ConfigError("one-cycle schedule needs at least 2 steps");
    if (peak_step() == 0 || peak_step() >= total_steps)
        throw ConfigError("one-cycle peak falls outside the schedule");
}

std::size_t OneCycleSchedule::peak_step() const {
    return static_cast<std::size_t>(
        std::ceil(pct_up * static_cast<double>(total_steps)));
}

namespace {
// Cosine interpolation from a at t=0 to b at t=1; strictly monotone inside.
double cosine_interp(double a, double b, double t) {
    return b + (a - b) * (1.0 + std::cos(std::numbers::pi * t)) * 0.5;
}
}  // namespace

double lr_at(const OneCycleSchedule& schedule, std::size_t step) {
    schedule.validate();
    if (step > schedule.total_steps)
        throw ContractError("schedule step " + std::to_string(step) + " beyond total " +
                            std::to_string(schedule.total_steps));
    const std::size_t peak = schedule.peak_step();
    if (step == 0) return schedule.initial_lr();
    if (step == peak) return schedule.max_lr;
    if (step == schedule.total_steps) return schedule.final_lr();
    if (step < peak) {
        const double t = static_cast<double>(step) / static_cast<double>(peak);
        return cosine_interp(schedule.initial_lr(), schedule.max_lr, t);
    }
    const double t =
        static_cast<double>(step - peak) / static_cast<double>(schedule.total_steps - peak);
    return cosine_interp(schedule.max_lr, schedule.final_lr(), t);
}

// ---- Adam -----------------------------------------------------------------------

void adam_step(AdamState& state, std::vector<double>& value, const std::vector<double>& grad,
               double lr, const AdamConfig& cfg) {
    if (state.m.empty()) {
        state.m.assign(value.size(), 0.0);
        state.v.assign(value.size(), 0.0);
    }
    if (grad.size() != value.size() || state.m.size() != value.size())
        throw ContractError("adam buffers disagree: " + std::to_string(value.size()) +
                            " parameters, " + std::to_string(grad.size()) + " gradients, " +
                            std::to_string(state.m.size()) + " moments");
    ++state.step;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < value.size(); ++i) {
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * grad[i];
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
        const double mhat = state.m[i] / bc1;
        const double vhat = state.v[i] / bc2;
        value[i] -= lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
}

AdamOptimizer::AdamOptimizer(std::vector<Parameter*> params, AdamConfig cfg)
    : params_(std::move(params)), states_(params_.size()), cfg_(cfg) {}

void AdamOptimizer::zero_grad() {
    for (Parameter* p : params_) p->zero_grad();
}

void AdamOptimizer::step(double lr) {
    for (std::size_t i = 0; i < params_.size(); ++i)
        adam_step(states_[i], params_[i]->value, params_[i]->grad, lr, cfg_);
}

// ---- epoch loop --------------------------------------------------------------------

namespace {

void check_taxonomy_consistency(const MtlNetwork& net, const std::vector<Sample>& samples) {
    const Taxonomy& tax = net.taxonomy();
    for (const Sample& s : samples) {
        if (s.model_label < 0 || static_cast<std::size_t>(s.model_label) >= tax.model_count())
            throw DataError("sample model label " + std::to_string(s.model_label) +
                            " outside the network taxonomy");
        if (s.make_label != tax.parent[static_cast<std::size_t>(s.model_label)])
            throw TaxonomyError("sample make label disagrees with the network taxonomy");
    }
}

struct ParamSnapshot {
    std::vector<std::vector<double>> values;

    static ParamSnapshot capture(MtlNetwork& net) {
        ParamSnapshot snap;
        for (Parameter* p : net.parameters()) snap.values.push_back(p->value);
        return snap;
    }

    void restore(MtlNetwork& net) const {
        const std::vector<Parameter*> params = net.parameters();
        for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = values[i];
    }
};

}  // namespace

OneCycleSchedule make_schedule(const TrainConfig& cfg, std::size_t steps_per_epoch) {
    OneCycleSchedule schedule;
    schedule.max_lr = cfg.lr_is_max ? cfg.base_lr : cfg.base_lr * cfg.div_factor;
    schedule.div_factor = cfg.div_factor;
    schedule.final_div_factor = cfg.final_div_factor;
    schedule.pct_up = cfg.pct_up;
    schedule.total_steps = cfg.epochs * steps_per_epoch;
    schedule.validate();
    return schedule;
}

TrainedRun train(MtlNetwork& net, const DatasetSplit& data, const TrainConfig& cfg,
                 const EpochObserver& observer) {
    if (data.train.empty()) throw DataError("training split is empty");
    if (cfg.batch_size == 0) throw ConfigError("batch size must be positive");
    cfg.weights.validate();
    check_taxonomy_consistency(net, data.train);
    check_taxonomy_consistency(net, data.val);

    TrainedRun run;
    if (cfg.epochs == 0) return run;

    const std::size_t n_train = data.train.size();
    const std::size_t steps_per_epoch = (n_train + cfg.batch_size - 1) / cfg.batch_size;
    const OneCycleSchedule schedule = make_schedule(cfg, steps_per_epoch);

    Rng shuffle_rng = Rng::derive(cfg.seed, rng_stream::shuffle);
    Rng dropout_rng = Rng::derive(cfg.seed, rng_stream::dropout);
    AdamOptimizer optimizer(net.parameters(), cfg.adam);
    // empty validation split: select on the training split instead
    const std::vector<Sample>& selection = data.val.empty() ? data.train : data.val;

    std::vector<std::size_t> order(n_train);
    std::iota(order.begin(), order.end(), 0);

    double best_acc = -1.0;
    ParamSnapshot best = ParamSnapshot::capture(net);
    std::size_t global_step = 0;

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        double loss_sum = 0.0;
        double last_lr = 0.0;
        for (std::size_t first = 0; first < n_train; first += cfg.batch_size) {
            const std::size_t count = std::min(cfg.batch_size, n_train - first);
            Tape tape;
            Tensor x = features_tensor(tape, data.train, order, first, count);
            ForwardOutput out = net.forward(tape, x, true, dropout_rng);
            std::vector<int> batch_model(count);
            std::vector<int> batch_make(count);
            for (std::size_t i = 0; i < count; ++i) {
                batch_model[i] = data.train[order[first + i]].model_label;
                batch_make[i] = data.train[order[first + i]].make_label;
            }
            Tensor loss = joint_loss(out, batch_model, batch_make, cfg.weights);
            const double loss_value = loss.scalar();
            if (!std::isfinite(loss_value))
                throw DivergenceError("loss is not finite at epoch " + std::to_string(epoch));
            loss_sum += loss_value * static_cast<double>(count);

            optimizer.zero_grad();
            tape.backward(loss);
            tape.accumulate_param_grads();
            last_lr = lr_at(schedule, global_step);
            optimizer.step(last_lr);
            ++global_step;
        }

        MetricsReport val = evaluate(net, selection);
        EpochRecord record;
        record.epoch = epoch;
        record.train_loss = loss_sum / static_cast<double>(n_train);
        record.val_model_acc = val.model_acc;
        record.val_make_acc = val.make_acc_direct ? *val.make_acc_direct : val.make_acc_derived;
        record.lr = last_lr;
        run.epochs.push_back(record);

        if (record.val_model_acc > best_acc) {
            best_acc = record.val_model_acc;
            best = ParamSnapshot::capture(net);
            run.best_epoch = epoch;
            run.best_val_model_acc = record.val_model_acc;
        }
        if (observer) observer(record, net);
    }

    best.restore(net);
    return run;
}

}  // namespace hiertask
