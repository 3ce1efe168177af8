#pragma once

#include <functional>

#include "hiertask/network.hpp"
#include "hiertask/taxonomy.hpp"

namespace hiertask {

/// Task weights of the joint loss: lambda1 scales the model term, lambda2 the
/// make term. Non-negative, not both zero.
struct LossWeights {
    double lambda1 = 1.0;
    double lambda2 = 0.0;

    void validate() const {
        if (lambda1 < 0.0 || lambda2 < 0.0) throw ConfigError("loss weights must be non-negative");
        if (lambda1 == 0.0 && lambda2 == 0.0) throw ConfigError("loss weights are both zero");
    }
};

/// lambda1 * CE(model) + lambda2 * CE(make). The make term is omitted in
/// single-task outputs regardless of lambda2; zero-weight terms contribute
/// nothing (value and gradient alike).
Tensor joint_loss(const ForwardOutput& out, const std::vector<int>& model_labels,
                  const std::vector<int>& make_labels, const LossWeights& weights);

/// One-cycle learning-rate policy with cosine interpolation in each phase:
/// rise from max_lr/div_factor to max_lr over pct_up of the steps, then decay
/// to max_lr/(div_factor*final_div_factor), which is below the initial rate.
struct OneCycleSchedule {
    double max_lr = 3e-4;
    double div_factor = 25.0;
    double final_div_factor = 1e4;
    double pct_up = 0.3;
    std::size_t total_steps = 1;

    void validate() const;
    std::size_t peak_step() const;
    double initial_lr() const { return max_lr / div_factor; }
    double final_lr() const { return initial_lr() / final_div_factor; }
};

double lr_at(const OneCycleSchedule& schedule, std::size_t step);

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    std::vector<double> m;
    std::vector<double> v;
    std::size_t step = 0;
};

/// One bias-corrected Adam update of `value` in place.
void adam_step(AdamState& state, std::vector<double>& value, const std::vector<double>& grad,
               double lr, const AdamConfig& cfg);

class AdamOptimizer {
public:
    explicit AdamOptimizer(std::vector<Parameter*> params, AdamConfig cfg = {});

    void zero_grad();
    void step(double lr);

private:
    std::vector<Parameter*> params_;
    std::vector<AdamState> states_;
    AdamConfig cfg_;
};

struct TrainConfig {
    LossWeights weights;
    std::size_t epochs = 25;
    std::size_t batch_size = 32;
    double base_lr = 3e-4;
    /// The quoted rate is read as the cycle maximum by default; the
    /// alternative reading treats it as the initial rate.
    bool lr_is_max = true;
    double div_factor = 25.0;
    double final_div_factor = 1e4;
    double pct_up = 0.3;
    std::uint64_t seed = 0;
    AdamConfig adam;
};

/// Schedule for a whole run under either reading of base_lr.
OneCycleSchedule make_schedule(const TrainConfig& cfg, std::size_t steps_per_epoch);

struct EpochRecord {
    std::size_t epoch = 0;  // 1-based
    double train_loss = 0.0;
    double val_model_acc = 0.0;
    double val_make_acc = 0.0;
    double lr = 0.0;  // rate used for the last step of the epoch
};

struct TrainedRun {
    std::vector<EpochRecord> epochs;
    std::size_t best_epoch = 0;  // 0 when no epoch ran
    double best_val_model_acc = 0.0;
};

using EpochObserver = std::function<void(const EpochRecord&, MtlNetwork&)>;

/// Deterministic epoch loop: seeded shuffle order, dropout masks and init;
/// selects the best validation model accuracy and leaves the network holding
/// that checkpoint. When the validation split is empty the training split
/// doubles as the selection set.
TrainedRun train(MtlNetwork& net, const DatasetSplit& data, const TrainConfig& cfg,
                 const EpochObserver& observer = {});

}  // namespace hiertask
