#pragma once

#include <optional>
#include <string>

#include "hiertask/encoder.hpp"
#include "hiertask/layers.hpp"
#include "hiertask/taxonomy.hpp"

namespace hiertask {

enum class ArchitectureMode { single_task, parallel, cascaded };

std::string to_string(ArchitectureMode mode);
ArchitectureMode architecture_mode_from_string(const std::string& name);

struct ForwardOutput {
    Tensor model_logits;
    std::optional<Tensor> make_logits;  // absent iff single_task
};

struct MtlNetworkConfig {
    EncoderSpec encoder;
    ArchitectureMode mode = ArchitectureMode::single_task;
    double dropout_rate = 0.0;
    /// Cascaded-only experiment flag: also drop the make logits before they
    /// are concatenated into the model head input. Off by default.
    bool dropout_on_make_logits = false;
};

/// Shared encoder plus task heads wired per architecture mode:
///   single_task:  model_head(dropout(encode(x)))
///   parallel:     both heads read the same dropped features independently
///   cascaded:     make logits are concatenated to the dropped features and
///                 the model head reads the combined vector; gradients flow
///                 back through the make head (trained end to end).
class MtlNetwork {
public:
    MtlNetwork(MtlNetworkConfig cfg, const Taxonomy& taxonomy, std::uint64_t seed);

    ForwardOutput forward(Tape& tape, const Tensor& x, bool training, Rng& dropout_rng);

    std::vector<Parameter*> parameters();
    std::size_t parameter_count();
    /// Per-sample forward multiply-accumulates, weight matrices only.
    std::size_t flop_count() const;

    const MtlNetworkConfig& config() const { return cfg_; }
    ArchitectureMode mode() const { return cfg_.mode; }
    const Taxonomy& taxonomy() const { return taxonomy_; }
    Encoder& encoder() { return encoder_; }
    DenseLayer& model_head() { return model_head_; }
    DenseLayer* make_head() { return make_head_ ? &*make_head_ : nullptr; }

private:
    MtlNetworkConfig cfg_;
    Taxonomy taxonomy_;
    Encoder encoder_;
    std::optional<DenseLayer> make_head_;
    DenseLayer model_head_;
};

struct HeadParamCounts {
    std::size_t base = 0;             // encoder + single-task model head
    std::size_t parallel_delta = 0;   // extra parameters of the parallel variant
    std::size_t cascaded_extra_delta = 0;  // cascaded minus parallel
};

struct HeadFlopCounts {
    std::size_t parallel_delta = 0;
    std::size_t cascaded_extra_delta = 0;
};

// Closed forms for a feature width d, K makes and M models.
inline std::size_t parallel_param_delta(std::size_t d, std::size_t k) { return k * (d + 1); }
inline std::size_t cascaded_extra_param_delta(std::size_t m, std::size_t k) { return m * k; }
inline std::size_t parallel_flop_delta(std::size_t d, std::size_t k) { return k * d; }
inline std::size_t cascaded_extra_flop_delta(std::size_t m, std::size_t k) { return m * k; }

HeadParamCounts head_parameter_counts(MtlNetwork& net);
HeadFlopCounts head_flop_counts(const MtlNetwork& net);

}  // namespace hiertask
