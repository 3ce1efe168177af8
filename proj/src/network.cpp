#include "hiertask/network.hpp"

namespace hiertask {

std::string to_string(ArchitectureMode mode) {
    switch (mode) {
        case ArchitectureMode::single_task: return "single_task";
        case ArchitectureMode::parallel: return "parallel";
        case ArchitectureMode::cascaded: return "cascaded";
    }
    throw ContractError("unknown architecture mode");
}

ArchitectureMode architecture_mode_from_string(const std::string& name) {
    if (name == "single_task") return ArchitectureMode::single_task;
    if (name == "parallel") return ArchitectureMode::parallel;
    if (name == "cascaded") return ArchitectureMode::cascaded;
    throw ConfigError("unknown architecture mode '" + name + "'");
}

namespace {

Encoder build_encoder(const EncoderSpec& spec, std::uint64_t seed) {
    Rng rng = Rng::derive(seed, rng_stream::encoder);
    return Encoder(spec, rng);
}

}  // namespace

MtlNetwork::MtlNetwork(MtlNetworkConfig cfg, const Taxonomy& taxonomy, std::uint64_t seed)
    : cfg_(std::move(cfg)), taxonomy_(taxonomy), encoder_(build_encoder(cfg_.encoder, seed)) {
    taxonomy_.validate();
    if (cfg_.dropout_rate < 0.0 || cfg_.dropout_rate >= 1.0)
        throw ConfigError("dropout rate " + std::to_string(cfg_.dropout_rate) + " outside [0, 1)");
    const std::size_t d = cfg_.encoder.feature_dim;
    const std::size_t k = taxonomy_.make_count();
    const std::size_t m = taxonomy_.model_count();
    // The make head draws from its own stream so the encoder and model head
    // initialize identically across modes that share their structure.
    if (cfg_.mode != ArchitectureMode::single_task) {
        Rng make_rng = Rng::derive(seed, rng_stream::make_head);
        make_head_.emplace(d, k, make_rng);
    }
    Rng model_rng = Rng::derive(seed, rng_stream::model_head);
    const std::size_t model_in = cfg_.mode == ArchitectureMode::cascaded ? d + k : d;
    model_head_ = DenseLayer(model_in, m, model_rng);
}

ForwardOutput MtlNetwork::forward(Tape& tape, const Tensor& x, bool training, Rng& dropout_rng) {
    Tensor features = encoder_.encode(tape, x);
    Tensor dropped = dropout(features, cfg_.dropout_rate, training, dropout_rng);
    switch (cfg_.mode) {
        case ArchitectureMode::single_task:
            return {model_head_.forward(tape, dropped), std::nullopt};
        case ArchitectureMode::parallel: {
            Tensor make_logits = make_head_->forward(tape, dropped);
            Tensor model_logits = model_head_.forward(tape, dropped);
            return {model_logits, make_logits};
        }
        case ArchitectureMode::cascaded: {
            Tensor make_logits = make_head_->forward(tape, dropped);
            Tensor into_model = cfg_.dropout_on_make_logits
                                    ? dropout(make_logits, cfg_.dropout_rate, training, dropout_rng)
                                    : make_logits;
            Tensor model_logits =
                model_head_.forward(tape, concat({dropped, into_model}, 1));
            return {model_logits, make_logits};
        }
    }
    throw ContractError("unknown architecture mode");
}

std::vector<Parameter*> MtlNetwork::parameters() {
    std::vector<Parameter*> ps = encoder_.parameters();
    if (make_head_)
        for (Parameter* p : make_head_->parameters()) ps.push_back(p);
    for (Parameter* p : model_head_.parameters()) ps.push_back(p);
    return ps;
}

std::size_t MtlNetwork::parameter_count() {
    std::size_t total = 0;
    for (Parameter* p : parameters()) total += p->size();
    return total;
}

std::size_t MtlNetwork::flop_count() const {
    std::size_t total = encoder_.flops() + model_head_.flops();
    if (make_head_) total += make_head_->flops();
    return total;
}

HeadParamCounts head_parameter_counts(MtlNetwork& net) {
    const std::size_t d = net.config().encoder.feature_dim;
    const std::size_t k = net.taxonomy().make_count();
    const std::size_t m = net.taxonomy().model_count();
    HeadParamCounts counts;
    counts.base = net.encoder().parameter_count() + (d + 1) * m;
    counts.parallel_delta = parallel_param_delta(d, k);
    counts.cascaded_extra_delta = cascaded_extra_param_delta(m, k);
    return counts;
}

HeadFlopCounts head_flop_counts(const MtlNetwork& net) {
    const std::size_t d = net.config().encoder.feature_dim;
    const std::size_t k = net.taxonomy().make_count();
    const std::size_t m = net.taxonomy().model_count();
    return {parallel_flop_delta(d, k), cascaded_extra_flop_delta(m, k)};
}

}  // namespace hiertask
