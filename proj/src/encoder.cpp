#include "hiertask/encoder.hpp"

namespace hiertask {

namespace {
constexpr std::size_t kConvChannels1 = 8;
constexpr std::size_t kConvChannels2 = 16;
constexpr std::size_t kConvKernel = 3;
}  // namespace

std::string to_string(EncoderFamily family) {
    switch (family) {
        case EncoderFamily::mlp: return "mlp";
        case EncoderFamily::tiny_cnn: return "tiny_cnn";
        case EncoderFamily::tiny_attention: return "tiny_attention";
    }
    throw ContractError("unknown encoder family");
}

EncoderFamily encoder_family_from_string(const std::string& name) {
    if (name == "mlp") return EncoderFamily::mlp;
    if (name == "tiny_cnn") return EncoderFamily::tiny_cnn;
    if (name == "tiny_attention") return EncoderFamily::tiny_attention;
    throw ConfigError("unknown encoder family '" + name + "'");
}

void EncoderSpec::validate() const {
    if (input_shape.empty() || flat_input() == 0)
        throw ConfigError("encoder input shape must be nonempty");
    if (feature_dim == 0) throw ConfigError("encoder feature_dim must be positive");
    switch (family) {
        case EncoderFamily::mlp:
            for (std::size_t h : hidden)
                if (h == 0) throw ConfigError("mlp hidden width must be positive");
            break;
        case EncoderFamily::tiny_cnn: {
            if (input_shape.size() != 3)
                throw ConfigError("tiny_cnn needs input shape [channels,height,width], got " +
                                  shape_str(input_shape));
            if (input_shape[1] < 4 || input_shape[2] < 4)
                throw ConfigError("tiny_cnn needs spatial extents >= 4, got " +
                                  shape_str(input_shape));
            break;
        }
        case EncoderFamily::tiny_attention:
            if (tokens == 0 || attn_dim == 0)
                throw ConfigError("tiny_attention needs positive tokens and attn_dim");
            if (flat_input() % tokens != 0)
                throw ConfigError("tiny_attention input size " + std::to_string(flat_input()) +
                                  " is not divisible into " + std::to_string(tokens) + " tokens");
            break;
    }
}

std::size_t encoder_parameter_count(const EncoderSpec& spec) {
    spec.validate();
    auto dense = [](std::size_t in, std::size_t out) { return in * out + out; };
    switch (spec.family) {
        case EncoderFamily::mlp: {
            std::size_t total = 0;
            std::size_t in = spec.flat_input();
            for (std::size_t h : spec.hidden) {
                total += dense(in, h);
                in = h;
            }
            return total + dense(in, spec.feature_dim);
        }
        case EncoderFamily::tiny_cnn: {
            const std::size_t c = spec.input_shape[0];
            const std::size_t k2 = kConvKernel * kConvKernel;
            return kConvChannels1 * c * k2 + kConvChannels1 +
                   kConvChannels2 * kConvChannels1 * k2 + kConvChannels2 +
                   dense(kConvChannels2, spec.feature_dim);
        }
        case EncoderFamily::tiny_attention: {
            const std::size_t pd = spec.flat_input() / spec.tokens;
            const std::size_t ad = spec.attn_dim;
            return dense(pd, ad) + spec.tokens * ad + 4 * dense(ad, ad) + 2 * ad +
                   dense(ad, spec.feature_dim);
        }
    }
    throw ContractError("unknown encoder family");
}

Encoder::Encoder(EncoderSpec spec, Rng& rng) : spec_(std::move(spec)) {
    spec_.validate();
    switch (spec_.family) {
        case EncoderFamily::mlp: {
            std::size_t in = spec_.flat_input();
            for (std::size_t h : spec_.hidden) {
                mlp_layers_.emplace_back(in, h, rng);
                in = h;
            }
            mlp_layers_.emplace_back(in, spec_.feature_dim, rng);
            break;
        }
        case EncoderFamily::tiny_cnn: {
            conv_layers_.emplace_back(spec_.input_shape[0], kConvChannels1, kConvKernel, 1, 1, rng);
            conv_layers_.emplace_back(kConvChannels1, kConvChannels2, kConvKernel, 1, 1, rng);
            cnn_proj_ = DenseLayer(kConvChannels2, spec_.feature_dim, rng);
            break;
        }
        case EncoderFamily::tiny_attention: {
            const std::size_t pd = spec_.flat_input() / spec_.tokens;
            patch_proj_ = DenseLayer(pd, spec_.attn_dim, rng);
            token_bias_ = Parameter({spec_.tokens, spec_.attn_dim},
                                    std::vector<double>(spec_.tokens * spec_.attn_dim, 0.0));
            attn_block_ = AttentionBlock(spec_.attn_dim, rng);
            attn_proj_ = DenseLayer(spec_.attn_dim, spec_.feature_dim, rng);
            break;
        }
    }
}

Tensor Encoder::encode(Tape& tape, const Tensor& x) {
    if (x.rank() != 2 || x.extent(1) != spec_.flat_input())
        throw DimensionError("encoder expects [n," + std::to_string(spec_.flat_input()) +
                             "], got " + shape_str(x.shape()));
    const std::size_t n = x.extent(0);
    switch (spec_.family) {
        case EncoderFamily::mlp: {
            Tensor h = x;
            for (std::size_t i = 0; i < mlp_layers_.size(); ++i) {
                h = mlp_layers_[i].forward(tape, h);
                if (i + 1 < mlp_layers_.size()) h = relu(h);
            }
            return h;
        }
        case EncoderFamily::tiny_cnn: {
            Tensor img = reshape(x, {n, spec_.input_shape[0], spec_.input_shape[1],
                                     spec_.input_shape[2]});
            Tensor h = avg_pool2d(relu(conv_layers_[0].forward(tape, img)), 2);
            h = avg_pool2d(relu(conv_layers_[1].forward(tape, h)), 2);
            return cnn_proj_.forward(tape, global_avg_pool(h));
        }
        case EncoderFamily::tiny_attention: {
            const std::size_t pd = spec_.flat_input() / spec_.tokens;
            Tensor toks = reshape(x, {n, spec_.tokens, pd});
            Tensor emb = add_bias(patch_proj_.forward(tape, toks), tape.leaf_of(token_bias_));
            Tensor ctx = attn_block_.forward(tape, emb);
            return attn_proj_.forward(tape, mean_axis(ctx, 1));
        }
    }
    throw ContractError("unknown encoder family");
}

std::vector<Parameter*> Encoder::parameters() {
    std::vector<Parameter*> ps;
    auto append = [&ps](std::vector<Parameter*> more) {
        ps.insert(ps.end(), more.begin(), more.end());
    };
    switch (spec_.family) {
        case EncoderFamily::mlp:
            for (DenseLayer& l : mlp_layers_) append(l.parameters());
            break;
        case EncoderFamily::tiny_cnn:
            for (Conv2dLayer& l : conv_layers_) append(l.parameters());
            append(cnn_proj_.parameters());
            break;
        case EncoderFamily::tiny_attention:
            append(patch_proj_.parameters());
            ps.push_back(&token_bias_);
            append(attn_block_.parameters());
            append(attn_proj_.parameters());
            break;
    }
    return ps;
}

std::size_t Encoder::parameter_count() {
    std::size_t total = 0;
    for (Parameter* p : parameters()) total += p->size();
    return total;
}

std::size_t Encoder::flops() const {
    switch (spec_.family) {
        case EncoderFamily::mlp: {
            std::size_t total = 0;
            for (const DenseLayer& l : mlp_layers_) total += l.flops();
            return total;
        }
        case EncoderFamily::tiny_cnn: {
            const std::size_t h = spec_.input_shape[1], w = spec_.input_shape[2];
            return conv_layers_[0].flops(h, w) + conv_layers_[1].flops(h / 2, w / 2) +
                   cnn_proj_.flops();
        }
        case EncoderFamily::tiny_attention:
            return spec_.tokens * patch_proj_.flops() + attn_block_.flops(spec_.tokens) +
                   attn_proj_.flops();
    }
    throw ContractError("unknown encoder family");
}

}  // namespace hiertask
