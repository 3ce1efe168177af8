#pragma once

#include <string>
#include <vector>

#include "hiertask/layers.hpp"
#include "hiertask/tensor.hpp"

namespace hiertask {

enum class EncoderFamily { mlp, tiny_cnn, tiny_attention };

std::string to_string(EncoderFamily family);
EncoderFamily encoder_family_from_string(const std::string& name);

/// Declarative encoder description. All families map a flat input row of
/// numel(input_shape) values to a length-feature_dim vector.
struct EncoderSpec {
    EncoderFamily family = EncoderFamily::mlp;
    std::vector<std::size_t> input_shape = {64};  // {d} flat, or {c,h,w} for tiny_cnn
    std::size_t feature_dim = 64;
    std::vector<std::size_t> hidden = {};  // mlp hidden widths
    std::size_t tokens = 4;                // tiny_attention token count
    std::size_t attn_dim = 32;             // tiny_attention model width

    std::size_t flat_input() const { return numel(input_shape); }
    void validate() const;
};

/// Exact trainable-scalar count from the spec alone (no parameters built).
std::size_t encoder_parameter_count(const EncoderSpec& spec);

class Encoder {
public:
    Encoder(EncoderSpec spec, Rng& rng);

    /// x is [n, flat_input]; reshaped internally as the family requires.
    Tensor encode(Tape& tape, const Tensor& x);

    const EncoderSpec& spec() const { return spec_; }
    std::vector<Parameter*> parameters();
    std::size_t parameter_count();
    /// Per-sample forward multiply-accumulates, weight matrices only.
    std::size_t flops() const;

private:
    EncoderSpec spec_;
    // mlp
    std::vector<DenseLayer> mlp_layers_;
    // tiny_cnn: two conv blocks then projection from pooled channels
    std::vector<Conv2dLayer> conv_layers_;
    DenseLayer cnn_proj_;
    // tiny_attention: patch projection, learned token bias, one block, projection
    DenseLayer patch_proj_;
    Parameter token_bias_;
    AttentionBlock attn_block_;
    DenseLayer attn_proj_;
};

}  // namespace hiertask
