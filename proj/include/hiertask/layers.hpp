#pragma once

#include <cstddef>
#include <vector>

#include "hiertask/rng.hpp"
#include "hiertask/tensor.hpp"

namespace hiertask {

/// Glorot-style symmetric uniform init: U(-sqrt(6/(fan_in+fan_out)), +...).
std::vector<double> glorot_uniform(std::size_t fan_in, std::size_t fan_out, std::size_t count,
                                   Rng& rng);

/// Fully-connected layer y = x W + b with W[in,out], b[out].
struct DenseLayer {
    Parameter weight;
    Parameter bias;
    std::size_t in_dim = 0;
    std::size_t out_dim = 0;

    DenseLayer() = default;
    DenseLayer(std::size_t in, std::size_t out, Rng& rng);

    Tensor forward(Tape& tape, const Tensor& x);
    std::size_t parameter_count() const { return in_dim * out_dim + out_dim; }
    /// Multiply-accumulate count per sample (weight matrix only, bias excluded).
    std::size_t flops() const { return in_dim * out_dim; }
    std::vector<Parameter*> parameters() { return {&weight, &bias}; }
};

/// 2-d cross-correlation layer with kernels [out_ch,in_ch,kh,kw] and bias [out_ch].
struct Conv2dLayer {
    Parameter kernels;
    Parameter bias;
    std::size_t in_channels = 0;
    std::size_t out_channels = 0;
    std::size_t kernel = 0;
    std::size_t stride = 1;
    std::size_t padding = 0;

    Conv2dLayer() = default;
    Conv2dLayer(std::size_t in_ch, std::size_t out_ch, std::size_t kernel_size, std::size_t stride_in,
                std::size_t padding_in, Rng& rng);

    Tensor forward(Tape& tape, const Tensor& x);
    std::size_t parameter_count() const {
        return out_channels * in_channels * kernel * kernel + out_channels;
    }
    std::size_t flops(std::size_t out_h, std::size_t out_w) const {
        return out_channels * in_channels * kernel * kernel * out_h * out_w;
    }
    std::vector<Parameter*> parameters() { return {&kernels, &bias}; }
};

/// Single-head self-attention block: layer norm, scaled dot-product attention
/// (scale 1/sqrt(d)), output projection, residual add. Input [n,t,d] -> [n,t,d].
struct AttentionBlock {
    DenseLayer query;
    DenseLayer key;
    DenseLayer value;
    DenseLayer output;
    Parameter ln_scale;
    Parameter ln_shift;
    std::size_t model_dim = 0;

    AttentionBlock() = default;
    AttentionBlock(std::size_t dim, Rng& rng);

    struct Result {
        Tensor output;
        Tensor weights;  // attention rows, [n,t,t]
    };

    Result forward_with_weights(Tape& tape, const Tensor& x);
    Tensor forward(Tape& tape, const Tensor& x) { return forward_with_weights(tape, x).output; }
    std::size_t parameter_count() const;
    std::size_t flops(std::size_t tokens) const;
    std::vector<Parameter*> parameters();
};

/// Dropout placement and rate. Rate 0 or eval mode is an exact identity.
struct DropoutSpec {
    enum class Mode { train, eval };
    double rate = 0.0;
    Mode mode = Mode::eval;
};

Tensor dropout_forward(const DropoutSpec& spec, const Tensor& x, Rng& rng);

}  // namespace hiertask
