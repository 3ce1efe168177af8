#include "hiertask/layers.hpp"

#include <cmath>

namespace hiertask {

std::vector<double> glorot_uniform(std::size_t fan_in, std::size_t fan_out, std::size_t count,
                                   Rng& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::vector<double> v(count);
    for (double& x : v) x = rng.uniform(-bound, bound);
    return v;
}

// ---- dense ------------------------------------------------------------------

DenseLayer::DenseLayer(std::size_t in, std::size_t out, Rng& rng) : in_dim(in), out_dim(out) {
    weight = Parameter({in, out}, glorot_uniform(in, out, in * out, rng));
    bias = Parameter({out}, std::vector<double>(out, 0.0));
}

Tensor DenseLayer::forward(Tape& tape, const Tensor& x) {
    if (x.rank() < 2 || x.shape().back() != in_dim)
        throw DimensionError("dense layer expects trailing extent " + std::to_string(in_dim) +
                             ", got " + shape_str(x.shape()));
    Tensor w = tape.leaf_of(weight);
    Tensor b = tape.leaf_of(bias);
    if (x.rank() == 2) return add_bias(matmul(x, w), b);
    // apply tokenwise on [.., t, in] by flattening the leading axes
    std::vector<std::size_t> lead(x.shape().begin(), x.shape().end() - 1);
    Tensor flat = reshape(x, {x.size() / in_dim, in_dim});
    Tensor y = add_bias(matmul(flat, w), b);
    lead.push_back(out_dim);
    return reshape(y, std::move(lead));
}

// ---- conv -------------------------------------------------------------------

Conv2dLayer::Conv2dLayer(std::size_t in_ch, std::size_t out_ch, std::size_t kernel_size,
                         std::size_t stride_in, std::size_t padding_in, Rng& rng)
    : in_channels(in_ch), out_channels(out_ch), kernel(kernel_size), stride(stride_in),
      padding(padding_in) {
    const std::size_t fan_in = in_ch * kernel_size * kernel_size;
    const std::size_t fan_out = out_ch * kernel_size * kernel_size;
    kernels = Parameter({out_ch, in_ch, kernel_size, kernel_size},
                        glorot_uniform(fan_in, fan_out, out_ch * fan_in, rng));
    bias = Parameter({out_ch}, std::vector<double>(out_ch, 0.0));
}

Tensor Conv2dLayer::forward(Tape& tape, const Tensor& x) {
    Tensor k = tape.leaf_of(kernels);
    Tensor b = tape.leaf_of(bias);
    return conv2d(x, k, b, stride, padding);
}

// ---- attention --------------------------------------------------------------

AttentionBlock::AttentionBlock(std::size_t dim, Rng& rng)
    : query(dim, dim, rng), key(dim, dim, rng), value(dim, dim, rng), output(dim, dim, rng),
      model_dim(dim) {
    ln_scale = Parameter({dim}, std::vector<double>(dim, 1.0));
    ln_shift = Parameter({dim}, std::vector<double>(dim, 0.0));
}

AttentionBlock::Result AttentionBlock::forward_with_weights(Tape& tape, const Tensor& x) {
    if (x.rank() != 3 || x.extent(2) != model_dim)
        throw DimensionError("attention block expects [n,t," + std::to_string(model_dim) +
                             "], got " + shape_str(x.shape()));
    Tensor gamma = tape.leaf_of(ln_scale);
    Tensor beta = tape.leaf_of(ln_shift);
    Tensor normed = layer_norm(x, gamma, beta);
    Tensor q = query.forward(tape, normed);
    Tensor k = key.forward(tape, normed);
    Tensor v = value.forward(tape, normed);
    Tensor scores = scale(bmm(q, transpose(k)), 1.0 / std::sqrt(static_cast<double>(model_dim)));
    Tensor attn = softmax(scores);
    Tensor context = bmm(attn, v);
    Tensor projected = output.forward(tape, context);
    return {add(x, projected), attn};
}

std::size_t AttentionBlock::parameter_count() const {
    return query.parameter_count() + key.parameter_count() + value.parameter_count() +
           output.parameter_count() + ln_scale.size() + ln_shift.size();
}

std::size_t AttentionBlock::flops(std::size_t tokens) const {
    // projection MACs per token plus the two [t,d]x[d,t]-shaped products
    const std::size_t proj = tokens * (query.flops() + key.flops() + value.flops() + output.flops());
    const std::size_t attn = 2 * tokens * tokens * model_dim;
    return proj + attn;
}

std::vector<Parameter*> AttentionBlock::parameters() {
    std::vector<Parameter*> ps;
    for (Parameter* p : query.parameters()) ps.push_back(p);
    for (Parameter* p : key.parameters()) ps.push_back(p);
    for (Parameter* p : value.parameters()) ps.push_back(p);
    for (Parameter* p : output.parameters()) ps.push_back(p);
    ps.push_back(&ln_scale);
    ps.push_back(&ln_shift);
    return ps;
}

// ---- dropout ----------------------------------------------------------------

Tensor dropout_forward(const DropoutSpec& spec, const Tensor& x, Rng& rng) {
    return dropout(x, spec.rate, spec.mode == DropoutSpec::Mode::train, rng);
}

}  // namespace hiertask
