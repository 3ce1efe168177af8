#include "hiertask/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace hiertask {

std::size_t numel(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t e : shape) n *= e;
    return n;
}

std::string shape_str(const std::vector<std::size_t>& shape) {
    std::ostringstream os;
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    return shape.empty() ? std::string("scalar") : os.str();
}

Parameter::Parameter(std::vector<std::size_t> shape_in, std::vector<double> value_in)
    : shape(std::move(shape_in)), value(std::move(value_in)) {
    if (numel(shape) != value.size())
        throw DimensionError("parameter shape " + shape_str(shape) + " does not match " +
                             std::to_string(value.size()) + " values");
    grad.assign(value.size(), 0.0);
}

// ---- Tensor ----------------------------------------------------------------

namespace {
const Tape& deref(const Tape* t) {
    if (!t) throw ContractError("tensor is not bound to a tape");
    return *t;
}
}  // namespace

const std::vector<std::size_t>& Tensor::shape() const { return deref(tape_).shape_of(idx_); }
std::size_t Tensor::size() const { return values().size(); }
const std::vector<double>& Tensor::values() const { return deref(tape_).value_of(idx_); }

const std::vector<double>& Tensor::grad() const {
    if (!tape_) throw ContractError("tensor is not bound to a tape");
    if (!tape_->tracked_of(idx_)) throw ContractError("gradient requested for an untracked tensor");
    return tape_->grad_of(idx_);
}

bool Tensor::tracked() const { return deref(tape_).tracked_of(idx_); }

double Tensor::scalar() const {
    const auto& v = values();
    if (v.size() != 1)
        throw ContractError("scalar() on tensor of shape " + shape_str(shape()));
    return v[0];
}

// ---- Tape -------------------------------------------------------------------

Tensor Tape::leaf(std::vector<std::size_t> shape, std::vector<double> values, bool requires_grad) {
    if (numel(shape) != values.size())
        throw DimensionError("leaf shape " + shape_str(shape) + " does not match " +
                             std::to_string(values.size()) + " values");
    return alloc(std::move(shape), std::move(values), requires_grad);
}

Tensor Tape::leaf_of(Parameter& p) {
    Tensor t = alloc(p.shape, p.value, true);
    entries_[t.index()].param = &p;
    return t;
}

Tensor Tape::alloc(std::vector<std::size_t> shape, std::vector<double> values, bool tracked) {
    Entry e;
    e.shape = std::move(shape);
    e.value = std::move(values);
    e.tracked = tracked;
    if (tracked) e.grad.assign(e.value.size(), 0.0);
    entries_.push_back(std::move(e));
    return Tensor(this, entries_.size() - 1);
}

void Tape::record(std::function<void(Tape&)> backward_step) {
    nodes_.push_back(std::move(backward_step));
}

std::vector<double>& Tape::grad_of(std::size_t idx) {
    Entry& e = entries_.at(idx);
    if (!e.tracked) throw ContractError("gradient buffer requested for an untracked tensor");
    return e.grad;
}

void Tape::backward(const Tensor& loss) {
    if (loss.tape() != this) throw ContractError("loss was not produced by this tape");
    if (loss.size() != 1)
        throw ContractError("backward requires a scalar loss, got shape " + shape_str(loss.shape()));
    if (!loss.tracked()) return;  // nothing requires a gradient
    grad_of(loss.index())[0] += 1.0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)(*this);
}

void Tape::accumulate_param_grads() {
    for (Entry& e : entries_) {
        if (!e.param) continue;
        for (std::size_t i = 0; i < e.grad.size(); ++i) e.param->grad[i] += e.grad[i];
    }
}

// ---- op helpers --------------------------------------------------------------

namespace {

Tape& same_tape(const Tensor& a, const Tensor& b) {
    if (!a.defined() || !b.defined()) throw ContractError("operation on an undefined tensor");
    if (a.tape() != b.tape()) throw ContractError("operands live on different tapes");
    return *a.tape();
}

Tape& tape_of(const Tensor& a) {
    if (!a.defined()) throw ContractError("operation on an undefined tensor");
    return *a.tape();
}

void require_rank(const Tensor& t, std::size_t r, const char* op) {
    if (t.rank() != r)
        throw DimensionError(std::string(op) + " expects rank-" + std::to_string(r) +
                             " input, got " + shape_str(t.shape()));
}

// out[r,c] += a[r,k] * b[k,c]
void matmul_accumulate(const double* a, const double* b, double* out,
                       std::size_t r, std::size_t k, std::size_t c) {
    for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t kk = 0; kk < k; ++kk) {
            const double av = a[i * k + kk];
            if (av == 0.0) continue;
            const double* brow = b + kk * c;
            double* orow = out + i * c;
            for (std::size_t j = 0; j < c; ++j) orow[j] += av * brow[j];
        }
    }
}

// out[r,k] += g[r,c] * b[k,c]^T
void matmul_accumulate_bt(const double* g, const double* b, double* out,
                          std::size_t r, std::size_t k, std::size_t c) {
    for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < k; ++j) {
            double s = 0.0;
            const double* grow = g + i * c;
            const double* brow = b + j * c;
            for (std::size_t cc = 0; cc < c; ++cc) s += grow[cc] * brow[cc];
            out[i * k + j] += s;
        }
    }
}

// out[k,c] += a[r,k]^T * g[r,c]
void matmul_accumulate_at(const double* a, const double* g, double* out,
                          std::size_t r, std::size_t k, std::size_t c) {
    for (std::size_t i = 0; i < r; ++i) {
        const double* grow = g + i * c;
        for (std::size_t j = 0; j < k; ++j) {
            const double av = a[i * k + j];
            if (av == 0.0) continue;
            double* orow = out + j * c;
            for (std::size_t cc = 0; cc < c; ++cc) orow[cc] += av * grow[cc];
        }
    }
}

}  // namespace

// ---- linear algebra -----------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    Tape& t = same_tape(a, b);
    require_rank(a, 2, "matmul");
    require_rank(b, 2, "matmul");
    if (a.extent(1) != b.extent(0))
        throw DimensionError("matmul inner extents disagree: " + shape_str(a.shape()) + " x " +
                             shape_str(b.shape()));
    const std::size_t r = a.extent(0), k = a.extent(1), c = b.extent(1);
    std::vector<double> out(r * c, 0.0);
    matmul_accumulate(a.values().data(), b.values().data(), out.data(), r, k, c);
    const bool track = a.tracked() || b.tracked();
    Tensor o = t.alloc({r, c}, std::move(out), track);
    if (track) {
        t.record([ai = a.index(), bi = b.index(), oi = o.index(), r, k, c](Tape& tp) {
            const auto& g = tp.grad_of(oi);
            if (tp.tracked_of(ai))
                matmul_accumulate_bt(g.data(), tp.value_of(bi).data(), tp.grad_of(ai).data(), r, k, c);
            if (tp.tracked_of(bi))
                matmul_accumulate_at(tp.value_of(ai).data(), g.data(), tp.grad_of(bi).data(), r, k, c);
        });
    }
    return o;
}

Tensor bmm(const Tensor& a, const Tensor& b) {
    Tape& t = same_tape(a, b);
    require_rank(a, 3, "bmm");
    require_rank(b, 3, "bmm");
    if (a.extent(0) != b.extent(0) || a.extent(2) != b.extent(1))
        throw DimensionError("bmm shapes disagree: " + shape_str(a.shape()) + " x " +
                             shape_str(b.shape()));
    const std::size_t n = a.extent(0), r = a.extent(1), k = a.extent(2), c = b.extent(2);
    std::vector<double> out(n * r * c, 0.0);
    for (std::size_t s = 0; s < n; ++s)
        matmul_accumulate(a.values().data() + s * r * k, b.values().data() + s * k * c,
                          out.data() + s * r * c, r, k, c);
    const bool track = a.tracked() || b.tracked();
    Tensor o = t.alloc({n, r, c}, std::move(out), track);
    if (track) {
        t.record([ai = a.index(), bi = b.index(), oi = o.index(), n, r, k, c](Tape& tp) {
            const auto& g = tp.grad_of(oi);
            for (std::size_t s = 0; s < n; ++s) {
                const double* gs = g.data() + s * r * c;
                if (tp.tracked_of(ai))
                    matmul_accumulate_bt(gs, tp.value_of(bi).data() + s * k * c,
                                         tp.grad_of(ai).data() + s * r * k, r, k, c);
                if (tp.tracked_of(bi))
                    matmul_accumulate_at(tp.value_of(ai).data() + s * r * k, gs,
                                         tp.grad_of(bi).data() + s * k * c, r, k, c);
            }
        });
    }
    return o;
}

// ---- elementwise ---------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
    Tape& t = same_tape(a, b);
    if (a.shape() != b.shape())
        throw DimensionError("add shapes disagree: " + shape_str(a.shape()) + " vs " +
                             shape_str(b.shape()));
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] + b.values()[i];
    const bool track = a.tracked() || b.tracked();
    Tensor o = t.alloc(a.shape(), std::move(out), track);
    if (track) {
        t.record([ai = a.index(), bi = b.index(), oi = o.index()](Tape& tp) {
            const auto& g = tp.grad_of(oi);
            if (tp.tracked_of(ai)) {
                auto& ga = tp.grad_of(ai);
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
            }
            if (tp.tracked_of(bi)) {
                auto& gb = tp.grad_of(bi);
                for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
            }
        });
    }
    return o;
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
    Tape& t = same_tape(x, bias);
    const auto& xs = x.shape();
    const auto& bs = bias.shape();
    if (bs.empty() || bs.size() > xs.size() ||
        !std::equal(bs.begin(), bs.end(), xs.end() - static_cast<std::ptrdiff_t>(bs.size())))
        throw DimensionError("bias shape " + shape_str(bs) + " is not a suffix of " + shape_str(xs));
    const std::size_t bn = bias.size();
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.values()[i] + bias.values()[i % bn];
    const bool track = x.tracked() || bias.tracked();
    Tensor o = t.alloc(xs, std::move(out), track);
    if (track) {
        t.record([xi = x.index(), bi = bias.index(), oi = o.index(), bn](Tape& tp) {
            const auto& g = tp.grad_of(oi);
            if (tp.tracked_of(xi)) {
                auto& gx = tp.grad_of(xi);
                for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
            }
            if (tp.tracked_of(bi)) {
                auto& gb = tp.grad_of(bi);
                for (std::size_t i = 0; i < g.size(); ++i) gb[i % bn] += g[i];
            }
        });
    }
    return o;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    Tape& t = same_tape(a, b);
    if (a.shape() != b.shape())
        throw DimensionError("mul shapes disagree: " + shape_str(a.shape()) + " vs " +
                             shape_str(b.shape()));
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * b.values()[i];
    const bool track = a.tracked() || b.tracked();
    Tensor o = t.alloc(a.shape(), std::move(out), track);
    if (track) {
        t.record([ai = a.index(), bi = b.index(), oi = o.index()](Tape& tp) {
            const auto& g = tp.grad_of(oi);
            if (tp.tracked_of(ai)) {
                auto& ga = tp.grad_of(ai);
                const auto& bv = tp.value_of(bi);
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
            }
            if (tp.tracked_of(bi)) {
                auto& gb = tp.grad_of(bi);
                const auto& av = tp.value_of(ai);
                for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
            }
        });
    }
    return o;
}

Tensor scale(const Tensor& x, double factor) {
    Tape& t = tape_of(x);
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = factor * x.values()[i];
    Tensor o = t.alloc(x.shape(), std::move(out), x.tracked());
    if (x.tracked()) {
        t.record([xi = x.index(), oi = o.index(), factor](Tape& tp) {
            const auto& g = tp.grad_of(oi);
            auto& gx = tp.grad_of(xi);
            for (std::size_t i = 0; i < g.size(); ++i) gx[i] += factor * g[i];
        });
    }
    return o;
}

Tensor relu(const Tensor& x) {
    Tape& t = tape_of(x);
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.values()[i] > 0.0 ? x.values()[i] : 0.0;
    Tensor o = t.alloc(x.shape(), std::move(out), x.tracked());
    if (x.tracked()) {
        t.record([xi = x.index(), oi = o.index()](Tape& tp) {
            const auto& g = tp.grad_of(oi);
            const auto& xv = tp.value_of(xi);
            auto& gx = tp.grad_of(xi);
            for (std::size_t i = 0; i < g.size(); ++i)
                if (xv[i] > 0.0) gx[i] += g[i];
        });
    }
    return o;
}

Tensor gelu(const Tensor& x) {
    Tape& t = tape_of(x);
    constexpr double inv_sqrt2 = std::numbers::sqrt2 / 2.0;
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double v = x.values()[i];
        out[i] = 0.5 * v * (1.0 + std::erf(v * inv_sqrt2));
    }
    Tensor o = t.alloc(x.shape(), std::move(out), x.tracked());
    if (x.tracked()) {
        t.record([xi = x.index(), oi = o.index()](Tape& tp) {
            constexpr double is2 = std::numbers::sqrt2 / 2.0;
            const double inv_sqrt2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
            const auto& g = tp.grad_of(oi);
            const auto& xv = tp.value_of(xi);
            auto& gx = tp.grad_of(xi);
            for (std::size_t i = 0; i < g.size(); ++i) {
                const double v = xv[i];
                const double cdf = 0.5 * (1.0 + std::erf(v * is2));
                const double pdf = inv_sqrt2pi * std::exp(-0.5 * v * v);
                gx[i] += g[i] * (cdf + v * pdf);
            }
        });
    }
    return o;
}

// ---- reductions ----------------------------------------------------------------

Tensor sum(const Tensor& x) {
    Tape& t = tape_of(x);
    double s = 0.0;
    for (double v : x.values()) s += v;
    Tensor o = t.alloc({1}, {s}, x.tracked());
    if (x.tracked()) {
        t.record([xi = x.index(), oi = o.index()](Tape& tp) {
            const double g = tp.grad_of(oi)[0];
            auto& gx = tp.grad_of(xi);
            for (double& v : gx) v += g;
        });
    }
    return o;
}

Tensor mean(const Tensor& x) {
    Tape& t = tape_of(x);
    if (x.size() == 0) throw DimensionError("mean of an empty tensor");
    double s = 0.0;
    for (double v : x.values()) s += v;
    const double inv_n = 1.0 / static_cast<double>(x.size());
    Tensor o = t.alloc({1}, {s * inv_n}, x.tracked());
    if (x.tracked()) {
        t.record([xi = x.index(), oi = o.index(), inv_n](Tape& tp) {
            const double g = tp.grad_of(oi)[0] * inv_n;
            auto& gx = tp.grad_of(xi);
            for (double& v : gx) v += g;
        });
    }
    return o;
}

Tensor mean_axis(const Tensor& x, std::size_t axis) {
    Tape& t = tape_of(x);
    const auto& xs = x.shape();
    if (axis >= xs.size())
        throw DimensionError("mean_axis axis " + std::to_string(axis) + " out of rank " +
                             std::to_string(xs.size()));
    std::size_t lead = 1, tail = 1;
    for (std::size_t i = 0; i < axis; ++i) lead *= xs[i];
    for (std::size_t i = axis + 1; i < xs.size(); ++i) tail *= xs[i];
    const std::size_t ext = xs[axis];
    std::vector<std::size_t> os;
    for (std::size_t i = 0; i < xs.size(); ++i)
        if (i != axis) os.push_back(xs[i]);
    if (os.empty()) os.push_back(1);
    const double inv_e = 1.0 / static_cast<double>(ext);
    std::vector<double> out(lead * tail, 0.0);
    for (std::size_t l = 0; l < lead; ++l)
        for (std::size_t e = 0; e < ext; ++e)
            for (std::size_t c = 0; c < tail; ++c)
                out[l * tail + c] += x.values()[(l * ext + e) * tail + c] * inv_e;
    Tensor o = t.alloc(std::move(os), std::move(out), x.tracked());
    if (x.tracked()) {
        t.record([xi = x.index(), oi = o.index(), lead, ext, tail, inv_e](Tape& tp) {
            const auto& g = tp.grad_of(oi);
            auto& gx = tp.grad_of(xi);
            for (std::size_t l = 0; l < lead; ++l)
                for (std::size_t e = 0; e < ext; ++e)
                    for (std::size_t c = 0; c < tail; ++c)
                        gx[(l * ext + e) * tail + c] += g[l * tail + c] * inv_e;
        });
    }
    return o;
}

// ---- softmax / cross-entropy ------------------------------------------------------

Tensor softmax(const Tensor& logits) {
    Tape& t = tape_of(logits);
    const auto& xs = logits.shape();
    if (xs.empty() || xs.back() < 1) throw DimensionError("softmax needs a nonempty last axis");
    for (double v : logits.values())
        if (!std::isfinite(v)) throw NumericError("softmax input is not finite");
    const std::size_t c = xs.back();
    const std::size_t rows = logits.size() / c;
    std::vector<double> out(logits.size());
    for (std::size_t r = 0; r < rows; ++r) {
        const double* row = logits.values().data() + r * c;
        double m = row[0];
        for (std::size_t j = 1; j < c; ++j) m = std::max(m, row[j]);
        double denom = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
            out[r * c + j] = std::exp(row[j] - m);
            denom += out[r * c + j];
        }
        const double inv = 1.0 / denom;
        for (std::size_t j = 0; j < c; ++j) out[r * c + j] *= inv;
    }
    Tensor o = t.alloc(xs, std::move(out), logits.tracked());
    if (logits.tracked()) {
        t.record([xi = logits.index(), oi = o.index(), rows, c](Tape& tp) {
            const auto& g = tp.grad_of(oi);
            const auto& y = tp.value_of(oi);
            auto& gx = tp.grad_of(xi);
            for (std::size_t r = 0; r < rows; ++r) {
                double dot = 0.0;
                for (std::size_t j = 0; j < c; ++j) dot += g[r * c + j] * y[r * c + j];
                for (std::size_t j = 0; j < c; ++j)
                    gx[r * c + j] += y[r * c + j] * (g[r * c + j] - dot);
            }
        });
    }
    return o;
}

Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
    Tape& t = tape_of(logits);
    require_rank(logits, 2, "cross_entropy");
    const std::size_t n = logits.extent(0), c = logits.extent(1);
    if (labels.size() != n)
        throw ContractError("cross_entropy got " + std::to_string(labels.size()) + " labels for " +
                            std::to_string(n) + " rows");
    for (std::size_t i = 0; i < n; ++i)
        if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= c)
            throw LabelError("label " + std::to_string(labels[i]) + " at row " + std::to_string(i) +
                             " outside [0, " + std::to_string(c) + ")");
    // probabilities are kept for the backward rule
    std::vector<double> probs(n * c);
    double loss = 0.0;
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double* row = logits.values().data() + i * c;
        double m = row[0];
        for (std::size_t j = 1; j < c; ++j) m = std::max(m, row[j]);
        double denom = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
            probs[i * c + j] = std::exp(row[j] - m);
            denom += probs[i * c + j];
        }
        const double inv = 1.0 / denom;
        for (std::size_t j = 0; j < c; ++j) probs[i * c + j] *= inv;
        loss += (std::log(denom) + m - row[labels[i]]) * inv_n;
    }
    Tensor o = t.alloc({1}, {loss}, logits.tracked());
    if (logits.tracked()) {
        t.record([xi = logits.index(), oi = o.index(), probs = std::move(probs), labels, n, c,
                  inv_n](Tape& tp) {
            const double g = tp.grad_of(oi)[0];
            auto& gx = tp.grad_of(xi);
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < c; ++j) {
                    const double y = (static_cast<std::size_t>(labels[i]) == j) ? 1.0 : 0.0;
                    gx[i * c + j] += g * (probs[i * c + j] - y) * inv_n;
                }
        });
    }
    return o;
}

// ---- structure -----------------------------------------------------------------

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
    if (parts.empty()) throw ContractError("concat of zero tensors");
    Tape& t = tape_of(parts[0]);
    const auto& s0 = parts[0].shape();
    if (axis >= s0.size())
        throw DimensionError("concat axis " + std::to_string(axis) + " out of rank " +
                             std::to_string(s0.size()));
    std::size_t axis_total = 0;
    bool track = false;
    for (const Tensor& p : parts) {
        same_tape(parts[0], p);
        const auto& s = p.shape();
        if (s.size() != s0.size())
            throw DimensionError("concat rank mismatch: " + shape_str(s0) + " vs " + shape_str(s));
        for (std::size_t i = 0; i < s.size(); ++i)
            if (i != axis && s[i] != s0[i])
                throw DimensionError("concat extents disagree off axis: " + shape_str(s0) + " vs " +
                                     shape_str(s));
        axis_total += s[axis];
        track = track || p.tracked();
    }
    std::vector<std::size_t> os = s0;
    os[axis] = axis_total;
    std::size_t lead = 1, tail = 1;
    for (std::size_t i = 0; i < axis; ++i) lead *= s0[i];
    for (std::size_t i = axis + 1; i < s0.size(); ++i) tail *= s0[i];
    std::vector<double> out(numel(os));
    std::vector<std::size_t> chunks;       // per-part elements per lead slice
    std::vector<std::size_t> part_idx;
    chunks.reserve(parts.size());
    const std::size_t out_chunk = axis_total * tail;
    std::size_t offset = 0;
    for (const Tensor& p : parts) {
        const std::size_t chunk = p.shape()[axis] * tail;
        for (std::size_t l = 0; l < lead; ++l)
            std::copy_n(p.values().data() + l * chunk, chunk, out.data() + l * out_chunk + offset);
        offset += chunk;
        chunks.push_back(chunk);
        part_idx.push_back(p.index());
    }
    Tensor o = t.alloc(std::move(os), std::move(out), track);
    if (track) {
        t.record([part_idx, chunks, oi = o.index(), lead, out_chunk](Tape& tp) {
            const auto& g = tp.grad_of(oi);
            std::size_t off = 0;
            for (std::size_t p = 0; p < part_idx.size(); ++p) {
                if (tp.tracked_of(part_idx[p])) {
                    auto& gp = tp.grad_of(part_idx[p]);
                    for (std::size_t l = 0; l < lead; ++l)
                        for (std::size_t i = 0; i < chunks[p]; ++i)
                            gp[l * chunks[p] + i] += g[l * out_chunk + off + i];
                }
                off += chunks[p];
            }
        });
    }
    return o;
}

std::vector<Tensor> split(const Tensor& x, std::size_t axis, const std::vector<std::size_t>& sizes) {
    Tape& t = tape_of(x);
    const auto& xs = x.shape();
    if (axis >= xs.size())
        throw DimensionError("split axis " + std::to_string(axis) + " out of rank " +
                             std::to_string(xs.size()));
    std::size_t total = 0;
    for (std::size_t s : sizes) total += s;
    if (total != xs[axis])
        throw DimensionError("split sizes sum to " + std::to_string(total) + ", axis extent is " +
                             std::to_string(xs[axis]));
    std::size_t lead = 1, tail = 1;
    for (std::size_t i = 0; i < axis; ++i) lead *= xs[i];
    for (std::size_t i = axis + 1; i < xs.size(); ++i) tail *= xs[i];
    const std::size_t in_chunk = xs[axis] * tail;
    std::vector<Tensor> outs;
    std::size_t offset = 0;
    for (std::size_t s : sizes) {
        std::vector<std::size_t> os = xs;
        os[axis] = s;
        const std::size_t chunk = s * tail;
        std::vector<double> vals(lead * chunk);
        for (std::size_t l = 0; l < lead; ++l)
            std::copy_n(x.values().data() + l * in_chunk + offset, chunk, vals.data() + l * chunk);
        Tensor o = t.alloc(std::move(os), std::move(vals), x.tracked());
        if (x.tracked()) {
            t.record([xi = x.index(), oi = o.index(), lead, chunk, in_chunk, offset](Tape& tp) {
                const auto& g = tp.grad_of(oi);
                auto& gx = tp.grad_of(xi);
                for (std::size_t l = 0; l < lead; ++l)
                    for (std::size_t i = 0; i < chunk; ++i)
                        gx[l * in_chunk + offset + i] += g[l * chunk + i];
            });
        }
        outs.push_back(o);
        offset += chunk;
    }
    return outs;
}

Tensor reshape(const Tensor& x, std::vector<std::size_t> new_shape) {
    Tape& t = tape_of(x);
    if (numel(new_shape) != x.size())
        throw DimensionError("reshape " + shape_str(x.shape()) + " to " + shape_str(new_shape) +
                             " changes element count");
    Tensor o = t.alloc(std::move(new_shape), x.values(), x.tracked());
    if (x.tracked()) {
        t.record([xi = x.index(), oi = o.index()](Tape& tp) {
            const auto& g = tp.grad_of(oi);
            auto& gx = tp.grad_of(xi);
            for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
        });
    }
    return o;
}

Tensor transpose(const Tensor& x) {
    Tape& t = tape_of(x);
    const auto& xs = x.shape();
    if (xs.size() < 2) throw DimensionError("transpose needs rank >= 2, got " + shape_str(xs));
    const std::size_t r = xs[xs.size() - 2], c = xs.back();
    const std::size_t batch = x.size() / (r * c);
    std::vector<std::size_t> os = xs;
    std::swap(os[os.size() - 2], os[os.size() - 1]);
    std::vector<double> out(x.size());
    for (std::size_t b = 0; b < batch; ++b) {
        const double* src = x.values().data() + b * r * c;
        double* dst = out.data() + b * r * c;
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) dst[j * r + i] = src[i * c + j];
    }
    Tensor o = t.alloc(std::move(os), std::move(out), x.tracked());
    if (x.tracked()) {
        t.record([xi = x.index(), oi = o.index(), batch, r, c](Tape& tp) {
            const auto& g = tp.grad_of(oi);
            auto& gx = tp.grad_of(xi);
            for (std::size_t b = 0; b < batch; ++b) {
                const double* gs = g.data() + b * r * c;
                double* gd = gx.data() + b * r * c;
                for (std::size_t i = 0; i < r; ++i)
                    for (std::size_t j = 0; j < c; ++j) gd[i * c + j] += gs[j * r + i];
            }
        });
    }
    return o;
}

// ---- convolution / pooling --------------------------------------------------------

Tensor conv2d(const Tensor& x, const Tensor& kernels, const Tensor& bias,
              std::size_t stride, std::size_t padding) {
    Tape& t = same_tape(x, kernels);
    same_tape(x, bias);
    require_rank(x, 4, "conv2d");
    require_rank(kernels, 4, "conv2d kernels");
    require_rank(bias, 1, "conv2d bias");
    if (stride == 0) throw DimensionError("conv2d stride must be positive");
    const std::size_t n = x.extent(0), ci = x.extent(1), h = x.extent(2), w = x.extent(3);
    const std::size_t co = kernels.extent(0), kh = kernels.extent(2), kw = kernels.extent(3);
    if (kernels.extent(1) != ci)
        throw DimensionError("conv2d channel mismatch: input " + shape_str(x.shape()) +
                             ", kernels " + shape_str(kernels.shape()));
    if (bias.extent(0) != co)
        throw DimensionError("conv2d bias extent " + std::to_string(bias.extent(0)) +
                             " does not match " + std::to_string(co) + " output channels");
    if (kh > h + 2 * padding || kw > w + 2 * padding)
        throw DimensionError("conv2d kernel " + shape_str(kernels.shape()) +
                             " larger than padded input " + shape_str(x.shape()));
    const std::size_t oh = (h + 2 * padding - kh) / stride + 1;
    const std::size_t ow = (w + 2 * padding - kw) / stride + 1;
    std::vector<double> out(n * co * oh * ow);
    const auto& xv = x.values();
    const auto& kv = kernels.values();
    const auto& bv = bias.values();
    for (std::size_t s = 0; s < n; ++s)
        for (std::size_t oc = 0; oc < co; ++oc)
            for (std::size_t oy = 0; oy < oh; ++oy)
                for (std::size_t ox = 0; ox < ow; ++ox) {
                    double acc = bv[oc];
                    for (std::size_t ic = 0; ic < ci; ++ic)
                        for (std::size_t ky = 0; ky < kh; ++ky) {
                            const std::ptrdiff_t iy =
                                static_cast<std::ptrdiff_t>(oy * stride + ky) -
                                static_cast<std::ptrdiff_t>(padding);
                            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
                            for (std::size_t kx = 0; kx < kw; ++kx) {
                                const std::ptrdiff_t ix =
                                    static_cast<std::ptrdiff_t>(ox * stride + kx) -
                                    static_cast<std::ptrdiff_t>(padding);
                                if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
                                acc += xv[((s * ci + ic) * h + iy) * w + ix] *
                                       kv[((oc * ci + ic) * kh + ky) * kw + kx];
                            }
                        }
                    out[((s * co + oc) * oh + oy) * ow + ox] = acc;
                }
    const bool track = x.tracked() || kernels.tracked() || bias.tracked();
    Tensor o = t.alloc({n, co, oh, ow}, std::move(out), track);
    if (track) {
        t.record([xi = x.index(), ki = kernels.index(), bi = bias.index(), oi = o.index(), n, ci, h,
                  w, co, kh, kw, oh, ow, stride, padding](Tape& tp) {
            const auto& g = tp.grad_of(oi);
            const auto& xv2 = tp.value_of(xi);
            const auto& kv2 = tp.value_of(ki);
            const bool tx = tp.tracked_of(xi), tk = tp.tracked_of(ki), tb = tp.tracked_of(bi);
            for (std::size_t s = 0; s < n; ++s)
                for (std::size_t oc = 0; oc < co; ++oc)
                    for (std::size_t oy = 0; oy < oh; ++oy)
                        for (std::size_t ox = 0; ox < ow; ++ox) {
                            const double go = g[((s * co + oc) * oh + oy) * ow + ox];
                            if (tb) tp.grad_of(bi)[oc] += go;
                            if (!tx && !tk) continue;
                            for (std::size_t ic = 0; ic < ci; ++ic)
                                for (std::size_t ky = 0; ky < kh; ++ky) {
                                    const std::ptrdiff_t iy =
                                        static_cast<std::ptrdiff_t>(oy * stride + ky) -
                                        static_cast<std::ptrdiff_t>(padding);
                                    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
                                    for (std::size_t kx = 0; kx < kw; ++kx) {
                                        const std::ptrdiff_t ix =
                                            static_cast<std::ptrdiff_t>(ox * stride + kx) -
                                            static_cast<std::ptrdiff_t>(padding);
                                        if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
                                        const std::size_t xoff = ((s * ci + ic) * h + iy) * w + ix;
                                        const std::size_t koff = ((oc * ci + ic) * kh + ky) * kw + kx;
                                        if (tx) tp.grad_of(xi)[xoff] += go * kv2[koff];
                                        if (tk) tp.grad_of(ki)[koff] += go * xv2[xoff];
                                    }
                                }
                        }
        });
    }
    return o;
}

Tensor avg_pool2d(const Tensor& x, std::size_t k) {
    Tape& t = tape_of(x);
    require_rank(x, 4, "avg_pool2d");
    if (k == 0) throw DimensionError("avg_pool2d window must be positive");
    const std::size_t n = x.extent(0), c = x.extent(1), h = x.extent(2), w = x.extent(3);
    if (h < k || w < k)
        throw DimensionError("avg_pool2d window " + std::to_string(k) + " exceeds input " +
                             shape_str(x.shape()));
    const std::size_t oh = h / k, ow = w / k;
    const double inv = 1.0 / static_cast<double>(k * k);
    std::vector<double> out(n * c * oh * ow, 0.0);
    for (std::size_t s = 0; s < n; ++s)
        for (std::size_t ch = 0; ch < c; ++ch)
            for (std::size_t oy = 0; oy < oh; ++oy)
                for (std::size_t ox = 0; ox < ow; ++ox) {
                    double acc = 0.0;
                    for (std::size_t ky = 0; ky < k; ++ky)
                        for (std::size_t kx = 0; kx < k; ++kx)
                            acc += x.values()[((s * c + ch) * h + oy * k + ky) * w + ox * k + kx];
                    out[((s * c + ch) * oh + oy) * ow + ox] = acc * inv;
                }
    Tensor o = t.alloc({n, c, oh, ow}, std::move(out), x.tracked());
    if (x.tracked()) {
        t.record([xi = x.index(), oi = o.index(), n, c, h, w, oh, ow, k, inv](Tape& tp) {
            const auto& g = tp.grad_of(oi);
            auto& gx = tp.grad_of(xi);
            for (std::size_t s = 0; s < n; ++s)
                for (std::size_t ch = 0; ch < c; ++ch)
                    for (std::size_t oy = 0; oy < oh; ++oy)
                        for (std::size_t ox = 0; ox < ow; ++ox) {
                            const double go = g[((s * c + ch) * oh + oy) * ow + ox] * inv;
                            for (std::size_t ky = 0; ky < k; ++ky)
                                for (std::size_t kx = 0; kx < k; ++kx)
                                    gx[((s * c + ch) * h + oy * k + ky) * w + ox * k + kx] += go;
                        }
        });
    }
    return o;
}

Tensor global_avg_pool(const Tensor& x) {
    Tape& t = tape_of(x);
    require_rank(x, 4, "global_avg_pool");
    const std::size_t n = x.extent(0), c = x.extent(1), hw = x.extent(2) * x.extent(3);
    const double inv = 1.0 / static_cast<double>(hw);
    std::vector<double> out(n * c, 0.0);
    for (std::size_t s = 0; s < n; ++s)
        for (std::size_t ch = 0; ch < c; ++ch) {
            double acc = 0.0;
            for (std::size_t i = 0; i < hw; ++i) acc += x.values()[(s * c + ch) * hw + i];
            out[s * c + ch] = acc * inv;
        }
    Tensor o = t.alloc({n, c}, std::move(out), x.tracked());
    if (x.tracked()) {
        t.record([xi = x.index(), oi = o.index(), n, c, hw, inv](Tape& tp) {
            const auto& g = tp.grad_of(oi);
            auto& gx = tp.grad_of(xi);
            for (std::size_t s = 0; s < n; ++s)
                for (std::size_t ch = 0; ch < c; ++ch) {
                    const double go = g[s * c + ch] * inv;
                    for (std::size_t i = 0; i < hw; ++i) gx[(s * c + ch) * hw + i] += go;
                }
        });
    }
    return o;
}

// ---- layer norm -------------------------------------------------------------------

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
    Tape& t = same_tape(x, gamma);
    same_tape(x, beta);
    const auto& xs = x.shape();
    const std::size_t d = xs.back();
    if (gamma.shape() != std::vector<std::size_t>{d} || beta.shape() != std::vector<std::size_t>{d})
        throw DimensionError("layer_norm scale/shift must have shape " + std::to_string(d));
    const std::size_t rows = x.size() / d;
    std::vector<double> out(x.size());
    std::vector<double> xhat(x.size());
    std::vector<double> inv_sigma(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* row = x.values().data() + r * d;
        double mu = 0.0;
        for (std::size_t j = 0; j < d; ++j) mu += row[j];
        mu /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
        var /= static_cast<double>(d);
        const double is = 1.0 / std::sqrt(var + eps);
        inv_sigma[r] = is;
        for (std::size_t j = 0; j < d; ++j) {
            xhat[r * d + j] = (row[j] - mu) * is;
            out[r * d + j] = gamma.values()[j] * xhat[r * d + j] + beta.values()[j];
        }
    }
    const bool track = x.tracked() || gamma.tracked() || beta.tracked();
    Tensor o = t.alloc(xs, std::move(out), track);
    if (track) {
        t.record([xi = x.index(), gi = gamma.index(), bi = beta.index(), oi = o.index(),
                  xhat = std::move(xhat), inv_sigma = std::move(inv_sigma), rows, d](Tape& tp) {
            const auto& g = tp.grad_of(oi);
            const auto& gv = tp.value_of(gi);
            for (std::size_t r = 0; r < rows; ++r) {
                if (tp.tracked_of(gi)) {
                    auto& gg = tp.grad_of(gi);
                    for (std::size_t j = 0; j < d; ++j) gg[j] += g[r * d + j] * xhat[r * d + j];
                }
                if (tp.tracked_of(bi)) {
                    auto& gb = tp.grad_of(bi);
                    for (std::size_t j = 0; j < d; ++j) gb[j] += g[r * d + j];
                }
                if (tp.tracked_of(xi)) {
                    auto& gx = tp.grad_of(xi);
                    double mean_gh = 0.0, mean_ghx = 0.0;
                    for (std::size_t j = 0; j < d; ++j) {
                        const double gh = g[r * d + j] * gv[j];
                        mean_gh += gh;
                        mean_ghx += gh * xhat[r * d + j];
                    }
                    mean_gh /= static_cast<double>(d);
                    mean_ghx /= static_cast<double>(d);
                    for (std::size_t j = 0; j < d; ++j) {
                        const double gh = g[r * d + j] * gv[j];
                        gx[r * d + j] +=
                            inv_sigma[r] * (gh - mean_gh - xhat[r * d + j] * mean_ghx);
                    }
                }
            }
        });
    }
    return o;
}

// ---- dropout ----------------------------------------------------------------------

Tensor dropout(const Tensor& x, double rate, bool training, Rng& rng) {
    if (rate < 0.0 || rate >= 1.0)
        throw ConfigError("dropout rate " + std::to_string(rate) + " outside [0, 1)");
    if (!training || rate == 0.0) return x;  // identity, nothing recorded
    Tape& t = tape_of(x);
    const double keep_scale = 1.0 / (1.0 - rate);
    std::vector<double> mask(x.size());
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < mask.size(); ++i) {
        mask[i] = rng.uniform() < rate ? 0.0 : keep_scale;
        out[i] = x.values()[i] * mask[i];
    }
    Tensor o = t.alloc(x.shape(), std::move(out), x.tracked());
    if (x.tracked()) {
        t.record([xi = x.index(), oi = o.index(), mask = std::move(mask)](Tape& tp) {
            const auto& g = tp.grad_of(oi);
            auto& gx = tp.grad_of(xi);
            for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * mask[i];
        });
    }
    return o;
}

}  // namespace hiertask
