#include "rheacl/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "rheacl/errors.hpp"

namespace rheacl {

std::size_t shape_size(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        os << (i ? "," : "") << shape[i];
    }
    os << ']';
    return os.str();
}

namespace {

void check_shape(const Shape& shape) {
    if (shape.empty()) throw ConfigError("tensor shape must have at least one dimension");
    for (auto d : shape) {
        if (d == 0) throw ConfigError("tensor dimension must be >= 1, got " + shape_str(shape));
    }
}

} // namespace

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
    check_shape(shape_);
    data_.assign(shape_size(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    check_shape(shape_);
    if (shape_size(shape_) != data_.size()) {
        throw ConfigError("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                          shape_str(shape_));
    }
}

double Tensor::item() const {
    if (data_.size() != 1) throw ContractViolation("item() on tensor of shape " + shape_str(shape_));
    return data_[0];
}

Tensor Tensor::reshaped(Shape shape) const { return Tensor(std::move(shape), data_); }

bool Tensor::all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double x) { return std::isfinite(x); });
}

const Tensor& Var::value() const { return tape_->value(*this); }

// --- Tape -------------------------------------------------------------------

Var Tape::constant(Tensor value) {
    nodes_.push_back(Node{std::move(value), {}, false, {}});
    return Var(this, nodes_.size() - 1);
}

Var Tape::parameter(Tensor value) {
    nodes_.push_back(Node{std::move(value), {}, true, {}});
    return Var(this, nodes_.size() - 1);
}

Var Tape::push(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward) {
    bool needs = false;
    for (const Var& in : inputs) {
        if (in.tape_ != this) throw ContractViolation("op mixes variables from different tapes");
        needs = needs || nodes_[in.id_].requires_grad;
    }
    nodes_.push_back(Node{std::move(value), {}, needs, needs ? std::move(backward) : BackwardFn{}});
    return Var(this, nodes_.size() - 1);
}

Tensor& Tape::grad(Var v) {
    Node& n = nodes_.at(v.id_);
    if (n.grad.size() == 0) n.grad = Tensor(n.value.shape(), 0.0);
    return n.grad;
}

const Tensor& Tape::grad(Var v) const {
    const Node& n = nodes_.at(v.id_);
    if (n.grad.size() == 0) throw ContractViolation("no gradient recorded for node " + std::to_string(v.id_));
    return n.grad;
}

void Tape::backward(Var loss) {
    if (consumed_) throw ContractViolation("tape already consumed by a backward pass");
    if (loss.tape_ != this) throw ContractViolation("loss belongs to a different tape");
    if (value(loss).size() != 1) {
        throw ContractViolation("backward needs a scalar loss, got shape " + shape_str(value(loss).shape()));
    }
    consumed_ = true;
    grad(loss)[0] = 1.0;
    for (std::size_t i = loss.id_ + 1; i-- > 0;) {
        Node& n = nodes_[i];
        if (!n.backward || n.grad.size() == 0) continue;
        n.backward(*this, Var(this, i));
    }
}

void Tape::reset() {
    nodes_.clear();
    consumed_ = false;
}

// --- ops --------------------------------------------------------------------

namespace ops {

namespace {

void require_same_shape(Var a, Var b, const char* op) {
    if (a.shape() != b.shape()) {
        throw ConfigError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                          shape_str(b.shape()));
    }
}

template <class F, class G>
Var unary(Var x, F forward, G derivative) {
    Tape& t = x.tape();
    const Tensor& xv = x.value();
    Tensor out(xv.shape());
    for (std::size_t i = 0; i < xv.size(); ++i) out[i] = forward(xv[i]);
    return t.push(std::move(out), {x}, [x, derivative](Tape& tp, Var self) {
        if (!tp.requires_grad(x)) return;
        const Tensor& go = tp.grad(self);
        const Tensor& xv = tp.value(x);
        const Tensor& yv = tp.value(self);
        Tensor& gx = tp.grad(x);
        for (std::size_t i = 0; i < go.size(); ++i) gx[i] += go[i] * derivative(xv[i], yv[i]);
    });
}

} // namespace

Var conv2d(Var input, Var kernel, const Var* bias) {
    const Tensor& in = input.value();
    const Tensor& k = kernel.value();
    const bool batched = in.rank() == 4;
    if (!batched && in.rank() != 3) throw ConfigError("conv2d: input must be [N,H,W,C] or [H,W,C]");
    if (k.rank() != 4 || k.dim(0) != k.dim(1)) throw ConfigError("conv2d: kernel must be [K,K,Cin,Cout]");
    const std::size_t n = batched ? in.dim(0) : 1;
    const std::size_t h = in.dim(batched ? 1 : 0);
    const std::size_t w = in.dim(batched ? 2 : 1);
    const std::size_t cin = in.dim(batched ? 3 : 2);
    const std::size_t ks = k.dim(0);
    const std::size_t cout = k.dim(3);
    if (k.dim(2) != cin) {
        throw ConfigError("conv2d: kernel expects " + std::to_string(k.dim(2)) + " input channels, got " +
                          std::to_string(cin));
    }
    if (h < ks || w < ks) throw ConfigError("conv2d: input " + shape_str(in.shape()) + " smaller than kernel");
    if (bias && (bias->value().rank() != 1 || bias->value().dim(0) != cout)) {
        throw ConfigError("conv2d: bias must be [" + std::to_string(cout) + "]");
    }
    const std::size_t ho = h - ks + 1;
    const std::size_t wo = w - ks + 1;
    Shape out_shape = batched ? Shape{n, ho, wo, cout} : Shape{ho, wo, cout};
    Tensor out(out_shape);

    const double* ip = in.data().data();
    const double* kp = k.data().data();
    double* op = out.data().data();
    for (std::size_t b = 0; b < n; ++b) {
        for (std::size_t y = 0; y < ho; ++y) {
            for (std::size_t x = 0; x < wo; ++x) {
                double* o = op + ((b * ho + y) * wo + x) * cout;
                if (bias) {
                    const double* bp = bias->value().data().data();
                    for (std::size_t co = 0; co < cout; ++co) o[co] = bp[co];
                }
                for (std::size_t ky = 0; ky < ks; ++ky) {
                    for (std::size_t kx = 0; kx < ks; ++kx) {
                        const double* a = ip + ((b * h + y + ky) * w + x + kx) * cin;
                        const double* kk = kp + (ky * ks + kx) * cin * cout;
                        for (std::size_t ci = 0; ci < cin; ++ci) {
                            const double av = a[ci];
                            const double* kr = kk + ci * cout;
                            for (std::size_t co = 0; co < cout; ++co) o[co] += av * kr[co];
                        }
                    }
                }
            }
        }
    }

    Var b = bias ? *bias : Var{};
    const bool has_bias = bias != nullptr;
    auto backward = [=](Tape& t, Var self) {
        const double* go = t.grad(self).data().data();
        const bool gi = t.requires_grad(input);
        const bool gk = t.requires_grad(kernel);
        const bool gb = has_bias && t.requires_grad(b);
        const double* ipv = t.value(input).data().data();
        const double* kpv = t.value(kernel).data().data();
        double* gip = gi ? t.grad(input).data().data() : nullptr;
        double* gkp = gk ? t.grad(kernel).data().data() : nullptr;
        double* gbp = gb ? t.grad(b).data().data() : nullptr;
        for (std::size_t bi = 0; bi < n; ++bi) {
            for (std::size_t y = 0; y < ho; ++y) {
                for (std::size_t x = 0; x < wo; ++x) {
                    const double* g = go + ((bi * ho + y) * wo + x) * cout;
                    if (gbp) {
                        for (std::size_t co = 0; co < cout; ++co) gbp[co] += g[co];
                    }
                    for (std::size_t ky = 0; ky < ks; ++ky) {
                        for (std::size_t kx = 0; kx < ks; ++kx) {
                            const std::size_t in_off = ((bi * h + y + ky) * w + x + kx) * cin;
                            const std::size_t k_off = (ky * ks + kx) * cin * cout;
                            for (std::size_t ci = 0; ci < cin; ++ci) {
                                const double* kr = kpv + k_off + ci * cout;
                                if (gkp) {
                                    const double av = ipv[in_off + ci];
                                    double* gkr = gkp + k_off + ci * cout;
                                    for (std::size_t co = 0; co < cout; ++co) gkr[co] += av * g[co];
                                }
                                if (gip) {
                                    double acc = 0.0;
                                    for (std::size_t co = 0; co < cout; ++co) acc += kr[co] * g[co];
                                    gip[in_off + ci] += acc;
                                }
                            }
                        }
                    }
                }
            }
        }
    };
    if (has_bias) return input.tape().push(std::move(out), {input, kernel, b}, backward);
    return input.tape().push(std::move(out), {input, kernel}, backward);
}

Var maxpool2(Var input) {
    const Tensor& in = input.value();
    const bool batched = in.rank() == 4;
    if (!batched && in.rank() != 3) throw ConfigError("maxpool2: input must be [N,H,W,C] or [H,W,C]");
    const std::size_t n = batched ? in.dim(0) : 1;
    const std::size_t h = in.dim(batched ? 1 : 0);
    const std::size_t w = in.dim(batched ? 2 : 1);
    const std::size_t c = in.dim(batched ? 3 : 2);
    if (h < 2 || w < 2) throw ConfigError("maxpool2: input " + shape_str(in.shape()) + " smaller than 2x2");
    const std::size_t ho = h / 2;
    const std::size_t wo = w / 2;
    Tensor out(batched ? Shape{n, ho, wo, c} : Shape{ho, wo, c});
    // Flat input index of the winning element for every output element.
    std::vector<std::size_t> argmax(out.size());
    for (std::size_t b = 0; b < n; ++b) {
        for (std::size_t y = 0; y < ho; ++y) {
            for (std::size_t x = 0; x < wo; ++x) {
                for (std::size_t ch = 0; ch < c; ++ch) {
                    const std::size_t oi = ((b * ho + y) * wo + x) * c + ch;
                    std::size_t best = ((b * h + 2 * y) * w + 2 * x) * c + ch;
                    for (std::size_t dy = 0; dy < 2; ++dy) {
                        for (std::size_t dx = 0; dx < 2; ++dx) {
                            const std::size_t ii = ((b * h + 2 * y + dy) * w + 2 * x + dx) * c + ch;
                            if (in[ii] > in[best]) best = ii;
                        }
                    }
                    out[oi] = in[best];
                    argmax[oi] = best;
                }
            }
        }
    }
    return input.tape().push(std::move(out), {input}, [input, argmax = std::move(argmax)](Tape& t, Var self) {
        if (!t.requires_grad(input)) return;
        const Tensor& go = t.grad(self);
        Tensor& gi = t.grad(input);
        for (std::size_t i = 0; i < argmax.size(); ++i) gi[argmax[i]] += go[i];
    });
}

Var linear(Var input, Var weights, Var bias) {
    const Tensor& in = input.value();
    const Tensor& wt = weights.value();
    const Tensor& bs = bias.value();
    const bool batched = in.rank() == 2;
    if (!batched && in.rank() != 1) throw ConfigError("linear: input must be [n] or [N,n]");
    const std::size_t rows = batched ? in.dim(0) : 1;
    const std::size_t nin = in.dim(batched ? 1 : 0);
    if (wt.rank() != 2 || wt.dim(0) != nin) {
        throw ConfigError("linear: weights " + shape_str(wt.shape()) + " incompatible with input " +
                          shape_str(in.shape()));
    }
    const std::size_t nout = wt.dim(1);
    if (bs.rank() != 1 || bs.dim(0) != nout) throw ConfigError("linear: bias must be [" + std::to_string(nout) + "]");
    Tensor out(batched ? Shape{rows, nout} : Shape{nout});
    for (std::size_t r = 0; r < rows; ++r) {
        double* o = out.data().data() + r * nout;
        for (std::size_t j = 0; j < nout; ++j) o[j] = bs[j];
        for (std::size_t i = 0; i < nin; ++i) {
            const double a = in[r * nin + i];
            const double* wr = wt.data().data() + i * nout;
            for (std::size_t j = 0; j < nout; ++j) o[j] += a * wr[j];
        }
    }
    return input.tape().push(std::move(out), {input, weights, bias}, [=](Tape& t, Var self) {
        const Tensor& go = t.grad(self);
        const Tensor& inv = t.value(input);
        const Tensor& wv = t.value(weights);
        const bool gi = t.requires_grad(input);
        const bool gw = t.requires_grad(weights);
        const bool gb = t.requires_grad(bias);
        for (std::size_t r = 0; r < rows; ++r) {
            const double* g = go.data().data() + r * nout;
            if (gb) {
                Tensor& gbv = t.grad(bias);
                for (std::size_t j = 0; j < nout; ++j) gbv[j] += g[j];
            }
            for (std::size_t i = 0; i < nin; ++i) {
                if (gw) {
                    const double a = inv[r * nin + i];
                    double* gwr = t.grad(weights).data().data() + i * nout;
                    for (std::size_t j = 0; j < nout; ++j) gwr[j] += a * g[j];
                }
                if (gi) {
                    const double* wr = wv.data().data() + i * nout;
                    double acc = 0.0;
                    for (std::size_t j = 0; j < nout; ++j) acc += wr[j] * g[j];
                    t.grad(input)[r * nin + i] += acc;
                }
            }
        }
    });
}

Var relu(Var x) {
    return unary(
        x, [](double v) { return v > 0.0 ? v : 0.0; }, [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Var tanh(Var x) {
    return unary(
        x, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

Var exp(Var x) {
    return unary(
        x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Var square(Var x) {
    return unary(
        x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

Var scale(Var x, double c) {
    return unary(
        x, [c](double v) { return c * v; }, [c](double, double) { return c; });
}

Var clamp(Var x, double lo, double hi) {
    return unary(
        x, [lo, hi](double v) { return std::clamp(v, lo, hi); },
        [lo, hi](double v, double) { return (v >= lo && v <= hi) ? 1.0 : 0.0; });
}

Var reshape(Var x, Shape shape) {
    if (shape_size(shape) != x.value().size()) {
        throw ConfigError("reshape: " + shape_str(x.shape()) + " -> " + shape_str(shape));
    }
    return x.tape().push(x.value().reshaped(std::move(shape)), {x}, [x](Tape& t, Var self) {
        if (!t.requires_grad(x)) return;
        const Tensor& go = t.grad(self);
        Tensor& gx = t.grad(x);
        for (std::size_t i = 0; i < go.size(); ++i) gx[i] += go[i];
    });
}

namespace {

template <class F, class DA, class DB>
Var binary(Var a, Var b, const char* name, F forward, DA da, DB db) {
    require_same_shape(a, b, name);
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    Tensor out(av.shape());
    for (std::size_t i = 0; i < av.size(); ++i) out[i] = forward(av[i], bv[i]);
    return a.tape().push(std::move(out), {a, b}, [=](Tape& t, Var self) {
        const Tensor& go = t.grad(self);
        const Tensor& x = t.value(a);
        const Tensor& y = t.value(b);
        if (t.requires_grad(a)) {
            Tensor& ga = t.grad(a);
            for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * da(x[i], y[i]);
        }
        if (t.requires_grad(b)) {
            Tensor& gb = t.grad(b);
            for (std::size_t i = 0; i < go.size(); ++i) gb[i] += go[i] * db(x[i], y[i]);
        }
    });
}

} // namespace

Var add(Var a, Var b) {
    return binary(
        a, b, "add", [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
        [](double, double) { return 1.0; });
}

Var sub(Var a, Var b) {
    return binary(
        a, b, "sub", [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
        [](double, double) { return -1.0; });
}

Var mul(Var a, Var b) {
    return binary(
        a, b, "mul", [](double x, double y) { return x * y; }, [](double, double y) { return y; },
        [](double x, double) { return x; });
}

Var minimum(Var a, Var b) {
    return binary(
        a, b, "minimum", [](double x, double y) { return x <= y ? x : y; },
        [](double x, double y) { return x <= y ? 1.0 : 0.0; }, [](double x, double y) { return x <= y ? 0.0 : 1.0; });
}

Var sum(Var x) {
    const Tensor& xv = x.value();
    double s = 0.0;
    for (double v : xv.data()) s += v;
    return x.tape().push(Tensor::scalar(s), {x}, [x](Tape& t, Var self) {
        if (!t.requires_grad(x)) return;
        const double g = t.grad(self)[0];
        for (double& v : t.grad(x).data()) v += g;
    });
}

Var mean(Var x) { return scale(sum(x), 1.0 / static_cast<double>(x.value().size())); }

Var sum_rows(Var x) {
    const Tensor& xv = x.value();
    if (xv.rank() != 2) throw ConfigError("sum_rows: expected [N,k], got " + shape_str(xv.shape()));
    const std::size_t rows = xv.dim(0);
    const std::size_t k = xv.dim(1);
    Tensor out({rows});
    for (std::size_t r = 0; r < rows; ++r) {
        double s = 0.0;
        for (std::size_t j = 0; j < k; ++j) s += xv[r * k + j];
        out[r] = s;
    }
    return x.tape().push(std::move(out), {x}, [x, rows, k](Tape& t, Var self) {
        if (!t.requires_grad(x)) return;
        const Tensor& go = t.grad(self);
        Tensor& gx = t.grad(x);
        for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t j = 0; j < k; ++j) gx[r * k + j] += go[r];
        }
    });
}

Var log_softmax(Var x) {
    const Tensor& xv = x.value();
    if (xv.rank() != 2) throw ConfigError("log_softmax: expected [N,k], got " + shape_str(xv.shape()));
    const std::size_t rows = xv.dim(0);
    const std::size_t k = xv.dim(1);
    Tensor out(xv.shape());
    for (std::size_t r = 0; r < rows; ++r) {
        const double* row = xv.data().data() + r * k;
        const double mx = *std::max_element(row, row + k);
        double z = 0.0;
        for (std::size_t j = 0; j < k; ++j) z += std::exp(row[j] - mx);
        const double lz = mx + std::log(z);
        for (std::size_t j = 0; j < k; ++j) out[r * k + j] = row[j] - lz;
    }
    return x.tape().push(std::move(out), {x}, [x, rows, k](Tape& t, Var self) {
        if (!t.requires_grad(x)) return;
        const Tensor& go = t.grad(self);
        const Tensor& y = t.value(self);
        Tensor& gx = t.grad(x);
        for (std::size_t r = 0; r < rows; ++r) {
            double gs = 0.0;
            for (std::size_t j = 0; j < k; ++j) gs += go[r * k + j];
            for (std::size_t j = 0; j < k; ++j) gx[r * k + j] += go[r * k + j] - std::exp(y[r * k + j]) * gs;
        }
    });
}

Var pick(Var x, std::span<const std::size_t> indices) {
    const Tensor& xv = x.value();
    if (xv.rank() != 2 || xv.dim(0) != indices.size()) {
        throw ConfigError("pick: expected [N,k] with N=" + std::to_string(indices.size()) + ", got " +
                          shape_str(xv.shape()));
    }
    const std::size_t k = xv.dim(1);
    std::vector<std::size_t> flat(indices.size());
    Tensor out({indices.size()});
    for (std::size_t r = 0; r < indices.size(); ++r) {
        if (indices[r] >= k) throw ConfigError("pick: index out of range");
        flat[r] = r * k + indices[r];
        out[r] = xv[flat[r]];
    }
    return x.tape().push(std::move(out), {x}, [x, flat = std::move(flat)](Tape& t, Var self) {
        if (!t.requires_grad(x)) return;
        const Tensor& go = t.grad(self);
        Tensor& gx = t.grad(x);
        for (std::size_t r = 0; r < flat.size(); ++r) gx[flat[r]] += go[r];
    });
}

} // namespace ops

// --- Adam -------------------------------------------------------------------

AdamState::AdamState(std::size_t n, double lr_, double beta2_, double eps_)
    : m(n, 0.0), v(n, 0.0), lr(lr_), beta2(beta2_), eps(eps_) {
    if (!(eps > 0.0)) throw ConfigError("adam eps must be > 0");
}

void adam_step(AdamState& s, std::span<double> params, std::span<const double> grads) {
    if (params.size() != grads.size() || s.m.size() != params.size() || s.v.size() != params.size()) {
        throw ConfigError("adam_step: parameter, gradient and moment lengths differ");
    }
    for (std::size_t i = 0; i < grads.size(); ++i) {
        if (!std::isfinite(grads[i])) {
            throw NumericError("adam_step: non-finite gradient at coordinate " + std::to_string(i) + " (step " +
                               std::to_string(s.t + 1) + ")");
        }
    }
    ++s.t;
    const double bc1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.t));
    const double bc2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        s.m[i] = s.beta1 * s.m[i] + (1.0 - s.beta1) * grads[i];
        s.v[i] = s.beta2 * s.v[i] + (1.0 - s.beta2) * grads[i] * grads[i];
        const double mhat = s.m[i] / bc1;
        const double vhat = s.v[i] / bc2;
        params[i] -= s.lr * mhat / (std::sqrt(vhat) + s.eps);
    }
}

double clip_grad_norm(std::span<double> grads, double max_norm) {
    double sq = 0.0;
    for (double g : grads) sq += g * g;
    const double norm = std::sqrt(sq);
    if (norm > max_norm && norm > 0.0) {
        const double c = max_norm / (norm + 1e-6);
        for (double& g : grads) g *= c;
    }
    return norm;
}

} // namespace rheacl
