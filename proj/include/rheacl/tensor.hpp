#pragma once

// Dense float64 tensors with a reverse-mode tape. Only the ops the actor-critic
// network and the PPO loss need are provided; there is no broadcasting.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace rheacl {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Row-major dense tensor of doubles.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> data);

    static Tensor scalar(double v) { return Tensor({1}, std::vector<double>{v}); }

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t dim(std::size_t i) const { return shape_.at(i); }
    std::size_t size() const noexcept { return data_.size(); }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }
    std::vector<double>& vec() noexcept { return data_; }
    const std::vector<double>& vec() const noexcept { return data_; }

    double& operator[](std::size_t i) noexcept { return data_[i]; }
    double operator[](std::size_t i) const noexcept { return data_[i]; }

    /// Value of a one-element tensor.
    double item() const;

    Tensor reshaped(Shape shape) const;
    bool all_finite() const noexcept;

private:
    Shape shape_;
    std::vector<double> data_;
};

class Tape;

/// Handle to a node on a Tape. Cheap to copy; only valid while its tape lives.
class Var {
public:
    Var() = default;

    Tape& tape() const { return *tape_; }
    std::size_t id() const noexcept { return id_; }
    const Tensor& value() const;
    const Shape& shape() const { return value().shape(); }

private:
    friend class Tape;
    Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

    Tape* tape_ = nullptr;
    std::size_t id_ = 0;
};

/// Ordered record of primitive ops. Nodes are appended in evaluation order, so
/// the record is already topologically sorted and `backward` is one reverse sweep.
class Tape {
public:
    using BackwardFn = std::function<void(Tape&, Var self)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    /// Leaf that receives no gradient.
    Var constant(Tensor value);
    /// Leaf whose gradient is accumulated by `backward`.
    Var parameter(Tensor value);

    /// Appends an op result. `backward` reads grad(self) and accumulates into inputs.
    Var push(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward);

    const Tensor& value(Var v) const { return nodes_.at(v.id_).value; }
    bool requires_grad(Var v) const { return nodes_.at(v.id_).requires_grad; }

    /// Gradient accumulator of `v`; zero-initialized on first access.
    Tensor& grad(Var v);
    const Tensor& grad(Var v) const;

    /// Reverse sweep from a one-element loss. A tape can be swept once.
    void backward(Var loss);

    void reset();
    std::size_t size() const noexcept { return nodes_.size(); }
    bool consumed() const noexcept { return consumed_; }

private:
    struct Node {
        Tensor value;
        Tensor grad;
        bool requires_grad = false;
        BackwardFn backward;
    };

    std::vector<Node> nodes_;
    bool consumed_ = false;
};

namespace ops {

/// Valid (no padding) stride-1 cross-correlation.
/// input [N,H,W,Cin] or [H,W,Cin]; kernel [K,K,Cin,Cout]; bias [Cout] (optional).
Var conv2d(Var input, Var kernel, const Var* bias = nullptr);
inline Var conv2d(Var input, Var kernel, Var bias) { return conv2d(input, kernel, &bias); }

/// 2x2 max pooling with stride 2 over [N,H,W,C] or [H,W,C]. The gradient goes
/// to the first maximal element in row-major window order.
Var maxpool2(Var input);

/// input [n] or [N,n]; weights [n,m]; bias [m].
Var linear(Var input, Var weights, Var bias);

Var relu(Var x);
Var tanh(Var x);
Var exp(Var x);
Var square(Var x);
Var reshape(Var x, Shape shape);

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var x, double c);
Var clamp(Var x, double lo, double hi);
/// Elementwise min; ties route the gradient to `a`.
Var minimum(Var a, Var b);

/// Sum / mean of all elements to shape [1].
Var sum(Var x);
Var mean(Var x);
/// [N,k] -> [N]
Var sum_rows(Var x);
/// Row-wise log-softmax of [N,k].
Var log_softmax(Var x);
/// [N,k] x indices[N] -> [N] with out[i] = x[i, idx[i]].
Var pick(Var x, std::span<const std::size_t> indices);

} // namespace ops

/// Adam moments. `beta2` is the table's smoothing factor.
struct AdamState {
    std::vector<double> m;
    std::vector<double> v;
    std::uint64_t t = 0;
    double lr = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.99;
    double eps = 1e-8;

    AdamState() = default;
    AdamState(std::size_t n, double lr_, double beta2_, double eps_);
};

/// Bias-corrected Adam update in place. Throws NumericError on a non-finite gradient.
void adam_step(AdamState& state, std::span<double> params, std::span<const double> grads);

/// Rescales `grads` so its L2 norm is at most `max_norm`; returns the norm before clipping.
double clip_grad_norm(std::span<double> grads, double max_norm);

} // namespace rheacl
