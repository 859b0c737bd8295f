#include "rheacl/network.hpp"

#include <algorithm>
#include <cmath>

#include "rheacl/errors.hpp"

namespace rheacl {

namespace {
constexpr std::size_t kConv1Out = 16;
constexpr std::size_t kConv2Out = 64;
} // namespace

ParamLayout::ParamLayout(int view) : view_size(view) {
    if (view < 5 || view % 2 == 0) throw ConfigError("network needs an odd view size >= 5, got " + std::to_string(view));
    const std::size_t after_pool = static_cast<std::size_t>(view - 1) / 2;
    const std::size_t side = after_pool - 1;
    features = side * side * kConv2Out;
    shapes[Conv1W] = {2, 2, 3, kConv1Out};
    shapes[Conv1B] = {kConv1Out};
    shapes[Conv2W] = {2, 2, kConv1Out, kConv2Out};
    shapes[Conv2B] = {kConv2Out};
    shapes[ActorW] = {features, static_cast<std::size_t>(kNumActions)};
    shapes[ActorB] = {static_cast<std::size_t>(kNumActions)};
    shapes[CriticW] = {features, 1};
    shapes[CriticB] = {1};
    for (std::size_t b = 0; b < kBlocks; ++b) {
        offsets[b] = total;
        total += shape_size(shapes[b]);
    }
}

PolicyParams::PolicyParams(int view) : view_size(view), values(ParamLayout(view).total, 0.0) {}

PolicyParams PolicyParams::random(Rng& rng, int view) {
    PolicyParams p(view);
    const ParamLayout l = p.layout();
    auto fill_uniform = [&](std::size_t block, double bound) {
        const std::size_t n = shape_size(l.shapes[block]);
        for (std::size_t i = 0; i < n; ++i) p.values[l.offsets[block] + i] = rng.uniform(-bound, bound);
    };
    const double b1 = 1.0 / std::sqrt(2.0 * 2.0 * 3.0);
    const double b2 = 1.0 / std::sqrt(2.0 * 2.0 * static_cast<double>(kConv1Out));
    fill_uniform(ParamLayout::Conv1W, b1);
    fill_uniform(ParamLayout::Conv1B, b1);
    fill_uniform(ParamLayout::Conv2W, b2);
    fill_uniform(ParamLayout::Conv2B, b2);
    for (auto block : {ParamLayout::ActorW, ParamLayout::CriticW}) {
        const std::size_t rows = l.shapes[block][0];
        const std::size_t cols = l.shapes[block][1];
        double* w = p.values.data() + l.offsets[block];
        for (std::size_t c = 0; c < cols; ++c) {
            double norm = 0.0;
            for (std::size_t r = 0; r < rows; ++r) {
                w[r * cols + c] = rng.normal();
                norm += w[r * cols + c] * w[r * cols + c];
            }
            norm = std::sqrt(norm);
            for (std::size_t r = 0; r < rows; ++r) w[r * cols + c] /= norm;
        }
    }
    return p;
}

bool PolicyParams::all_finite() const {
    return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

void append_observation(const Observation& obs, std::vector<double>& out) {
    for (std::size_t i = 0; i < obs.grid.size(); ++i) {
        out.push_back(static_cast<double>(obs.grid[i]) / kChannelMax[i % 3]);
    }
}

Tensor observations_to_tensor(std::span<const Observation> batch) {
    if (batch.empty()) throw ConfigError("empty observation batch");
    const auto v = static_cast<std::size_t>(batch.front().view_size);
    std::vector<double> data;
    data.reserve(batch.size() * v * v * 3);
    for (const auto& o : batch) {
        if (static_cast<std::size_t>(o.view_size) != v) throw ConfigError("mixed view sizes in observation batch");
        append_observation(o, data);
    }
    return Tensor({batch.size(), v, v, 3}, std::move(data));
}

NetworkVars forward(Tape& tape, const PolicyParams& params, Tensor obs, bool tanh_logits, bool trainable) {
    const ParamLayout l = params.layout();
    if (params.values.size() != l.total) throw ConfigError("parameter vector has wrong length");
    const auto v = static_cast<std::size_t>(params.view_size);
    if (obs.rank() == 3) obs = obs.reshaped({1, obs.dim(0), obs.dim(1), obs.dim(2)});
    if (obs.rank() != 4 || obs.dim(1) != v || obs.dim(2) != v || obs.dim(3) != 3) {
        throw ConfigError("observation batch " + shape_str(obs.shape()) + " does not match a " + std::to_string(v) +
                          "x" + std::to_string(v) + "x3 view");
    }
    const std::size_t n = obs.dim(0);

    NetworkVars net;
    for (std::size_t b = 0; b < ParamLayout::kBlocks; ++b) {
        auto first = params.values.begin() + static_cast<std::ptrdiff_t>(l.offsets[b]);
        Tensor block(l.shapes[b], std::vector<double>(first, first + static_cast<std::ptrdiff_t>(shape_size(l.shapes[b]))));
        net.params[b] = trainable ? tape.parameter(std::move(block)) : tape.constant(std::move(block));
    }
    Var x = tape.constant(std::move(obs));
    x = ops::relu(ops::conv2d(x, net.params[ParamLayout::Conv1W], net.params[ParamLayout::Conv1B]));
    x = ops::maxpool2(x);
    x = ops::relu(ops::conv2d(x, net.params[ParamLayout::Conv2W], net.params[ParamLayout::Conv2B]));
    x = ops::reshape(x, {n, l.features});
    Var logits = ops::linear(x, net.params[ParamLayout::ActorW], net.params[ParamLayout::ActorB]);
    net.logits = tanh_logits ? ops::tanh(logits) : logits;
    Var value = ops::tanh(ops::linear(x, net.params[ParamLayout::CriticW], net.params[ParamLayout::CriticB]));
    net.value = ops::reshape(value, {n});
    return net;
}

std::vector<double> gather_gradient(Tape& tape, const NetworkVars& net) {
    std::vector<double> g;
    for (const Var& p : net.params) {
        const Tensor& gt = tape.grad(p);
        g.insert(g.end(), gt.data().begin(), gt.data().end());
    }
    return g;
}

PolicyOutput evaluate_policy(const PolicyParams& params, Tensor obs, bool tanh_logits) {
    Tape tape;
    NetworkVars net = forward(tape, params, std::move(obs), tanh_logits, false);
    const Tensor& lg = net.logits.value();
    const Tensor& vl = net.value.value();
    if (!lg.all_finite() || !vl.all_finite()) throw NumericError("non-finite network output");
    return PolicyOutput{lg.vec(), vl.vec()};
}

std::array<double, kNumActions> softmax(std::span<const double> logits) {
    std::array<double, kNumActions> p{};
    const double mx = *std::max_element(logits.begin(), logits.begin() + kNumActions);
    double z = 0.0;
    for (int i = 0; i < kNumActions; ++i) {
        p[i] = std::exp(logits[i] - mx);
        z += p[i];
    }
    for (double& x : p) x /= z;
    return p;
}

} // namespace rheacl
