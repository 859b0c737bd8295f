#pragma once

// Actor-critic network used by the PPO agent:
//   obs [N,v,v,3] -> conv 2x2 (3->16) -> relu -> maxpool 2x2 -> conv 2x2 (16->64) -> relu
//   -> flatten -> actor linear (->7) [-> tanh] and critic linear (->1) -> tanh

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "rheacl/gridworld.hpp"
#include "rheacl/rng.hpp"
#include "rheacl/tensor.hpp"

namespace rheacl {

/// Offsets and shapes of the parameter blocks inside the flat vector.
struct ParamLayout {
    enum Block : std::size_t { Conv1W, Conv1B, Conv2W, Conv2B, ActorW, ActorB, CriticW, CriticB, kBlocks };

    int view_size = 5;
    std::array<Shape, kBlocks> shapes;
    std::array<std::size_t, kBlocks> offsets{};
    std::size_t total = 0;
    std::size_t features = 0;

    explicit ParamLayout(int view_size = 5);
};

/// Flat parameter vector of the actor-critic network.
struct PolicyParams {
    int view_size = 5;
    std::vector<double> values;

    PolicyParams() = default;
    /// Zero-initialized parameters.
    explicit PolicyParams(int view_size);

    /// Uniform(+-1/sqrt(fan_in)) convolutions; linear heads with unit-norm
    /// normal columns and zero bias.
    static PolicyParams random(Rng& rng, int view_size = 5);

    ParamLayout layout() const { return ParamLayout(view_size); }
    std::size_t size() const { return values.size(); }
    bool all_finite() const;
    friend bool operator==(const PolicyParams&, const PolicyParams&) = default;
};

/// Tape handles of one forward pass.
struct NetworkVars {
    std::array<Var, ParamLayout::kBlocks> params;
    Var logits; // [N,7]
    Var value;  // [N]
};

/// Observations scaled to [0,1] per channel, stacked to [N,v,v,3].
Tensor observations_to_tensor(std::span<const Observation> batch);
/// Appends one scaled observation (v*v*3 doubles) to `out`.
void append_observation(const Observation& obs, std::vector<double>& out);

/// Records a forward pass on `tape`. With `trainable` the parameter blocks are
/// gradient leaves; otherwise they are constants and nothing is kept for backward.
NetworkVars forward(Tape& tape, const PolicyParams& params, Tensor obs, bool tanh_logits, bool trainable);

/// Concatenates the parameter-block gradients into a flat vector (zeros for blocks
/// the loss did not reach).
std::vector<double> gather_gradient(Tape& tape, const NetworkVars& net);

struct PolicyOutput {
    std::vector<double> logits; // N*7
    std::vector<double> values; // N
};

/// Throws NumericError on a non-finite activation.
PolicyOutput evaluate_policy(const PolicyParams& params, Tensor obs, bool tanh_logits);

/// Softmax of one row of logits.
std::array<double, kNumActions> softmax(std::span<const double> logits);

} // namespace rheacl
