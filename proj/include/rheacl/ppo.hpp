#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "rheacl/gridworld.hpp"
#include "rheacl/network.hpp"
#include "rheacl/rng.hpp"
#include "rheacl/tensor.hpp"

namespace rheacl {

struct PpoConfig {
    std::size_t batch_size = 256;
    double discount = 0.99;
    double lr = 0.001;
    double gae_lambda = 0.95;
    double entropy_coef = 0.01;
    double value_loss_coef = 0.5;
    double max_grad_norm = 0.5;
    double clip_eps = 0.2;
    double adam_eps = 1e-8;
    double adam_alpha = 0.99;
    std::size_t frames_per_process = 128;
    std::size_t update_epochs = 4;
    std::size_t num_processes = 16;
    bool tanh_logits = true;
    bool normalize_advantages = true;

    std::size_t frames_per_update() const { return frames_per_process * num_processes; }
    /// Throws ConfigError naming the offending field.
    void validate() const;
};

struct EpisodeResult {
    EnvSpec spec;
    double ret = 0.0;
    int taken_steps = 0;
    Outcome outcome = Outcome::Timeout;
    std::size_t worker = 0;
};

/// Frames laid out time-major: frame (t, p) lives at index t * num_processes + p.
struct RolloutBuffer {
    std::size_t frames_per_process = 0;
    std::size_t num_processes = 0;
    int view_size = 5;
    std::vector<double> observations; // scaled, view*view*3 per frame
    std::vector<std::size_t> actions;
    std::vector<double> log_probs;
    std::vector<double> values;
    std::vector<double> rewards;
    std::vector<char> dones;              // episode ended with this frame
    std::vector<double> bootstrap_values; // value of the observation after the last frame, per process
    std::vector<EnvSpec> worker_specs;    // env of each worker at the first frame
    std::vector<double> advantages;
    std::vector<double> returns;
    std::vector<EpisodeResult> episodes; // episodes that finished during collection

    std::size_t size() const { return actions.size(); }
    std::size_t obs_width() const { return static_cast<std::size_t>(view_size * view_size * 3); }
};

/// Standard GAE(lambda) with done-masking; fills advantages and returns (= advantages + values).
void compute_gae(RolloutBuffer& buffer, double discount, double lambda);

/// How collection workers are mapped onto the environment pool.
enum class EnvAssignment {
    /// Worker w always plays pool[w % pool.size()].
    RoundRobin,
    /// Worker w starts at pool[w % pool.size()] and moves to the next pool entry
    /// after every finished episode.
    CyclePerEpisode,
};

/// Parallel environment workers that persist across collection calls, so episodes
/// continue across PPO updates.
class Collector {
public:
    Collector(std::vector<EnvSpec> pool, EnvAssignment assignment, std::size_t num_processes, EnvOptions options,
              std::uint64_t seed);

    /// Runs frames_per_process steps on every worker. New episodes use the step
    /// budget of `schedule` at `iterations_done` plus the frames already collected.
    RolloutBuffer collect(const PolicyParams& params, const PpoConfig& cfg, const StepBudgetSchedule& schedule,
                          std::int64_t iterations_done);

    const std::vector<EnvSpec>& pool() const { return pool_; }
    EnvAssignment assignment() const { return assignment_; }
    std::vector<EnvSpec> worker_specs() const;

private:
    struct Worker {
        std::size_t pool_pos = 0;
        GridState state;
        Observation obs;
        Rng rng;
    };

    void start_episode(Worker& w, const StepBudgetSchedule& schedule, std::int64_t iterations_done);

    std::vector<EnvSpec> pool_;
    EnvAssignment assignment_;
    EnvOptions options_;
    std::vector<Worker> workers_;
    bool started_ = false;
};

/// One-shot collection with a fresh Collector.
RolloutBuffer collect(const PolicyParams& params, const std::vector<EnvSpec>& pool, const StepBudgetSchedule& schedule,
                      const PpoConfig& cfg, std::int64_t iterations_done, Rng& rng, const EnvOptions& options = {});

/// Inputs of the PPO loss for a set of frames.
struct Minibatch {
    Tensor observations;
    std::vector<std::size_t> actions;
    std::vector<double> old_log_probs;
    std::vector<double> advantages;
    std::vector<double> returns;
};

Minibatch make_minibatch(const RolloutBuffer& buffer, std::span<const std::size_t> indices,
                         std::span<const double> advantages);

/// Advantages shifted to zero mean and scaled to unit (population) std.
std::vector<double> normalize_advantages(std::span<const double> advantages);

struct LossTerms {
    Var total;
    Var policy;  // clipped surrogate, negated
    Var value;   // mean squared error
    Var entropy; // mean policy entropy
};

/// Records the clipped-surrogate PPO loss on top of a forward pass.
LossTerms ppo_loss(const NetworkVars& net, const Minibatch& batch, const PpoConfig& cfg);

struct LossValue {
    double total = 0.0;
    double policy = 0.0;
    double value = 0.0;
    double entropy = 0.0;
};

/// Loss at `params`; fills `gradient` (flat, unclipped) when non-null.
LossValue loss_and_gradient(const PolicyParams& params, const Minibatch& batch, const PpoConfig& cfg,
                            std::vector<double>* gradient);

struct UpdateStats {
    double policy_loss = 0.0;
    double value_loss = 0.0;
    double entropy = 0.0;
    double grad_norm = 0.0;
    std::size_t steps = 0;
};

/// update_epochs passes of shuffled minibatches with gradient-norm clipping and Adam.
/// Computes GAE first if the buffer has no advantages yet.
UpdateStats ppo_update(PolicyParams& params, AdamState& adam, RolloutBuffer& buffer, const PpoConfig& cfg, Rng& rng);

/// Mean return of `episodes` episodes sampled from the softmax policy at the
/// budget the schedule gives for `iterations_done`.
double evaluate(const PolicyParams& params, const EnvSpec& spec, std::size_t episodes,
                const StepBudgetSchedule& schedule, std::int64_t iterations_done, Rng& rng, bool tanh_logits = true,
                const EnvOptions& options = {});

/// Parameters, optimizer state and frame counter of a PPO agent.
struct AgentState {
    PolicyParams params;
    AdamState adam;
    std::int64_t frames = 0;

    static AgentState fresh(const PpoConfig& cfg, Rng& rng, int view_size = 5);
    friend bool operator==(const AgentState& a, const AgentState& b) {
        return a.params == b.params && a.frames == b.frames && a.adam.t == b.adam.t && a.adam.m == b.adam.m &&
               a.adam.v == b.adam.v;
    }
};

/// Binary checkpoint (little-endian):
///   "RHCLCKPT" | u32 version=1 | i64 frames | i32 view_size | u64 n | f64[n] params
///   | u64 adam_t | f64 lr | f64 beta1 | f64 beta2 | f64 eps | f64[n] m | f64[n] v
void save_checkpoint(const AgentState& agent, const std::filesystem::path& path);
AgentState load_checkpoint(const std::filesystem::path& path);

} // namespace rheacl
