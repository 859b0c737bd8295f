#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rheacl/curriculum.hpp"
#include "rheacl/evolution.hpp"
#include "rheacl/ppo.hpp"

namespace rheacl {

enum class SchedulerKind { RheaCL, RHRS, AllParallel, SPCL, NoCurriculum };

std::string to_string(SchedulerKind kind);
SchedulerKind parse_scheduler_kind(const std::string& text);

/// Where the committed weights of an epoch come from.
enum class CommitMode {
    Retrain, // restore the snapshot and train the best curriculum's first step again
    Reuse,   // keep the best candidate's weights after its first step
};

struct SchedulerConfig {
    SchedulerKind kind = SchedulerKind::RheaCL;
    std::int64_t iter_steps = 25000;
    std::int64_t total_frames = 150000;
    EvolutionConfig evolution;
    double spcl_up = 0.85;
    double spcl_down = 0.50;
    std::int64_t spcl_check_every = 25000;
    std::vector<EnvSpec> roster{EnvSpec::make(EnvKind::DoorKey, 6), EnvSpec::make(EnvKind::DoorKey, 8)};
    CommitMode commit = CommitMode::Retrain;
    /// Each candidate starts from the epoch snapshot; when false candidates train
    /// one after another on shared weights.
    bool isolate_candidates = true;
    /// Rewards-matrix rows start from the previous generation's row instead of 0.
    bool cumulative_rows = false;
    /// Worker threads for candidate evaluation; 0 picks the hardware concurrency.
    std::size_t candidate_threads = 1;

    void validate() const;
};

/// The agent as seen by a scheduler. Implementations must be deterministic given
/// the seeds passed in; clone() yields an independent copy (the epoch snapshot).
class Trainer {
public:
    virtual ~Trainer() = default;
    virtual std::unique_ptr<Trainer> clone() const = 0;
    /// Trains on `envs` for at least `frames` frames; returns the frames actually consumed.
    virtual std::int64_t train(const std::vector<EnvSpec>& envs, EnvAssignment assignment, std::int64_t frames,
                               std::uint64_t seed) = 0;
    /// Mean return per roster entry.
    virtual RosterEvaluation evaluate(std::span<const EnvSpec> roster, std::uint64_t seed) const = 0;
    /// Training frames absorbed so far (the global iteration count of the step-budget schedule).
    virtual std::int64_t frames() const = 0;
};

/// PPO agent trained with fresh collectors per train() call.
class PpoTrainer final : public Trainer {
public:
    PpoTrainer(PpoConfig ppo, ScoreConfig score, StepBudgetSchedule schedule, AgentState agent,
               EnvOptions options = {});

    /// Fresh network and optimizer drawn from `seed`.
    static std::unique_ptr<PpoTrainer> fresh(const PpoConfig& ppo, const ScoreConfig& score,
                                             const StepBudgetSchedule& schedule, std::uint64_t seed,
                                             EnvOptions options = {});

    std::unique_ptr<Trainer> clone() const override;
    std::int64_t train(const std::vector<EnvSpec>& envs, EnvAssignment assignment, std::int64_t frames,
                       std::uint64_t seed) override;
    RosterEvaluation evaluate(std::span<const EnvSpec> roster, std::uint64_t seed) const override;
    std::int64_t frames() const override { return agent_.frames; }

    const AgentState& agent() const { return agent_; }
    const PpoConfig& ppo() const { return ppo_; }
    /// Episodes finished during the most recent train() call.
    const std::vector<EpisodeResult>& last_episodes() const { return last_episodes_; }

private:
    PpoConfig ppo_;
    ScoreConfig score_;
    StepBudgetSchedule schedule_;
    EnvOptions options_;
    AgentState agent_;
    std::vector<EpisodeResult> last_episodes_;
};

enum class RecordType { Eval, Candidate };

/// One row of the run log. `frames` is the logged agent's own frame count;
/// `frames_consumed` counts every training frame of the run so far, candidates included.
struct EvalRecord {
    RecordType type = RecordType::Eval;
    SchedulerKind scheduler = SchedulerKind::RheaCL;
    std::int64_t frames = 0;
    std::int64_t frames_consumed = 0;
    std::int64_t train_frames = 0; // frames trained since the previous record of this pipeline
    int epoch = -1;
    int generation = -1;
    int individual = -1;
    int step = -1;
    std::string curriculum; // what the agent trained on, in curriculum text form
    std::vector<std::string> envs;
    std::vector<double> returns;
    double roster_mean = 0.0;
    double score = std::numeric_limits<double>::quiet_NaN(); // damped score so far (candidates)
};

using RecordSink = std::function<void(const EvalRecord&)>;

struct RunLog {
    std::vector<EvalRecord> records;
    std::int64_t committed_frames = 0; // frames the final agent advanced over the run
    std::int64_t candidate_frames = 0;
    /// All training frames: candidate + commit training. With CommitMode::Reuse the
    /// committed frames are a subset of the candidate frames and are not added again.
    std::int64_t frames_consumed = 0;
};

struct RunResult {
    RunLog log;
    std::unique_ptr<Trainer> agent;
};

/// Seeds of the independent rng streams used by the RHEA CL loop.
std::uint64_t candidate_seed(std::uint64_t run_seed, std::size_t epoch, std::size_t generation,
                             std::size_t individual);
std::uint64_t commit_seed(std::uint64_t run_seed, std::size_t epoch);

struct EpochResult {
    Curriculum best;
    std::size_t best_index = 0;
    RewardsMatrix rewards{1, 1};
    Population population;         // final generation
    std::unique_ptr<Trainer> agent; // committed weights
    std::int64_t candidate_frames = 0;
    std::int64_t commit_frames = 0;
};

/// One RHEA CL epoch starting from `snapshot`, which is left untouched.
/// With `evolve` false every generation is freshly random (RHRS). `frames_before`
/// only feeds the frames_consumed column of emitted records.
EpochResult run_epoch(const Trainer& snapshot, const SchedulerConfig& cfg, const ScoreConfig& score,
                      std::uint64_t run_seed, std::size_t epoch, const std::optional<Curriculum>& previous_best,
                      bool evolve, std::int64_t frames_before, const RecordSink& sink = {});

RunResult run_rhea_cl(const SchedulerConfig& cfg, const ScoreConfig& score, std::unique_ptr<Trainer> agent,
                      std::uint64_t seed, const RecordSink& sink = {});
RunResult run_rhrs(const SchedulerConfig& cfg, const ScoreConfig& score, std::unique_ptr<Trainer> agent,
                   std::uint64_t seed, const RecordSink& sink = {});
RunResult run_all_parallel(const SchedulerConfig& cfg, std::unique_ptr<Trainer> agent, std::uint64_t seed,
                           const RecordSink& sink = {});
RunResult run_spcl(const SchedulerConfig& cfg, std::unique_ptr<Trainer> agent, std::uint64_t seed,
                   const RecordSink& sink = {});
RunResult run_vanilla(const SchedulerConfig& cfg, std::unique_ptr<Trainer> agent, std::uint64_t seed,
                      const RecordSink& sink = {});
/// Dispatches on cfg.kind.
RunResult run_scheduler(const SchedulerConfig& cfg, const ScoreConfig& score, std::unique_ptr<Trainer> agent,
                        std::uint64_t seed, const RecordSink& sink = {});

/// SPCL level rule: up one level above `up`, down one below `down`, clamped.
std::size_t spcl_next_level(std::size_t level, double performance, std::size_t levels, double up, double down);
/// Roster sorted by (kind, size): the SPCL difficulty ladder.
std::vector<EnvSpec> difficulty_ladder(std::span<const EnvSpec> roster);
/// Largest roster environment (last of the ladder).
EnvSpec hardest_env(std::span<const EnvSpec> roster);

} // namespace rheacl
