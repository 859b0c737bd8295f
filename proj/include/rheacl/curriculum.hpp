#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "rheacl/gridworld.hpp"
#include "rheacl/network.hpp"
#include "rheacl/rng.hpp"

namespace rheacl {

/// One slot of a curriculum: the environments trained on together for iter_steps frames.
/// Members are kept sorted and unique.
struct CurriculumStep {
    std::vector<EnvSpec> envs;

    CurriculumStep() = default;
    explicit CurriculumStep(std::vector<EnvSpec> envs);

    std::string to_string() const;
    friend auto operator<=>(const CurriculumStep&, const CurriculumStep&) = default;
};

struct Curriculum {
    std::vector<CurriculumStep> steps;

    std::size_t length() const { return steps.size(); }
    /// "[(DoorKey-6|DoorKey-8), (DoorKey-8)]"
    std::string to_string() const;
    static Curriculum parse(const std::string& text);

    friend auto operator<=>(const Curriculum&, const Curriculum&) = default;
};

/// Throws ContractViolation unless the curriculum has `length` steps, each with
/// 1..para_env distinct members of `roster`.
void validate_curriculum(const Curriculum& c, std::span<const EnvSpec> roster, std::size_t para_env, std::size_t length);
bool is_valid_curriculum(const Curriculum& c, std::span<const EnvSpec> roster, std::size_t para_env,
                         std::size_t length);

/// Discounted curriculum score: sum_j reward_j * gamma^j.
double curriculum_score(std::span<const double> step_rewards, double gamma);

/// nGen x curricCount table of accumulated damped scores.
class RewardsMatrix {
public:
    RewardsMatrix(std::size_t generations, std::size_t individuals);

    std::size_t generations() const { return generations_; }
    std::size_t individuals() const { return individuals_; }

    double at(std::size_t gen, std::size_t individual) const;
    /// entry(gen, individual) += score
    void record(std::size_t gen, std::size_t individual, double score);
    std::span<const double> row(std::size_t gen) const;
    /// Copies row gen-1 into row gen (for cumulative rows).
    void carry_forward(std::size_t gen);

private:
    void check(std::size_t gen, std::size_t individual) const;

    std::size_t generations_;
    std::size_t individuals_;
    std::vector<double> entries_;
};

/// Index of the maximal entry in the final generation's row; ties go to the lowest index.
std::size_t best_index(const RewardsMatrix& matrix);
/// Curriculum at best_index within the final generation's population.
const Curriculum& best_curriculum(const RewardsMatrix& matrix, std::span<const Curriculum> population);

struct ScoreConfig {
    double gamma = 0.9;
    std::size_t eval_episodes_per_env = 10;

    void validate() const;
};

struct RosterEvaluation {
    std::vector<double> per_env; // roster order
    double mean = 0.0;
};

/// Mean over the roster of evaluate(params, spec, eval_episodes_per_env, ...).
/// Env i draws from its own stream derived from `seed`.
RosterEvaluation step_reward(const PolicyParams& params, std::span<const EnvSpec> roster, const ScoreConfig& score,
                             const StepBudgetSchedule& schedule, std::int64_t iterations_done, std::uint64_t seed,
                             bool tanh_logits = true, const EnvOptions& options = {});

} // namespace rheacl
