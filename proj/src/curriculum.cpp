#include "rheacl/curriculum.hpp"

#include <algorithm>
#include <cmath>

#include "rheacl/errors.hpp"
#include "rheacl/ppo.hpp"

namespace rheacl {

CurriculumStep::CurriculumStep(std::vector<EnvSpec> e) : envs(std::move(e)) {
    std::sort(envs.begin(), envs.end());
    envs.erase(std::unique(envs.begin(), envs.end()), envs.end());
}

std::string CurriculumStep::to_string() const {
    std::string s = "(";
    for (std::size_t i = 0; i < envs.size(); ++i) {
        if (i) s += '|';
        s += envs[i].name();
    }
    return s + ")";
}

std::string Curriculum::to_string() const {
    std::string s = "[";
    for (std::size_t i = 0; i < steps.size(); ++i) {
        if (i) s += ", ";
        s += steps[i].to_string();
    }
    return s + "]";
}

Curriculum Curriculum::parse(const std::string& text) {
    auto fail = [&] { throw ConfigError("malformed curriculum '" + text + "'"); };
    std::string t;
    for (char c : text) {
        if (c != ' ') t += c;
    }
    if (t.size() < 2 || t.front() != '[' || t.back() != ']') fail();
    Curriculum c;
    std::size_t pos = 1;
    while (pos < t.size() - 1) {
        if (t[pos] != '(') fail();
        const auto close = t.find(')', pos);
        if (close == std::string::npos) fail();
        std::vector<EnvSpec> envs;
        std::size_t start = pos + 1;
        while (start < close) {
            auto bar = t.find('|', start);
            if (bar == std::string::npos || bar > close) bar = close;
            envs.push_back(EnvSpec::parse(t.substr(start, bar - start)));
            start = bar + 1;
        }
        if (envs.empty()) fail();
        c.steps.emplace_back(std::move(envs));
        pos = close + 1;
        if (pos < t.size() - 1) {
            if (t[pos] != ',') fail();
            ++pos;
        }
    }
    return c;
}

void validate_curriculum(const Curriculum& c, std::span<const EnvSpec> roster, std::size_t para_env,
                         std::size_t length) {
    if (c.length() != length) {
        throw ContractViolation("curriculum " + c.to_string() + " has length " + std::to_string(c.length()) +
                                ", expected " + std::to_string(length));
    }
    for (const auto& step : c.steps) {
        if (step.envs.empty() || step.envs.size() > para_env) {
            throw ContractViolation("curriculum step " + step.to_string() + " must hold 1.." +
                                    std::to_string(para_env) + " environments");
        }
        for (std::size_t i = 0; i < step.envs.size(); ++i) {
            if (std::find(roster.begin(), roster.end(), step.envs[i]) == roster.end()) {
                throw ContractViolation(step.envs[i].name() + " is not in the roster");
            }
            if (i > 0 && !(step.envs[i - 1] < step.envs[i])) {
                throw ContractViolation("curriculum step " + step.to_string() + " is not a sorted set");
            }
        }
    }
}

bool is_valid_curriculum(const Curriculum& c, std::span<const EnvSpec> roster, std::size_t para_env,
                         std::size_t length) {
    try {
        validate_curriculum(c, roster, para_env, length);
        return true;
    } catch (const ContractViolation&) {
        return false;
    }
}

double curriculum_score(std::span<const double> step_rewards, double gamma) {
    if (step_rewards.empty()) throw ContractViolation("curriculum_score needs at least one step reward");
    double score = 0.0;
    double weight = 1.0;
    for (double r : step_rewards) {
        score += r * weight;
        weight *= gamma;
    }
    return score;
}

RewardsMatrix::RewardsMatrix(std::size_t generations, std::size_t individuals)
    : generations_(generations), individuals_(individuals), entries_(generations * individuals, 0.0) {
    if (generations == 0 || individuals == 0) throw ConfigError("rewards matrix needs at least one row and column");
}

void RewardsMatrix::check(std::size_t gen, std::size_t individual) const {
    if (gen >= generations_ || individual >= individuals_) {
        throw ContractViolation("rewards matrix index (" + std::to_string(gen) + ", " + std::to_string(individual) +
                                ") out of range " + std::to_string(generations_) + "x" + std::to_string(individuals_));
    }
}

double RewardsMatrix::at(std::size_t gen, std::size_t individual) const {
    check(gen, individual);
    return entries_[gen * individuals_ + individual];
}

void RewardsMatrix::record(std::size_t gen, std::size_t individual, double score) {
    check(gen, individual);
    entries_[gen * individuals_ + individual] += score;
}

std::span<const double> RewardsMatrix::row(std::size_t gen) const {
    check(gen, 0);
    return std::span<const double>(entries_).subspan(gen * individuals_, individuals_);
}

void RewardsMatrix::carry_forward(std::size_t gen) {
    check(gen, 0);
    if (gen == 0) return;
    std::copy_n(entries_.begin() + static_cast<std::ptrdiff_t>((gen - 1) * individuals_), individuals_,
                entries_.begin() + static_cast<std::ptrdiff_t>(gen * individuals_));
}

std::size_t best_index(const RewardsMatrix& matrix) {
    const auto last = matrix.row(matrix.generations() - 1);
    return static_cast<std::size_t>(std::max_element(last.begin(), last.end()) - last.begin());
}

const Curriculum& best_curriculum(const RewardsMatrix& matrix, std::span<const Curriculum> population) {
    if (population.empty()) throw ContractViolation("best_curriculum on an empty population");
    if (population.size() != matrix.individuals()) {
        throw ContractViolation("population size does not match rewards matrix width");
    }
    return population[best_index(matrix)];
}

void ScoreConfig::validate() const {
    if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("score.gamma: must be in (0, 1]");
    if (eval_episodes_per_env == 0) throw ConfigError("score.eval_episodes_per_env: must be positive");
}

RosterEvaluation step_reward(const PolicyParams& params, std::span<const EnvSpec> roster, const ScoreConfig& score,
                             const StepBudgetSchedule& schedule, std::int64_t iterations_done, std::uint64_t seed,
                             bool tanh_logits, const EnvOptions& options) {
    if (roster.empty()) throw ContractViolation("step_reward needs a non-empty roster");
    RosterEvaluation out;
    for (std::size_t i = 0; i < roster.size(); ++i) {
        Rng rng(derive_seed(seed, {i}));
        const double r = evaluate(params, roster[i], score.eval_episodes_per_env, schedule, iterations_done, rng,
                                  tanh_logits, options);
        out.per_env.push_back(r);
        out.mean += r;
    }
    out.mean /= static_cast<double>(roster.size());
    return out;
}

} // namespace rheacl
