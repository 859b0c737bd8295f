#pragma once

// Genetic operators over curricula. The operators are free functions so that
// alternative crossover or mutation schemes can be dropped in.

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "rheacl/curriculum.hpp"
#include "rheacl/rng.hpp"

namespace rheacl {

/// How the previous epoch's best curriculum seeds the next population.
enum class SeedingMode {
    Shift, // drop the executed first step, append a fresh random step
    Copy,  // reuse the curriculum verbatim
};

enum class InitMode {
    Random,
    /// Fill with distinct curricula in enumeration order (then random if the
    /// population is larger than the curriculum space).
    Enumerate,
};

struct EvolutionConfig {
    std::size_t population_size = 3;   // curricCount
    std::size_t generations = 3;       // nGen
    std::size_t curriculum_length = 3; // curricLength
    double mutation_rate = 0.56;
    double crossover_rate = 0.54;
    std::size_t para_env = 2;
    std::size_t elitism_count = 1;
    std::size_t tournament_size = 2;
    SeedingMode seeding = SeedingMode::Shift;
    InitMode init = InitMode::Random;

    void validate() const;
};

struct Population {
    std::vector<Curriculum> individuals;
    std::vector<double> fitness; // empty until evaluated

    std::size_t size() const { return individuals.size(); }
};

/// Random env-set of size uniform in [1, min(para_env, |roster|)].
CurriculumStep random_step(std::span<const EnvSpec> roster, std::size_t para_env, Rng& rng);
Curriculum random_curriculum(std::span<const EnvSpec> roster, std::size_t para_env, std::size_t length, Rng& rng);

/// Every valid step, ordered by size then lexicographically.
std::vector<CurriculumStep> enumerate_steps(std::span<const EnvSpec> roster, std::size_t para_env);
/// Every valid curriculum (first step varies slowest). Throws ConfigError above `limit` entries.
std::vector<Curriculum> enumerate_curricula(std::span<const EnvSpec> roster, std::size_t para_env, std::size_t length,
                                            std::size_t limit = 100000);

/// With a seed curriculum (rolling horizon) individual 0 is derived from it per
/// `cfg.seeding`; all others come from `cfg.init`.
Population init_population(const EvolutionConfig& cfg, std::span<const EnvSpec> roster, Rng& rng,
                           const std::optional<Curriculum>& seed = std::nullopt);

struct Selection {
    std::vector<std::size_t> elites;                          // fittest first
    std::vector<std::pair<std::size_t, std::size_t>> parents; // tournament winners
};

/// Draws a contestant index in [0, n).
using IndexDraw = std::function<std::size_t(std::size_t)>;

/// Copies the `elitism_count` fittest (ties: lower index) and picks enough parent
/// pairs by tournament to refill the population.
Selection select(const Population& population, std::span<const double> fitness, const EvolutionConfig& cfg,
                 const IndexDraw& draw);
Selection select(const Population& population, std::span<const double> fitness, const EvolutionConfig& cfg, Rng& rng);

/// With probability `rate`, swaps each step index independently with p = 0.5.
std::pair<Curriculum, Curriculum> crossover(const Curriculum& a, const Curriculum& b, double rate, Rng& rng);

/// Resamples each step independently with probability `rate`.
Curriculum mutate(const Curriculum& c, double rate, std::span<const EnvSpec> roster, std::size_t para_env, Rng& rng);

/// Elites unchanged, then crossover + mutation children of tournament parents.
Population next_generation(const Population& population, std::span<const double> fitness, const EvolutionConfig& cfg,
                           std::span<const EnvSpec> roster, Rng& rng);

/// Points 1..n of the unscrambled 2-D Sobol sequence (the all-zero point 0 is skipped),
/// as (mutation_rate, crossover_rate) pairs.
std::vector<std::pair<double, double>> sobol_rate_grid(std::size_t n);

} // namespace rheacl
