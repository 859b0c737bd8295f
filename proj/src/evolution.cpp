#include "rheacl/evolution.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <numeric>

#include "rheacl/errors.hpp"

namespace rheacl {

void EvolutionConfig::validate() const {
    auto fail = [](const std::string& field, const std::string& why) {
        throw ConfigError("scheduler.evolution." + field + ": " + why);
    };
    if (population_size < 1) fail("population_size", "must be >= 1");
    if (generations < 1) fail("generations", "must be >= 1");
    if (curriculum_length < 1) fail("curriculum_length", "must be >= 1");
    if (!(mutation_rate >= 0.0 && mutation_rate <= 1.0)) fail("mutation_rate", "must be in [0, 1]");
    if (!(crossover_rate >= 0.0 && crossover_rate <= 1.0)) fail("crossover_rate", "must be in [0, 1]");
    if (para_env < 1) fail("para_env", "must be >= 1");
    if (tournament_size < 1) fail("tournament_size", "must be >= 1");
    if (population_size > 1 && elitism_count >= population_size) {
        fail("elitism_count", "must be smaller than population_size");
    }
}

CurriculumStep random_step(std::span<const EnvSpec> roster, std::size_t para_env, Rng& rng) {
    if (roster.empty()) throw ConfigError("roster must not be empty");
    const std::size_t max_k = std::min(para_env, roster.size());
    const std::size_t k = 1 + rng.index(max_k);
    std::vector<EnvSpec> pool(roster.begin(), roster.end());
    // Partial Fisher-Yates: the first k entries become a uniform k-subset.
    for (std::size_t i = 0; i < k; ++i) {
        std::swap(pool[i], pool[i + rng.index(pool.size() - i)]);
    }
    pool.resize(k);
    return CurriculumStep(std::move(pool));
}

Curriculum random_curriculum(std::span<const EnvSpec> roster, std::size_t para_env, std::size_t length, Rng& rng) {
    Curriculum c;
    for (std::size_t j = 0; j < length; ++j) c.steps.push_back(random_step(roster, para_env, rng));
    return c;
}

std::vector<CurriculumStep> enumerate_steps(std::span<const EnvSpec> roster, std::size_t para_env) {
    std::vector<EnvSpec> sorted(roster.begin(), roster.end());
    std::sort(sorted.begin(), sorted.end());
    sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
    if (sorted.size() > 20) throw ConfigError("roster too large to enumerate");
    std::vector<CurriculumStep> steps;
    const std::size_t max_k = std::min(para_env, sorted.size());
    for (std::size_t k = 1; k <= max_k; ++k) {
        std::vector<std::uint32_t> masks;
        for (std::uint32_t mask = 0; mask < (1u << sorted.size()); ++mask) {
            if (static_cast<std::size_t>(std::popcount(mask)) == k) masks.push_back(mask);
        }
        std::vector<CurriculumStep> of_size;
        for (auto mask : masks) {
            std::vector<EnvSpec> envs;
            for (std::size_t i = 0; i < sorted.size(); ++i) {
                if (mask & (1u << i)) envs.push_back(sorted[i]);
            }
            of_size.emplace_back(std::move(envs));
        }
        std::sort(of_size.begin(), of_size.end());
        steps.insert(steps.end(), of_size.begin(), of_size.end());
    }
    return steps;
}

std::vector<Curriculum> enumerate_curricula(std::span<const EnvSpec> roster, std::size_t para_env, std::size_t length,
                                            std::size_t limit) {
    const auto steps = enumerate_steps(roster, para_env);
    std::size_t count = 1;
    for (std::size_t j = 0; j < length; ++j) {
        count *= steps.size();
        if (count > limit) throw ConfigError("curriculum space exceeds enumeration limit");
    }
    std::vector<Curriculum> all;
    all.reserve(count);
    for (std::size_t n = 0; n < count; ++n) {
        Curriculum c;
        c.steps.resize(length);
        std::size_t rest = n;
        for (std::size_t j = length; j-- > 0;) {
            c.steps[j] = steps[rest % steps.size()];
            rest /= steps.size();
        }
        all.push_back(std::move(c));
    }
    return all;
}

Population init_population(const EvolutionConfig& cfg, std::span<const EnvSpec> roster, Rng& rng,
                           const std::optional<Curriculum>& seed) {
    if (roster.empty()) throw ConfigError("roster must not be empty");
    Population pop;
    if (seed) {
        Curriculum first = *seed;
        if (cfg.seeding == SeedingMode::Shift && !first.steps.empty()) {
            first.steps.erase(first.steps.begin());
            first.steps.push_back(random_step(roster, cfg.para_env, rng));
        }
        validate_curriculum(first, roster, cfg.para_env, cfg.curriculum_length);
        pop.individuals.push_back(std::move(first));
    }
    if (cfg.init == InitMode::Enumerate) {
        for (auto& c : enumerate_curricula(roster, cfg.para_env, cfg.curriculum_length)) {
            if (pop.size() >= cfg.population_size) break;
            if (std::find(pop.individuals.begin(), pop.individuals.end(), c) == pop.individuals.end()) {
                pop.individuals.push_back(std::move(c));
            }
        }
    }
    while (pop.size() < cfg.population_size) {
        pop.individuals.push_back(random_curriculum(roster, cfg.para_env, cfg.curriculum_length, rng));
    }
    return pop;
}

Selection select(const Population& population, std::span<const double> fitness, const EvolutionConfig& cfg,
                 const IndexDraw& draw) {
    const std::size_t n = population.size();
    if (fitness.size() != n) throw ContractViolation("select: fitness length does not match population");
    if (n == 0) throw ContractViolation("select: empty population");
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return fitness[a] > fitness[b]; });

    Selection sel;
    const std::size_t elites = std::min(cfg.elitism_count, n);
    sel.elites.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(elites));

    auto tournament = [&] {
        std::size_t best = draw(n);
        for (std::size_t k = 1; k < cfg.tournament_size; ++k) {
            const std::size_t c = draw(n);
            if (fitness[c] > fitness[best] || (fitness[c] == fitness[best] && c < best)) best = c;
        }
        return best;
    };
    const std::size_t children = n - elites;
    for (std::size_t made = 0; made < children; made += 2) {
        const std::size_t a = tournament();
        const std::size_t b = tournament();
        sel.parents.emplace_back(a, b);
    }
    return sel;
}

Selection select(const Population& population, std::span<const double> fitness, const EvolutionConfig& cfg, Rng& rng) {
    return select(population, fitness, cfg, [&rng](std::size_t n) { return rng.index(n); });
}

std::pair<Curriculum, Curriculum> crossover(const Curriculum& a, const Curriculum& b, double rate, Rng& rng) {
    if (a.length() != b.length()) throw ContractViolation("crossover: parents differ in length");
    std::pair<Curriculum, Curriculum> kids{a, b};
    if (!rng.bernoulli(rate)) return kids;
    for (std::size_t j = 0; j < a.length(); ++j) {
        if (rng.bernoulli(0.5)) std::swap(kids.first.steps[j], kids.second.steps[j]);
    }
    return kids;
}

Curriculum mutate(const Curriculum& c, double rate, std::span<const EnvSpec> roster, std::size_t para_env, Rng& rng) {
    Curriculum out = c;
    for (auto& step : out.steps) {
        if (rng.bernoulli(rate)) step = random_step(roster, para_env, rng);
    }
    return out;
}

Population next_generation(const Population& population, std::span<const double> fitness, const EvolutionConfig& cfg,
                           std::span<const EnvSpec> roster, Rng& rng) {
    const Selection sel = select(population, fitness, cfg, rng);
    Population next;
    for (std::size_t e : sel.elites) next.individuals.push_back(population.individuals[e]);
    for (const auto& [pa, pb] : sel.parents) {
        auto [c1, c2] = crossover(population.individuals[pa], population.individuals[pb], cfg.crossover_rate, rng);
        for (Curriculum* child : {&c1, &c2}) {
            if (next.size() >= population.size()) break;
            next.individuals.push_back(mutate(*child, cfg.mutation_rate, roster, cfg.para_env, rng));
        }
    }
    return next;
}

std::vector<std::pair<double, double>> sobol_rate_grid(std::size_t n) {
    if (n == 0) throw ContractViolation("sobol_rate_grid needs n >= 1");
    constexpr int kBits = 32;
    if (n >= (std::size_t{1} << kBits)) throw ConfigError("sobol_rate_grid: too many points");
    // Direction numbers: dimension 1 is the van der Corput sequence; dimension 2
    // uses the primitive polynomial x + 1 with m_1 = 1, m_k = 2 m_{k-1} xor m_{k-1}.
    std::array<std::uint32_t, kBits> v1{};
    std::array<std::uint32_t, kBits> v2{};
    std::uint32_t m = 1;
    for (int k = 0; k < kBits; ++k) {
        v1[k] = 1u << (kBits - 1 - k);
        if (k > 0) m = (m << 1) ^ m;
        v2[k] = m << (kBits - 1 - k);
    }
    std::vector<std::pair<double, double>> points;
    points.reserve(n);
    std::uint32_t x = 0;
    std::uint32_t y = 0;
    constexpr double scale = 1.0 / 4294967296.0;
    for (std::size_t i = 1; i <= n; ++i) {
        // Gray-code order: flip the direction number of the lowest zero bit of i-1.
        const int c = std::countr_one(static_cast<std::uint64_t>(i - 1));
        x ^= v1[c];
        y ^= v2[c];
        points.emplace_back(x * scale, y * scale);
    }
    return points;
}

} // namespace rheacl
