// Acceptance checks. Prints one PASS/FAIL line per criterion and exits non-zero
// if any selected criterion fails.
//
//   rheacl_acceptance [--only 1,2,...] [--runs DIR] [--jobs N]
//
// Criterion 9 trains real agents (minutes); select it with --only 9.

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "rheacl/curriculum.hpp"
#include "rheacl/errors.hpp"
#include "rheacl/evolution.hpp"
#include "rheacl/gridworld.hpp"
#include "rheacl/harness.hpp"
#include "rheacl/ppo.hpp"
#include "rheacl/schedulers.hpp"
#include "support/oracles.hpp"
#include "support/table_trainer.hpp"

using namespace rheacl;
namespace fs = std::filesystem;

namespace {

struct Verdict {
    bool pass = false;
    std::string detail;
};

std::string fixed(double x, int digits = 3) {
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(digits);
    os << x;
    return os.str();
}

std::string sci(double x) {
    std::ostringstream os;
    os.setf(std::ios::scientific);
    os.precision(2);
    os << x;
    return os.str();
}

// 1. Loss gradients against central differences.
Verdict gradient_oracle() {
    PpoConfig cfg;
    cfg.num_processes = 4;
    cfg.frames_per_process = 32;
    cfg.batch_size = 128;
    const std::vector<EnvSpec> pool{EnvSpec::make(EnvKind::DoorKey, 6), EnvSpec::make(EnvKind::DynamicObstacles, 6)};
    std::size_t checked = 0;
    std::size_t agreed = 0;
    double worst = 0.0;
    for (std::uint64_t batch = 0; batch < 10; ++batch) {
        Rng rng(derive_seed(2024, {batch}));
        const PolicyParams params = PolicyParams::random(rng);
        Collector collector(pool, EnvAssignment::RoundRobin, cfg.num_processes, {}, rng.fork());
        RolloutBuffer buffer = collector.collect(params, cfg, StepBudgetSchedule{}, 0);
        compute_gae(buffer, cfg.discount, cfg.gae_lambda);
        std::vector<std::size_t> idx(buffer.size());
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        rng.shuffle(std::span<std::size_t>(idx));
        idx.resize(16);
        Minibatch mb = make_minibatch(buffer, idx, normalize_advantages(buffer.advantages));
        // Off-policy ratios so the clipped branch is exercised too.
        for (auto& lp : mb.old_log_probs) lp += rng.uniform(-0.3, 0.3);

        std::vector<double> grad;
        loss_and_gradient(params, mb, cfg, &grad);
        auto f = [&](const std::vector<double>& x) {
            PolicyParams p = params;
            p.values = x;
            return loss_and_gradient(p, mb, cfg, nullptr).total;
        };
        for (int k = 0; k < 20; ++k) {
            const std::size_t i = rng.index(params.size());
            const double num = oracle::central_difference(f, params.values, i, 1e-5);
            const double diff = std::abs(grad[i] - num);
            const double scale = std::max(std::abs(grad[i]), std::abs(num));
            if (scale > 0.0) worst = std::max(worst, diff / scale);
            ++checked;
            if (oracle::gradients_agree(grad[i], num, 1e-4, 1e-7)) ++agreed;
        }
    }
    return {agreed == checked,
            std::to_string(agreed) + "/" + std::to_string(checked) + " coordinates agree, worst rel err " + sci(worst)};
}

// 2. Step-budget multiplier golden values.
Verdict schedule_golden() {
    const StepBudgetSchedule s;
    const bool ok = s.multiplier(500000) == 1.0 && s.multiplier(1500000) == 0.5 && s.multiplier(2200000) == 0.15 &&
                    s.multiplier(2500000) == 0.15 && s.multiplier(100000000) == 0.15;
    return {ok, "m(500k)=" + fixed(s.multiplier(500000), 4) + " m(1.5M)=" + fixed(s.multiplier(1500000), 4) +
                    " m(2.2M)=" + fixed(s.multiplier(2200000), 4)};
}

// 3. Reward golden values through real episodes.
Verdict reward_golden() {
    auto open_room = [](EnvKind kind, int max_steps) {
        GridState s = reset(EnvSpec::make(kind, 6), 1, max_steps);
        for (int y = 1; y < 5; ++y) {
            for (int x = 1; x < 5; ++x) s.at({x, y}) = Cell::Empty;
        }
        s.obstacles.clear();
        s.carrying_key = false;
        s.at({4, 4}) = Cell::Goal;
        s.agent = {3, 4};
        s.dir = Dir::East;
        return s;
    };
    const double at_zero = success_reward(0, 360);

    GridState last = open_room(EnvKind::DoorKey, 3);
    step(last, Action::Left);
    step(last, Action::Right);
    const StepResult at_max = step(last, Action::Forward);

    GridState idle = open_room(EnvKind::DoorKey, 2);
    step(idle, Action::Left);
    const StepResult timeout = step(idle, Action::Left);

    GridState dyn = open_room(EnvKind::DynamicObstacles, 100);
    dyn.at({4, 4}) = Cell::Empty;
    dyn.at({4, 3}) = Cell::Goal;
    dyn.obstacles = {{4, 4}};
    dyn.at({4, 4}) = Cell::Obstacle;
    const StepResult hit = step(dyn, Action::Forward);

    const bool ok = at_zero == 1.0 && at_max.outcome == Outcome::Goal && std::abs(at_max.reward - 0.1) < 1e-15 &&
                    timeout.outcome == Outcome::Timeout && timeout.reward == 0.0 &&
                    hit.outcome == Outcome::Collision && hit.reward == -1.0;
    return {ok, "goal@0=" + fixed(at_zero) + " goal@max=" + fixed(at_max.reward) + " timeout=" +
                    fixed(timeout.reward) + " collision=" + fixed(hit.reward)};
}

// 4. Curriculum score against the direct power sum.
Verdict score_oracle() {
    Rng rng(44);
    double worst = 0.0;
    for (int k = 0; k < 1000; ++k) {
        std::vector<double> r(1 + rng.index(10));
        for (auto& x : r) x = rng.uniform(-1.0, 1.0);
        const double g = k % 10 == 0 ? 1.0 : rng.uniform(0.0, 1.0);
        const double ref = oracle::direct_discounted_sum(r, g);
        worst = std::max(worst, std::abs(curriculum_score(r, g) - ref) / std::max(1.0, std::abs(ref)));
    }
    const std::vector<double> r{0.25, -0.5, 1.0, 0.125};
    const bool plain = curriculum_score(r, 1.0) == 0.875;
    return {worst <= 1e-12 && plain, "1000 instances, worst err " + sci(worst) + ", gamma=1 sum " +
                                         (plain ? "exact" : "wrong")};
}

// 5. One exhaustive single-step epoch commits the argmax environment.
Verdict stub_epoch() {
    const std::vector<EnvSpec> roster{EnvSpec::make(EnvKind::DoorKey, 6), EnvSpec::make(EnvKind::DoorKey, 8),
                                      EnvSpec::make(EnvKind::DoorKey, 10)};
    SchedulerConfig cfg;
    cfg.roster = roster;
    cfg.iter_steps = 1000;
    cfg.total_frames = 1000;
    cfg.evolution.curriculum_length = 1;
    cfg.evolution.para_env = 1;
    cfg.evolution.population_size = enumerate_curricula(roster, 1, 1).size();
    cfg.evolution.generations = 1;
    cfg.evolution.init = InitMode::Enumerate;
    Rng rng(5);
    int exact = 0;
    const int tables = 50;
    for (int k = 0; k < tables; ++k) {
        std::map<EnvSpec, double> table;
        for (const auto& e : roster) table[e] = rng.uniform();
        const EnvSpec argmax =
            std::max_element(table.begin(), table.end(), [](auto& a, auto& b) { return a.second < b.second; })->first;
        stub::TableTrainer snapshot(table);
        const EpochResult er = run_epoch(snapshot, cfg, ScoreConfig{}, 9, 0, std::nullopt, true, 0);
        const auto& agent = dynamic_cast<const stub::TableTrainer&>(*er.agent);
        if (agent.history() == std::vector<std::vector<EnvSpec>>{{argmax}}) ++exact;
    }
    return {exact == tables, std::to_string(exact) + "/" + std::to_string(tables) +
                                 " random tables commit the argmax environment (population " +
                                 std::to_string(cfg.evolution.population_size) + ")"};
}

// 6. GA invariants over many generations.
Verdict ga_invariants() {
    std::vector<EnvSpec> all;
    for (auto kind : {EnvKind::DoorKey, EnvKind::DynamicObstacles}) {
        for (int size : kLevelSizes) all.push_back(EnvSpec::make(kind, size));
    }
    auto fitness_of = [](const Curriculum& c) {
        std::uint64_t h = 1469598103934665603ull;
        for (const auto& s : c.steps) {
            for (const auto& e : s.envs) h = mix64(h ^ static_cast<std::uint64_t>(e.size * 2 + int(e.kind)));
            h = mix64(h + 0x9e37);
        }
        return static_cast<double>(h >> 11) / 9007199254740992.0;
    };
    Rng rng(66);
    std::size_t generations = 0;
    std::size_t violations = 0;
    while (generations < 10000) {
        EvolutionConfig cfg;
        cfg.population_size = 2 + rng.index(7);
        cfg.curriculum_length = 1 + rng.index(4);
        cfg.para_env = 1 + rng.index(3);
        cfg.mutation_rate = rng.uniform();
        cfg.crossover_rate = rng.uniform();
        cfg.elitism_count = 1 + rng.index(cfg.population_size - 1);
        cfg.tournament_size = 1 + rng.index(3);
        std::vector<EnvSpec> roster = all;
        rng.shuffle(std::span<EnvSpec>(roster));
        roster.resize(1 + rng.index(all.size()));
        Population pop = init_population(cfg, roster, rng);
        double best = -1.0;
        for (int g = 0; g < 50; ++g, ++generations) {
            std::vector<double> fit;
            for (const auto& c : pop.individuals) {
                if (!is_valid_curriculum(c, roster, cfg.para_env, cfg.curriculum_length)) ++violations;
                fit.push_back(fitness_of(c));
            }
            if (pop.size() != cfg.population_size) ++violations;
            const double now = *std::max_element(fit.begin(), fit.end());
            if (now < best) ++violations;
            best = now;
            pop = next_generation(pop, fit, cfg, roster, rng);
        }
    }
    return {violations == 0, std::to_string(generations) + " generations, " + std::to_string(violations) +
                                 " invariant violations"};
}

// 7. Candidate evaluation leaves the committed weights equal to a serial replay.
Verdict snapshot_isolation() {
    PpoConfig ppo;
    ppo.num_processes = 4;
    ppo.frames_per_process = 32;
    ppo.batch_size = 64;
    ScoreConfig score;
    score.eval_episodes_per_env = 2;
    SchedulerConfig cfg;
    cfg.iter_steps = 256;
    cfg.total_frames = 256;
    cfg.evolution.generations = 2;
    cfg.evolution.population_size = 3;
    cfg.evolution.curriculum_length = 2;
    cfg.candidate_threads = 2;
    int ok = 0;
    const int trials = 3;
    for (std::uint64_t seed = 1; seed <= trials; ++seed) {
        auto snapshot = PpoTrainer::fresh(ppo, score, StepBudgetSchedule{}, seed);
        const AgentState before = snapshot->agent();
        const EpochResult er = run_epoch(*snapshot, cfg, score, seed, 0, std::nullopt, true, 0);
        auto replay = snapshot->clone();
        replay->train(er.best.steps.front().envs, EnvAssignment::RoundRobin, cfg.iter_steps, commit_seed(seed, 0));
        const bool same = dynamic_cast<const PpoTrainer&>(*er.agent).agent() ==
                          dynamic_cast<const PpoTrainer&>(*replay).agent();
        if (same && snapshot->agent() == before) ++ok;
    }
    return {ok == trials, std::to_string(ok) + "/" + std::to_string(trials) +
                              " epochs: committed weights bit-identical to the serial replay, snapshot untouched"};
}

// 8. BFS solvability and replay determinism.
Verdict environments() {
    int unsolved = 0;
    for (int size : {6, 8}) {
        const EnvSpec spec = EnvSpec::make(EnvKind::DoorKey, size);
        for (std::uint64_t seed = 0; seed < 500; ++seed) {
            if (oracle::doorkey_shortest_solution(reset(spec, seed, spec.default_max_steps())) < 0) ++unsolved;
        }
    }
    int mismatches = 0;
    for (auto kind : {EnvKind::DoorKey, EnvKind::DynamicObstacles}) {
        const EnvSpec spec = EnvSpec::make(kind, 8);
        for (std::uint64_t seed = 0; seed < 100; ++seed) {
            Rng actions(seed ^ 0xabcdef);
            std::vector<Action> seq(300);
            for (auto& a : seq) a = static_cast<Action>(actions.index(kNumActions));
            auto play = [&] {
                std::vector<std::string> trace;
                GridState s = reset(spec, seed, 250);
                trace.push_back(render(s));
                for (Action a : seq) {
                    if (s.done()) break;
                    const StepResult r = step(s, a);
                    trace.push_back(render(s) + fixed(r.reward, 17) + to_string(r.outcome));
                }
                return trace;
            };
            if (play() != play()) ++mismatches;
        }
    }
    return {unsolved == 0 && mismatches == 0, "1000 DoorKey layouts, " + std::to_string(unsolved) + " unsolvable; " +
                                                  "200 replays, " + std::to_string(mismatches) + " mismatches"};
}

// 9. Scaled learning check.
Verdict learning_check(const fs::path& runs, std::size_t jobs) {
    auto peaks = [&](SchedulerKind kind) {
        RunConfig cfg;
        cfg.name = to_string(kind);
        cfg.scheduler.kind = kind;
        cfg.scheduler.roster = {EnvSpec::make(EnvKind::DoorKey, 6), EnvSpec::make(EnvKind::DoorKey, 8)};
        cfg.scheduler.total_frames = 150000;
        cfg.scheduler.iter_steps = 25000;
        cfg.scheduler.evolution.generations = 2;
        cfg.scheduler.evolution.population_size = 3;
        cfg.scheduler.evolution.curriculum_length = 2;
        cfg.score.gamma = 0.9;
        cfg.seeds = {1, 2, 3};
        cfg.validate();
        const ExperimentOutcome out = run_experiment(cfg, runs / cfg.name, jobs);
        std::vector<double> best;
        for (const auto& s : out.seeds) {
            if (!s.ok) throw std::runtime_error(cfg.name + " seed " + std::to_string(s.seed) + ": " + s.error);
            double peak = 0.0;
            std::ifstream log(s.dir / "log.jsonl");
            std::string line;
            while (std::getline(log, line)) {
                const Json j = Json::parse(line);
                if (j.value("record", "") == "eval") peak = std::max(peak, j["roster_mean"].get<double>());
            }
            best.push_back(peak);
        }
        return best;
    };
    const auto all_parallel = peaks(SchedulerKind::AllParallel);
    const auto rhea = peaks(SchedulerKind::RheaCL);
    const auto vanilla = peaks(SchedulerKind::NoCurriculum);
    int satisfied = 0;
    std::string detail;
    for (std::size_t i = 0; i < 3; ++i) {
        const bool ok = all_parallel[i] >= 0.5 && rhea[i] >= 0.5 && vanilla[i] < 0.3;
        satisfied += ok ? 1 : 0;
        detail += " seed" + std::to_string(i + 1) + "[AllParallel " + fixed(all_parallel[i], 2) + ", RheaCL " +
                  fixed(rhea[i], 2) + ", NoCurriculum " + fixed(vanilla[i], 2) + "]";
    }
    return {satisfied >= 2, std::to_string(satisfied) + "/3 seeds satisfy the ordering;" + detail};
}

// 10. Sobol grid.
Verdict sobol() {
    const auto g = sobol_rate_grid(64);
    std::set<std::pair<double, double>> distinct(g.begin(), g.end());
    bool inside = true;
    for (const auto& [a, b] : g) inside = inside && a >= 0.0 && a <= 1.0 && b >= 0.0 && b <= 1.0;
    const bool first = g.front() == std::pair<double, double>{0.5, 0.5};
    return {first && inside && distinct.size() == 64,
            "first (" + fixed(g.front().first, 2) + ", " + fixed(g.front().second, 2) + "), " +
                std::to_string(distinct.size()) + " distinct of 64"};
}

// 11. Shipped sweep files against the frozen hyperparameter tables.
Verdict sweep_fidelity(const fs::path& source) {
    using Row = std::array<std::int64_t, 4>; // iter_steps (k), length, generations, population
    const std::vector<Row> doorkey{
        {25, 3, 3, 3},  {50, 3, 3, 3},  {75, 3, 1, 3},  {75, 3, 2, 3},  {75, 2, 3, 3},  {75, 3, 3, 3},
        {75, 3, 1, 3},  {75, 3, 2, 3},  {100, 3, 3, 3}, {100, 4, 3, 2}, {100, 1, 3, 3}, {100, 1, 3, 5},
        {100, 2, 5, 2}, {100, 3, 2, 3}, {100, 3, 3, 3}, {100, 4, 3, 3}, {100, 1, 3, 3}, {100, 1, 5, 3},
        {100, 2, 3, 3}, {100, 2, 4, 3}, {100, 3, 3, 3}, {150, 3, 2, 4}, {150, 3, 3, 3}, {150, 3, 1, 3},
        {150, 3, 2, 3}, {250, 3, 3, 3},
    };
    const std::vector<Row> dynamic{
        {50, 3, 3, 3},  {75, 3, 3, 3},  {75, 3, 2, 4},  {75, 3, 2, 3},  {100, 3, 2, 4},
        {100, 3, 2, 3}, {100, 3, 3, 3}, {150, 3, 3, 3}, {150, 3, 4, 2}, {150, 2, 4, 3},
    };
    std::string detail;
    bool ok = true;
    auto check = [&](const std::string& file, const std::vector<Row>& expected, EnvKind kind) {
        const fs::path path = source / "sweeps" / file;
        const SweepSpec spec = load_sweep(path);
        std::size_t matched = 0;
        for (std::size_t i = 0; i < spec.rows.size() && i < expected.size(); ++i) {
            const RunConfig c = spec.resolve(spec.rows[i]);
            const auto& ev = c.scheduler.evolution;
            const Row got{c.scheduler.iter_steps / 1000, static_cast<std::int64_t>(ev.curriculum_length),
                          static_cast<std::int64_t>(ev.generations), static_cast<std::int64_t>(ev.population_size)};
            bool roster_ok = c.scheduler.kind == SchedulerKind::RheaCL && c.scheduler.iter_steps % 1000 == 0;
            for (const auto& e : c.scheduler.roster) roster_ok = roster_ok && e.kind == kind;
            if (got == expected[i] && roster_ok) ++matched;
        }
        const bool file_ok = spec.rows.size() == expected.size() && matched == expected.size();
        ok = ok && file_ok;
        detail += file + " " + std::to_string(matched) + "/" + std::to_string(expected.size()) + " rows; ";
#ifdef RHEACL_CLI_PATH
        const std::string cmd = std::string(RHEACL_CLI_PATH) + " validate '" + path.string() + "' > /dev/null 2>&1";
        const bool valid = std::system(cmd.c_str()) == 0;
        ok = ok && valid;
        if (!valid) detail += "validate rejected " + file + "; ";
#endif
    };
    try {
        check("doorkey_grid.json", doorkey, EnvKind::DoorKey);
        check("dynamic_obstacles_grid.json", dynamic, EnvKind::DynamicObstacles);
    } catch (const std::exception& e) {
        return {false, e.what()};
    }
    return {ok, detail.substr(0, detail.size() - 2)};
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Acceptance checks"};
    std::string only;
    std::string runs = (fs::temp_directory_path() / "rheacl_acceptance_runs").string();
    std::string source = RHEACL_SOURCE_DIR;
    std::size_t jobs = 1;
    app.add_option("--only", only, "Comma-separated criteria (default: all)");
    app.add_option("--runs", runs, "Output directory for the learning-check runs");
    app.add_option("--source", source, "Repository root holding sweeps/");
    app.add_option("--jobs", jobs, "Seeds trained in parallel for the learning check");
    CLI11_PARSE(app, argc, argv);

    std::set<int> selected;
    if (only.empty()) {
        for (int i = 1; i <= 11; ++i) selected.insert(i);
    } else {
        std::stringstream ss(only);
        std::string tok;
        while (std::getline(ss, tok, ',')) selected.insert(std::stoi(tok));
    }

    const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
        {"gradient oracle", gradient_oracle},
        {"schedule golden values", schedule_golden},
        {"reward golden values", reward_golden},
        {"curriculum score oracle", score_oracle},
        {"stub epoch commits argmax", stub_epoch},
        {"GA invariants", ga_invariants},
        {"snapshot isolation", snapshot_isolation},
        {"environment solvability and determinism", environments},
        {"scaled learning check", [&] { return learning_check(runs, jobs); }},
        {"Sobol grid", sobol},
        {"sweep fidelity", [&] { return sweep_fidelity(source); }},
    };

    int failures = 0;
    for (int id : selected) {
        if (id < 1 || id > static_cast<int>(criteria.size())) {
            std::cerr << "unknown criterion " << id << "\n";
            return 1;
        }
        const auto& [name, fn] = criteria[static_cast<std::size_t>(id - 1)];
        const auto start = std::chrono::steady_clock::now();
        Verdict v;
        try {
            v = fn();
        } catch (const std::exception& e) {
            v = {false, std::string("error: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        std::cout << "criterion " << id << " " << (v.pass ? "PASS" : "FAIL") << "  " << name << ": " << v.detail
                  << " (" << fixed(secs, 1) << " s)" << std::endl;
        failures += v.pass ? 0 : 1;
    }
    return failures == 0 ? 0 : 1;
}
