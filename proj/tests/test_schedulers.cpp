#include <doctest.h>

#include <map>
#include <set>

#include "rheacl/errors.hpp"
#include "rheacl/schedulers.hpp"
#include "support/table_trainer.hpp"

using namespace rheacl;

namespace {

const EnvSpec kA = EnvSpec::make(EnvKind::DoorKey, 6);
const EnvSpec kB = EnvSpec::make(EnvKind::DoorKey, 8);
const EnvSpec kC = EnvSpec::make(EnvKind::DoorKey, 10);

std::map<EnvSpec, double> table(double a, double b, double c) { return {{kA, a}, {kB, b}, {kC, c}}; }

SchedulerConfig stub_config(SchedulerKind kind = SchedulerKind::RheaCL) {
    SchedulerConfig cfg;
    cfg.kind = kind;
    cfg.roster = {kA, kB, kC};
    cfg.iter_steps = 100;
    cfg.total_frames = 300;
    cfg.spcl_check_every = 100;
    cfg.evolution.population_size = 3;
    cfg.evolution.generations = 2;
    cfg.evolution.curriculum_length = 2;
    return cfg;
}

PpoConfig tiny_ppo() {
    PpoConfig p;
    p.num_processes = 2;
    p.frames_per_process = 16;
    p.batch_size = 16;
    p.update_epochs = 1;
    return p;
}

ScoreConfig tiny_score() {
    ScoreConfig s;
    s.eval_episodes_per_env = 1;
    return s;
}

std::unique_ptr<PpoTrainer> tiny_agent(std::uint64_t seed) {
    return PpoTrainer::fresh(tiny_ppo(), tiny_score(), StepBudgetSchedule{}, seed);
}

SchedulerConfig tiny_ppo_config(SchedulerKind kind) {
    SchedulerConfig cfg;
    cfg.kind = kind;
    cfg.roster = {kA, kB};
    cfg.iter_steps = 32;
    cfg.total_frames = 64;
    cfg.spcl_check_every = 32;
    cfg.evolution.population_size = 2;
    cfg.evolution.generations = 2;
    cfg.evolution.curriculum_length = 2;
    return cfg;
}

std::vector<EvalRecord> evals_of(const RunLog& log) {
    std::vector<EvalRecord> out;
    for (const auto& r : log.records) {
        if (r.type == RecordType::Eval) out.push_back(r);
    }
    return out;
}

bool same_records(const std::vector<EvalRecord>& a, const std::vector<EvalRecord>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const auto& x = a[i];
        const auto& y = b[i];
        const bool score_eq = (std::isnan(x.score) && std::isnan(y.score)) || x.score == y.score;
        if (x.type != y.type || x.frames != y.frames || x.frames_consumed != y.frames_consumed ||
            x.curriculum != y.curriculum || x.returns != y.returns || x.roster_mean != y.roster_mean || !score_eq ||
            x.epoch != y.epoch || x.generation != y.generation || x.individual != y.individual) {
            return false;
        }
    }
    return true;
}

} // namespace

TEST_CASE("scheduler kinds round-trip through text") {
    for (auto k : {SchedulerKind::RheaCL, SchedulerKind::RHRS, SchedulerKind::AllParallel, SchedulerKind::SPCL,
                   SchedulerKind::NoCurriculum}) {
        CHECK(parse_scheduler_kind(to_string(k)) == k);
    }
    CHECK_THROWS_AS(parse_scheduler_kind("Random"), ConfigError);
}

TEST_CASE("an enumerated single-step population commits the best table entry") {
    SchedulerConfig cfg = stub_config();
    cfg.evolution.init = InitMode::Enumerate;
    cfg.evolution.curriculum_length = 1;
    cfg.evolution.para_env = 1;
    cfg.evolution.generations = 1;
    cfg.evolution.population_size = 3;
    for (const auto& [t, best] : std::vector<std::pair<std::map<EnvSpec, double>, EnvSpec>>{
             {table(0.2, 0.9, 0.5), kB}, {table(0.7, 0.1, 0.6), kA}, {table(0.1, 0.2, 0.3), kC}}) {
        stub::TableTrainer snapshot(t);
        const EpochResult er = run_epoch(snapshot, cfg, ScoreConfig{}, 1, 0, std::nullopt, true, 0);
        CHECK(er.best.steps.front().envs == std::vector<EnvSpec>{best});
        const auto& agent = dynamic_cast<const stub::TableTrainer&>(*er.agent);
        REQUIRE(agent.history().size() == 1u);
        CHECK(agent.history()[0] == std::vector<EnvSpec>{best});
    }
}

TEST_CASE("candidate training budget is generations x population x length x iter_steps") {
    for (std::size_t gens : {1u, 2u, 3u}) {
        for (std::size_t pop : {2u, 4u}) {
            for (std::size_t len : {1u, 3u}) {
                SchedulerConfig cfg = stub_config();
                cfg.evolution.generations = gens;
                cfg.evolution.population_size = pop;
                cfg.evolution.curriculum_length = len;
                auto calls = std::make_shared<std::vector<stub::TrainCall>>();
                stub::TableTrainer snapshot(table(0.1, 0.2, 0.3), calls);
                const EpochResult er = run_epoch(snapshot, cfg, ScoreConfig{}, 3, 0, std::nullopt, true, 0);
                const auto expected = static_cast<std::int64_t>(gens * pop * len) * cfg.iter_steps;
                CHECK(er.candidate_frames == expected);
                CHECK(er.commit_frames == cfg.iter_steps);
                CHECK(calls->size() == gens * pop * len + 1);
            }
        }
    }
}

TEST_CASE("candidates start from an untouched snapshot") {
    SchedulerConfig cfg = stub_config();
    stub::TableTrainer snapshot(table(0.1, 0.8, 0.3));
    snapshot.set_level(0.42);
    std::vector<EvalRecord> records;
    run_epoch(snapshot, cfg, ScoreConfig{}, 4, 0, std::nullopt, true, 0,
              [&](const EvalRecord& r) { records.push_back(r); });
    CHECK(snapshot.frames() == 0);
    CHECK(snapshot.level() == 0.42);
    CHECK(snapshot.history().empty());
    for (const auto& r : records) {
        // Each candidate's frame counter restarts from the snapshot.
        CHECK(r.frames == (r.step + 1) * cfg.iter_steps);
    }

    cfg.isolate_candidates = false;
    records.clear();
    run_epoch(snapshot, cfg, ScoreConfig{}, 4, 0, std::nullopt, true, 0,
              [&](const EvalRecord& r) { records.push_back(r); });
    for (std::size_t i = 1; i < records.size(); ++i) CHECK(records[i].frames > records[i - 1].frames);
}

TEST_CASE("a PPO snapshot is bit-identical after an epoch and candidates are reproducible") {
    const SchedulerConfig cfg = tiny_ppo_config(SchedulerKind::RheaCL);
    auto agent = tiny_agent(5);
    const AgentState before = agent->agent();
    const EpochResult a = run_epoch(*agent, cfg, tiny_score(), 5, 0, std::nullopt, true, 0);
    CHECK(agent->agent() == before);
    const EpochResult b = run_epoch(*agent, cfg, tiny_score(), 5, 0, std::nullopt, true, 0);
    CHECK(a.best == b.best);
    CHECK(dynamic_cast<const PpoTrainer&>(*a.agent).agent() == dynamic_cast<const PpoTrainer&>(*b.agent).agent());
}

TEST_CASE("threaded candidate evaluation matches the sequential result") {
    SchedulerConfig cfg = tiny_ppo_config(SchedulerKind::RheaCL);
    std::vector<EvalRecord> seq, par;
    run_rhea_cl(cfg, tiny_score(), tiny_agent(6), 6, [&](const EvalRecord& r) { seq.push_back(r); });
    cfg.candidate_threads = 3;
    run_rhea_cl(cfg, tiny_score(), tiny_agent(6), 6, [&](const EvalRecord& r) { par.push_back(r); });
    CHECK(same_records(seq, par));
}

TEST_CASE("the damped score of each candidate is the discounted sum of its step rewards") {
    SchedulerConfig cfg = stub_config();
    cfg.evolution.curriculum_length = 3;
    std::vector<EvalRecord> records;
    ScoreConfig score;
    score.gamma = 0.5;
    stub::TableTrainer snapshot(table(0.2, 0.6, 1.0));
    const EpochResult er = run_epoch(snapshot, cfg, score, 7, 0, std::nullopt, true, 0,
                                     [&](const EvalRecord& r) { records.push_back(r); });
    for (const auto& r : records) {
        if (r.step != 2) continue;
        CHECK(er.rewards.at(static_cast<std::size_t>(r.generation), static_cast<std::size_t>(r.individual)) ==
              doctest::Approx(r.score));
    }
    // Per-step rewards equal the table mean of the step's envs.
    const Curriculum& best = er.best;
    double expected = 0.0;
    double w = 1.0;
    const auto t = table(0.2, 0.6, 1.0);
    for (const auto& s : best.steps) {
        double m = 0.0;
        for (const auto& e : s.envs) m += t.at(e);
        expected += w * m / static_cast<double>(s.envs.size());
        w *= 0.5;
    }
    CHECK(er.rewards.at(1, er.best_index) == doctest::Approx(expected));
}

TEST_CASE("reuse commit keeps the winning candidate's first-step weights") {
    SchedulerConfig cfg = stub_config();
    cfg.commit = CommitMode::Reuse;
    auto calls = std::make_shared<std::vector<stub::TrainCall>>();
    stub::TableTrainer snapshot(table(0.1, 0.9, 0.4), calls);
    const EpochResult er = run_epoch(snapshot, cfg, ScoreConfig{}, 8, 0, std::nullopt, true, 0);
    CHECK(er.commit_frames == 0);
    const auto& agent = dynamic_cast<const stub::TableTrainer&>(*er.agent);
    CHECK(agent.frames() == cfg.iter_steps);
    CHECK(agent.history() == std::vector<std::vector<EnvSpec>>{er.best.steps.front().envs});

    const RunResult run = run_rhea_cl(cfg, ScoreConfig{}, std::make_unique<stub::TableTrainer>(table(0.1, 0.9, 0.4)), 8);
    CHECK(run.log.frames_consumed == run.log.candidate_frames);
}

TEST_CASE("rolling-horizon frame accounting") {
    const SchedulerConfig cfg = stub_config();
    const RunResult run = run_rhea_cl(cfg, ScoreConfig{}, std::make_unique<stub::TableTrainer>(table(0.3, 0.5, 0.2)), 9);
    const auto epochs = static_cast<std::int64_t>((cfg.total_frames + cfg.iter_steps - 1) / cfg.iter_steps);
    const auto per_epoch = static_cast<std::int64_t>(cfg.evolution.generations * cfg.evolution.population_size *
                                                     cfg.evolution.curriculum_length) *
                           cfg.iter_steps;
    CHECK(run.log.committed_frames == epochs * cfg.iter_steps);
    CHECK(run.log.candidate_frames == epochs * per_epoch);
    CHECK(run.log.frames_consumed == run.log.candidate_frames + run.log.committed_frames);
    CHECK(run.agent->frames() == run.log.committed_frames);
    const auto evals = evals_of(run.log);
    CHECK(evals.size() == static_cast<std::size_t>(epochs + 1));
    CHECK(evals.back().frames_consumed == run.log.frames_consumed);
    std::int64_t prev = -1;
    for (const auto& r : run.log.records) {
        CHECK(r.frames_consumed >= prev);
        prev = r.frames_consumed;
    }
}

TEST_CASE("RHRS draws fresh random populations") {
    SchedulerConfig cfg = stub_config(SchedulerKind::RHRS);
    cfg.evolution.generations = 3;
    const RunResult run = run_rhrs(cfg, ScoreConfig{}, std::make_unique<stub::TableTrainer>(table(0.3, 0.5, 0.2)), 10);
    std::set<std::string> seen;
    for (const auto& r : run.log.records) {
        if (r.type == RecordType::Candidate) seen.insert(r.curriculum);
    }
    CHECK(seen.size() > 3u);
    CHECK(evals_of(run.log).size() == 4u);
}

TEST_CASE("SPCL level rule") {
    CHECK(spcl_next_level(0, 0.9, 3, 0.85, 0.5) == 1u);
    CHECK(spcl_next_level(2, 0.9, 3, 0.85, 0.5) == 2u);
    CHECK(spcl_next_level(1, 0.4, 3, 0.85, 0.5) == 0u);
    CHECK(spcl_next_level(0, 0.4, 3, 0.85, 0.5) == 0u);
    CHECK(spcl_next_level(1, 0.85, 3, 0.85, 0.5) == 1u);
    CHECK(spcl_next_level(1, 0.5, 3, 0.85, 0.5) == 1u);
    CHECK(spcl_next_level(1, 0.7, 3, 0.85, 0.5) == 1u);
    CHECK_THROWS_AS(spcl_next_level(0, 0.5, 0, 0.85, 0.5), ContractViolation);
}

TEST_CASE("SPCL climbs and falls back along the difficulty ladder") {
    SchedulerConfig cfg = stub_config(SchedulerKind::SPCL);
    cfg.roster = {kC, kA, kB}; // ladder order is by size regardless of roster order
    cfg.total_frames = 600;
    auto calls = std::make_shared<std::vector<stub::TrainCall>>();
    const RunResult run = run_spcl(cfg, std::make_unique<stub::TableTrainer>(table(0.9, 0.9, 0.3), calls), 11);
    std::vector<EnvSpec> trained;
    for (const auto& c : *calls) {
        REQUIRE(c.envs.size() == 1u);
        trained.push_back(c.envs[0]);
        CHECK(c.frames == cfg.spcl_check_every);
    }
    CHECK(trained == std::vector<EnvSpec>{kA, kB, kC, kB, kC, kB});
    const auto evals = evals_of(run.log);
    CHECK(evals[1].score == 0.9);
    CHECK(evals[3].score == 0.3);
}

TEST_CASE("AllParallel trains on the whole roster with per-episode cycling") {
    const SchedulerConfig cfg = stub_config(SchedulerKind::AllParallel);
    auto calls = std::make_shared<std::vector<stub::TrainCall>>();
    const RunResult run =
        run_all_parallel(cfg, std::make_unique<stub::TableTrainer>(table(0.1, 0.2, 0.3), calls), 12);
    REQUIRE(calls->size() == 3u);
    for (const auto& c : *calls) {
        CHECK(c.envs == cfg.roster);
        CHECK(c.assignment == EnvAssignment::CyclePerEpisode);
    }
    CHECK(run.log.committed_frames == 300);
    CHECK(run.log.frames_consumed == 300);
}

TEST_CASE("NoCurriculum equals training the hardest env directly") {
    const SchedulerConfig cfg = tiny_ppo_config(SchedulerKind::NoCurriculum);
    auto calls = std::make_shared<std::vector<stub::TrainCall>>();
    run_vanilla(cfg, std::make_unique<stub::TableTrainer>(table(0.1, 0.2, 0.3), calls), 13);
    REQUIRE(calls->size() == 2u);

    const RunResult run = run_vanilla(cfg, tiny_agent(13), 13);
    auto direct = tiny_agent(13);
    for (const auto& c : *calls) {
        CHECK(c.envs == std::vector<EnvSpec>{kB});
        direct->train(c.envs, c.assignment, c.frames, c.seed);
    }
    CHECK(dynamic_cast<const PpoTrainer&>(*run.agent).agent() == direct->agent());
}

TEST_CASE("every scheduler writes the same record schema") {
    for (auto kind : {SchedulerKind::RheaCL, SchedulerKind::RHRS, SchedulerKind::AllParallel, SchedulerKind::SPCL,
                      SchedulerKind::NoCurriculum}) {
        CAPTURE(to_string(kind));
        const SchedulerConfig cfg = stub_config(kind);
        const RunResult run =
            run_scheduler(cfg, ScoreConfig{}, std::make_unique<stub::TableTrainer>(table(0.9, 0.9, 0.9)), 14);
        const auto evals = evals_of(run.log);
        REQUIRE(evals.size() >= 2u);
        CHECK(evals.front().curriculum == "[]");
        CHECK(evals.front().frames == 0);
        for (const auto& r : evals) {
            CHECK(r.scheduler == kind);
            CHECK(r.envs == std::vector<std::string>{"DoorKey-6", "DoorKey-8", "DoorKey-10"});
            CHECK(r.returns.size() == 3u);
        }
        CHECK(evals.back().frames >= cfg.total_frames);
    }
}

TEST_CASE("scheduler config validation") {
    SchedulerConfig cfg = stub_config();
    CHECK_NOTHROW(cfg.validate());
    cfg.total_frames = 10;
    CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("scheduler.total_frames"), ConfigError);
    cfg = stub_config();
    cfg.roster = {kA, kA};
    CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("duplicate"), ConfigError);
    cfg = stub_config();
    cfg.spcl_down = 0.9;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = stub_config();
    cfg.evolution.population_size = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg.kind = SchedulerKind::AllParallel;
    CHECK_NOTHROW(cfg.validate());
}
