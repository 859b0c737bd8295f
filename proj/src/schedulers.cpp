#include "rheacl/schedulers.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

#include "rheacl/errors.hpp"

namespace rheacl {

namespace {

// Stream tags keep every consumer of the run seed on its own rng stream.
constexpr std::uint64_t kTagAgent = 1;
constexpr std::uint64_t kTagCandidate = 2;
constexpr std::uint64_t kTagCommit = 3;
constexpr std::uint64_t kTagEval = 4;
constexpr std::uint64_t kTagPopulation = 5;
constexpr std::uint64_t kTagTrain = 6;
constexpr std::uint64_t kTagCheck = 7;

std::vector<std::string> env_names(std::span<const EnvSpec> roster) {
    std::vector<std::string> names;
    for (const auto& e : roster) names.push_back(e.name());
    return names;
}

Curriculum single_step(std::vector<EnvSpec> envs) {
    Curriculum c;
    c.steps.emplace_back(std::move(envs));
    return c;
}

// Appends records to the log and forwards them to the caller's sink.
class Recorder {
public:
    Recorder(RunLog& log, const RecordSink& sink) : log_(log), sink_(sink) {}

    void operator()(const EvalRecord& r) {
        log_.records.push_back(r);
        if (sink_) sink_(r);
    }

private:
    RunLog& log_;
    const RecordSink& sink_;
};

EvalRecord eval_record(SchedulerKind kind, const Trainer& agent, std::span<const EnvSpec> roster, std::uint64_t seed,
                       const RunLog& log, std::int64_t train_frames, const std::string& curriculum) {
    const RosterEvaluation ev = agent.evaluate(roster, seed);
    EvalRecord r;
    r.type = RecordType::Eval;
    r.scheduler = kind;
    r.frames = agent.frames();
    r.frames_consumed = log.frames_consumed;
    r.train_frames = train_frames;
    r.curriculum = curriculum;
    r.envs = env_names(roster);
    r.returns = ev.per_env;
    r.roster_mean = ev.mean;
    return r;
}

std::uint64_t eval_seed(std::uint64_t run_seed, std::size_t k) { return derive_seed(run_seed, {kTagEval, k}); }

struct CandidateOutcome {
    std::vector<EvalRecord> records;
    std::vector<double> step_rewards;
    std::int64_t frames = 0;
    std::unique_ptr<Trainer> after_first;
};

CandidateOutcome evaluate_candidate(Trainer& trainer, const Curriculum& c, const SchedulerConfig& cfg,
                                    const ScoreConfig& score, std::uint64_t seed, bool keep_first) {
    CandidateOutcome out;
    double damped = 0.0;
    double weight = 1.0;
    for (std::size_t j = 0; j < c.length(); ++j) {
        const std::uint64_t step_seed = derive_seed(seed, {j});
        const std::int64_t f = trainer.train(c.steps[j].envs, EnvAssignment::RoundRobin, cfg.iter_steps, step_seed);
        out.frames += f;
        if (j == 0 && keep_first) out.after_first = trainer.clone();
        const RosterEvaluation ev = trainer.evaluate(cfg.roster, derive_seed(step_seed, {kTagEval}));
        out.step_rewards.push_back(ev.mean);
        damped += ev.mean * weight;
        weight *= score.gamma;

        EvalRecord r;
        r.type = RecordType::Candidate;
        r.frames = trainer.frames();
        r.train_frames = f;
        r.step = static_cast<int>(j);
        r.curriculum = c.to_string();
        r.envs = env_names(cfg.roster);
        r.returns = ev.per_env;
        r.roster_mean = ev.mean;
        r.score = damped;
        out.records.push_back(std::move(r));
    }
    return out;
}

std::vector<CandidateOutcome> evaluate_generation(const Trainer& snapshot, Trainer* shared, const Population& pop,
                                                  const SchedulerConfig& cfg, const ScoreConfig& score,
                                                  std::uint64_t run_seed, std::size_t epoch, std::size_t gen,
                                                  bool keep_first) {
    const std::size_t n = pop.size();
    std::vector<CandidateOutcome> outcomes(n);
    auto run_one = [&](std::size_t i, Trainer& t) {
        outcomes[i] = evaluate_candidate(t, pop.individuals[i], cfg, score, candidate_seed(run_seed, epoch, gen, i),
                                         keep_first);
    };
    if (shared != nullptr) {
        for (std::size_t i = 0; i < n; ++i) run_one(i, *shared);
        return outcomes;
    }
    std::size_t threads = cfg.candidate_threads == 0 ? std::max(1u, std::thread::hardware_concurrency())
                                                     : cfg.candidate_threads;
    threads = std::min(threads, n);
    if (threads <= 1) {
        for (std::size_t i = 0; i < n; ++i) {
            auto t = snapshot.clone();
            run_one(i, *t);
        }
        return outcomes;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < threads; ++w) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) {
                try {
                    auto t = snapshot.clone();
                    run_one(i, *t);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(failure_mutex);
                    if (!failure) failure = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
    return outcomes;
}

RunResult run_rolling(const SchedulerConfig& cfg, const ScoreConfig& score, std::unique_ptr<Trainer> agent,
                      std::uint64_t seed, const RecordSink& sink, bool evolve) {
    cfg.validate();
    score.validate();
    RunResult result;
    RunLog& log = result.log;
    Recorder record(log, sink);
    std::size_t evals = 0;
    EvalRecord first = eval_record(cfg.kind, *agent, cfg.roster, eval_seed(seed, evals++), log, 0, "[]");
    record(first);

    std::optional<Curriculum> previous;
    for (std::size_t epoch = 0; log.committed_frames < cfg.total_frames; ++epoch) {
        RecordSink forward = [&](const EvalRecord& r) { record(r); };
        EpochResult er = run_epoch(*agent, cfg, score, seed, epoch, previous, evolve, log.frames_consumed, forward);
        log.candidate_frames += er.candidate_frames;
        log.committed_frames += er.agent->frames() - agent->frames();
        log.frames_consumed += er.candidate_frames + er.commit_frames;
        agent = std::move(er.agent);
        previous = er.best;

        EvalRecord r = eval_record(cfg.kind, *agent, cfg.roster, eval_seed(seed, evals++), log, er.commit_frames,
                                   er.best.to_string());
        r.epoch = static_cast<int>(epoch);
        r.individual = static_cast<int>(er.best_index);
        r.score = er.rewards.at(er.rewards.generations() - 1, er.best_index);
        record(r);
    }
    result.agent = std::move(agent);
    return result;
}

// Shared loop of the single-pipeline baselines: train a segment, log an evaluation.
template <typename Segment>
RunResult run_segments(const SchedulerConfig& cfg, std::unique_ptr<Trainer> agent, std::uint64_t seed,
                       const RecordSink& sink, std::int64_t segment_frames, Segment&& segment) {
    cfg.validate();
    RunResult result;
    RunLog& log = result.log;
    Recorder record(log, sink);
    std::size_t evals = 0;
    record(eval_record(cfg.kind, *agent, cfg.roster, eval_seed(seed, evals++), log, 0, "[]"));
    for (std::size_t k = 0; log.committed_frames < cfg.total_frames; ++k) {
        const std::uint64_t train_seed = derive_seed(seed, {kTagTrain, k});
        std::string trained;
        double check = std::numeric_limits<double>::quiet_NaN();
        const std::int64_t f = segment(*agent, segment_frames, train_seed, k, trained, check);
        log.committed_frames += f;
        log.frames_consumed += f;
        EvalRecord r = eval_record(cfg.kind, *agent, cfg.roster, eval_seed(seed, evals++), log, f, trained);
        r.epoch = static_cast<int>(k);
        r.score = check;
        record(r);
    }
    result.agent = std::move(agent);
    return result;
}

} // namespace

std::string to_string(SchedulerKind kind) {
    switch (kind) {
    case SchedulerKind::RheaCL: return "RheaCL";
    case SchedulerKind::RHRS: return "RHRS";
    case SchedulerKind::AllParallel: return "AllParallel";
    case SchedulerKind::SPCL: return "SPCL";
    case SchedulerKind::NoCurriculum: return "NoCurriculum";
    }
    return "?";
}

SchedulerKind parse_scheduler_kind(const std::string& text) {
    for (auto k : {SchedulerKind::RheaCL, SchedulerKind::RHRS, SchedulerKind::AllParallel, SchedulerKind::SPCL,
                   SchedulerKind::NoCurriculum}) {
        if (to_string(k) == text) return k;
    }
    throw ConfigError("scheduler.kind: unknown scheduler '" + text +
                      "' (expected RheaCL, RHRS, AllParallel, SPCL or NoCurriculum)");
}

void SchedulerConfig::validate() const {
    auto fail = [](const std::string& field, const std::string& why) {
        throw ConfigError("scheduler." + field + ": " + why);
    };
    if (iter_steps <= 0) fail("iter_steps", "must be positive");
    if (total_frames < iter_steps) fail("total_frames", "must be >= iter_steps");
    if (!(spcl_down > 0.0 && spcl_down < spcl_up && spcl_up <= 1.0)) {
        fail("spcl_up", "thresholds must satisfy 0 < spcl_down < spcl_up <= 1");
    }
    if (spcl_check_every <= 0) fail("spcl_check_every", "must be positive");
    if (roster.empty()) fail("roster", "must not be empty");
    for (std::size_t i = 0; i < roster.size(); ++i) {
        for (std::size_t j = i + 1; j < roster.size(); ++j) {
            if (roster[i] == roster[j]) fail("roster", "duplicate environment " + roster[i].name());
        }
    }
    if (kind == SchedulerKind::RheaCL || kind == SchedulerKind::RHRS) {
        evolution.validate();
        if (evolution.population_size < 2 && kind == SchedulerKind::RheaCL && evolution.generations > 1) {
            fail("evolution.population_size", "must be >= 2 when evolving more than one generation");
        }
    }
}

PpoTrainer::PpoTrainer(PpoConfig ppo, ScoreConfig score, StepBudgetSchedule schedule, AgentState agent,
                       EnvOptions options)
    : ppo_(ppo), score_(score), schedule_(schedule), options_(options), agent_(std::move(agent)) {
    ppo_.validate();
    score_.validate();
}

std::unique_ptr<PpoTrainer> PpoTrainer::fresh(const PpoConfig& ppo, const ScoreConfig& score,
                                              const StepBudgetSchedule& schedule, std::uint64_t seed,
                                              EnvOptions options) {
    Rng rng(derive_seed(seed, {kTagAgent}));
    return std::make_unique<PpoTrainer>(ppo, score, schedule, AgentState::fresh(ppo, rng, options.view_size),
                                        options);
}

std::unique_ptr<Trainer> PpoTrainer::clone() const { return std::make_unique<PpoTrainer>(*this); }

std::int64_t PpoTrainer::train(const std::vector<EnvSpec>& envs, EnvAssignment assignment, std::int64_t frames,
                               std::uint64_t seed) {
    if (envs.empty()) throw ContractViolation("train needs at least one environment");
    Collector collector(envs, assignment, ppo_.num_processes, options_, derive_seed(seed, {0}));
    Rng update_rng(derive_seed(seed, {1}));
    last_episodes_.clear();
    std::int64_t trained = 0;
    while (trained < frames) {
        RolloutBuffer buffer = collector.collect(agent_.params, ppo_, schedule_, agent_.frames);
        const auto n = static_cast<std::int64_t>(buffer.size());
        agent_.frames += n;
        trained += n;
        last_episodes_.insert(last_episodes_.end(), buffer.episodes.begin(), buffer.episodes.end());
        ppo_update(agent_.params, agent_.adam, buffer, ppo_, update_rng);
    }
    return trained;
}

RosterEvaluation PpoTrainer::evaluate(std::span<const EnvSpec> roster, std::uint64_t seed) const {
    return step_reward(agent_.params, roster, score_, schedule_, agent_.frames, seed, ppo_.tanh_logits, options_);
}

std::uint64_t candidate_seed(std::uint64_t run_seed, std::size_t epoch, std::size_t generation,
                             std::size_t individual) {
    return derive_seed(run_seed, {kTagCandidate, epoch, generation, individual});
}

std::uint64_t commit_seed(std::uint64_t run_seed, std::size_t epoch) {
    return derive_seed(run_seed, {kTagCommit, epoch});
}

EpochResult run_epoch(const Trainer& snapshot, const SchedulerConfig& cfg, const ScoreConfig& score,
                      std::uint64_t run_seed, std::size_t epoch, const std::optional<Curriculum>& previous_best,
                      bool evolve, std::int64_t frames_before, const RecordSink& sink) {
    const EvolutionConfig& ev = cfg.evolution;
    Rng pop_rng(derive_seed(run_seed, {kTagPopulation, epoch}));
    Population pop = init_population(ev, cfg.roster, pop_rng, evolve ? previous_best : std::nullopt);
    RewardsMatrix rewards(ev.generations, ev.population_size);
    std::unique_ptr<Trainer> shared = cfg.isolate_candidates ? nullptr : snapshot.clone();
    const bool keep_first = cfg.commit == CommitMode::Reuse;
    std::vector<std::unique_ptr<Trainer>> first_steps;

    EpochResult result;
    std::int64_t consumed = frames_before;
    for (std::size_t gen = 0; gen < ev.generations; ++gen) {
        if (gen > 0) {
            const auto fitness = rewards.row(gen - 1);
            pop = evolve ? next_generation(pop, fitness, ev, cfg.roster, pop_rng)
                         : init_population(ev, cfg.roster, pop_rng);
            if (cfg.cumulative_rows) rewards.carry_forward(gen);
        }
        auto outcomes = evaluate_generation(snapshot, shared.get(), pop, cfg, score, run_seed, epoch, gen, keep_first);
        first_steps.clear();
        for (std::size_t i = 0; i < outcomes.size(); ++i) {
            auto& o = outcomes[i];
            double weight = 1.0;
            for (double r : o.step_rewards) {
                rewards.record(gen, i, r * weight);
                weight *= score.gamma;
            }
            for (auto& rec : o.records) {
                consumed += rec.train_frames;
                rec.scheduler = cfg.kind;
                rec.frames_consumed = consumed;
                rec.epoch = static_cast<int>(epoch);
                rec.generation = static_cast<int>(gen);
                rec.individual = static_cast<int>(i);
                if (sink) sink(rec);
            }
            result.candidate_frames += o.frames;
            first_steps.push_back(std::move(o.after_first));
        }
    }

    result.best_index = best_index(rewards);
    result.best = pop.individuals[result.best_index];
    if (cfg.commit == CommitMode::Reuse) {
        result.agent = std::move(first_steps[result.best_index]);
    } else {
        result.agent = snapshot.clone();
        result.commit_frames = result.agent->train(result.best.steps.front().envs, EnvAssignment::RoundRobin,
                                                   cfg.iter_steps, commit_seed(run_seed, epoch));
    }
    result.rewards = std::move(rewards);
    result.population = std::move(pop);
    return result;
}

RunResult run_rhea_cl(const SchedulerConfig& cfg, const ScoreConfig& score, std::unique_ptr<Trainer> agent,
                      std::uint64_t seed, const RecordSink& sink) {
    return run_rolling(cfg, score, std::move(agent), seed, sink, true);
}

RunResult run_rhrs(const SchedulerConfig& cfg, const ScoreConfig& score, std::unique_ptr<Trainer> agent,
                   std::uint64_t seed, const RecordSink& sink) {
    return run_rolling(cfg, score, std::move(agent), seed, sink, false);
}

RunResult run_all_parallel(const SchedulerConfig& cfg, std::unique_ptr<Trainer> agent, std::uint64_t seed,
                           const RecordSink& sink) {
    const std::string trained = single_step(cfg.roster).to_string();
    return run_segments(cfg, std::move(agent), seed, sink, cfg.iter_steps,
                        [&](Trainer& t, std::int64_t frames, std::uint64_t s, std::size_t, std::string& text, double&) {
                            text = trained;
                            return t.train(cfg.roster, EnvAssignment::CyclePerEpisode, frames, s);
                        });
}

RunResult run_spcl(const SchedulerConfig& cfg, std::unique_ptr<Trainer> agent, std::uint64_t seed,
                   const RecordSink& sink) {
    const auto ladder = difficulty_ladder(cfg.roster);
    std::size_t level = 0;
    return run_segments(cfg, std::move(agent), seed, sink, cfg.spcl_check_every,
                        [&](Trainer& t, std::int64_t frames, std::uint64_t s, std::size_t k, std::string& text,
                            double& check) {
                            const std::vector<EnvSpec> env{ladder[level]};
                            text = single_step(env).to_string();
                            const std::int64_t f = t.train(env, EnvAssignment::RoundRobin, frames, s);
                            check = t.evaluate(env, derive_seed(seed, {kTagCheck, k})).mean;
                            level = spcl_next_level(level, check, ladder.size(), cfg.spcl_up, cfg.spcl_down);
                            return f;
                        });
}

RunResult run_vanilla(const SchedulerConfig& cfg, std::unique_ptr<Trainer> agent, std::uint64_t seed,
                      const RecordSink& sink) {
    const std::vector<EnvSpec> env{hardest_env(cfg.roster)};
    const std::string trained = single_step(env).to_string();
    return run_segments(cfg, std::move(agent), seed, sink, cfg.iter_steps,
                        [&](Trainer& t, std::int64_t frames, std::uint64_t s, std::size_t, std::string& text, double&) {
                            text = trained;
                            return t.train(env, EnvAssignment::RoundRobin, frames, s);
                        });
}

RunResult run_scheduler(const SchedulerConfig& cfg, const ScoreConfig& score, std::unique_ptr<Trainer> agent,
                        std::uint64_t seed, const RecordSink& sink) {
    switch (cfg.kind) {
    case SchedulerKind::RheaCL: return run_rhea_cl(cfg, score, std::move(agent), seed, sink);
    case SchedulerKind::RHRS: return run_rhrs(cfg, score, std::move(agent), seed, sink);
    case SchedulerKind::AllParallel: return run_all_parallel(cfg, std::move(agent), seed, sink);
    case SchedulerKind::SPCL: return run_spcl(cfg, std::move(agent), seed, sink);
    case SchedulerKind::NoCurriculum: return run_vanilla(cfg, std::move(agent), seed, sink);
    }
    throw ContractViolation("unhandled scheduler kind");
}

std::size_t spcl_next_level(std::size_t level, double performance, std::size_t levels, double up, double down) {
    if (levels == 0) throw ContractViolation("spcl_next_level needs at least one level");
    if (performance > up && level + 1 < levels) return level + 1;
    if (performance < down && level > 0) return level - 1;
    return level;
}

std::vector<EnvSpec> difficulty_ladder(std::span<const EnvSpec> roster) {
    std::vector<EnvSpec> ladder(roster.begin(), roster.end());
    std::sort(ladder.begin(), ladder.end());
    return ladder;
}

EnvSpec hardest_env(std::span<const EnvSpec> roster) {
    if (roster.empty()) throw ConfigError("roster must not be empty");
    return difficulty_ladder(roster).back();
}

} // namespace rheacl
