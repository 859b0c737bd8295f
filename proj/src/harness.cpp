#include "rheacl/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "rheacl/errors.hpp"

namespace rheacl {

namespace fs = std::filesystem;

namespace {

// Typed, strict access to one JSON object of the config.
class Reader {
public:
    Reader(const Json& obj, std::string prefix) : obj_(obj), prefix_(std::move(prefix)) {
        if (!obj_.is_object()) throw ConfigError(where() + "expected an object");
    }

    const Json* find(const std::string& key) {
        seen_.insert(key);
        auto it = obj_.find(key);
        return it == obj_.end() ? nullptr : &*it;
    }

    void get(const std::string& key, double& out) {
        if (auto* v = find(key)) {
            if (!v->is_number()) fail(key, "expected a number");
            out = v->get<double>();
        }
    }
    void get(const std::string& key, bool& out) {
        if (auto* v = find(key)) {
            if (!v->is_boolean()) fail(key, "expected true or false");
            out = v->get<bool>();
        }
    }
    void get(const std::string& key, std::string& out) {
        if (auto* v = find(key)) {
            if (!v->is_string()) fail(key, "expected a string");
            out = v->get<std::string>();
        }
    }
    void get(const std::string& key, std::int64_t& out) {
        if (auto* v = find(key)) out = integer(key, *v);
    }
    void get(const std::string& key, int& out) {
        if (auto* v = find(key)) out = static_cast<int>(integer(key, *v));
    }
    void get(const std::string& key, std::size_t& out) {
        if (auto* v = find(key)) {
            const auto x = integer(key, *v);
            if (x < 0) fail(key, "must be non-negative");
            out = static_cast<std::size_t>(x);
        }
    }

    Reader sub(const std::string& key) {
        seen_.insert(key);
        static const Json empty = Json::object();
        auto it = obj_.find(key);
        return Reader(it == obj_.end() ? empty : *it, prefix_ + key + ".");
    }

    void finish() const {
        for (auto it = obj_.begin(); it != obj_.end(); ++it) {
            if (!seen_.count(it.key())) throw ConfigError(prefix_ + it.key() + ": unknown key");
        }
    }

    [[noreturn]] void fail(const std::string& key, const std::string& why) const {
        throw ConfigError(prefix_ + key + ": " + why);
    }

private:
    std::string where() const { return prefix_.empty() ? "config: " : prefix_.substr(0, prefix_.size() - 1) + ": "; }

    std::int64_t integer(const std::string& key, const Json& v) const {
        if (v.is_number_integer()) return v.get<std::int64_t>();
        if (v.is_number_float()) {
            const double d = v.get<double>();
            if (std::floor(d) == d && std::abs(d) < 9e15) return static_cast<std::int64_t>(d);
        }
        fail(key, "expected an integer");
    }

    const Json& obj_;
    std::string prefix_;
    std::set<std::string> seen_;
};

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

std::vector<EnvSpec> parse_roster(const Json& v) {
    std::vector<EnvSpec> roster;
    auto add = [&](const std::string& name) {
        try {
            roster.push_back(EnvSpec::parse(name));
        } catch (const ConfigError& e) {
            throw ConfigError(std::string("scheduler.roster: ") + e.what());
        }
    };
    if (v.is_string()) {
        std::stringstream ss(v.get<std::string>());
        std::string item;
        while (std::getline(ss, item, ',')) {
            if (!item.empty()) add(item);
        }
    } else if (v.is_array()) {
        for (const auto& e : v) {
            if (!e.is_string()) throw ConfigError("scheduler.roster: entries must be strings like \"DoorKey-6\"");
            add(e.get<std::string>());
        }
    } else {
        throw ConfigError("scheduler.roster: expected a list of environment names");
    }
    return roster;
}

Json evolution_to_json(const EvolutionConfig& e) {
    Json j;
    j["population_size"] = e.population_size;
    j["generations"] = e.generations;
    j["curriculum_length"] = e.curriculum_length;
    j["mutation_rate"] = e.mutation_rate;
    j["crossover_rate"] = e.crossover_rate;
    j["para_env"] = e.para_env;
    j["elitism_count"] = e.elitism_count;
    j["tournament_size"] = e.tournament_size;
    j["seeding"] = e.seeding == SeedingMode::Shift ? "shift" : "copy";
    j["init"] = e.init == InitMode::Random ? "random" : "enumerate";
    return j;
}

void evolution_from_json(Reader r, EvolutionConfig& e) {
    r.get("population_size", e.population_size);
    r.get("generations", e.generations);
    r.get("curriculum_length", e.curriculum_length);
    r.get("mutation_rate", e.mutation_rate);
    r.get("crossover_rate", e.crossover_rate);
    r.get("para_env", e.para_env);
    r.get("elitism_count", e.elitism_count);
    r.get("tournament_size", e.tournament_size);
    std::string seeding = e.seeding == SeedingMode::Shift ? "shift" : "copy";
    r.get("seeding", seeding);
    if (lower(seeding) == "shift") {
        e.seeding = SeedingMode::Shift;
    } else if (lower(seeding) == "copy") {
        e.seeding = SeedingMode::Copy;
    } else {
        r.fail("seeding", "expected \"shift\" or \"copy\"");
    }
    std::string init = e.init == InitMode::Random ? "random" : "enumerate";
    r.get("init", init);
    if (lower(init) == "random") {
        e.init = InitMode::Random;
    } else if (lower(init) == "enumerate") {
        e.init = InitMode::Enumerate;
    } else {
        r.fail("init", "expected \"random\" or \"enumerate\"");
    }
    r.finish();
}

std::string status_line(const SeedOutcome& s) { return s.ok ? "ok" : "failed"; }

// Runs fn(i) for i in [0, n) on up to `jobs` threads.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t jobs, Fn&& fn) {
    jobs = std::max<std::size_t>(1, std::min(jobs, n));
    if (jobs == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < jobs; ++w) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) fn(i);
        });
    }
    for (auto& t : pool) t.join();
}

const Json* lookup(const Json& doc, const std::string& dotted) {
    const Json* cur = &doc;
    std::stringstream ss(dotted);
    std::string part;
    while (std::getline(ss, part, '.')) {
        if (!cur->is_object()) return nullptr;
        auto it = cur->find(part);
        if (it == cur->end()) return nullptr;
        cur = &*it;
    }
    return cur;
}

void set_path(Json& doc, const std::string& dotted, Json value) {
    if (dotted.empty()) throw ConfigError("override: empty key");
    Json* cur = &doc;
    std::stringstream ss(dotted);
    std::string part;
    std::vector<std::string> parts;
    while (std::getline(ss, part, '.')) {
        if (part.empty()) throw ConfigError("override '" + dotted + "': empty path segment");
        parts.push_back(part);
    }
    for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
        if (!cur->is_object()) throw ConfigError("override '" + dotted + "': " + parts[i] + " has a non-object parent");
        cur = &(*cur)[parts[i]];
        if (cur->is_null()) *cur = Json::object();
    }
    if (!cur->is_object()) throw ConfigError("override '" + dotted + "': parent is not an object");
    (*cur)[parts.back()] = std::move(value);
}

std::string group_value(const Json& config, const std::string& group_by) {
    const Json* v = lookup(config, group_by);
    if (v == nullptr) return "";
    if (v->is_string()) return v->get<std::string>();
    return v->dump();
}

bool numeric_less(const std::string& a, const std::string& b) {
    char* ea = nullptr;
    char* eb = nullptr;
    const double da = std::strtod(a.c_str(), &ea);
    const double db = std::strtod(b.c_str(), &eb);
    const bool na = !a.empty() && *ea == '\0';
    const bool nb = !b.empty() && *eb == '\0';
    if (na && nb && da != db) return da < db;
    return a < b;
}

std::string fmt(double x) {
    std::ostringstream os;
    os.precision(17);
    os << x;
    return os.str();
}

struct LoadedRun {
    fs::path dir;
    Json config;
    int schema = 0;
    std::vector<std::string> envs;
    std::vector<std::pair<std::int64_t, double>> evals; // frames, roster mean
};

LoadedRun load_run(const fs::path& dir) {
    LoadedRun run;
    run.dir = dir;
    run.config = read_json_file(dir / "config.json");
    std::ifstream in(dir / "log.jsonl");
    if (!in) throw ConfigError("cannot open " + (dir / "log.jsonl").string());
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        Json j;
        try {
            j = Json::parse(line);
        } catch (const Json::exception& e) {
            throw ConfigError((dir / "log.jsonl").string() + ": malformed line: " + e.what());
        }
        const std::string kind = j.value("record", "");
        if (kind == "header") {
            run.schema = j.value("schema", 0);
        } else if (kind == "eval") {
            const EvalRecord r = record_from_json(j);
            if (run.envs.empty()) run.envs = r.envs;
            run.evals.emplace_back(r.frames, r.roster_mean);
        }
    }
    return run;
}

} // namespace

void RunConfig::validate() const {
    if (name.empty()) throw ConfigError("name: must not be empty");
    scheduler.validate();
    ppo.validate();
    score.validate();
    if (!(schedule.decay_span > 0)) throw ConfigError("schedule.decay_span: must be positive");
    if (schedule.decay_start < 0) throw ConfigError("schedule.decay_start: must be non-negative");
    if (!(schedule.floor > 0.0 && schedule.floor <= 1.0)) throw ConfigError("schedule.floor: must be in (0, 1]");
    if (env.view_size < 5 || env.view_size % 2 == 0) throw ConfigError("env.view_size: must be odd and >= 5");
    if (seeds.empty()) throw ConfigError("seeds: must not be empty");
    std::set<std::uint64_t> distinct(seeds.begin(), seeds.end());
    if (distinct.size() != seeds.size()) throw ConfigError("seeds: must be distinct");
    if (output_dir.empty()) throw ConfigError("output_dir: must not be empty");
}

Json config_to_json(const RunConfig& c) {
    Json j;
    j["schema_version"] = kConfigSchemaVersion;
    j["name"] = c.name;
    j["seeds"] = c.seeds;
    j["output_dir"] = c.output_dir;

    const SchedulerConfig& s = c.scheduler;
    Json sj;
    sj["kind"] = to_string(s.kind);
    sj["roster"] = Json::array();
    for (const auto& e : s.roster) sj["roster"].push_back(e.name());
    sj["iter_steps"] = s.iter_steps;
    sj["total_frames"] = s.total_frames;
    sj["spcl_up"] = s.spcl_up;
    sj["spcl_down"] = s.spcl_down;
    sj["spcl_check_every"] = s.spcl_check_every;
    sj["commit"] = s.commit == CommitMode::Retrain ? "retrain" : "reuse";
    sj["isolate_candidates"] = s.isolate_candidates;
    sj["cumulative_rows"] = s.cumulative_rows;
    sj["candidate_threads"] = s.candidate_threads;
    sj["evolution"] = evolution_to_json(s.evolution);
    j["scheduler"] = sj;

    const PpoConfig& p = c.ppo;
    Json pj;
    pj["batch_size"] = p.batch_size;
    pj["discount"] = p.discount;
    pj["lr"] = p.lr;
    pj["gae_lambda"] = p.gae_lambda;
    pj["entropy_coef"] = p.entropy_coef;
    pj["value_loss_coef"] = p.value_loss_coef;
    pj["max_grad_norm"] = p.max_grad_norm;
    pj["clip_eps"] = p.clip_eps;
    pj["adam_eps"] = p.adam_eps;
    pj["adam_alpha"] = p.adam_alpha;
    pj["frames_per_process"] = p.frames_per_process;
    pj["update_epochs"] = p.update_epochs;
    pj["num_processes"] = p.num_processes;
    pj["tanh_logits"] = p.tanh_logits;
    pj["normalize_advantages"] = p.normalize_advantages;
    j["ppo"] = pj;

    j["score"] = {{"gamma", c.score.gamma}, {"eval_episodes_per_env", c.score.eval_episodes_per_env}};
    j["schedule"] = {{"decay_start", c.schedule.decay_start},
                     {"decay_span", c.schedule.decay_span},
                     {"floor", c.schedule.floor}};
    j["env"] = {{"view_size", c.env.view_size}, {"obstacle_count", c.env.obstacle_count}};
    return j;
}

RunConfig config_from_json(const Json& doc) {
    RunConfig c;
    Reader r(doc, "");
    int version = kConfigSchemaVersion;
    r.get("schema_version", version);
    if (version != kConfigSchemaVersion) {
        r.fail("schema_version", "unsupported version " + std::to_string(version));
    }
    r.get("name", c.name);
    r.get("output_dir", c.output_dir);
    if (const Json* seeds = r.find("seeds")) {
        if (!seeds->is_array()) r.fail("seeds", "expected a list of integers");
        c.seeds.clear();
        for (const auto& s : *seeds) {
            if (!s.is_number_integer() || s.get<std::int64_t>() < 0) {
                r.fail("seeds", "entries must be non-negative integers");
            }
            c.seeds.push_back(s.get<std::uint64_t>());
        }
    }

    {
        Reader s = r.sub("scheduler");
        SchedulerConfig& sc = c.scheduler;
        std::string kind = to_string(sc.kind);
        s.get("kind", kind);
        sc.kind = parse_scheduler_kind(kind);
        if (const Json* roster = s.find("roster")) sc.roster = parse_roster(*roster);
        s.get("iter_steps", sc.iter_steps);
        s.get("total_frames", sc.total_frames);
        s.get("spcl_up", sc.spcl_up);
        s.get("spcl_down", sc.spcl_down);
        s.get("spcl_check_every", sc.spcl_check_every);
        std::string commit = sc.commit == CommitMode::Retrain ? "retrain" : "reuse";
        s.get("commit", commit);
        if (lower(commit) == "retrain") {
            sc.commit = CommitMode::Retrain;
        } else if (lower(commit) == "reuse") {
            sc.commit = CommitMode::Reuse;
        } else {
            s.fail("commit", "expected \"retrain\" or \"reuse\"");
        }
        s.get("isolate_candidates", sc.isolate_candidates);
        s.get("cumulative_rows", sc.cumulative_rows);
        s.get("candidate_threads", sc.candidate_threads);
        evolution_from_json(s.sub("evolution"), sc.evolution);
        s.finish();
    }
    {
        Reader p = r.sub("ppo");
        PpoConfig& pc = c.ppo;
        p.get("batch_size", pc.batch_size);
        p.get("discount", pc.discount);
        p.get("lr", pc.lr);
        p.get("gae_lambda", pc.gae_lambda);
        p.get("entropy_coef", pc.entropy_coef);
        p.get("value_loss_coef", pc.value_loss_coef);
        p.get("max_grad_norm", pc.max_grad_norm);
        p.get("clip_eps", pc.clip_eps);
        p.get("adam_eps", pc.adam_eps);
        p.get("adam_alpha", pc.adam_alpha);
        p.get("frames_per_process", pc.frames_per_process);
        p.get("update_epochs", pc.update_epochs);
        p.get("num_processes", pc.num_processes);
        p.get("tanh_logits", pc.tanh_logits);
        p.get("normalize_advantages", pc.normalize_advantages);
        p.finish();
    }
    {
        Reader s = r.sub("score");
        s.get("gamma", c.score.gamma);
        s.get("eval_episodes_per_env", c.score.eval_episodes_per_env);
        s.finish();
    }
    {
        Reader s = r.sub("schedule");
        s.get("decay_start", c.schedule.decay_start);
        s.get("decay_span", c.schedule.decay_span);
        s.get("floor", c.schedule.floor);
        s.finish();
    }
    {
        Reader e = r.sub("env");
        e.get("view_size", c.env.view_size);
        e.get("obstacle_count", c.env.obstacle_count);
        e.finish();
    }
    r.finish();
    return c;
}

void apply_override(Json& doc, const std::string& dotted_path, const std::string& value) {
    Json parsed;
    try {
        parsed = Json::parse(value);
    } catch (const Json::exception&) {
        parsed = value;
    }
    set_path(doc, dotted_path, std::move(parsed));
}

void apply_override(Json& doc, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) {
        throw ConfigError("override '" + assignment + "': expected key.path=value");
    }
    apply_override(doc, assignment.substr(0, eq), assignment.substr(eq + 1));
}

Json read_json_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open " + path.string());
    try {
        return Json::parse(in, nullptr, true, true);
    } catch (const Json::exception& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

void write_json_file(const fs::path& path, const Json& doc) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << doc.dump(2) << '\n';
}

RunConfig load_run_config(const fs::path& path, const std::vector<std::string>& overrides) {
    Json doc = path.empty() ? config_to_json(RunConfig{}) : read_json_file(path);
    for (const auto& o : overrides) apply_override(doc, o);
    RunConfig cfg = config_from_json(doc);
    cfg.validate();
    return cfg;
}

fs::path output_root() {
    const char* env = std::getenv(kOutputRootEnv);
    return (env != nullptr && *env != '\0') ? fs::path(env) : fs::path("runs");
}

fs::path resolve_output_dir(const std::string& output_dir) {
    const fs::path p(output_dir);
    return p.is_absolute() ? p : output_root() / p;
}

Json record_to_json(const EvalRecord& r) {
    Json j;
    j["record"] = r.type == RecordType::Eval ? "eval" : "candidate";
    j["scheduler"] = to_string(r.scheduler);
    j["frames"] = r.frames;
    j["frames_consumed"] = r.frames_consumed;
    j["train_frames"] = r.train_frames;
    j["epoch"] = r.epoch;
    j["generation"] = r.generation;
    j["individual"] = r.individual;
    j["step"] = r.step;
    j["curriculum"] = r.curriculum;
    Json returns = Json::object();
    for (std::size_t i = 0; i < r.envs.size(); ++i) returns[r.envs[i]] = r.returns.at(i);
    j["returns"] = returns;
    j["roster_mean"] = r.roster_mean;
    j["score"] = std::isnan(r.score) ? Json(nullptr) : Json(r.score);
    return j;
}

EvalRecord record_from_json(const Json& j) {
    EvalRecord r;
    try {
        const std::string kind = j.at("record").get<std::string>();
        if (kind == "eval") {
            r.type = RecordType::Eval;
        } else if (kind == "candidate") {
            r.type = RecordType::Candidate;
        } else {
            throw ConfigError("not an evaluation record: " + kind);
        }
        r.scheduler = parse_scheduler_kind(j.at("scheduler").get<std::string>());
        r.frames = j.at("frames").get<std::int64_t>();
        r.frames_consumed = j.at("frames_consumed").get<std::int64_t>();
        r.train_frames = j.at("train_frames").get<std::int64_t>();
        r.epoch = j.at("epoch").get<int>();
        r.generation = j.at("generation").get<int>();
        r.individual = j.at("individual").get<int>();
        r.step = j.at("step").get<int>();
        r.curriculum = j.at("curriculum").get<std::string>();
        for (auto it = j.at("returns").begin(); it != j.at("returns").end(); ++it) {
            r.envs.push_back(it.key());
            r.returns.push_back(it.value().get<double>());
        }
        r.roster_mean = j.at("roster_mean").get<double>();
        if (!j.at("score").is_null()) r.score = j.at("score").get<double>();
    } catch (const Json::exception& e) {
        throw ConfigError(std::string("malformed log record: ") + e.what());
    }
    return r;
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

SeedOutcome run_seed(const RunConfig& cfg, std::uint64_t seed, const fs::path& dir) {
    SeedOutcome out;
    out.seed = seed;
    out.dir = dir;
    fs::create_directories(dir);
    RunConfig resolved = cfg;
    resolved.seeds = {seed};
    write_json_file(dir / "config.json", config_to_json(resolved));

    std::ofstream log(dir / "log.jsonl");
    std::ofstream csv(dir / "evals.csv");
    if (!log || !csv) throw std::runtime_error("cannot write logs in " + dir.string());
    Json header;
    header["record"] = "header";
    header["schema"] = kLogSchemaVersion;
    header["version"] = kVersion;
    header["seed"] = seed;
    header["config"] = config_to_json(resolved);
    log << header.dump() << '\n' << std::flush;

    csv << "scheduler,seed,epoch,frames,frames_consumed,train_frames,curriculum,roster_mean";
    for (const auto& e : cfg.scheduler.roster) csv << ',' << csv_field(e.name());
    csv << '\n' << std::flush;

    RecordSink sink = [&](const EvalRecord& r) {
        log << record_to_json(r).dump() << '\n' << std::flush;
        if (r.type != RecordType::Eval) return;
        csv << to_string(r.scheduler) << ',' << seed << ',' << r.epoch << ',' << r.frames << ',' << r.frames_consumed
            << ',' << r.train_frames << ',' << csv_field(r.curriculum) << ',' << fmt(r.roster_mean);
        for (double v : r.returns) csv << ',' << fmt(v);
        csv << '\n' << std::flush;
        out.final_roster_mean = r.roster_mean;
    };

    Json summary;
    summary["record"] = "summary";
    try {
        auto agent = PpoTrainer::fresh(cfg.ppo, cfg.score, cfg.schedule, seed, cfg.env);
        RunResult result = run_scheduler(cfg.scheduler, cfg.score, std::move(agent), seed, sink);
        const auto* ppo = dynamic_cast<const PpoTrainer*>(result.agent.get());
        if (ppo == nullptr) throw std::runtime_error("run produced no PPO agent");
        save_checkpoint(ppo->agent(), dir / "checkpoint.bin");
        out.ok = true;
        out.frames_consumed = result.log.frames_consumed;
        summary["status"] = "ok";
        summary["committed_frames"] = result.log.committed_frames;
        summary["candidate_frames"] = result.log.candidate_frames;
        summary["frames_consumed"] = result.log.frames_consumed;
        summary["final_roster_mean"] = out.final_roster_mean;
    } catch (const std::exception& e) {
        out.ok = false;
        out.error = e.what();
        summary["status"] = "failed";
        summary["error"] = out.error;
    }
    log << summary.dump() << '\n' << std::flush;
    return out;
}

bool ExperimentOutcome::ok() const {
    return std::all_of(seeds.begin(), seeds.end(), [](const SeedOutcome& s) { return s.ok; });
}

ExperimentOutcome run_experiment(const RunConfig& cfg, const fs::path& dir, std::size_t jobs) {
    cfg.validate();
    fs::create_directories(dir);
    write_json_file(dir / "config.json", config_to_json(cfg));
    ExperimentOutcome out;
    out.seeds.resize(cfg.seeds.size());
    parallel_for(cfg.seeds.size(), jobs, [&](std::size_t i) {
        const auto s = cfg.seeds[i];
        out.seeds[i] = run_seed(cfg, s, dir / ("seed_" + std::to_string(s)));
    });
    std::vector<fs::path> done;
    for (const auto& s : out.seeds) {
        if (s.ok) done.push_back(s.dir);
    }
    if (!done.empty()) write_aggregate_csv(aggregate(done, "name"), "name", dir / "summary.csv");
    return out;
}

RunConfig SweepSpec::resolve(const SweepRow& row) const {
    Json doc = base;
    for (auto it = row.overrides.begin(); it != row.overrides.end(); ++it) set_path(doc, it.key(), it.value());
    try {
        RunConfig cfg = config_from_json(doc);
        cfg.name = name + "/" + row.id;
        cfg.validate();
        return cfg;
    } catch (const ConfigError& e) {
        throw ConfigError("sweep row " + row.id + ": " + e.what());
    }
}

SweepSpec sweep_from_json(const Json& doc) {
    if (!doc.is_object()) throw ConfigError("sweep: expected an object");
    SweepSpec spec;
    static const std::set<std::string> known{"name", "description", "base", "rows", "axes", "sobol_rates"};
    for (auto it = doc.begin(); it != doc.end(); ++it) {
        if (!known.count(it.key())) throw ConfigError("sweep." + it.key() + ": unknown key");
    }
    spec.name = doc.value("name", std::string("sweep"));
    spec.description = doc.value("description", std::string());
    if (doc.contains("base")) {
        if (!doc["base"].is_object()) throw ConfigError("sweep.base: expected an object");
        spec.base = doc["base"];
    }

    std::vector<SweepRow> rows;
    if (doc.contains("rows")) {
        if (!doc["rows"].is_array()) throw ConfigError("sweep.rows: expected a list");
        std::size_t k = 0;
        for (const auto& r : doc["rows"]) {
            ++k;
            SweepRow row;
            char id[16];
            std::snprintf(id, sizeof id, "row%02zu", k);
            row.id = r.value("id", std::string(id));
            if (r.contains("set")) {
                if (!r["set"].is_object()) throw ConfigError("sweep.rows[" + std::to_string(k) + "].set: expected an object");
                row.overrides = r["set"];
            }
            for (auto it = r.begin(); it != r.end(); ++it) {
                if (it.key() != "id" && it.key() != "set") {
                    throw ConfigError("sweep.rows[" + std::to_string(k) + "]." + it.key() + ": unknown key");
                }
            }
            rows.push_back(std::move(row));
        }
    }
    if (rows.empty()) rows.push_back(SweepRow{"base", Json::object()});

    auto cross = [&](const std::vector<std::pair<std::string, Json>>& options) {
        std::vector<SweepRow> next;
        for (const auto& row : rows) {
            for (const auto& [suffix, set] : options) {
                SweepRow r = row;
                r.id = row.id == "base" ? suffix : row.id + "_" + suffix;
                for (auto it = set.begin(); it != set.end(); ++it) r.overrides[it.key()] = it.value();
                next.push_back(std::move(r));
            }
        }
        rows = std::move(next);
    };
    if (doc.contains("axes")) {
        if (!doc["axes"].is_object()) throw ConfigError("sweep.axes: expected an object");
        for (auto it = doc["axes"].begin(); it != doc["axes"].end(); ++it) {
            if (!it.value().is_array() || it.value().empty()) {
                throw ConfigError("sweep.axes." + it.key() + ": expected a non-empty list");
            }
            const std::string leaf = it.key().substr(it.key().rfind('.') + 1);
            std::vector<std::pair<std::string, Json>> options;
            for (const auto& v : it.value()) {
                options.emplace_back(leaf + "-" + (v.is_string() ? v.get<std::string>() : v.dump()),
                                     Json{{it.key(), v}});
            }
            cross(options);
        }
    }
    if (doc.contains("sobol_rates")) {
        if (!doc["sobol_rates"].is_number_integer() || doc["sobol_rates"].get<std::int64_t>() < 1) {
            throw ConfigError("sweep.sobol_rates: expected a positive integer");
        }
        std::vector<std::pair<std::string, Json>> options;
        const auto points = sobol_rate_grid(doc["sobol_rates"].get<std::size_t>());
        for (std::size_t i = 0; i < points.size(); ++i) {
            char id[16];
            std::snprintf(id, sizeof id, "sobol%02zu", i + 1);
            options.emplace_back(id, Json{{"scheduler.evolution.mutation_rate", points[i].first},
                                          {"scheduler.evolution.crossover_rate", points[i].second}});
        }
        cross(options);
    }

    std::set<std::string> ids;
    for (const auto& r : rows) {
        if (!ids.insert(r.id).second) throw ConfigError("sweep: duplicate row id " + r.id);
    }
    spec.rows = std::move(rows);
    for (const auto& r : spec.rows) spec.resolve(r);
    return spec;
}

SweepSpec load_sweep(const fs::path& path) { return sweep_from_json(read_json_file(path)); }

SweepOutcome run_sweep(const SweepSpec& spec, const fs::path& dir, std::size_t jobs) {
    struct Job {
        std::size_t row;
        RunConfig cfg;
        std::uint64_t seed;
        SeedOutcome outcome;
    };
    std::vector<Job> plan;
    for (std::size_t i = 0; i < spec.rows.size(); ++i) {
        const RunConfig cfg = spec.resolve(spec.rows[i]);
        for (auto s : cfg.seeds) plan.push_back(Job{i, cfg, s, {}});
    }
    fs::create_directories(dir);
    parallel_for(plan.size(), jobs, [&](std::size_t k) {
        Job& job = plan[k];
        const fs::path row_dir = dir / spec.rows[job.row].id;
        try {
            job.outcome = run_seed(job.cfg, job.seed, row_dir / ("seed_" + std::to_string(job.seed)));
        } catch (const std::exception& e) {
            job.outcome.seed = job.seed;
            job.outcome.dir = row_dir / ("seed_" + std::to_string(job.seed));
            job.outcome.error = e.what();
        }
    });

    SweepOutcome out;
    out.index = dir / "index.csv";
    std::ofstream index(out.index);
    index << "row_id,seed,status,frames_consumed,final_roster_mean,run_dir,overrides,error\n";
    for (std::size_t i = 0; i < spec.rows.size(); ++i) {
        std::vector<fs::path> done;
        for (const auto& job : plan) {
            if (job.row != i) continue;
            ++out.runs;
            if (!job.outcome.ok) ++out.failures;
            if (job.outcome.ok) done.push_back(job.outcome.dir);
            index << csv_field(spec.rows[i].id) << ',' << job.seed << ',' << status_line(job.outcome) << ','
                  << job.outcome.frames_consumed << ',' << fmt(job.outcome.final_roster_mean) << ','
                  << csv_field(fs::relative(job.outcome.dir, dir).generic_string()) << ','
                  << csv_field(spec.rows[i].overrides.dump()) << ',' << csv_field(job.outcome.error) << '\n';
        }
        const fs::path row_dir = dir / spec.rows[i].id;
        write_json_file(row_dir / "config.json", config_to_json(spec.resolve(spec.rows[i])));
        if (!done.empty()) write_aggregate_csv(aggregate(done, "name"), "name", row_dir / "summary.csv");
    }
    return out;
}

std::vector<fs::path> find_run_dirs(const std::vector<fs::path>& roots) {
    std::set<fs::path> found;
    for (const auto& root : roots) {
        if (!fs::exists(root)) throw ConfigError("no such directory: " + root.string());
        if (fs::exists(root / "log.jsonl")) {
            found.insert(root);
            continue;
        }
        for (const auto& entry : fs::recursive_directory_iterator(root)) {
            if (entry.is_directory() && fs::exists(entry.path() / "log.jsonl")) found.insert(entry.path());
        }
    }
    return {found.begin(), found.end()};
}

std::vector<AggregateRow> aggregate(const std::vector<fs::path>& run_dirs, const std::string& group_by,
                                    std::int64_t bucket_width) {
    if (run_dirs.empty()) throw ConfigError("aggregate: no run directories");
    std::vector<fs::path> dirs = run_dirs;
    std::sort(dirs.begin(), dirs.end());
    std::vector<LoadedRun> runs;
    for (const auto& d : dirs) runs.push_back(load_run(d));

    std::vector<std::string> offending;
    for (const auto& r : runs) {
        if (r.schema != kLogSchemaVersion || r.envs != runs.front().envs) offending.push_back(r.dir.string());
    }
    if (!offending.empty()) {
        std::string msg = "aggregate: incompatible log schema or roster in:";
        for (const auto& f : offending) msg += "\n  " + f;
        msg += "\n(reference: " + runs.front().dir.string() + ")";
        throw ConfigError(msg);
    }

    if (bucket_width <= 0) {
        for (const auto& r : runs) {
            const Json* it = lookup(r.config, "scheduler.iter_steps");
            const std::int64_t w = it != nullptr && it->is_number_integer() ? it->get<std::int64_t>() : 25000;
            bucket_width = bucket_width <= 0 ? w : std::min(bucket_width, w);
        }
    }

    // group -> bucket -> per-run values
    std::map<std::string, std::map<std::int64_t, std::vector<double>>, decltype(&numeric_less)> table(&numeric_less);
    for (const auto& r : runs) {
        std::map<std::int64_t, double> last;
        for (const auto& [frames, mean] : r.evals) last[frames / bucket_width * bucket_width] = mean;
        auto& group = table[group_value(r.config, group_by)];
        for (const auto& [bucket, value] : last) group[bucket].push_back(value);
    }

    std::vector<AggregateRow> rows;
    for (auto& [group, buckets] : table) {
        for (auto& [bucket, values] : buckets) {
            std::sort(values.begin(), values.end());
            double mean = 0.0;
            for (double v : values) mean += v;
            mean /= static_cast<double>(values.size());
            double var = 0.0;
            for (double v : values) var += (v - mean) * (v - mean);
            var /= static_cast<double>(values.size());
            rows.push_back(AggregateRow{group, bucket, mean, std::sqrt(var), values.size()});
        }
    }
    return rows;
}

void write_aggregate_csv(const std::vector<AggregateRow>& rows, const std::string& group_by, const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "group_by,group,frames,mean,std,n\n";
    for (const auto& r : rows) {
        out << csv_field(group_by) << ',' << csv_field(r.group) << ',' << r.frames << ',' << fmt(r.mean) << ','
            << fmt(r.std) << ',' << r.n << '\n';
    }
}

ValidationReport validate_run_dir(const fs::path& dir) {
    ValidationReport report;
    auto problem = [&](const std::string& s) { report.problems.push_back(dir.string() + ": " + s); };
    for (const char* f : {"config.json", "log.jsonl", "evals.csv", "checkpoint.bin"}) {
        if (!fs::exists(dir / f)) problem(std::string("missing ") + f);
    }
    if (!report.ok()) return report;

    try {
        config_from_json(read_json_file(dir / "config.json")).validate();
    } catch (const std::exception& e) {
        problem(std::string("config.json: ") + e.what());
    }

    std::size_t evals = 0;
    std::ifstream log(dir / "log.jsonl");
    std::string line;
    std::string first_kind;
    std::string last_kind;
    std::string status;
    std::size_t n = 0;
    while (std::getline(log, line)) {
        if (line.empty()) continue;
        ++n;
        try {
            const Json j = Json::parse(line);
            const std::string kind = j.value("record", "");
            if (n == 1) first_kind = kind;
            last_kind = kind;
            if (kind == "eval" || kind == "candidate") {
                record_from_json(j);
                if (kind == "eval") ++evals;
            } else if (kind == "summary") {
                status = j.value("status", "");
            } else if (kind != "header") {
                problem("log.jsonl line " + std::to_string(n) + ": unknown record type '" + kind + "'");
            }
        } catch (const std::exception& e) {
            problem("log.jsonl line " + std::to_string(n) + ": " + e.what());
        }
    }
    if (first_kind != "header") problem("log.jsonl does not start with a header record");
    if (last_kind != "summary") problem("log.jsonl does not end with a summary record");
    if (status != "ok") problem("run status is '" + status + "'");
    if (evals == 0) problem("log.jsonl holds no eval records");

    std::ifstream csv(dir / "evals.csv");
    std::size_t rows = 0;
    while (std::getline(csv, line)) {
        if (!line.empty()) ++rows;
    }
    if (rows != evals + 1) {
        problem("evals.csv has " + std::to_string(rows > 0 ? rows - 1 : 0) + " rows, log.jsonl has " +
                std::to_string(evals) + " eval records");
    }

    try {
        load_checkpoint(dir / "checkpoint.bin");
    } catch (const std::exception& e) {
        problem(std::string("checkpoint.bin: ") + e.what());
    }
    return report;
}

} // namespace rheacl
