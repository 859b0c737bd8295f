// rheacl command-line interface.
//
// Exit codes: 0 success, 1 configuration error (bad config, sweep, arguments or
// invalid run directory), 2 runtime failure.

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include "rheacl/errors.hpp"
#include "rheacl/harness.hpp"

namespace fs = std::filesystem;
using namespace rheacl;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitRuntime = 2;

// "--a.b=c" leftovers become dotted overrides.
std::vector<std::string> collect_overrides(const std::vector<std::string>& sets,
                                           const std::vector<std::string>& extras) {
    std::vector<std::string> out = sets;
    for (std::size_t i = 0; i < extras.size(); ++i) {
        const std::string& e = extras[i];
        if (e.rfind("--", 0) != 0) throw ConfigError("unexpected argument '" + e + "'");
        std::string body = e.substr(2);
        if (body.find('=') == std::string::npos) {
            if (i + 1 >= extras.size()) throw ConfigError("override '" + e + "' needs a value");
            body += "=" + extras[++i];
        }
        out.push_back(body);
    }
    return out;
}

bool looks_like_sweep(const Json& doc) {
    return doc.is_object() && (doc.contains("rows") || doc.contains("axes") || doc.contains("sobol_rates") ||
                               doc.contains("base"));
}

void print_sweep(const SweepSpec& spec) {
    std::cout << "sweep " << spec.name << ": " << spec.rows.size() << " rows\n";
    for (const auto& row : spec.rows) {
        const RunConfig cfg = spec.resolve(row);
        const auto& ev = cfg.scheduler.evolution;
        std::cout << "  " << row.id << "  kind=" << to_string(cfg.scheduler.kind)
                  << " iter_steps=" << cfg.scheduler.iter_steps << " curriculum_length=" << ev.curriculum_length
                  << " generations=" << ev.generations << " population_size=" << ev.population_size
                  << " mutation_rate=" << ev.mutation_rate << " crossover_rate=" << ev.crossover_rate
                  << " seeds=" << cfg.seeds.size() << "\n";
    }
}

int cmd_run(const std::string& config, const std::vector<std::string>& overrides, const std::string& out,
            std::size_t jobs, bool print_config) {
    const RunConfig cfg = load_run_config(config, overrides);
    if (print_config) {
        std::cout << config_to_json(cfg).dump(2) << "\n";
        return kExitOk;
    }
    const fs::path dir = out.empty() ? resolve_output_dir(cfg.output_dir) : fs::path(out);
    std::cout << "run " << cfg.name << " (" << to_string(cfg.scheduler.kind) << ", " << cfg.seeds.size()
              << " seeds) -> " << dir.string() << std::endl;
    const ExperimentOutcome result = run_experiment(cfg, dir, jobs);
    for (const auto& s : result.seeds) {
        std::cout << "  seed " << s.seed << ": " << (s.ok ? "ok" : "FAILED") << "  final roster mean "
                  << s.final_roster_mean << "  frames " << s.frames_consumed;
        if (!s.ok) std::cout << "  error: " << s.error;
        std::cout << "\n";
    }
    return result.ok() ? kExitOk : kExitRuntime;
}

int cmd_sweep(const std::string& file, const std::vector<std::string>& overrides, const std::string& out,
              std::size_t jobs, bool dry_run) {
    Json doc = read_json_file(file);
    if (!overrides.empty()) {
        if (!doc.contains("base")) doc["base"] = Json::object();
        for (const auto& o : overrides) apply_override(doc["base"], o);
    }
    const SweepSpec spec = sweep_from_json(doc);
    if (dry_run) {
        print_sweep(spec);
        return kExitOk;
    }
    const fs::path dir = out.empty() ? resolve_output_dir(spec.name) : fs::path(out);
    std::cout << "sweep " << spec.name << " (" << spec.rows.size() << " rows) -> " << dir.string() << std::endl;
    const SweepOutcome result = run_sweep(spec, dir, jobs);
    std::cout << result.runs << " runs, " << result.failures << " failed; index " << result.index.string() << "\n";
    return result.failures == 0 ? kExitOk : kExitRuntime;
}

int cmd_aggregate(const std::vector<std::string>& dirs, const std::string& group_by, std::int64_t bucket,
                  const std::string& out) {
    std::vector<fs::path> roots(dirs.begin(), dirs.end());
    const auto runs = find_run_dirs(roots);
    if (runs.empty()) throw ConfigError("aggregate: no run directories under the given paths");
    const auto rows = aggregate(runs, group_by, bucket);
    if (out.empty()) {
        std::cout << "group_by,group,frames,mean,std,n\n";
        for (const auto& r : rows) {
            std::cout << csv_field(group_by) << ',' << csv_field(r.group) << ',' << r.frames << ',' << r.mean << ','
                      << r.std << ',' << r.n << '\n';
        }
    } else {
        write_aggregate_csv(rows, group_by, out);
        std::cout << rows.size() << " rows from " << runs.size() << " runs -> " << out << "\n";
    }
    return kExitOk;
}

int cmd_validate(const std::vector<std::string>& paths) {
    int code = kExitOk;
    for (const auto& p : paths) {
        if (fs::is_directory(p)) {
            const auto runs = find_run_dirs({fs::path(p)});
            if (runs.empty()) {
                std::cout << p << ": no run directories found\n";
                code = kExitConfig;
            }
            for (const auto& dir : runs) {
                const ValidationReport report = validate_run_dir(dir);
                if (report.ok()) {
                    std::cout << dir.string() << ": ok\n";
                } else {
                    for (const auto& problem : report.problems) std::cout << problem << "\n";
                    code = kExitConfig;
                }
            }
            continue;
        }
        const Json doc = read_json_file(p);
        if (looks_like_sweep(doc)) {
            print_sweep(sweep_from_json(doc));
        } else {
            config_from_json(doc).validate();
        }
        std::cout << p << ": ok\n";
    }
    return code;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"RHEA CL curriculum scheduling experiments"};
    app.require_subcommand(1);
    std::size_t jobs = 1;
    std::string out;

    auto* run = app.add_subcommand("run", "Run one configuration across its seeds");
    std::string config;
    std::vector<std::string> sets;
    run->add_option("config", config, "Config file (JSON); defaults are used when omitted");
    run->add_option("--set", sets, "Dotted override key.path=value (repeatable); --key.path=value also works");
    run->add_option("--out", out, "Output directory (default: $RHEACL_OUTPUT_ROOT/<output_dir>)");
    run->add_option("--jobs", jobs, "Seeds run in parallel");
    bool print_config = false;
    run->add_flag("--print-config", print_config, "Print the resolved config and exit");
    run->allow_extras();

    auto* sweep = app.add_subcommand("sweep", "Run every row of a sweep file across its seeds");
    std::string sweep_file;
    std::vector<std::string> sweep_sets;
    bool dry_run = false;
    sweep->add_option("sweep", sweep_file, "Sweep file (JSON)")->required();
    sweep->add_option("--set", sweep_sets, "Dotted override applied to the sweep base (repeatable)");
    sweep->add_option("--out", out, "Output directory (default: $RHEACL_OUTPUT_ROOT/<sweep name>)");
    sweep->add_option("--jobs", jobs, "Runs executed in parallel");
    sweep->add_flag("--dry-run", dry_run, "List the resolved rows without running");
    sweep->allow_extras();

    auto* agg = app.add_subcommand("aggregate", "Mean/std of roster-mean return per group and frame bucket");
    std::vector<std::string> agg_dirs;
    std::string group_by = "name";
    std::int64_t bucket = 0;
    agg->add_option("dirs", agg_dirs, "Run directories or parents of run directories")->required();
    agg->add_option("--group-by", group_by, "Dotted config path to group by (default: name)");
    agg->add_option("--bucket", bucket, "Frame bucket width (default: scheduler.iter_steps)");
    agg->add_option("--out", out, "CSV file (default: stdout)");

    auto* val = app.add_subcommand("validate", "Check configs, sweep files or run directories");
    std::vector<std::string> val_paths;
    val->add_option("paths", val_paths, "Files or directories")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitConfig;
    }

    try {
        if (run->parsed()) return cmd_run(config, collect_overrides(sets, run->remaining()), out, jobs, print_config);
        if (sweep->parsed()) {
            return cmd_sweep(sweep_file, collect_overrides(sweep_sets, sweep->remaining()), out, jobs, dry_run);
        }
        if (agg->parsed()) return cmd_aggregate(agg_dirs, group_by, bucket, out);
        if (val->parsed()) return cmd_validate(val_paths);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "runtime failure: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitConfig;
}
