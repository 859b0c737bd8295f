#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "rheacl/curriculum.hpp"
#include "rheacl/errors.hpp"
#include "rheacl/evolution.hpp"
#include "rheacl/gridworld.hpp"
#include "rheacl/harness.hpp"

namespace py = pybind11;
using namespace rheacl;

namespace {

// Configs cross the boundary as JSON text; the Python side wraps them in dicts.
std::string resolve_config(const std::string& text, const std::vector<std::string>& overrides) {
    Json doc = text.empty() ? config_to_json(RunConfig{}) : Json::parse(text, nullptr, true, true);
    for (const auto& o : overrides) apply_override(doc, o);
    RunConfig cfg = config_from_json(doc);
    cfg.validate();
    return config_to_json(cfg).dump();
}

RunConfig parse_config(const std::string& text) {
    RunConfig cfg = config_from_json(Json::parse(text));
    cfg.validate();
    return cfg;
}

py::dict seed_dict(const SeedOutcome& s) {
    py::dict d;
    d["seed"] = s.seed;
    d["dir"] = s.dir.string();
    d["ok"] = s.ok;
    d["error"] = s.error;
    d["final_roster_mean"] = s.final_roster_mean;
    d["frames_consumed"] = s.frames_consumed;
    return d;
}

class Env {
public:
    Env(const std::string& name, std::uint64_t seed, int max_steps, int view_size) {
        const EnvSpec spec = EnvSpec::parse(name);
        EnvOptions opts;
        opts.view_size = view_size;
        state_ = reset(spec, seed, max_steps > 0 ? max_steps : spec.default_max_steps(), opts);
    }

    py::tuple do_step(int action) {
        if (action < 0 || action >= kNumActions) throw py::value_error("action out of range");
        const StepResult r = step(state_, static_cast<Action>(action));
        return py::make_tuple(r.obs.grid, r.reward, r.done, to_string(r.outcome));
    }

    std::vector<std::uint8_t> observation() const { return observe(state_).grid; }
    std::string text() const { return render(state_); }
    bool done() const { return state_.done(); }
    int steps_taken() const { return state_.steps_taken; }
    int max_steps() const { return state_.max_steps; }

private:
    GridState state_;
};

} // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "RHEA CL core bindings";
    m.attr("__version__") = kVersion;
    m.attr("OUTPUT_ROOT_ENV") = kOutputRootEnv;

    static py::exception<ConfigError> config_error(m, "ConfigError", PyExc_ValueError);
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const ConfigError& e) {
            py::set_error(config_error, e.what());
        } catch (const Json::exception& e) {
            py::set_error(config_error, e.what());
        }
    });

    m.def("resolve_config", &resolve_config, py::arg("text") = "", py::arg("overrides") = std::vector<std::string>{},
          "Validated config JSON with every default filled in.");
    m.def("load_config_file", [](const std::filesystem::path& path, const std::vector<std::string>& overrides) {
        return config_to_json(load_run_config(path, overrides)).dump();
    }, py::arg("path"), py::arg("overrides") = std::vector<std::string>{});

    m.def("run", [](const std::string& text, const std::filesystem::path& out, std::size_t jobs) {
        const RunConfig cfg = parse_config(text);
        const std::filesystem::path dir = out.empty() ? resolve_output_dir(cfg.output_dir) : out;
        ExperimentOutcome outcome;
        {
            py::gil_scoped_release release;
            outcome = run_experiment(cfg, dir, jobs);
        }
        py::list seeds;
        for (const auto& s : outcome.seeds) seeds.append(seed_dict(s));
        return seeds;
    }, py::arg("config"), py::arg("out") = std::filesystem::path{}, py::arg("jobs") = 1, "Runs every seed of a config; returns per-seed outcomes.");

    m.def("aggregate", [](const std::vector<std::filesystem::path>& roots, const std::string& group_by, std::int64_t bucket) {
        py::list rows;
        for (const auto& r : aggregate(find_run_dirs(roots), group_by, bucket)) {
            py::dict d;
            d["group"] = r.group;
            d["frames"] = r.frames;
            d["mean"] = r.mean;
            d["std"] = r.std;
            d["n"] = r.n;
            rows.append(d);
        }
        return rows;
    }, py::arg("roots"), py::arg("group_by") = "name", py::arg("bucket") = 0);

    m.def("validate_run_dir", [](const std::filesystem::path& dir) { return validate_run_dir(dir).problems; }, py::arg("dir"),
          "Problems found in a run directory (empty when valid).");

    m.def("curriculum_score", [](const std::vector<double>& rewards, double gamma) {
        return curriculum_score(rewards, gamma);
    }, py::arg("rewards"), py::arg("gamma"));
    m.def("sobol_rate_grid", &sobol_rate_grid, py::arg("n"));
    m.def("success_reward", &success_reward, py::arg("taken_steps"), py::arg("max_steps"));
    m.def("step_budget_multiplier", [](std::int64_t iterations_done) {
        return StepBudgetSchedule{}.multiplier(iterations_done);
    }, py::arg("iterations_done"));

    py::class_<Env>(m, "Env", "A single gridworld episode.")
        .def(py::init<const std::string&, std::uint64_t, int, int>(), py::arg("name"), py::arg("seed") = 0,
             py::arg("max_steps") = 0, py::arg("view_size") = 5)
        .def("step", &Env::do_step, py::arg("action"), "Returns (observation, reward, done, outcome).")
        .def("observation", &Env::observation)
        .def("render", &Env::text)
        .def_property_readonly("done", &Env::done)
        .def_property_readonly("steps_taken", &Env::steps_taken)
        .def_property_readonly("max_steps", &Env::max_steps);
}
