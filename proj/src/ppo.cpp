#include "rheacl/ppo.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "rheacl/errors.hpp"

namespace rheacl {

void PpoConfig::validate() const {
    auto fail = [](const std::string& field, const std::string& why) { throw ConfigError("ppo." + field + ": " + why); };
    if (batch_size == 0) fail("batch_size", "must be positive");
    if (!(discount > 0.0 && discount <= 1.0)) fail("discount", "must be in (0, 1]");
    if (!(lr > 0.0)) fail("lr", "must be positive");
    if (!(gae_lambda >= 0.0 && gae_lambda <= 1.0)) fail("gae_lambda", "must be in [0, 1]");
    if (!(clip_eps > 0.0 && clip_eps < 1.0)) fail("clip_eps", "must be in (0, 1)");
    if (!(adam_eps > 0.0)) fail("adam_eps", "must be positive");
    if (!(adam_alpha > 0.0 && adam_alpha < 1.0)) fail("adam_alpha", "must be in (0, 1)");
    if (!(max_grad_norm > 0.0)) fail("max_grad_norm", "must be positive");
    if (frames_per_process == 0) fail("frames_per_process", "must be positive");
    if (num_processes == 0) fail("num_processes", "must be positive");
    if (update_epochs == 0) fail("update_epochs", "must be positive");
    if (frames_per_update() % batch_size != 0) {
        fail("batch_size", "must divide frames_per_process * num_processes = " + std::to_string(frames_per_update()));
    }
}

void compute_gae(RolloutBuffer& b, double discount, double lambda) {
    const std::size_t n = b.size();
    const std::size_t procs = b.num_processes;
    if (procs == 0 || n % procs != 0 || b.values.size() != n || b.rewards.size() != n || b.dones.size() != n ||
        b.bootstrap_values.size() != procs) {
        throw ContractViolation("compute_gae: buffer is not fully populated");
    }
    b.advantages.assign(n, 0.0);
    b.returns.assign(n, 0.0);
    const std::size_t steps = n / procs;
    for (std::size_t p = 0; p < procs; ++p) {
        double next_adv = 0.0;
        double next_value = b.bootstrap_values[p];
        for (std::size_t t = steps; t-- > 0;) {
            const std::size_t i = t * procs + p;
            const double mask = b.dones[i] ? 0.0 : 1.0;
            const double delta = b.rewards[i] + discount * next_value * mask - b.values[i];
            const double adv = delta + discount * lambda * next_adv * mask;
            b.advantages[i] = adv;
            b.returns[i] = adv + b.values[i];
            next_adv = adv;
            next_value = b.values[i];
        }
    }
}

// --- collection -------------------------------------------------------------

Collector::Collector(std::vector<EnvSpec> pool, EnvAssignment assignment, std::size_t num_processes,
                     EnvOptions options, std::uint64_t seed)
    : pool_(std::move(pool)), assignment_(assignment), options_(options) {
    if (pool_.empty()) throw ConfigError("environment pool must not be empty");
    if (num_processes == 0) throw ConfigError("num_processes must be positive");
    workers_.resize(num_processes);
    for (std::size_t w = 0; w < num_processes; ++w) {
        workers_[w].pool_pos = w % pool_.size();
        workers_[w].rng = Rng(derive_seed(seed, {w}));
    }
}

std::vector<EnvSpec> Collector::worker_specs() const {
    std::vector<EnvSpec> specs;
    for (const auto& w : workers_) specs.push_back(pool_[w.pool_pos]);
    return specs;
}

void Collector::start_episode(Worker& w, const StepBudgetSchedule& schedule, std::int64_t iterations_done) {
    const EnvSpec& spec = pool_[w.pool_pos];
    w.state = reset(spec, w.rng.fork(), schedule.max_steps_for(spec, iterations_done), options_);
    w.obs = observe(w.state);
}

namespace {

double log_prob_of(std::span<const double> logits, std::size_t action) {
    const double mx = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (double l : logits) z += std::exp(l - mx);
    return logits[action] - (mx + std::log(z));
}

} // namespace

RolloutBuffer Collector::collect(const PolicyParams& params, const PpoConfig& cfg, const StepBudgetSchedule& schedule,
                                 std::int64_t iterations_done) {
    const std::size_t procs = workers_.size();
    if (!started_) {
        for (auto& w : workers_) start_episode(w, schedule, iterations_done);
        started_ = true;
    }
    RolloutBuffer b;
    b.frames_per_process = cfg.frames_per_process;
    b.num_processes = procs;
    b.view_size = params.view_size;
    b.worker_specs = worker_specs();
    const std::size_t total = cfg.frames_per_process * procs;
    b.observations.reserve(total * b.obs_width());
    b.actions.reserve(total);
    b.log_probs.reserve(total);
    b.values.reserve(total);
    b.rewards.reserve(total);
    b.dones.reserve(total);

    std::vector<Observation> batch(procs);
    for (std::size_t t = 0; t < cfg.frames_per_process; ++t) {
        for (std::size_t p = 0; p < procs; ++p) batch[p] = workers_[p].obs;
        const PolicyOutput out = evaluate_policy(params, observations_to_tensor(batch), cfg.tanh_logits);
        for (std::size_t p = 0; p < procs; ++p) {
            Worker& w = workers_[p];
            const std::span<const double> logits(out.logits.data() + p * kNumActions, kNumActions);
            const auto probs = softmax(logits);
            const std::size_t action = w.rng.categorical(probs);
            append_observation(w.obs, b.observations);
            b.actions.push_back(action);
            b.log_probs.push_back(log_prob_of(logits, action));
            b.values.push_back(out.values[p]);
            const StepResult r = step(w.state, static_cast<Action>(action));
            b.rewards.push_back(r.reward);
            b.dones.push_back(r.done ? 1 : 0);
            if (r.done) {
                b.episodes.push_back(EpisodeResult{w.state.spec, r.reward, w.state.steps_taken, r.outcome, p});
                if (assignment_ == EnvAssignment::CyclePerEpisode) w.pool_pos = (w.pool_pos + 1) % pool_.size();
                start_episode(w, schedule, iterations_done + static_cast<std::int64_t>((t + 1) * procs));
            } else {
                w.obs = r.obs;
            }
        }
    }
    for (std::size_t p = 0; p < procs; ++p) batch[p] = workers_[p].obs;
    b.bootstrap_values = evaluate_policy(params, observations_to_tensor(batch), cfg.tanh_logits).values;
    return b;
}

RolloutBuffer collect(const PolicyParams& params, const std::vector<EnvSpec>& pool, const StepBudgetSchedule& schedule,
                      const PpoConfig& cfg, std::int64_t iterations_done, Rng& rng, const EnvOptions& options) {
    Collector c(pool, EnvAssignment::RoundRobin, cfg.num_processes, options, rng.fork());
    return c.collect(params, cfg, schedule, iterations_done);
}

// --- loss and update --------------------------------------------------------

std::vector<double> normalize_advantages(std::span<const double> adv) {
    std::vector<double> out(adv.begin(), adv.end());
    if (out.empty()) return out;
    const double n = static_cast<double>(out.size());
    const double mu = std::accumulate(out.begin(), out.end(), 0.0) / n;
    double var = 0.0;
    for (double a : out) var += (a - mu) * (a - mu);
    const double sd = std::sqrt(var / n);
    for (double& a : out) a = sd > 1e-12 ? (a - mu) / sd : a - mu;
    return out;
}

Minibatch make_minibatch(const RolloutBuffer& b, std::span<const std::size_t> indices, std::span<const double> adv) {
    if (b.returns.size() != b.size() || adv.size() != b.size()) {
        throw ContractViolation("make_minibatch: advantages not computed");
    }
    Minibatch mb;
    const std::size_t width = b.obs_width();
    const auto v = static_cast<std::size_t>(b.view_size);
    std::vector<double> obs;
    obs.reserve(indices.size() * width);
    for (std::size_t i : indices) {
        auto first = b.observations.begin() + static_cast<std::ptrdiff_t>(i * width);
        obs.insert(obs.end(), first, first + static_cast<std::ptrdiff_t>(width));
        mb.actions.push_back(b.actions[i]);
        mb.old_log_probs.push_back(b.log_probs[i]);
        mb.advantages.push_back(adv[i]);
        mb.returns.push_back(b.returns[i]);
    }
    mb.observations = Tensor({indices.size(), v, v, 3}, std::move(obs));
    return mb;
}

LossTerms ppo_loss(const NetworkVars& net, const Minibatch& mb, const PpoConfig& cfg) {
    Tape& t = net.logits.tape();
    const std::size_t n = mb.actions.size();
    Var old_logp = t.constant(Tensor({n}, mb.old_log_probs));
    Var adv = t.constant(Tensor({n}, mb.advantages));
    Var ret = t.constant(Tensor({n}, mb.returns));

    Var logp_all = ops::log_softmax(net.logits);
    Var logp = ops::pick(logp_all, mb.actions);
    Var ratio = ops::exp(ops::sub(logp, old_logp));
    Var surr1 = ops::mul(ratio, adv);
    Var surr2 = ops::mul(ops::clamp(ratio, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps), adv);
    LossTerms lt;
    lt.policy = ops::scale(ops::mean(ops::minimum(surr1, surr2)), -1.0);
    lt.entropy = ops::scale(ops::mean(ops::sum_rows(ops::mul(ops::exp(logp_all), logp_all))), -1.0);
    lt.value = ops::mean(ops::square(ops::sub(net.value, ret)));
    lt.total = ops::add(ops::add(lt.policy, ops::scale(lt.value, cfg.value_loss_coef)),
                        ops::scale(lt.entropy, -cfg.entropy_coef));
    return lt;
}

LossValue loss_and_gradient(const PolicyParams& params, const Minibatch& mb, const PpoConfig& cfg,
                            std::vector<double>* gradient) {
    Tape tape;
    NetworkVars net = forward(tape, params, mb.observations, cfg.tanh_logits, gradient != nullptr);
    LossTerms lt = ppo_loss(net, mb, cfg);
    LossValue lv{lt.total.value().item(), lt.policy.value().item(), lt.value.value().item(),
                 lt.entropy.value().item()};
    if (!std::isfinite(lv.total)) throw NumericError("PPO loss is not finite");
    if (gradient) {
        tape.backward(lt.total);
        *gradient = gather_gradient(tape, net);
    }
    return lv;
}

UpdateStats ppo_update(PolicyParams& params, AdamState& adam, RolloutBuffer& buffer, const PpoConfig& cfg, Rng& rng) {
    if (buffer.advantages.size() != buffer.size()) compute_gae(buffer, cfg.discount, cfg.gae_lambda);
    const std::size_t n = buffer.size();
    if (n == 0 || n % cfg.batch_size != 0) {
        throw ConfigError("batch_size " + std::to_string(cfg.batch_size) + " does not divide " + std::to_string(n) +
                          " collected frames");
    }
    const std::vector<double> adv =
        cfg.normalize_advantages ? normalize_advantages(buffer.advantages) : buffer.advantages;
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    UpdateStats st;
    std::vector<double> grad;
    for (std::size_t epoch = 0; epoch < cfg.update_epochs; ++epoch) {
        rng.shuffle(std::span<std::size_t>(idx));
        for (std::size_t start = 0; start < n; start += cfg.batch_size) {
            const Minibatch mb = make_minibatch(buffer, std::span(idx).subspan(start, cfg.batch_size), adv);
            const LossValue lv = loss_and_gradient(params, mb, cfg, &grad);
            st.policy_loss += lv.policy;
            st.value_loss += lv.value;
            st.entropy += lv.entropy;
            st.grad_norm += clip_grad_norm(grad, cfg.max_grad_norm);
            adam_step(adam, params.values, grad);
            ++st.steps;
        }
    }
    const double k = static_cast<double>(st.steps);
    st.policy_loss /= k;
    st.value_loss /= k;
    st.entropy /= k;
    st.grad_norm /= k;
    return st;
}

// --- evaluation -------------------------------------------------------------

double evaluate(const PolicyParams& params, const EnvSpec& spec, std::size_t episodes,
                const StepBudgetSchedule& schedule, std::int64_t iterations_done, Rng& rng, bool tanh_logits,
                const EnvOptions& options) {
    if (episodes == 0) throw ContractViolation("evaluate needs at least one episode");
    const int max_steps = schedule.max_steps_for(spec, iterations_done);
    std::vector<GridState> states;
    std::vector<Rng> action_rngs;
    std::vector<Observation> obs;
    for (std::size_t e = 0; e < episodes; ++e) {
        states.push_back(reset(spec, rng.fork(), max_steps, options));
        action_rngs.emplace_back(rng.fork());
        obs.push_back(observe(states.back()));
    }
    std::vector<std::size_t> active(episodes);
    std::iota(active.begin(), active.end(), std::size_t{0});
    double total = 0.0;
    std::vector<Observation> batch;
    while (!active.empty()) {
        batch.clear();
        for (std::size_t e : active) batch.push_back(obs[e]);
        const PolicyOutput out = evaluate_policy(params, observations_to_tensor(batch), tanh_logits);
        std::vector<std::size_t> still;
        for (std::size_t k = 0; k < active.size(); ++k) {
            const std::size_t e = active[k];
            const auto probs = softmax(std::span<const double>(out.logits.data() + k * kNumActions, kNumActions));
            const StepResult r = step(states[e], static_cast<Action>(action_rngs[e].categorical(probs)));
            if (r.done) {
                total += r.reward;
            } else {
                obs[e] = r.obs;
                still.push_back(e);
            }
        }
        active.swap(still);
    }
    return total / static_cast<double>(episodes);
}

// --- agent state and checkpoints --------------------------------------------

AgentState AgentState::fresh(const PpoConfig& cfg, Rng& rng, int view_size) {
    AgentState a;
    a.params = PolicyParams::random(rng, view_size);
    a.adam = AdamState(a.params.size(), cfg.lr, cfg.adam_alpha, cfg.adam_eps);
    return a;
}

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint format assumes a little-endian host");

constexpr char kMagic[8] = {'R', 'H', 'C', 'L', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kCheckpointVersion = 1;

template <class T>
void put(std::ostream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw ConfigError("checkpoint truncated");
    return v;
}

void put_vec(std::ostream& os, const std::vector<double>& v) {
    os.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
}

std::vector<double> get_vec(std::istream& is, std::size_t n) {
    std::vector<double> v(n);
    is.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double)));
    if (!is) throw ConfigError("checkpoint truncated");
    return v;
}

} // namespace

void save_checkpoint(const AgentState& a, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write checkpoint " + path.string());
    os.write(kMagic, sizeof(kMagic));
    put(os, kCheckpointVersion);
    put(os, static_cast<std::int64_t>(a.frames));
    put(os, static_cast<std::int32_t>(a.params.view_size));
    put(os, static_cast<std::uint64_t>(a.params.size()));
    put_vec(os, a.params.values);
    put(os, static_cast<std::uint64_t>(a.adam.t));
    put(os, a.adam.lr);
    put(os, a.adam.beta1);
    put(os, a.adam.beta2);
    put(os, a.adam.eps);
    put_vec(os, a.adam.m);
    put_vec(os, a.adam.v);
    if (!os) throw std::runtime_error("failed writing checkpoint " + path.string());
}

AgentState load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ConfigError("cannot open checkpoint " + path.string());
    char magic[8];
    is.read(magic, sizeof(magic));
    if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) throw ConfigError("not a checkpoint: " + path.string());
    if (get<std::uint32_t>(is) != kCheckpointVersion) throw ConfigError("unsupported checkpoint version");
    AgentState a;
    a.frames = get<std::int64_t>(is);
    const int view = get<std::int32_t>(is);
    const auto n = get<std::uint64_t>(is);
    a.params.view_size = view;
    a.params.values = get_vec(is, n);
    if (a.params.values.size() != ParamLayout(view).total) throw ConfigError("checkpoint parameter count mismatch");
    a.adam.t = get<std::uint64_t>(is);
    a.adam.lr = get<double>(is);
    a.adam.beta1 = get<double>(is);
    a.adam.beta2 = get<double>(is);
    a.adam.eps = get<double>(is);
    a.adam.m = get_vec(is, n);
    a.adam.v = get_vec(is, n);
    return a;
}

} // namespace rheacl
