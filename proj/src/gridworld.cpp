#include "rheacl/gridworld.hpp"

#include <algorithm>
#include <cmath>

#include "rheacl/errors.hpp"

namespace rheacl {

std::string to_string(EnvKind kind) { return kind == EnvKind::DoorKey ? "DoorKey" : "DynamicObstacles"; }

std::string to_string(Outcome outcome) {
    switch (outcome) {
    case Outcome::Running: return "running";
    case Outcome::Goal: return "goal";
    case Outcome::Collision: return "collision";
    case Outcome::Timeout: return "timeout";
    }
    return "?";
}

EnvSpec EnvSpec::make(EnvKind kind, int size) {
    if (std::find(kLevelSizes.begin(), kLevelSizes.end(), size) == kLevelSizes.end()) {
        throw ConfigError("level size must be one of 6, 8, 10, 12; got " + std::to_string(size));
    }
    return EnvSpec{kind, size};
}

EnvSpec EnvSpec::parse(const std::string& text) {
    const auto dash = text.rfind('-');
    if (dash == std::string::npos) throw ConfigError("bad environment name '" + text + "' (expected Kind-Size)");
    const std::string kind = text.substr(0, dash);
    int size = 0;
    try {
        std::size_t used = 0;
        size = std::stoi(text.substr(dash + 1), &used);
        if (used != text.size() - dash - 1) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
        throw ConfigError("bad environment size in '" + text + "'");
    }
    if (kind == "DoorKey") return make(EnvKind::DoorKey, size);
    if (kind == "DynamicObstacles") return make(EnvKind::DynamicObstacles, size);
    throw ConfigError("unknown environment kind '" + kind + "'");
}

int EnvSpec::default_max_steps() const { return (kind == EnvKind::DoorKey ? 10 : 4) * size * size; }

std::string EnvSpec::name() const { return to_string(kind) + "-" + std::to_string(size); }

namespace {

constexpr std::array<Pos, 4> kDirVec{Pos{1, 0}, Pos{0, 1}, Pos{-1, 0}, Pos{0, -1}};

Pos operator+(Pos a, Pos b) { return {a.x + b.x, a.y + b.y}; }

void build_walls(GridState& s) {
    const int n = s.size();
    s.cells.assign(static_cast<std::size_t>(n * n), Cell::Empty);
    for (int i = 0; i < n; ++i) {
        s.at({i, 0}) = Cell::Wall;
        s.at({i, n - 1}) = Cell::Wall;
        s.at({0, i}) = Cell::Wall;
        s.at({n - 1, i}) = Cell::Wall;
    }
}

/// Random empty, agent-free cell in the rectangle [x0,x1] x [y0,y1].
Pos random_free_cell(GridState& s, int x0, int x1, int y0, int y1, bool avoid_agent) {
    for (int tries = 0; tries < 10000; ++tries) {
        const Pos p{s.rng.integer(x0, x1), s.rng.integer(y0, y1)};
        if (s.at(p) != Cell::Empty) continue;
        if (avoid_agent && p == s.agent) continue;
        return p;
    }
    throw ConfigError("could not place object in " + s.spec.name());
}

void generate_door_key(GridState& s) {
    const int n = s.size();
    if (n < 5) throw ConfigError("DoorKey needs size >= 5, got " + std::to_string(n));
    build_walls(s);
    s.at({n - 2, n - 2}) = Cell::Goal;
    const int split = s.rng.integer(2, n - 3);
    for (int y = 0; y < n; ++y) s.at({split, y}) = Cell::Wall;
    s.agent = random_free_cell(s, 1, split - 1, 1, n - 2, false);
    s.dir = static_cast<Dir>(s.rng.integer(0, 3));
    const int door_y = s.rng.integer(1, n - 3);
    s.at({split, door_y}) = Cell::DoorClosed;
    const Pos key = random_free_cell(s, 1, split - 1, 1, n - 2, true);
    s.at(key) = Cell::Key;
}

void generate_dynamic_obstacles(GridState& s, int count) {
    const int n = s.size();
    if (n < 4) throw ConfigError("DynamicObstacles needs size >= 4, got " + std::to_string(n));
    build_walls(s);
    s.at({n - 2, n - 2}) = Cell::Goal;
    s.agent = {1, 1};
    s.dir = Dir::East;
    const int interior = (n - 2) * (n - 2);
    if (count < 0) count = n / 2;
    if (count > interior - 2) throw ConfigError("too many obstacles for " + s.spec.name());
    s.obstacles.clear();
    for (int i = 0; i < count; ++i) {
        const Pos p = random_free_cell(s, 1, n - 2, 1, n - 2, true);
        s.at(p) = Cell::Obstacle;
        s.obstacles.push_back(p);
    }
}

bool walkable(Cell c) { return c == Cell::Empty || c == Cell::DoorOpen || c == Cell::Goal; }

bool see_through(Cell c) { return c != Cell::Wall && c != Cell::DoorClosed; }

std::array<std::uint8_t, 3> encode(Cell c) {
    switch (c) {
    case Cell::Empty: return {1, 0, 0};
    case Cell::Wall: return {2, 1, 0};
    case Cell::DoorClosed: return {3, 2, 1};
    case Cell::DoorOpen: return {3, 2, 0};
    case Cell::Key: return {4, 2, 0};
    case Cell::Goal: return {5, 3, 0};
    case Cell::Obstacle: return {6, 4, 0};
    }
    return {0, 0, 0};
}

void move_obstacles(GridState& s) {
    for (Pos& p : s.obstacles) {
        const Pos target = p + kDirVec[s.rng.index(4)];
        if (!s.in_bounds(target) || s.at(target) != Cell::Empty) continue;
        s.at(p) = Cell::Empty;
        s.at(target) = Cell::Obstacle;
        p = target;
    }
}

} // namespace

Pos GridState::front() const { return agent + kDirVec[static_cast<int>(dir)]; }

GridState reset(const EnvSpec& spec, std::uint64_t seed, int max_steps, const EnvOptions& options) {
    if (max_steps < 1) throw ConfigError("max_steps must be positive");
    if (options.view_size < 3 || options.view_size % 2 == 0) throw ConfigError("view_size must be odd and >= 3");
    GridState s;
    s.spec = spec;
    s.max_steps = max_steps;
    s.view_size = options.view_size;
    s.rng = Rng(seed);
    if (spec.kind == EnvKind::DoorKey) {
        generate_door_key(s);
    } else {
        generate_dynamic_obstacles(s, options.obstacle_count);
    }
    return s;
}

double success_reward(int taken_steps, int max_steps) {
    return 1.0 - 0.9 * (static_cast<double>(taken_steps) / static_cast<double>(max_steps));
}

StepResult step(GridState& s, Action action) {
    if (s.done()) throw ContractViolation("step() called on a finished episode in " + s.spec.name());
    ++s.steps_taken;
    double reward = 0.0;
    const Pos fwd = s.front();
    switch (action) {
    case Action::Left: s.dir = static_cast<Dir>((static_cast<int>(s.dir) + 3) % 4); break;
    case Action::Right: s.dir = static_cast<Dir>((static_cast<int>(s.dir) + 1) % 4); break;
    case Action::Forward: {
        const Cell c = s.at(fwd);
        if (c == Cell::Obstacle) {
            s.outcome = Outcome::Collision;
        } else if (walkable(c)) {
            s.agent = fwd;
            if (c == Cell::Goal) s.outcome = Outcome::Goal;
        }
        break;
    }
    case Action::Pickup:
        if (!s.carrying_key && s.at(fwd) == Cell::Key) {
            s.carrying_key = true;
            s.at(fwd) = Cell::Empty;
        }
        break;
    case Action::Drop:
        if (s.carrying_key && s.at(fwd) == Cell::Empty) {
            s.carrying_key = false;
            s.at(fwd) = Cell::Key;
        }
        break;
    case Action::Toggle:
        if (s.carrying_key && s.at(fwd) == Cell::DoorClosed) s.at(fwd) = Cell::DoorOpen;
        break;
    case Action::Done: break;
    default: throw ContractViolation("unknown action " + std::to_string(static_cast<int>(action)));
    }

    if (!s.done() && s.spec.kind == EnvKind::DynamicObstacles) {
        move_obstacles(s);
        if (s.at(s.agent) == Cell::Obstacle) s.outcome = Outcome::Collision;
    }
    if (!s.done() && s.steps_taken >= s.max_steps) s.outcome = Outcome::Timeout;

    if (s.outcome == Outcome::Goal) reward = success_reward(s.steps_taken, s.max_steps);
    if (s.outcome == Outcome::Collision) reward = -1.0;
    return StepResult{observe(s), reward, s.done(), s.outcome};
}

Observation observe(const GridState& s) {
    const int v = s.view_size;
    const int half = v / 2;
    const Pos f = kDirVec[static_cast<int>(s.dir)];
    const Pos r{-f.y, f.x};

    std::vector<Cell> view(static_cast<std::size_t>(v * v), Cell::Wall);
    auto vat = [&](int col, int row) -> Cell& { return view[static_cast<std::size_t>(row * v + col)]; };
    for (int row = 0; row < v; ++row) {
        for (int col = 0; col < v; ++col) {
            const int ahead = v - 1 - row;
            const int side = col - half;
            const Pos w{s.agent.x + ahead * f.x + side * r.x, s.agent.y + ahead * f.y + side * r.y};
            if (s.in_bounds(w)) vat(col, row) = s.at(w);
        }
    }
    vat(half, v - 1) = s.carrying_key ? Cell::Key : Cell::Empty;

    // Visibility spreads outward from the agent, row by row away from it, and
    // stops at cells that cannot be seen through.
    std::vector<char> mask(static_cast<std::size_t>(v * v), 0);
    auto m = [&](int col, int row) -> char& { return mask[static_cast<std::size_t>(row * v + col)]; };
    m(half, v - 1) = 1;
    for (int row = v - 1; row >= 0; --row) {
        for (int col = 0; col < v - 1; ++col) {
            if (!m(col, row) || !see_through(vat(col, row))) continue;
            m(col + 1, row) = 1;
            if (row > 0) {
                m(col + 1, row - 1) = 1;
                m(col, row - 1) = 1;
            }
        }
        for (int col = v - 1; col > 0; --col) {
            if (!m(col, row) || !see_through(vat(col, row))) continue;
            m(col - 1, row) = 1;
            if (row > 0) {
                m(col - 1, row - 1) = 1;
                m(col, row - 1) = 1;
            }
        }
    }

    Observation obs;
    obs.view_size = v;
    obs.direction = static_cast<int>(s.dir);
    obs.grid.assign(static_cast<std::size_t>(v * v * 3), 0);
    for (int row = 0; row < v; ++row) {
        for (int col = 0; col < v; ++col) {
            if (!m(col, row)) continue;
            const auto e = encode(vat(col, row));
            std::copy(e.begin(), e.end(), obs.grid.begin() + (row * v + col) * 3);
        }
    }
    return obs;
}

std::string render(const GridState& s) {
    std::string out;
    const int n = s.size();
    for (int y = 0; y < n; ++y) {
        for (int x = 0; x < n; ++x) {
            if (Pos{x, y} == s.agent) {
                out += ">v<^"[static_cast<int>(s.dir)];
                continue;
            }
            switch (s.at({x, y})) {
            case Cell::Empty: out += '.'; break;
            case Cell::Wall: out += '#'; break;
            case Cell::DoorClosed: out += 'D'; break;
            case Cell::DoorOpen: out += 'd'; break;
            case Cell::Key: out += 'K'; break;
            case Cell::Goal: out += 'G'; break;
            case Cell::Obstacle: out += 'o'; break;
            }
        }
        out += '\n';
    }
    return out;
}

double StepBudgetSchedule::multiplier(std::int64_t iterations_done) const {
    if (iterations_done <= decay_start) return 1.0;
    // Same as 1 - (iD - start) / span, written so the default breakpoints are exact.
    const double m = static_cast<double>(decay_start + decay_span - iterations_done) / static_cast<double>(decay_span);
    return std::max(m, floor);
}

int StepBudgetSchedule::max_steps_for(const EnvSpec& spec, std::int64_t iterations_done) const {
    const double steps = std::round(spec.default_max_steps() * multiplier(iterations_done));
    return std::max(1, static_cast<int>(steps));
}

} // namespace rheacl
