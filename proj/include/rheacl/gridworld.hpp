#pragma once

// Native DoorKey / DynamicObstacles gridworlds with egocentric partial observations.
//
// Observation encoding (per cell, three channels):
//   object: 0 unseen, 1 empty, 2 wall, 3 door, 4 key, 5 goal, 6 obstacle
//   color:  0 none, 1 grey (wall), 2 yellow (door, key), 3 green (goal), 4 blue (obstacle)
//   state:  0 open / not applicable, 1 closed (locked) door
// The agent's own cell shows the carried key, or empty when nothing is carried.

#include <array>
#include <compare>
#include <cstdint>
#include <string>
#include <vector>

#include "rheacl/rng.hpp"

namespace rheacl {

enum class EnvKind : std::uint8_t { DoorKey, DynamicObstacles };

std::string to_string(EnvKind kind);

/// Environment identity. Sizes count the outer wall (a 6x6 level has a 4x4 interior).
struct EnvSpec {
    EnvKind kind = EnvKind::DoorKey;
    int size = 6;

    /// Validated constructor: size must be one of 6, 8, 10, 12.
    static EnvSpec make(EnvKind kind, int size);
    /// Parses "DoorKey-8" / "DynamicObstacles-6".
    static EnvSpec parse(const std::string& text);

    /// 10*size^2 for DoorKey, 4*size^2 for DynamicObstacles.
    int default_max_steps() const;
    std::string name() const;

    friend auto operator<=>(const EnvSpec&, const EnvSpec&) = default;
};

inline constexpr std::array<int, 4> kLevelSizes{6, 8, 10, 12};

enum class Cell : std::uint8_t { Empty, Wall, DoorClosed, DoorOpen, Key, Goal, Obstacle };

/// 0 = east, 1 = south, 2 = west, 3 = north (y grows downward).
enum class Dir : std::uint8_t { East = 0, South = 1, West = 2, North = 3 };

enum class Action : std::uint8_t { Left = 0, Right = 1, Forward = 2, Pickup = 3, Drop = 4, Toggle = 5, Done = 6 };
inline constexpr int kNumActions = 7;

enum class Outcome : std::uint8_t { Running, Goal, Collision, Timeout };

std::string to_string(Outcome outcome);

struct Pos {
    int x = 0;
    int y = 0;
    friend bool operator==(const Pos&, const Pos&) = default;
};

struct EnvOptions {
    int view_size = 5;
    /// Obstacles in DynamicObstacles; negative means size / 2.
    int obstacle_count = -1;
};

struct GridState {
    EnvSpec spec;
    std::vector<Cell> cells; // row-major, size*size
    Pos agent;
    Dir dir = Dir::East;
    bool carrying_key = false;
    std::vector<Pos> obstacles;
    int steps_taken = 0;
    int max_steps = 1;
    int view_size = 5;
    Outcome outcome = Outcome::Running;
    Rng rng;

    int size() const { return spec.size; }
    bool in_bounds(Pos p) const { return p.x >= 0 && p.y >= 0 && p.x < size() && p.y < size(); }
    Cell at(Pos p) const { return cells[static_cast<std::size_t>(p.y * size() + p.x)]; }
    Cell& at(Pos p) { return cells[static_cast<std::size_t>(p.y * size() + p.x)]; }
    bool done() const { return outcome != Outcome::Running; }
    Pos front() const;
};

struct Observation {
    int view_size = 5;
    int direction = 0;
    /// view_size * view_size * 3, indexed [row][col][channel]; the agent sits at
    /// (row view_size-1, col view_size/2) looking toward row 0.
    std::vector<std::uint8_t> grid;

    std::uint8_t at(int row, int col, int channel) const {
        return grid[static_cast<std::size_t>((row * view_size + col) * 3 + channel)];
    }
    friend bool operator==(const Observation&, const Observation&) = default;
};

inline constexpr std::array<int, 3> kChannelMax{6, 4, 1};

struct StepResult {
    Observation obs;
    double reward = 0.0;
    bool done = false;
    Outcome outcome = Outcome::Running;
};

/// Seeded procedural layout. Throws ConfigError if the level is too small.
GridState reset(const EnvSpec& spec, std::uint64_t seed, int max_steps, const EnvOptions& options = {});

/// Advances one step in place. Throws ContractViolation if the episode is over.
StepResult step(GridState& state, Action action);

Observation observe(const GridState& state);

/// 1 - 0.9 * taken / max.
double success_reward(int taken_steps, int max_steps);

/// ASCII layout for debugging: '#' wall, 'D'/'d' closed/open door, 'K' key,
/// 'G' goal, 'o' obstacle, '>' 'v' '<' '^' agent, '.' empty.
std::string render(const GridState& state);

/// Global step-budget decay: budgets stay at their defaults until `decay_start`
/// iterations, then shrink linearly over `decay_span` down to `floor`.
struct StepBudgetSchedule {
    std::int64_t decay_start = 500000;
    std::int64_t decay_span = 2000000;
    double floor = 0.15;

    double multiplier(std::int64_t iterations_done) const;
    int max_steps_for(const EnvSpec& spec, std::int64_t iterations_done) const;
};

} // namespace rheacl
