#pragma once

// Independent reference computations shared by the unit and acceptance tests.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <set>
#include <span>
#include <tuple>
#include <vector>

#include "rheacl/gridworld.hpp"

namespace oracle {

/// Central finite difference of f along coordinate i.
inline double central_difference(const std::function<double(const std::vector<double>&)>& f,
                                 std::vector<double> x, std::size_t i, double h) {
    const double x0 = x[i];
    x[i] = x0 + h;
    const double fp = f(x);
    x[i] = x0 - h;
    const double fm = f(x);
    return (fp - fm) / (2.0 * h);
}

/// Relative-error test with an absolute floor.
inline bool gradients_agree(double analytic, double numeric, double rel_tol, double abs_floor) {
    const double diff = std::abs(analytic - numeric);
    return diff <= abs_floor || diff <= rel_tol * std::max(std::abs(analytic), std::abs(numeric));
}

/// sum_j r_j * gamma^j with gamma^j computed by std::pow.
inline double direct_discounted_sum(std::span<const double> rewards, double gamma) {
    double s = 0.0;
    for (std::size_t j = 0; j < rewards.size(); ++j) s += rewards[j] * std::pow(gamma, static_cast<double>(j));
    return s;
}

/// Backward recursion A_t = delta_t + gamma*lambda*(1-done_t)*A_{t+1} for one process.
inline std::vector<double> gae_single(const std::vector<double>& rewards, const std::vector<double>& values,
                                      const std::vector<bool>& dones, double bootstrap, double gamma, double lambda) {
    const std::size_t n = rewards.size();
    std::vector<double> adv(n, 0.0);
    double next_adv = 0.0;
    double next_value = bootstrap;
    for (std::size_t k = n; k-- > 0;) {
        const double mask = dones[k] ? 0.0 : 1.0;
        const double delta = rewards[k] + gamma * next_value * mask - values[k];
        adv[k] = delta + gamma * lambda * mask * next_adv;
        next_adv = adv[k];
        next_value = values[k];
    }
    return adv;
}

/// Natural-order 2-D Sobol point i (not Gray code): x_i = xor of v_k over set bits k of i.
inline std::pair<double, double> sobol_point_natural(std::uint64_t i) {
    // Direction numbers m_k for x+1 computed by the standard recurrence.
    std::array<std::uint64_t, 32> m2{};
    m2[0] = 1;
    for (int k = 1; k < 32; ++k) m2[k] = (2 * m2[k - 1]) ^ m2[k - 1];
    std::uint64_t x = 0;
    std::uint64_t y = 0;
    for (int k = 0; k < 32; ++k) {
        if ((i >> k) & 1u) {
            x ^= std::uint64_t{1} << (31 - k);
            y ^= m2[k] << (31 - k);
        }
    }
    return {static_cast<double>(x) / 4294967296.0, static_cast<double>(y) / 4294967296.0};
}

/// Breadth-first search over (position, direction, carrying key, door open) using
/// only the layout; returns the number of actions of a shortest solution or -1.
inline int doorkey_shortest_solution(const rheacl::GridState& s) {
    using rheacl::Cell;
    const int n = s.size();
    struct Node {
        int x, y, d;
        bool key, open;
    };
    auto id = [&](const Node& a) { return (((a.y * n + a.x) * 4 + a.d) * 2 + a.key) * 2 + a.open; };
    std::vector<int> dist(static_cast<std::size_t>(n * n * 16), -1);
    std::deque<Node> q;
    Node start{s.agent.x, s.agent.y, static_cast<int>(s.dir), s.carrying_key, false};
    dist[static_cast<std::size_t>(id(start))] = 0;
    q.push_back(start);
    static constexpr int dx[4] = {1, 0, -1, 0};
    static constexpr int dy[4] = {0, 1, 0, -1};
    auto cell = [&](int x, int y, const Node& st) {
        Cell c = s.cells[static_cast<std::size_t>(y * n + x)];
        if (c == Cell::DoorClosed && st.open) return Cell::DoorOpen;
        if (c == Cell::Key && st.key) return Cell::Empty;
        return c;
    };
    while (!q.empty()) {
        const Node cur = q.front();
        q.pop_front();
        const int dcur = dist[static_cast<std::size_t>(id(cur))];
        if (s.cells[static_cast<std::size_t>(cur.y * n + cur.x)] == Cell::Goal) return dcur;
        std::vector<Node> next;
        next.push_back({cur.x, cur.y, (cur.d + 3) % 4, cur.key, cur.open});
        next.push_back({cur.x, cur.y, (cur.d + 1) % 4, cur.key, cur.open});
        const int fx = cur.x + dx[cur.d];
        const int fy = cur.y + dy[cur.d];
        if (fx >= 0 && fy >= 0 && fx < n && fy < n) {
            const Cell c = cell(fx, fy, cur);
            if (c == Cell::Empty || c == Cell::Goal || c == Cell::DoorOpen) next.push_back({fx, fy, cur.d, cur.key, cur.open});
            if (c == Cell::Key && !cur.key) next.push_back({cur.x, cur.y, cur.d, true, cur.open});
            if (c == Cell::DoorClosed && cur.key) next.push_back({cur.x, cur.y, cur.d, cur.key, true});
        }
        for (const auto& nx : next) {
            auto& d = dist[static_cast<std::size_t>(id(nx))];
            if (d < 0) {
                d = dcur + 1;
                q.push_back(nx);
            }
        }
    }
    return -1;
}

} // namespace oracle
