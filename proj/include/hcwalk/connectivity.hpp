#pragma once

#include <cstdint>
#include <cstdlib>
#include <functional>
#include <queue>
#include <string>
#include <vector>

#include "environment.hpp"

namespace hcwalk {

enum class LiftVerdict { connected_unbounded, disconnected, bounded };

inline std::string to_string(LiftVerdict v) {
    switch (v) {
        case LiftVerdict::connected_unbounded: return "connected_unbounded";
        case LiftVerdict::disconnected: return "disconnected";
        case LiftVerdict::bounded: return "bounded";
    }
    return "unknown";
}

/// Integer lattice spanned by a set of generators, kept in row echelon form.
class IntegerLattice {
public:
    explicit IntegerLattice(std::size_t dim) : dim_(dim) {}

    void add(IVec g) {
        bool nonzero = false;
        for (auto c : g) nonzero = nonzero || c != 0;
        if (nonzero) gens_.push_back(std::move(g));
    }

    /// Reduces the generators to echelon form. Each column is cleared with a
    /// Euclidean gcd sweep so the pivots stay integral.
    void reduce() {
        std::size_t r = 0;
        for (std::size_t col = 0; col < dim_ && r < gens_.size(); ++col) {
            for (;;) {
                std::size_t best = gens_.size();
                for (std::size_t i = r; i < gens_.size(); ++i)
                    if (gens_[i][col] != 0 &&
                        (best == gens_.size() || std::llabs(gens_[i][col]) < std::llabs(gens_[best][col])))
                        best = i;
                if (best == gens_.size()) break;
                std::swap(gens_[r], gens_[best]);
                bool done = true;
                for (std::size_t i = r + 1; i < gens_.size(); ++i) {
                    if (gens_[i][col] == 0) continue;
                    auto q = gens_[i][col] / gens_[r][col];
                    for (std::size_t k = 0; k < dim_; ++k) gens_[i][k] -= q * gens_[r][k];
                    if (gens_[i][col] != 0) done = false;
                }
                if (done) break;
            }
            if (gens_[r][col] != 0) ++r;
        }
        gens_.resize(r);
    }

    [[nodiscard]] std::size_t rank() const noexcept { return gens_.size(); }

    /// Index [Z^d : H] when full rank, 0 otherwise. Valid after reduce().
    [[nodiscard]] std::int64_t index() const {
        if (gens_.size() != dim_) return 0;
        std::int64_t idx = 1;
        for (std::size_t r = 0, col = 0; r < gens_.size(); ++r) {
            while (gens_[r][col] == 0) ++col;
            idx *= std::llabs(gens_[r][col]);
        }
        return idx;
    }

    [[nodiscard]] bool is_full() const { return index() == 1; }
    [[nodiscard]] std::vector<IVec> const& basis() const noexcept { return gens_; }

private:
    std::size_t dim_;
    std::vector<IVec> gens_;
};

struct VoltageSummary {
    bool quotient_connected = false;
    std::size_t rank = 0;
    std::int64_t index = 0;
};

/// Builds the quotient graph on `cells` (edges filtered by `use`), assigns
/// spanning-tree potentials, and reduces the lattice of cycle voltages.
inline VoltageSummary voltage_lattice(PeriodicEnvironment const& env,
                                      std::vector<std::int64_t> const& cells,
                                      std::function<bool(std::int64_t, Jump const&)> const& use) {
    VoltageSummary out;
    auto const d = env.dim();
    IntegerLattice lattice(d);
    if (cells.empty()) return out;

    std::vector<char> member(static_cast<std::size_t>(env.cell_count()), 0);
    for (auto c : cells) member[static_cast<std::size_t>(c)] = 1;

    std::vector<IVec> potential(static_cast<std::size_t>(env.cell_count()));
    std::vector<char> seen(static_cast<std::size_t>(env.cell_count()), 0);
    std::queue<std::int64_t> frontier;
    frontier.push(cells.front());
    seen[static_cast<std::size_t>(cells.front())] = 1;
    potential[static_cast<std::size_t>(cells.front())] = IVec(d, 0);
    std::size_t visited = 1;

    // every edge is visited from both ends; generators are duplicated, which is harmless
    while (!frontier.empty()) {
        auto y = frontier.front();
        frontier.pop();
        auto const& py = potential[static_cast<std::size_t>(y)];
        for (auto const& j : env.row(y).jumps) {
            if (!member[static_cast<std::size_t>(j.target)] || !use(y, j)) continue;
            IVec reach(d);
            for (std::size_t k = 0; k < d; ++k) reach[k] = py[k] + j.wrap[k];
            auto t = static_cast<std::size_t>(j.target);
            if (!seen[t]) {
                seen[t] = 1;
                potential[t] = std::move(reach);
                frontier.push(j.target);
                ++visited;
            } else {
                IVec cyc(d);
                for (std::size_t k = 0; k < d; ++k) cyc[k] = reach[k] - potential[t][k];
                lattice.add(std::move(cyc));
            }
        }
    }
    lattice.reduce();
    out.quotient_connected = visited == cells.size();
    out.rank = lattice.rank();
    out.index = lattice.index();
    return out;
}

/// Decides, for each fast component, whether its periodic lift under P0 is
/// connected and unbounded.
inline std::vector<LiftVerdict> lift_connectivity(PeriodicEnvironment const& env) {
    std::vector<LiftVerdict> out;
    for (auto const& cells : env.partition.fast_cells) {
        auto s = voltage_lattice(env, cells, [](std::int64_t, Jump const& j) { return j.p0 > 0.0; });
        if (!s.quotient_connected) out.push_back(LiftVerdict::disconnected);
        else if (s.rank == 0) out.push_back(LiftVerdict::bounded);
        else if (s.index == 1) out.push_back(LiftVerdict::connected_unbounded);
        else out.push_back(LiftVerdict::disconnected);
    }
    return out;
}

/// Irreducibility of the full walk on Z^d: every edge carrying p0 > 0 or
/// v > 0 is usable for some small eps.
inline bool walk_irreducible(PeriodicEnvironment const& env) {
    std::vector<std::int64_t> all(static_cast<std::size_t>(env.cell_count()));
    for (std::int64_t c = 0; c < env.cell_count(); ++c) all[static_cast<std::size_t>(c)] = c;
    auto s = voltage_lattice(env, all, [](std::int64_t, Jump const& j) { return j.p0 > 0.0 || j.v > 0.0; });
    return s.quotient_connected && s.index == 1;
}

}  // namespace hcwalk
