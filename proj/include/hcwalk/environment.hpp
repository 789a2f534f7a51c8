#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "lattice.hpp"

namespace hcwalk {

/// Raised for out-of-range run parameters (eps above eps_max, bad times, ...).
class ParameterError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Class of a torus cell: one of the fast components B_1..B_N or one of the
/// astral sites x_1..x_M. Indices are zero-based internally.
struct Label {
    enum class Kind : std::uint8_t { fast, astral };

    Kind kind = Kind::fast;
    int index = 0;

    [[nodiscard]] bool is_fast() const noexcept { return kind == Kind::fast; }
    [[nodiscard]] bool is_astral() const noexcept { return kind == Kind::astral; }

    friend bool operator==(Label const&, Label const&) = default;
};

/// Flat label id in [0, N+M): fast components first, then astral sites.
///
/// This is the several-component numbering {1..N+M} shifted to start at 0.
/// With a single fast component it coincides with the {0, 1..M} numbering in
/// which the fast set is 0 and astral site j is j.
inline int flat_label(Label l, int fast_count) noexcept {
    return l.is_fast() ? l.index : fast_count + l.index;
}

inline Label label_from_flat(int id, int fast_count) noexcept {
    if (id < fast_count) return {Label::Kind::fast, id};
    return {Label::Kind::astral, id - fast_count};
}

/// One-based textual form used in files: "fast:<i>" or "astral:<j>".
inline std::string label_name(Label l) {
    return (l.is_fast() ? "fast:" : "astral:") + std::to_string(l.index + 1);
}

struct SitePartition {
    std::vector<Label> class_of;                       // per cell
    int fast_count = 0;                                // N
    int astral_count = 0;                              // M
    std::vector<std::int64_t> astral_cell;             // x_j, j < M
    std::vector<std::vector<std::int64_t>> fast_cells; // B_i, i < N

    [[nodiscard]] int label_count() const noexcept { return fast_count + astral_count; }
    [[nodiscard]] int flat(std::int64_t cell) const {
        return flat_label(class_of[static_cast<std::size_t>(cell)], fast_count);
    }
};

/// Off-diagonal transition weight from a cell along a nonzero offset.
struct Jump {
    IVec offset;          // xi
    std::int64_t target;  // cell of y + xi
    IVec wrap;            // y + xi = coords(target) + period * wrap
    double p0 = 0.0;
    double v = 0.0;
};

/// Per-cell row of P0 and V; the diagonal entries are derived from row sums.
struct CellRow {
    std::vector<Jump> jumps;
    double p0_stay = 1.0;
    double v_stay = 0.0;
};

struct JumpTable {
    std::vector<CellRow> rows;
    std::int64_t c1 = 1;        // Euclidean range bound
    std::int64_t reach = 1;     // max sup-norm of any offset with nonzero weight
};

struct PeriodicEnvironment {
    TorusGeometry geometry;
    SitePartition partition;
    JumpTable jumps;
    double eps_max = 0.0;
    double eps_ceiling = 1.0;
    std::vector<std::string> warnings;

    [[nodiscard]] std::size_t dim() const noexcept { return geometry.dim(); }
    [[nodiscard]] std::int64_t cell_count() const noexcept { return geometry.cell_count(); }
    [[nodiscard]] CellRow const& row(std::int64_t cell) const {
        return jumps.rows[static_cast<std::size_t>(cell)];
    }
    [[nodiscard]] Label label_of_cell(std::int64_t cell) const {
        return partition.class_of[static_cast<std::size_t>(cell)];
    }

    /// Torus-matrix entry v(y, S) summed over every cell of class `target`
    /// (off-diagonal jumps only; callers never ask for the cell's own class
    /// when that would need the diagonal).
    [[nodiscard]] double v_to_label(std::int64_t cell, int target_flat) const {
        double s = 0.0;
        for (auto const& j : row(cell).jumps)
            if (partition.flat(j.target) == target_flat) s += j.v;
        return s;
    }
};

/// Class of the lattice point z in Z^d, obtained by reducing z modulo the period.
inline Label component_index(PeriodicEnvironment const& env, IVec const& z) {
    if (z.size() != env.dim()) throw std::invalid_argument("component_index: dimension mismatch");
    return env.label_of_cell(env.geometry.cell_of(z));
}

/// Label in the single-fast-component numbering: 0 for the fast set, j for astral site x_j.
inline int single_component_label(Label l) {
    return l.is_fast() ? 0 : l.index + 1;
}

/// Label in the several-component numbering: i for B_i, N + j for astral site x_j.
inline int general_label(Label l, int fast_count) {
    return flat_label(l, fast_count) + 1;
}

}  // namespace hcwalk
