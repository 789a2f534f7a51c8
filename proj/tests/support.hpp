#pragma once

// Test-only helpers: an environment builder, random environment families and
// brute-force oracles that read the builder's raw data instead of the library's
// derived structures.

#include <cstdint>
#include <map>
#include <queue>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include <hcwalk/lattice.hpp>

namespace hcwalk::testing {

inline std::string env_path(std::string const& name) { return std::string(HCWALK_ENV_DIR) + "/" + name; }

/// Raw description of a periodic environment. Pairs are added once and stored
/// in both directions.
struct EnvBuilder {
    IVec period;
    std::map<IVec, std::string> classes;  // cell coordinate -> "astral" / "fast:i"
    std::map<std::pair<IVec, IVec>, std::pair<double, double>> entries;  // (from, offset) -> (p0, v)

    explicit EnvBuilder(IVec p) : period(std::move(p)) {}

    [[nodiscard]] std::size_t dim() const { return period.size(); }

    [[nodiscard]] IVec wrap(IVec z) const {
        for (std::size_t i = 0; i < z.size(); ++i) z[i] = floor_mod(z[i], period[i]);
        return z;
    }

    EnvBuilder& site(IVec c, std::string cls) {
        classes[std::move(c)] = std::move(cls);
        return *this;
    }

    /// Adds (p0, v) to the entry (from, offset) and its mirror (from + offset, -offset).
    EnvBuilder& pair(IVec const& from, IVec const& offset, double p0, double v) {
        IVec a = wrap(from);
        IVec b = from;
        IVec back = offset;
        for (std::size_t i = 0; i < b.size(); ++i) {
            b[i] += offset[i];
            back[i] = -offset[i];
        }
        b = wrap(b);
        auto& e1 = entries[{a, offset}];
        e1.first += p0;
        e1.second += v;
        if (!(a == b && offset == back)) {
            auto& e2 = entries[{b, back}];
            e2.first += p0;
            e2.second += v;
        }
        return *this;
    }

    [[nodiscard]] nlohmann::json to_json() const {
        nlohmann::json doc;
        doc["dim"] = dim();
        doc["period"] = period;
        doc["sites"] = nlohmann::json::array();
        for (auto const& [c, cls] : classes) doc["sites"].push_back({{"coord", c}, {"class", cls}});
        doc["edges"] = nlohmann::json::array();
        for (auto const& [key, val] : entries)
            doc["edges"].push_back({{"from", key.first}, {"offset", key.second}, {"p0", val.first}, {"v", val.second}});
        return doc;
    }

    [[nodiscard]] std::vector<IVec> cells_of(std::string const& cls) const {
        std::vector<IVec> out;
        for (auto const& [c, k] : classes)
            if (k == cls) out.push_back(c);
        return out;
    }
};

/// The two-site one-dimensional example: fast site 0 jumping by +-2, astral site 1.
inline EnvBuilder one_dim_builder() {
    EnvBuilder b({2});
    b.site({0}, "fast:1").site({1}, "astral");
    b.pair({0}, {2}, 0.5, -1.0);
    b.pair({0}, {1}, 0.0, 1.0);
    b.pair({1}, {1}, 0.0, 1.0);
    return b;
}

/// Two one-site fast components on a period-4 line, each jumping by +-4 with
/// probability p, astral sites in between.
inline EnvBuilder two_fast_builder(double p1 = 0.5, double p2 = 0.5) {
    EnvBuilder b({4});
    b.site({0}, "fast:1").site({1}, "astral").site({2}, "fast:2").site({3}, "astral");
    b.pair({0}, {4}, p1, -1.0);
    b.pair({2}, {4}, p2, -1.0);
    for (std::int64_t y = 0; y < 4; ++y) b.pair({y}, {1}, 0.0, 1.0);
    return b;
}

/// 3 x 3 torus with an astral centre and uniform nearest-neighbour conductance c on the ring.
inline EnvBuilder ring_builder(double c = 0.15) {
    EnvBuilder b({3, 3});
    for (std::int64_t x = 0; x < 3; ++x)
        for (std::int64_t y = 0; y < 3; ++y) b.site({x, y}, x == 1 && y == 1 ? "astral" : "fast:1");
    for (std::int64_t x = 0; x < 3; ++x)
        for (std::int64_t y = 0; y < 3; ++y)
            for (IVec off : {IVec{1, 0}, IVec{0, 1}}) {
                IVec t{(x + off[0]) % 3, (y + off[1]) % 3};
                bool astral = (x == 1 && y == 1) || (t[0] == 1 && t[1] == 1);
                b.pair({x, y}, off, astral ? 0.0 : c, astral ? 1.0 : 0.0);
            }
    return b;
}

/// Random valid-by-construction environments. `two_fast` asks for a
/// two-dimensional striped layout with two fast components.
struct RandomEnv {
    EnvBuilder builder{IVec{}};
    int fast_count = 1;
};

inline double draw(std::mt19937_64& g, double lo, double hi) {
    return lo + (hi - lo) * std::uniform_real_distribution<double>(0.0, 1.0)(g);
}

/// One fast component around a few astral cells, nearest-neighbour P0 with
/// random conductances (row sums at most 0.8) plus sparse longer jumps.
inline RandomEnv random_single_component(std::uint64_t seed, int d) {
    std::mt19937_64 g(seed);
    RandomEnv r;
    IVec period(static_cast<std::size_t>(d));
    for (auto& p : period) p = d == 1 ? 3 + static_cast<std::int64_t>(g() % 10) : 3 + static_cast<std::int64_t>(g() % 4);
    EnvBuilder b(period);
    std::int64_t cells = 1;
    for (auto p : period) cells *= p;
    // astral cells: one or two, never adjacent in 1-D so B stays connected
    std::set<std::int64_t> astral;
    std::int64_t first = static_cast<std::int64_t>(g() % static_cast<std::uint64_t>(cells));
    astral.insert(first);
    auto coords = [&](std::int64_t c) {
        IVec z(period.size());
        for (std::size_t i = period.size(); i-- > 0;) {
            z[i] = c % period[i];
            c /= period[i];
        }
        return z;
    };
    if (d == 2 && cells >= 12) {
        auto second = static_cast<std::int64_t>(g() % static_cast<std::uint64_t>(cells));
        IVec a = coords(first), bz = coords(second);
        // different row and column keeps the fast set connected
        if (a[0] != bz[0] && a[1] != bz[1]) astral.insert(second);
    }
    for (std::int64_t c = 0; c < cells; ++c) b.site(coords(c), astral.count(c) ? "astral" : "fast:1");

    auto is_astral = [&](IVec const& z) { return b.classes.at(b.wrap(z)) == "astral"; };
    double const cmax = d == 1 ? 0.35 : 0.18;
    for (std::int64_t c = 0; c < cells; ++c) {
        IVec z = coords(c);
        for (int k = 0; k < d; ++k) {
            IVec off(static_cast<std::size_t>(d), 0);
            off[static_cast<std::size_t>(k)] = 1;
            IVec nb = z;
            nb[static_cast<std::size_t>(k)] += 1;
            bool za = is_astral(z), na = is_astral(nb);
            if (za || na) b.pair(z, off, 0.0, draw(g, 0.3, 1.5));
            else b.pair(z, off, draw(g, 0.05, cmax), 0.0);
        }
    }
    // in 1-D a single astral cell cuts the ring: bridge it with +-2 jumps
    if (d == 1)
        for (auto a : astral) {
            IVec left = coords(floor_mod(a - 1, cells));
            b.pair(left, {2}, draw(g, 0.05, 0.1), 0.0);
        }
    // sparse diagonal jumps in 2-D give the corrector something to do
    if (d == 2)
        for (std::int64_t c = 0; c < cells; ++c) {
            IVec z = coords(c), nb = z;
            nb[0] += 1;
            nb[1] += 1;
            if (!is_astral(z) && !is_astral(nb) && g() % 3 == 0) b.pair(z, {1, 1}, draw(g, 0.01, 0.05), 0.0);
        }
    // a little V between fast cells
    for (std::int64_t c = 0; c < cells; ++c) {
        IVec z = coords(c), nb = z;
        nb[0] += 1;
        if (!is_astral(z) && !is_astral(nb) && g() % 2 == 0) b.pair(z, d == 1 ? IVec{1} : IVec{1, 0}, 0.0, draw(g, 0.0, 0.5));
    }
    r.builder = std::move(b);
    return r;
}

/// Two-dimensional stripes: rows x = 0 and x = 1 (mod 3) are fast components
/// 1 and 2 joined to themselves across periods by (+-3, 0) jumps; row x = 2 is astral.
inline RandomEnv random_two_component(std::uint64_t seed) {
    std::mt19937_64 g(seed);
    std::int64_t const m = 2 + static_cast<std::int64_t>(g() % 4);
    EnvBuilder b({3, m});
    for (std::int64_t y = 0; y < m; ++y) {
        b.site({0, y}, "fast:1").site({1, y}, "fast:2").site({2, y}, "astral");
        for (std::int64_t x = 0; x < 2; ++x) {
            b.pair({x, y}, {0, 1}, draw(g, 0.05, 0.2), 0.0);
            b.pair({x, y}, {3, 0}, draw(g, 0.05, 0.2), 0.0);
            if (g() % 2) b.pair({x, y}, {3, 1}, draw(g, 0.01, 0.05), 0.0);
        }
        b.pair({0, y}, {1, 0}, 0.0, draw(g, 0.2, 1.0));   // fast:1 <-> fast:2
        b.pair({1, y}, {1, 0}, 0.0, draw(g, 0.3, 1.0));   // fast:2 <-> astral
        b.pair({2, y}, {1, 0}, 0.0, draw(g, 0.3, 1.0));   // astral <-> fast:1
    }
    RandomEnv r;
    r.builder = std::move(b);
    r.fast_count = 2;
    return r;
}

struct InvalidCase {
    std::string name;
    nlohmann::json doc;
    std::string expected_check;
};

/// Hand-built invalid environments, each violating exactly the named check first.
inline std::vector<InvalidCase> invalid_catalogue() {
    std::vector<InvalidCase> out;
    auto set = [](EnvBuilder b, IVec from, IVec off, double p0, double v) {
        b.entries[{from, off}] = {p0, v};
        return b;
    };
    out.push_back({"asymmetric_p0", set(one_dim_builder(), {0}, {2}, 0.4, -1.0).to_json(), "symmetry"});
    out.push_back({"asymmetric_v", set(one_dim_builder(), {0}, {1}, 0.0, 1.5).to_json(), "symmetry"});
    {
        auto b = one_dim_builder();
        b.entries.erase({IVec{1}, IVec{-1}});
        out.push_back({"missing_partner", b.to_json(), "symmetry"});
    }
    {
        auto b = one_dim_builder();
        b.entries[{IVec{0}, IVec{2}}].first = 0.6;
        b.entries[{IVec{0}, IVec{-2}}].first = 0.6;
        out.push_back({"row_sum_1d", b.to_json(), "row_sum"});
    }
    out.push_back({"row_sum_2d", ring_builder(0.3).to_json(), "row_sum"});
    out.push_back({"p0_negative", ring_builder().pair({0, 0}, {1, 1}, -0.05, 0.0).to_json(), "p0_range"});
    {
        auto b = one_dim_builder();
        b.entries[{IVec{0}, IVec{2}}].first = 1.5;
        b.entries[{IVec{0}, IVec{-2}}].first = 1.5;
        out.push_back({"p0_above_one", b.to_json(), "p0_range"});
    }
    out.push_back({"v_negative_off_block", one_dim_builder().pair({0}, {1}, 0.0, -2.0).to_json(), "v_nonnegative"});
    {
        // the compensating V on the fast jumps removed: the fast diagonal goes negative
        auto b = one_dim_builder();
        b.entries[{IVec{0}, IVec{2}}].second = 0.0;
        b.entries[{IVec{0}, IVec{-2}}].second = 0.0;
        out.push_back({"negative_diagonal", b.to_json(), "eps_max_positive"});
    }
    {
        EnvBuilder b({2});
        b.site({0}, "fast:1").site({1}, "astral");
        b.pair({0}, {1}, 0.0, 1.0).pair({1}, {1}, 0.0, 1.0);
        out.push_back({"bounded_fast_site", b.to_json(), "lift_connectivity"});
    }
    {
        // fast columns x = 2, 3 (mod 3) form bounded strips
        EnvBuilder b({3, 3});
        for (std::int64_t x = 0; x < 3; ++x)
            for (std::int64_t y = 0; y < 3; ++y) b.site({x, y}, x == 1 ? "astral" : "fast:1");
        for (std::int64_t y = 0; y < 3; ++y) {
            b.pair({0, y}, {0, 1}, 0.2, 0.0).pair({2, y}, {0, 1}, 0.2, 0.0).pair({2, y}, {1, 0}, 0.2, 0.0);
            b.pair({0, y}, {1, 0}, 0.0, 1.0).pair({1, y}, {1, 0}, 0.0, 1.0);
        }
        out.push_back({"strip_lift", b.to_json(), "lift_connectivity"});
    }
    {
        EnvBuilder b({4});
        b.site({0}, "fast:1").site({1}, "astral").site({2}, "fast:1").site({3}, "astral");
        b.pair({0}, {4}, 0.5, -1.0).pair({2}, {4}, 0.5, -1.0);
        for (std::int64_t y = 0; y < 4; ++y) b.pair({y}, {1}, 0.0, 1.0);
        out.push_back({"split_component", b.to_json(), "lift_connectivity"});
    }
    {
        auto b = ring_builder();
        b.entries.clear();
        for (std::int64_t x = 0; x < 3; ++x)
            for (std::int64_t y = 0; y < 3; ++y)
                for (IVec off : {IVec{1, 0}, IVec{0, 1}}) {
                    IVec t{(x + off[0]) % 3, (y + off[1]) % 3};
                    if (!((x == 1 && y == 1) || (t[0] == 1 && t[1] == 1))) b.pair({x, y}, off, 0.15, 0.0);
                }
        out.push_back({"isolated_astral", b.to_json(), "irreducibility"});
    }
    out.push_back({"fast_fast_coupling", two_fast_builder(0.4, 0.4).pair({0}, {2}, 0.1, 0.0).to_json(), "p0_block_structure"});
    {
        auto b = one_dim_builder();
        b.entries[{IVec{0}, IVec{2}}].first = 0.4;
        b.entries[{IVec{0}, IVec{-2}}].first = 0.4;
        out.push_back({"fast_astral_p0", b.pair({0}, {1}, 0.1, 0.0).to_json(), "p0_block_structure"});
    }
    out.push_back({"stripe_coupling", random_two_component(7).builder.pair({0, 0}, {1, 0}, 0.05, 0.0).to_json(),
                   "p0_block_structure"});
    {
        EnvBuilder b({2});
        b.site({0}, "astral").site({1}, "astral");
        b.pair({0}, {1}, 0.0, 1.0).pair({1}, {1}, 0.0, 1.0);
        out.push_back({"astral_only", b.to_json(), "partition_nonempty"});
    }
    {
        auto doc = one_dim_builder().to_json();
        doc["sites"].erase(1);
        out.push_back({"unlisted_cell", doc, "site_coverage"});
    }
    {
        auto doc = one_dim_builder().to_json();
        doc["edges"].push_back({{"from", {0}}, {"offset", {0}}, {"p0", 0.1}, {"v", 0.0}});
        out.push_back({"zero_offset", doc, "offset_valid"});
    }
    {
        auto doc = one_dim_builder().to_json();
        doc.erase("edges");
        out.push_back({"missing_edges", doc, "schema"});
    }
    return out;
}

// ---------------------------------------------------------------------------
// Oracles

/// Dense I - P0 and right-hand sides for one fast component, assembled from
/// the builder entries (cell order: lexicographic order of coordinates).
struct DenseComponent {
    std::vector<IVec> cells;
    std::map<IVec, int> index;
    Eigen::MatrixXd K;
};

inline DenseComponent dense_component(EnvBuilder const& b, std::string const& cls) {
    DenseComponent c;
    c.cells = b.cells_of(cls);
    for (std::size_t i = 0; i < c.cells.size(); ++i) c.index[c.cells[i]] = static_cast<int>(i);
    auto n = static_cast<Eigen::Index>(c.cells.size());
    c.K = Eigen::MatrixXd::Identity(n, n);
    Eigen::VectorXd stay = Eigen::VectorXd::Ones(n);
    for (auto const& [key, val] : b.entries) {
        auto it = c.index.find(key.first);
        if (it == c.index.end() || val.first == 0.0) continue;
        IVec t = key.first;
        for (std::size_t i = 0; i < t.size(); ++i) t[i] += key.second[i];
        c.K(it->second, c.index.at(b.wrap(t))) -= val.first;
        stay(it->second) -= val.first;
    }
    for (Eigen::Index i = 0; i < n; ++i) c.K(i, i) -= stay(i);
    return c;
}

/// Zero-mean solution of K u = rhs for symmetric K with kernel = constants and
/// mean-zero rhs: K + 11^T / n is nonsingular and has the same solution.
inline Eigen::VectorXd min_norm_solve(Eigen::MatrixXd const& K, Eigen::VectorXd const& rhs) {
    auto const n = K.rows();
    Eigen::MatrixXd A = K + Eigen::MatrixXd::Constant(n, n, 1.0 / static_cast<double>(n));
    return A.fullPivLu().solve(rhs);
}

/// Oracle h (rows follow c.cells): drift built from the raw entries.
inline Eigen::MatrixXd oracle_h(EnvBuilder const& b, DenseComponent const& c) {
    auto const d = static_cast<Eigen::Index>(b.dim());
    Eigen::MatrixXd drift = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(c.cells.size()), d);
    for (auto const& [key, val] : b.entries) {
        auto it = c.index.find(key.first);
        if (it == c.index.end()) continue;
        for (Eigen::Index k = 0; k < d; ++k)
            drift(it->second, k) += val.first * static_cast<double>(key.second[static_cast<std::size_t>(k)]);
    }
    Eigen::MatrixXd h(drift.rows(), d);
    for (Eigen::Index k = 0; k < d; ++k) h.col(k) = min_norm_solve(c.K, drift.col(k));
    return h;
}

/// Oracle Phi blocks and Theta from an oracle h.
inline std::pair<Eigen::MatrixXd, Eigen::MatrixXd> oracle_phi_theta(EnvBuilder const& b, DenseComponent const& c,
                                                                     Eigen::MatrixXd const& h) {
    auto const d = static_cast<Eigen::Index>(b.dim());
    Eigen::MatrixXd phi = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(c.cells.size()), d * d);
    for (auto const& [key, val] : b.entries) {
        auto it = c.index.find(key.first);
        if (it == c.index.end() || val.first == 0.0) continue;
        IVec t = key.first;
        for (std::size_t i = 0; i < t.size(); ++i) t[i] += key.second[i];
        int tj = c.index.at(b.wrap(t));
        for (Eigen::Index a = 0; a < d; ++a)
            for (Eigen::Index bb = 0; bb < d; ++bb) {
                double xa = static_cast<double>(key.second[static_cast<std::size_t>(a)]);
                double xb = static_cast<double>(key.second[static_cast<std::size_t>(bb)]);
                phi(it->second, a * d + bb) += val.first * xa * (0.5 * xb + h(tj, bb));
            }
    }
    Eigen::MatrixXd theta(d, d);
    for (Eigen::Index a = 0; a < d; ++a)
        for (Eigen::Index bb = 0; bb < d; ++bb) theta(a, bb) = phi.col(a * d + bb).mean();
    return {phi, 0.5 * (theta + theta.transpose())};
}

inline Eigen::MatrixXd oracle_g(DenseComponent const& c, Eigen::MatrixXd const& phi, Eigen::MatrixXd const& theta) {
    auto const d = theta.rows();
    Eigen::MatrixXd g(phi.rows(), d * d);
    for (Eigen::Index a = 0; a < d; ++a)
        for (Eigen::Index bb = 0; bb < d; ++bb) {
            Eigen::VectorXd rhs = 0.5 * (phi.col(a * d + bb) + phi.col(bb * d + a));
            rhs.array() -= theta(a, bb);
            g.col(a * d + bb) = min_norm_solve(c.K, rhs);
        }
    return g;
}

/// Sum of v from each component cell into cells of class `target`.
inline Eigen::VectorXd v_into(EnvBuilder const& b, DenseComponent const& c, std::string const& target_cls,
                              IVec const* target_cell = nullptr) {
    Eigen::VectorXd out = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(c.cells.size()));
    for (auto const& [key, val] : b.entries) {
        auto it = c.index.find(key.first);
        if (it == c.index.end()) continue;
        IVec t = key.first;
        for (std::size_t i = 0; i < t.size(); ++i) t[i] += key.second[i];
        t = b.wrap(t);
        if (target_cell ? t == *target_cell : b.classes.at(t) == target_cls) out(it->second) += val.second;
    }
    return out;
}

/// Oracle exchange corrector toward a set S: K q = mean(v(., S)) - v(., S).
inline Eigen::VectorXd oracle_q(DenseComponent const& c, Eigen::VectorXd const& v_to_set) {
    Eigen::VectorXd rhs = Eigen::VectorXd::Constant(v_to_set.size(), v_to_set.mean()) - v_to_set;
    return min_norm_solve(c.K, rhs);
}

/// Finite-window flood fill: is the lift of `cls` under P0 connected and
/// unbounded? Starting from one lattice site of the class, every cell of the
/// class and every period translate e_k * period_k must be reachable inside
/// a window of `periods` periods around it.
inline bool window_lift_connected(EnvBuilder const& b, std::string const& cls, int periods = 4) {
    auto cells = b.cells_of(cls);
    if (cells.empty()) return false;
    std::size_t const d = b.dim();
    IVec lo(d), hi(d);
    for (std::size_t i = 0; i < d; ++i) {
        lo[i] = -periods * b.period[i];
        hi[i] = (periods + 1) * b.period[i];
    }
    auto inside = [&](IVec const& z) {
        for (std::size_t i = 0; i < d; ++i)
            if (z[i] < lo[i] || z[i] >= hi[i]) return false;
        return true;
    };
    std::set<IVec> seen{cells.front()};
    std::queue<IVec> todo;
    todo.push(cells.front());
    while (!todo.empty()) {
        IVec z = todo.front();
        todo.pop();
        IVec w = b.wrap(z);
        for (auto const& [key, val] : b.entries) {
            if (key.first != w || val.first <= 0.0) continue;
            IVec nb = z;
            for (std::size_t i = 0; i < d; ++i) nb[i] += key.second[i];
            if (!inside(nb) || b.classes.at(b.wrap(nb)) != cls) continue;
            if (seen.insert(nb).second) todo.push(nb);
        }
    }
    std::set<IVec> reached;
    for (auto const& z : seen) reached.insert(b.wrap(z));
    for (auto const& c : cells)
        if (!reached.count(c)) return false;
    for (std::size_t k = 0; k < d; ++k) {
        IVec t = cells.front();
        t[k] += b.period[k];
        if (!seen.count(t)) return false;
    }
    return true;
}

}  // namespace hcwalk::testing
