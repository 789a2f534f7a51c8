#pragma once

#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "connectivity.hpp"
#include "environment.hpp"
#include "rates.hpp"

namespace hcwalk {

/// Absolute tolerance for every comparison made while validating an environment.
inline constexpr double kEnvTolerance = 1e-12;

struct CheckResult {
    std::string name;
    bool passed = true;
    std::string detail;
};

struct ValidationReport {
    std::vector<CheckResult> checks;
    std::vector<std::string> warnings;

    [[nodiscard]] bool ok() const {
        for (auto const& c : checks)
            if (!c.passed) return false;
        return true;
    }
    [[nodiscard]] CheckResult const* first_failure() const {
        for (auto const& c : checks)
            if (!c.passed) return &c;
        return nullptr;
    }
};

/// Raised when an environment document violates a named check.
class ValidationError : public std::runtime_error {
public:
    ValidationError(std::string check, std::string const& detail)
        : std::runtime_error(check + ": " + detail), check_(std::move(check)) {}
    [[nodiscard]] std::string const& check() const noexcept { return check_; }

private:
    std::string check_;
};

namespace detail {

class Checker {
public:
    explicit Checker(ValidationReport& rep) : rep_(rep) {}

    // Records one check; returns whether it passed.
    bool record(std::string name, std::vector<std::string> const& failures) {
        CheckResult c{std::move(name), failures.empty(), {}};
        for (std::size_t i = 0; i < failures.size() && i < 4; ++i) {
            if (i) c.detail += "; ";
            c.detail += failures[i];
        }
        if (failures.size() > 4) c.detail += "; ... (" + std::to_string(failures.size()) + " total)";
        rep_.checks.push_back(std::move(c));
        return failures.empty();
    }

private:
    ValidationReport& rep_;
};

inline IVec read_ivec(nlohmann::json const& j) {
    if (!j.is_array()) throw std::invalid_argument("expected integer array");
    IVec out;
    for (auto const& e : j) {
        if (!e.is_number_integer()) throw std::invalid_argument("expected integer array");
        out.push_back(e.get<std::int64_t>());
    }
    return out;
}

struct RawEdge {
    IVec from;
    IVec offset;
    double p0 = 0.0;
    double v = 0.0;
};

}  // namespace detail

/// Runs every environment check against a parsed document. On success `out`
/// holds the validated environment.
inline ValidationReport validate_document(nlohmann::json const& doc, PeriodicEnvironment* out = nullptr) {
    using nlohmann::json;
    ValidationReport rep;
    detail::Checker chk(rep);
    PeriodicEnvironment env;

    // schema
    std::vector<std::string> fail;
    std::int64_t dim = 0;
    IVec period;
    std::vector<std::pair<IVec, std::string>> sites;
    std::vector<detail::RawEdge> edges;
    std::int64_t c1_declared = 0;
    try {
        if (!doc.is_object()) throw std::invalid_argument("document must be an object");
        for (auto key : {"dim", "period", "sites", "edges"})
            if (!doc.contains(key)) throw std::invalid_argument(std::string("missing field '") + key + "'");
        if (!doc["dim"].is_number_integer()) throw std::invalid_argument("'dim' must be an integer");
        dim = doc["dim"].get<std::int64_t>();
        period = detail::read_ivec(doc["period"]);
        if (!doc["sites"].is_array() || !doc["edges"].is_array())
            throw std::invalid_argument("'sites' and 'edges' must be arrays");
        for (auto const& s : doc["sites"]) {
            if (!s.is_object() || !s.contains("coord") || !s.contains("class") || !s["class"].is_string())
                throw std::invalid_argument("site entries need 'coord' and string 'class'");
            sites.emplace_back(detail::read_ivec(s["coord"]), s["class"].get<std::string>());
        }
        for (auto const& e : doc["edges"]) {
            if (!e.is_object() || !e.contains("from") || !e.contains("offset") || !e.contains("p0") ||
                !e.contains("v") || !e["p0"].is_number() || !e["v"].is_number())
                throw std::invalid_argument("edge entries need 'from', 'offset', numeric 'p0' and 'v'");
            edges.push_back({detail::read_ivec(e["from"]), detail::read_ivec(e["offset"]),
                             e["p0"].get<double>(), e["v"].get<double>()});
        }
        if (doc.contains("eps_ceiling")) {
            if (!doc["eps_ceiling"].is_number() || doc["eps_ceiling"].get<double>() <= 0.0)
                throw std::invalid_argument("'eps_ceiling' must be a positive number");
            env.eps_ceiling = doc["eps_ceiling"].get<double>();
        }
        if (doc.contains("c1")) {
            if (!doc["c1"].is_number_integer() || doc["c1"].get<std::int64_t>() < 1)
                throw std::invalid_argument("'c1' must be a positive integer");
            c1_declared = doc["c1"].get<std::int64_t>();
        }
    } catch (std::exception const& e) {
        fail.push_back(e.what());
    }
    if (!chk.record("schema", fail)) return rep;

    // geometry
    fail.clear();
    if (dim < 1) fail.push_back("dim must be >= 1");
    if (static_cast<std::int64_t>(period.size()) != dim) fail.push_back("period length differs from dim");
    for (auto p : period)
        if (p < 1) fail.push_back("period entries must be >= 1");
    if (!chk.record("geometry", fail)) return rep;
    env.geometry = TorusGeometry(period);
    auto const& geo = env.geometry;
    auto const ncell = static_cast<std::size_t>(geo.cell_count());

    // site_coverage: every cell listed exactly once with a recognised class
    fail.clear();
    std::vector<int> listed(ncell, 0);
    std::vector<std::string> cls(ncell);
    std::vector<std::size_t> order(ncell, 0);
    for (std::size_t i = 0; i < sites.size(); ++i) {
        auto const& [coord, c] = sites[i];
        if (!geo.in_cell_range(coord)) {
            fail.push_back("site " + to_string(coord) + " outside the period cell");
            continue;
        }
        auto cell = static_cast<std::size_t>(geo.cell_of(coord));
        if (listed[cell]++) fail.push_back("site " + to_string(coord) + " listed twice");
        cls[cell] = c;
        order[cell] = i;
        bool good = c == "astral";
        if (c.rfind("fast:", 0) == 0) {
            try {
                std::size_t pos = 0;
                int i_fast = std::stoi(c.substr(5), &pos);
                good = pos == c.size() - 5 && i_fast >= 1;
            } catch (...) {
                good = false;
            }
        }
        if (!good) fail.push_back("site " + to_string(coord) + " has unknown class '" + c + "'");
    }
    for (std::size_t cell = 0; cell < ncell; ++cell)
        if (!listed[cell]) fail.push_back("cell " + to_string(geo.coords(static_cast<std::int64_t>(cell))) + " not listed");
    if (!chk.record("site_coverage", fail)) return rep;

    // partition_nonempty
    fail.clear();
    auto& part = env.partition;
    part.class_of.resize(ncell);
    int max_fast = 0;
    std::vector<std::pair<std::size_t, std::int64_t>> astral_by_order;
    for (std::size_t cell = 0; cell < ncell; ++cell) {
        if (cls[cell] == "astral") {
            astral_by_order.emplace_back(order[cell], static_cast<std::int64_t>(cell));
        } else {
            int i_fast = std::stoi(cls[cell].substr(5));
            max_fast = std::max(max_fast, i_fast);
            part.class_of[cell] = {Label::Kind::fast, i_fast - 1};
        }
    }
    if (astral_by_order.empty()) fail.push_back("astral set A is empty");
    if (max_fast == 0) fail.push_back("fast set B is empty");
    if (!chk.record("partition_nonempty", fail)) return rep;

    // fast_labels: fast:1..fast:N all used
    fail.clear();
    std::sort(astral_by_order.begin(), astral_by_order.end());
    part.astral_count = static_cast<int>(astral_by_order.size());
    for (std::size_t j = 0; j < astral_by_order.size(); ++j) {
        auto cell = astral_by_order[j].second;
        part.class_of[static_cast<std::size_t>(cell)] = {Label::Kind::astral, static_cast<int>(j)};
        part.astral_cell.push_back(cell);
    }
    part.fast_count = max_fast;
    part.fast_cells.assign(static_cast<std::size_t>(max_fast), {});
    for (std::size_t cell = 0; cell < ncell; ++cell)
        if (part.class_of[cell].is_fast())
            part.fast_cells[static_cast<std::size_t>(part.class_of[cell].index)].push_back(static_cast<std::int64_t>(cell));
    for (int i = 0; i < max_fast; ++i)
        if (part.fast_cells[static_cast<std::size_t>(i)].empty())
            fail.push_back("fast component fast:" + std::to_string(i + 1) + " has no cells");
    if (!chk.record("fast_labels", fail)) return rep;

    // offset_valid: well-formed, nonzero, unique per (cell, offset)
    fail.clear();
    std::map<std::pair<std::int64_t, IVec>, std::size_t> index;
    for (std::size_t e = 0; e < edges.size(); ++e) {
        auto const& ed = edges[e];
        if (!geo.in_cell_range(ed.from)) {
            fail.push_back("edge from " + to_string(ed.from) + " outside the period cell");
            continue;
        }
        if (static_cast<std::int64_t>(ed.offset.size()) != dim) {
            fail.push_back("edge at " + to_string(ed.from) + " has offset of wrong dimension");
            continue;
        }
        if (sup_norm(ed.offset) == 0) {
            fail.push_back("edge at " + to_string(ed.from) + " has zero offset (diagonal entries are derived)");
            continue;
        }
        if (!std::isfinite(ed.p0) || !std::isfinite(ed.v)) {
            fail.push_back("edge at " + to_string(ed.from) + " has non-finite weight");
            continue;
        }
        auto key = std::make_pair(geo.cell_of(ed.from), ed.offset);
        if (!index.emplace(key, e).second)
            fail.push_back("duplicate edge (cell " + to_string(ed.from) + ", offset " + to_string(ed.offset) + ")");
    }
    if (!chk.record("offset_valid", fail)) return rep;

    // finite_range
    fail.clear();
    std::int64_t c1 = 1, reach = 1;
    for (auto const& ed : edges) {
        if (ed.p0 == 0.0 && ed.v == 0.0) continue;
        auto n = euclid_norm(ed.offset);
        c1 = std::max(c1, static_cast<std::int64_t>(std::ceil(n - 1e-9)));
        reach = std::max(reach, sup_norm(ed.offset));
        if (c1_declared > 0 && n > static_cast<double>(c1_declared) + 1e-9)
            fail.push_back("edge (cell " + to_string(ed.from) + ", offset " + to_string(ed.offset) +
                           ") exceeds range bound c1 = " + std::to_string(c1_declared));
    }
    if (c1_declared > 0) c1 = c1_declared;
    if (!chk.record("finite_range", fail)) return rep;
    env.jumps.c1 = c1;
    env.jumps.reach = reach;

    // value checks; all are evaluated before bailing out
    bool values_ok = true;
    auto where = [&](detail::RawEdge const& ed) {
        return "(cell " + to_string(ed.from) + ", offset " + to_string(ed.offset) + ")";
    };

    fail.clear();
    for (auto const& ed : edges)
        if (ed.p0 < -kEnvTolerance || ed.p0 > 1.0 + kEnvTolerance) fail.push_back("p0 out of [0,1] at " + where(ed));
    values_ok &= chk.record("p0_range", fail);

    fail.clear();
    IVec wrap;
    for (auto const& ed : edges) {
        IVec dest(ed.offset.size());
        for (std::size_t k = 0; k < dest.size(); ++k) dest[k] = ed.from[k] + ed.offset[k];
        auto tcell = geo.split(dest, wrap);
        IVec back(ed.offset.size());
        for (std::size_t k = 0; k < back.size(); ++k) back[k] = -ed.offset[k];
        auto it = index.find({tcell, back});
        double p0b = 0.0, vb = 0.0;
        if (it != index.end()) {
            p0b = edges[it->second].p0;
            vb = edges[it->second].v;
        }
        if (std::abs(ed.p0 - p0b) > kEnvTolerance || std::abs(ed.v - vb) > kEnvTolerance)
            fail.push_back("symmetry violation at " + where(ed) + ": partner " + to_string(geo.coords(tcell)) + " " +
                           to_string(back) + (it == index.end() ? " missing" : " differs"));
    }
    values_ok &= chk.record("symmetry", fail);

    // assemble rows; diagonals from row sums
    auto& rows = env.jumps.rows;
    rows.assign(ncell, {});
    for (auto const& ed : edges) {
        if (ed.p0 == 0.0 && ed.v == 0.0) continue;
        auto cell = static_cast<std::size_t>(geo.cell_of(ed.from));
        IVec dest(ed.offset.size());
        for (std::size_t k = 0; k < dest.size(); ++k) dest[k] = ed.from[k] + ed.offset[k];
        Jump j;
        j.offset = ed.offset;
        j.target = geo.split(dest, j.wrap);
        j.p0 = ed.p0;
        j.v = ed.v;
        rows[cell].jumps.push_back(std::move(j));
    }
    fail.clear();
    for (std::size_t cell = 0; cell < ncell; ++cell) {
        auto& row = rows[cell];
        // deterministic order independent of file order
        std::sort(row.jumps.begin(), row.jumps.end(), [](Jump const& a, Jump const& b) { return a.offset < b.offset; });
        double sp = 0.0, sv = 0.0;
        for (auto const& j : row.jumps) {
            sp += j.p0;
            sv += j.v;
        }
        row.p0_stay = 1.0 - sp;
        row.v_stay = -sv;
        if (row.p0_stay < -kEnvTolerance || row.p0_stay > 1.0 + kEnvTolerance)
            fail.push_back("diagonal p0 at cell " + to_string(geo.coords(static_cast<std::int64_t>(cell))) + " = " +
                           std::to_string(row.p0_stay) + " not in [0,1]");
        row.p0_stay = std::clamp(row.p0_stay, 0.0, 1.0);
    }
    values_ok &= chk.record("row_sum", fail);

    fail.clear();
    for (std::size_t cell = 0; cell < ncell; ++cell) {
        auto from = part.class_of[cell];
        for (auto const& j : rows[cell].jumps) {
            if (j.p0 <= 0.0) continue;
            auto to = part.class_of[static_cast<std::size_t>(j.target)];
            auto here = "(cell " + to_string(geo.coords(static_cast<std::int64_t>(cell))) + ", offset " + to_string(j.offset) + ")";
            if (from.is_astral() || to.is_astral())
                fail.push_back("p0 > 0 touching an astral site at " + here);
            else if (from.index != to.index)
                fail.push_back("p0 > 0 between " + label_name(from) + " and " + label_name(to) + " at " + here);
        }
    }
    values_ok &= chk.record("p0_block_structure", fail);

    fail.clear();
    for (std::size_t cell = 0; cell < ncell; ++cell)
        for (auto const& j : rows[cell].jumps)
            if (j.p0 <= kEnvTolerance && j.v < -kEnvTolerance)
                fail.push_back("v < 0 where p0 = 0 at (cell " + to_string(geo.coords(static_cast<std::int64_t>(cell))) +
                               ", offset " + to_string(j.offset) + ")");
    values_ok &= chk.record("v_nonnegative", fail);
    if (!values_ok) return rep;

    // eps_max: largest eps keeping every entry of P0 + eps^2 V inside [0,1]
    fail.clear();
    double eps_max = env.eps_ceiling;
    std::string limiter;
    auto bound = [&](double p0, double v, std::string const& what) {
        double e = eps_max;
        if (v < 0.0) e = std::sqrt(std::max(p0, 0.0) / -v);
        else if (v > 0.0) e = std::sqrt(std::max(1.0 - p0, 0.0) / v);
        if (e < eps_max) {
            eps_max = e;
            limiter = what;
        }
    };
    for (std::size_t cell = 0; cell < ncell; ++cell) {
        auto c = to_string(geo.coords(static_cast<std::int64_t>(cell)));
        for (auto const& j : rows[cell].jumps) bound(j.p0, j.v, "(cell " + c + ", offset " + to_string(j.offset) + ")");
        bound(rows[cell].p0_stay, rows[cell].v_stay, "diagonal at cell " + c);
    }
    env.eps_max = eps_max;
    if (!(eps_max > kEnvTolerance)) fail.push_back("eps_max = " + std::to_string(eps_max) + ", limited by " + limiter);
    if (!chk.record("eps_max_positive", fail)) return rep;

    fail.clear();
    auto verdicts = lift_connectivity(env);
    for (std::size_t i = 0; i < verdicts.size(); ++i)
        if (verdicts[i] != LiftVerdict::connected_unbounded)
            fail.push_back("fast:" + std::to_string(i + 1) + " lift is " + to_string(verdicts[i]));
    if (!chk.record("lift_connectivity", fail)) return rep;

    fail.clear();
    if (!walk_irreducible(env)) fail.push_back("walk is reducible on Z^d under edges with p0 > 0 or v > 0");
    if (!chk.record("irreducibility", fail)) return rep;

    fail.clear();
    auto rates = compute_rates(env);
    for (int k = 0; k < rates.size(); ++k) {
        auto name = label_name(label_from_flat(k, part.fast_count));
        if (!(rates.lambda(k) > kEnvTolerance)) fail.push_back("lambda(" + name + ") = 0");
        for (int l = 0; l < rates.size(); ++l)
            if (l != k && rates.alpha(k, l) < -kEnvTolerance)
                fail.push_back("alpha(" + name + ", " + label_name(label_from_flat(l, part.fast_count)) + ") < 0");
    }
    if (!chk.record("rates_positive", fail)) return rep;
    for (int k = 0; k < rates.size(); ++k)
        for (int l = 0; l < rates.size(); ++l)
            if (l != k && rates.alpha(k, l) <= kEnvTolerance)
                rep.warnings.push_back("alpha(" + label_name(label_from_flat(k, part.fast_count)) + ", " +
                                       label_name(label_from_flat(l, part.fast_count)) + ") = 0");
    env.warnings = rep.warnings;
    if (out) *out = std::move(env);
    return rep;
}

/// Parses and validates an environment; throws ValidationError naming the first failed check.
inline PeriodicEnvironment load_environment(nlohmann::json const& doc) {
    PeriodicEnvironment env;
    auto rep = validate_document(doc, &env);
    if (auto const* f = rep.first_failure()) throw ValidationError(f->name, f->detail);
    return env;
}

inline PeriodicEnvironment load_environment_text(std::string const& text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (nlohmann::json::parse_error const& e) {
        throw ValidationError("schema", e.what());
    }
    return load_environment(doc);
}

/// Raised when a file cannot be read or written.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline nlohmann::json read_json_file(std::string const& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    try {
        return nlohmann::json::parse(ss.str());
    } catch (nlohmann::json::parse_error const& e) {
        throw ValidationError("schema", path + ": " + e.what());
    }
}

inline PeriodicEnvironment load_environment_file(std::string const& path) {
    return load_environment(read_json_file(path));
}

}  // namespace hcwalk
