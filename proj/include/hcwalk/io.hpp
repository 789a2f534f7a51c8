#pragma once

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "analysis.hpp"
#include "corrector.hpp"
#include "environment.hpp"
#include "load.hpp"
#include "simulate.hpp"

namespace hcwalk {

using nlohmann::json;

/// Shortest decimal form that round-trips to the same double.
inline std::string fmt_double(double x) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, x);
    return {buf, res.ptr};
}

inline std::string cell_key(IVec const& c) {
    std::string s;
    for (std::size_t i = 0; i < c.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(c[i]);
    }
    return s;
}

inline json matrix_rows(Eigen::MatrixXd const& m) {
    json a = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        a.push_back(row);
    }
    return a;
}

inline Eigen::MatrixXd matrix_from_rows(json const& a) {
    auto rows = static_cast<Eigen::Index>(a.size());
    auto cols = rows ? static_cast<Eigen::Index>(a[0].size()) : 0;
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = a[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)].get<double>();
    return m;
}

inline json vector_json(Eigen::VectorXd const& v) {
    json a = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
    return a;
}

inline json flat_row_major(Eigen::MatrixXd const& m) {
    json a = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) a.push_back(m(r, c));
    return a;
}

/// EffectiveModel document: theta as row-major d x d arrays, the rate table,
/// labels, correctors keyed by cell coordinate, and residual diagnostics.
inline json model_to_json(PeriodicEnvironment const& env, Homogenization const& hom) {
    auto const& m = hom.model;
    json doc;
    doc["dim"] = m.dim;
    doc["fast_count"] = m.fast_count;
    doc["astral_count"] = m.astral_count;
    json labels = json::array();
    for (int k = 0; k < m.label_count(); ++k) labels.push_back(label_name(label_from_flat(k, m.fast_count)));
    doc["labels"] = labels;
    json theta = json::array();
    for (auto const& t : m.theta) theta.push_back(flat_row_major(t));
    doc["theta"] = theta;
    doc["alpha"] = matrix_rows(m.rates.alpha);
    doc["lambda"] = vector_json(m.rates.lambda);
    doc["mu"] = matrix_rows(m.rates.mu);
    doc["eps_max"] = env.eps_max;

    json comps = json::array();
    for (std::size_t i = 0; i < hom.correctors.components.size(); ++i) {
        auto const& c = hom.correctors.components[i];
        json jc;
        jc["label"] = label_name({Label::Kind::fast, static_cast<int>(i)});
        json h = json::object(), g = json::object(), q = json::object();
        for (std::size_t r = 0; r < c.cells.size(); ++r) {
            auto key = cell_key(env.geometry.coords(c.cells[r]));
            auto ri = static_cast<Eigen::Index>(r);
            h[key] = vector_json(c.h.row(ri).transpose());
            g[key] = vector_json(c.g.row(ri).transpose());
            json qr = json::object();
            for (int l = 0; l < m.label_count(); ++l)
                if (l != static_cast<int>(i)) qr[label_name(label_from_flat(l, m.fast_count))] = c.q(ri, l);
            q[key] = qr;
        }
        jc["h"] = h;
        jc["g"] = g;
        jc["q"] = q;
        jc["residuals"] = {{"h", c.h_residual}, {"g", c.g_residual}, {"q", c.q_residual}};
        jc["fredholm"] = {{"h", c.h_fredholm}, {"g", c.g_fredholm}, {"q", c.q_fredholm}};
        comps.push_back(jc);
    }
    doc["correctors"] = comps;
    doc["diagnostics"] = {{"max_residual", hom.correctors.max_residual()},
                          {"max_fredholm_defect", hom.correctors.max_fredholm()},
                          {"solver_tolerance", kSolverTolerance}};
    return doc;
}

/// Reads back the limit-model part of an EffectiveModel document.
inline EffectiveModel model_from_json(json const& doc) {
    EffectiveModel m;
    m.dim = doc.at("dim").get<int>();
    m.fast_count = doc.at("fast_count").get<int>();
    m.astral_count = doc.at("astral_count").get<int>();
    for (auto const& t : doc.at("theta")) {
        Eigen::MatrixXd th(m.dim, m.dim);
        for (int a = 0; a < m.dim; ++a)
            for (int b = 0; b < m.dim; ++b) th(a, b) = t[static_cast<std::size_t>(a * m.dim + b)].get<double>();
        m.theta.push_back(th);
    }
    m.rates.alpha = matrix_from_rows(doc.at("alpha"));
    m.rates.mu = matrix_from_rows(doc.at("mu"));
    auto const& lam = doc.at("lambda");
    m.rates.lambda.resize(static_cast<Eigen::Index>(lam.size()));
    for (std::size_t i = 0; i < lam.size(); ++i) m.rates.lambda(static_cast<Eigen::Index>(i)) = lam[i].get<double>();
    return m;
}

inline std::string theta_csv(EffectiveModel const& m) {
    std::string s = "label,row,col,value\n";
    for (std::size_t i = 0; i < m.theta.size(); ++i)
        for (Eigen::Index a = 0; a < m.theta[i].rows(); ++a)
            for (Eigen::Index b = 0; b < m.theta[i].cols(); ++b)
                s += label_name({Label::Kind::fast, static_cast<int>(i)}) + "," + std::to_string(a + 1) + "," +
                     std::to_string(b + 1) + "," + fmt_double(m.theta[i](a, b)) + "\n";
    return s;
}

inline std::string rates_csv(EffectiveModel const& m) {
    std::string s = "from,to,alpha,mu,lambda_from\n";
    for (int k = 0; k < m.label_count(); ++k)
        for (int l = 0; l < m.label_count(); ++l) {
            if (l == k) continue;
            s += label_name(label_from_flat(k, m.fast_count)) + "," + label_name(label_from_flat(l, m.fast_count)) + "," +
                 fmt_double(m.rates.alpha(k, l)) + "," + fmt_double(m.rates.mu(k, l)) + "," +
                 fmt_double(m.rates.lambda(k)) + "\n";
        }
    return s;
}

/// CSV rows "path,time,x1..xd,k" (k is the flat label).
inline std::string trajectories_csv(std::vector<Trajectory> const& trajs) {
    std::ostringstream out;
    int const d = trajs.empty() ? 0 : trajs.front().dim;
    out << "path,time";
    for (int i = 0; i < d; ++i) out << ",x" << i + 1;
    out << ",k\n";
    for (std::size_t p = 0; p < trajs.size(); ++p)
        for (std::size_t r = 0; r < trajs[p].size(); ++r) {
            out << p << "," << fmt_double(trajs[p].times[r]);
            auto x = trajs[p].position(r);
            for (int i = 0; i < d; ++i) out << "," << fmt_double(x(i));
            out << "," << trajs[p].labels[r] << "\n";
        }
    return out.str();
}

inline std::vector<Trajectory> trajectories_from_csv(std::string const& text, TrajectoryKind kind, double eps) {
    std::istringstream in(text);
    std::string line;
    std::getline(in, line);
    int const d = static_cast<int>(std::count(line.begin(), line.end(), ',')) - 2;
    std::vector<Trajectory> out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::stringstream ls(line);
        std::string tok;
        while (std::getline(ls, tok, ',')) f.push_back(tok);
        auto p = std::stoul(f[0]);
        while (out.size() <= p) out.push_back({kind, eps, d, {}, {}, {}});
        Eigen::VectorXd x(d);
        for (int i = 0; i < d; ++i) x(i) = std::stod(f[static_cast<std::size_t>(2 + i)]);
        out[p].push(std::stod(f[1]), x, std::stoi(f.back()));
    }
    return out;
}

inline json estimate_json(Estimate const& e) {
    return {{"mean", e.mean}, {"half_width", e.half_width}, {"n", e.n}, {"exact", e.exact}};
}

inline Estimate estimate_from_json(json const& j) {
    return {j.at("mean").get<double>(), j.at("half_width").get<double>(), j.at("n").get<std::size_t>(),
            j.at("exact").get<bool>()};
}

inline json report_to_json(ComparisonReport const& rep) {
    json doc;
    json rows = json::array();
    for (auto const& r : rep.rows) {
        json jr = {{"eps", r.eps},           {"t", r.t},
                   {"function", r.function}, {"micro", estimate_json(r.micro)},
                   {"limit", estimate_json(r.limit)}, {"discrepancy", r.discrepancy},
                   {"tolerance", r.tolerance}, {"within", r.within}};
        if (r.t2 >= 0.0) jr["t2"] = r.t2;
        rows.push_back(jr);
    }
    doc["rows"] = rows;
    json trends = json::array();
    for (auto const& s : rep.trends) {
        json js = {{"t", s.t}, {"function", s.function}, {"eps", s.eps}, {"discrepancy", s.discrepancy},
                   {"verdict", s.verdict}};
        if (s.t2 >= 0.0) js["t2"] = s.t2;
        trends.push_back(js);
    }
    doc["trends"] = trends;
    return doc;
}

inline ComparisonReport report_from_json(json const& doc) {
    ComparisonReport rep;
    for (auto const& jr : doc.at("rows")) {
        ComparisonRow r;
        r.eps = jr.at("eps").get<double>();
        r.t = jr.at("t").get<double>();
        r.t2 = jr.contains("t2") ? jr["t2"].get<double>() : -1.0;
        r.function = jr.at("function").get<std::string>();
        r.micro = estimate_from_json(jr.at("micro"));
        r.limit = estimate_from_json(jr.at("limit"));
        r.discrepancy = jr.at("discrepancy").get<double>();
        r.tolerance = jr.at("tolerance").get<double>();
        r.within = jr.at("within").get<bool>();
        rep.rows.push_back(std::move(r));
    }
    summarize_trends(rep);
    return rep;
}

inline std::string report_csv(ComparisonReport const& rep) {
    std::string s = "eps,t,t2,function,micro_mean,micro_half_width,micro_exact,limit_mean,limit_half_width,discrepancy,"
                    "tolerance,within\n";
    for (auto const& r : rep.rows)
        s += fmt_double(r.eps) + "," + fmt_double(r.t) + "," + (r.t2 >= 0 ? fmt_double(r.t2) : "") + "," + r.function +
             "," + fmt_double(r.micro.mean) + "," + fmt_double(r.micro.half_width) + "," + (r.micro.exact ? "1" : "0") +
             "," + fmt_double(r.limit.mean) + "," + fmt_double(r.limit.half_width) + "," + fmt_double(r.discrepancy) +
             "," + fmt_double(r.tolerance) + "," + (r.within ? "1" : "0") + "\n";
    return s;
}

inline constexpr char kToolVersion[] = "1.0.0";

/// Record of one CLI run, written next to its outputs.
struct RunManifest {
    std::string command;
    std::string environment;
    json parameters = json::object();
    std::vector<std::string> outputs;

    [[nodiscard]] json to_json() const {
        return {{"tool", "hcwalk"},
                {"version", kToolVersion},
                {"command", command},
                {"environment", environment},
                {"parameters", parameters},
                {"solver_tolerance", kSolverTolerance},
                {"outputs", outputs}};
    }
};

/// Fixed-width table of report rows followed by the trend verdicts.
inline std::string summary_table(ComparisonReport const& rep) {
    std::string s;
    char buf[256];
    std::snprintf(buf, sizeof buf, "%-8s %-8s %-24s %13s %13s %11s %11s %s\n", "eps", "t", "function", "micro",
                  "limit", "discrepancy", "tolerance", "within");
    s += buf;
    for (auto const& r : rep.rows) {
        std::string t = fmt_double(r.t) + (r.t2 >= 0 ? "," + fmt_double(r.t2) : "");
        std::snprintf(buf, sizeof buf, "%-8s %-8s %-24s %13.6f %13.6f %11.2e %11.2e %s\n", fmt_double(r.eps).c_str(),
                      t.c_str(), r.function.c_str(), r.micro.mean, r.limit.mean, r.discrepancy, r.tolerance,
                      r.within ? "yes" : "no");
        s += buf;
    }
    for (auto const& tr : rep.trends) {
        std::string t = fmt_double(tr.t) + (tr.t2 >= 0 ? "," + fmt_double(tr.t2) : "");
        s += "trend " + tr.function + " at t=" + t + ": " + tr.verdict + "\n";
    }
    return s;
}

inline void write_text(std::filesystem::path const& path, std::string const& text) {
    if (path.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(path.parent_path(), ec);
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
    if (!out) throw IoError("write failed for " + path.string());
}

inline std::string read_text(std::filesystem::path const& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_json(std::filesystem::path const& path, json const& doc) { write_text(path, doc.dump(2) + "\n"); }

}  // namespace hcwalk
