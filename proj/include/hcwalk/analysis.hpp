#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/distributions/chi_squared.hpp>

#include "corrector.hpp"
#include "environment.hpp"
#include "simulate.hpp"

namespace hcwalk {

class AnalysisError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Stationary law of the label chain with generator Q (Q_kj = alpha_kj, Q_kk = -lambda_k).
inline Eigen::VectorXd stationary_k(RateTable const& rates) {
    auto const L = static_cast<Eigen::Index>(rates.size());
    Eigen::MatrixXd Q = rates.alpha;
    for (Eigen::Index k = 0; k < L; ++k) Q(k, k) = -rates.lambda(k);
    Eigen::FullPivLU<Eigen::MatrixXd> lu(Q.transpose());
    lu.setThreshold(1e-12);
    if (lu.rank() < L - 1) throw AnalysisError("label chain is reducible: stationary law not unique");
    Eigen::MatrixXd A = Q.transpose();
    A.row(L - 1).setOnes();
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(L);
    rhs(L - 1) = 1.0;
    Eigen::VectorXd pi = A.fullPivLu().solve(rhs);
    if (pi.minCoeff() < -1e-12) throw AnalysisError("label chain is reducible: stationary law has negative mass");
    pi = pi.cwiseMax(0.0);
    return pi / pi.sum();
}

inline double stationary_defect(RateTable const& rates, Eigen::VectorXd const& pi) {
    Eigen::MatrixXd Q = rates.alpha;
    for (Eigen::Index k = 0; k < Q.rows(); ++k) Q(k, k) = -rates.lambda(k);
    return (pi.transpose() * Q).cwiseAbs().maxCoeff();
}

/// Time-weighted label frequencies pooled over trajectories.
inline Eigen::VectorXd occupation_fractions(std::vector<Trajectory> const& trajs, int labels) {
    if (trajs.empty()) throw AnalysisError("occupation_fractions needs at least one trajectory");
    Eigen::VectorXd occ = Eigen::VectorXd::Zero(labels);
    for (auto const& tr : trajs)
        for (std::size_t i = 0; i + 1 < tr.size(); ++i) occ(tr.labels[i]) += tr.times[i + 1] - tr.times[i];
    double total = occ.sum();
    return total > 0.0 ? Eigen::VectorXd(occ / total) : occ;
}

/// Per-trajectory occupation fractions (for across-path standard errors).
inline Eigen::MatrixXd occupation_by_path(std::vector<Trajectory> const& trajs, int labels) {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(trajs.size()), labels);
    for (std::size_t p = 0; p < trajs.size(); ++p)
        out.row(static_cast<Eigen::Index>(p)) = occupation_fractions({trajs[p]}, labels).transpose();
    return out;
}

/// Record index in effect at time t (last record with time <= t).
inline std::size_t record_at(Trajectory const& tr, double t) {
    auto it = std::upper_bound(tr.times.begin(), tr.times.end(), t + 1e-12);
    return it == tr.times.begin() ? 0 : static_cast<std::size_t>(it - tr.times.begin()) - 1;
}

struct MsdCurve {
    std::vector<double> t;
    std::vector<double> msd;
    std::vector<double> half_width;
};

/// Mean |X(t) - X(0)|^2 on the grid. Limit trajectories must have been
/// recorded at the grid times (positions move between records).
inline MsdCurve msd(std::vector<Trajectory> const& trajs, std::vector<double> const& grid) {
    MsdCurve c;
    for (double t : grid) {
        std::vector<double> v;
        v.reserve(trajs.size());
        for (auto const& tr : trajs) v.push_back((tr.position(record_at(tr, t)) - tr.position(0)).squaredNorm());
        auto e = summarize(v);
        c.t.push_back(t);
        c.msd.push_back(e.mean);
        c.half_width.push_back(e.half_width);
    }
    return c;
}

struct LinearFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r2 = 0.0;
};

inline LinearFit fit_line(std::vector<double> const& x, std::vector<double> const& y) {
    double n = static_cast<double>(x.size()), sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sx += x[i];
        sy += y[i];
        sxx += x[i] * x[i];
        sxy += x[i] * y[i];
    }
    LinearFit f;
    f.slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    f.intercept = (sy - f.slope * sx) / n;
    double ybar = sy / n, sst = 0, sse = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sst += (y[i] - ybar) * (y[i] - ybar);
        double r = y[i] - f.slope * x[i] - f.intercept;
        sse += r * r;
    }
    f.r2 = sst > 0 ? 1.0 - sse / sst : 1.0;
    return f;
}

/// Pooled second moment of displacement per unit time spent in each label:
/// sum dx dx^T / sum dt over record intervals whose (starting) label is k.
/// For the limit process this estimates 2 Theta^k on fast labels and zero on
/// astral ones; for the walk it is the mean squared jump per eps^2.
struct LabelDiffusivity {
    std::vector<Eigen::MatrixXd> rate;
    std::vector<double> time;
    std::vector<std::size_t> intervals;
};

inline LabelDiffusivity label_diffusivity(std::vector<Trajectory> const& trajs, int labels, int dim) {
    LabelDiffusivity out;
    out.rate.assign(static_cast<std::size_t>(labels), Eigen::MatrixXd::Zero(dim, dim));
    out.time.assign(static_cast<std::size_t>(labels), 0.0);
    out.intervals.assign(static_cast<std::size_t>(labels), 0);
    for (auto const& tr : trajs)
        for (std::size_t i = 0; i + 1 < tr.size(); ++i) {
            auto k = static_cast<std::size_t>(tr.labels[i]);
            Eigen::VectorXd dx = tr.position(i + 1) - tr.position(i);
            out.rate[k] += dx * dx.transpose();
            out.time[k] += tr.times[i + 1] - tr.times[i];
            out.intervals[k] += 1;
        }
    for (std::size_t k = 0; k < out.rate.size(); ++k)
        if (out.time[k] > 0.0) out.rate[k] /= out.time[k];
    return out;
}

/// Counts of label changes (k -> l) along trajectories.
inline Eigen::MatrixXd jump_counts(std::vector<Trajectory> const& trajs, int labels) {
    Eigen::MatrixXd c = Eigen::MatrixXd::Zero(labels, labels);
    for (auto const& tr : trajs)
        for (std::size_t i = 0; i + 1 < tr.size(); ++i)
            if (tr.labels[i] != tr.labels[i + 1]) c(tr.labels[i], tr.labels[i + 1]) += 1.0;
    return c;
}

struct ChiSquare {
    double statistic = 0.0;
    int dof = 0;
    double p_value = 1.0;
    bool impossible_transition = false;  // observed a jump with mu = 0
};

/// Pearson chi-square of observed jump counts against the embedded chain mu.
inline ChiSquare chi_square_jumps(Eigen::MatrixXd const& counts, Eigen::MatrixXd const& mu) {
    ChiSquare out;
    for (Eigen::Index k = 0; k < counts.rows(); ++k) {
        double n = counts.row(k).sum();
        if (n == 0.0) continue;
        int cells = 0;
        for (Eigen::Index l = 0; l < counts.cols(); ++l) {
            if (l == k) continue;
            if (mu(k, l) <= 0.0) {
                if (counts(k, l) > 0.0) out.impossible_transition = true;
                continue;
            }
            double e = n * mu(k, l);
            out.statistic += (counts(k, l) - e) * (counts(k, l) - e) / e;
            ++cells;
        }
        out.dof += std::max(0, cells - 1);
    }
    if (out.impossible_transition) out.p_value = 0.0;
    else if (out.dof > 0)
        out.p_value = boost::math::cdf(boost::math::complement(boost::math::chi_squared(out.dof), out.statistic));
    return out;
}

struct ComparisonRow {
    double eps = 0.0;
    double t = 0.0;
    double t2 = -1.0;  // second time for two-time statistics, negative if unused
    std::string function;
    Estimate micro;
    Estimate limit;
    double discrepancy = 0.0;
    double tolerance = 0.0;  // combined 3 sigma
    bool within = true;
};

struct TrendSummary {
    double t = 0.0;
    double t2 = -1.0;
    std::string function;
    std::vector<double> eps;
    std::vector<double> discrepancy;
    std::string verdict;  // "consistent with convergence", "not consistent", "insufficient data"
};

struct ComparisonReport {
    std::vector<ComparisonRow> rows;
    std::vector<TrendSummary> trends;
};

inline double combined_tolerance(Estimate const& a, Estimate const& b) {
    double sa = a.half_width / kZ99, sb = b.half_width / kZ99;
    return 3.0 * std::sqrt(sa * sa + sb * sb);
}

/// Monotone-trend verdict with a noise band: along decreasing eps, each
/// discrepancy must be below the previous one plus its combined 3 sigma.
inline void summarize_trends(ComparisonReport& rep) {
    rep.trends.clear();
    for (auto const& r : rep.rows) {
        auto it = std::find_if(rep.trends.begin(), rep.trends.end(), [&](TrendSummary const& s) {
            return s.t == r.t && s.t2 == r.t2 && s.function == r.function;
        });
        if (it == rep.trends.end()) {
            rep.trends.push_back({r.t, r.t2, r.function, {}, {}, {}});
            it = std::prev(rep.trends.end());
        }
        it->eps.push_back(r.eps);
        it->discrepancy.push_back(r.discrepancy);
    }
    for (auto& s : rep.trends) {
        if (s.eps.size() < 3) {
            s.verdict = "insufficient data";
            continue;
        }
        std::vector<std::size_t> order(s.eps.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::sort(order.begin(), order.end(), [&](auto a, auto b) { return s.eps[a] > s.eps[b]; });
        bool ok = true;
        for (std::size_t i = 1; i < order.size(); ++i) {
            auto const& row = *std::find_if(rep.rows.begin(), rep.rows.end(), [&](ComparisonRow const& r) {
                return r.t == s.t && r.t2 == s.t2 && r.function == s.function && r.eps == s.eps[order[i]];
            });
            if (!(s.discrepancy[order[i]] < s.discrepancy[order[i - 1]] + row.tolerance +
                                                 (row.tolerance == 0.0 ? 1e-12 : 0.0)))
                ok = false;
        }
        s.verdict = ok ? "consistent with convergence" : "not consistent";
    }
}

struct CompareOptions {
    std::size_t n_paths = 100000;
    std::uint64_t seed = 1;
    unsigned workers = 1;
    /// Microscale side uses the exact matrix-power value when the dependency
    /// cone has at most this many lattice points, Monte Carlo otherwise.
    double exact_budget = 5e6;
    IVec start_cell;  // base lattice point of the walk; empty means default_start
};

/// Default base point: the origin when its cell is fast, otherwise the first cell of fast:1.
inline IVec default_start(PeriodicEnvironment const& env) {
    IVec z(env.dim(), 0);
    if (env.label_of_cell(env.geometry.cell_of(z)).is_fast()) return z;
    return env.geometry.coords(env.partition.fast_cells.front().front());
}

namespace detail {

// disjoint stream blocks for the different estimators of one run
inline std::uint64_t stream_block(std::uint64_t purpose, std::uint64_t i, std::uint64_t j, std::uint64_t n_paths) {
    return ((purpose * 1024 + i) * 1024 + j) * n_paths;
}

inline double cone_points(std::size_t d, std::int64_t steps, std::int64_t reach) {
    return std::pow(2.0 * static_cast<double>(steps * reach) + 1.0, static_cast<double>(d)) * static_cast<double>(steps);
}

}  // namespace detail

/// Compares E[F(X_eps(t))] with E[F(X(t))] over every (eps, t, F). The walk
/// starts at the base lattice point, the limit at (0, label of that point).
inline ComparisonReport compare_fdd(PeriodicEnvironment const& env, EffectiveModel const& model,
                                    std::vector<TestTuple> const& functions, std::vector<double> const& times,
                                    std::vector<double> const& eps_list, CompareOptions const& opt) {
    for (double e : eps_list)
        if (!(e > 0.0) || e > env.eps_max)
            throw ParameterError("eps = " + std::to_string(e) + " outside (0, eps_max = " + std::to_string(env.eps_max) + "]");
    IVec z0 = opt.start_cell.empty() ? default_start(env) : opt.start_cell;
    int const k0 = env.partition.flat(env.geometry.cell_of(z0));
    State start{Eigen::VectorXd::Zero(static_cast<Eigen::Index>(env.dim())), k0};
    LimitSampler limit(model);
    ComparisonReport rep;

    // one set of limit paths per time, shared by all eps and functions
    std::vector<std::vector<std::vector<State>>> limit_obs;
    for (std::size_t ti = 0; ti < times.size(); ++ti)
        limit_obs.push_back(limit_observations(limit, start, {times[ti]}, opt.n_paths, opt.seed,
                                               detail::stream_block(1, ti, 0, opt.n_paths), opt.workers));

    for (std::size_t ei = 0; ei < eps_list.size(); ++ei) {
        double const eps = eps_list[ei];
        WalkSampler walk(env, eps);
        for (std::size_t ti = 0; ti < times.size(); ++ti) {
            double const t = times[ti];
            auto const n = step_count(t, eps);
            bool const exact = detail::cone_points(env.dim(), n, env.jumps.reach) <= opt.exact_budget;
            std::vector<IVec> ends;
            if (!exact) {
                ends.resize(opt.n_paths);
                parallel_for(opt.n_paths, opt.workers, [&](std::size_t p) {
                    RngStream rng(opt.seed, detail::stream_block(2, ei, ti, opt.n_paths) + p);
                    ends[p] = walk_observe(walk, z0, {n}, rng)[0];
                });
            }
            for (auto const& F : functions) {
                ComparisonRow row;
                row.eps = eps;
                row.t = t;
                row.function = F.name;
                if (exact) {
                    row.micro = {semigroup_apply(env, eps, F, t, 0.0, z0).at(z0), 0.0, 0, true};
                } else {
                    std::vector<double> v(opt.n_paths);
                    for (std::size_t p = 0; p < opt.n_paths; ++p)
                        v[p] = F(scaled(ends[p], eps), env.partition.flat(env.geometry.cell_of(ends[p])));
                    row.micro = summarize(v);
                }
                if (t == 0.0) {
                    row.limit = {F(start.x, start.label), 0.0, opt.n_paths, true};
                } else {
                    std::vector<double> v(opt.n_paths);
                    for (std::size_t p = 0; p < opt.n_paths; ++p)
                        v[p] = F(limit_obs[ti][p][0].x, limit_obs[ti][p][0].label);
                    row.limit = summarize(v);
                }
                row.discrepancy = std::abs(row.micro.mean - row.limit.mean);
                row.tolerance = combined_tolerance(row.micro, row.limit);
                row.within = row.discrepancy <= row.tolerance;
                rep.rows.push_back(std::move(row));
            }
        }
    }
    summarize_trends(rep);
    return rep;
}

/// Joint two-time statistic E[F(X(t1)) G(X(t2))], walk Monte Carlo against limit Monte Carlo.
inline ComparisonReport compare_two_time(PeriodicEnvironment const& env, EffectiveModel const& model,
                                         TestTuple const& F, double t1, TestTuple const& G, double t2,
                                         std::vector<double> const& eps_list, CompareOptions const& opt) {
    if (!(t1 <= t2)) throw ParameterError("two-time statistic needs t1 <= t2");
    IVec z0 = opt.start_cell.empty() ? default_start(env) : opt.start_cell;
    int const k0 = env.partition.flat(env.geometry.cell_of(z0));
    State start{Eigen::VectorXd::Zero(static_cast<Eigen::Index>(env.dim())), k0};
    LimitSampler limit(model);
    auto lobs = limit_observations(limit, start, {t1, t2}, opt.n_paths, opt.seed,
                                   detail::stream_block(3, 0, 0, opt.n_paths), opt.workers);
    std::vector<double> lv(opt.n_paths);
    for (std::size_t p = 0; p < opt.n_paths; ++p)
        lv[p] = F(lobs[p][0].x, lobs[p][0].label) * G(lobs[p][1].x, lobs[p][1].label);
    Estimate lim = summarize(lv);

    ComparisonReport rep;
    std::string const name = F.name + "(t1)*" + G.name + "(t2)";
    for (std::size_t ei = 0; ei < eps_list.size(); ++ei) {
        double const eps = eps_list[ei];
        WalkSampler walk(env, eps);
        std::vector<std::int64_t> steps{step_count(t1, eps), step_count(t2, eps)};
        std::vector<double> mv(opt.n_paths);
        parallel_for(opt.n_paths, opt.workers, [&](std::size_t p) {
            RngStream rng(opt.seed, detail::stream_block(4, ei, 0, opt.n_paths) + p);
            auto pos = walk_observe(walk, z0, steps, rng);
            auto lab = [&](IVec const& z) { return env.partition.flat(env.geometry.cell_of(z)); };
            mv[p] = F(scaled(pos[0], eps), lab(pos[0])) * G(scaled(pos[1], eps), lab(pos[1]));
        });
        ComparisonRow row;
        row.eps = eps;
        row.t = t1;
        row.t2 = t2;
        row.function = name;
        row.micro = summarize(mv);
        row.limit = lim;
        row.discrepancy = std::abs(row.micro.mean - row.limit.mean);
        row.tolerance = combined_tolerance(row.micro, row.limit);
        row.within = row.discrepancy <= row.tolerance;
        rep.rows.push_back(std::move(row));
    }
    summarize_trends(rep);
    return rep;
}

/// exp(-|x|^2) on fast labels and exp(-|x|^2 / 2) on astral labels.
inline TestTuple paired_gaussian(int labels, int fast_count, int dim) {
    TestTuple F{"paired", {}};
    for (int k = 0; k < labels; ++k)
        F.f.push_back(TestFunction::gaussian(1.0, k < fast_count ? 1.0 : 0.5, Eigen::VectorXd::Zero(dim)));
    return F;
}

/// Test-function library: the paired Gaussian, a uniform Gaussian bump, a
/// cosine bump on fast labels only, and the constant one.
inline std::vector<TestTuple> default_functions(int labels, int fast_count, int dim) {
    std::vector<TestTuple> out;
    out.push_back(paired_gaussian(labels, fast_count, dim));
    out.push_back(TestTuple::uniform("gauss", TestFunction::gaussian(1.0, 1.0, Eigen::VectorXd::Zero(dim)), labels));
    TestTuple bump{"cosbump_fast", {}};
    for (int k = 0; k < labels; ++k)
        bump.f.push_back(k < fast_count ? TestFunction::cosine_bump(1.0, 2.0, Eigen::VectorXd::Zero(dim))
                                        : TestFunction::constant(0.0));
    out.push_back(std::move(bump));
    out.push_back(TestTuple::uniform("one", TestFunction::constant(1.0), labels));
    return out;
}

inline TestTuple function_by_name(std::string const& name, int labels, int fast_count, int dim) {
    for (auto& F : default_functions(labels, fast_count, dim))
        if (F.name == name) return F;
    throw ParameterError("unknown test function '" + name + "' (choose paired, gauss, cosbump_fast or one)");
}

}  // namespace hcwalk
