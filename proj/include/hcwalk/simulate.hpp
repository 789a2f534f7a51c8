#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "corrector.hpp"
#include "environment.hpp"
#include "grid.hpp"
#include "lemma.hpp"
#include "parallel.hpp"
#include "rng.hpp"
#include "test_functions.hpp"

namespace hcwalk {

/// 99% two-sided normal quantile used for every confidence half-width.
inline constexpr double kZ99 = 2.5758293035489004;

/// Number of walk steps taken by time t at scale eps, i.e. floor(t / eps^2).
inline std::int64_t step_count(double t, double eps) {
    return static_cast<std::int64_t>(std::floor(t / (eps * eps) + 1e-9));
}

struct State {
    Eigen::VectorXd x;
    int label = 0;  // flat label
};

enum class TrajectoryKind { microscale, limit };

/// Time-stamped (position, label) records. Between consecutive records the
/// label is that of the earlier record.
struct Trajectory {
    TrajectoryKind kind = TrajectoryKind::limit;
    double eps = 0.0;  // microscale only
    int dim = 0;
    std::vector<double> times;
    std::vector<double> positions;  // dim entries per record
    std::vector<int> labels;

    [[nodiscard]] std::size_t size() const noexcept { return times.size(); }
    [[nodiscard]] Eigen::Map<Eigen::VectorXd const> position(std::size_t i) const {
        return {positions.data() + i * static_cast<std::size_t>(dim), dim};
    }
    void push(double t, Eigen::VectorXd const& x, int label) {
        times.push_back(t);
        positions.insert(positions.end(), x.data(), x.data() + x.size());
        labels.push_back(label);
    }

    friend bool operator==(Trajectory const&, Trajectory const&) = default;
};

/// Per-cell CDF tables over the row of P0 + eps^2 V (stay-put mass last).
class WalkSampler {
public:
    WalkSampler(PeriodicEnvironment const& env, double eps) : env_(&env), eps_(eps) {
        if (!(eps > 0.0) || eps > env.eps_max)
            throw ParameterError("eps = " + std::to_string(eps) + " outside (0, eps_max = " +
                                 std::to_string(env.eps_max) + "]");
        double const e2 = eps * eps;
        rows_.resize(static_cast<std::size_t>(env.cell_count()));
        for (std::int64_t c = 0; c < env.cell_count(); ++c) {
            auto& r = rows_[static_cast<std::size_t>(c)];
            double acc = 0.0;
            for (std::size_t i = 0; i < env.row(c).jumps.size(); ++i) {
                auto const& j = env.row(c).jumps[i];
                double p = j.p0 + e2 * j.v;
                if (p <= 0.0) continue;
                acc += p;
                r.cum.push_back(acc);
                r.jump.push_back(static_cast<int>(i));
            }
            r.cum.push_back(1.0);  // stay
            r.jump.push_back(-1);
        }
    }

    [[nodiscard]] double eps() const noexcept { return eps_; }
    [[nodiscard]] PeriodicEnvironment const& env() const noexcept { return *env_; }

    /// One step from lattice point z in `cell`; updates both in place.
    void step(IVec& z, std::int64_t& cell, RngStream& rng) const {
        auto const& r = rows_[static_cast<std::size_t>(cell)];
        double const u = rng.uniform();
        auto it = std::upper_bound(r.cum.begin(), r.cum.end(), u);
        auto pick = it == r.cum.end() ? r.jump.back() : r.jump[static_cast<std::size_t>(it - r.cum.begin())];
        if (pick < 0) return;
        auto const& j = env_->row(cell).jumps[static_cast<std::size_t>(pick)];
        for (std::size_t k = 0; k < z.size(); ++k) z[k] += j.offset[k];
        cell = j.target;
    }

private:
    struct Row {
        std::vector<double> cum;
        std::vector<int> jump;
    };
    PeriodicEnvironment const* env_;
    double eps_;
    std::vector<Row> rows_;
};

/// Microscale walk eps X([t / eps^2]) from lattice point z0, recorded at every step.
inline Trajectory run_walk(WalkSampler const& sampler, double T, IVec z0, RngStream& rng) {
    if (!(T > 0.0)) throw ParameterError("T must be positive");
    auto const& env = sampler.env();
    double const eps = sampler.eps();
    Trajectory tr;
    tr.kind = TrajectoryKind::microscale;
    tr.eps = eps;
    tr.dim = static_cast<int>(env.dim());
    auto const n = step_count(T, eps);
    auto cell = env.geometry.cell_of(z0);
    tr.times.reserve(static_cast<std::size_t>(n + 1));
    for (std::int64_t s = 0;; ++s) {
        if (env.geometry.cell_of(z0) != cell) throw std::logic_error("walk label out of sync with position");
        tr.push(static_cast<double>(s) * eps * eps, scaled(z0, eps), env.partition.flat(cell));
        if (s == n) break;
        sampler.step(z0, cell, rng);
    }
    return tr;
}

/// Lattice positions of the walk after each of the (sorted) step counts.
inline std::vector<IVec> walk_observe(WalkSampler const& sampler, IVec z, std::vector<std::int64_t> const& steps,
                                      RngStream& rng) {
    auto cell = sampler.env().geometry.cell_of(z);
    std::vector<IVec> out;
    std::int64_t done = 0;
    for (auto target : steps) {
        for (; done < target; ++done) sampler.step(z, cell, rng);
        out.push_back(z);
    }
    return out;
}

/// Precomputed pieces of the limit process: Cholesky factors of 2 Theta^i and
/// cumulative rows of the embedded jump chain.
class LimitSampler {
public:
    explicit LimitSampler(EffectiveModel const& model) : model_(&model) {
        for (auto const& th : model.theta) {
            Eigen::LLT<Eigen::MatrixXd> llt(2.0 * th);
            if (llt.info() != Eigen::Success) throw SolverError("theta_not_pd", "Cholesky factorization of 2 Theta failed");
            chol_.push_back(llt.matrixL());
        }
        int const L = model.label_count();
        cum_.assign(static_cast<std::size_t>(L), {});
        for (int k = 0; k < L; ++k) {
            if (!(model.rates.lambda(k) >= 0.0)) throw SolverError("rates", "lambda must be nonnegative");
            double acc = 0.0;
            for (int l = 0; l < L; ++l) {
                acc += l == k ? 0.0 : model.rates.mu(k, l);
                cum_[static_cast<std::size_t>(k)].push_back(acc);
            }
        }
    }

    [[nodiscard]] EffectiveModel const& model() const noexcept { return *model_; }

    /// Brownian increment with covariance 2 Theta dt on fast labels; nothing on astral ones.
    void move(Eigen::VectorXd& x, int label, double dt, RngStream& rng) const {
        if (label >= model_->fast_count || dt <= 0.0) return;
        Eigen::VectorXd z(x.size());
        for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = rng.normal();
        x += std::sqrt(dt) * (chol_[static_cast<std::size_t>(label)] * z);
    }

    [[nodiscard]] int jump(int label, RngStream& rng) const {
        auto const& c = cum_[static_cast<std::size_t>(label)];
        double const u = rng.uniform() * c.back();
        for (std::size_t l = 0; l < c.size(); ++l)
            if (static_cast<int>(l) != label && u < c[l]) return static_cast<int>(l);
        for (std::size_t l = c.size(); l-- > 0;)
            if (static_cast<int>(l) != label && model_->rates.mu(label, static_cast<Eigen::Index>(l)) > 0.0)
                return static_cast<int>(l);
        return label;
    }

    /// Event-driven simulation on [0, T]. States at the sorted `obs` times
    /// are appended to `observed`; when `traj` is given every observation and
    /// every jump event is recorded there.
    void simulate(State start, double T, std::vector<double> const& obs, RngStream& rng,
                  std::vector<State>* observed, Trajectory* traj) const {
        double t = 0.0;
        std::size_t oi = 0;
        auto emit = [&](double when) {
            if (observed) observed->push_back(start);
            if (traj) traj->push(when, start.x, start.label);
        };
        while (oi < obs.size() && obs[oi] <= 0.0) emit(obs[oi++]);
        for (;;) {
            // a label with zero intensity is absorbing
            double const rate = model_->rates.lambda(start.label);
            double const te = rate > 0.0 ? t + rng.exponential(rate) : std::numeric_limits<double>::infinity();
            while (oi < obs.size() && obs[oi] < te && obs[oi] <= T) {
                move(start.x, start.label, obs[oi] - t, rng);
                t = obs[oi];
                emit(obs[oi++]);
            }
            if (te >= T) {
                move(start.x, start.label, T - t, rng);
                break;
            }
            move(start.x, start.label, te - t, rng);
            t = te;
            start.label = jump(start.label, rng);
            if (traj) traj->push(t, start.x, start.label);
        }
    }

private:
    EffectiveModel const* model_;
    std::vector<Eigen::MatrixXd> chol_;
    std::vector<std::vector<double>> cum_;
};

/// Limit path on [0, T], recorded on a uniform grid of `grid` intervals and at every jump event.
inline Trajectory run_limit(LimitSampler const& sampler, State start, double T, RngStream& rng, int grid = 128) {
    if (!(T > 0.0)) throw ParameterError("T must be positive");
    if (grid < 1) throw ParameterError("output grid needs at least one interval");
    std::vector<double> obs(static_cast<std::size_t>(grid) + 1);
    for (int g = 0; g <= grid; ++g) obs[static_cast<std::size_t>(g)] = g == grid ? T : T * g / grid;
    Trajectory tr;
    tr.kind = TrajectoryKind::limit;
    tr.dim = static_cast<int>(start.x.size());
    sampler.simulate(std::move(start), T, obs, rng, nullptr, &tr);
    return tr;
}

/// Monte Carlo estimate with a 99% normal-approximation half-width.
struct Estimate {
    double mean = 0.0;
    double half_width = 0.0;
    std::size_t n = 0;
    bool exact = false;
};

/// Mean and 99% half-width of per-sample values, reduced in index order.
inline Estimate summarize(std::vector<double> const& v) {
    Estimate e;
    e.n = v.size();
    if (v.empty()) return e;
    // shifted sums keep a constant sample exactly constant
    double const v0 = v.front();
    double s = 0.0;
    for (double x : v) s += x - v0;
    e.mean = v0 + s / static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - e.mean) * (x - e.mean);
    double var = v.size() > 1 ? ss / static_cast<double>(v.size() - 1) : 0.0;
    e.half_width = kZ99 * std::sqrt(var / static_cast<double>(v.size()));
    return e;
}

/// Values F(X(t_i)) at the sorted observation times for n_paths limit paths;
/// path p uses stream (seed, stream_base + p). Result is [path][time].
inline std::vector<std::vector<State>> limit_observations(LimitSampler const& sampler, State const& start,
                                                          std::vector<double> const& times, std::size_t n_paths,
                                                          std::uint64_t seed, std::uint64_t stream_base,
                                                          unsigned workers) {
    std::vector<std::vector<State>> out(n_paths);
    double const T = times.empty() ? 0.0 : times.back();
    parallel_for(n_paths, workers, [&](std::size_t p) {
        RngStream rng(seed, stream_base + p);
        if (T <= 0.0) {
            out[p].assign(times.size(), start);
            return;
        }
        sampler.simulate(start, T, times, rng, &out[p], nullptr);
    });
    return out;
}

/// E[F(X(t))] for the limit process by Monte Carlo over n_paths (>= 100) paths.
inline Estimate limit_expectation(LimitSampler const& sampler, TestTuple const& F, State const& start, double t,
                                  std::size_t n_paths, std::uint64_t seed, std::uint64_t stream_base = 0,
                                  unsigned workers = 1) {
    if (n_paths < 100) throw ParameterError("limit_expectation needs at least 100 paths");
    if (t < 0.0) throw ParameterError("t must be nonnegative");
    if (t == 0.0) return {F(start.x, start.label), 0.0, n_paths, true};
    auto obs = limit_observations(sampler, start, {t}, n_paths, seed, stream_base, workers);
    std::vector<double> vals(n_paths);
    for (std::size_t p = 0; p < n_paths; ++p) vals[p] = F(obs[p][0].x, obs[p][0].label);
    return summarize(vals);
}

/// Function values on a lattice box at scale eps.
struct LatticeField {
    double eps = 0.0;
    BoxGrid box;
    std::vector<double> values;
    std::int64_t steps = 0;
    bool exact = true;

    [[nodiscard]] double at(IVec const& z) const { return values[box.index(z)]; }
};

/// pi_eps F on the box: f_{k(z)}(eps z).
inline LatticeField project(PeriodicEnvironment const& env, TestTuple const& F, double eps, BoxGrid box) {
    LatticeField out;
    out.eps = eps;
    out.values.resize(box.size());
    for (std::size_t i = 0; i < box.size(); ++i) {
        IVec z = box.point(i);
        out.values[i] = F(scaled(z, eps), env.partition.flat(env.geometry.cell_of(z)));
    }
    out.box = std::move(box);
    return out;
}

/// Applies the transition operator `steps` times. Each application shrinks the
/// box by the jump reach, so every returned value is exact.
inline LatticeField apply_transition(PeriodicEnvironment const& env, LatticeField in, std::int64_t steps) {
    auto const reach = env.jumps.reach;
    if (in.box.radius() < steps * reach) throw ParameterError("box too small for the requested number of steps");
    auto const d = env.dim();
    double const e2 = in.eps * in.eps;
    for (std::int64_t s = 0; s < steps; ++s) {
        BoxGrid next(in.box.center(), in.box.radius() - reach);
        std::vector<double> vals(next.size());
        IVec nb(d);
        for (std::size_t i = 0; i < next.size(); ++i) {
            IVec z = next.point(i);
            auto cell = env.geometry.cell_of(z);
            auto const& row = env.row(cell);
            // u + sum p (u(z + xi) - u(z)): constants are reproduced exactly
            double const here = in.values[in.box.index(z)];
            double acc = 0.0;
            for (auto const& j : row.jumps) {
                for (std::size_t k = 0; k < d; ++k) nb[k] = z[k] + j.offset[k];
                acc += (j.p0 + e2 * j.v) * (in.values[in.box.index(nb)] - here);
            }
            vals[i] = here + acc;
        }
        in.box = std::move(next);
        in.values = std::move(vals);
        in.steps += 1;
    }
    return in;
}

/// T_eps^{[t / eps^2]} pi_eps F on the lattice points eps z with |eps (z - center)|_inf <= R.
/// F is evaluated on the full dependency cone, so there is no truncation error.
inline LatticeField semigroup_apply(PeriodicEnvironment const& env, double eps, TestTuple const& F, double t, double R,
                                    IVec center = {}) {
    if (!(eps > 0.0) || eps > env.eps_max)
        throw ParameterError("eps = " + std::to_string(eps) + " outside (0, eps_max = " + std::to_string(env.eps_max) + "]");
    if (t < 0.0 || R < 0.0) throw ParameterError("t and R must be nonnegative");
    if (center.empty()) center.assign(env.dim(), 0);
    auto const n = step_count(t, eps);
    auto const Z = static_cast<std::int64_t>(std::floor(R / eps + 1e-9));
    auto field = project(env, F, eps, BoxGrid(center, Z + n * env.jumps.reach));
    return apply_transition(env, std::move(field), n);
}

/// Exact E[F(X_eps(t1)) G(X_eps(t2))] from lattice point z0, t1 <= t2.
inline double semigroup_two_time(PeriodicEnvironment const& env, double eps, TestTuple const& F, double t1,
                                 TestTuple const& G, double t2, IVec const& z0) {
    auto const n1 = step_count(t1, eps), n2 = step_count(t2, eps);
    if (n2 < n1) throw ParameterError("two-time statistic needs t1 <= t2");
    auto const reach = env.jumps.reach;
    auto inner = apply_transition(env, project(env, G, eps, BoxGrid(z0, n2 * reach)), n2 - n1);
    auto f = project(env, F, eps, inner.box);
    for (std::size_t i = 0; i < f.values.size(); ++i) f.values[i] *= inner.values[i];
    return apply_transition(env, std::move(f), n1).at(z0);
}

}  // namespace hcwalk
