#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "environment.hpp"
#include "rates.hpp"

namespace hcwalk {

/// Residual sup-norm every corrector solve must reach.
inline constexpr double kSolverTolerance = 1e-10;
/// Largest admissible |mean| of a right-hand side handed to a singular solve.
inline constexpr double kFredholmTolerance = 1e-10;

class SolverError : public std::runtime_error {
public:
    SolverError(std::string what_failed, std::string const& detail)
        : std::runtime_error(what_failed + ": " + detail), kind_(std::move(what_failed)) {}
    [[nodiscard]] std::string const& kind() const noexcept { return kind_; }

private:
    std::string kind_;
};

enum class SingularMethod { conjugate_gradient, pinned_direct };

/// The operator I - P0 restricted to the cells of one fast component.
///
/// Because P0 is symmetric and irreducible on the component, the operator is
/// symmetric positive semidefinite with kernel spanned by constants.
class ComponentOperator {
public:
    ComponentOperator(PeriodicEnvironment const& env, std::vector<std::int64_t> cells)
        : env_(&env), cells_(std::move(cells)), local_(static_cast<std::size_t>(env.cell_count()), -1) {
        for (std::size_t i = 0; i < cells_.size(); ++i) local_[static_cast<std::size_t>(cells_[i])] = static_cast<int>(i);
        for (std::size_t i = 0; i < cells_.size(); ++i)
            for (auto const& j : env.row(cells_[i]).jumps)
                if (j.p0 > 0.0 && local_[static_cast<std::size_t>(j.target)] < 0)
                    throw SolverError("component", "P0 leaves the component at cell " +
                                                       to_string(env.geometry.coords(cells_[i])));
    }

    [[nodiscard]] Eigen::Index size() const noexcept { return static_cast<Eigen::Index>(cells_.size()); }
    [[nodiscard]] std::vector<std::int64_t> const& cells() const noexcept { return cells_; }
    [[nodiscard]] int local(std::int64_t cell) const { return local_[static_cast<std::size_t>(cell)]; }
    [[nodiscard]] PeriodicEnvironment const& env() const noexcept { return *env_; }

    /// (I - P0) u on the component.
    [[nodiscard]] Eigen::VectorXd apply(Eigen::VectorXd const& u) const {
        Eigen::VectorXd out = Eigen::VectorXd::Zero(size());
        for (Eigen::Index i = 0; i < size(); ++i) {
            double s = 0.0;
            for (auto const& j : env_->row(cells_[static_cast<std::size_t>(i)]).jumps)
                if (j.p0 > 0.0) s += j.p0 * (u(i) - u(local(j.target)));
            out(i) = s;
        }
        return out;
    }

    /// Dense matrix of I - P0 on the component.
    [[nodiscard]] Eigen::MatrixXd dense() const {
        Eigen::MatrixXd K = Eigen::MatrixXd::Zero(size(), size());
        for (Eigen::Index i = 0; i < size(); ++i)
            for (auto const& j : env_->row(cells_[static_cast<std::size_t>(i)]).jumps)
                if (j.p0 > 0.0) {
                    K(i, i) += j.p0;
                    K(i, local(j.target)) -= j.p0;
                }
        return K;
    }

private:
    PeriodicEnvironment const* env_;
    std::vector<std::int64_t> cells_;
    std::vector<int> local_;
};

struct SingularSolve {
    Eigen::VectorXd solution;   // zero mean
    double residual = 0.0;      // sup |K u - (b - mean b)|
    double fredholm = 0.0;      // |mean b|
    int iterations = 0;
};

namespace detail {

inline Eigen::VectorXd cg_mean_zero(ComponentOperator const& K, Eigen::VectorXd const& b, int& iters) {
    auto const n = K.size();
    Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd r = b;
    double const bnorm = std::max(1.0, b.lpNorm<Eigen::Infinity>());
    if (r.lpNorm<Eigen::Infinity>() <= 1e-15 * bnorm) return x;
    Eigen::VectorXd p = r;
    double rr = r.squaredNorm();
    int const max_iter = static_cast<int>(10 * n + 200);
    for (iters = 0; iters < max_iter; ++iters) {
        Eigen::VectorXd Kp = K.apply(p);
        double const pKp = p.dot(Kp);
        if (!(pKp > 0.0)) break;
        double const a = rr / pKp;
        x += a * p;
        r -= a * Kp;
        r.array() -= r.mean();
        if (r.lpNorm<Eigen::Infinity>() <= 1e-15 * bnorm) break;
        double const rr_new = r.squaredNorm();
        p = r + (rr_new / rr) * p;
        rr = rr_new;
    }
    return x;
}

inline Eigen::VectorXd pinned_direct(ComponentOperator const& K, Eigen::VectorXd const& b) {
    auto const n = K.size();
    Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
    if (n == 1) return x;
    Eigen::MatrixXd A = K.dense().bottomRightCorner(n - 1, n - 1);
    x.tail(n - 1) = A.ldlt().solve(b.tail(n - 1));
    return x;
}

}  // namespace detail

/// Solves (I - P0) u = b on one component, on the complement of constants.
///
/// b must be orthogonal to constants up to kFredholmTolerance. The returned
/// solution has zero mean over the component.
inline SingularSolve solve_singular(ComponentOperator const& K, Eigen::VectorXd b,
                                    SingularMethod method = SingularMethod::conjugate_gradient,
                                    std::string const& what = "singular solve") {
    SingularSolve out;
    out.fredholm = std::abs(b.mean());
    if (out.fredholm > kFredholmTolerance)
        throw SolverError("fredholm", what + ": right-hand side mean " + std::to_string(out.fredholm) +
                                          " is not orthogonal to constants");
    b.array() -= b.mean();
    out.solution = method == SingularMethod::conjugate_gradient ? detail::cg_mean_zero(K, b, out.iterations)
                                                                : detail::pinned_direct(K, b);
    out.solution.array() -= out.solution.mean();
    out.residual = (K.apply(out.solution) - b).lpNorm<Eigen::Infinity>();
    if (!(out.residual <= kSolverTolerance))
        throw SolverError("residual", what + ": residual " + std::to_string(out.residual) + " above tolerance");
    return out;
}

/// Correctors attached to one fast component B_i. Rows follow `cells`.
struct ComponentCorrector {
    std::vector<std::int64_t> cells;
    Eigen::MatrixXd h;      // |B_i| x d
    Eigen::MatrixXd phi;    // |B_i| x d*d, row-major d x d blocks (unsymmetrized)
    Eigen::MatrixXd g;      // |B_i| x d*d, symmetric blocks
    Eigen::MatrixXd q;      // |B_i| x L, column l solves against label l (own column zero)
    Eigen::MatrixXd theta;  // symmetrized effective diffusion matrix
    Eigen::MatrixXd theta_raw;
    double h_residual = 0.0, g_residual = 0.0, q_residual = 0.0;
    double h_fredholm = 0.0, g_fredholm = 0.0, q_fredholm = 0.0;
    std::vector<int> local;  // cell -> row, -1 outside

    [[nodiscard]] int row_of(std::int64_t cell) const { return local[static_cast<std::size_t>(cell)]; }
};

struct CorrectorSet {
    std::vector<ComponentCorrector> components;

    [[nodiscard]] double max_residual() const {
        double r = 0.0;
        for (auto const& c : components) r = std::max({r, c.h_residual, c.g_residual, c.q_residual});
        return r;
    }
    [[nodiscard]] double max_fredholm() const {
        double r = 0.0;
        for (auto const& c : components) r = std::max({r, c.h_fredholm, c.g_fredholm, c.q_fredholm});
        return r;
    }
};

/// Vector corrector: sum_xi p_xi(y) (xi + h(y+xi) - h(y)) = 0 on the component,
/// i.e. (I - P0) h = drift with drift(y) = sum_xi p_xi(y) xi.
inline Eigen::MatrixXd solve_h(ComponentOperator const& K, double* residual = nullptr, double* fredholm = nullptr,
                               SingularMethod method = SingularMethod::conjugate_gradient) {
    auto const& env = K.env();
    auto const d = static_cast<Eigen::Index>(env.dim());
    Eigen::MatrixXd drift = Eigen::MatrixXd::Zero(K.size(), d);
    for (Eigen::Index i = 0; i < K.size(); ++i)
        for (auto const& j : env.row(K.cells()[static_cast<std::size_t>(i)]).jumps)
            for (Eigen::Index k = 0; k < d; ++k) drift(i, k) += j.p0 * static_cast<double>(j.offset[static_cast<std::size_t>(k)]);
    Eigen::MatrixXd h(K.size(), d);
    double res = 0.0, fr = 0.0;
    for (Eigen::Index k = 0; k < d; ++k) {
        auto s = solve_singular(K, drift.col(k), method, "h direction " + std::to_string(k + 1));
        h.col(k) = s.solution;
        res = std::max(res, s.residual);
        fr = std::max(fr, s.fredholm);
    }
    if (residual) *residual = res;
    if (fredholm) *fredholm = fr;
    return h;
}

/// Phi(h)(y) = sum_xi p_xi(y) xi (x) (xi/2 + h(y+xi)), one row-major d x d block per cell.
inline Eigen::MatrixXd phi_field(ComponentOperator const& K, Eigen::MatrixXd const& h) {
    auto const& env = K.env();
    auto const d = static_cast<Eigen::Index>(env.dim());
    Eigen::MatrixXd phi = Eigen::MatrixXd::Zero(K.size(), d * d);
    for (Eigen::Index i = 0; i < K.size(); ++i)
        for (auto const& j : env.row(K.cells()[static_cast<std::size_t>(i)]).jumps) {
            if (j.p0 <= 0.0) continue;
            auto t = K.local(j.target);
            for (Eigen::Index a = 0; a < d; ++a)
                for (Eigen::Index b = 0; b < d; ++b) {
                    double xa = static_cast<double>(j.offset[static_cast<std::size_t>(a)]);
                    double xb = static_cast<double>(j.offset[static_cast<std::size_t>(b)]);
                    phi(i, a * d + b) += j.p0 * xa * (0.5 * xb + h(t, b));
                }
        }
    return phi;
}

inline Eigen::MatrixXd block(Eigen::MatrixXd const& field, Eigen::Index row, Eigen::Index d) {
    Eigen::MatrixXd m(d, d);
    for (Eigen::Index a = 0; a < d; ++a)
        for (Eigen::Index b = 0; b < d; ++b) m(a, b) = field(row, a * d + b);
    return m;
}

/// Cell average of Phi(h), before symmetrization.
inline Eigen::MatrixXd theta_unsymmetrized(Eigen::MatrixXd const& phi, Eigen::Index d) {
    Eigen::MatrixXd t(d, d);
    for (Eigen::Index a = 0; a < d; ++a)
        for (Eigen::Index b = 0; b < d; ++b) t(a, b) = phi.col(a * d + b).mean();
    return t;
}

/// Effective diffusion matrix of the component, symmetrized and checked positive definite.
inline Eigen::MatrixXd compute_theta(ComponentOperator const& K, Eigen::MatrixXd const& h) {
    auto const d = static_cast<Eigen::Index>(K.env().dim());
    Eigen::MatrixXd t = theta_unsymmetrized(phi_field(K, h), d);
    Eigen::MatrixXd s = 0.5 * (t + t.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s, Eigen::EigenvaluesOnly);
    if (!(es.eigenvalues().minCoeff() > 0.0))
        throw SolverError("theta_not_pd", "effective diffusion matrix has min eigenvalue " +
                                              std::to_string(es.eigenvalues().minCoeff()));
    return s;
}

/// (Theta eta, eta) evaluated through the Dirichlet form
/// (1 / (2|B|)) sum_{y,xi} p_xi(y) ((xi + h(y+xi) - h(y)) . eta)^2.
inline double theta_quadratic_form(ComponentOperator const& K, Eigen::MatrixXd const& h, Eigen::VectorXd const& eta) {
    auto const& env = K.env();
    auto const d = static_cast<Eigen::Index>(env.dim());
    double s = 0.0;
    for (Eigen::Index i = 0; i < K.size(); ++i)
        for (auto const& j : env.row(K.cells()[static_cast<std::size_t>(i)]).jumps) {
            if (j.p0 <= 0.0) continue;
            auto t = K.local(j.target);
            double dot = 0.0;
            for (Eigen::Index a = 0; a < d; ++a)
                dot += (static_cast<double>(j.offset[static_cast<std::size_t>(a)]) + h(t, a) - h(i, a)) * eta(a);
            s += j.p0 * dot * dot;
        }
    return s / (2.0 * static_cast<double>(K.size()));
}

/// Second corrector: (I - P0) g_km = sym(Phi)_km - Theta_km, zero mean.
inline Eigen::MatrixXd solve_g(ComponentOperator const& K, Eigen::MatrixXd const& phi, Eigen::MatrixXd const& theta,
                               double* residual = nullptr, double* fredholm = nullptr,
                               SingularMethod method = SingularMethod::conjugate_gradient) {
    auto const d = theta.rows();
    Eigen::MatrixXd g(K.size(), d * d);
    double res = 0.0, fr = 0.0;
    for (Eigen::Index a = 0; a < d; ++a)
        for (Eigen::Index b = a; b < d; ++b) {
            Eigen::VectorXd rhs = 0.5 * (phi.col(a * d + b) + phi.col(b * d + a));
            rhs.array() -= theta(a, b);
            auto s = solve_singular(K, rhs, method, "g(" + std::to_string(a + 1) + "," + std::to_string(b + 1) + ")");
            g.col(a * d + b) = s.solution;
            g.col(b * d + a) = s.solution;
            res = std::max(res, s.residual);
            fr = std::max(fr, s.fredholm);
        }
    if (residual) *residual = res;
    if (fredholm) *fredholm = fr;
    return g;
}

/// Exchange correctors: for every label l other than the component's own,
/// (I - P0) q_l = alpha_l - v(., S_l) with alpha_l the component average of v(., S_l).
inline Eigen::MatrixXd solve_q(ComponentOperator const& K, int own_label, Eigen::VectorXd* alpha_out = nullptr,
                               double* residual = nullptr, double* fredholm = nullptr,
                               SingularMethod method = SingularMethod::conjugate_gradient) {
    auto const& env = K.env();
    int const L = env.partition.label_count();
    Eigen::MatrixXd q = Eigen::MatrixXd::Zero(K.size(), L);
    Eigen::VectorXd alpha = Eigen::VectorXd::Zero(L);
    double res = 0.0, fr = 0.0;
    for (int l = 0; l < L; ++l) {
        if (l == own_label) continue;
        Eigen::VectorXd vy(K.size());
        for (Eigen::Index i = 0; i < K.size(); ++i) vy(i) = env.v_to_label(K.cells()[static_cast<std::size_t>(i)], l);
        alpha(l) = vy.mean();
        Eigen::VectorXd rhs = alpha(l) - vy.array();
        auto s = solve_singular(K, rhs, method, "q toward " + label_name(label_from_flat(l, env.partition.fast_count)));
        q.col(l) = s.solution;
        res = std::max(res, s.residual);
        fr = std::max(fr, s.fredholm);
    }
    if (alpha_out) *alpha_out = alpha;
    if (residual) *residual = res;
    if (fredholm) *fredholm = fr;
    return q;
}

/// Limit model: one diffusion matrix per fast component plus the label jump rates.
struct EffectiveModel {
    int dim = 0;
    int fast_count = 0;
    int astral_count = 0;
    std::vector<Eigen::MatrixXd> theta;
    RateTable rates;

    [[nodiscard]] int label_count() const noexcept { return fast_count + astral_count; }
};

struct Homogenization {
    CorrectorSet correctors;
    EffectiveModel model;
};

inline ComponentCorrector solve_component(PeriodicEnvironment const& env, int comp,
                                          SingularMethod method = SingularMethod::conjugate_gradient) {
    ComponentOperator K(env, env.partition.fast_cells[static_cast<std::size_t>(comp)]);
    auto const d = static_cast<Eigen::Index>(env.dim());
    ComponentCorrector c;
    c.cells = K.cells();
    c.local.assign(static_cast<std::size_t>(env.cell_count()), -1);
    for (std::size_t i = 0; i < c.cells.size(); ++i) c.local[static_cast<std::size_t>(c.cells[i])] = static_cast<int>(i);
    c.h = solve_h(K, &c.h_residual, &c.h_fredholm, method);
    c.phi = phi_field(K, c.h);
    c.theta_raw = theta_unsymmetrized(c.phi, d);
    c.theta = compute_theta(K, c.h);
    c.g = solve_g(K, c.phi, c.theta, &c.g_residual, &c.g_fredholm, method);
    c.q = solve_q(K, comp, nullptr, &c.q_residual, &c.q_fredholm, method);
    return c;
}

/// Solves every corrector problem and assembles the effective model.
inline Homogenization homogenize(PeriodicEnvironment const& env,
                                 SingularMethod method = SingularMethod::conjugate_gradient) {
    Homogenization out;
    auto& m = out.model;
    m.dim = static_cast<int>(env.dim());
    m.fast_count = env.partition.fast_count;
    m.astral_count = env.partition.astral_count;
    for (int i = 0; i < env.partition.fast_count; ++i) {
        out.correctors.components.push_back(solve_component(env, i, method));
        m.theta.push_back(out.correctors.components.back().theta);
    }
    m.rates = compute_rates(env);
    for (int k = 0; k < m.rates.size(); ++k)
        if (!(m.rates.lambda(k) > 0.0))
            throw SolverError("rates", "lambda(" + label_name(label_from_flat(k, m.fast_count)) + ") is zero");
    return out;
}

}  // namespace hcwalk
