#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "corrector.hpp"
#include "environment.hpp"
#include "grid.hpp"
#include "test_functions.hpp"

namespace hcwalk {

inline Eigen::VectorXd scaled(IVec const& z, double eps) {
    Eigen::VectorXd x(static_cast<Eigen::Index>(z.size()));
    for (std::size_t i = 0; i < z.size(); ++i) x(static_cast<Eigen::Index>(i)) = eps * static_cast<double>(z[i]);
    return x;
}

/// Limit generator applied to F at (x, label): Theta^i : Hess f_i plus the
/// label jump part sum_l alpha(k, l) (f_l - f_k).
inline double limit_generator(EffectiveModel const& model, TestTuple const& F, Eigen::VectorXd const& x, int label) {
    double fk = F.f[static_cast<std::size_t>(label)].value(x);
    double out = 0.0;
    if (label < model.fast_count)
        out += (model.theta[static_cast<std::size_t>(label)].array() *
                F.f[static_cast<std::size_t>(label)].hessian(x).array()).sum();
    for (int l = 0; l < model.label_count(); ++l)
        if (l != label) out += model.rates.alpha(label, l) * (F.f[static_cast<std::size_t>(l)].value(x) - fk);
    return out;
}

/// Corrected test function F_eps at the lattice point z (position eps z).
///
/// On a fast cell of component i:
///   f_i + eps (grad f_i, h) + eps^2 (Hess f_i, g) + eps^2 sum_l q_l (f_i - f_l);
/// on an astral cell the plain f_k.
inline double corrected_value(PeriodicEnvironment const& env, CorrectorSet const& cs, TestTuple const& F,
                              double eps, IVec const& z) {
    auto cell = env.geometry.cell_of(z);
    auto lab = env.label_of_cell(cell);
    int const k = flat_label(lab, env.partition.fast_count);
    Eigen::VectorXd x = scaled(z, eps);
    auto const& fk = F.f[static_cast<std::size_t>(k)];
    double val = fk.value(x);
    if (lab.is_astral()) return val;

    auto const& c = cs.components[static_cast<std::size_t>(lab.index)];
    auto const r = c.row_of(cell);
    auto const d = static_cast<Eigen::Index>(env.dim());
    Eigen::VectorXd grad = fk.gradient(x);
    Eigen::MatrixXd hess = fk.hessian(x);
    double first = grad.dot(c.h.row(r).transpose());
    double second = 0.0;
    for (Eigen::Index a = 0; a < d; ++a)
        for (Eigen::Index b = 0; b < d; ++b) second += hess(a, b) * c.g(r, a * d + b);
    double exchange = 0.0;
    for (int l = 0; l < static_cast<int>(F.f.size()); ++l)
        if (l != k) exchange += c.q(r, l) * (val - F.f[static_cast<std::size_t>(l)].value(x));
    return val + eps * first + eps * eps * (second + exchange);
}

struct LemmaResidual {
    double eps = 0.0;
    double sup = 0.0;         // over the whole window
    double sup_fast = 0.0;
    double sup_astral = 0.0;
    IVec argmax;
    std::size_t points = 0;
    bool window_warning = false;  // F not negligible on the window boundary
};

/// sup over lattice points eps z in [-R, R]^d of |L_eps F_eps - pi_eps L F|, with
/// L_eps = eps^-2 (T_eps - I) applied by direct summation over jumps.
inline LemmaResidual lemma_residual(PeriodicEnvironment const& env, Homogenization const& hom, TestTuple const& F,
                                    double eps, double R) {
    if (!(eps > 0.0) || eps > env.eps_max)
        throw ParameterError("eps = " + std::to_string(eps) + " outside (0, eps_max = " + std::to_string(env.eps_max) + "]");
    auto const d = env.dim();
    auto const Z = static_cast<std::int64_t>(std::floor(R / eps + 1e-9));
    auto const reach = env.jumps.reach;
    BoxGrid outer(IVec(d, 0), Z + reach);
    std::vector<double> Fe(outer.size());
    for (std::size_t i = 0; i < outer.size(); ++i) Fe[i] = corrected_value(env, hom.correctors, F, eps, outer.point(i));

    LemmaResidual out;
    out.eps = eps;
    BoxGrid window(IVec(d, 0), Z);
    out.points = window.size();
    double const e2 = eps * eps;
    for (std::size_t i = 0; i < window.size(); ++i) {
        IVec z = window.point(i);
        auto cell = env.geometry.cell_of(z);
        double const here = Fe[outer.index(z)];
        double acc = 0.0;
        IVec nb(d);
        for (auto const& j : env.row(cell).jumps) {
            for (std::size_t k = 0; k < d; ++k) nb[k] = z[k] + j.offset[k];
            acc += (j.p0 + e2 * j.v) * (Fe[outer.index(nb)] - here);
        }
        double const disc = acc / e2;
        int const k = env.partition.flat(cell);
        Eigen::VectorXd x = scaled(z, eps);
        double const lim = limit_generator(hom.model, F, x, k);
        double const r = std::abs(disc - lim);
        if (env.label_of_cell(cell).is_fast()) out.sup_fast = std::max(out.sup_fast, r);
        else out.sup_astral = std::max(out.sup_astral, r);
        if (r > out.sup || out.argmax.empty()) {
            out.sup = std::max(out.sup, r);
            out.argmax = z;
        }
        bool boundary = false;
        for (std::size_t a = 0; a < d; ++a) boundary = boundary || z[a] == Z || z[a] == -Z;
        if (boundary && std::abs(F(x, k)) > 1e-10) out.window_warning = true;
    }
    return out;
}

/// Least-squares slope of log(residual) against log(eps).
inline double loglog_slope(std::vector<double> const& eps, std::vector<double> const& val) {
    double n = static_cast<double>(eps.size()), sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < eps.size(); ++i) {
        double x = std::log(eps[i]), y = std::log(val[i]);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace hcwalk
