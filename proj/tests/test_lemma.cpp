#include <cmath>

#include <gtest/gtest.h>

#include <hcwalk/lemma.hpp>
#include <hcwalk/load.hpp>

#include "support.hpp"

using namespace hcwalk;
using namespace hcwalk::testing;

namespace {

// f on fast labels = exp(-|x|^2), on astral labels = exp(-|x|^2 / 2)
TestTuple gaussian_tuple(EffectiveModel const& m) {
    TestTuple F{"gauss", {}};
    for (int k = 0; k < m.label_count(); ++k)
        F.f.push_back(TestFunction::gaussian(1.0, k < m.fast_count ? 1.0 : 0.5, Eigen::VectorXd::Zero(m.dim)));
    return F;
}

}  // namespace

TEST(TestFunctions, DerivativesMatchFiniteDifferences) {
    Eigen::Vector2d c(0.3, -0.2);
    std::vector<TestFunction> fns{TestFunction::gaussian(1.3, 0.7, c), TestFunction::cosine_bump(0.8, 1.5, c),
                                  TestFunction::affine(0.5, Eigen::Vector2d(1.0, -2.0)), TestFunction::quadratic(2.0, c)};
    double const h = 1e-5;
    for (auto const& f : fns)
        for (Eigen::Vector2d x : {Eigen::Vector2d(0.1, 0.4), Eigen::Vector2d(-0.6, 0.2), Eigen::Vector2d(0.9, -0.5)}) {
            Eigen::VectorXd g = f.gradient(x);
            Eigen::MatrixXd H = f.hessian(x);
            for (int a = 0; a < 2; ++a) {
                Eigen::Vector2d e = Eigen::Vector2d::Zero();
                e(a) = h;
                EXPECT_NEAR(g(a), (f.value(x + e) - f.value(x - e)) / (2 * h), 1e-7);
                Eigen::VectorXd dg = (f.gradient(x + e) - f.gradient(x - e)) / (2 * h);
                for (int b = 0; b < 2; ++b) EXPECT_NEAR(H(b, a), dg(b), 1e-6);
            }
        }
}

TEST(LimitGenerator, OneDimClosedForm) {
    auto env = load_environment_file(env_path("one_dim.json"));
    auto hom = homogenize(env);
    auto F = gaussian_tuple(hom.model);
    Eigen::VectorXd x(1);
    x << 0.7;
    double f0 = std::exp(-0.49), f1 = std::exp(-0.245);
    double f0pp = (4 * 0.49 - 2) * f0;
    EXPECT_NEAR(limit_generator(hom.model, F, x, 0), 2.0 * f0pp + 2.0 * (f1 - f0), 1e-14);
    EXPECT_NEAR(limit_generator(hom.model, F, x, 1), 2.0 * (f0 - f1), 1e-14);
}

TEST(Lemma, ConstantTupleHasZeroResidual) {
    for (auto name : {"one_dim.json", "two_fast.json", "two_dim.json"}) {
        auto env = load_environment_file(env_path(name));
        auto hom = homogenize(env);
        auto F = TestTuple::uniform("c", TestFunction::constant(2.5), hom.model.label_count());
        for (double eps : {0.4, 0.1}) EXPECT_LE(lemma_residual(env, hom, F, eps, 2.0).sup, 1e-12) << name;
    }
}

TEST(Lemma, OneDimResidualDecaysAtLeastLinearly) {
    auto env = load_environment_file(env_path("one_dim.json"));
    auto hom = homogenize(env);
    TestTuple F{"paired", {TestFunction::gaussian(1.0, 1.0), TestFunction::gaussian(1.0, 0.5)}};
    std::vector<double> eps{0.4, 0.2, 0.1}, res;
    for (double e : eps) res.push_back(lemma_residual(env, hom, F, e, 8.0).sup);
    EXPECT_LT(res[1], res[0]);
    EXPECT_LT(res[2], res[1]);
    EXPECT_GE(loglog_slope(eps, res), 0.8);
}

TEST(Lemma, AffineTupleResidualIsFirstOrder) {
    // a common affine f has zero limit generator and the h terms cancel
    // through the corrector equation; what is left comes from the eps^2 V
    // part acting on eps (grad f, h), which is O(eps)
    auto env = load_environment_file(env_path("two_dim.json"));
    auto hom = homogenize(env);
    auto F = TestTuple::uniform("lin", TestFunction::affine(1.0, Eigen::Vector2d(0.3, -0.8)), hom.model.label_count());
    std::vector<double> eps{0.2, 0.1, 0.05}, res;
    for (double e : eps) res.push_back(lemma_residual(env, hom, F, e, 1.0).sup);
    EXPECT_NEAR(loglog_slope(eps, res), 1.0, 0.05);
}

TEST(Lemma, GaugeShiftOfCorrectorVanishesWithEps) {
    // shifting h by a constant c moves Phi by drift x c, so g is re-solved with
    // the shifted h; what changes in F_eps is then eps (grad f, c) plus an eps^2
    // term, and the residual moves by O(eps)
    auto env = load_environment_file(env_path("two_dim.json"));
    auto hom = homogenize(env);
    auto shifted = hom;
    auto& c = shifted.correctors.components[0];
    ComponentOperator K(env, c.cells);
    c.h.col(0).array() += 0.75;
    c.h.col(1).array() -= 0.5;
    c.g = solve_g(K, phi_field(K, c.h), c.theta);
    auto F = gaussian_tuple(hom.model);
    std::vector<double> eps{0.2, 0.1, 0.05}, diff;
    for (double e : eps)
        diff.push_back(std::abs(lemma_residual(env, hom, F, e, 6.0).sup - lemma_residual(env, shifted, F, e, 6.0).sup));
    EXPECT_LT(diff[1], diff[0]);
    EXPECT_LT(diff[2], diff[1]);
    EXPECT_GE(loglog_slope(eps, diff), 0.8);
}

TEST(Lemma, RejectsEpsAboveEpsMax) {
    auto env = load_environment_file(env_path("one_dim.json"));
    auto hom = homogenize(env);
    EXPECT_THROW((void)lemma_residual(env, hom, gaussian_tuple(hom.model), 0.75, 3.0), ParameterError);
}

TEST(Lemma, ReportsWindowTooSmall) {
    auto env = load_environment_file(env_path("one_dim.json"));
    auto hom = homogenize(env);
    auto r = lemma_residual(env, hom, gaussian_tuple(hom.model), 0.1, 1.0);
    EXPECT_TRUE(r.window_warning);
    EXPECT_FALSE(lemma_residual(env, hom, gaussian_tuple(hom.model), 0.1, 8.0).window_warning);
}

TEST(CorrectedValue, AstralCellsCarryPlainFunction) {
    auto env = load_environment_file(env_path("two_dim.json"));
    auto hom = homogenize(env);
    auto F = gaussian_tuple(hom.model);
    for (IVec z : {IVec{1, 1}, IVec{4, -2}, IVec{-5, 7}}) {
        Eigen::VectorXd x = scaled(z, 0.2);
        EXPECT_EQ(corrected_value(env, hom.correctors, F, 0.2, z), F(x, 1));
    }
}

TEST(Slope, ExactPowerLaw) {
    std::vector<double> e{0.4, 0.2, 0.1}, r{3 * 0.16, 3 * 0.04, 3 * 0.01};
    EXPECT_NEAR(loglog_slope(e, r), 2.0, 1e-12);
}
