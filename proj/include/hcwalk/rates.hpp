#pragma once

#include <Eigen/Dense>

#include "environment.hpp"

namespace hcwalk {

/// Transition intensities of the limit label process.
struct RateTable {
    Eigen::MatrixXd alpha;   // alpha(k, j), zero diagonal
    Eigen::VectorXd lambda;  // total jump intensity per label
    Eigen::MatrixXd mu;      // embedded jump chain, rows sum to one

    [[nodiscard]] int size() const noexcept { return static_cast<int>(lambda.size()); }
};

/// alpha(k, j) = (1/|S_k|) sum_{y in S_k} v(y, S_j), S_k the cells carrying label k.
/// For an astral label |S_k| = 1, which yields the unaveraged sums for astral rows.
inline RateTable compute_rates(PeriodicEnvironment const& env) {
    auto const& part = env.partition;
    int const L = part.label_count();
    RateTable r;
    r.alpha = Eigen::MatrixXd::Zero(L, L);
    r.lambda = Eigen::VectorXd::Zero(L);
    r.mu = Eigen::MatrixXd::Zero(L, L);

    std::vector<double> size(static_cast<std::size_t>(L), 0.0);
    for (std::int64_t y = 0; y < env.cell_count(); ++y) {
        int const k = part.flat(y);
        size[static_cast<std::size_t>(k)] += 1.0;
        for (auto const& j : env.row(y).jumps) {
            int const l = part.flat(j.target);
            if (l != k) r.alpha(k, l) += j.v;
        }
    }
    for (int k = 0; k < L; ++k) {
        r.alpha.row(k) /= size[static_cast<std::size_t>(k)];
        r.lambda(k) = r.alpha.row(k).sum();
        if (r.lambda(k) > 0.0) r.mu.row(k) = r.alpha.row(k) / r.lambda(k);
    }
    return r;
}

}  // namespace hcwalk
