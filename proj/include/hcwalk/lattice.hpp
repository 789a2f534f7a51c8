#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace hcwalk {

/// Integer lattice vector in Z^d (d is a runtime quantity).
using IVec = std::vector<std::int64_t>;
/// Real vector in R^d.
using RVec = std::vector<double>;

inline std::int64_t floor_div(std::int64_t a, std::int64_t b) {
    std::int64_t q = a / b;
    if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
    return q;
}

inline std::int64_t floor_mod(std::int64_t a, std::int64_t b) {
    return a - floor_div(a, b) * b;
}

inline std::string to_string(IVec const& v) {
    std::string s = "(";
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(v[i]);
    }
    return s + ")";
}

inline double euclid_norm(IVec const& v) {
    double s = 0.0;
    for (auto c : v) s += static_cast<double>(c) * static_cast<double>(c);
    return std::sqrt(s);
}

inline std::int64_t sup_norm(IVec const& v) {
    std::int64_t m = 0;
    for (auto c : v) m = std::max(m, c < 0 ? -c : c);
    return m;
}

/// The periodicity cell, identified with the discrete torus Z^d / (period).
class TorusGeometry {
public:
    TorusGeometry() = default;

    explicit TorusGeometry(IVec period) : period_(std::move(period)) {
        if (period_.empty()) throw std::invalid_argument("torus dimension must be >= 1");
        stride_.assign(period_.size(), 1);
        cell_count_ = 1;
        for (std::size_t i = period_.size(); i-- > 0;) {
            if (period_[i] < 1)
                throw std::invalid_argument("period entries must be >= 1");
            stride_[i] = cell_count_;
            cell_count_ *= period_[i];
        }
    }

    [[nodiscard]] std::size_t dim() const noexcept { return period_.size(); }
    [[nodiscard]] IVec const& period() const noexcept { return period_; }
    [[nodiscard]] std::int64_t cell_count() const noexcept { return cell_count_; }

    /// Linear index of the cell containing lattice point z.
    [[nodiscard]] std::int64_t cell_of(IVec const& z) const {
        std::int64_t idx = 0;
        for (std::size_t i = 0; i < period_.size(); ++i)
            idx += floor_mod(z[i], period_[i]) * stride_[i];
        return idx;
    }

    /// Like cell_of, and also returns the period translation w with z = coords(cell) + period*w.
    [[nodiscard]] std::int64_t split(IVec const& z, IVec& wrap) const {
        wrap.resize(period_.size());
        std::int64_t idx = 0;
        for (std::size_t i = 0; i < period_.size(); ++i) {
            wrap[i] = floor_div(z[i], period_[i]);
            idx += (z[i] - wrap[i] * period_[i]) * stride_[i];
        }
        return idx;
    }

    [[nodiscard]] IVec coords(std::int64_t cell) const {
        IVec c(period_.size());
        for (std::size_t i = 0; i < period_.size(); ++i) {
            c[i] = cell / stride_[i];
            cell -= c[i] * stride_[i];
        }
        return c;
    }

    [[nodiscard]] bool in_cell_range(IVec const& z) const {
        if (z.size() != period_.size()) return false;
        for (std::size_t i = 0; i < z.size(); ++i)
            if (z[i] < 0 || z[i] >= period_[i]) return false;
        return true;
    }

private:
    IVec period_;
    IVec stride_;
    std::int64_t cell_count_ = 0;
};

}  // namespace hcwalk
