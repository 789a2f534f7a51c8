#pragma once

#include <cstdint>
#include <vector>

#include "lattice.hpp"

namespace hcwalk {

/// Cube of lattice points {z : |z - center|_inf <= radius}, stored densely.
class BoxGrid {
public:
    BoxGrid() = default;
    BoxGrid(IVec center, std::int64_t radius) : center_(std::move(center)), radius_(radius) {
        side_ = 2 * radius_ + 1;
        size_ = 1;
        for (std::size_t i = 0; i < center_.size(); ++i) size_ *= side_;
    }

    [[nodiscard]] std::size_t dim() const noexcept { return center_.size(); }
    [[nodiscard]] std::int64_t radius() const noexcept { return radius_; }
    [[nodiscard]] IVec const& center() const noexcept { return center_; }
    [[nodiscard]] std::size_t size() const noexcept { return static_cast<std::size_t>(size_); }

    [[nodiscard]] bool contains(IVec const& z) const {
        for (std::size_t i = 0; i < z.size(); ++i) {
            auto r = z[i] - center_[i];
            if (r < -radius_ || r > radius_) return false;
        }
        return true;
    }

    [[nodiscard]] std::size_t index(IVec const& z) const {
        std::int64_t idx = 0;
        for (std::size_t i = 0; i < z.size(); ++i) idx = idx * side_ + (z[i] - center_[i] + radius_);
        return static_cast<std::size_t>(idx);
    }

    [[nodiscard]] IVec point(std::size_t idx) const {
        IVec z(center_.size());
        auto k = static_cast<std::int64_t>(idx);
        for (std::size_t i = center_.size(); i-- > 0;) {
            z[i] = k % side_ - radius_ + center_[i];
            k /= side_;
        }
        return z;
    }

private:
    IVec center_;
    std::int64_t radius_ = 0;
    std::int64_t side_ = 1;
    std::int64_t size_ = 1;
};

}  // namespace hcwalk
