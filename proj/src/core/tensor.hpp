#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "core/errors.hpp"

namespace mrct {

// Dense BxCxHxW array of doubles. Rank-deficient uses set trailing dims to 1
// (a bias vector of C entries is {1,C,1,1}).
struct Tensor {
    std::array<int, 4> shape{0, 0, 0, 0};
    std::vector<double> data;

    Tensor() = default;
    Tensor(int b, int c, int h, int w)
        : shape{b, c, h, w}, data(static_cast<std::size_t>(b) * c * h * w, 0.0) {}

    static Tensor zeros_like(const Tensor& t) { return Tensor(t.shape[0], t.shape[1], t.shape[2], t.shape[3]); }

    int b() const { return shape[0]; }
    int c() const { return shape[1]; }
    int h() const { return shape[2]; }
    int w() const { return shape[3]; }
    std::size_t count() const { return data.size(); }
    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    double& at(int bi, int ci, int y, int x) {
        return data[((static_cast<std::size_t>(bi) * shape[1] + ci) * shape[2] + y) * shape[3] + x];
    }
    double at(int bi, int ci, int y, int x) const {
        return data[((static_cast<std::size_t>(bi) * shape[1] + ci) * shape[2] + y) * shape[3] + x];
    }

    bool all_finite() const {
        for (double v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }

    double abs_max() const {
        double m = 0.0;
        for (double v : data) m = std::max(m, std::fabs(v));
        return m;
    }

    std::string shape_str() const {
        return "[" + std::to_string(shape[0]) + "," + std::to_string(shape[1]) + "," +
               std::to_string(shape[2]) + "," + std::to_string(shape[3]) + "]";
    }
};

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (!a.same_shape(b))
        throw_invalid_argument(std::string(what) + ": shape mismatch " + a.shape_str() + " vs " + b.shape_str());
}

} // namespace mrct
