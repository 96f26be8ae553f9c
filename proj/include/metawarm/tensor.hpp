#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

namespace metawarm {

// Dense row-major 2-D matrix of doubles. Scalars are 1x1.
struct Tensor {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Tensor() = default;
    Tensor(std::size_t r, std::size_t c, double fill = 0.0)
        : rows(r), cols(c), data(r * c, fill) {}

    static Tensor scalar(double v) {
        Tensor t(1, 1);
        t.data[0] = v;
        return t;
    }

    static Tensor row_vector(std::vector<double> v) {
        Tensor t;
        t.rows = 1;
        t.cols = v.size();
        t.data = std::move(v);
        return t;
    }

    static Tensor from_rows(const std::vector<std::vector<double>>& r);

    std::size_t size() const { return data.size(); }
    double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    // Value of a 1x1 tensor.
    double item() const { return data.at(0); }

    bool same_shape(const Tensor& o) const { return rows == o.rows && cols == o.cols; }

    bool all_finite() const {
        for (double v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }
};

inline Tensor Tensor::from_rows(const std::vector<std::vector<double>>& r) {
    Tensor t(r.size(), r.empty() ? 0 : r.front().size());
    for (std::size_t i = 0; i < r.size(); ++i)
        for (std::size_t j = 0; j < t.cols; ++j) t.at(i, j) = r[i][j];
    return t;
}

}  // namespace metawarm
