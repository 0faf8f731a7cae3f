#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "langadv/rng.hpp"

namespace langadv {

using Shape = std::vector<int>;

std::string shape_str(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

// Dense row-major tensor of 64-bit floats.
struct Tensor {
    Shape shape;
    std::vector<double> values;

    Tensor() = default;
    explicit Tensor(Shape s);
    Tensor(Shape s, double fill);
    Tensor(Shape s, std::vector<double> vals);

    static Tensor scalar(double v) { return Tensor({1}, {v}); }
    static Tensor zeros(Shape s) { return Tensor(std::move(s), 0.0); }
    static Tensor ones(Shape s) { return Tensor(std::move(s), 1.0); }
    static Tensor randn(Shape s, Rng& rng, double stddev = 1.0);

    std::size_t numel() const { return values.size(); }
    int rank() const { return static_cast<int>(shape.size()); }
    bool is_scalar() const { return numel() == 1; }
    int extent(int axis) const { return shape[static_cast<std::size_t>(axis)]; }

    double& at(std::size_t i) { return values[i]; }
    double at(std::size_t i) const { return values[i]; }
    double& at2(int i, int j) { return values[static_cast<std::size_t>(i) * shape[1] + j]; }
    double at2(int i, int j) const { return values[static_cast<std::size_t>(i) * shape[1] + j]; }
    double& at3(int i, int j, int k) {
        return values[(static_cast<std::size_t>(i) * shape[1] + j) * shape[2] + k];
    }
    double at3(int i, int j, int k) const {
        return values[(static_cast<std::size_t>(i) * shape[1] + j) * shape[2] + k];
    }

    bool same_shape(const Tensor& other) const { return shape == other.shape; }
    bool all_finite() const;
    void fill(double v);
};

// Integer matrix used for token ids and masks.
struct IntMatrix {
    int rows = 0;
    int cols = 0;
    std::vector<int> values;

    IntMatrix() = default;
    IntMatrix(int r, int c, int fill = 0)
        : rows(r), cols(c), values(static_cast<std::size_t>(r) * static_cast<std::size_t>(c), fill) {}

    int& at(int i, int j) { return values[static_cast<std::size_t>(i) * cols + j]; }
    int at(int i, int j) const { return values[static_cast<std::size_t>(i) * cols + j]; }
};

}  // namespace langadv
