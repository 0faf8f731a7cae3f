#include "langadv/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace langadv {

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << "(";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ",";
        os << shape[i];
    }
    os << ")";
    return os.str();
}

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (int e : shape) n *= static_cast<std::size_t>(e);
    return n;
}

static void check_extents(const Shape& s) {
    for (int e : s) {
        if (e <= 0) throw std::invalid_argument("tensor extent must be positive, got shape " + shape_str(s));
    }
}

Tensor::Tensor(Shape s) : shape(std::move(s)) {
    check_extents(shape);
    values.assign(shape_numel(shape), 0.0);
}

Tensor::Tensor(Shape s, double fill) : shape(std::move(s)) {
    check_extents(shape);
    values.assign(shape_numel(shape), fill);
}

Tensor::Tensor(Shape s, std::vector<double> vals) : shape(std::move(s)), values(std::move(vals)) {
    check_extents(shape);
    if (values.size() != shape_numel(shape)) {
        throw std::invalid_argument("tensor value count " + std::to_string(values.size()) +
                                    " does not match shape " + shape_str(shape));
    }
}

Tensor Tensor::randn(Shape s, Rng& rng, double stddev) {
    Tensor t(std::move(s));
    for (double& v : t.values) v = rng.normal() * stddev;
    return t;
}

bool Tensor::all_finite() const {
    for (double v : values) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

void Tensor::fill(double v) {
    for (double& x : values) x = v;
}

}  // namespace langadv
