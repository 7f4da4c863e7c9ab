#include "egghand/nn/tensor.hpp"

#include <algorithm>
#include <cmath>

#include "egghand/error.hpp"

namespace egghand::nn {

std::size_t shape_size(const Shape& shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

std::string shape_string(const Shape& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ", ";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
    require(shape_.size() <= 4, "tensor rank above 4: " + shape_string(shape_));
    values_.assign(shape_size(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(values.begin(), values.end()) {
    require(shape_.size() <= 4, "tensor rank above 4: " + shape_string(shape_));
    require(values_.size() == shape_size(shape_),
            "tensor value count " + std::to_string(values_.size()) + " does not match shape " +
                shape_string(shape_));
}

Tensor Tensor::reshaped(Shape shape) const {
    require(shape_size(shape) == size(),
            "cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
    require(shape.size() <= 4, "tensor rank above 4: " + shape_string(shape));
    Tensor out = *this;
    out.shape_ = std::move(shape);
    return out;
}

void Tensor::fill(double v) { std::fill(values_.begin(), values_.end(), v); }

bool Tensor::all_finite() const {
    return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

}  // namespace egghand::nn
