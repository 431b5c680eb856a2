#include "grdsr/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "grdsr/errors.hpp"

namespace grdsr {

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (auto e : shape) n *= e;
    return shape.empty() ? 0 : n;
}

std::string shape_to_string(const Shape& shape) {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << ')';
    return os.str();
}

Tensor::Tensor(Shape shape, float fill) : shape_(std::move(shape)) {
    for (auto e : shape_) {
        if (e == 0) throw ConfigError("tensor extents must be positive: " + shape_to_string(shape_));
    }
    data_.assign(shape_numel(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<float> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_numel(shape_) != data_.size()) {
        throw ConfigError("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                          shape_to_string(shape_));
    }
}

float& Tensor::at(std::size_t n, std::size_t c, std::size_t y, std::size_t x) {
    return data_[((n * shape_[1] + c) * shape_[2] + y) * shape_[3] + x];
}

float Tensor::at(std::size_t n, std::size_t c, std::size_t y, std::size_t x) const {
    return data_[((n * shape_[1] + c) * shape_[2] + y) * shape_[3] + x];
}

void Tensor::fill(float v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor::all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](float v) { return std::isfinite(v); });
}

void require_finite(const Tensor& t, const std::string& what) {
    if (!t.all_finite()) throw NumericalError("non-finite values in " + what);
}

} // namespace grdsr
