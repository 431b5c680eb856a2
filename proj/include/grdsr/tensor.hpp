#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace grdsr {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

// Dense row-major float32 array. Value type; copies are deep.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, float fill = 0.0f);
    Tensor(Shape shape, std::vector<float> data);

    static Tensor zeros_like(const Tensor& other) { return Tensor(other.shape_); }

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
    std::size_t numel() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    std::span<float> data() noexcept { return data_; }
    std::span<const float> data() const noexcept { return data_; }
    float* ptr() noexcept { return data_.data(); }
    const float* ptr() const noexcept { return data_.data(); }

    float& operator[](std::size_t i) noexcept { return data_[i]; }
    float operator[](std::size_t i) const noexcept { return data_[i]; }

    // NCHW accessor; only valid for rank-4 tensors.
    float& at(std::size_t n, std::size_t c, std::size_t y, std::size_t x);
    float at(std::size_t n, std::size_t c, std::size_t y, std::size_t x) const;

    void fill(float v);
    bool all_finite() const noexcept;
    bool same_shape(const Tensor& other) const noexcept { return shape_ == other.shape_; }

    std::vector<float>& storage() noexcept { return data_; }

private:
    Shape shape_;
    std::vector<float> data_;
};

// Throws NumericalError naming `what` if any element is NaN/Inf.
void require_finite(const Tensor& t, const std::string& what);

} // namespace grdsr
