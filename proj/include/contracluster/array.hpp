#pragma once

#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "contracluster/errors.hpp"

namespace contracluster {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

inline std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ", ";
        os << shape[i];
    }
    os << ')';
    return os.str();
}

inline bool shape_eq(const Shape& a, const Shape& b) { return a == b; }

// Dense row-major n-dimensional array. The workhorse value type of the
// library; all layer math indexes into data() with explicit strides.
template <typename T>
class Array {
public:
    Array() = default;

    explicit Array(Shape shape, T fill = T(0))
        : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}

    static Array from_data(Shape shape, std::vector<T> values) {
        if (shape_numel(shape) != values.size())
            throw shape_error("Array::from_data: shape " + shape_str(shape) + " does not hold " +
                              std::to_string(values.size()) + " elements");
        Array a;
        a.shape_ = std::move(shape);
        a.data_ = std::move(values);
        return a;
    }

    static Array scalar(T v) { return from_data({1}, {v}); }

    const Shape& shape() const { return shape_; }
    std::size_t ndim() const { return shape_.size(); }
    std::size_t dim(std::size_t i) const { return shape_.at(i); }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }

    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    T& at2(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
    const T& at2(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }

    T& at4(std::size_t b, std::size_t c, std::size_t y, std::size_t x) {
        return data_[((b * shape_[1] + c) * shape_[2] + y) * shape_[3] + x];
    }
    const T& at4(std::size_t b, std::size_t c, std::size_t y, std::size_t x) const {
        return data_[((b * shape_[1] + c) * shape_[2] + y) * shape_[3] + x];
    }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

    Array reshaped(Shape new_shape) const {
        if (shape_numel(new_shape) != size())
            throw shape_error("reshape from " + shape_str(shape_) + " to " + shape_str(new_shape));
        Array out = *this;
        out.shape_ = std::move(new_shape);
        return out;
    }

    template <typename U>
    Array<U> cast() const {
        Array<U> out;
        std::vector<U> v(data_.size());
        for (std::size_t i = 0; i < data_.size(); ++i) v[i] = static_cast<U>(data_[i]);
        return Array<U>::from_data(shape_, std::move(v));
    }

    const std::vector<T>& vec() const { return data_; }

private:
    Shape shape_;
    std::vector<T> data_;
};

} // namespace contracluster
