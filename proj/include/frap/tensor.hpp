#pragma once

#include <cstddef>
#include <initializer_list>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace frap {

/// Floating-point width used everywhere in the library.
using Real = double;
using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Dense row-major tensor with value semantics.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, Real fill = 0);
    Tensor(Shape shape, std::vector<Real> data);

    static Tensor scalar(Real v) { return Tensor(Shape{}, std::vector<Real>{v}); }
    static Tensor vector(std::initializer_list<Real> v) { return Tensor(Shape{v.size()}, std::vector<Real>(v)); }

    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
    std::size_t size() const { return data_.size(); }

    std::span<Real> data() { return data_; }
    std::span<const Real> data() const { return data_; }
    Real* ptr() { return data_.data(); }
    const Real* ptr() const { return data_.data(); }

    Real& operator[](std::size_t i) { return data_[i]; }
    Real operator[](std::size_t i) const { return data_[i]; }

    /// Value of a tensor holding exactly one element.
    Real item() const;
    bool all_finite() const;
    void fill(Real v);

    bool operator==(const Tensor&) const = default;

private:
    Shape shape_;
    std::vector<Real> data_;
};

/// Named parameter arrays; ordered by name so iteration is deterministic.
using ParamSet = std::map<std::string, Tensor>;

}  // namespace frap
