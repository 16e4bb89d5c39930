#include "frap/tensor.hpp"

#include <cmath>
#include <stdexcept>

namespace frap {

std::size_t shape_size(const Shape& shape)
{
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

std::string shape_string(const Shape& shape)
{
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

Tensor::Tensor(Shape shape, Real fill) : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<Real> data) : shape_(std::move(shape)), data_(std::move(data))
{
    if (data_.size() != shape_size(shape_))
        throw std::invalid_argument("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                                    shape_string(shape_));
}

Real Tensor::item() const
{
    if (data_.size() != 1) throw std::invalid_argument("item() on tensor of shape " + shape_string(shape_));
    return data_[0];
}

bool Tensor::all_finite() const
{
    for (Real v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

void Tensor::fill(Real v)
{
    for (Real& x : data_) x = v;
}

}  // namespace frap
