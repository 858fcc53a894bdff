#include "pcnet/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <fmt/ranges.h>

namespace pcnet {
inline namespace PCNET_PRECISION_NS {

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

std::string shape_str(const Shape& shape) { return fmt::format("[{}]", fmt::join(shape, ",")); }

Tensor::Tensor() = default;

Tensor::Tensor(Shape shape, Real fill) : impl_(std::make_shared<Impl>()) {
    impl_->values.assign(shape_numel(shape), fill);
    impl_->shape = std::move(shape);
}

Tensor::Tensor(Shape shape, std::vector<Real> values) : impl_(std::make_shared<Impl>()) {
    if (shape_numel(shape) != values.size()) {
        throw std::invalid_argument(fmt::format("tensor shape {} holds {} elements, got {} values",
                                                shape_str(shape), shape_numel(shape), values.size()));
    }
    impl_->shape = std::move(shape);
    impl_->values = std::move(values);
}

Tensor Tensor::scalar(Real value) { return Tensor({1}, std::vector<Real>{value}); }

Tensor::Impl& Tensor::impl() {
    if (!impl_) throw std::logic_error("use of undefined tensor");
    return *impl_;
}

const Tensor::Impl& Tensor::impl() const {
    if (!impl_) throw std::logic_error("use of undefined tensor");
    return *impl_;
}

const Shape& Tensor::shape() const { return impl().shape; }

std::size_t Tensor::dim(std::size_t axis) const {
    const auto& s = shape();
    if (axis >= s.size()) {
        throw std::out_of_range(fmt::format("axis {} out of range for shape {}", axis, shape_str(s)));
    }
    return s[axis];
}

std::size_t Tensor::numel() const { return impl().values.size(); }

std::span<Real> Tensor::data() { return impl().values; }
std::span<const Real> Tensor::data() const { return impl().values; }

Real Tensor::item() const {
    if (numel() != 1) {
        throw std::logic_error(fmt::format("item() on tensor of shape {}", shape_str(shape())));
    }
    return impl().values[0];
}

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool flag) {
    impl().requires_grad = flag;
    return *this;
}

bool Tensor::has_grad() const { return impl_ && !impl_->grad.empty(); }

std::span<Real> Tensor::grad() {
    auto& im = impl();
    if (im.grad.size() != im.values.size()) im.grad.assign(im.values.size(), Real(0));
    return im.grad;
}

std::span<const Real> Tensor::grad() const {
    // const access never allocates; an absent gradient reads as empty
    return impl().grad;
}

void Tensor::zero_grad() {
    auto& im = impl();
    std::fill(im.grad.begin(), im.grad.end(), Real(0));
}

Tensor Tensor::grad_tensor() const {
    const auto& im = impl();
    if (im.grad.empty()) return Tensor(im.shape, Real(0));
    return Tensor(im.shape, im.grad);
}

Tensor Tensor::clone() const {
    const auto& im = impl();
    return Tensor(im.shape, im.values);
}

Tensor Tensor::reshape(Shape shape) const {
    if (shape_numel(shape) != numel()) {
        throw std::invalid_argument(
            fmt::format("cannot reshape {} to {}", shape_str(this->shape()), shape_str(shape)));
    }
    return Tensor(std::move(shape), impl().values);
}

void Tensor::assign(const Tensor& other) {
    if (other.shape() != shape()) {
        throw std::invalid_argument(
            fmt::format("assign: shape {} vs {}", shape_str(shape()), shape_str(other.shape())));
    }
    auto src = other.data();
    std::copy(src.begin(), src.end(), impl().values.begin());
}

void ensure_finite(const Tensor& t, const char* op) {
    for (Real v : t.data()) {
        if (!std::isfinite(v)) throw NumericError(fmt::format("{}: non-finite value in output", op));
    }
}

}  // namespace PCNET_PRECISION_NS
}  // namespace pcnet
