#pragma once

// Dense n-dimensional tensor with optional gradient buffer.
//
// A Tensor is a shared handle: copying a Tensor aliases the same storage,
// the way autodiff frameworks treat variables. Use clone() for a deep copy.
// Build with PCNET_DOUBLE to switch every real to 64 bits; the two builds
// live in distinct inline namespaces so both can be linked into one binary.

#include <cstddef>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#ifdef PCNET_DOUBLE
#define PCNET_PRECISION_NS f64
#else
#define PCNET_PRECISION_NS f32
#endif

namespace pcnet {
inline namespace PCNET_PRECISION_NS {

#ifdef PCNET_DOUBLE
using Real = double;
#else
using Real = float;
#endif

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Thrown when a primitive produces NaN or Inf.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class Tensor {
public:
    Tensor();
    explicit Tensor(Shape shape, Real fill = 0);
    Tensor(Shape shape, std::vector<Real> values);

    static Tensor scalar(Real value);

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const;
    std::size_t rank() const { return shape().size(); }
    std::size_t dim(std::size_t axis) const;
    std::size_t numel() const;

    std::span<Real> data();
    std::span<const Real> data() const;
    Real& operator[](std::size_t i) { return data()[i]; }
    Real operator[](std::size_t i) const { return data()[i]; }
    /// Value of a single-element tensor.
    Real item() const;

    bool requires_grad() const;
    Tensor& set_requires_grad(bool flag);

    bool has_grad() const;
    /// Gradient buffer, allocated (zero-filled) on first access.
    std::span<Real> grad();
    std::span<const Real> grad() const;
    void zero_grad();
    Tensor grad_tensor() const;

    /// Deep copy of the values; the copy does not require grad.
    Tensor clone() const;
    /// Same values under a new shape with identical element count (copy).
    Tensor reshape(Shape shape) const;
    /// Overwrite values in place from a same-shape tensor.
    void assign(const Tensor& other);

    bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

private:
    struct Impl {
        Shape shape;
        std::vector<Real> values;
        std::vector<Real> grad;
        bool requires_grad = false;
    };
    std::shared_ptr<Impl> impl_;

    Impl& impl();
    const Impl& impl() const;
};

/// Throws NumericError naming `op` if any value is NaN or Inf.
void ensure_finite(const Tensor& t, const char* op);

struct NamedTensor {
    std::string name;
    Tensor tensor;
};

}  // namespace PCNET_PRECISION_NS
}  // namespace pcnet
