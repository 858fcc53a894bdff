#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "pcnet/hyperparams.hpp"
#include "pcnet/ops.hpp"
#include "support/gradcheck.hpp"

#include <type_traits>

using namespace pcnet;
using pcnet::testing::gradcheck;
using pcnet::testing::random_tensor;

static_assert(std::is_same_v<Real, double>, "this suite runs against the 64-bit build");

namespace {

constexpr double kTol = 1e-6;
constexpr double kStep = 1e-4;

// Projects onto a fixed random direction so every output element gets a
// distinct weight in the scalar loss.
Tensor probe(const Tensor& y, std::uint64_t seed) {
    Rng rng(seed);
    Tensor r = random_tensor(y.shape(), rng);
    return ops::sum(ops::sub(ops::mul_scalar(ops::add(y, r), 0.5), r));
}

Tensor weighted(const Tensor& y, const Tensor& r) { return ops::mse(y, r); }

}  // namespace

TEST_CASE("conv2d") {
    Rng rng(1);
    Tensor x = random_tensor({2, 2, 5, 5}, rng);
    Tensor w = random_tensor({3, 2, 3, 3}, rng);
    Tensor b = random_tensor({3}, rng);
    for (int stride : {1, 2}) {
        Tensor r = random_tensor(ops::conv2d(x, w, b, stride, 1).shape(), rng);
        auto res = gradcheck({x, w, b}, [&] { return weighted(ops::conv2d(x, w, b, stride, 1), r); }, kStep);
        CHECK(res.max_rel_err < kTol);
    }
    auto res = gradcheck({x, w}, [&] { return ops::sum(ops::conv2d(x, w, Tensor(), 1, 0)); }, kStep);
    CHECK(res.max_rel_err < kTol);
}

TEST_CASE("conv_transpose2d") {
    Rng rng(2);
    Tensor x = random_tensor({2, 3, 4, 4}, rng);
    Tensor w = random_tensor({3, 2, 3, 3}, rng);
    Tensor b = random_tensor({2}, rng);
    for (int stride : {1, 2}) {
        Tensor r = random_tensor(ops::conv_transpose2d(x, w, b, stride, 1).shape(), rng);
        auto res =
            gradcheck({x, w, b}, [&] { return weighted(ops::conv_transpose2d(x, w, b, stride, 1), r); }, kStep);
        CHECK(res.max_rel_err < kTol);
    }
}

TEST_CASE("upsample and its adjoint") {
    Rng rng(3);
    Tensor x = random_tensor({1, 2, 3, 4}, rng);
    Tensor r = random_tensor({1, 2, 6, 8}, rng);
    CHECK(gradcheck({x}, [&] { return weighted(ops::upsample_bilinear2x(x), r); }, kStep).max_rel_err < kTol);
    Tensor y = random_tensor({1, 2, 6, 8}, rng);
    Tensor q = random_tensor({1, 2, 3, 4}, rng);
    CHECK(gradcheck({y}, [&] { return weighted(ops::upsample_bilinear2x_adjoint(y), q); }, kStep).max_rel_err <
          kTol);
}

TEST_CASE("relu and maxpool away from kinks and ties") {
    Rng rng(4);
    Tensor x = random_tensor({1, 2, 4, 6}, rng);
    // keep values away from 0 so the finite difference never straddles a kink
    for (Real& v : x.data()) v = v < 0 ? v - 0.1 : v + 0.1;
    Tensor r = random_tensor({1, 2, 4, 6}, rng);
    CHECK(gradcheck({x}, [&] { return weighted(ops::relu(x), r); }, kStep).max_rel_err < kTol);
    Tensor q = random_tensor({1, 2, 2, 3}, rng);
    CHECK(gradcheck({x}, [&] { return weighted(ops::maxpool2x2(x), q); }, kStep).max_rel_err < kTol);
}

TEST_CASE("dense, flatten, softmax, cross entropy") {
    Rng rng(5);
    Tensor x = random_tensor({3, 2, 2, 2}, rng);
    Tensor w = random_tensor({4, 8}, rng);
    Tensor b = random_tensor({4}, rng);
    std::vector<std::int32_t> labels{0, 3, 1};
    CHECK(gradcheck({x, w, b}, [&] { return ops::cross_entropy(ops::dense(ops::flatten(x), w, b), labels); }, kStep)
              .max_rel_err < kTol);
    Tensor logits = random_tensor({3, 5}, rng, -3, 3);
    Tensor r = random_tensor({3, 5}, rng);
    CHECK(gradcheck({logits}, [&] { return weighted(ops::softmax(logits), r); }, kStep).max_rel_err < kTol);
}

TEST_CASE("arithmetic and reductions") {
    Rng rng(6);
    Tensor a = random_tensor({2, 3}, rng);
    Tensor b = random_tensor({2, 3}, rng);
    Tensor s = random_tensor({1}, rng);
    Tensor r = random_tensor({2, 3}, rng);
    CHECK(gradcheck({a, b}, [&] { return weighted(ops::add(a, b), r); }, kStep).max_rel_err < kTol);
    CHECK(gradcheck({a, b}, [&] { return weighted(ops::sub(a, b), r); }, kStep).max_rel_err < kTol);
    CHECK(gradcheck({a, s}, [&] { return weighted(ops::scale(a, s), r); }, kStep).max_rel_err < kTol);
    CHECK(gradcheck({a}, [&] { return weighted(ops::mul_scalar(a, -1.7), r); }, kStep).max_rel_err < kTol);
    CHECK(gradcheck({a}, [&] { return ops::mul_scalar(ops::mean(ops::relu(ops::add(a, r))), 3.0); }, kStep)
              .max_rel_err < kTol);
    CHECK(gradcheck({a}, [&] { return probe(a, 9); }, kStep).max_rel_err < kTol);
    CHECK(gradcheck({a}, [&] { return weighted(ops::element(a, 4), s); }, kStep).max_rel_err < kTol);
}

TEST_CASE("sigmoid-normalized simplex") {
    Rng rng(7);
    for (bool zero_beta : {false, true}) {
        Tensor aux = random_tensor({3}, rng, -2, 2);
        Tensor r = random_tensor({3}, rng);
        auto res = gradcheck({aux}, [&] { return weighted(constrain_simplex(aux, zero_beta), r); }, kStep);
        CHECK(res.max_rel_err < kTol);
    }
}
