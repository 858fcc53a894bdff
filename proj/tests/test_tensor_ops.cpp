#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "pcnet/ops.hpp"
#include "pcnet/optim.hpp"
#include "pcnet/tape.hpp"
#include "support/gradcheck.hpp"

#include <cmath>
#include <limits>
#include <numeric>

using namespace pcnet;
using pcnet::testing::gradcheck;
using pcnet::testing::inner;
using pcnet::testing::random_tensor;

TEST_CASE("conv2d: identity 1x1 kernel") {
    Tensor x({1, 1, 1, 1}, std::vector<Real>{5});
    Tensor w({1, 1, 1, 1}, std::vector<Real>{1});
    Tensor b({1}, std::vector<Real>{0});
    Tensor y = ops::conv2d(x, w, b, 1, 0);
    CHECK(y.shape() == Shape{1, 1, 1, 1});
    CHECK(y[0] == 5);
}

TEST_CASE("conv2d: 2x2 cross-correlation") {
    Tensor x({1, 1, 2, 2}, std::vector<Real>{1, 2, 3, 4});
    Tensor w({1, 1, 2, 2}, std::vector<Real>{1, 0, 0, 1});
    Tensor y = ops::conv2d(x, w, Tensor({1}), 1, 0);
    CHECK(y.shape() == Shape{1, 1, 1, 1});
    CHECK(y[0] == doctest::Approx(5));
}

TEST_CASE("conv2d: output size and errors") {
    Rng rng(1);
    Tensor x = random_tensor({2, 3, 7, 9}, rng);
    Tensor w = random_tensor({4, 3, 3, 3}, rng);
    Tensor y = ops::conv2d(x, w, Tensor(), 2, 1);
    CHECK(y.shape() == Shape{2, 4, 4, 5});

    Tensor bad_w = random_tensor({4, 2, 3, 3}, rng);
    CHECK_THROWS_WITH_AS(ops::conv2d(x, bad_w, Tensor(), 1, 0), doctest::Contains("dim 1"), std::invalid_argument);
    CHECK_THROWS_AS(ops::conv2d(x, w, Tensor(), 0, 0), std::invalid_argument);
    Tensor big_w = random_tensor({1, 3, 9, 9}, rng);
    CHECK_THROWS_WITH_AS(ops::conv2d(x, big_w, Tensor(), 1, 0), doctest::Contains("height"), std::invalid_argument);
    CHECK_THROWS_AS(ops::conv2d(x, w, Tensor({5}), 1, 0), std::invalid_argument);
}

TEST_CASE("conv_transpose2d: scalar case") {
    Tensor y = ops::conv_transpose2d(Tensor({1, 1, 1, 1}, std::vector<Real>{3}), Tensor({1, 1, 1, 1}, std::vector<Real>{2}),
                                     Tensor({1}), 1, 0);
    CHECK(y[0] == 6);
}

TEST_CASE("conv_transpose2d is the adjoint of conv2d") {
    Rng rng(42);
    struct Geo {
        std::size_t n, cb, ca, h, w;
        int k, stride, pad;
    };
    const Geo geos[] = {{1, 3, 2, 8, 8, 3, 1, 1}, {2, 2, 4, 9, 7, 3, 2, 1}, {1, 1, 1, 5, 5, 5, 1, 2},
                        {2, 4, 3, 6, 6, 1, 1, 0}, {1, 3, 5, 10, 10, 3, 3, 0}};
    int instances = 0;
    for (int rep = 0; rep < 5; ++rep) {
        for (const auto& g : geos) {
            Tensor x = random_tensor({g.n, g.cb, g.h, g.w}, rng);
            Tensor w = random_tensor({g.ca, g.cb, static_cast<std::size_t>(g.k), static_cast<std::size_t>(g.k)}, rng);
            Tensor cx = ops::conv2d(x, w, Tensor(), g.stride, g.pad);
            Tensor y = random_tensor(cx.shape(), rng);
            Tensor ty = ops::conv_transpose2d(y, w, Tensor(), g.stride, g.pad);
            if (ty.shape() != x.shape()) continue;  // stride leaves a remainder row
            CHECK(std::abs(inner(cx, y) - inner(x, ty)) < 1e-4 * std::max(1.0, std::abs(inner(cx, y))));
            ++instances;
        }
    }
    CHECK(instances >= 20);
}

TEST_CASE("conv2d gradients match finite differences at 32-bit") {
    Rng rng(3);
    Tensor x = random_tensor({1, 2, 5, 5}, rng);
    Tensor w = random_tensor({3, 2, 3, 3}, rng);
    Tensor b = random_tensor({3}, rng);
    auto res = gradcheck({x, w, b}, [&] { return ops::sum(ops::conv2d(x, w, b, 1, 1)); }, 1e-2, 0, 7, 1e-2);
    CHECK(res.max_rel_err < 1e-3);
}

TEST_CASE("conv_transpose2d gradients match finite differences at 32-bit") {
    Rng rng(4);
    Tensor x = random_tensor({1, 2, 4, 4}, rng);
    Tensor w = random_tensor({2, 3, 3, 3}, rng);
    Tensor r = random_tensor({1, 3, 4, 4}, rng);
    auto res = gradcheck({x, w}, [&] { return ops::mse(ops::conv_transpose2d(x, w, Tensor(), 1, 1), r); }, 1e-2, 0,
                         7, 1e-2);
    CHECK(res.max_rel_err < 1e-3);
}

namespace {
// plain scalar bilinear formula, align_corners=false, scale 2
Real bilinear_oracle(const Tensor& in, std::size_t c, long oy, long ox) {
    const long h = static_cast<long>(in.dim(2)), w = static_cast<long>(in.dim(3));
    auto coord = [](long o, long n, long& i0, long& i1, double& lam) {
        double src = (o + 0.5) * 0.5 - 0.5;
        if (src < 0) src = 0;
        i0 = std::min(static_cast<long>(std::floor(src)), n - 1);
        i1 = std::min(i0 + 1, n - 1);
        lam = src - static_cast<double>(i0);
    };
    long y0, y1, x0, x1;
    double ly, lx;
    coord(oy, h, y0, y1, ly);
    coord(ox, w, x0, x1, lx);
    auto at = [&](long y, long x) { return static_cast<double>(in[(c * h + y) * w + x]); };
    return static_cast<Real>((1 - ly) * ((1 - lx) * at(y0, x0) + lx * at(y0, x1)) +
                             ly * ((1 - lx) * at(y1, x0) + lx * at(y1, x1)));
}
}  // namespace

TEST_CASE("upsample_bilinear2x") {
    SUBCASE("constant input stays constant") {
        Tensor x({2, 3, 4, 5}, Real(0.37));
        Tensor y = ops::upsample_bilinear2x(x);
        CHECK(y.shape() == Shape{2, 3, 8, 10});
        for (Real v : y.data()) CHECK(v == doctest::Approx(0.37));
    }
    SUBCASE("single pixel replicates") {
        Tensor y = ops::upsample_bilinear2x(Tensor({1, 1, 1, 1}, std::vector<Real>{7}));
        CHECK(y.shape() == Shape{1, 1, 2, 2});
        for (Real v : y.data()) CHECK(v == 7);
    }
    SUBCASE("2x1 ramp against the scalar formula") {
        Tensor x({1, 1, 2, 1}, std::vector<Real>{0, 1});
        Tensor y = ops::upsample_bilinear2x(x);
        REQUIRE(y.shape() == Shape{1, 1, 4, 2});
        for (long oy = 0; oy < 4; ++oy)
            for (long ox = 0; ox < 2; ++ox) CHECK(y[oy * 2 + ox] == doctest::Approx(bilinear_oracle(x, 0, oy, ox)));
        // frozen from the formula: 0, 1/4, 3/4, 1 down each column
        CHECK(y[2] == doctest::Approx(0.25));
        CHECK(y[4] == doctest::Approx(0.75));
        CHECK(y[6] == doctest::Approx(1.0));
    }
    SUBCASE("random input against the scalar formula") {
        Rng rng(9);
        Tensor x = random_tensor({1, 2, 3, 5}, rng);
        Tensor y = ops::upsample_bilinear2x(x);
        for (std::size_t c = 0; c < 2; ++c)
            for (long oy = 0; oy < 6; ++oy)
                for (long ox = 0; ox < 10; ++ox)
                    CHECK(y[(c * 6 + oy) * 10 + ox] == doctest::Approx(bilinear_oracle(x, c, oy, ox)));
    }
    SUBCASE("adjoint splat") {
        Rng rng(10);
        Tensor x = random_tensor({2, 2, 3, 4}, rng);
        Tensor y = random_tensor({2, 2, 6, 8}, rng);
        CHECK(inner(ops::upsample_bilinear2x(x), y) ==
              doctest::Approx(inner(x, ops::upsample_bilinear2x_adjoint(y))).epsilon(1e-5));
    }
}

TEST_CASE("pointwise, pooling and losses") {
    SUBCASE("mse") {
        Rng rng(5);
        Tensor x = random_tensor({3, 4}, rng);
        CHECK(ops::mse(x, x).item() == 0);
        CHECK(ops::mse(Tensor({2}, std::vector<Real>{1, 1}), Tensor({2}, std::vector<Real>{2, 2})).item() == 1);
        CHECK_THROWS_AS(ops::mse(x, Tensor({4, 3})), std::invalid_argument);
    }
    SUBCASE("cross entropy of uniform logits is ln 10") {
        Tensor logits({4, 10}, Real(0.3));
        std::vector<std::int32_t> labels{0, 3, 9, 5};
        CHECK(ops::cross_entropy(logits, labels).item() == doctest::Approx(2.302585).epsilon(1e-6));
        std::vector<std::int32_t> bad{0, 3, 10, 5};
        CHECK_THROWS_AS(ops::cross_entropy(logits, bad), std::out_of_range);
        std::vector<std::int32_t> neg{0, -1, 1, 5};
        CHECK_THROWS_AS(ops::cross_entropy(logits, neg), std::out_of_range);
    }
    SUBCASE("softmax rows sum to one, cross entropy non-negative") {
        Rng rng(6);
        for (int rep = 0; rep < 20; ++rep) {
            Tensor logits = random_tensor({5, 7}, rng, -20, 20);
            Tensor p = ops::softmax(logits);
            for (std::size_t i = 0; i < 5; ++i) {
                double s = 0;
                for (std::size_t j = 0; j < 7; ++j) s += p[i * 7 + j];
                CHECK(std::abs(s - 1) < 1e-6);
            }
            std::vector<std::int32_t> labels{0, 1, 2, 3, 6};
            CHECK(ops::cross_entropy(logits, labels).item() >= 0);
        }
    }
    SUBCASE("maxpool ties route to the first index") {
        Tensor x({1, 1, 2, 2}, std::vector<Real>{3, 3, 3, 3});
        x.set_requires_grad(true);
        Tape tape;
        {
            Tape::Scope scope(tape);
            Tensor y = ops::maxpool2x2(x);
            CHECK(y[0] == 3);
            tape.backward(ops::sum(y));
        }
        CHECK(x.grad()[0] == 1);
        CHECK(x.grad()[1] == 0);
        CHECK(x.grad()[2] == 0);
        CHECK(x.grad()[3] == 0);
    }
    SUBCASE("maxpool floors odd extents") {
        Tensor x({1, 1, 5, 3});
        std::iota(x.data().begin(), x.data().end(), Real(0));
        Tensor y = ops::maxpool2x2(x);
        CHECK(y.shape() == Shape{1, 1, 2, 1});
        CHECK(y[0] == 4);
        CHECK(y[1] == 10);
    }
    SUBCASE("dense") {
        Tensor x({1, 2}, std::vector<Real>{1, 2});
        Tensor w({3, 2}, std::vector<Real>{1, 0, 0, 1, 1, 1});
        Tensor b({3}, std::vector<Real>{0, 0, 1});
        Tensor y = ops::dense(x, w, b);
        CHECK(y[0] == 1);
        CHECK(y[1] == 2);
        CHECK(y[2] == 4);
        CHECK_THROWS_AS(ops::dense(Tensor({1, 3}), w, b), std::invalid_argument);
    }
    SUBCASE("non-finite output is an error") {
        Tensor x({2}, std::vector<Real>{1, std::numeric_limits<Real>::infinity()});
        CHECK_THROWS_AS(ops::relu(x), NumericError);
        Tensor big({1}, std::vector<Real>{std::numeric_limits<Real>::max()});
        CHECK_THROWS_AS(ops::mul_scalar(big, 10), NumericError);
    }
}

TEST_CASE("backward") {
    SUBCASE("sum gives all-ones") {
        Rng rng(11);
        Tensor x = random_tensor({2, 3}, rng).set_requires_grad(true);
        Tape tape;
        Tape::Scope scope(tape);
        tape.backward(ops::sum(x));
        for (Real g : x.grad()) CHECK(g == 1);
    }
    SUBCASE("linear regression matches 2*mean(err*x)") {
        const std::vector<double> xs{1.0, 2.0, -0.5}, ys{2.0, 3.5, 0.0};
        const double w0 = 0.7;
        Tensor x({3}, std::vector<Real>{1.0f, 2.0f, -0.5f});
        Tensor y({3}, std::vector<Real>{2.0f, 3.5f, 0.0f});
        Tensor w = Tensor::scalar(static_cast<Real>(w0)).set_requires_grad(true);
        Tape tape;
        {
            Tape::Scope scope(tape);
            tape.backward(ops::mse(ops::scale(x, w), y));
        }
        double expected = 0;
        for (int i = 0; i < 3; ++i) expected += (w0 * xs[i] - ys[i]) * xs[i];
        expected = 2 * expected / 3;
        CHECK(w.grad()[0] == doctest::Approx(expected).epsilon(1e-6));
    }
    SUBCASE("gradients accumulate across backward calls until zeroed") {
        Tensor x({2}, std::vector<Real>{1, 2});
        x.set_requires_grad(true);
        for (int rep = 0; rep < 2; ++rep) {
            Tape tape;
            Tape::Scope scope(tape);
            tape.backward(ops::sum(x));
        }
        CHECK(x.grad()[0] == 2);
        x.zero_grad();
        CHECK(x.grad()[0] == 0);
    }
    SUBCASE("tape reuse is an error") {
        Tensor x({2}, std::vector<Real>{1, 2});
        x.set_requires_grad(true);
        Tape tape;
        Tensor l;
        {
            Tape::Scope scope(tape);
            l = ops::sum(x);
        }
        tape.backward(l);
        CHECK(tape.consumed());
        CHECK_THROWS_AS(tape.backward(l), std::logic_error);
    }
    SUBCASE("reverse pass visits records in exact reverse order") {
        Tape tape;
        std::vector<int> visited;
        for (int i = 0; i < 5; ++i) tape.record("probe", [&visited, i] { visited.push_back(i); });
        Tensor l = Tensor::scalar(1).set_requires_grad(true);
        tape.backward(l);
        CHECK(visited == std::vector<int>{4, 3, 2, 1, 0});
    }
    SUBCASE("no tape, no recording") {
        Tensor x({2}, std::vector<Real>{1, 2});
        x.set_requires_grad(true);
        Tensor y = ops::sum(x);
        CHECK_FALSE(y.requires_grad());
    }
}

TEST_CASE("determinism: same seed and op sequence give bit-identical output") {
    auto run = [] {
        Rng rng(77);
        Tensor x = random_tensor({2, 3, 8, 8}, rng);
        Tensor w = random_tensor({4, 3, 5, 5}, rng);
        Tensor v = random_tensor({4, 3, 3, 3}, rng);
        Tensor h = ops::maxpool2x2(ops::relu(ops::conv2d(x, w, Tensor(), 1, 2)));
        return ops::conv_transpose2d(ops::upsample_bilinear2x(h), v, Tensor(), 1, 1);
    };
    Tensor a = run(), b = run();
    REQUIRE(a.numel() == b.numel());
    CHECK(std::equal(a.data().begin(), a.data().end(), b.data().begin()));
}

TEST_CASE("optimizers") {
    SUBCASE("vanilla sgd step") {
        Tensor p = Tensor::scalar(0).set_requires_grad(true);
        Sgd opt({p}, {0.1, 0.0, 0.0});
        p.grad()[0] = 1;
        opt.step();
        CHECK(p[0] == doctest::Approx(-0.1));
    }
    SUBCASE("momentum recurrence") {
        Tensor p = Tensor::scalar(0).set_requires_grad(true);
        Sgd opt({p}, {0.1, 0.9, 0.0});
        for (int s = 0; s < 2; ++s) {
            opt.zero_grad();
            p.grad()[0] = 1;
            opt.step();
        }
        CHECK(p[0] == doctest::Approx(-0.29));
    }
    SUBCASE("adam first step moves by lr*sign(g)") {
        Tensor p({3}, std::vector<Real>{0, 0, 0});
        p.set_requires_grad(true);
        Adam opt({ParamGroup{{p}, 0.001}}, {});
        p.grad()[0] = 3.0f;
        p.grad()[1] = -0.02f;
        p.grad()[2] = 1e-3f;
        opt.step();
        CHECK(p[0] == doctest::Approx(-0.001).epsilon(1e-4));
        CHECK(p[1] == doctest::Approx(0.001).epsilon(1e-4));
        CHECK(p[2] == doctest::Approx(-0.001).epsilon(1e-3));
    }
    SUBCASE("non-positive learning rate is rejected") {
        Tensor p = Tensor::scalar(0);
        CHECK_THROWS_AS(Sgd({p}, {0.0, 0.9, 0.0}), std::invalid_argument);
        CHECK_THROWS_AS(Adam({ParamGroup{{p}, -1.0}}, {}), std::invalid_argument);
    }
}
