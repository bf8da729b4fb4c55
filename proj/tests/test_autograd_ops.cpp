#include <catch2/catch_amalgamated.hpp>

#include "helpers.hpp"

using namespace raune;
using testutil::gradcheck;
using testutil::random_tensor;

namespace {

Var<double> leafv(Tensor<double> t) { return make_var(std::move(t), true); }

// Convenience: FD-check d(mean(expr))/d(leaf).
void check_grad(const Var<double>& leaf, const std::function<Var<double>()>& build, int coords = 24,
                double tol = 1e-5, uint64_t seed = 99) {
    Rng pick(seed);
    auto res = gradcheck(leaf, [&] { return mean_all(build()); }, coords, pick);
    INFO("max rel err " << res.max_rel_err);
    REQUIRE(res.max_rel_err < tol);
}

}  // namespace

TEST_CASE("autograd basics: graph, backward, no-grad mode") {
    auto x = leafv(Tensor<double>({2, 2}, 3.0));
    auto y = mul_scalar(x, 2.0);
    auto loss = sum_all(y);
    REQUIRE(loss->value[0] == Catch::Approx(24.0));
    backward(loss);
    for (int64_t i = 0; i < 4; ++i) REQUIRE(x->grad[i] == Catch::Approx(2.0));

    {
        NoGradGuard ng;
        auto z = mul_scalar(x, 2.0);
        REQUIRE(z->parents.empty());
        REQUIRE_FALSE(z->requires_grad);
    }
    auto c = constant(Tensor<double>({2, 2}, 1.0));
    auto w = mul(x, c);
    REQUIRE(w->requires_grad);
}

TEST_CASE("gradient accumulates across multiple uses of a leaf") {
    auto x = leafv(Tensor<double>({3}, 2.0));
    auto loss = sum_all(add(x, x));
    backward(loss);
    for (int64_t i = 0; i < 3; ++i) REQUIRE(x->grad[i] == Catch::Approx(2.0));
}

TEST_CASE("elementwise op gradients match finite differences") {
    Rng rng(1);
    auto a = leafv(random_tensor<double>({2, 5}, rng, 0.2, 1.5));
    auto b = leafv(random_tensor<double>({2, 5}, rng, 0.2, 1.5));

    check_grad(a, [&] { return add(a, b); });
    check_grad(b, [&] { return sub(a, b); });
    check_grad(a, [&] { return mul(a, b); });
    check_grad(b, [&] { return div(a, b); });
    check_grad(a, [&] { return add_scalar(mul_scalar(a, -1.7), 0.3); });
    check_grad(a, [&] { return square(a); });
    check_grad(a, [&] { return abs_value(a); });
    check_grad(a, [&] { return tanh_value(a); });
    check_grad(a, [&] { return sigmoid(a); });
    check_grad(a, [&] { return relu(a); });
    check_grad(a, [&] { return leaky_relu(a, 0.2); });
    check_grad(a, [&] { return reshape(sum_all(a), Shape{1, 1}); });
}

TEST_CASE("reflect_pad2d values and gradient") {
    Tensor<double> t({1, 1, 2, 3});
    for (int64_t i = 0; i < 6; ++i) t[i] = double(i);  // rows: 0 1 2 / 3 4 5
    auto x = leafv(t);
    auto p = reflect_pad2d(x, 1);
    REQUIRE(p->value.shape == Shape{1, 1, 4, 5});
    // top-left corner reflects row 1, col 1 -> value 4
    REQUIRE(p->value.at(0, 0, 0, 0) == 4.0);
    REQUIRE(p->value.at(0, 0, 1, 1) == 0.0);
    REQUIRE(p->value.at(0, 0, 3, 4) == 1.0);  // reflect beyond bottom-right
    check_grad(x, [&] { return reflect_pad2d(x, 1); });
    REQUIRE_THROWS_AS(reflect_pad2d(x, 2), ShapeError);
}

TEST_CASE("conv2d matches the naive oracle") {
    Rng rng(2);
    for (auto [stride, pad, kh] : {std::tuple<int, int, int>{1, 0, 3}, {2, 1, 4}, {1, 3, 7}}) {
        Tensor<double> xt = random_tensor<double>({2, 3, 8, 8}, rng);
        Tensor<double> wt = random_tensor<double>({4, 3, kh, kh}, rng, -0.5, 0.5);
        Tensor<double> bt = random_tensor<double>({4}, rng);
        auto y = conv2d(constant(xt), constant(wt), constant(bt), stride, pad);
        Tensor<double> ref = testutil::naive_conv2d(xt, wt, &bt, stride, pad);
        REQUIRE(y->value.shape == ref.shape);
        REQUIRE(max_abs_diff(y->value, ref) < 1e-12);
    }
}

TEST_CASE("conv2d gradients (input, weight, bias)") {
    Rng rng(3);
    auto x = leafv(random_tensor<double>({1, 2, 6, 6}, rng));
    auto w = leafv(random_tensor<double>({3, 2, 3, 3}, rng, -0.5, 0.5));
    auto b = leafv(random_tensor<double>({3}, rng));
    check_grad(x, [&] { return conv2d(x, w, b, 2, 1); });
    check_grad(w, [&] { return conv2d(x, w, b, 2, 1); });
    check_grad(b, [&] { return conv2d(x, w, b, 2, 1); });
    check_grad(w, [&] { return conv2d(x, w, Var<double>{}, 1, 0); });
}

TEST_CASE("conv_transpose2d matches the naive oracle") {
    Rng rng(4);
    for (auto [stride, pad, k] : {std::tuple<int, int, int>{2, 1, 4}, {1, 0, 3}, {2, 0, 2}}) {
        Tensor<double> xt = random_tensor<double>({2, 3, 5, 4}, rng);
        Tensor<double> wt = random_tensor<double>({3, 2, k, k}, rng, -0.5, 0.5);
        Tensor<double> bt = random_tensor<double>({2}, rng);
        auto y = conv_transpose2d(constant(xt), constant(wt), constant(bt), stride, pad);
        Tensor<double> ref = testutil::naive_conv_transpose2d(xt, wt, &bt, stride, pad);
        REQUIRE(y->value.shape == ref.shape);
        REQUIRE(max_abs_diff(y->value, ref) < 1e-12);
    }
}

TEST_CASE("conv_transpose2d gradients") {
    Rng rng(5);
    auto x = leafv(random_tensor<double>({1, 3, 4, 4}, rng));
    auto w = leafv(random_tensor<double>({3, 2, 4, 4}, rng, -0.5, 0.5));
    auto b = leafv(random_tensor<double>({2}, rng));
    check_grad(x, [&] { return conv_transpose2d(x, w, b, 2, 1); });
    check_grad(w, [&] { return conv_transpose2d(x, w, b, 2, 1); });
    check_grad(b, [&] { return conv_transpose2d(x, w, b, 2, 1); });
}

TEST_CASE("instance_norm2d normalizes per (n, c) and is differentiable") {
    Rng rng(6);
    Tensor<double> xt = random_tensor<double>({2, 3, 5, 5}, rng, -2.0, 4.0);
    auto y = instance_norm2d(constant(xt));
    REQUIRE(max_abs_diff(y->value, testutil::naive_instance_norm(xt)) < 1e-12);
    for (int64_t n = 0; n < 2; ++n)
        for (int64_t c = 0; c < 3; ++c) {
            double mean = 0;
            for (int64_t h = 0; h < 5; ++h)
                for (int64_t w = 0; w < 5; ++w) mean += y->value.at(n, c, h, w);
            REQUIRE(std::abs(mean / 25.0) < 1e-12);
        }
    auto x = leafv(xt);
    check_grad(x, [&] { return instance_norm2d(x); }, 24, 1e-4);
}

TEST_CASE("batch_norm2d uses per-channel batch statistics") {
    Rng rng(7);
    Tensor<double> xt = random_tensor<double>({3, 2, 4, 4}, rng, -1.0, 3.0);
    auto y = batch_norm2d(constant(xt));
    for (int64_t c = 0; c < 2; ++c) {
        double mean = 0, var = 0;
        for (int64_t n = 0; n < 3; ++n)
            for (int64_t h = 0; h < 4; ++h)
                for (int64_t w = 0; w < 4; ++w) mean += y->value.at(n, c, h, w);
        mean /= 48.0;
        REQUIRE(std::abs(mean) < 1e-12);
        for (int64_t n = 0; n < 3; ++n)
            for (int64_t h = 0; h < 4; ++h)
                for (int64_t w = 0; w < 4; ++w) {
                    double d = y->value.at(n, c, h, w) - mean;
                    var += d * d;
                }
        REQUIRE(var / 48.0 == Catch::Approx(1.0).margin(1e-3));
    }
    auto x = leafv(xt);
    check_grad(x, [&] { return batch_norm2d(x); }, 24, 1e-4);
}

TEST_CASE("channel_affine and frozen batch norm") {
    Rng rng(8);
    Tensor<double> xt = random_tensor<double>({2, 3, 3, 3}, rng);
    Tensor<double> gamma = random_tensor<double>({3}, rng, 0.5, 1.5);
    Tensor<double> beta = random_tensor<double>({3}, rng);
    Tensor<double> mean = random_tensor<double>({3}, rng);
    Tensor<double> var = random_tensor<double>({3}, rng, 0.5, 2.0);
    auto y = batch_norm2d_frozen(constant(xt), gamma, beta, mean, var, 1e-5);
    double expect = (xt.at(0, 1, 2, 2) - mean[1]) / std::sqrt(var[1] + 1e-5) * gamma[1] + beta[1];
    REQUIRE(y->value.at(0, 1, 2, 2) == Catch::Approx(expect).epsilon(1e-12));
    auto x = leafv(xt);
    check_grad(x, [&] { return batch_norm2d_frozen(x, gamma, beta, mean, var, 1e-5); });
}

TEST_CASE("pooling ops and gradients") {
    Rng rng(9);
    Tensor<double> xt = random_tensor<double>({2, 3, 4, 4}, rng);
    auto ap = global_avg_pool(constant(xt));
    REQUIRE(ap->value.shape == Shape{2, 3});
    REQUIRE(ap->value[0] == Catch::Approx([&] {
                double s = 0;
                for (int64_t i = 0; i < 16; ++i) s += xt[i];
                return s / 16.0;
            }()));
    auto mp = global_max_pool(constant(xt));
    REQUIRE(mp->value.shape == Shape{2, 3});

    auto x = leafv(xt);
    check_grad(x, [&] { return global_avg_pool(x); });
    check_grad(x, [&] { return global_max_pool(x); });
    check_grad(x, [&] { return max_pool2d_2x2(x); });
    auto pooled = max_pool2d_2x2(constant(xt));
    REQUIRE(pooled->value.shape == Shape{2, 3, 2, 2});
    REQUIRE_THROWS_AS(max_pool2d_2x2(constant(Tensor<double>({1, 1, 3, 3}))), ShapeError);
}

TEST_CASE("linear matches manual matmul and is differentiable") {
    Rng rng(10);
    Tensor<double> xt = random_tensor<double>({2, 3}, rng);
    Tensor<double> wt = random_tensor<double>({4, 3}, rng);
    auto y = linear(constant(xt), constant(wt));
    REQUIRE(y->value.shape == Shape{2, 4});
    double expect = 0;
    for (int64_t k = 0; k < 3; ++k) expect += xt[1 * 3 + k] * wt[2 * 3 + k];
    REQUIRE(y->value[1 * 4 + 2] == Catch::Approx(expect));
    auto x = leafv(xt);
    auto w = leafv(wt);
    check_grad(x, [&] { return linear(x, w); });
    check_grad(w, [&] { return linear(x, w); });
}

TEST_CASE("broadcast scaling and channel statistics gradients") {
    Rng rng(11);
    auto x = leafv(random_tensor<double>({2, 3, 4, 4}, rng));
    auto s = leafv(random_tensor<double>({2, 3}, rng, 0.1, 0.9));
    auto m = leafv(random_tensor<double>({2, 1, 4, 4}, rng, 0.1, 0.9));
    check_grad(x, [&] { return scale_channels(x, s); });
    check_grad(s, [&] { return scale_channels(x, s); });
    check_grad(x, [&] { return scale_spatial(x, m); });
    check_grad(m, [&] { return scale_spatial(x, m); });
    check_grad(x, [&] { return channel_mean(x); });
    check_grad(x, [&] { return channel_max(x); });
    auto b = leafv(random_tensor<double>({2, 2, 4, 4}, rng));
    check_grad(x, [&] { return concat_channels(x, b); });
    check_grad(b, [&] { return concat_channels(x, b); });
}

TEST_CASE("depthwise_filter2d: valid-mode filtering and gradient") {
    Rng rng(12);
    Tensor<double> xt = random_tensor<double>({1, 2, 6, 6}, rng);
    Tensor<double> k({3, 3}, 1.0 / 9.0);
    auto y = depthwise_filter2d(constant(xt), k);
    REQUIRE(y->value.shape == Shape{1, 2, 4, 4});
    double expect = 0;
    for (int64_t r = 0; r < 3; ++r)
        for (int64_t c = 0; c < 3; ++c) expect += xt.at(0, 1, 1 + r, 2 + c) / 9.0;
    REQUIRE(y->value.at(0, 1, 1, 2) == Catch::Approx(expect));
    auto x = leafv(xt);
    check_grad(x, [&] { return depthwise_filter2d(x, k); });
    Tensor<double> big({7, 7}, 1.0);
    REQUIRE_THROWS_AS(depthwise_filter2d(constant(Tensor<double>({1, 1, 5, 5})), big), ShapeError);
}

TEST_CASE("dropout: inverted scaling, determinism per seed, identity at p=0") {
    Tensor<double> xt({1, 1, 10, 10}, 1.0);
    auto x = leafv(xt);
    Rng r1(17), r2(17);
    auto y1 = dropout(x, 0.5, r1);
    auto y2 = dropout(x, 0.5, r2);
    REQUIRE(max_abs_diff(y1->value, y2->value) == 0.0);
    for (int64_t i = 0; i < y1->value.numel(); ++i)
        REQUIRE((y1->value[i] == 0.0 || y1->value[i] == Catch::Approx(2.0)));
    Rng r3(18);
    REQUIRE(dropout(x, 0.0, r3).get() == x.get());
    Rng r4(19);
    check_grad(x, [&] {
        Rng fixed(21);
        return dropout(x, 0.3, fixed);
    });
}

TEST_CASE("shape mismatches raise ShapeError") {
    auto a = constant(Tensor<double>({2, 2}, 1.0));
    auto b = constant(Tensor<double>({2, 3}, 1.0));
    REQUIRE_THROWS_AS(add(a, b), ShapeError);
    REQUIRE_THROWS_AS(mul(a, b), ShapeError);
    REQUIRE_THROWS_AS(linear(a, constant(Tensor<double>({4, 7}))), ShapeError);
    REQUIRE_THROWS_AS(reshape(a, Shape{5}), ShapeError);
}
