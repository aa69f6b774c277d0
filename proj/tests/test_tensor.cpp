#include <doctest.h>

#include <cmath>
#include <cstring>
#include <random>

#include "medkan/gradcheck.hpp"
#include "medkan/tensor.hpp"
#include "medkan/threadpool.hpp"

using namespace medkan;

namespace {

// reference matmul: plain triple loop, no shared code with the kernel
template <class T>
std::vector<T> matmul_oracle(const T* a, const T* b, std::size_t m, std::size_t k,
                             std::size_t n) {
    std::vector<T> c(m * n, T(0));
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t p = 0; p < k; ++p) c[i * n + j] += a[i * k + p] * b[p * n + j];
    return c;
}

// reference conv: direct six-loop cross-correlation with grouped channels
template <class T>
std::vector<T> conv_oracle(const T* x, const T* w, const T* bias, int N, int C, int H, int W,
                           int O, int kh, int kw, int stride, int pad, int groups) {
    const int Cg = C / groups, Og = O / groups;
    const int Ho = (H + 2 * pad - kh) / stride + 1;
    const int Wo = (W + 2 * pad - kw) / stride + 1;
    std::vector<T> y(std::size_t(N) * O * Ho * Wo, T(0));
    for (int n = 0; n < N; ++n)
        for (int o = 0; o < O; ++o) {
            const int g = o / Og;
            for (int oh = 0; oh < Ho; ++oh)
                for (int ow = 0; ow < Wo; ++ow) {
                    T acc = bias ? bias[o] : T(0);
                    for (int ci = 0; ci < Cg; ++ci)
                        for (int ki = 0; ki < kh; ++ki)
                            for (int kj = 0; kj < kw; ++kj) {
                                const int ih = oh * stride + ki - pad;
                                const int iw = ow * stride + kj - pad;
                                if (ih < 0 || ih >= H || iw < 0 || iw >= W) continue;
                                const int c = g * Cg + ci;
                                acc += x[((std::size_t(n) * C + c) * H + ih) * W + iw] *
                                       w[((std::size_t(o) * Cg + ci) * kh + ki) * kw + kj];
                            }
                    y[((std::size_t(n) * O + o) * Ho + oh) * Wo + ow] = acc;
                }
        }
    return y;
}

template <class T>
double max_abs_diff(std::span<const T> a, std::span<const T> b) {
    REQUIRE(a.size() == b.size());
    double worst = 0;
    for (std::size_t i = 0; i < a.size(); ++i)
        worst = std::max(worst, std::abs(double(a[i]) - double(b[i])));
    return worst;
}

template <class T>
double max_abs_diff(std::span<const T> a, const std::vector<T>& b) {
    return max_abs_diff(a, std::span<const T>(b.data(), b.size()));
}

} // namespace

TEST_SUITE_BEGIN("tensor");

TEST_CASE("matmul identity") {
    std::mt19937_64 rng(1);
    auto b = Tensor<double>::randn({3, 4}, rng);
    auto eye = Tensor<double>::zeros({3, 3});
    for (int i = 0; i < 3; ++i) eye.data_mut()[i * 3 + i] = 1.0;
    auto y = matmul(eye, b);
    CHECK(max_abs_diff(y.view(), b.view()) == 0.0);
}

TEST_CASE("matmul hand-computable 2x2") {
    auto a = Tensor<double>::from_vector({2, 2}, {1, 2, 3, 4});
    auto b = Tensor<double>::from_vector({2, 1}, {0, 1});
    auto y = matmul(a, b);
    CHECK(y.data()[0] == doctest::Approx(2.0).epsilon(1e-15));
    CHECK(y.data()[1] == doctest::Approx(4.0).epsilon(1e-15));
}

TEST_CASE("matmul random 5x7 * 7x3 vs triple-loop oracle") {
    std::mt19937_64 rng(7);
    auto a = Tensor<double>::randn({5, 7}, rng);
    auto b = Tensor<double>::randn({7, 3}, rng);
    auto y = matmul(a, b);
    CHECK(max_abs_diff(y.view(), matmul_oracle(a.data(), b.data(), 5, 7, 3)) < 1e-12);
}

TEST_CASE("matmul shape mismatch names both shapes") {
    auto a = Tensor<float>::zeros({2, 3});
    auto b = Tensor<float>::zeros({4, 2});
    try {
        matmul(a, b);
        FAIL("expected ShapeError");
    } catch (const ShapeError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("[2x3]") != std::string::npos);
        CHECK(msg.find("[4x2]") != std::string::npos);
    }
}

TEST_CASE("conv2d 1x1 kernel equals per-pixel matmul oracle") {
    std::mt19937_64 rng(3);
    auto x = Tensor<double>::randn({2, 3, 4, 4}, rng);
    auto w = Tensor<double>::randn({5, 3, 1, 1}, rng);
    auto y = conv2d(x, w, Tensor<double>{}, ConvGeom{1, 0, 1});
    const double* xd = x.data();
    const double* wd = w.data();
    const double* yd = y.data();
    double worst = 0;
    for (int n = 0; n < 2; ++n)
        for (int o = 0; o < 5; ++o)
            for (int p = 0; p < 16; ++p) {
                double acc = 0;
                for (int c = 0; c < 3; ++c) acc += wd[o * 3 + c] * xd[(n * 3 + c) * 16 + p];
                worst = std::max(worst, std::abs(acc - yd[(n * 5 + o) * 16 + p]));
            }
    CHECK(worst < 1e-12);
}

TEST_CASE("conv2d all-zero weights with bias gives constant channels") {
    std::mt19937_64 rng(5);
    auto x = Tensor<float>::randn({2, 2, 5, 5}, rng);
    auto w = Tensor<float>::zeros({3, 2, 3, 3});
    auto b = Tensor<float>::from_vector({3}, {0.5f, -1.0f, 2.0f});
    auto y = conv2d(x, w, b, ConvGeom{1, 1, 1});
    const float* yd = y.data();
    for (int n = 0; n < 2; ++n)
        for (int o = 0; o < 3; ++o)
            for (int p = 0; p < 25; ++p) CHECK(yd[(n * 3 + o) * 25 + p] == b.data()[o]);
}

TEST_CASE("conv2d random grouped cases vs direct loop oracle") {
    std::mt19937_64 rng(11);
    for (int g : {1, 2, 4}) {
        auto x = Tensor<double>::randn({2, 4, 6, 5}, rng);
        auto w = Tensor<double>::randn({std::size_t(8), std::size_t(4 / g), 3, 3}, rng);
        auto b = Tensor<double>::randn({8}, rng);
        auto y = conv2d(x, w, b, ConvGeom{1, 1, g});
        auto ref = conv_oracle(x.data(), w.data(), b.data(), 2, 4, 6, 5, 8, 3, 3, 1, 1, g);
        CHECK(max_abs_diff(y.view(), ref) < 1e-10);
    }
    // strided case
    auto x = Tensor<double>::randn({1, 2, 7, 7}, rng);
    auto w = Tensor<double>::randn({4, 2, 3, 3}, rng);
    auto y = conv2d(x, w, Tensor<double>{}, ConvGeom{2, 0, 1});
    auto ref = conv_oracle<double>(x.data(), w.data(), nullptr, 1, 2, 7, 7, 4, 3, 3, 2, 0, 1);
    CHECK(max_abs_diff(y.view(), ref) < 1e-10);
}

TEST_CASE("conv2d rejects bad geometry and divisibility") {
    auto x = Tensor<float>::zeros({1, 3, 6, 6});
    auto w = Tensor<float>::zeros({4, 3, 3, 3});
    // (6 + 2 - 3) % 2 != 0: output extent is not integral
    CHECK_THROWS_AS(conv2d(x, w, Tensor<float>{}, ConvGeom{2, 1, 1}), ConfigError);
    auto w2 = Tensor<float>::zeros({4, 1, 3, 3});
    CHECK_THROWS_AS(conv2d(x, w2, Tensor<float>{}, ConvGeom{1, 1, 2}), ConfigError);
}

TEST_CASE("backward of sum gives all-ones gradient") {
    auto x = Tensor<double>::from_vector({2, 3}, {1, 2, 3, 4, 5, 6}, true);
    sum(x).backward();
    for (std::size_t i = 0; i < 6; ++i) CHECK(x.grad_data()[i] == 1.0);
}

TEST_CASE("backward of sum of squares") {
    auto x = Tensor<double>::from_vector({3}, {1, -2, 3}, true);
    sum(mul(x, x)).backward();
    CHECK(x.grad_data()[0] == doctest::Approx(2));
    CHECK(x.grad_data()[1] == doctest::Approx(-4));
    CHECK(x.grad_data()[2] == doctest::Approx(6));
}

TEST_CASE("backward requires a rank-0 tensor on the tape") {
    auto x = Tensor<double>::from_vector({2}, {1, 2}, true);
    auto y = add(x, x);
    CHECK_THROWS_AS(y.backward(), ConfigError);
    auto leaf = Tensor<double>::scalar(1.0);
    leaf.set_requires_grad(true);
    CHECK_THROWS_AS(leaf.backward(), ConfigError); // not on the tape
}

TEST_CASE("gradient accumulates over multiple consumers") {
    auto x = Tensor<double>::from_vector({2}, {3, -1}, true);
    auto y = add(mul(x, x), x); // dy/dx = 2x + 1
    sum(y).backward();
    CHECK(x.grad_data()[0] == doctest::Approx(7.0));
    CHECK(x.grad_data()[1] == doctest::Approx(-1.0));
}

TEST_CASE("softmax basics") {
    auto u = Tensor<double>::zeros({1, 4});
    auto y = softmax(u, 1);
    for (int c = 0; c < 4; ++c) CHECK(y.data()[c] == doctest::Approx(0.25).epsilon(1e-12));

    auto x = Tensor<double>::from_vector({1, 2}, {0.0, std::log(3.0)});
    auto p = softmax(x, 1);
    CHECK(p.data()[0] == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(p.data()[1] == doctest::Approx(0.75).epsilon(1e-12));
}

TEST_CASE("softmax is exactly shift invariant") {
    // dyadic logits so that adding 1000 is itself lossless; the max
    // subtraction then cancels the offset bit-exactly
    std::mt19937_64 rng(13);
    std::uniform_int_distribution<int> q(-8, 8);
    std::vector<double> vals(15);
    for (auto& v : vals) v = q(rng) * 0.25;
    auto x = Tensor<double>::from_vector({3, 5}, vals);
    auto b = softmax(add_scalar(x, 1000.0), 1);
    auto a = softmax(x, 1);
    CHECK(std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);
}

TEST_CASE("softmax rows are positive and sum to one") {
    std::mt19937_64 rng(17);
    auto x = Tensor<double>::randn({6, 9}, rng, 3.0);
    auto y = softmax(x, 1);
    for (int i = 0; i < 6; ++i) {
        double s = 0;
        for (int c = 0; c < 9; ++c) {
            CHECK(y.data()[i * 9 + c] > 0);
            s += y.data()[i * 9 + c];
        }
        CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("reshape / transpose / permute round-trips are identity on data") {
    std::mt19937_64 rng(19);
    auto x = Tensor<double>::randn({3, 4, 5}, rng);
    auto y = reshape(reshape(x, {60}), {3, 4, 5});
    CHECK(std::memcmp(x.data(), y.data(), x.size() * sizeof(double)) == 0);
    auto m = Tensor<double>::randn({4, 7}, rng);
    auto t2 = transpose(transpose(m));
    CHECK(std::memcmp(m.data(), t2.data(), m.size() * sizeof(double)) == 0);
    auto p = permute(permute(x, {2, 0, 1}), {1, 2, 0});
    CHECK(std::memcmp(x.data(), p.data(), x.size() * sizeof(double)) == 0);
}

TEST_CASE("concat then slice recovers originals bit-exactly") {
    std::mt19937_64 rng(23);
    for (std::size_t axis : {std::size_t(0), std::size_t(1), std::size_t(2)}) {
        Shape sa{2, 3, 4}, sb{2, 3, 4};
        sa[axis] = 2;
        sb[axis] = 3;
        auto a = Tensor<float>::randn(sa, rng);
        auto b = Tensor<float>::randn(sb, rng);
        auto cat = concat<float>({a, b}, axis);
        auto a2 = slice(cat, axis, 0, sa[axis]);
        auto b2 = slice(cat, axis, sa[axis], sb[axis]);
        CHECK(std::memcmp(a.data(), a2.data(), a.size() * sizeof(float)) == 0);
        CHECK(std::memcmp(b.data(), b2.data(), b.size() * sizeof(float)) == 0);
    }
}

TEST_CASE("ops are pure: identical inputs give bit-identical outputs") {
    std::mt19937_64 rng(29);
    auto x = Tensor<float>::randn({4, 8, 9, 9}, rng);
    auto w = Tensor<float>::randn({8, 2, 3, 3}, rng);
    auto b = Tensor<float>::randn({8}, rng);
    auto y1 = conv2d(x, w, b, ConvGeom{1, 1, 4});
    auto y2 = conv2d(x, w, b, ConvGeom{1, 1, 4});
    CHECK(std::memcmp(y1.data(), y2.data(), y1.size() * sizeof(float)) == 0);
    auto g = Tensor<float>::full({8}, 1.0f);
    auto m1 = layer_norm_channels(x, g, Tensor<float>::zeros({8}));
    auto m2 = layer_norm_channels(x, g, Tensor<float>::zeros({8}));
    CHECK(std::memcmp(m1.data(), m2.data(), m1.size() * sizeof(float)) == 0);
}

TEST_CASE("shape invariants") {
    CHECK_THROWS_AS(Tensor<float>::zeros({2, 0, 3}), ConfigError);
    auto s = Tensor<double>::scalar(42.0);
    CHECK(s.rank() == 0);
    CHECK(s.size() == 1);
    CHECK(s.item() == 42.0);
}

TEST_CASE("finite differences: every primitive op under 1e-6") {
    GradcheckReport report = run_gradcheck(false);
    int op_entries = 0;
    for (const auto& e : report.entries) {
        if (e.kind.rfind("op:", 0) != 0) continue;
        ++op_entries;
        INFO(e.kind << " worst " << e.worst_rel_err << " at " << e.worst_at);
        CHECK(e.worst_rel_err < 1e-6);
    }
    CHECK(op_entries >= 20);
}

TEST_SUITE_END();
