#include <doctest.h>

#include <cmath>
#include <cstring>
#include <random>

#include "medkan/grids.hpp"
#include "medkan/kan.hpp"

using namespace medkan;

namespace {

// textbook Cox-de Boor, written as the literal recursive definition
double bspline_recursive(int j, int p, double x, const std::vector<double>& t) {
    if (p == 0) return (x >= t[j] && x < t[j + 1]) ? 1.0 : 0.0;
    double a = 0, b = 0;
    if (t[j + p] != t[j]) a = (x - t[j]) / (t[j + p] - t[j]) * bspline_recursive(j, p - 1, x, t);
    if (t[j + p + 1] != t[j + 1])
        b = (t[j + p + 1] - x) / (t[j + p + 1] - t[j + 1]) * bspline_recursive(j + 1, p - 1, x, t);
    return a + b;
}

std::vector<double> knot_vector(const BsplineGrid& g) {
    std::vector<double> t(g.num_knots());
    for (int j = 0; j < g.num_knots(); ++j) t[j] = g.knot(j);
    return t;
}

} // namespace

TEST_SUITE_BEGIN("grids");

TEST_CASE("rbf equals one exactly at each center") {
    RbfGrid g = RbfGrid::with_spacing_sigma(8, -2.0, 2.0);
    for (int k = 0; k < 8; ++k) {
        double x = g.center(k);
        std::vector<double> out(8);
        g.eval(&x, 1, out.data());
        CHECK(out[k] == 1.0);
        // float path too: exact one at the center by construction
        float xf = float(x);
        std::vector<float> outf(8);
        g.eval(&xf, 1, outf.data());
        CHECK(outf[k] == 1.0f);
    }
}

TEST_CASE("rbf value at one sigma from a center") {
    RbfGrid g(5, -2.0, 2.0, 1.0);
    double x = g.center(2) + 1.0; // exactly sigma away from center 2
    std::vector<double> out(5);
    g.eval(&x, 1, out.data());
    CHECK(out[2] == doctest::Approx(std::exp(-0.5)).epsilon(1e-12));
    CHECK(out[2] == doctest::Approx(0.606531).epsilon(1e-5));
}

TEST_CASE("rbf K=5 centers -2..2 sigma 1 at x=0 vs direct formula") {
    RbfGrid g(5, -2.0, 2.0, 1.0);
    double x = 0.0;
    std::vector<double> out(5);
    g.eval(&x, 1, out.data());
    for (int k = 0; k < 5; ++k) {
        const double c = -2.0 + k * 1.0;
        const double expect = std::exp(-(x - c) * (x - c) / 2.0); // independent direct formula
        CHECK(std::abs(out[k] - expect) < 1e-15);
    }
}

TEST_CASE("rbf rejects non-positive sigma") {
    CHECK_THROWS_AS(RbfGrid(5, -2.0, 2.0, 0.0), ConfigError);
    CHECK_THROWS_AS(RbfGrid(5, -2.0, 2.0, -1.0), ConfigError);
}

TEST_CASE("rbf outputs lie in (0, 1] for both dtypes") {
    RbfGrid g = RbfGrid::with_spacing_sigma(8, -2.0, 2.0);
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-6.0, 6.0);
    for (int i = 0; i < 500; ++i) {
        double x = u(rng);
        std::vector<double> out(8);
        g.eval(&x, 1, out.data());
        float xf = float(x);
        std::vector<float> outf(8);
        g.eval(&xf, 1, outf.data());
        for (int k = 0; k < 8; ++k) {
            CHECK(out[k] > 0.0);
            CHECK(out[k] <= 1.0);
            CHECK(outf[k] > 0.0f);
            CHECK(outf[k] <= 1.0f);
        }
    }
}

TEST_CASE("rbf batch evaluation equals element-wise evaluation bit-exactly") {
    // no cross-element dependency: the property behind basis-level parallelism
    RbfGrid g = RbfGrid::with_spacing_sigma(8, -2.0, 2.0);
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<float> u(-3.0f, 3.0f);
    std::vector<float> xs(257);
    for (auto& v : xs) v = u(rng);
    std::vector<float> batch(xs.size() * 8);
    g.eval(xs.data(), xs.size(), batch.data());
    for (std::size_t i = 0; i < xs.size(); ++i) {
        std::vector<float> one(8);
        g.eval(&xs[i], 1, one.data());
        CHECK(std::memcmp(one.data(), batch.data() + i * 8, 8 * sizeof(float)) == 0);
    }
}

TEST_CASE("bspline partition of unity on the domain") {
    for (int K : {4, 5, 8, 16}) {
        BsplineGrid g(K, 3, -2.0, 2.0);
        std::mt19937_64 rng(7);
        std::uniform_real_distribution<double> u(-2.0, 2.0);
        for (int i = 0; i < 200; ++i) {
            double x = i == 0 ? -2.0 : (i == 1 ? 2.0 : u(rng));
            std::vector<double> out(K);
            g.eval(&x, 1, out.data());
            double s = 0;
            for (double v : out) {
                CHECK(v >= 0.0);
                s += v;
            }
            CHECK(std::abs(s - 1.0) < 1e-12);
        }
    }
}

TEST_CASE("bspline degree 0 is the indicator of the containing span") {
    BsplineGrid g(4, 0, 0.0, 4.0); // spans [0,1) [1,2) [2,3) [3,4]
    for (double x : {0.5, 1.5, 2.5, 3.5}) {
        std::vector<double> out(4);
        g.eval(&x, 1, out.data());
        for (int k = 0; k < 4; ++k) CHECK(out[k] == (k == int(x) ? 1.0 : 0.0));
    }
    double edge = 4.0; // closed top edge belongs to the last span
    std::vector<double> out(4);
    g.eval(&edge, 1, out.data());
    CHECK(out[3] == 1.0);
}

TEST_CASE("bspline degree 3 vs textbook recursive oracle on 100 random points") {
    BsplineGrid g(8, 3, -2.0, 2.0);
    const std::vector<double> t = knot_vector(g);
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(-2.0, 1.999);
    for (int i = 0; i < 100; ++i) {
        const double x = u(rng);
        std::vector<double> out(8);
        g.eval(&x, 1, out.data());
        for (int k = 0; k < 8; ++k) {
            const double ref = bspline_recursive(k, 3, x, t);
            CHECK(std::abs(out[k] - ref) < 1e-12);
        }
    }
}

TEST_CASE("bspline local support") {
    BsplineGrid g(10, 3, -2.0, 2.0);
    double x = -1.9; // near the low edge: only the first few bases can be active
    std::vector<double> out(10);
    g.eval(&x, 1, out.data());
    for (int k = 5; k < 10; ++k) CHECK(out[k] == 0.0);
}

TEST_CASE("bspline derivative matches finite differences of the basis") {
    BsplineGrid g(8, 3, -2.0, 2.0);
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> u(-1.8, 1.8);
    for (int i = 0; i < 50; ++i) {
        const double x = u(rng);
        std::vector<double> val(8), der(8), lo(8), hi(8);
        g.eval_deriv(&x, 1, val.data(), der.data());
        const double h = 1e-6;
        double xm = x - h, xp = x + h;
        g.eval(&xm, 1, lo.data());
        g.eval(&xp, 1, hi.data());
        for (int k = 0; k < 8; ++k)
            CHECK(der[k] == doctest::Approx((hi[k] - lo[k]) / (2 * h)).epsilon(1e-5));
    }
}

TEST_CASE("default grid matches the documented layer setup") {
    Grid g = default_grid();
    const auto& rbf = std::get<RbfGrid>(g);
    CHECK(rbf.num_basis == 8);
    CHECK(rbf.lo == -2.0);
    CHECK(rbf.hi == 2.0);
    CHECK(rbf.sigma == doctest::Approx(4.0 / 7.0).epsilon(1e-12));
}

TEST_CASE("bspline constructor validates") {
    CHECK_THROWS_AS(BsplineGrid(3, 3, -2.0, 2.0), ConfigError); // K < degree + 1
    CHECK_THROWS_AS(BsplineGrid(8, -1, -2.0, 2.0), ConfigError);
    CHECK_THROWS_AS(BsplineGrid(8, 3, 2.0, -2.0), ConfigError);
}

TEST_CASE("rbf_eval / bspline_eval tensor wrappers append a basis axis") {
    std::mt19937_64 rng(17);
    auto x = Tensor<float>::uniform({3, 4}, rng, -1.5f, 1.5f);
    RbfGrid rg = RbfGrid::with_spacing_sigma(6, -2.0, 2.0);
    auto y = rbf_eval(rg, x);
    CHECK(y.shape() == Shape{3, 4, 6});
    BsplineGrid bg(6, 3, -2.0, 2.0);
    auto z = bspline_eval(bg, x);
    CHECK(z.shape() == Shape{3, 4, 6});
    // spot-check one element against the scalar kernel
    std::vector<float> one(6);
    rg.eval(x.data() + 5, 1, one.data());
    CHECK(std::memcmp(one.data(), y.data() + 5 * 6, 6 * sizeof(float)) == 0);
}

TEST_SUITE_END();
