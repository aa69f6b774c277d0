#include "medkan/grids.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

namespace medkan {

RbfGrid::RbfGrid(int K, double lo_, double hi_, double sigma_)
    : num_basis(K), lo(lo_), hi(hi_), sigma(sigma_) {
    if (K < 1) throw ConfigError("RbfGrid: num_basis must be >= 1, got " + std::to_string(K));
    if (K > 1 && !(hi > lo)) throw ConfigError("RbfGrid: requires hi > lo");
    if (!(sigma > 0)) throw ConfigError("RbfGrid: sigma must be positive, got " + std::to_string(sigma));
}

RbfGrid RbfGrid::with_spacing_sigma(int K, double lo, double hi) {
    if (K < 2) throw ConfigError("RbfGrid: num_basis must be >= 2, got " + std::to_string(K));
    return RbfGrid(K, lo, hi, (hi - lo) / (K - 1));
}

namespace detail {

namespace {

// 2^f on [-0.5, 0.5] via a degree-6 polynomial; exact at f = 0 so that
// exp(0) == 1. Keeps the whole loop branch-free and vectorizable.
inline float poly_exp_neg(float x) {
    x = std::max(x, -87.0f);
    float t = x * 1.442695040888963f;
    const float magic = 12582912.0f; // 1.5 * 2^23: round-to-nearest for |t| < 2^22
    float nf = (t + magic) - magic;
    float g = (t - nf) * 0.6931471805599453f;
    float p = 1.0f + g * (1.0f + g * (0.5f + g * (0.16666666f + g * (0.041666668f +
              g * (0.008333567f + g * 0.0013913608f)))));
    std::int32_t ni = static_cast<std::int32_t>(nf);
    std::int32_t bits;
    std::memcpy(&bits, &p, 4);
    bits += ni << 23;
    float r;
    std::memcpy(&r, &bits, 4);
    return std::min(r, 1.0f);
}

} // namespace

void exp_neg_inplace(float* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] = poly_exp_neg(y[i]);
}

void exp_neg_inplace(double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] = std::exp(y[i]);
}

} // namespace detail

template <class T>
void RbfGrid::eval(const T* x, std::size_t n, T* out) const {
    const int K = num_basis;
    const T h = T(spacing());
    const T c0 = T(lo);
    const T inv2s2 = T(1.0 / (2.0 * sigma * sigma));
    for (std::size_t i = 0; i < n; ++i) {
        const T xi = x[i];
        T* o = out + i * K;
        for (int k = 0; k < K; ++k) {
            T d = xi - (c0 + T(k) * h);
            o[k] = -d * d * inv2s2;
        }
    }
    detail::exp_neg_inplace(out, n * std::size_t(K));
}

template <class T>
void RbfGrid::eval_deriv(const T* x, std::size_t n, T* val, T* der) const {
    eval(x, n, val);
    const int K = num_basis;
    const T h = T(spacing());
    const T c0 = T(lo);
    const T inv_s2 = T(1.0 / (sigma * sigma));
    for (std::size_t i = 0; i < n; ++i) {
        const T xi = x[i];
        const T* v = val + i * K;
        T* d = der + i * K;
        for (int k = 0; k < K; ++k)
            d[k] = v[k] * ((c0 + T(k) * h) - xi) * inv_s2;
    }
}

BsplineGrid::BsplineGrid(int K, int degree_, double lo_, double hi_)
    : num_basis(K), degree(degree_), lo(lo_), hi(hi_) {
    if (degree < 0) throw ConfigError("BsplineGrid: degree must be >= 0");
    if (K < degree + 1)
        throw ConfigError("BsplineGrid: num_basis must be >= degree+1, got K=" + std::to_string(K) +
                          " for degree " + std::to_string(degree));
    if (!(hi > lo)) throw ConfigError("BsplineGrid: requires hi > lo");
}

namespace {

// Iterative Cox-de Boor over the full extended knot vector, the way KAN
// implementations evaluate all K bases at once. buf must hold K + p entries.
template <class T>
void bspline_all(const BsplineGrid& g, T x, T* buf, T* tmp) {
    const int K = g.num_basis, p = g.degree;
    const T xlo = T(g.lo), xhi = T(g.hi);
    T xi = std::min(std::max(x, xlo), xhi);
    const T h = T(g.spacing());
    const T t0 = T(g.knot(0));
    // degree 0: indicator of the containing span; the final span is closed
    // so that x == hi still has a supporting basis
    const int nseg = K + p;
    for (int j = 0; j < nseg; ++j) {
        T tj = t0 + T(j) * h;
        bool in = (xi >= tj) && (xi < tj + h);
        if (j == nseg - 1) in = in || xi == tj + h;
        buf[j] = in ? T(1) : T(0);
    }
    T* prev = buf;
    T* cur = tmp;
    for (int d = 1; d <= p; ++d) {
        const int cnt = K + p - d;
        for (int j = 0; j < cnt; ++j) {
            T tj = t0 + T(j) * h;
            T a = (xi - tj) / (T(d) * h);
            T b = ((tj + T(d + 1) * h) - xi) / (T(d) * h);
            cur[j] = a * prev[j] + b * prev[j + 1];
        }
        std::swap(prev, cur);
    }
    if (prev != buf) std::copy(prev, prev + K, buf);
}

// bases of degree p and p-1 in one sweep, for the analytic derivative
template <class T>
void bspline_all_two(const BsplineGrid& g, T x, T* out_p, T* out_pm1, T* work0, T* work1) {
    const int K = g.num_basis, p = g.degree;
    const T xlo = T(g.lo), xhi = T(g.hi);
    T xi = std::min(std::max(x, xlo), xhi);
    const T h = T(g.spacing());
    const T t0 = T(g.knot(0));
    const int nseg = K + p;
    for (int j = 0; j < nseg; ++j) {
        T tj = t0 + T(j) * h;
        bool in = (xi >= tj) && (xi < tj + h);
        if (j == nseg - 1) in = in || xi == tj + h;
        work0[j] = in ? T(1) : T(0);
    }
    T* prev = work0;
    T* cur = work1;
    for (int d = 1; d <= p; ++d) {
        if (d == p) std::copy(prev, prev + (K + 1), out_pm1); // K + p - (p-1) entries
        const int cnt = K + p - d;
        for (int j = 0; j < cnt; ++j) {
            T tj = t0 + T(j) * h;
            T a = (xi - tj) / (T(d) * h);
            T b = ((tj + T(d + 1) * h) - xi) / (T(d) * h);
            cur[j] = a * prev[j] + b * prev[j + 1];
        }
        std::swap(prev, cur);
    }
    std::copy(prev, prev + K, out_p);
    if (p == 0) std::fill(out_pm1, out_pm1 + (K + 1), T(0));
}

} // namespace

template <class T>
void BsplineGrid::eval(const T* x, std::size_t n, T* out) const {
    const int K = num_basis, p = degree;
    std::vector<T> buf(K + p), tmp(K + p);
    for (std::size_t i = 0; i < n; ++i) {
        bspline_all(*this, x[i], buf.data(), tmp.data());
        std::copy(buf.data(), buf.data() + K, out + i * K);
    }
}

template <class T>
void BsplineGrid::eval_deriv(const T* x, std::size_t n, T* val, T* der) const {
    const int K = num_basis, p = degree;
    const T h = T(spacing());
    std::vector<T> bp(K), bpm1(K + 1), w0(K + p), w1(K + p);
    const T xlo = T(lo), xhi = T(hi);
    for (std::size_t i = 0; i < n; ++i) {
        bspline_all_two(*this, x[i], bp.data(), bpm1.data(), w0.data(), w1.data());
        std::copy(bp.begin(), bp.end(), val + i * K);
        T* d = der + i * K;
        if (p == 0 || x[i] < xlo || x[i] > xhi) {
            std::fill(d, d + K, T(0)); // clamped region is flat
            continue;
        }
        // d/dx B_{j,p} = p * (B_{j,p-1}/(t_{j+p}-t_j) - B_{j+1,p-1}/(t_{j+p+1}-t_{j+1}));
        // with uniform knots both denominators are p*h, so this is a difference over h
        const T inv = T(1) / h;
        for (int j = 0; j < K; ++j) d[j] = (bpm1[j] - bpm1[j + 1]) * inv;
    }
}

int grid_num_basis(const Grid& g) {
    return std::visit([](const auto& v) { return v.num_basis; }, g);
}

const char* grid_kind_name(const Grid& g) {
    return std::holds_alternative<RbfGrid>(g) ? "rbf" : "bspline";
}

template <class T>
void grid_eval(const Grid& g, const T* x, std::size_t n, T* out) {
    std::visit([&](const auto& v) { v.eval(x, n, out); }, g);
}

template <class T>
void grid_eval_deriv(const Grid& g, const T* x, std::size_t n, T* val, T* der) {
    std::visit([&](const auto& v) { v.eval_deriv(x, n, val, der); }, g);
}

Grid default_grid() { return RbfGrid::with_spacing_sigma(8, -2.0, 2.0); }

template void RbfGrid::eval<float>(const float*, std::size_t, float*) const;
template void RbfGrid::eval<double>(const double*, std::size_t, double*) const;
template void RbfGrid::eval_deriv<float>(const float*, std::size_t, float*, float*) const;
template void RbfGrid::eval_deriv<double>(const double*, std::size_t, double*, double*) const;
template void BsplineGrid::eval<float>(const float*, std::size_t, float*) const;
template void BsplineGrid::eval<double>(const double*, std::size_t, double*) const;
template void BsplineGrid::eval_deriv<float>(const float*, std::size_t, float*, float*) const;
template void BsplineGrid::eval_deriv<double>(const double*, std::size_t, double*, double*) const;
template void grid_eval<float>(const Grid&, const float*, std::size_t, float*);
template void grid_eval<double>(const Grid&, const double*, std::size_t, double*);
template void grid_eval_deriv<float>(const Grid&, const float*, std::size_t, float*, float*);
template void grid_eval_deriv<double>(const Grid&, const double*, std::size_t, double*, double*);

} // namespace medkan
