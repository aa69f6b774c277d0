#pragma once

#include <random>
#include <string>

#include "medkan/grids.hpp"
#include "medkan/nn.hpp"
#include "medkan/tensor.hpp"

namespace medkan {

/// Basis expansion of every element: output shape is x.shape() + [K].
/// Forward-only (not recorded on the tape).
template <class T> Tensor<T> rbf_eval(const RbfGrid& grid, const Tensor<T>& x);
template <class T> Tensor<T> bspline_eval(const BsplineGrid& grid, const Tensor<T>& x);

/// Fused KAN dense op:
///   y[r,o] = sum_i ( wb[o,i]*silu(x[r,i]) + sum_k ws[o,i,k]*basis_k(x[r,i]) ) + bias[o]
/// ws is [O,I,K]; wb ([O,I]) and bias ([O]) may be undefined to drop the
/// respective term. Differentiable w.r.t. x, ws, wb and bias; the basis
/// expansion is recomputed during backward rather than kept on the tape.
template <class T>
Tensor<T> kan_dense(const Tensor<T>& x, const Tensor<T>& ws, const Tensor<T>& wb,
                    const Tensor<T>& bias, const Grid& grid);

/// KAN convolution: the fused dense op applied to every im2col patch column,
/// with grouped channel partitioning. ws is [O, (C/g)*kh*kw, K] and wb
/// [O, (C/g)*kh*kw]. With a 1x1 kernel and defaults this is kan_dense per pixel.
template <class T>
Tensor<T> kan_conv2d(const Tensor<T>& x, const Tensor<T>& ws, const Tensor<T>& wb,
                     const Tensor<T>& bias, const Grid& grid, int kh, int kw,
                     const ConvGeom& geom);

/// Dense layer whose every input/output edge carries a learnable activation:
/// a basis-weighted spline branch plus an optional silu base branch.
template <class T>
struct KanLinear {
    int in_dim = 0, out_dim = 0;
    Grid grid = default_grid();
    Tensor<T> spline_w; // [out, in, K]
    Tensor<T> base_w;   // [out, in]; undefined when the base branch is off
    Tensor<T> bias;     // [out]

    KanLinear() = default;
    KanLinear(int in, int out, Grid grid, std::mt19937_64& rng, bool use_base = true,
              bool with_bias = true);

    Tensor<T> forward(const Tensor<T>& x) const; // [N, in] -> [N, out]
    void params(const std::string& prefix, NamedParams<T>& out) const;
    std::size_t param_count() const;
};

template <class T>
struct KanConv2d {
    int in_ch = 0, out_ch = 0, kernel = 1;
    ConvGeom geom;
    Grid grid = default_grid();
    Tensor<T> spline_w; // [O, (C/g)*k*k, K]
    Tensor<T> base_w;   // [O, (C/g)*k*k]
    Tensor<T> bias;     // [O]

    KanConv2d() = default;
    KanConv2d(int in_ch, int out_ch, int kernel, ConvGeom geom, Grid grid, std::mt19937_64& rng,
              bool use_base = true, bool with_bias = true);

    Tensor<T> forward(const Tensor<T>& x) const;
    void params(const std::string& prefix, NamedParams<T>& out) const;
    std::size_t param_count() const;
};

} // namespace medkan
