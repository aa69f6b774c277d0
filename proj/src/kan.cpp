#include "medkan/kan.hpp"

#include <cmath>

#include "medkan/threadpool.hpp"
#include "tensor_detail.hpp"

namespace medkan {

namespace {

using detail::attach_node;
using detail::scratch;

// scratch slot map for this translation unit (conv paths run inside pool
// workers, so every slot is thread-local):
//   0 cols          1 phi(cols)     2 silu(cols)    3 dphi(cols)
//   4 transposed w  5 gphi          6 gcols         8 per-channel basis row
// slot 7 belongs to detail::mm_tn.

// Basis expansion of an im2col matrix: cols is [in, P] and phi [in*K, P] with
// phi[(i*K + k)*P + p] = basis_k(cols[i,p]). der may be null.
template <class T>
void expand_cols(const Grid& grid, const T* cols, int in, int P, T* phi, T* der) {
    const int K = grid_num_basis(grid);
    if (const auto* rbf = std::get_if<RbfGrid>(&grid)) {
        const T c0 = T(rbf->lo);
        const T h = T(rbf->spacing());
        const T inv2s2 = T(1.0 / (2.0 * rbf->sigma * rbf->sigma));
        for (int i = 0; i < in; ++i) {
            const T* __restrict src = cols + std::size_t(i) * P;
            for (int k = 0; k < K; ++k) {
                const T c = c0 + T(k) * h;
                T* __restrict dst = phi + (std::size_t(i) * K + k) * P;
                for (int p = 0; p < P; ++p) {
                    T d = src[p] - c;
                    dst[p] = -d * d * inv2s2;
                }
            }
        }
        detail::exp_neg_inplace(phi, std::size_t(in) * K * P);
        if (der) {
            const T inv_s2 = T(1.0 / (rbf->sigma * rbf->sigma));
            for (int i = 0; i < in; ++i) {
                const T* __restrict src = cols + std::size_t(i) * P;
                for (int k = 0; k < K; ++k) {
                    const T c = c0 + T(k) * h;
                    const T* __restrict v = phi + (std::size_t(i) * K + k) * P;
                    T* __restrict dd = der + (std::size_t(i) * K + k) * P;
                    for (int p = 0; p < P; ++p) dd[p] = v[p] * (c - src[p]) * inv_s2;
                }
            }
        }
        return;
    }
    const auto& bsp = std::get<BsplineGrid>(grid);
    std::vector<T>& row = scratch<T>(8);
    row.resize(std::size_t(P) * K * (der ? 2 : 1));
    for (int i = 0; i < in; ++i) {
        const T* src = cols + std::size_t(i) * P;
        T* val_row = row.data();
        T* der_row = row.data() + std::size_t(P) * K;
        if (der)
            bsp.eval_deriv(src, std::size_t(P), val_row, der_row);
        else
            bsp.eval(src, std::size_t(P), val_row);
        for (int k = 0; k < K; ++k) {
            T* dst = phi + (std::size_t(i) * K + k) * P;
            for (int p = 0; p < P; ++p) dst[p] = val_row[std::size_t(p) * K + k];
            if (der) {
                T* dd = der + (std::size_t(i) * K + k) * P;
                for (int p = 0; p < P; ++p) dd[p] = der_row[std::size_t(p) * K + k];
            }
        }
    }
}

template <class T>
void silu_buf(const T* x, std::size_t n, T* out) {
    for (std::size_t i = 0; i < n; ++i) out[i] = detail::silu_fn(x[i]);
}

struct KanDims {
    int N, C, H, W, O, Cg, kh, kw, Ho, Wo, groups, Og, patch, K;
};

template <class T>
KanDims check_kan_conv(const Tensor<T>& x, const Tensor<T>& ws, const Tensor<T>& wb,
                       const Tensor<T>& bias, const Grid& grid, int kh, int kw,
                       const ConvGeom& geom) {
    if (x.rank() != 4)
        throw ShapeError("kan_conv2d: input must be [N,C,H,W], got " + shape_str(x.shape()));
    KanDims d;
    d.N = int(x.extent(0)); d.C = int(x.extent(1)); d.H = int(x.extent(2)); d.W = int(x.extent(3));
    d.kh = kh; d.kw = kw;
    d.groups = geom.groups;
    d.K = grid_num_basis(grid);
    if (d.groups < 1 || d.C % d.groups != 0)
        throw ConfigError("kan_conv2d: C=" + std::to_string(d.C) + " not divisible by groups=" +
                          std::to_string(d.groups));
    d.Cg = d.C / d.groups;
    d.patch = d.Cg * kh * kw;
    if (ws.rank() != 3 || int(ws.extent(1)) != d.patch || int(ws.extent(2)) != d.K)
        throw ShapeError("kan_conv2d: spline weight " + shape_str(ws.shape()) +
                         " does not match patch size " + std::to_string(d.patch) + " and K=" +
                         std::to_string(d.K));
    d.O = int(ws.extent(0));
    if (d.O % d.groups != 0)
        throw ConfigError("kan_conv2d: O=" + std::to_string(d.O) + " not divisible by groups=" +
                          std::to_string(d.groups));
    d.Og = d.O / d.groups;
    if (wb.defined() && (wb.rank() != 2 || int(wb.extent(0)) != d.O || int(wb.extent(1)) != d.patch))
        throw ShapeError("kan_conv2d: base weight " + shape_str(wb.shape()) + " must be [" +
                         std::to_string(d.O) + "x" + std::to_string(d.patch) + "]");
    if (bias.defined() && (bias.rank() != 1 || int(bias.extent(0)) != d.O))
        throw ShapeError("kan_conv2d: bias " + shape_str(bias.shape()) + " does not match O=" +
                         std::to_string(d.O));
    d.Ho = conv_out_extent(d.H, kh, geom.stride, geom.pad);
    d.Wo = conv_out_extent(d.W, kw, geom.stride, geom.pad);
    return d;
}

} // namespace

// --- basis tensor wrappers ---------------------------------------------------

template <class T>
Tensor<T> rbf_eval(const RbfGrid& grid, const Tensor<T>& x) {
    Shape ys = x.shape();
    ys.push_back(std::size_t(grid.num_basis));
    Tensor<T> y = Tensor<T>::zeros(ys);
    grid.eval(x.data(), x.size(), y.data_mut());
    return y;
}

template <class T>
Tensor<T> bspline_eval(const BsplineGrid& grid, const Tensor<T>& x) {
    Shape ys = x.shape();
    ys.push_back(std::size_t(grid.num_basis));
    Tensor<T> y = Tensor<T>::zeros(ys);
    grid.eval(x.data(), x.size(), y.data_mut());
    return y;
}

// --- fused dense op ------------------------------------------------------------

template <class T>
Tensor<T> kan_dense(const Tensor<T>& x, const Tensor<T>& ws, const Tensor<T>& wb,
                    const Tensor<T>& bias, const Grid& grid) {
    if (x.rank() != 2)
        throw ShapeError("kan_dense: input must be [N,in], got " + shape_str(x.shape()));
    const std::size_t R = x.extent(0), I = x.extent(1);
    const int K = grid_num_basis(grid);
    if (ws.rank() != 3 || ws.extent(1) != I || int(ws.extent(2)) != K)
        throw ShapeError("kan_dense: spline weight " + shape_str(ws.shape()) +
                         " does not match input " + shape_str(x.shape()) + " and K=" +
                         std::to_string(K));
    const std::size_t O = ws.extent(0);
    if (wb.defined() && (wb.rank() != 2 || wb.extent(0) != O || wb.extent(1) != I))
        throw ShapeError("kan_dense: base weight " + shape_str(wb.shape()) + " must be [" +
                         std::to_string(O) + "x" + std::to_string(I) + "]");
    if (bias.defined() && (bias.rank() != 1 || bias.extent(0) != O))
        throw ShapeError("kan_dense: bias " + shape_str(bias.shape()) + " does not match O=" +
                         std::to_string(O));

    const std::size_t IK = I * K;
    Tensor<T> y = Tensor<T>::zeros({R, O});
    {
        std::vector<T>& phi = scratch<T>(1);
        phi.resize(R * IK);
        grid_eval(grid, x.data(), R * I, phi.data());
        detail::mm_nt(phi.data(), ws.data(), y.data_mut(), R, IK, O, false, true);
        if (wb.defined()) {
            std::vector<T>& sx = scratch<T>(2);
            sx.resize(R * I);
            silu_buf(x.data(), R * I, sx.data());
            detail::mm_nt(sx.data(), wb.data(), y.data_mut(), R, I, O, true, true);
        }
        if (bias.defined()) {
            T* yd = y.data_mut();
            const T* bd = bias.data();
            for (std::size_t r = 0; r < R; ++r)
                for (std::size_t o = 0; o < O; ++o) yd[r * O + o] += bd[o];
        }
    }

    std::vector<Tensor<T>> inputs{x, ws};
    if (wb.defined()) inputs.push_back(wb);
    if (bias.defined()) inputs.push_back(bias);
    attach_node<T>(y, "kan_dense", std::move(inputs),
                   [xi = x.impl_, wsi = ws.impl_, wbi = wb.impl_, bi = bias.impl_, grid, R, I, O,
                    K, IK](const T* g) {
        const bool need_gx = xi->requires_grad || xi->node != nullptr;
        std::vector<T>& phi = scratch<T>(1);
        std::vector<T>& dphi = scratch<T>(3);
        phi.resize(R * IK);
        if (need_gx) {
            dphi.resize(R * IK);
            grid_eval_deriv(grid, xi->data.data(), R * I, phi.data(), dphi.data());
        } else {
            grid_eval(grid, xi->data.data(), R * I, phi.data());
        }
        // gws[o,ik] += sum_r g[r,o] phi[r,ik]
        detail::mm_tn(g, phi.data(), wsi->grad.data(), O, R, IK, true, true);
        if (wbi) {
            std::vector<T>& sx = scratch<T>(2);
            sx.resize(R * I);
            silu_buf(xi->data.data(), R * I, sx.data());
            detail::mm_tn(g, sx.data(), wbi->grad.data(), O, R, I, true, true);
        }
        if (bi) {
            T* gb = bi->grad.data();
            for (std::size_t r = 0; r < R; ++r)
                for (std::size_t o = 0; o < O; ++o) gb[o] += g[r * O + o];
        }
        if (need_gx) {
            std::vector<T>& gphi = scratch<T>(5);
            gphi.resize(R * IK);
            detail::mm_nn(g, wsi->data.data(), gphi.data(), R, O, IK, false, true);
            T* gx = xi->grad.data();
            const T* xd = xi->data.data();
            parallel_for(R, 16, [&](std::size_t r0, std::size_t r1) {
                for (std::size_t r = r0; r < r1; ++r)
                    for (std::size_t i = 0; i < I; ++i) {
                        const T* gp = gphi.data() + r * IK + i * K;
                        const T* dp = dphi.data() + r * IK + i * K;
                        T s = 0;
                        for (int k = 0; k < K; ++k) s += gp[k] * dp[k];
                        gx[r * I + i] += s;
                    }
            });
            if (wbi) {
                std::vector<T>& gbase = scratch<T>(6);
                gbase.resize(R * I);
                detail::mm_nn(g, wbi->data.data(), gbase.data(), R, O, I, false, true);
                for (std::size_t i = 0; i < R * I; ++i)
                    gx[i] += gbase[i] * detail::silu_grad_fn(xd[i]);
            }
        }
    });
    return y;
}

// --- fused conv op ----------------------------------------------------------------

template <class T>
Tensor<T> kan_conv2d(const Tensor<T>& x, const Tensor<T>& ws, const Tensor<T>& wb,
                     const Tensor<T>& bias, const Grid& grid, int kh, int kw,
                     const ConvGeom& geom) {
    KanDims d = check_kan_conv(x, ws, wb, bias, grid, kh, kw, geom);
    const int opix = d.Ho * d.Wo;
    const std::size_t patchK = std::size_t(d.patch) * d.K;
    Tensor<T> y = Tensor<T>::zeros({std::size_t(d.N), std::size_t(d.O), std::size_t(d.Ho),
                                    std::size_t(d.Wo)});
    const T* xd = x.data();
    const T* wsd = ws.data();
    const T* wbd = wb.defined() ? wb.data() : nullptr;
    T* yd = y.data_mut();
    const int stride = geom.stride, pad = geom.pad;

    parallel_for(std::size_t(d.N), 1, [&](std::size_t n0, std::size_t n1) {
        std::vector<T>& cols = scratch<T>(0);
        std::vector<T>& phi = scratch<T>(1);
        std::vector<T>& sx = scratch<T>(2);
        cols.resize(std::size_t(d.patch) * opix);
        phi.resize(patchK * opix);
        if (wbd) sx.resize(std::size_t(d.patch) * opix);
        for (std::size_t n = n0; n < n1; ++n) {
            for (int g = 0; g < d.groups; ++g) {
                const T* xg = xd + ((n * d.C) + std::size_t(g) * d.Cg) * d.H * d.W;
                detail::im2col(xg, d.Cg, d.H, d.W, d.kh, d.kw, stride, pad, d.Ho, d.Wo, cols.data());
                expand_cols<T>(grid, cols.data(), d.patch, opix, phi.data(), nullptr);
                T* yg = yd + ((n * d.O) + std::size_t(g) * d.Og) * opix;
                detail::mm_nn(wsd + std::size_t(g) * d.Og * patchK, phi.data(), yg, d.Og, patchK,
                              opix, false, false);
                if (wbd) {
                    silu_buf(cols.data(), std::size_t(d.patch) * opix, sx.data());
                    detail::mm_nn(wbd + std::size_t(g) * d.Og * d.patch, sx.data(), yg, d.Og,
                                  d.patch, opix, true, false);
                }
            }
        }
    });
    if (bias.defined()) {
        const T* bd = bias.data();
        for (std::size_t r = 0; r < std::size_t(d.N) * d.O; ++r) {
            T b = bd[r % d.O];
            T* row = yd + r * opix;
            for (int i = 0; i < opix; ++i) row[i] += b;
        }
    }

    std::vector<Tensor<T>> inputs{x, ws};
    if (wb.defined()) inputs.push_back(wb);
    if (bias.defined()) inputs.push_back(bias);
    attach_node<T>(y, "kan_conv2d", std::move(inputs),
                   [xi = x.impl_, wsi = ws.impl_, wbi = wb.impl_, bi = bias.impl_, grid, d, stride,
                    pad, patchK](const T* g) {
        const int opix = d.Ho * d.Wo;
        const T* xd = xi->data.data();
        const T* wsd = wsi->data.data();
        const T* wbd = wbi ? wbi->data.data() : nullptr;
        const bool need_gx = xi->requires_grad || xi->node != nullptr;
        const int parts = std::min<int>(num_threads(), d.N);
        const std::size_t chunk = (std::size_t(d.N) + parts - 1) / parts;
        std::vector<std::vector<T>> pws(parts), pwb(parts), pb(parts);
        parallel_for(std::size_t(parts), 1, [&](std::size_t p0, std::size_t p1) {
            for (std::size_t part = p0; part < p1; ++part) {
                std::size_t nb = part * chunk, ne = std::min(nb + chunk, std::size_t(d.N));
                if (nb >= ne) continue;
                pws[part].assign(wsi->data.size(), T(0));
                if (wbi) pwb[part].assign(wbi->data.size(), T(0));
                if (bi) pb[part].assign(bi->data.size(), T(0));
                std::vector<T>& cols = scratch<T>(0);
                std::vector<T>& phi = scratch<T>(1);
                std::vector<T>& sx = scratch<T>(2);
                std::vector<T>& dphi = scratch<T>(3);
                std::vector<T>& wt = scratch<T>(4);
                std::vector<T>& gphi = scratch<T>(5);
                std::vector<T>& gcols = scratch<T>(6);
                cols.resize(std::size_t(d.patch) * opix);
                phi.resize(patchK * opix);
                if (wbi) sx.resize(std::size_t(d.patch) * opix);
                if (need_gx) {
                    dphi.resize(patchK * opix);
                    wt.resize(std::max(patchK, std::size_t(d.patch)) * d.Og);
                    gphi.resize(patchK * opix);
                    gcols.resize(std::size_t(d.patch) * opix);
                }
                for (std::size_t n = nb; n < ne; ++n) {
                    for (int grp = 0; grp < d.groups; ++grp) {
                        const T* gy = g + ((n * d.O) + std::size_t(grp) * d.Og) * opix;
                        const T* xg = xd + ((n * d.C) + std::size_t(grp) * d.Cg) * d.H * d.W;
                        detail::im2col(xg, d.Cg, d.H, d.W, d.kh, d.kw, stride, pad, d.Ho, d.Wo,
                                       cols.data());
                        expand_cols<T>(grid, cols.data(), d.patch, opix, phi.data(),
                                       need_gx ? dphi.data() : nullptr);
                        // spline weight grad
                        detail::mm_nt(gy, phi.data(), pws[part].data() + std::size_t(grp) * d.Og * patchK,
                                      d.Og, opix, patchK, true, false);
                        if (wbi) {
                            silu_buf(cols.data(), std::size_t(d.patch) * opix, sx.data());
                            detail::mm_nt(gy, sx.data(), pwb[part].data() + std::size_t(grp) * d.Og * d.patch,
                                          d.Og, opix, d.patch, true, false);
                        }
                        if (bi) {
                            T* pbg = pb[part].data() + std::size_t(grp) * d.Og;
                            for (int o = 0; o < d.Og; ++o) {
                                T s = 0;
                                const T* row = gy + std::size_t(o) * opix;
                                for (int i = 0; i < opix; ++i) s += row[i];
                                pbg[o] += s;
                            }
                        }
                        if (need_gx) {
                            const T* wsg = wsd + std::size_t(grp) * d.Og * patchK;
                            for (int o = 0; o < d.Og; ++o)
                                for (std::size_t q = 0; q < patchK; ++q)
                                    wt[q * d.Og + o] = wsg[std::size_t(o) * patchK + q];
                            detail::mm_nn(wt.data(), gy, gphi.data(), patchK, d.Og, opix, false,
                                          false);
                            // chain through the basis derivative
                            for (int i = 0; i < d.patch; ++i) {
                                T* gc = gcols.data() + std::size_t(i) * opix;
                                std::fill(gc, gc + opix, T(0));
                                for (int k = 0; k < d.K; ++k) {
                                    const T* gp = gphi.data() + (std::size_t(i) * d.K + k) * opix;
                                    const T* dp = dphi.data() + (std::size_t(i) * d.K + k) * opix;
                                    for (int p = 0; p < opix; ++p) gc[p] += gp[p] * dp[p];
                                }
                            }
                            if (wbi) {
                                const T* wbg = wbd + std::size_t(grp) * d.Og * d.patch;
                                for (int o = 0; o < d.Og; ++o)
                                    for (int q = 0; q < d.patch; ++q)
                                        wt[std::size_t(q) * d.Og + o] = wbg[std::size_t(o) * d.patch + q];
                                // reuse gphi scratch for the base-branch pixel grads
                                detail::mm_nn(wt.data(), gy, gphi.data(), std::size_t(d.patch),
                                              d.Og, opix, false, false);
                                for (int i = 0; i < d.patch; ++i) {
                                    T* gc = gcols.data() + std::size_t(i) * opix;
                                    const T* gb = gphi.data() + std::size_t(i) * opix;
                                    const T* cc = cols.data() + std::size_t(i) * opix;
                                    for (int p = 0; p < opix; ++p)
                                        gc[p] += gb[p] * detail::silu_grad_fn(cc[p]);
                                }
                            }
                            T* gx = xi->grad.data() + ((n * d.C) + std::size_t(grp) * d.Cg) * d.H * d.W;
                            detail::col2im_add(gcols.data(), d.Cg, d.H, d.W, d.kh, d.kw, stride,
                                               pad, d.Ho, d.Wo, gx);
                        }
                    }
                }
            }
        });
        T* gws = wsi->grad.data();
        for (int part = 0; part < parts; ++part) {
            if (pws[part].empty()) continue;
            for (std::size_t i = 0; i < wsi->data.size(); ++i) gws[i] += pws[part][i];
        }
        if (wbi) {
            T* gwb = wbi->grad.data();
            for (int part = 0; part < parts; ++part) {
                if (pwb[part].empty()) continue;
                for (std::size_t i = 0; i < wbi->data.size(); ++i) gwb[i] += pwb[part][i];
            }
        }
        if (bi) {
            T* gb = bi->grad.data();
            for (int part = 0; part < parts; ++part) {
                if (pb[part].empty()) continue;
                for (std::size_t i = 0; i < bi->data.size(); ++i) gb[i] += pb[part][i];
            }
        }
    });
    return y;
}

// --- layers --------------------------------------------------------------------

template <class T>
KanLinear<T>::KanLinear(int in, int out, Grid grid_, std::mt19937_64& rng, bool use_base,
                        bool with_bias)
    : in_dim(in), out_dim(out), grid(std::move(grid_)) {
    if (in < 1 || out < 1) throw ConfigError("KanLinear: dimensions must be positive");
    const int K = grid_num_basis(grid);
    // spline branch starts near zero so early training behaves like a silu net
    spline_w = Tensor<T>::randn({std::size_t(out), std::size_t(in), std::size_t(K)}, rng,
                                T(0.1 / std::sqrt(double(in) * K)), true);
    if (use_base)
        base_w = Tensor<T>::randn({std::size_t(out), std::size_t(in)}, rng,
                                  T(1.0 / std::sqrt(double(in))), true);
    if (with_bias) bias = Tensor<T>::zeros({std::size_t(out)}, true);
}

template <class T>
Tensor<T> KanLinear<T>::forward(const Tensor<T>& x) const {
    if (x.rank() != 2 || int(x.extent(1)) != in_dim)
        throw ShapeError("KanLinear: input " + shape_str(x.shape()) + " does not match in_dim=" +
                         std::to_string(in_dim));
    return kan_dense(x, spline_w, base_w, bias, grid);
}

template <class T>
void KanLinear<T>::params(const std::string& prefix, NamedParams<T>& out) const {
    out.emplace_back(prefix + ".spline_w", spline_w);
    if (base_w.defined()) out.emplace_back(prefix + ".base_w", base_w);
    if (bias.defined()) out.emplace_back(prefix + ".bias", bias);
}

template <class T>
std::size_t KanLinear<T>::param_count() const {
    return spline_w.size() + (base_w.defined() ? base_w.size() : 0) +
           (bias.defined() ? bias.size() : 0);
}

template <class T>
KanConv2d<T>::KanConv2d(int in_ch_, int out_ch_, int kernel_, ConvGeom geom_, Grid grid_,
                        std::mt19937_64& rng, bool use_base, bool with_bias)
    : in_ch(in_ch_), out_ch(out_ch_), kernel(kernel_), geom(geom_), grid(std::move(grid_)) {
    if (in_ch < 1 || out_ch < 1 || kernel < 1)
        throw ConfigError("KanConv2d: dimensions must be positive");
    if (geom.groups < 1 || in_ch % geom.groups != 0 || out_ch % geom.groups != 0)
        throw ConfigError("KanConv2d: channels " + std::to_string(in_ch) + "->" +
                          std::to_string(out_ch) + " not divisible by groups=" +
                          std::to_string(geom.groups));
    const int K = grid_num_basis(grid);
    const int patch = (in_ch / geom.groups) * kernel * kernel;
    spline_w = Tensor<T>::randn({std::size_t(out_ch), std::size_t(patch), std::size_t(K)}, rng,
                                T(0.1 / std::sqrt(double(patch) * K)), true);
    if (use_base)
        base_w = Tensor<T>::randn({std::size_t(out_ch), std::size_t(patch)}, rng,
                                  T(1.0 / std::sqrt(double(patch))), true);
    if (with_bias) bias = Tensor<T>::zeros({std::size_t(out_ch)}, true);
}

template <class T>
Tensor<T> KanConv2d<T>::forward(const Tensor<T>& x) const {
    return kan_conv2d(x, spline_w, base_w, bias, grid, kernel, kernel, geom);
}

template <class T>
void KanConv2d<T>::params(const std::string& prefix, NamedParams<T>& out) const {
    out.emplace_back(prefix + ".spline_w", spline_w);
    if (base_w.defined()) out.emplace_back(prefix + ".base_w", base_w);
    if (bias.defined()) out.emplace_back(prefix + ".bias", bias);
}

template <class T>
std::size_t KanConv2d<T>::param_count() const {
    return spline_w.size() + (base_w.defined() ? base_w.size() : 0) +
           (bias.defined() ? bias.size() : 0);
}

// --- instantiations ---------------------------------------------------------------

#define MEDKAN_INSTANTIATE_KAN(T)                                                                \
    template Tensor<T> rbf_eval<T>(const RbfGrid&, const Tensor<T>&);                            \
    template Tensor<T> bspline_eval<T>(const BsplineGrid&, const Tensor<T>&);                    \
    template Tensor<T> kan_dense<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,        \
                                    const Tensor<T>&, const Grid&);                              \
    template Tensor<T> kan_conv2d<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,       \
                                     const Tensor<T>&, const Grid&, int, int, const ConvGeom&);  \
    template struct KanLinear<T>;                                                                \
    template struct KanConv2d<T>;

MEDKAN_INSTANTIATE_KAN(float)
MEDKAN_INSTANTIATE_KAN(double)
#undef MEDKAN_INSTANTIATE_KAN

} // namespace medkan
