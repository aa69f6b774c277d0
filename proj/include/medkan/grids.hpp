#pragma once

#include <cstddef>
#include <variant>

#include "medkan/errors.hpp"

namespace medkan {

/// Gaussian basis with K centers uniformly spaced on [lo, hi] and one shared
/// width sigma: value_k(x) = exp(-(x - c_k)^2 / (2 sigma^2)). Closed form,
/// no recursion, each basis value independent of the others.
struct RbfGrid {
    int num_basis = 8;
    double lo = -2.0, hi = 2.0;
    double sigma = 0.0;

    /// K >= 2 for a real grid; K == 1 (a single center at lo, explicit sigma)
    /// is allowed for degenerate single-bump layers.
    RbfGrid(int K, double lo, double hi, double sigma);

    /// sigma = center spacing; the default construction used by the layers.
    static RbfGrid with_spacing_sigma(int K, double lo, double hi);

    double center(int k) const { return lo + spacing() * k; }
    double spacing() const { return num_basis > 1 ? (hi - lo) / (num_basis - 1) : 0.0; }

    /// out is n*K, row-major over elements: out[i*K + k] = value_k(x[i]).
    template <class T> void eval(const T* x, std::size_t n, T* out) const;
    /// val and der are each n*K.
    template <class T> void eval_deriv(const T* x, std::size_t n, T* val, T* der) const;
};

/// Uniform B-spline basis of the given degree: K basis functions over a knot
/// vector uniform on [lo, hi] extended degree-fold past both ends, evaluated
/// via the Cox-de Boor recursion. Inputs are clamped to [lo, hi]. Partition
/// of unity holds on the whole domain.
struct BsplineGrid {
    int num_basis = 8;
    int degree = 3;
    double lo = -2.0, hi = 2.0;

    BsplineGrid(int K, int degree, double lo, double hi);

    int num_knots() const { return num_basis + degree + 1; }
    double knot(int j) const { return lo + spacing() * (j - degree); }
    double spacing() const { return (hi - lo) / (num_basis - degree); }

    template <class T> void eval(const T* x, std::size_t n, T* out) const;
    template <class T> void eval_deriv(const T* x, std::size_t n, T* val, T* der) const;
};

using Grid = std::variant<RbfGrid, BsplineGrid>;

int grid_num_basis(const Grid& g);
const char* grid_kind_name(const Grid& g);

template <class T> void grid_eval(const Grid& g, const T* x, std::size_t n, T* out);
template <class T> void grid_eval_deriv(const Grid& g, const T* x, std::size_t n, T* val, T* der);

/// K=8 centers on [-2, 2], sigma = spacing. Assumes layer-normalized inputs.
Grid default_grid();

namespace detail {
/// In-place exp over a buffer of non-positive values. The float overload is a
/// polynomial approximation (~1e-6 relative) that vectorizes; results are
/// clamped to (0, 1]. The double overload uses std::exp.
void exp_neg_inplace(float* y, std::size_t n);
void exp_neg_inplace(double* y, std::size_t n);
} // namespace detail

} // namespace medkan
