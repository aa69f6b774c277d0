#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "medkan/errors.hpp"

namespace medkan {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& s);
std::size_t shape_numel(const Shape& s);

template <class T> struct TapeNode;

template <class T>
struct TensorImpl {
    Shape shape;
    std::vector<T> data;
    std::vector<T> grad;      // empty until backward touches this tensor
    bool requires_grad = false;
    std::shared_ptr<TapeNode<T>> node; // op that produced this tensor, if tracked

    void ensure_grad() {
        if (grad.empty()) grad.assign(data.size(), T(0));
    }
};

template <class T>
struct TapeNode {
    const char* op;
    std::vector<std::shared_ptr<TensorImpl<T>>> inputs;
    TensorImpl<T>* out = nullptr; // owned by the output tensor, never dangles while node lives
    std::function<void(const T* grad_out)> backward;
};

// Dense row-major tensor with reverse-mode autodiff. Copying a Tensor copies
// the handle, not the buffer. dtype is the template parameter (float or
// double); all ops require matching dtypes at compile time.
template <class T>
class Tensor {
public:
    using value_type = T;

    Tensor() = default;

    static Tensor zeros(const Shape& shape, bool requires_grad = false);
    static Tensor full(const Shape& shape, T value);
    static Tensor scalar(T value);
    static Tensor from_vector(const Shape& shape, std::vector<T> data,
                              bool requires_grad = false);
    static Tensor randn(const Shape& shape, std::mt19937_64& rng, T stddev = T(1),
                        bool requires_grad = false);
    static Tensor uniform(const Shape& shape, std::mt19937_64& rng, T lo, T hi,
                          bool requires_grad = false);

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const;
    std::size_t rank() const { return shape().size(); }
    std::size_t extent(std::size_t axis) const { return shape().at(axis); }
    std::size_t size() const;

    const T* data() const;
    T* data_mut(); // direct mutation; never call on tensors participating in a live tape
    std::span<const T> view() const { return {data(), size()}; }
    std::span<T> view_mut() { return {data_mut(), size()}; }
    T item() const;

    bool requires_grad() const;
    void set_requires_grad(bool v);
    bool has_grad() const;
    const T* grad_data() const; // nullptr when absent
    std::span<const T> grad_view() const;
    Tensor grad_tensor() const; // copy of grad as an untracked tensor
    void zero_grad();

    /// Reverse-mode sweep from a rank-0 tensor. Seeds with 1, accumulates
    /// additively into every reachable tensor's grad, then frees the tape.
    void backward() const;

    Tensor detach() const; // shares data, drops tape/grad linkage
    Tensor clone() const;  // deep copy of data, untracked

    std::shared_ptr<TensorImpl<T>> impl_;
};

// --- autograd mode ------------------------------------------------------

bool grad_enabled();

/// Disables tape recording for the enclosing scope (inference paths).
struct NoGradGuard {
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

// --- shape ops -----------------------------------------------------------

template <class T> Tensor<T> reshape(const Tensor<T>& x, const Shape& shape);
template <class T> Tensor<T> permute(const Tensor<T>& x, const std::vector<std::size_t>& dims);
template <class T> Tensor<T> transpose(const Tensor<T>& x); // rank-2
template <class T> Tensor<T> concat(const std::vector<Tensor<T>>& xs, std::size_t axis);
template <class T> Tensor<T> slice(const Tensor<T>& x, std::size_t axis, std::size_t start,
                                   std::size_t len);

// --- elementwise ---------------------------------------------------------

template <class T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <class T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <class T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <class T> Tensor<T> add_scalar(const Tensor<T>& x, T v);
template <class T> Tensor<T> mul_scalar(const Tensor<T>& x, T v);
template <class T> Tensor<T> neg(const Tensor<T>& x);
template <class T> Tensor<T> exp(const Tensor<T>& x);
template <class T> Tensor<T> silu(const Tensor<T>& x);
template <class T> Tensor<T> relu(const Tensor<T>& x);
template <class T> Tensor<T> gelu(const Tensor<T>& x);

template <class T> Tensor<T> operator+(const Tensor<T>& a, const Tensor<T>& b) { return add(a, b); }
template <class T> Tensor<T> operator-(const Tensor<T>& a, const Tensor<T>& b) { return sub(a, b); }
template <class T> Tensor<T> operator*(const Tensor<T>& a, const Tensor<T>& b) { return mul(a, b); }

// --- reductions ----------------------------------------------------------

template <class T> Tensor<T> sum(const Tensor<T>& x);  // rank-0
template <class T> Tensor<T> mean(const Tensor<T>& x); // rank-0

// --- linear algebra / nn primitives --------------------------------------

template <class T> Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

/// y[n,o] = sum_i x[n,i] * w[o,i] + b[o]; pass an undefined bias to skip it.
template <class T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias);

struct ConvGeom {
    int stride = 1;
    int pad = 0;
    int groups = 1;
};

/// Cross-correlation on NCHW input with OIHW weights (I = C/groups).
/// Output extents must divide exactly; anything else is a ConfigError.
template <class T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias,
                 const ConvGeom& geom);

int conv_out_extent(int in, int kernel, int stride, int pad);

template <class T> Tensor<T> softmax(const Tensor<T>& x, std::size_t axis);

/// Normalizes over the channel axis (axis 1) of a [N,C] or [N,C,H,W] tensor,
/// then applies the affine pair gamma/beta of extent C.
template <class T>
Tensor<T> layer_norm_channels(const Tensor<T>& x, const Tensor<T>& gamma,
                              const Tensor<T>& beta, T eps = T(1e-5));

template <class T> Tensor<T> add_bias_channels(const Tensor<T>& x, const Tensor<T>& bias);

/// y[n,c,...] = x[n,c,...] * s[c]
template <class T> Tensor<T> scale_channels(const Tensor<T>& x, const Tensor<T>& s);

template <class T> Tensor<T> global_avg_pool(const Tensor<T>& x); // [N,C,H,W] -> [N,C]

/// Mean over the batch of -log softmax(logits)[label], computed via
/// log-sum-exp. Labels must lie in [0, C).
template <class T>
Tensor<T> cross_entropy(const Tensor<T>& logits, const std::vector<std::int64_t>& labels);

} // namespace medkan
