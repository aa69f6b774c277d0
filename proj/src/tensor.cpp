#include "medkan/tensor.hpp"
#include <array>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>
#include <unordered_set>

#include "medkan/threadpool.hpp"
#include "tensor_detail.hpp"

namespace medkan {

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) os << 'x';
        os << s[i];
    }
    os << ']';
    return os.str();
}

std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (std::size_t e : s) n *= e;
    return n;
}

namespace {

void check_shape_valid(const Shape& s) {
    for (std::size_t e : s)
        if (e == 0) throw ConfigError("tensor shape has a zero extent: " + shape_str(s));
}

thread_local bool g_grad_enabled = true;

} // namespace

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

// --- Tensor methods -------------------------------------------------------

template <class T>
Tensor<T> Tensor<T>::zeros(const Shape& shape, bool requires_grad) {
    check_shape_valid(shape);
    auto impl = std::make_shared<TensorImpl<T>>();
    impl->shape = shape;
    impl->data.assign(shape_numel(shape), T(0));
    impl->requires_grad = requires_grad;
    Tensor t;
    t.impl_ = std::move(impl);
    return t;
}

template <class T>
Tensor<T> Tensor<T>::full(const Shape& shape, T value) {
    Tensor t = zeros(shape);
    std::fill(t.impl_->data.begin(), t.impl_->data.end(), value);
    return t;
}

template <class T>
Tensor<T> Tensor<T>::scalar(T value) {
    return full({}, value);
}

template <class T>
Tensor<T> Tensor<T>::from_vector(const Shape& shape, std::vector<T> data, bool requires_grad) {
    check_shape_valid(shape);
    if (shape_numel(shape) != data.size())
        throw ShapeError("from_vector: shape " + shape_str(shape) + " wants " +
                         std::to_string(shape_numel(shape)) + " values, got " +
                         std::to_string(data.size()));
    auto impl = std::make_shared<TensorImpl<T>>();
    impl->shape = shape;
    impl->data = std::move(data);
    impl->requires_grad = requires_grad;
    Tensor t;
    t.impl_ = std::move(impl);
    return t;
}

template <class T>
Tensor<T> Tensor<T>::randn(const Shape& shape, std::mt19937_64& rng, T stddev, bool requires_grad) {
    Tensor t = zeros(shape, requires_grad);
    std::normal_distribution<T> dist(T(0), stddev);
    for (auto& v : t.impl_->data) v = dist(rng);
    return t;
}

template <class T>
Tensor<T> Tensor<T>::uniform(const Shape& shape, std::mt19937_64& rng, T lo, T hi,
                             bool requires_grad) {
    Tensor t = zeros(shape, requires_grad);
    std::uniform_real_distribution<T> dist(lo, hi);
    for (auto& v : t.impl_->data) v = dist(rng);
    return t;
}

template <class T>
const Shape& Tensor<T>::shape() const {
    if (!impl_) throw ConfigError("operation on an undefined tensor");
    return impl_->shape;
}

template <class T>
std::size_t Tensor<T>::size() const {
    if (!impl_) throw ConfigError("operation on an undefined tensor");
    return impl_->data.size();
}

template <class T>
const T* Tensor<T>::data() const {
    if (!impl_) throw ConfigError("operation on an undefined tensor");
    return impl_->data.data();
}

template <class T>
T* Tensor<T>::data_mut() {
    if (!impl_) throw ConfigError("operation on an undefined tensor");
    return impl_->data.data();
}

template <class T>
T Tensor<T>::item() const {
    if (size() != 1) throw ShapeError("item: tensor has " + std::to_string(size()) + " elements");
    return impl_->data[0];
}

template <class T>
bool Tensor<T>::requires_grad() const {
    return impl_ && impl_->requires_grad;
}

template <class T>
void Tensor<T>::set_requires_grad(bool v) {
    if (!impl_) throw ConfigError("set_requires_grad on an undefined tensor");
    impl_->requires_grad = v;
}

template <class T>
bool Tensor<T>::has_grad() const {
    return impl_ && !impl_->grad.empty();
}

template <class T>
const T* Tensor<T>::grad_data() const {
    return has_grad() ? impl_->grad.data() : nullptr;
}

template <class T>
std::span<const T> Tensor<T>::grad_view() const {
    if (!has_grad()) return {};
    return {impl_->grad.data(), impl_->grad.size()};
}

template <class T>
Tensor<T> Tensor<T>::grad_tensor() const {
    if (!has_grad()) throw ConfigError("grad_tensor: no gradient present");
    return from_vector(impl_->shape, impl_->grad);
}

template <class T>
void Tensor<T>::zero_grad() {
    if (impl_ && !impl_->grad.empty())
        std::fill(impl_->grad.begin(), impl_->grad.end(), T(0));
}

template <class T>
Tensor<T> Tensor<T>::detach() const {
    if (!impl_) return {};
    auto impl = std::make_shared<TensorImpl<T>>();
    impl->shape = impl_->shape;
    impl->data = impl_->data; // copy keeps detached value stable if the graph mutates
    Tensor t;
    t.impl_ = std::move(impl);
    return t;
}

template <class T>
Tensor<T> Tensor<T>::clone() const {
    return detach();
}

// --- backward engine ------------------------------------------------------

template <class T>
void Tensor<T>::backward() const {
    if (!impl_) throw ConfigError("backward: undefined tensor");
    if (!impl_->shape.empty() || impl_->data.size() != 1)
        throw ConfigError("backward requires a rank-0 tensor, got shape " + shape_str(impl_->shape));
    if (!impl_->node)
        throw ConfigError("backward: tensor is not on the tape");

    // Iterative postorder over the tape DAG; each node visited exactly once.
    std::vector<std::shared_ptr<TapeNode<T>>> order;
    std::unordered_set<const TapeNode<T>*> seen;
    std::vector<std::pair<std::shared_ptr<TapeNode<T>>, std::size_t>> stack;
    seen.insert(impl_->node.get());
    stack.emplace_back(impl_->node, 0);
    while (!stack.empty()) {
        auto& top = stack.back();
        if (top.second < top.first->inputs.size()) {
            auto in = top.first->inputs[top.second++];
            if (in->node && seen.insert(in->node.get()).second)
                stack.emplace_back(in->node, 0);
        } else {
            order.push_back(top.first);
            stack.pop_back();
        }
    }

    impl_->ensure_grad();
    impl_->grad[0] = T(1);

    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        TapeNode<T>* node = it->get();
        for (auto& in : node->inputs) in->ensure_grad();
        node->out->ensure_grad();
        node->backward(node->out->grad.data());
    }

    // The tape is per-forward-pass: release nodes (and the activations their
    // closures keep alive) now that gradients are in place.
    for (auto& n : order) {
        if (n->out) n->out->node.reset();
    }
}

namespace detail {

template <class T>
bool tracked(const Tensor<T>& t) {
    return t.impl_ && (t.impl_->requires_grad || t.impl_->node);
}

template <class T>
void attach_node(Tensor<T>& out, const char* op, std::vector<Tensor<T>> inputs,
                 std::function<void(const T*)> backward) {
    if (!grad_enabled()) return;
    bool any = false;
    for (auto& in : inputs)
        if (tracked(in)) { any = true; break; }
    if (!any) return;
    auto node = std::make_shared<TapeNode<T>>();
    node->op = op;
    node->inputs.reserve(inputs.size());
    for (auto& in : inputs) node->inputs.push_back(in.impl_);
    node->out = out.impl_.get();
    node->backward = std::move(backward);
    out.impl_->node = std::move(node);
    out.impl_->requires_grad = true;
}

template <class T>
std::vector<T>& scratch(int slot) {
    // fixed slot table so earlier references stay valid when later slots are
    // touched within the same kernel
    thread_local std::array<std::vector<T>, 16> bufs;
    return bufs.at(std::size_t(slot));
}

// --- matmul kernels -------------------------------------------------------

template <class T>
void mm_nn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n,
           bool accumulate, bool parallel) {
    auto body = [&](std::size_t i0, std::size_t i1) {
        for (std::size_t i = i0; i < i1; ++i) {
            T* __restrict ci = c + i * n;
            if (!accumulate) std::fill(ci, ci + n, T(0));
            const T* ai = a + i * k;
            for (std::size_t p = 0; p < k; ++p) {
                T av = ai[p];
                const T* __restrict bp = b + p * n;
                for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
            }
        }
    };
    if (parallel)
        parallel_for(m, 8, body);
    else
        body(0, m);
}

// dot product with eight independent partial sums so the compiler can keep
// the loop vectorized without reassociating a single accumulator chain
template <class T>
static inline T dot8(const T* __restrict x, const T* __restrict y, std::size_t k) {
    T acc[8] = {};
    std::size_t p = 0;
    for (; p + 8 <= k; p += 8)
        for (int u = 0; u < 8; ++u) acc[u] += x[p + u] * y[p + u];
    T s = ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
    for (; p < k; ++p) s += x[p] * y[p];
    return s;
}

template <class T>
void mm_nt(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n,
           bool accumulate, bool parallel) {
    auto body = [&](std::size_t i0, std::size_t i1) {
        for (std::size_t i = i0; i < i1; ++i) {
            const T* ai = a + i * k;
            T* ci = c + i * n;
            for (std::size_t j = 0; j < n; ++j) {
                T s = dot8(ai, b + j * k, k);
                ci[j] = accumulate ? ci[j] + s : s;
            }
        }
    };
    if (parallel)
        parallel_for(m, 8, body);
    else
        body(0, m);
}

template <class T>
void mm_tn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n,
           bool accumulate, bool parallel) {
    // c[i,j] += sum_p a[p,i] * b[p,j]; transpose a once, then reuse mm_nn
    std::vector<T>& at = scratch<T>(7);
    at.resize(m * k);
    for (std::size_t p = 0; p < k; ++p)
        for (std::size_t i = 0; i < m; ++i) at[i * k + p] = a[p * m + i];
    mm_nn(at.data(), b, c, m, k, n, accumulate, parallel);
}

// --- im2col ---------------------------------------------------------------

template <class T>
void im2col(const T* x, int C, int H, int W, int kh, int kw, int stride, int pad,
            int Ho, int Wo, T* cols) {
    const int plane = H * W;
    const int opix = Ho * Wo;
    for (int c = 0; c < C; ++c) {
        for (int ki = 0; ki < kh; ++ki) {
            for (int kj = 0; kj < kw; ++kj) {
                T* dst = cols + ((c * kh + ki) * kw + kj) * opix;
                const T* src = x + c * plane;
                for (int oh = 0; oh < Ho; ++oh) {
                    int ih = oh * stride + ki - pad;
                    if (ih < 0 || ih >= H) {
                        std::fill(dst + oh * Wo, dst + (oh + 1) * Wo, T(0));
                        continue;
                    }
                    int iw0 = kj - pad; // input col for ow = 0
                    for (int ow = 0; ow < Wo; ++ow) {
                        int iw = iw0 + ow * stride;
                        dst[oh * Wo + ow] = (iw >= 0 && iw < W) ? src[ih * W + iw] : T(0);
                    }
                }
            }
        }
    }
}

template <class T>
void col2im_add(const T* cols, int C, int H, int W, int kh, int kw, int stride, int pad,
                int Ho, int Wo, T* gx) {
    const int plane = H * W;
    const int opix = Ho * Wo;
    for (int c = 0; c < C; ++c) {
        for (int ki = 0; ki < kh; ++ki) {
            for (int kj = 0; kj < kw; ++kj) {
                const T* src = cols + ((c * kh + ki) * kw + kj) * opix;
                T* dst = gx + c * plane;
                for (int oh = 0; oh < Ho; ++oh) {
                    int ih = oh * stride + ki - pad;
                    if (ih < 0 || ih >= H) continue;
                    int iw0 = kj - pad;
                    for (int ow = 0; ow < Wo; ++ow) {
                        int iw = iw0 + ow * stride;
                        if (iw >= 0 && iw < W) dst[ih * W + iw] += src[oh * Wo + ow];
                    }
                }
            }
        }
    }
}

template <class T>
T silu_fn(T x) {
    T s = T(1) / (T(1) + std::exp(-x));
    return x * s;
}

template <class T>
T silu_grad_fn(T x) {
    T s = T(1) / (T(1) + std::exp(-x));
    return s * (T(1) + x * (T(1) - s));
}

} // namespace detail

using detail::attach_node;

// --- shape ops --------------------------------------------------------------

template <class T>
Tensor<T> reshape(const Tensor<T>& x, const Shape& shape) {
    if (shape_numel(shape) != x.size())
        throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
    Tensor<T> y = Tensor<T>::from_vector(shape, std::vector<T>(x.view().begin(), x.view().end()));
    attach_node<T>(y, "reshape", {x}, [xi = x.impl_](const T* g) {
        T* gx = xi->grad.data();
        for (std::size_t i = 0; i < xi->grad.size(); ++i) gx[i] += g[i];
    });
    return y;
}

template <class T>
Tensor<T> permute(const Tensor<T>& x, const std::vector<std::size_t>& dims) {
    const Shape& xs = x.shape();
    if (dims.size() != xs.size())
        throw ShapeError("permute: axis list size " + std::to_string(dims.size()) +
                         " does not match rank of " + shape_str(xs));
    std::vector<bool> used(dims.size(), false);
    Shape ys(dims.size());
    for (std::size_t i = 0; i < dims.size(); ++i) {
        if (dims[i] >= dims.size() || used[dims[i]])
            throw ConfigError("permute: invalid axis permutation");
        used[dims[i]] = true;
        ys[i] = xs[dims[i]];
    }
    const std::size_t rank = xs.size();
    std::vector<std::size_t> xstr(rank, 1);
    for (std::size_t i = rank; i-- > 1;) xstr[i - 1] = xstr[i] * xs[i];

    Tensor<T> y = Tensor<T>::zeros(ys);
    {
        std::vector<std::size_t> idx(rank, 0);
        const T* src = x.data();
        T* dst = y.data_mut();
        const std::size_t n = y.size();
        for (std::size_t f = 0; f < n; ++f) {
            std::size_t off = 0;
            for (std::size_t d = 0; d < rank; ++d) off += idx[d] * xstr[dims[d]];
            dst[f] = src[off];
            for (std::size_t d = rank; d-- > 0;) {
                if (++idx[d] < ys[d]) break;
                idx[d] = 0;
            }
        }
    }

    attach_node<T>(y, "permute", {x}, [xi = x.impl_, dims, ys, xstr, rank](const T* g) {
        // walk output order, accumulate into the source offset
        std::vector<std::size_t> idx(rank, 0);
        std::size_t n = shape_numel(ys);
        T* gx = xi->grad.data();
        for (std::size_t f = 0; f < n; ++f) {
            std::size_t off = 0;
            for (std::size_t d = 0; d < rank; ++d) off += idx[d] * xstr[dims[d]];
            gx[off] += g[f];
            for (std::size_t d = rank; d-- > 0;) {
                if (++idx[d] < ys[d]) break;
                idx[d] = 0;
            }
        }
    });
    return y;
}

template <class T>
Tensor<T> transpose(const Tensor<T>& x) {
    if (x.rank() != 2)
        throw ShapeError("transpose: expected rank-2 tensor, got " + shape_str(x.shape()));
    return permute(x, {1, 0});
}

template <class T>
Tensor<T> concat(const std::vector<Tensor<T>>& xs, std::size_t axis) {
    if (xs.empty()) throw ConfigError("concat: empty input list");
    const Shape& s0 = xs[0].shape();
    if (axis >= s0.size())
        throw ConfigError("concat: axis " + std::to_string(axis) + " out of range for " +
                          shape_str(s0));
    std::size_t axis_total = 0;
    for (const auto& x : xs) {
        const Shape& s = x.shape();
        if (s.size() != s0.size())
            throw ShapeError("concat: rank mismatch " + shape_str(s0) + " vs " + shape_str(s));
        for (std::size_t d = 0; d < s.size(); ++d)
            if (d != axis && s[d] != s0[d])
                throw ShapeError("concat: shapes differ off-axis: " + shape_str(s0) + " vs " +
                                 shape_str(s));
        axis_total += s[axis];
    }
    Shape ys = s0;
    ys[axis] = axis_total;
    std::size_t outer = 1, inner = 1;
    for (std::size_t d = 0; d < axis; ++d) outer *= s0[d];
    for (std::size_t d = axis + 1; d < s0.size(); ++d) inner *= s0[d];

    Tensor<T> y = Tensor<T>::zeros(ys);
    T* out = y.data_mut();
    std::size_t row = axis_total * inner;
    std::size_t off = 0;
    for (const auto& x : xs) {
        std::size_t len = x.shape()[axis] * inner;
        const T* src = x.data();
        for (std::size_t o = 0; o < outer; ++o)
            std::memcpy(out + o * row + off, src + o * len, len * sizeof(T));
        off += len;
    }

    attach_node<T>(y, "concat", xs, [inputs = xs, axis, outer, inner, row](const T* g) {
        std::size_t off = 0;
        for (const auto& x : inputs) {
            std::size_t len = x.shape()[axis] * inner;
            T* gx = x.impl_->grad.data();
            for (std::size_t o = 0; o < outer; ++o) {
                const T* gsrc = g + o * row + off;
                T* gdst = gx + o * len;
                for (std::size_t i = 0; i < len; ++i) gdst[i] += gsrc[i];
            }
            off += len;
        }
    });
    return y;
}

template <class T>
Tensor<T> slice(const Tensor<T>& x, std::size_t axis, std::size_t start, std::size_t len) {
    const Shape& xs = x.shape();
    if (axis >= xs.size())
        throw ConfigError("slice: axis " + std::to_string(axis) + " out of range for " +
                          shape_str(xs));
    if (len == 0 || start + len > xs[axis])
        throw ConfigError("slice: range [" + std::to_string(start) + ", " +
                          std::to_string(start + len) + ") exceeds extent " +
                          std::to_string(xs[axis]));
    Shape ys = xs;
    ys[axis] = len;
    std::size_t outer = 1, inner = 1;
    for (std::size_t d = 0; d < axis; ++d) outer *= xs[d];
    for (std::size_t d = axis + 1; d < xs.size(); ++d) inner *= xs[d];

    Tensor<T> y = Tensor<T>::zeros(ys);
    const T* src = x.data();
    T* dst = y.data_mut();
    std::size_t xrow = xs[axis] * inner, yrow = len * inner;
    for (std::size_t o = 0; o < outer; ++o)
        std::memcpy(dst + o * yrow, src + o * xrow + start * inner, yrow * sizeof(T));

    attach_node<T>(y, "slice", {x}, [xi = x.impl_, outer, inner, xrow, yrow, start](const T* g) {
        T* gx = xi->grad.data();
        for (std::size_t o = 0; o < outer; ++o) {
            T* gdst = gx + o * xrow + start * inner;
            const T* gsrc = g + o * yrow;
            for (std::size_t i = 0; i < yrow; ++i) gdst[i] += gsrc[i];
        }
    });
    return y;
}

// --- elementwise ------------------------------------------------------------

namespace {

template <class T>
void check_same_shape(const char* op, const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape() != b.shape())
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
}

// generic unary op; dgrad(x, y) returns dy/dx
template <class T, class F, class G>
Tensor<T> unary_op(const char* name, const Tensor<T>& x, F f, G dgrad) {
    Tensor<T> y = Tensor<T>::zeros(x.shape());
    const T* xd = x.data();
    T* yd = y.data_mut();
    const std::size_t n = x.size();
    parallel_for(n, 16384, [&](std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i) yd[i] = f(xd[i]);
    });
    attach_node<T>(y, name, {x}, [xi = x.impl_, yi = y.impl_, dgrad](const T* g) {
        const T* xd = xi->data.data();
        const T* yd = yi->data.data();
        T* gx = xi->grad.data();
        for (std::size_t i = 0; i < xi->data.size(); ++i) gx[i] += g[i] * dgrad(xd[i], yd[i]);
    });
    return y;
}

} // namespace

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    check_same_shape("add", a, b);
    Tensor<T> y = Tensor<T>::zeros(a.shape());
    const T* ad = a.data();
    const T* bd = b.data();
    T* yd = y.data_mut();
    parallel_for(a.size(), 16384, [&](std::size_t s, std::size_t e) {
        for (std::size_t i = s; i < e; ++i) yd[i] = ad[i] + bd[i];
    });
    attach_node<T>(y, "add", {a, b}, [ai = a.impl_, bi = b.impl_](const T* g) {
        T* ga = ai->grad.data();
        T* gb = bi->grad.data();
        for (std::size_t i = 0; i < ai->data.size(); ++i) {
            ga[i] += g[i];
            gb[i] += g[i];
        }
    });
    return y;
}

template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    check_same_shape("sub", a, b);
    Tensor<T> y = Tensor<T>::zeros(a.shape());
    const T* ad = a.data();
    const T* bd = b.data();
    T* yd = y.data_mut();
    for (std::size_t i = 0; i < a.size(); ++i) yd[i] = ad[i] - bd[i];
    attach_node<T>(y, "sub", {a, b}, [ai = a.impl_, bi = b.impl_](const T* g) {
        T* ga = ai->grad.data();
        T* gb = bi->grad.data();
        for (std::size_t i = 0; i < ai->data.size(); ++i) {
            ga[i] += g[i];
            gb[i] -= g[i];
        }
    });
    return y;
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    check_same_shape("mul", a, b);
    Tensor<T> y = Tensor<T>::zeros(a.shape());
    const T* ad = a.data();
    const T* bd = b.data();
    T* yd = y.data_mut();
    for (std::size_t i = 0; i < a.size(); ++i) yd[i] = ad[i] * bd[i];
    attach_node<T>(y, "mul", {a, b}, [ai = a.impl_, bi = b.impl_](const T* g) {
        const T* ad = ai->data.data();
        const T* bd = bi->data.data();
        T* ga = ai->grad.data();
        T* gb = bi->grad.data();
        for (std::size_t i = 0; i < ai->data.size(); ++i) {
            ga[i] += g[i] * bd[i];
            gb[i] += g[i] * ad[i];
        }
    });
    return y;
}

template <class T>
Tensor<T> add_scalar(const Tensor<T>& x, T v) {
    return unary_op("add_scalar", x, [v](T a) { return a + v; }, [](T, T) { return T(1); });
}

template <class T>
Tensor<T> mul_scalar(const Tensor<T>& x, T v) {
    return unary_op("mul_scalar", x, [v](T a) { return a * v; }, [v](T, T) { return v; });
}

template <class T>
Tensor<T> neg(const Tensor<T>& x) {
    return unary_op("neg", x, [](T a) { return -a; }, [](T, T) { return T(-1); });
}

template <class T>
Tensor<T> exp(const Tensor<T>& x) {
    return unary_op("exp", x, [](T a) { return std::exp(a); }, [](T, T y) { return y; });
}

template <class T>
Tensor<T> silu(const Tensor<T>& x) {
    return unary_op("silu", x, [](T a) { return detail::silu_fn(a); },
                    [](T a, T) { return detail::silu_grad_fn(a); });
}

template <class T>
Tensor<T> relu(const Tensor<T>& x) {
    return unary_op("relu", x, [](T a) { return a > T(0) ? a : T(0); },
                    [](T a, T) { return a > T(0) ? T(1) : T(0); });
}

template <class T>
Tensor<T> gelu(const Tensor<T>& x) {
    constexpr double inv_sqrt2 = 0.7071067811865475;
    constexpr double inv_sqrt2pi = 0.3989422804014327;
    return unary_op(
        "gelu", x,
        [](T a) { return T(0.5) * a * (T(1) + T(std::erf(double(a) * inv_sqrt2))); },
        [](T a, T) {
            double cdf = 0.5 * (1.0 + std::erf(double(a) * inv_sqrt2));
            double pdf = inv_sqrt2pi * std::exp(-0.5 * double(a) * double(a));
            return T(cdf + double(a) * pdf);
        });
}

// --- reductions --------------------------------------------------------------

template <class T>
Tensor<T> sum(const Tensor<T>& x) {
    T acc = 0;
    const T* xd = x.data();
    for (std::size_t i = 0; i < x.size(); ++i) acc += xd[i];
    Tensor<T> y = Tensor<T>::scalar(acc);
    attach_node<T>(y, "sum", {x}, [xi = x.impl_](const T* g) {
        T* gx = xi->grad.data();
        for (std::size_t i = 0; i < xi->data.size(); ++i) gx[i] += g[0];
    });
    return y;
}

template <class T>
Tensor<T> mean(const Tensor<T>& x) {
    T acc = 0;
    const T* xd = x.data();
    const std::size_t n = x.size();
    for (std::size_t i = 0; i < n; ++i) acc += xd[i];
    Tensor<T> y = Tensor<T>::scalar(acc / T(n));
    attach_node<T>(y, "mean", {x}, [xi = x.impl_, n](const T* g) {
        T* gx = xi->grad.data();
        T s = g[0] / T(n);
        for (std::size_t i = 0; i < n; ++i) gx[i] += s;
    });
    return y;
}

// --- matmul / linear ----------------------------------------------------------

template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.rank() != 2 || b.rank() != 2)
        throw ShapeError("matmul: expected rank-2 operands, got " + shape_str(a.shape()) +
                         " and " + shape_str(b.shape()));
    const std::size_t m = a.extent(0), k = a.extent(1);
    if (b.extent(0) != k)
        throw ShapeError("matmul: inner extents differ: " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    const std::size_t n = b.extent(1);
    Tensor<T> y = Tensor<T>::zeros({m, n});
    detail::mm_nn(a.data(), b.data(), y.data_mut(), m, k, n, false, true);
    attach_node<T>(y, "matmul", {a, b}, [ai = a.impl_, bi = b.impl_, m, k, n](const T* g) {
        // ga += g * b^T ; gb += a^T * g
        detail::mm_nt(g, bi->data.data(), ai->grad.data(), m, n, k, true, true);
        detail::mm_tn(ai->data.data(), g, bi->grad.data(), k, m, n, true, true);
    });
    return y;
}

template <class T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias) {
    if (x.rank() != 2 || w.rank() != 2)
        throw ShapeError("linear: expected rank-2 input and weight, got " +
                         shape_str(x.shape()) + " and " + shape_str(w.shape()));
    const std::size_t n = x.extent(0), in = x.extent(1), out = w.extent(0);
    if (w.extent(1) != in)
        throw ShapeError("linear: weight " + shape_str(w.shape()) + " does not accept input " +
                         shape_str(x.shape()));
    if (bias.defined() && (bias.rank() != 1 || bias.extent(0) != out))
        throw ShapeError("linear: bias " + shape_str(bias.shape()) + " does not match out=" +
                         std::to_string(out));
    Tensor<T> y = Tensor<T>::zeros({n, out});
    detail::mm_nt(x.data(), w.data(), y.data_mut(), n, in, out, false, true);
    if (bias.defined()) {
        T* yd = y.data_mut();
        const T* bd = bias.data();
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t o = 0; o < out; ++o) yd[i * out + o] += bd[o];
    }
    std::vector<Tensor<T>> inputs{x, w};
    if (bias.defined()) inputs.push_back(bias);
    attach_node<T>(y, "linear", std::move(inputs),
                   [xi = x.impl_, wi = w.impl_, bi = bias.impl_, n, in, out](const T* g) {
        detail::mm_nn(g, wi->data.data(), xi->grad.data(), n, out, in, true, true);
        detail::mm_tn(g, xi->data.data(), wi->grad.data(), out, n, in, true, true);
        if (bi) {
            T* gb = bi->grad.data();
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t o = 0; o < out; ++o) gb[o] += g[i * out + o];
        }
    });
    return y;
}

// --- conv2d --------------------------------------------------------------------

int conv_out_extent(int in, int kernel, int stride, int pad) {
    int span = in + 2 * pad - kernel;
    if (span < 0 || stride < 1)
        throw ConfigError("conv2d: kernel " + std::to_string(kernel) + " exceeds padded input " +
                          std::to_string(in + 2 * pad));
    if (span % stride != 0)
        throw ConfigError("conv2d: geometry not exact: (in=" + std::to_string(in) + " + 2*pad=" +
                          std::to_string(pad) + " - k=" + std::to_string(kernel) + ") not divisible by stride " +
                          std::to_string(stride));
    return span / stride + 1;
}

namespace {

template <class T>
struct ConvDims {
    int N, C, H, W, O, Cg, kh, kw, Ho, Wo, groups, Og;
};

template <class T>
ConvDims<T> check_conv(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias,
                       const ConvGeom& geom) {
    if (x.rank() != 4)
        throw ShapeError("conv2d: input must be [N,C,H,W], got " + shape_str(x.shape()));
    if (w.rank() != 4)
        throw ShapeError("conv2d: weight must be [O,C/g,kh,kw], got " + shape_str(w.shape()));
    ConvDims<T> d;
    d.N = int(x.extent(0)); d.C = int(x.extent(1)); d.H = int(x.extent(2)); d.W = int(x.extent(3));
    d.O = int(w.extent(0)); d.Cg = int(w.extent(1)); d.kh = int(w.extent(2)); d.kw = int(w.extent(3));
    d.groups = geom.groups;
    if (d.groups < 1 || d.C % d.groups != 0 || d.O % d.groups != 0)
        throw ConfigError("conv2d: channels C=" + std::to_string(d.C) + ", O=" + std::to_string(d.O) +
                          " not divisible by groups=" + std::to_string(d.groups));
    if (d.Cg != d.C / d.groups)
        throw ShapeError("conv2d: weight " + shape_str(w.shape()) + " inconsistent with input " +
                         shape_str(x.shape()) + " at groups=" + std::to_string(d.groups));
    if (bias.defined() && (bias.rank() != 1 || int(bias.extent(0)) != d.O))
        throw ShapeError("conv2d: bias " + shape_str(bias.shape()) + " does not match O=" +
                         std::to_string(d.O));
    d.Ho = conv_out_extent(d.H, d.kh, geom.stride, geom.pad);
    d.Wo = conv_out_extent(d.W, d.kw, geom.stride, geom.pad);
    d.Og = d.O / d.groups;
    return d;
}

} // namespace

template <class T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias,
                 const ConvGeom& geom) {
    ConvDims<T> d = check_conv(x, w, bias, geom);
    Tensor<T> y = Tensor<T>::zeros({std::size_t(d.N), std::size_t(d.O), std::size_t(d.Ho),
                                    std::size_t(d.Wo)});
    const int patch = d.Cg * d.kh * d.kw;
    const int opix = d.Ho * d.Wo;
    const T* xd = x.data();
    const T* wd = w.data();
    T* yd = y.data_mut();
    const int stride = geom.stride, pad = geom.pad, groups = d.groups;

    parallel_for(std::size_t(d.N), 1, [&](std::size_t n0, std::size_t n1) {
        std::vector<T>& cols = detail::scratch<T>(0);
        cols.resize(std::size_t(patch) * opix);
        for (std::size_t n = n0; n < n1; ++n) {
            for (int g = 0; g < groups; ++g) {
                const T* xg = xd + ((n * d.C) + std::size_t(g) * d.Cg) * d.H * d.W;
                detail::im2col(xg, d.Cg, d.H, d.W, d.kh, d.kw, stride, pad, d.Ho, d.Wo, cols.data());
                T* yg = yd + ((n * d.O) + std::size_t(g) * d.Og) * opix;
                detail::mm_nn(wd + std::size_t(g) * d.Og * patch, cols.data(), yg,
                              d.Og, patch, opix, false, false);
            }
        }
    });
    if (bias.defined()) {
        const T* bd = bias.data();
        parallel_for(std::size_t(d.N) * d.O, 16, [&](std::size_t r0, std::size_t r1) {
            for (std::size_t r = r0; r < r1; ++r) {
                T b = bd[r % d.O];
                T* row = yd + r * opix;
                for (int i = 0; i < opix; ++i) row[i] += b;
            }
        });
    }

    std::vector<Tensor<T>> inputs{x, w};
    if (bias.defined()) inputs.push_back(bias);
    attach_node<T>(y, "conv2d", std::move(inputs),
                   [xi = x.impl_, wi = w.impl_, bi = bias.impl_, d, stride, pad](const T* g) {
        const int patch = d.Cg * d.kh * d.kw;
        const int opix = d.Ho * d.Wo;
        const T* xd = xi->data.data();
        const T* wd = wi->data.data();
        const bool need_gx = xi->requires_grad || xi->node != nullptr;
        const int parts = std::min<int>(num_threads(), d.N);
        const std::size_t chunk = (std::size_t(d.N) + parts - 1) / parts;
        std::vector<std::vector<T>> pw(parts), pb(parts);
        parallel_for(std::size_t(parts), 1, [&](std::size_t p0, std::size_t p1) {
            for (std::size_t part = p0; part < p1; ++part) {
                std::size_t nb = part * chunk, ne = std::min(nb + chunk, std::size_t(d.N));
                if (nb >= ne) continue;
                pw[part].assign(wi->data.size(), T(0));
                if (bi) pb[part].assign(bi->data.size(), T(0));
                std::vector<T>& cols = detail::scratch<T>(0);
                std::vector<T>& gcols = detail::scratch<T>(1);
                std::vector<T>& wt = detail::scratch<T>(2);
                cols.resize(std::size_t(patch) * opix);
                gcols.resize(std::size_t(patch) * opix);
                wt.resize(std::size_t(patch) * d.Og);
                for (std::size_t n = nb; n < ne; ++n) {
                    for (int grp = 0; grp < d.groups; ++grp) {
                        const T* gy = g + ((n * d.O) + std::size_t(grp) * d.Og) * opix;
                        const T* wg = wd + std::size_t(grp) * d.Og * patch;
                        const T* xg = xd + ((n * d.C) + std::size_t(grp) * d.Cg) * d.H * d.W;
                        // weight grad: gw += gy * cols^T
                        detail::im2col(xg, d.Cg, d.H, d.W, d.kh, d.kw, stride, pad, d.Ho, d.Wo,
                                       cols.data());
                        detail::mm_nt(gy, cols.data(), pw[part].data() + std::size_t(grp) * d.Og * patch,
                                      d.Og, opix, patch, true, false);
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
                            // gcols = w^T * gy, then scatter back
                            for (int o = 0; o < d.Og; ++o)
                                for (int q = 0; q < patch; ++q) wt[std::size_t(q) * d.Og + o] = wg[std::size_t(o) * patch + q];
                            detail::mm_nn(wt.data(), gy, gcols.data(), patch, d.Og, opix, false, false);
                            T* gx = xi->grad.data() + ((n * d.C) + std::size_t(grp) * d.Cg) * d.H * d.W;
                            detail::col2im_add(gcols.data(), d.Cg, d.H, d.W, d.kh, d.kw, stride, pad,
                                               d.Ho, d.Wo, gx);
                        }
                    }
                }
            }
        });
        // deterministic merge in part order
        T* gw = wi->grad.data();
        for (int part = 0; part < parts; ++part) {
            if (pw[part].empty()) continue;
            for (std::size_t i = 0; i < wi->data.size(); ++i) gw[i] += pw[part][i];
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

// --- softmax ----------------------------------------------------------------

template <class T>
Tensor<T> softmax(const Tensor<T>& x, std::size_t axis) {
    const Shape& xs = x.shape();
    if (axis >= xs.size())
        throw ConfigError("softmax: axis " + std::to_string(axis) + " out of range for " +
                          shape_str(xs));
    std::size_t outer = 1, inner = 1, C = xs[axis];
    for (std::size_t d = 0; d < axis; ++d) outer *= xs[d];
    for (std::size_t d = axis + 1; d < xs.size(); ++d) inner *= xs[d];

    Tensor<T> y = Tensor<T>::zeros(xs);
    const T* xd = x.data();
    T* yd = y.data_mut();
    for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t i = 0; i < inner; ++i) {
            const T* xr = xd + o * C * inner + i;
            T* yr = yd + o * C * inner + i;
            T mx = xr[0];
            for (std::size_t c = 1; c < C; ++c) mx = std::max(mx, xr[c * inner]);
            T sum = 0;
            for (std::size_t c = 0; c < C; ++c) {
                T e = std::exp(xr[c * inner] - mx);
                yr[c * inner] = e;
                sum += e;
            }
            T inv = T(1) / sum;
            for (std::size_t c = 0; c < C; ++c) yr[c * inner] *= inv;
        }
    }
    attach_node<T>(y, "softmax", {x}, [xi = x.impl_, yi = y.impl_, outer, inner, C](const T* g) {
        const T* yd = yi->data.data();
        T* gx = xi->grad.data();
        for (std::size_t o = 0; o < outer; ++o) {
            for (std::size_t i = 0; i < inner; ++i) {
                const std::size_t base = o * C * inner + i;
                T dot = 0;
                for (std::size_t c = 0; c < C; ++c) dot += g[base + c * inner] * yd[base + c * inner];
                for (std::size_t c = 0; c < C; ++c) {
                    const std::size_t k = base + c * inner;
                    gx[k] += yd[k] * (g[k] - dot);
                }
            }
        }
    });
    return y;
}

// --- layer norm over channels --------------------------------------------------

template <class T>
Tensor<T> layer_norm_channels(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                              T eps) {
    const Shape& xs = x.shape();
    if (xs.size() != 2 && xs.size() != 4)
        throw ShapeError("layer_norm_channels: expected [N,C] or [N,C,H,W], got " + shape_str(xs));
    const std::size_t N = xs[0], C = xs[1];
    const std::size_t S = xs.size() == 4 ? xs[2] * xs[3] : 1;
    if (gamma.rank() != 1 || gamma.extent(0) != C || beta.rank() != 1 || beta.extent(0) != C)
        throw ShapeError("layer_norm_channels: affine params must be [C=" + std::to_string(C) +
                         "], got " + shape_str(gamma.shape()) + " and " + shape_str(beta.shape()));

    Tensor<T> y = Tensor<T>::zeros(xs);
    auto stats = std::make_shared<std::vector<T>>(2 * N * S); // mean, inv interleaved
    const T* xd = x.data();
    const T* gmd = gamma.data();
    const T* btd = beta.data();
    T* yd = y.data_mut();
    parallel_for(N * S, 64, [&](std::size_t r0, std::size_t r1) {
        for (std::size_t r = r0; r < r1; ++r) {
            const std::size_t n = r / S, s = r % S;
            const T* col = xd + (n * C) * S + s;
            T m = 0;
            for (std::size_t c = 0; c < C; ++c) m += col[c * S];
            m /= T(C);
            T var = 0;
            for (std::size_t c = 0; c < C; ++c) {
                T d = col[c * S] - m;
                var += d * d;
            }
            var /= T(C);
            T inv = T(1) / std::sqrt(var + eps);
            (*stats)[2 * r] = m;
            (*stats)[2 * r + 1] = inv;
            T* out = yd + (n * C) * S + s;
            for (std::size_t c = 0; c < C; ++c)
                out[c * S] = (col[c * S] - m) * inv * gmd[c] + btd[c];
        }
    });
    attach_node<T>(y, "layer_norm", {x, gamma, beta},
                   [xi = x.impl_, gi = gamma.impl_, bi = beta.impl_, stats, N, C, S](const T* g) {
        const T* xd = xi->data.data();
        const T* gmd = gi->data.data();
        T* gx = xi->grad.data();
        T* gg = gi->grad.data();
        T* gb = bi->grad.data();
        for (std::size_t r = 0; r < N * S; ++r) {
            const std::size_t n = r / S, s = r % S;
            const T m = (*stats)[2 * r], inv = (*stats)[2 * r + 1];
            const std::size_t base = (n * C) * S + s;
            T m1 = 0, m2 = 0;
            for (std::size_t c = 0; c < C; ++c) {
                const std::size_t k = base + c * S;
                T xh = (xd[k] - m) * inv;
                T gh = g[k] * gmd[c];
                m1 += gh;
                m2 += gh * xh;
                gg[c] += g[k] * xh;
                gb[c] += g[k];
            }
            m1 /= T(C);
            m2 /= T(C);
            for (std::size_t c = 0; c < C; ++c) {
                const std::size_t k = base + c * S;
                T xh = (xd[k] - m) * inv;
                T gh = g[k] * gmd[c];
                gx[k] += inv * (gh - m1 - xh * m2);
            }
        }
    });
    return y;
}

template <class T>
Tensor<T> add_bias_channels(const Tensor<T>& x, const Tensor<T>& bias) {
    const Shape& xs = x.shape();
    if (xs.size() != 2 && xs.size() != 4)
        throw ShapeError("add_bias_channels: expected [N,C] or [N,C,H,W], got " + shape_str(xs));
    const std::size_t N = xs[0], C = xs[1];
    const std::size_t S = xs.size() == 4 ? xs[2] * xs[3] : 1;
    if (bias.rank() != 1 || bias.extent(0) != C)
        throw ShapeError("add_bias_channels: bias " + shape_str(bias.shape()) +
                         " does not match C=" + std::to_string(C));
    Tensor<T> y = Tensor<T>::zeros(xs);
    const T* xd = x.data();
    const T* bd = bias.data();
    T* yd = y.data_mut();
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t c = 0; c < C; ++c) {
            const std::size_t base = (n * C + c) * S;
            for (std::size_t s = 0; s < S; ++s) yd[base + s] = xd[base + s] + bd[c];
        }
    attach_node<T>(y, "add_bias", {x, bias}, [xi = x.impl_, bi = bias.impl_, N, C, S](const T* g) {
        T* gx = xi->grad.data();
        T* gb = bi->grad.data();
        for (std::size_t n = 0; n < N; ++n)
            for (std::size_t c = 0; c < C; ++c) {
                const std::size_t base = (n * C + c) * S;
                T s = 0;
                for (std::size_t k = 0; k < S; ++k) {
                    gx[base + k] += g[base + k];
                    s += g[base + k];
                }
                gb[c] += s;
            }
    });
    return y;
}

template <class T>
Tensor<T> scale_channels(const Tensor<T>& x, const Tensor<T>& s) {
    const Shape& xs = x.shape();
    if (xs.size() != 2 && xs.size() != 4)
        throw ShapeError("scale_channels: expected [N,C] or [N,C,H,W], got " + shape_str(xs));
    const std::size_t N = xs[0], C = xs[1];
    const std::size_t S = xs.size() == 4 ? xs[2] * xs[3] : 1;
    if (s.rank() != 1 || s.extent(0) != C)
        throw ShapeError("scale_channels: scale " + shape_str(s.shape()) + " does not match C=" +
                         std::to_string(C));
    Tensor<T> y = Tensor<T>::zeros(xs);
    const T* xd = x.data();
    const T* sd = s.data();
    T* yd = y.data_mut();
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t c = 0; c < C; ++c) {
            const std::size_t base = (n * C + c) * S;
            for (std::size_t k = 0; k < S; ++k) yd[base + k] = xd[base + k] * sd[c];
        }
    attach_node<T>(y, "scale_channels", {x, s}, [xi = x.impl_, si = s.impl_, N, C, S](const T* g) {
        const T* xd = xi->data.data();
        const T* sd = si->data.data();
        T* gx = xi->grad.data();
        T* gs = si->grad.data();
        for (std::size_t n = 0; n < N; ++n)
            for (std::size_t c = 0; c < C; ++c) {
                const std::size_t base = (n * C + c) * S;
                T acc = 0;
                for (std::size_t k = 0; k < S; ++k) {
                    gx[base + k] += g[base + k] * sd[c];
                    acc += g[base + k] * xd[base + k];
                }
                gs[c] += acc;
            }
    });
    return y;
}

template <class T>
Tensor<T> global_avg_pool(const Tensor<T>& x) {
    if (x.rank() != 4)
        throw ShapeError("global_avg_pool: expected [N,C,H,W], got " + shape_str(x.shape()));
    const std::size_t N = x.extent(0), C = x.extent(1), S = x.extent(2) * x.extent(3);
    Tensor<T> y = Tensor<T>::zeros({N, C});
    const T* xd = x.data();
    T* yd = y.data_mut();
    for (std::size_t r = 0; r < N * C; ++r) {
        T s = 0;
        const T* row = xd + r * S;
        for (std::size_t i = 0; i < S; ++i) s += row[i];
        yd[r] = s / T(S);
    }
    attach_node<T>(y, "global_avg_pool", {x}, [xi = x.impl_, N, C, S](const T* g) {
        T* gx = xi->grad.data();
        for (std::size_t r = 0; r < N * C; ++r) {
            T s = g[r] / T(S);
            T* row = gx + r * S;
            for (std::size_t i = 0; i < S; ++i) row[i] += s;
        }
    });
    return y;
}

// --- cross entropy -------------------------------------------------------------

template <class T>
Tensor<T> cross_entropy(const Tensor<T>& logits, const std::vector<std::int64_t>& labels) {
    if (logits.rank() != 2)
        throw ShapeError("cross_entropy: logits must be [N,C], got " + shape_str(logits.shape()));
    const std::size_t N = logits.extent(0), C = logits.extent(1);
    if (labels.size() != N)
        throw ShapeError("cross_entropy: got " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(N) + " rows");
    for (std::size_t i = 0; i < N; ++i)
        if (labels[i] < 0 || std::size_t(labels[i]) >= C)
            throw ConfigError("cross_entropy: label " + std::to_string(labels[i]) +
                              " outside [0, " + std::to_string(C) + ") at row " + std::to_string(i));

    auto probs = std::make_shared<std::vector<T>>(N * C);
    const T* xd = logits.data();
    T loss = 0;
    for (std::size_t i = 0; i < N; ++i) {
        const T* row = xd + i * C;
        T mx = row[0];
        for (std::size_t c = 1; c < C; ++c) mx = std::max(mx, row[c]);
        T sum = 0;
        for (std::size_t c = 0; c < C; ++c) {
            T e = std::exp(row[c] - mx);
            (*probs)[i * C + c] = e;
            sum += e;
        }
        T inv = T(1) / sum;
        for (std::size_t c = 0; c < C; ++c) (*probs)[i * C + c] *= inv;
        loss += std::log(sum) + mx - row[labels[i]];
    }
    Tensor<T> y = Tensor<T>::scalar(loss / T(N));
    attach_node<T>(y, "cross_entropy", {logits}, [xi = logits.impl_, probs, labels, N, C](const T* g) {
        T* gx = xi->grad.data();
        const T scale = g[0] / T(N);
        for (std::size_t i = 0; i < N; ++i)
            for (std::size_t c = 0; c < C; ++c) {
                T p = (*probs)[i * C + c];
                gx[i * C + c] += scale * (p - (std::size_t(labels[i]) == c ? T(1) : T(0)));
            }
    });
    return y;
}

// --- explicit instantiations ---------------------------------------------------

template class Tensor<float>;
template class Tensor<double>;

#define MEDKAN_INSTANTIATE(T)                                                                     \
    template Tensor<T> reshape<T>(const Tensor<T>&, const Shape&);                               \
    template Tensor<T> permute<T>(const Tensor<T>&, const std::vector<std::size_t>&);            \
    template Tensor<T> transpose<T>(const Tensor<T>&);                                           \
    template Tensor<T> concat<T>(const std::vector<Tensor<T>>&, std::size_t);                    \
    template Tensor<T> slice<T>(const Tensor<T>&, std::size_t, std::size_t, std::size_t);        \
    template Tensor<T> add<T>(const Tensor<T>&, const Tensor<T>&);                               \
    template Tensor<T> sub<T>(const Tensor<T>&, const Tensor<T>&);                               \
    template Tensor<T> mul<T>(const Tensor<T>&, const Tensor<T>&);                               \
    template Tensor<T> add_scalar<T>(const Tensor<T>&, T);                                       \
    template Tensor<T> mul_scalar<T>(const Tensor<T>&, T);                                       \
    template Tensor<T> neg<T>(const Tensor<T>&);                                                 \
    template Tensor<T> exp<T>(const Tensor<T>&);                                                 \
    template Tensor<T> silu<T>(const Tensor<T>&);                                                \
    template Tensor<T> relu<T>(const Tensor<T>&);                                                \
    template Tensor<T> gelu<T>(const Tensor<T>&);                                                \
    template Tensor<T> sum<T>(const Tensor<T>&);                                                 \
    template Tensor<T> mean<T>(const Tensor<T>&);                                                \
    template Tensor<T> matmul<T>(const Tensor<T>&, const Tensor<T>&);                            \
    template Tensor<T> linear<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);          \
    template Tensor<T> conv2d<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,           \
                                 const ConvGeom&);                                               \
    template Tensor<T> softmax<T>(const Tensor<T>&, std::size_t);                                \
    template Tensor<T> layer_norm_channels<T>(const Tensor<T>&, const Tensor<T>&,                \
                                              const Tensor<T>&, T);                              \
    template Tensor<T> add_bias_channels<T>(const Tensor<T>&, const Tensor<T>&);                 \
    template Tensor<T> scale_channels<T>(const Tensor<T>&, const Tensor<T>&);                    \
    template Tensor<T> global_avg_pool<T>(const Tensor<T>&);                                     \
    template Tensor<T> cross_entropy<T>(const Tensor<T>&, const std::vector<std::int64_t>&);

MEDKAN_INSTANTIATE(float)
MEDKAN_INSTANTIATE(double)
#undef MEDKAN_INSTANTIATE

namespace detail {

#define MEDKAN_INSTANTIATE_DETAIL(T)                                                              \
    template bool tracked<T>(const Tensor<T>&);                                                   \
    template void attach_node<T>(Tensor<T>&, const char*, std::vector<Tensor<T>>,                 \
                                 std::function<void(const T*)>);                                  \
    template std::vector<T>& scratch<T>(int);                                                     \
    template void mm_nn<T>(const T*, const T*, T*, std::size_t, std::size_t, std::size_t, bool,   \
                           bool);                                                                 \
    template void mm_nt<T>(const T*, const T*, T*, std::size_t, std::size_t, std::size_t, bool,   \
                           bool);                                                                 \
    template void mm_tn<T>(const T*, const T*, T*, std::size_t, std::size_t, std::size_t, bool,   \
                           bool);                                                                 \
    template void im2col<T>(const T*, int, int, int, int, int, int, int, int, int, T*);          \
    template void col2im_add<T>(const T*, int, int, int, int, int, int, int, int, int, T*);      \
    template T silu_fn<T>(T);                                                                     \
    template T silu_grad_fn<T>(T);

MEDKAN_INSTANTIATE_DETAIL(float)
MEDKAN_INSTANTIATE_DETAIL(double)
#undef MEDKAN_INSTANTIATE_DETAIL

} // namespace detail

} // namespace medkan
