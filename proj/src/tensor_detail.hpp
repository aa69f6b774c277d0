#pragma once

// Internal kernels shared by the op implementations. Not installed.

#include <cstddef>
#include <vector>

#include "medkan/tensor.hpp"

namespace medkan::detail {

// Attaches a tape node to `out` when grad mode is on and any input is
// tracked. The backward closure receives the contiguous grad of `out` and
// must accumulate (+=) into the inputs' grad buffers.
template <class T>
void attach_node(Tensor<T>& out, const char* op, std::vector<Tensor<T>> inputs,
                 std::function<void(const T*)> backward);

template <class T>
bool tracked(const Tensor<T>& t);

// Thread-local scratch buffers. Slots are small integers; each (T, slot)
// pair maps to one buffer per thread, grown on demand and reused.
template <class T>
std::vector<T>& scratch(int slot);

// c[m,n] (+)= a[m,k] * b[k,n]
template <class T>
void mm_nn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n,
           bool accumulate, bool parallel);

// c[m,n] (+)= a[m,k] * b^T with b stored [n,k]
template <class T>
void mm_nt(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n,
           bool accumulate, bool parallel);

// c[m,n] (+)= a^T * b with a stored [k,m], b stored [k,n]
template <class T>
void mm_tn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n,
           bool accumulate, bool parallel);

// Patch matrix extraction: cols is [C*kh*kw, Ho*Wo], zero-padded borders.
template <class T>
void im2col(const T* x, int C, int H, int W, int kh, int kw, int stride, int pad,
            int Ho, int Wo, T* cols);

// Transposed scatter of im2col: gx[c,h,w] += cols[(c,ki,kj), (oh,ow)].
template <class T>
void col2im_add(const T* cols, int C, int H, int W, int kh, int kw, int stride, int pad,
                int Ho, int Wo, T* gx);

template <class T> T silu_fn(T x);
template <class T> T silu_grad_fn(T x);

} // namespace medkan::detail
