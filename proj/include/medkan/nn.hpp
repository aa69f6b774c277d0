#pragma once

#include <random>
#include <string>
#include <utility>
#include <vector>

#include "medkan/tensor.hpp"

namespace medkan {

/// Named views of a model's learnable tensors. The Tensor entries share
/// storage with the owning layers; mutating them mutates the model.
template <class T>
using NamedParams = std::vector<std::pair<std::string, Tensor<T>>>;

template <class T>
std::size_t total_param_count(const NamedParams<T>& params) {
    std::size_t n = 0;
    for (const auto& [name, t] : params) n += t.size();
    return n;
}

template <class T>
struct Linear {
    Tensor<T> weight; // [out, in]
    Tensor<T> bias;   // [out], undefined when constructed without bias

    Linear() = default;
    Linear(int in, int out, std::mt19937_64& rng, bool with_bias = true);

    Tensor<T> forward(const Tensor<T>& x) const { return linear(x, weight, bias); }
    void params(const std::string& prefix, NamedParams<T>& out) const;
    std::size_t param_count() const { return weight.size() + (bias.defined() ? bias.size() : 0); }
};

template <class T>
struct Conv2dLayer {
    Tensor<T> weight; // [O, C/g, kh, kw]
    Tensor<T> bias;   // [O]
    ConvGeom geom;

    Conv2dLayer() = default;
    Conv2dLayer(int in_ch, int out_ch, int kernel, ConvGeom geom, std::mt19937_64& rng,
                bool with_bias = true);

    Tensor<T> forward(const Tensor<T>& x) const { return conv2d(x, weight, bias, geom); }
    void params(const std::string& prefix, NamedParams<T>& out) const;
    std::size_t param_count() const { return weight.size() + (bias.defined() ? bias.size() : 0); }
};

template <class T>
struct LayerNorm {
    Tensor<T> gamma; // [C]
    Tensor<T> beta;  // [C]
    T eps = T(1e-5);

    LayerNorm() = default;
    explicit LayerNorm(int channels);

    Tensor<T> forward(const Tensor<T>& x) const {
        return layer_norm_channels(x, gamma, beta, eps);
    }
    void params(const std::string& prefix, NamedParams<T>& out) const;
    std::size_t param_count() const { return gamma.size() + beta.size(); }
};

} // namespace medkan
