#include "medkan/nn.hpp"

#include <cmath>

namespace medkan {

template <class T>
Linear<T>::Linear(int in, int out, std::mt19937_64& rng, bool with_bias) {
    if (in < 1 || out < 1)
        throw ConfigError("Linear: dimensions must be positive");
    weight = Tensor<T>::randn({std::size_t(out), std::size_t(in)}, rng,
                              T(1.0 / std::sqrt(double(in))), true);
    if (with_bias) bias = Tensor<T>::zeros({std::size_t(out)}, true);
}

template <class T>
void Linear<T>::params(const std::string& prefix, NamedParams<T>& out) const {
    out.emplace_back(prefix + ".weight", weight);
    if (bias.defined()) out.emplace_back(prefix + ".bias", bias);
}

template <class T>
Conv2dLayer<T>::Conv2dLayer(int in_ch, int out_ch, int kernel, ConvGeom g, std::mt19937_64& rng,
                            bool with_bias)
    : geom(g) {
    if (in_ch < 1 || out_ch < 1 || kernel < 1)
        throw ConfigError("Conv2dLayer: dimensions must be positive");
    if (g.groups < 1 || in_ch % g.groups != 0 || out_ch % g.groups != 0)
        throw ConfigError("Conv2dLayer: channels " + std::to_string(in_ch) + "->" +
                          std::to_string(out_ch) + " not divisible by groups=" +
                          std::to_string(g.groups));
    const int cg = in_ch / g.groups;
    const double fan_in = double(cg) * kernel * kernel;
    weight = Tensor<T>::randn({std::size_t(out_ch), std::size_t(cg), std::size_t(kernel),
                               std::size_t(kernel)},
                              rng, T(std::sqrt(2.0 / fan_in)), true);
    if (with_bias) bias = Tensor<T>::zeros({std::size_t(out_ch)}, true);
}

template <class T>
void Conv2dLayer<T>::params(const std::string& prefix, NamedParams<T>& out) const {
    out.emplace_back(prefix + ".weight", weight);
    if (bias.defined()) out.emplace_back(prefix + ".bias", bias);
}

template <class T>
LayerNorm<T>::LayerNorm(int channels) {
    if (channels < 1) throw ConfigError("LayerNorm: channels must be positive");
    gamma = Tensor<T>::full({std::size_t(channels)}, T(1));
    gamma.set_requires_grad(true);
    beta = Tensor<T>::zeros({std::size_t(channels)}, true);
}

template <class T>
void LayerNorm<T>::params(const std::string& prefix, NamedParams<T>& out) const {
    out.emplace_back(prefix + ".gamma", gamma);
    out.emplace_back(prefix + ".beta", beta);
}

template struct Linear<float>;
template struct Linear<double>;
template struct Conv2dLayer<float>;
template struct Conv2dLayer<double>;
template struct LayerNorm<float>;
template struct LayerNorm<double>;

} // namespace medkan
