#include "medkan/gradcam.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "medkan/data.hpp"

namespace medkan {

template <class T>
GradcamResult gradcam(const MedKan<T>& model, const Tensor<T>& image, int target_class,
                      std::size_t stage_index) {
    if (image.rank() != 4 || image.extent(0) != 1)
        throw ShapeError("gradcam: expected a single [1,C,H,W] image, got " +
                         shape_str(image.shape()));
    if (stage_index >= model.num_stages())
        throw ConfigError("gradcam: unknown layer id " + std::to_string(stage_index) +
                          "; model has stages 0.." + std::to_string(model.num_stages() - 1));
    const int C = model.config().num_classes;
    if (target_class < 0 || target_class >= C)
        throw ConfigError("gradcam: target class " + std::to_string(target_class) +
                          " outside [0, " + std::to_string(C) + ")");

    Tensor<T> input = image.clone();
    input.set_requires_grad(true); // anchors the tape even with frozen weights
    Tensor<T> feat;
    Tensor<T> logits = model.forward_capture(input, stage_index, &feat);
    Tensor<T> probs;
    {
        NoGradGuard ng;
        probs = softmax(logits.detach(), 1);
    }
    Tensor<T> target = reshape(slice(slice(logits, 0, 0, 1), 1, std::size_t(target_class), 1),
                               Shape{});
    target.backward();

    GradcamResult r;
    const T* pd = probs.data();
    r.pred_class = 0;
    for (int c = 1; c < C; ++c)
        if (pd[c] > pd[r.pred_class]) r.pred_class = c;
    r.target_prob = double(pd[target_class]);

    const std::size_t d = feat.extent(1), fh = feat.extent(2), fw = feat.extent(3);
    const std::size_t hw = fh * fw;
    if (!feat.has_grad()) throw RuntimeError("gradcam: stage output received no gradient");
    const T* A = feat.data();
    const T* G = feat.grad_data();
    std::vector<float> cam(hw, 0.0f);
    for (std::size_t c = 0; c < d; ++c) {
        double w = 0;
        for (std::size_t i = 0; i < hw; ++i) w += double(G[c * hw + i]);
        w /= double(hw);
        for (std::size_t i = 0; i < hw; ++i) cam[i] += float(w * double(A[c * hw + i]));
    }
    for (float& v : cam) v = std::max(v, 0.0f);
    float lo = cam[0], hi = cam[0];
    for (float v : cam) { lo = std::min(lo, v); hi = std::max(hi, v); }
    if (hi - lo > 1e-12f) {
        for (float& v : cam) v = (v - lo) / (hi - lo);
    } else {
        std::fill(cam.begin(), cam.end(), 0.0f);
    }

    const int H = int(image.extent(2)), W = int(image.extent(3));
    Tensor<float> small = Tensor<float>::from_vector({1, 1, fh, fw},
                                                     std::vector<float>(cam.begin(), cam.end()));
    Tensor<float> big = resize_bilinear(small, H, W);
    r.width = W;
    r.height = H;
    r.map.assign(big.data(), big.data() + big.size());
    return r;
}

const std::array<std::array<std::uint8_t, 3>, 256>& heatmap_colormap() {
    // five-stop gradient blue -> cyan -> green -> yellow -> red
    static const auto table = [] {
        std::array<std::array<std::uint8_t, 3>, 256> t{};
        const int stops[5][3] = {{0, 0, 255}, {0, 255, 255}, {0, 255, 0}, {255, 255, 0},
                                 {255, 0, 0}};
        for (int i = 0; i < 256; ++i) {
            const double pos = i / 255.0 * 4.0;
            const int s = std::min(3, int(pos));
            const double f = pos - s;
            for (int c = 0; c < 3; ++c)
                t[i][c] = std::uint8_t(std::lround(stops[s][c] * (1 - f) + stops[s + 1][c] * f));
        }
        return t;
    }();
    return table;
}

void write_heatmap_ppm(const std::string& path, const GradcamResult& r) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw RuntimeError("cannot open '" + path + "' for writing");
    os << "P6\n" << r.width << " " << r.height << "\n255\n";
    const auto& cmap = heatmap_colormap();
    for (float v : r.map) {
        const int idx = std::clamp(int(std::lround(v * 255.0f)), 0, 255);
        os.write(reinterpret_cast<const char*>(cmap[idx].data()), 3);
    }
    if (!os) throw RuntimeError("write failed for '" + path + "'");
}

void write_heatmap_f32(const std::string& path, const GradcamResult& r) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw RuntimeError("cannot open '" + path + "' for writing");
    os.write(reinterpret_cast<const char*>(r.map.data()),
             std::streamsize(r.map.size() * sizeof(float)));
    if (!os) throw RuntimeError("write failed for '" + path + "'");
}

template GradcamResult gradcam<float>(const MedKan<float>&, const Tensor<float>&, int,
                                      std::size_t);
template GradcamResult gradcam<double>(const MedKan<double>&, const Tensor<double>&, int,
                                       std::size_t);

} // namespace medkan
