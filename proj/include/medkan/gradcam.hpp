#pragma once

#include <array>
#include <string>
#include <vector>

#include "medkan/arch.hpp"

namespace medkan {

struct GradcamResult {
    int width = 0, height = 0;      // input-image size after upsampling
    std::vector<float> map;         // row-major, min-max normalized to [0,1]
    int pred_class = 0;
    double target_prob = 0;
};

/// Class-activation heatmap: channel weights are the spatial mean of
/// d logit[target] / d feature at the chosen stage output; the map is
/// ReLU(sum_c w_c A_c), min-max normalized and bilinearly upsampled to the
/// input size. An all-zero gradient yields an all-zero map.
template <class T>
GradcamResult gradcam(const MedKan<T>& model, const Tensor<T>& image, int target_class,
                      std::size_t stage_index);

/// Fixed 256-entry blue-to-red colormap used for the PPM rendering.
const std::array<std::array<std::uint8_t, 3>, 256>& heatmap_colormap();

/// Binary PPM (P6, maxval 255) through the fixed colormap.
void write_heatmap_ppm(const std::string& path, const GradcamResult& r);

/// Raw little-endian float32 dump of the normalized map, row-major.
void write_heatmap_f32(const std::string& path, const GradcamResult& r);

} // namespace medkan
