#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "medkan/kan.hpp"
#include "medkan/nn.hpp"

namespace medkan {

enum class LocalBlockKind { KanConv, PlainConv, Residual, ConvNext };
enum class GlobalMixerKind { Kan, Mlp, None };

const char* to_string(LocalBlockKind k);
const char* to_string(GlobalMixerKind k);
LocalBlockKind local_block_from_string(const std::string& s);
GlobalMixerKind global_mixer_from_string(const std::string& s);

struct GridConfig {
    std::string kind = "rbf"; // "rbf" | "bspline"
    int num_basis = 8;
    double lo = -2.0, hi = 2.0;
    double sigma = 0.0; // 0 selects sigma = center spacing
    int degree = 3;     // bspline only

    Grid build() const;
};

struct StageSpec {
    int num_lik = 1;
    int num_gik = 0;
    int dim = 64;
    int groups = 1;
    bool downsample = false; // strided 2x2 embedding in front of the stage
};

struct MedKanConfig {
    int input_size = 224;
    int in_channels = 3;
    int num_classes = 2;
    int stem_stride = 4; // 4 = two strided convs, 2 = one (small-image setups)
    std::vector<StageSpec> stages;
    LocalBlockKind local_block = LocalBlockKind::KanConv;
    GlobalMixerKind global_mixer = GlobalMixerKind::Kan;
    bool gik_residual = true;
    bool use_base_branch = true;
    int sffn_ratio = 4;
    int token_limit = 256;
    GridConfig grid;

    /// Throws ConfigError on any geometry/divisibility violation.
    void validate() const;

    /// Spatial extent entering stage i (after the stem and any embeddings).
    int resolution_at_stage(std::size_t i) const;
};

/// Learnable-parameter total from the config alone, by exact enumeration of
/// every tensor the constructed model would hold. No allocation.
std::size_t config_param_count(const MedKanConfig& cfg);

/// Variant presets. Widths come from a deterministic multiplier search: base
/// dims (64,128,256,512) are scaled by the m in {0.05, 0.055, ..., 4.0} whose
/// enumerated parameter total lands closest to the target budget
/// (S: 11.5M, B: 24.6M, L: 48.0M), rounding every dim to a multiple of 8.
MedKanConfig build_variant(char name, int input_size, int num_classes);

// --- blocks ---------------------------------------------------------------

template <class T>
struct Stem {
    std::vector<Conv2dLayer<T>> convs;
    std::vector<LayerNorm<T>> norms;

    Stem() = default;
    Stem(int in_channels, int out_dim, int stem_stride, std::mt19937_64& rng);
    Tensor<T> forward(const Tensor<T>& x) const;
    void params(const std::string& prefix, NamedParams<T>& out) const;
};

template <class T>
struct PatchEmbed {
    Conv2dLayer<T> conv; // 2x2 stride 2
    LayerNorm<T> norm;

    PatchEmbed() = default;
    PatchEmbed(int in_dim, int out_dim, std::mt19937_64& rng);
    Tensor<T> forward(const Tensor<T>& x) const;
    void params(const std::string& prefix, NamedParams<T>& out) const;
};

/// Grouped KAN convolution with a residual connection; the branch input is
/// channel-normalized. With plain_conv the learnable activations are replaced
/// by an ordinary grouped conv + silu.
template <class T>
struct LgckBlock {
    LayerNorm<T> norm;
    KanConv2d<T> kan_conv;
    Conv2dLayer<T> plain_conv;
    bool plain = false;

    LgckBlock() = default;
    LgckBlock(int dim, int groups, const Grid& grid, bool use_base, bool plain,
              std::mt19937_64& rng);
    Tensor<T> forward(const Tensor<T>& x) const;
    void params(const std::string& prefix, NamedParams<T>& out) const;
};

/// Inverted-bottleneck spatial FFN: 1x1 expand, depthwise 3x3, 1x1 project,
/// residual; silu after the first two convs.
template <class T>
struct SffnBlock {
    LayerNorm<T> norm;
    Conv2dLayer<T> expand;
    Conv2dLayer<T> depthwise;
    Conv2dLayer<T> project;

    SffnBlock() = default;
    SffnBlock(int dim, int ratio, std::mt19937_64& rng);
    Tensor<T> forward(const Tensor<T>& x) const;
    void params(const std::string& prefix, NamedParams<T>& out) const;
};

/// Token mixer over flattened spatial positions, shared across channels.
/// Replaces self-attention: each channel row of the [N,d,hw] view passes
/// through one KAN (or MLP) layer of size hw -> hw.
template <class T>
struct GikBlock {
    LayerNorm<T> norm;
    KanLinear<T> kan_mixer;
    Linear<T> mlp_fc1, mlp_fc2;
    GlobalMixerKind kind = GlobalMixerKind::Kan;
    bool residual = true;
    int tokens = 0;

    GikBlock() = default;
    GikBlock(int dim, int tokens, GlobalMixerKind kind, bool residual, const Grid& grid,
             bool use_base, std::mt19937_64& rng);
    Tensor<T> forward(const Tensor<T>& x) const;
    void params(const std::string& prefix, NamedParams<T>& out) const;
};

/// Basic two-conv residual block (ablation baseline).
template <class T>
struct ResidualBlock {
    Conv2dLayer<T> conv1, conv2;
    LayerNorm<T> norm1, norm2;

    ResidualBlock() = default;
    ResidualBlock(int dim, std::mt19937_64& rng);
    Tensor<T> forward(const Tensor<T>& x) const;
    void params(const std::string& prefix, NamedParams<T>& out) const;
};

/// ConvNeXt block (ablation baseline): depthwise 7x7, norm, 1x1 expand x4,
/// gelu, 1x1 project, layer scale, residual.
template <class T>
struct ConvNextBlock {
    Conv2dLayer<T> depthwise;
    LayerNorm<T> norm;
    Conv2dLayer<T> pw1, pw2;
    Tensor<T> layer_scale;

    ConvNextBlock() = default;
    ConvNextBlock(int dim, std::mt19937_64& rng);
    Tensor<T> forward(const Tensor<T>& x) const;
    void params(const std::string& prefix, NamedParams<T>& out) const;
};

template <class T>
struct LocalUnit {
    // exactly one engaged, per MedKanConfig::local_block
    std::optional<LgckBlock<T>> lgck;
    std::optional<SffnBlock<T>> sffn;
    std::optional<ResidualBlock<T>> residual;
    std::optional<ConvNextBlock<T>> convnext;

    Tensor<T> forward(const Tensor<T>& x) const;
    void params(const std::string& prefix, NamedParams<T>& out) const;
};

template <class T>
struct GlobalUnit {
    GikBlock<T> gik;
    SffnBlock<T> sffn;

    Tensor<T> forward(const Tensor<T>& x) const;
    void params(const std::string& prefix, NamedParams<T>& out) const;
};

template <class T>
struct StageModule {
    std::optional<PatchEmbed<T>> embed;
    std::vector<LocalUnit<T>> local_units;
    std::vector<GlobalUnit<T>> global_units;

    Tensor<T> forward(const Tensor<T>& x) const;
    void params(const std::string& prefix, NamedParams<T>& out) const;
};

// --- full model -------------------------------------------------------------

template <class T>
class MedKan {
public:
    MedKan() = default;
    MedKan(MedKanConfig cfg, std::uint64_t seed);

    Tensor<T> forward(const Tensor<T>& x) const;

    /// Also hands back the output of stage `capture_stage` for heatmap work.
    Tensor<T> forward_capture(const Tensor<T>& x, std::size_t capture_stage,
                              Tensor<T>* captured) const;

    NamedParams<T> named_params() const;
    std::size_t param_count() const;
    const MedKanConfig& config() const { return cfg_; }
    std::size_t num_stages() const { return stages_.size(); }

private:
    MedKanConfig cfg_;
    Stem<T> stem_;
    std::vector<StageModule<T>> stages_;
    LayerNorm<T> head_norm_;
    Linear<T> head_;
};

} // namespace medkan
