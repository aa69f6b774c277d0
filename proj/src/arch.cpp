#include "medkan/arch.hpp"

#include <cmath>

namespace medkan {

const char* to_string(LocalBlockKind k) {
    switch (k) {
        case LocalBlockKind::KanConv: return "kan_conv";
        case LocalBlockKind::PlainConv: return "plain_conv";
        case LocalBlockKind::Residual: return "residual";
        case LocalBlockKind::ConvNext: return "convnext";
    }
    return "?";
}

const char* to_string(GlobalMixerKind k) {
    switch (k) {
        case GlobalMixerKind::Kan: return "kan";
        case GlobalMixerKind::Mlp: return "mlp";
        case GlobalMixerKind::None: return "none";
    }
    return "?";
}

LocalBlockKind local_block_from_string(const std::string& s) {
    if (s == "kan_conv") return LocalBlockKind::KanConv;
    if (s == "plain_conv") return LocalBlockKind::PlainConv;
    if (s == "residual") return LocalBlockKind::Residual;
    if (s == "convnext") return LocalBlockKind::ConvNext;
    throw ConfigError("unknown local_block kind '" + s +
                      "' (expected kan_conv|plain_conv|residual|convnext)");
}

GlobalMixerKind global_mixer_from_string(const std::string& s) {
    if (s == "kan") return GlobalMixerKind::Kan;
    if (s == "mlp") return GlobalMixerKind::Mlp;
    if (s == "none") return GlobalMixerKind::None;
    throw ConfigError("unknown global_mixer kind '" + s + "' (expected kan|mlp|none)");
}

Grid GridConfig::build() const {
    if (kind == "rbf") {
        if (sigma > 0) return RbfGrid(num_basis, lo, hi, sigma);
        return RbfGrid::with_spacing_sigma(num_basis, lo, hi);
    }
    if (kind == "bspline") return BsplineGrid(num_basis, degree, lo, hi);
    throw ConfigError("unknown grid kind '" + kind + "' (expected rbf|bspline)");
}

void MedKanConfig::validate() const {
    if (in_channels < 1) throw ConfigError("config: in_channels must be >= 1");
    if (num_classes < 2) throw ConfigError("config: num_classes must be >= 2");
    if (stem_stride != 2 && stem_stride != 4)
        throw ConfigError("config: stem_stride must be 2 or 4, got " + std::to_string(stem_stride));
    if (input_size < stem_stride || input_size % stem_stride != 0)
        throw ConfigError("config: input_size " + std::to_string(input_size) +
                          " not divisible by stem stride " + std::to_string(stem_stride));
    if (stages.empty()) throw ConfigError("config: at least one stage required");
    if (sffn_ratio < 1) throw ConfigError("config: sffn_ratio must be >= 1");
    if (token_limit < 1) throw ConfigError("config: token_limit must be >= 1");
    grid.build(); // validates grid parameters
    int res = input_size / stem_stride;
    for (std::size_t i = 0; i < stages.size(); ++i) {
        const StageSpec& st = stages[i];
        if (st.dim < 1) throw ConfigError("config: stage " + std::to_string(i) + " has dim < 1");
        if (st.num_lik < 0 || st.num_gik < 0)
            throw ConfigError("config: stage " + std::to_string(i) + " has negative block count");
        if (st.groups < 1 || st.dim % st.groups != 0)
            throw ConfigError("config: stage " + std::to_string(i) + " dim " +
                              std::to_string(st.dim) + " not divisible by groups " +
                              std::to_string(st.groups));
        if (st.downsample) {
            if (res % 2 != 0)
                throw ConfigError("config: stage " + std::to_string(i) +
                                  " downsamples an odd resolution " + std::to_string(res));
            res /= 2;
        } else if (i > 0 && stages[i - 1].dim != st.dim) {
            throw ConfigError("config: stage " + std::to_string(i) +
                              " changes dim without downsample");
        }
        if (res < 1)
            throw ConfigError("config: spatial size vanished at stage " + std::to_string(i));
        if (st.num_gik > 0 && global_mixer != GlobalMixerKind::None) {
            int hw = res * res;
            if (hw > token_limit)
                throw ConfigError("config: stage " + std::to_string(i) + " has " +
                                  std::to_string(hw) + " tokens, over the limit of " +
                                  std::to_string(token_limit) +
                                  "; place GIK blocks in a later (smaller) stage");
        }
    }
    if (stem_stride == 4 && stages[0].dim % 2 != 0)
        throw ConfigError("config: first stage dim must be even for the two-conv stem");
}

int MedKanConfig::resolution_at_stage(std::size_t i) const {
    int res = input_size / stem_stride;
    for (std::size_t s = 0; s <= i && s < stages.size(); ++s)
        if (stages[s].downsample) res /= 2;
    return res;
}

// --- parameter enumeration ----------------------------------------------------

namespace {

std::size_t conv_params(int in_ch, int out_ch, int k, int groups, bool bias) {
    return std::size_t(out_ch) * (in_ch / groups) * k * k + (bias ? out_ch : 0);
}

std::size_t ln_params(int c) { return 2u * std::size_t(c); }

std::size_t kan_conv_params(int in_ch, int out_ch, int k, int groups, int K, bool base,
                            bool bias) {
    std::size_t patch = std::size_t(in_ch / groups) * k * k;
    return std::size_t(out_ch) * patch * K + (base ? std::size_t(out_ch) * patch : 0) +
           (bias ? out_ch : 0);
}

std::size_t kan_linear_params(int in, int out, int K, bool base, bool bias) {
    return std::size_t(out) * in * K + (base ? std::size_t(out) * in : 0) + (bias ? out : 0);
}

std::size_t sffn_params(int d, int r) {
    int h = r * d;
    return ln_params(d) + conv_params(d, h, 1, 1, true) + conv_params(h, h, 3, h, true) +
           conv_params(h, d, 1, 1, true);
}

} // namespace

std::size_t config_param_count(const MedKanConfig& cfg) {
    cfg.validate();
    const int K = cfg.grid.num_basis;
    const bool base = cfg.use_base_branch;
    std::size_t total = 0;
    // stem
    int d0 = cfg.stages[0].dim;
    if (cfg.stem_stride == 4) {
        total += conv_params(cfg.in_channels, d0 / 2, 4, 1, true) + ln_params(d0 / 2);
        total += conv_params(d0 / 2, d0, 4, 1, true) + ln_params(d0);
    } else {
        total += conv_params(cfg.in_channels, d0, 4, 1, true) + ln_params(d0);
    }
    int prev_dim = d0;
    int res = cfg.input_size / cfg.stem_stride;
    for (const StageSpec& st : cfg.stages) {
        if (st.downsample) {
            total += conv_params(prev_dim, st.dim, 2, 1, true) + ln_params(st.dim);
            res /= 2;
        }
        for (int i = 0; i < st.num_lik; ++i) {
            switch (cfg.local_block) {
                case LocalBlockKind::KanConv:
                    total += ln_params(st.dim) +
                             kan_conv_params(st.dim, st.dim, 3, st.groups, K, base, true);
                    total += sffn_params(st.dim, cfg.sffn_ratio);
                    break;
                case LocalBlockKind::PlainConv:
                    total += ln_params(st.dim) + conv_params(st.dim, st.dim, 3, st.groups, true);
                    total += sffn_params(st.dim, cfg.sffn_ratio);
                    break;
                case LocalBlockKind::Residual:
                    total += 2 * (conv_params(st.dim, st.dim, 3, 1, true) + ln_params(st.dim));
                    break;
                case LocalBlockKind::ConvNext:
                    total += conv_params(st.dim, st.dim, 7, st.dim, true) + ln_params(st.dim) +
                             conv_params(st.dim, 4 * st.dim, 1, 1, true) +
                             conv_params(4 * st.dim, st.dim, 1, 1, true) + st.dim;
                    break;
            }
        }
        if (cfg.global_mixer != GlobalMixerKind::None) {
            int hw = res * res;
            for (int i = 0; i < st.num_gik; ++i) {
                total += ln_params(st.dim);
                if (cfg.global_mixer == GlobalMixerKind::Kan)
                    total += kan_linear_params(hw, hw, K, base, true);
                else
                    total += 2 * (std::size_t(hw) * hw + hw);
                total += sffn_params(st.dim, cfg.sffn_ratio);
            }
        }
        prev_dim = st.dim;
    }
    total += ln_params(prev_dim);
    total += std::size_t(cfg.num_classes) * prev_dim + cfg.num_classes;
    return total;
}

MedKanConfig build_variant(char name, int input_size, int num_classes) {
    double target;
    switch (name) {
        case 'S': case 's': target = 11.5e6; break;
        case 'B': case 'b': target = 24.6e6; break;
        case 'L': case 'l': target = 48.0e6; break;
        default:
            throw ConfigError(std::string("build_variant: unknown variant '") + name +
                              "' (expected S, B or L)");
    }
    const int base_dims[4] = {64, 128, 256, 512};
    const int lik[4] = {2, 2, 4, 2};
    const int gik[4] = {0, 0, 1, 1};

    auto make = [&](double m) {
        MedKanConfig cfg;
        cfg.input_size = input_size;
        cfg.in_channels = 3;
        cfg.num_classes = num_classes;
        cfg.stem_stride = 4;
        cfg.local_block = LocalBlockKind::KanConv;
        cfg.global_mixer = GlobalMixerKind::Kan;
        for (int i = 0; i < 4; ++i) {
            StageSpec st;
            st.dim = std::max(8, int(std::lround(base_dims[i] * m / 8.0)) * 8);
            st.groups = 8;
            st.num_lik = lik[i];
            st.num_gik = gik[i];
            st.downsample = i > 0;
            cfg.stages.push_back(st);
        }
        return cfg;
    };

    double best_m = 1.0;
    double best_err = -1.0;
    for (double m = 0.05; m <= 4.0 + 1e-9; m += 0.005) {
        MedKanConfig cfg = make(m);
        double err = std::abs(double(config_param_count(cfg)) - target);
        if (best_err < 0 || err < best_err - 0.5) {
            best_err = err;
            best_m = m;
        }
    }
    return make(best_m);
}

// --- block implementations ------------------------------------------------------

template <class T>
Stem<T>::Stem(int in_channels, int out_dim, int stem_stride, std::mt19937_64& rng) {
    // 4x4 stride-2 pad-1 halves even extents exactly
    ConvGeom g{2, 1, 1};
    if (stem_stride == 4) {
        convs.emplace_back(in_channels, out_dim / 2, 4, g, rng);
        norms.emplace_back(out_dim / 2);
        convs.emplace_back(out_dim / 2, out_dim, 4, g, rng);
        norms.emplace_back(out_dim);
    } else {
        convs.emplace_back(in_channels, out_dim, 4, g, rng);
        norms.emplace_back(out_dim);
    }
}

template <class T>
Tensor<T> Stem<T>::forward(const Tensor<T>& x) const {
    Tensor<T> h = x;
    for (std::size_t i = 0; i < convs.size(); ++i)
        h = silu(norms[i].forward(convs[i].forward(h)));
    return h;
}

template <class T>
void Stem<T>::params(const std::string& prefix, NamedParams<T>& out) const {
    for (std::size_t i = 0; i < convs.size(); ++i) {
        convs[i].params(prefix + ".conv" + std::to_string(i), out);
        norms[i].params(prefix + ".norm" + std::to_string(i), out);
    }
}

template <class T>
PatchEmbed<T>::PatchEmbed(int in_dim, int out_dim, std::mt19937_64& rng)
    : conv(in_dim, out_dim, 2, ConvGeom{2, 0, 1}, rng), norm(out_dim) {}

template <class T>
Tensor<T> PatchEmbed<T>::forward(const Tensor<T>& x) const {
    return norm.forward(conv.forward(x));
}

template <class T>
void PatchEmbed<T>::params(const std::string& prefix, NamedParams<T>& out) const {
    conv.params(prefix + ".conv", out);
    norm.params(prefix + ".norm", out);
}

template <class T>
LgckBlock<T>::LgckBlock(int dim, int groups, const Grid& grid, bool use_base, bool plain_,
                        std::mt19937_64& rng)
    : norm(dim), plain(plain_) {
    ConvGeom g{1, 1, groups};
    if (plain)
        plain_conv = Conv2dLayer<T>(dim, dim, 3, g, rng);
    else
        kan_conv = KanConv2d<T>(dim, dim, 3, g, grid, rng, use_base);
}

template <class T>
Tensor<T> LgckBlock<T>::forward(const Tensor<T>& x) const {
    Tensor<T> h = norm.forward(x);
    h = plain ? silu(plain_conv.forward(h)) : kan_conv.forward(h);
    return add(h, x);
}

template <class T>
void LgckBlock<T>::params(const std::string& prefix, NamedParams<T>& out) const {
    norm.params(prefix + ".norm", out);
    if (plain)
        plain_conv.params(prefix + ".conv", out);
    else
        kan_conv.params(prefix + ".conv", out);
}

template <class T>
SffnBlock<T>::SffnBlock(int dim, int ratio, std::mt19937_64& rng) : norm(dim) {
    const int hidden = ratio * dim;
    expand = Conv2dLayer<T>(dim, hidden, 1, ConvGeom{1, 0, 1}, rng);
    depthwise = Conv2dLayer<T>(hidden, hidden, 3, ConvGeom{1, 1, hidden}, rng);
    project = Conv2dLayer<T>(hidden, dim, 1, ConvGeom{1, 0, 1}, rng);
}

template <class T>
Tensor<T> SffnBlock<T>::forward(const Tensor<T>& x) const {
    Tensor<T> h = norm.forward(x);
    h = silu(expand.forward(h));
    h = silu(depthwise.forward(h));
    h = project.forward(h);
    return add(h, x);
}

template <class T>
void SffnBlock<T>::params(const std::string& prefix, NamedParams<T>& out) const {
    norm.params(prefix + ".norm", out);
    expand.params(prefix + ".expand", out);
    depthwise.params(prefix + ".dw", out);
    project.params(prefix + ".project", out);
}

template <class T>
GikBlock<T>::GikBlock(int dim, int tokens_, GlobalMixerKind kind_, bool residual_,
                      const Grid& grid, bool use_base, std::mt19937_64& rng)
    : norm(dim), kind(kind_), residual(residual_), tokens(tokens_) {
    if (kind == GlobalMixerKind::Kan) {
        kan_mixer = KanLinear<T>(tokens, tokens, grid, rng, use_base);
    } else if (kind == GlobalMixerKind::Mlp) {
        mlp_fc1 = Linear<T>(tokens, tokens, rng);
        mlp_fc2 = Linear<T>(tokens, tokens, rng);
    }
}

template <class T>
Tensor<T> GikBlock<T>::forward(const Tensor<T>& x) const {
    if (kind == GlobalMixerKind::None) return x;
    const Shape& s = x.shape();
    const std::size_t N = s[0], d = s[1], hw = s[2] * s[3];
    if (int(hw) != tokens)
        throw ConfigError("gik: expected " + std::to_string(tokens) + " tokens, got " +
                          std::to_string(hw));
    Tensor<T> h = norm.forward(x);
    h = reshape(h, {N * d, hw}); // each channel row mixes its spatial positions
    if (kind == GlobalMixerKind::Kan)
        h = kan_mixer.forward(h);
    else
        h = mlp_fc2.forward(silu(mlp_fc1.forward(h)));
    h = reshape(h, s);
    return residual ? add(h, x) : h;
}

template <class T>
void GikBlock<T>::params(const std::string& prefix, NamedParams<T>& out) const {
    if (kind == GlobalMixerKind::None) return;
    norm.params(prefix + ".norm", out);
    if (kind == GlobalMixerKind::Kan) {
        kan_mixer.params(prefix + ".mixer", out);
    } else {
        mlp_fc1.params(prefix + ".fc1", out);
        mlp_fc2.params(prefix + ".fc2", out);
    }
}

template <class T>
ResidualBlock<T>::ResidualBlock(int dim, std::mt19937_64& rng)
    : conv1(dim, dim, 3, ConvGeom{1, 1, 1}, rng),
      conv2(dim, dim, 3, ConvGeom{1, 1, 1}, rng),
      norm1(dim),
      norm2(dim) {}

template <class T>
Tensor<T> ResidualBlock<T>::forward(const Tensor<T>& x) const {
    Tensor<T> h = relu(norm1.forward(conv1.forward(x)));
    h = norm2.forward(conv2.forward(h));
    return relu(add(h, x));
}

template <class T>
void ResidualBlock<T>::params(const std::string& prefix, NamedParams<T>& out) const {
    conv1.params(prefix + ".conv1", out);
    norm1.params(prefix + ".norm1", out);
    conv2.params(prefix + ".conv2", out);
    norm2.params(prefix + ".norm2", out);
}

template <class T>
ConvNextBlock<T>::ConvNextBlock(int dim, std::mt19937_64& rng)
    : depthwise(dim, dim, 7, ConvGeom{1, 3, dim}, rng),
      norm(dim),
      pw1(dim, 4 * dim, 1, ConvGeom{1, 0, 1}, rng),
      pw2(4 * dim, dim, 1, ConvGeom{1, 0, 1}, rng) {
    layer_scale = Tensor<T>::full({std::size_t(dim)}, T(1e-6));
    layer_scale.set_requires_grad(true);
}

template <class T>
Tensor<T> ConvNextBlock<T>::forward(const Tensor<T>& x) const {
    Tensor<T> h = norm.forward(depthwise.forward(x));
    h = pw2.forward(gelu(pw1.forward(h)));
    h = scale_channels(h, layer_scale);
    return add(h, x);
}

template <class T>
void ConvNextBlock<T>::params(const std::string& prefix, NamedParams<T>& out) const {
    depthwise.params(prefix + ".dw", out);
    norm.params(prefix + ".norm", out);
    pw1.params(prefix + ".pw1", out);
    pw2.params(prefix + ".pw2", out);
    out.emplace_back(prefix + ".layer_scale", layer_scale);
}

template <class T>
Tensor<T> LocalUnit<T>::forward(const Tensor<T>& x) const {
    if (residual) return residual->forward(x);
    if (convnext) return convnext->forward(x);
    Tensor<T> h = lgck->forward(x);
    return sffn->forward(h);
}

template <class T>
void LocalUnit<T>::params(const std::string& prefix, NamedParams<T>& out) const {
    if (residual) { residual->params(prefix + ".res", out); return; }
    if (convnext) { convnext->params(prefix + ".cnx", out); return; }
    lgck->params(prefix + ".lgck", out);
    sffn->params(prefix + ".sffn", out);
}

template <class T>
Tensor<T> GlobalUnit<T>::forward(const Tensor<T>& x) const {
    return sffn.forward(gik.forward(x));
}

template <class T>
void GlobalUnit<T>::params(const std::string& prefix, NamedParams<T>& out) const {
    gik.params(prefix + ".gik", out);
    sffn.params(prefix + ".sffn", out);
}

template <class T>
Tensor<T> StageModule<T>::forward(const Tensor<T>& x) const {
    Tensor<T> h = embed ? embed->forward(x) : x;
    for (const auto& u : local_units) h = u.forward(h);
    for (const auto& u : global_units) h = u.forward(h);
    return h;
}

template <class T>
void StageModule<T>::params(const std::string& prefix, NamedParams<T>& out) const {
    if (embed) embed->params(prefix + ".embed", out);
    for (std::size_t i = 0; i < local_units.size(); ++i)
        local_units[i].params(prefix + ".lik" + std::to_string(i), out);
    for (std::size_t i = 0; i < global_units.size(); ++i)
        global_units[i].params(prefix + ".gik" + std::to_string(i), out);
}

// --- MedKan ----------------------------------------------------------------------

template <class T>
MedKan<T>::MedKan(MedKanConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
    cfg_.validate();
    std::mt19937_64 rng(seed);
    Grid grid = cfg_.grid.build();
    stem_ = Stem<T>(cfg_.in_channels, cfg_.stages[0].dim, cfg_.stem_stride, rng);
    int prev_dim = cfg_.stages[0].dim;
    int res = cfg_.input_size / cfg_.stem_stride;
    for (const StageSpec& st : cfg_.stages) {
        StageModule<T> stage;
        if (st.downsample) {
            stage.embed = PatchEmbed<T>(prev_dim, st.dim, rng);
            res /= 2;
        }
        for (int i = 0; i < st.num_lik; ++i) {
            LocalUnit<T> unit;
            switch (cfg_.local_block) {
                case LocalBlockKind::KanConv:
                case LocalBlockKind::PlainConv:
                    unit.lgck = LgckBlock<T>(st.dim, st.groups, grid, cfg_.use_base_branch,
                                             cfg_.local_block == LocalBlockKind::PlainConv, rng);
                    unit.sffn = SffnBlock<T>(st.dim, cfg_.sffn_ratio, rng);
                    break;
                case LocalBlockKind::Residual:
                    unit.residual = ResidualBlock<T>(st.dim, rng);
                    break;
                case LocalBlockKind::ConvNext:
                    unit.convnext = ConvNextBlock<T>(st.dim, rng);
                    break;
            }
            stage.local_units.push_back(std::move(unit));
        }
        if (cfg_.global_mixer != GlobalMixerKind::None) {
            for (int i = 0; i < st.num_gik; ++i) {
                GlobalUnit<T> unit;
                unit.gik = GikBlock<T>(st.dim, res * res, cfg_.global_mixer, cfg_.gik_residual,
                                       grid, cfg_.use_base_branch, rng);
                unit.sffn = SffnBlock<T>(st.dim, cfg_.sffn_ratio, rng);
                stage.global_units.push_back(std::move(unit));
            }
        }
        stages_.push_back(std::move(stage));
        prev_dim = st.dim;
    }
    head_norm_ = LayerNorm<T>(prev_dim);
    head_ = Linear<T>(prev_dim, cfg_.num_classes, rng);
}

template <class T>
Tensor<T> MedKan<T>::forward(const Tensor<T>& x) const {
    return forward_capture(x, stages_.size(), nullptr);
}

template <class T>
Tensor<T> MedKan<T>::forward_capture(const Tensor<T>& x, std::size_t capture_stage,
                                     Tensor<T>* captured) const {
    if (x.rank() != 4 || int(x.extent(1)) != cfg_.in_channels ||
        int(x.extent(2)) != cfg_.input_size || int(x.extent(3)) != cfg_.input_size)
        throw ShapeError("model: input " + shape_str(x.shape()) + " does not match config [N," +
                         std::to_string(cfg_.in_channels) + "," + std::to_string(cfg_.input_size) +
                         "," + std::to_string(cfg_.input_size) + "]");
    Tensor<T> h = stem_.forward(x);
    for (std::size_t i = 0; i < stages_.size(); ++i) {
        h = stages_[i].forward(h);
        if (captured && i == capture_stage) *captured = h;
    }
    h = global_avg_pool(h);
    h = head_norm_.forward(h);
    return head_.forward(h);
}

template <class T>
NamedParams<T> MedKan<T>::named_params() const {
    NamedParams<T> out;
    stem_.params("stem", out);
    for (std::size_t i = 0; i < stages_.size(); ++i)
        stages_[i].params("stage" + std::to_string(i), out);
    head_norm_.params("head.norm", out);
    head_.params("head.fc", out);
    return out;
}

template <class T>
std::size_t MedKan<T>::param_count() const {
    return total_param_count(named_params());
}

#define MEDKAN_INSTANTIATE_ARCH(T)                                                               \
    template struct Stem<T>;                                                                     \
    template struct PatchEmbed<T>;                                                               \
    template struct LgckBlock<T>;                                                                \
    template struct SffnBlock<T>;                                                                \
    template struct GikBlock<T>;                                                                 \
    template struct ResidualBlock<T>;                                                            \
    template struct ConvNextBlock<T>;                                                            \
    template struct LocalUnit<T>;                                                                \
    template struct GlobalUnit<T>;                                                               \
    template struct StageModule<T>;                                                              \
    template class MedKan<T>;

MEDKAN_INSTANTIATE_ARCH(float)
MEDKAN_INSTANTIATE_ARCH(double)
#undef MEDKAN_INSTANTIATE_ARCH

} // namespace medkan
