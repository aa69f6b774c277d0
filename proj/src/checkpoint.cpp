#include "medkan/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace medkan {

namespace {

constexpr char kMagic[4] = {'M', 'D', 'K', 'N'};
constexpr std::uint32_t kVersion = 1;

void put_bytes(std::ostream& os, const void* p, std::size_t n) {
    os.write(static_cast<const char*>(p), std::streamsize(n));
}

template <class U>
void put_le(std::ostream& os, U v) {
    // in-memory layout is already little-endian on every supported target
    put_bytes(os, &v, sizeof(U));
}

void get_bytes(std::istream& is, void* p, std::size_t n, const char* what) {
    is.read(static_cast<char*>(p), std::streamsize(n));
    if (std::size_t(is.gcount()) != n)
        throw DataError(std::string("corrupt checkpoint: truncated while reading ") + what);
}

template <class U>
U get_le(std::istream& is, const char* what) {
    U v;
    get_bytes(is, &v, sizeof(U), what);
    return v;
}

} // namespace

const CheckpointTensor* Checkpoint::find(const std::string& name) const {
    for (const auto& [n, t] : tensors)
        if (n == name) return &t;
    return nullptr;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw RuntimeError("cannot open '" + path + "' for writing");
    put_bytes(os, kMagic, 4);
    put_le<std::uint32_t>(os, kVersion);
    const std::string cfg = ckpt.config.dump();
    put_le<std::uint64_t>(os, cfg.size());
    put_bytes(os, cfg.data(), cfg.size());
    put_le<std::uint32_t>(os, std::uint32_t(ckpt.tensors.size()));
    for (const auto& [name, t] : ckpt.tensors) {
        put_le<std::uint32_t>(os, std::uint32_t(name.size()));
        put_bytes(os, name.data(), name.size());
        put_le<std::uint8_t>(os, std::uint8_t(t.dtype));
        put_le<std::uint8_t>(os, std::uint8_t(t.shape.size()));
        for (std::size_t e : t.shape) put_le<std::uint64_t>(os, e);
        if (t.bytes.size() != t.numel() * t.itemsize())
            throw RuntimeError("checkpoint tensor '" + name + "' byte count " +
                               std::to_string(t.bytes.size()) + " does not match shape " +
                               shape_str(t.shape));
        put_bytes(os, t.bytes.data(), t.bytes.size());
    }
    if (!os) throw RuntimeError("write failed for '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open checkpoint '" + path + "'");
    char magic[4];
    get_bytes(is, magic, 4, "magic");
    if (std::memcmp(magic, kMagic, 4) != 0)
        throw DataError("corrupt checkpoint: bad magic in '" + path + "'");
    const auto version = get_le<std::uint32_t>(is, "version");
    if (version != kVersion)
        throw DataError("checkpoint version " + std::to_string(version) + " unsupported (want " +
                        std::to_string(kVersion) + ")");
    const auto cfg_len = get_le<std::uint64_t>(is, "config length");
    std::string cfg(cfg_len, '\0');
    get_bytes(is, cfg.data(), cfg_len, "config JSON");
    Checkpoint ckpt;
    try {
        ckpt.config = nlohmann::json::parse(cfg);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("corrupt checkpoint: config JSON: ") + e.what());
    }
    const auto count = get_le<std::uint32_t>(is, "tensor count");
    ckpt.tensors.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        const auto name_len = get_le<std::uint32_t>(is, "tensor name length");
        std::string name(name_len, '\0');
        get_bytes(is, name.data(), name_len, "tensor name");
        CheckpointTensor t;
        const auto dt = get_le<std::uint8_t>(is, "dtype tag");
        if (dt > 1) throw DataError("corrupt checkpoint: unknown dtype tag " + std::to_string(dt));
        t.dtype = CkptDtype(dt);
        const auto rank = get_le<std::uint8_t>(is, "rank");
        t.shape.resize(rank);
        for (auto& e : t.shape) {
            e = get_le<std::uint64_t>(is, "extent");
            if (e == 0) throw DataError("corrupt checkpoint: zero extent in tensor '" + name + "'");
        }
        t.bytes.resize(t.numel() * t.itemsize());
        get_bytes(is, t.bytes.data(), t.bytes.size(), ("data of '" + name + "'").c_str());
        ckpt.tensors.emplace_back(std::move(name), std::move(t));
    }
    // anything left over means the writer and reader disagree
    char extra;
    if (is.read(&extra, 1); is.gcount() != 0)
        throw DataError("corrupt checkpoint: trailing bytes after last tensor");
    return ckpt;
}

// --- config JSON ------------------------------------------------------------

nlohmann::json model_config_to_json(const MedKanConfig& cfg) {
    nlohmann::json stages = nlohmann::json::array();
    for (const StageSpec& st : cfg.stages) {
        stages.push_back({{"num_lik", st.num_lik},
                          {"num_gik", st.num_gik},
                          {"dim", st.dim},
                          {"groups", st.groups},
                          {"downsample", st.downsample}});
    }
    return {{"input_size", cfg.input_size},
            {"in_channels", cfg.in_channels},
            {"num_classes", cfg.num_classes},
            {"stem_stride", cfg.stem_stride},
            {"stages", stages},
            {"local_block", to_string(cfg.local_block)},
            {"global_mixer", to_string(cfg.global_mixer)},
            {"gik_residual", cfg.gik_residual},
            {"use_base_branch", cfg.use_base_branch},
            {"sffn_ratio", cfg.sffn_ratio},
            {"token_limit", cfg.token_limit},
            {"grid",
             {{"kind", cfg.grid.kind},
              {"num_basis", cfg.grid.num_basis},
              {"lo", cfg.grid.lo},
              {"hi", cfg.grid.hi},
              {"sigma", cfg.grid.sigma},
              {"degree", cfg.grid.degree}}}};
}

namespace {

void reject_unknown(const nlohmann::json& j, std::initializer_list<const char*> allowed,
                    const char* where) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* k : allowed)
            if (it.key() == k) { ok = true; break; }
        if (!ok)
            throw ConfigError(std::string("unknown key '") + it.key() + "' in " + where);
    }
}

template <class U>
U get_or(const nlohmann::json& j, const char* key, U fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<U>();
    } catch (const nlohmann::json::exception&) {
        throw ConfigError(std::string("bad value type for '") + key + "'");
    }
}

} // namespace

MedKanConfig model_config_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigError("model config must be a JSON object");
    reject_unknown(j,
                   {"input_size", "in_channels", "num_classes", "stem_stride", "stages",
                    "local_block", "global_mixer", "gik_residual", "use_base_branch",
                    "sffn_ratio", "token_limit", "grid"},
                   "model config");
    MedKanConfig cfg;
    cfg.input_size = get_or(j, "input_size", cfg.input_size);
    cfg.in_channels = get_or(j, "in_channels", cfg.in_channels);
    cfg.num_classes = get_or(j, "num_classes", cfg.num_classes);
    cfg.stem_stride = get_or(j, "stem_stride", cfg.stem_stride);
    cfg.local_block = local_block_from_string(get_or<std::string>(j, "local_block", "kan_conv"));
    cfg.global_mixer = global_mixer_from_string(get_or<std::string>(j, "global_mixer", "kan"));
    cfg.gik_residual = get_or(j, "gik_residual", cfg.gik_residual);
    cfg.use_base_branch = get_or(j, "use_base_branch", cfg.use_base_branch);
    cfg.sffn_ratio = get_or(j, "sffn_ratio", cfg.sffn_ratio);
    cfg.token_limit = get_or(j, "token_limit", cfg.token_limit);
    if (j.contains("grid")) {
        const auto& g = j.at("grid");
        reject_unknown(g, {"kind", "num_basis", "lo", "hi", "sigma", "degree"}, "grid config");
        cfg.grid.kind = get_or<std::string>(g, "kind", cfg.grid.kind);
        cfg.grid.num_basis = get_or(g, "num_basis", cfg.grid.num_basis);
        cfg.grid.lo = get_or(g, "lo", cfg.grid.lo);
        cfg.grid.hi = get_or(g, "hi", cfg.grid.hi);
        cfg.grid.sigma = get_or(g, "sigma", cfg.grid.sigma);
        cfg.grid.degree = get_or(g, "degree", cfg.grid.degree);
    }
    if (!j.contains("stages") || !j.at("stages").is_array() || j.at("stages").empty())
        throw ConfigError("model config: 'stages' must be a non-empty array");
    for (const auto& s : j.at("stages")) {
        reject_unknown(s, {"num_lik", "num_gik", "dim", "groups", "downsample"}, "stage spec");
        StageSpec st;
        st.num_lik = get_or(s, "num_lik", st.num_lik);
        st.num_gik = get_or(s, "num_gik", st.num_gik);
        st.dim = get_or(s, "dim", st.dim);
        st.groups = get_or(s, "groups", st.groups);
        st.downsample = get_or(s, "downsample", st.downsample);
        cfg.stages.push_back(st);
    }
    return cfg;
}

// --- tensor conversion ---------------------------------------------------------

template <class T>
CheckpointTensor tensor_to_ckpt(const Tensor<T>& t) {
    CheckpointTensor ct;
    ct.dtype = std::is_same_v<T, float> ? CkptDtype::F32 : CkptDtype::F64;
    ct.shape = t.shape();
    ct.bytes.resize(t.size() * sizeof(T));
    std::memcpy(ct.bytes.data(), t.data(), ct.bytes.size());
    return ct;
}

template <class T>
Tensor<T> tensor_from_ckpt(const CheckpointTensor& ct, const std::string& name) {
    const CkptDtype want = std::is_same_v<T, float> ? CkptDtype::F32 : CkptDtype::F64;
    if (ct.dtype != want)
        throw DataError("checkpoint tensor '" + name + "' has dtype tag " +
                        std::to_string(int(ct.dtype)) + ", expected " + std::to_string(int(want)));
    Tensor<T> t = Tensor<T>::zeros(ct.shape);
    std::memcpy(t.data_mut(), ct.bytes.data(), ct.bytes.size());
    return t;
}

template <class T>
Checkpoint make_checkpoint(const MedKan<T>& model) {
    Checkpoint ckpt;
    ckpt.config = {{"model", model_config_to_json(model.config())},
                   {"dtype", std::is_same_v<T, float> ? "f32" : "f64"}};
    for (const auto& [name, t] : model.named_params())
        ckpt.tensors.emplace_back(name, tensor_to_ckpt(t));
    return ckpt;
}

template <class T>
void load_weights(MedKan<T>& model, const Checkpoint& ckpt) {
    NamedParams<T> params = model.named_params();
    for (auto& [name, t] : params) {
        const CheckpointTensor* ct = ckpt.find(name);
        if (!ct) throw DataError("checkpoint is missing tensor '" + name + "'");
        if (ct->shape != t.shape())
            throw DataError("checkpoint tensor '" + name + "' shape " + shape_str(ct->shape) +
                            " does not match model shape " + shape_str(t.shape()));
        const CkptDtype want = std::is_same_v<T, float> ? CkptDtype::F32 : CkptDtype::F64;
        if (ct->dtype != want)
            throw DataError("checkpoint tensor '" + name + "' dtype mismatch");
        std::memcpy(t.data_mut(), ct->bytes.data(), ct->bytes.size());
    }
}

#define MEDKAN_INSTANTIATE_CKPT(T)                                                               \
    template CheckpointTensor tensor_to_ckpt<T>(const Tensor<T>&);                               \
    template Tensor<T> tensor_from_ckpt<T>(const CheckpointTensor&, const std::string&);         \
    template Checkpoint make_checkpoint<T>(const MedKan<T>&);                                    \
    template void load_weights<T>(MedKan<T>&, const Checkpoint&);

MEDKAN_INSTANTIATE_CKPT(float)
MEDKAN_INSTANTIATE_CKPT(double)
#undef MEDKAN_INSTANTIATE_CKPT

} // namespace medkan
