#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>

#include "medkan/checkpoint.hpp"
#include "medkan/train.hpp"

using namespace medkan;
namespace fs = std::filesystem;

namespace {

MedKanConfig ckpt_config() {
    MedKanConfig cfg;
    cfg.input_size = 16;
    cfg.in_channels = 1;
    cfg.num_classes = 3;
    cfg.stem_stride = 2;
    cfg.stages = {StageSpec{1, 1, 8, 2, false}};
    cfg.grid.num_basis = 4;
    return cfg;
}

fs::path temp_path(const std::string& name) {
    return fs::temp_directory_path() / name;
}

std::vector<std::uint8_t> read_all(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

std::uint32_t rd32(const std::uint8_t* p) {
    return p[0] | (std::uint32_t(p[1]) << 8) | (std::uint32_t(p[2]) << 16) |
           (std::uint32_t(p[3]) << 24);
}
std::uint64_t rd64(const std::uint8_t* p) {
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
    return v;
}

} // namespace

TEST_SUITE_BEGIN("checkpoint");

TEST_CASE("save then load reproduces forward outputs bit-exactly") {
    MedKan<float> model(ckpt_config(), 99);
    std::mt19937_64 rng(1);
    auto x = Tensor<float>::uniform({2, 1, 16, 16}, rng, -1.0f, 1.0f);
    auto before = model.forward(x);

    const fs::path p = temp_path("mk_roundtrip.ckpt");
    save_checkpoint(p.string(), make_checkpoint(model));

    Checkpoint loaded = load_checkpoint(p.string());
    MedKanConfig cfg = model_config_from_json(loaded.config.at("model"));
    MedKan<float> restored(cfg, 12345); // different init seed; weights overwritten
    load_weights(restored, loaded);
    auto after = restored.forward(x);
    CHECK(std::memcmp(before.data(), after.data(), before.size() * sizeof(float)) == 0);
}

TEST_CASE("truncated checkpoints fail with an explicit corruption error") {
    MedKan<float> model(ckpt_config(), 7);
    const fs::path p = temp_path("mk_trunc.ckpt");
    save_checkpoint(p.string(), make_checkpoint(model));
    auto bytes = read_all(p);
    const fs::path cut = temp_path("mk_cut.ckpt");
    std::ofstream os(cut, std::ios::binary);
    os.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size() / 2));
    os.close();
    try {
        load_checkpoint(cut.string());
        FAIL("expected DataError");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("corrupt") != std::string::npos);
    }
}

TEST_CASE("bad magic and unknown version are rejected") {
    MedKan<float> model(ckpt_config(), 7);
    const fs::path p = temp_path("mk_magic.ckpt");
    save_checkpoint(p.string(), make_checkpoint(model));
    auto bytes = read_all(p);

    auto write_patched = [&](const fs::path& dst, std::size_t off, std::uint8_t value) {
        auto copy = bytes;
        copy[off] = value;
        std::ofstream os(dst, std::ios::binary);
        os.write(reinterpret_cast<const char*>(copy.data()), std::streamsize(copy.size()));
    };
    const fs::path bad_magic = temp_path("mk_badmagic.ckpt");
    write_patched(bad_magic, 0, 'X');
    CHECK_THROWS_AS(load_checkpoint(bad_magic.string()), DataError);

    const fs::path bad_version = temp_path("mk_badver.ckpt");
    write_patched(bad_version, 4, 9);
    try {
        load_checkpoint(bad_version.string());
        FAIL("expected DataError");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("version") != std::string::npos);
    }
}

TEST_CASE("header tensor offsets match an independent byte-layout enumeration") {
    MedKan<float> model(ckpt_config(), 3);
    Checkpoint ckpt = make_checkpoint(model);
    const fs::path p = temp_path("mk_layout.ckpt");
    save_checkpoint(p.string(), ckpt);
    auto bytes = read_all(p);

    // walk the declared format: magic u32-version u64-jsonlen json u32-count
    REQUIRE(bytes.size() > 18);
    CHECK(std::memcmp(bytes.data(), "MDKN", 4) == 0);
    CHECK(rd32(bytes.data() + 4) == 1);
    const std::uint64_t json_len = rd64(bytes.data() + 8);
    std::size_t off = 16 + json_len;
    const std::uint32_t count = rd32(bytes.data() + off);
    CHECK(count == ckpt.tensors.size());
    off += 4;
    for (const auto& [name, t] : ckpt.tensors) {
        const std::uint32_t name_len = rd32(bytes.data() + off);
        off += 4;
        CHECK(std::string(reinterpret_cast<const char*>(bytes.data() + off), name_len) == name);
        off += name_len;
        CHECK(bytes[off] == std::uint8_t(t.dtype));
        off += 1;
        const std::uint8_t rank = bytes[off];
        CHECK(rank == t.shape.size());
        off += 1;
        std::size_t numel = 1;
        for (int d = 0; d < rank; ++d) {
            const std::uint64_t e = rd64(bytes.data() + off);
            CHECK(e == t.shape[d]);
            numel *= e;
            off += 8;
        }
        // enumerated offset lands exactly on this tensor's payload
        CHECK(std::memcmp(bytes.data() + off, t.bytes.data(), t.bytes.size()) == 0);
        off += numel * t.itemsize();
    }
    CHECK(off == bytes.size());
}

TEST_CASE("load_weights validates shape, dtype and presence") {
    MedKan<float> model(ckpt_config(), 3);
    Checkpoint ckpt = make_checkpoint(model);

    Checkpoint missing = ckpt;
    missing.tensors.erase(missing.tensors.begin());
    CHECK_THROWS_AS(load_weights(model, missing), DataError);

    Checkpoint reshaped = ckpt;
    reshaped.tensors[0].second.shape[0] += 1;
    reshaped.tensors[0].second.bytes.resize(reshaped.tensors[0].second.numel() * 4);
    CHECK_THROWS_AS(load_weights(model, reshaped), DataError);

    MedKan<double> dmodel(ckpt_config(), 3);
    CHECK_THROWS_AS(load_weights(dmodel, ckpt), DataError); // f32 tensors into f64 model
}

TEST_CASE("f64 checkpoints round trip as well") {
    MedKan<double> model(ckpt_config(), 11);
    std::mt19937_64 rng(2);
    auto x = Tensor<double>::uniform({1, 1, 16, 16}, rng, -1.0, 1.0);
    auto before = model.forward(x);
    const fs::path p = temp_path("mk_f64.ckpt");
    save_checkpoint(p.string(), make_checkpoint(model));
    Checkpoint loaded = load_checkpoint(p.string());
    CHECK(loaded.config.at("dtype") == "f64");
    MedKan<double> restored(model_config_from_json(loaded.config.at("model")), 0);
    load_weights(restored, loaded);
    auto after = restored.forward(x);
    CHECK(std::memcmp(before.data(), after.data(), before.size() * sizeof(double)) == 0);
}

TEST_CASE("model config json round trips strictly") {
    MedKanConfig cfg = ckpt_config();
    nlohmann::json j = model_config_to_json(cfg);
    MedKanConfig back = model_config_from_json(j);
    CHECK(model_config_to_json(back) == j);

    j["bogus_key"] = 1;
    CHECK_THROWS_AS(model_config_from_json(j), ConfigError);
}

TEST_SUITE_END();
