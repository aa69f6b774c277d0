#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>

#include "medkan/data.hpp"
#include "medkan/nn.hpp"
#include "medkan/train.hpp"

using namespace medkan;
namespace fs = std::filesystem;

namespace {

std::vector<std::uint8_t> minimal_npy_u8(const std::string& shape_tuple,
                                         const std::vector<std::uint8_t>& payload) {
    std::string dict = "{'descr': '|u1', 'fortran_order': False, 'shape': " + shape_tuple + ", }";
    while ((10 + dict.size() + 1) % 16 != 0) dict += ' ';
    dict += '\n';
    std::vector<std::uint8_t> out{0x93, 'N', 'U', 'M', 'P', 'Y', 1, 0};
    out.push_back(dict.size() & 0xff);
    out.push_back(dict.size() >> 8);
    out.insert(out.end(), dict.begin(), dict.end());
    out.insert(out.end(), payload.begin(), payload.end());
    return out;
}

fs::path temp_path(const std::string& name) {
    return fs::temp_directory_path() / name;
}

bool run_python(const std::string& code) {
    const fs::path script = temp_path("mk_test_script.py");
    std::ofstream os(script);
    os << code;
    os.close();
    const std::string cmd = "python3 " + script.string() + " >/dev/null 2>&1";
    return std::system(cmd.c_str()) == 0;
}

} // namespace

TEST_SUITE_BEGIN("data");

TEST_CASE("parse_npy accepts a minimal v1.0 header") {
    auto bytes = minimal_npy_u8("(2, 3)", {1, 2, 3, 4, 5, 6});
    NpyArray arr = parse_npy(bytes);
    CHECK(arr.dtype == NpyDtype::U8);
    CHECK(arr.shape == Shape{2, 3});
    CHECK(arr.data == std::vector<std::uint8_t>{1, 2, 3, 4, 5, 6});
}

TEST_CASE("parse_npy rejects payload length mismatches") {
    auto bytes = minimal_npy_u8("(2, 3)", {1, 2, 3, 4, 5});
    try {
        parse_npy(bytes);
        FAIL("expected DataError");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("mismatch") != std::string::npos);
    }
}

TEST_CASE("parse_npy rejects bad magic and fortran order") {
    auto bytes = minimal_npy_u8("(4,)", {1, 2, 3, 4});
    bytes[0] = 0x00;
    CHECK_THROWS_AS(parse_npy(bytes), DataError);

    std::string dict = "{'descr': '|u1', 'fortran_order': True, 'shape': (4,), }";
    while ((10 + dict.size() + 1) % 16 != 0) dict += ' ';
    dict += '\n';
    std::vector<std::uint8_t> f{0x93, 'N', 'U', 'M', 'P', 'Y', 1, 0};
    f.push_back(dict.size() & 0xff);
    f.push_back(dict.size() >> 8);
    f.insert(f.end(), dict.begin(), dict.end());
    f.insert(f.end(), {1, 2, 3, 4});
    try {
        parse_npy(f);
        FAIL("expected DataError");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("fortran") != std::string::npos);
    }
}

TEST_CASE("parse then serialize then parse is a fixed point") {
    std::mt19937_64 rng(1);
    NpyArray arr;
    arr.dtype = NpyDtype::F64;
    arr.shape = {3, 5};
    arr.data.resize(15 * 8);
    std::vector<double> vals(15);
    std::normal_distribution<double> d;
    for (auto& v : vals) v = d(rng);
    std::memcpy(arr.data.data(), vals.data(), arr.data.size());
    auto bytes = serialize_npy(arr);
    NpyArray back = parse_npy(bytes);
    CHECK(back.dtype == arr.dtype);
    CHECK(back.shape == arr.shape);
    CHECK(back.data == arr.data);
    CHECK(serialize_npy(back) == bytes);
}

TEST_CASE("npy cross-tool round trip with a reference array library") {
    const fs::path theirs = temp_path("mk_ref.npy");
    const fs::path ours = temp_path("mk_ours.npy");
    const bool ok = run_python(
        "import numpy as np\n"
        "a = np.arange(24, dtype=np.float32).reshape(2, 3, 4) / 7.0\n"
        "np.save('" + theirs.string() + "', a)\n");
    REQUIRE_MESSAGE(ok, "python3/numpy unavailable");

    std::ifstream is(theirs, std::ios::binary);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)),
                                    std::istreambuf_iterator<char>());
    NpyArray arr = parse_npy(bytes);
    CHECK(arr.dtype == NpyDtype::F32);
    CHECK(arr.shape == Shape{2, 3, 4});
    const float* vals = reinterpret_cast<const float*>(arr.data.data());
    for (int i = 0; i < 24; ++i) CHECK(vals[i] == doctest::Approx(i / 7.0f).epsilon(1e-7));

    // and the mirror: numpy reads what serialize_npy wrote, values intact
    auto out = serialize_npy(arr);
    std::ofstream os(ours, std::ios::binary);
    os.write(reinterpret_cast<const char*>(out.data()), std::streamsize(out.size()));
    os.close();
    CHECK(run_python(
        "import numpy as np\n"
        "a = np.load('" + ours.string() + "')\n"
        "b = np.arange(24, dtype=np.float32).reshape(2, 3, 4) / 7.0\n"
        "assert a.shape == b.shape and a.dtype == b.dtype\n"
        "assert (a == b).all()\n"));
}

TEST_CASE("npz loader reads a well-formed archive and validates counts") {
    Dataset ds = synth_blobs(3, 20, 12, 12, 3, 0.05);
    const fs::path path = temp_path("mk_ds.npz");
    save_npz_dataset(path.string(), ds);

    Dataset back = load_npz_dataset(path.string());
    CHECK(back.num_classes == 3);
    CHECK(back.train.size() == ds.train.size());
    CHECK(back.val.size() == ds.val.size());
    CHECK(back.test.size() == ds.test.size());
    // u8-quantized pixels round-trip exactly
    CHECK(std::memcmp(back.train.images.data(), ds.train.images.data(),
                      ds.train.images.size() * sizeof(float)) == 0);
    CHECK(back.train.labels == ds.train.labels);
}

TEST_CASE("npz loader reports missing members and count mismatches") {
    Dataset ds = synth_blobs(2, 10, 10, 10, 4, 0.05);
    // drop one member
    {
        std::vector<ZipEntry> entries;
        for (auto* split : {&ds.train, &ds.val, &ds.test}) {
            const std::size_t N = split->images.extent(0);
            NpyArray img;
            img.dtype = NpyDtype::U8;
            img.shape = {N, 10, 10};
            img.data.resize(N * 100);
            for (std::size_t i = 0; i < img.data.size(); ++i)
                img.data[i] = std::uint8_t(std::lround(split->images.data()[i] * 255));
            entries.push_back({split->name + "_images.npy", serialize_npy(img)});
            if (split->name == "val") continue; // omit val_labels
            NpyArray lab;
            lab.dtype = NpyDtype::I64;
            lab.shape = {split->labels.size()};
            lab.data.resize(split->labels.size() * 8);
            std::memcpy(lab.data.data(), split->labels.data(), lab.data.size());
            entries.push_back({split->name + "_labels.npy", serialize_npy(lab)});
        }
        const fs::path p = temp_path("mk_missing.npz");
        zip_write(p.string(), entries);
        try {
            load_npz_dataset(p.string());
            FAIL("expected DataError");
        } catch (const DataError& e) {
            CHECK(std::string(e.what()).find("val_labels") != std::string::npos);
        }
    }
    // label count mismatch
    {
        const fs::path good = temp_path("mk_good.npz");
        save_npz_dataset(good.string(), ds);
        std::vector<ZipEntry> entries;
        for (const std::string base :
             {"train_images", "train_labels", "val_images", "val_labels", "test_images",
              "test_labels"}) {
            auto bytes = zip_read_member(good.string(), base + ".npy");
            if (base == "train_labels") {
                NpyArray lab = parse_npy(bytes);
                lab.shape[0] -= 1;
                lab.data.resize(lab.data.size() - 8);
                bytes = serialize_npy(lab);
            }
            entries.push_back({base + ".npy", std::move(bytes)});
        }
        const fs::path p = temp_path("mk_mismatch.npz");
        zip_write(p.string(), entries);
        CHECK_THROWS_AS(load_npz_dataset(p.string()), DataError);
    }
}

TEST_CASE("hand-built two-image archive keeps exact pixel bytes") {
    // train: two 2x2 images; val/test: one each
    auto images = [](std::vector<std::uint8_t> px, std::size_t n) {
        NpyArray a;
        a.dtype = NpyDtype::U8;
        a.shape = {n, 2, 2};
        a.data = std::move(px);
        return serialize_npy(a);
    };
    auto labels = [](std::vector<std::int64_t> ls) {
        NpyArray a;
        a.dtype = NpyDtype::I64;
        a.shape = {ls.size()};
        a.data.resize(ls.size() * 8);
        std::memcpy(a.data.data(), ls.data(), a.data.size());
        return serialize_npy(a);
    };
    std::vector<ZipEntry> entries{
        {"train_images.npy", images({7, 20, 40, 80, 90, 100, 110, 120}, 2)},
        {"train_labels.npy", labels({0, 1})},
        {"val_images.npy", images({1, 2, 3, 4}, 1)},
        {"val_labels.npy", labels({0})},
        {"test_images.npy", images({5, 6, 7, 8}, 1)},
        {"test_labels.npy", labels({1})},
    };
    const fs::path p = temp_path("mk_hand.npz");
    zip_write(p.string(), entries);
    Dataset ds = load_npz_dataset(p.string());
    CHECK(ds.train.images.data()[0] == doctest::Approx(7.0 / 255.0));
    CHECK(ds.train.images.extent(1) == 1); // grayscale gains C=1
    CHECK(ds.train.labels == std::vector<std::int64_t>{0, 1});
}

TEST_CASE("zip rejects unsupported compression methods") {
    Dataset ds = synth_blobs(2, 10, 10, 10, 5, 0.05);
    const fs::path p = temp_path("mk_method.npz");
    save_npz_dataset(p.string(), ds);
    // patch the method field of the first local + central headers to 1 (shrunk)
    std::fstream f(p, std::ios::in | std::ios::out | std::ios::binary);
    std::vector<char> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    for (std::size_t i = 0; i + 4 < bytes.size(); ++i) {
        const bool local = std::memcmp(&bytes[i], "PK\x03\x04", 4) == 0;
        const bool central = std::memcmp(&bytes[i], "PK\x01\x02", 4) == 0;
        if (local) bytes[i + 8] = 1;
        if (central) bytes[i + 10] = 1;
    }
    f.seekp(0);
    f.write(bytes.data(), std::streamsize(bytes.size()));
    f.close();
    try {
        load_npz_dataset(p.string());
        FAIL("expected DataError");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("method") != std::string::npos);
    }
}

TEST_CASE("zip reader handles deflate members written by an external tool") {
    const fs::path p = temp_path("mk_deflate.npz");
    const bool ok = run_python(
        "import numpy as np\n"
        "np.savez_compressed('" + p.string() + "', a=np.arange(100, dtype=np.int64))\n");
    REQUIRE_MESSAGE(ok, "python3/numpy unavailable");
    auto bytes = zip_read_member(p.string(), "a.npy");
    NpyArray arr = parse_npy(bytes);
    CHECK(arr.shape == Shape{100});
    const std::int64_t* v = reinterpret_cast<const std::int64_t*>(arr.data.data());
    for (int i = 0; i < 100; ++i) CHECK(v[i] == i);
}

TEST_CASE("resize identity is a bit-exact passthrough") {
    std::mt19937_64 rng(6);
    auto x = Tensor<float>::randn({2, 3, 9, 7}, rng);
    auto y = resize_bilinear(x, 9, 7);
    CHECK(std::memcmp(x.data(), y.data(), x.size() * sizeof(float)) == 0);
}

TEST_CASE("resize of a constant image is constant") {
    auto x = Tensor<float>::full({1, 1, 5, 5}, 0.37f);
    auto y = resize_bilinear(x, 13, 11);
    for (std::size_t i = 0; i < y.size(); ++i) CHECK(y.data()[i] == doctest::Approx(0.37f));
}

TEST_CASE("resize 2x2 -> 4x4 matches hand-computed bilinear weights") {
    // align-corners=false: source coords for outputs are -0.25, 0.25, 0.75,
    // 1.25 -> clamped interpolation weights computed by hand
    auto x = Tensor<float>::from_vector({1, 1, 2, 2}, {0.0f, 1.0f, 2.0f, 3.0f});
    auto y = resize_bilinear(x, 4, 4);
    const float r0[4] = {0.0f, 0.25f, 0.75f, 1.0f}; // top-row horizontal mixes
    const float wy[4] = {0.0f, 0.25f, 0.75f, 1.0f}; // vertical weights per row
    float expect[16];
    for (int oy = 0; oy < 4; ++oy)
        for (int ox = 0; ox < 4; ++ox) {
            const float top = r0[ox];
            const float bot = 2.0f + r0[ox];
            expect[oy * 4 + ox] = top * (1 - wy[oy]) + bot * wy[oy];
        }
    for (int i = 0; i < 16; ++i) CHECK(y.data()[i] == doctest::Approx(expect[i]).epsilon(1e-6));
}

TEST_CASE("resize preserves value bounds") {
    std::mt19937_64 rng(7);
    auto x = Tensor<float>::uniform({1, 2, 6, 6}, rng, 0.2f, 0.9f);
    auto y = resize_bilinear(x, 17, 5);
    float lo = 1e9f, hi = -1e9f;
    for (std::size_t i = 0; i < x.size(); ++i) {
        lo = std::min(lo, x.data()[i]);
        hi = std::max(hi, x.data()[i]);
    }
    for (std::size_t i = 0; i < y.size(); ++i) {
        CHECK(y.data()[i] >= lo);
        CHECK(y.data()[i] <= hi);
    }
}

TEST_CASE("normalize maps [0,1] to [-1,1] and inverts") {
    auto x = Tensor<float>::from_vector({3}, {0.5f, 1.0f, 0.0f});
    auto y = normalize_images(x);
    CHECK(y.data()[0] == 0.0f);
    CHECK(y.data()[1] == 1.0f);
    CHECK(y.data()[2] == -1.0f);
    std::mt19937_64 rng(8);
    auto r = Tensor<float>::uniform({40}, rng, 0.0f, 1.0f);
    auto n = normalize_images(r);
    for (std::size_t i = 0; i < r.size(); ++i)
        CHECK(n.data()[i] * 0.5f + 0.5f == doctest::Approx(r.data()[i]).epsilon(1e-6));
}

TEST_CASE("synth_blobs is deterministic and balanced") {
    Dataset a = synth_blobs(4, 20, 16, 16, 123, 0.1);
    Dataset b = synth_blobs(4, 20, 16, 16, 123, 0.1);
    CHECK(std::memcmp(a.train.images.data(), b.train.images.data(),
                      a.train.images.size() * sizeof(float)) == 0);
    CHECK(a.train.labels == b.train.labels);
    Dataset c = synth_blobs(4, 20, 16, 16, 124, 0.1);
    CHECK(std::memcmp(a.train.images.data(), c.train.images.data(),
                      a.train.images.size() * sizeof(float)) != 0);

    // per-class counts balanced in every split
    for (const DatasetSplit* s : {&a.train, &a.val, &a.test}) {
        std::vector<int> counts(4, 0);
        for (auto l : s->labels) counts[std::size_t(l)]++;
        for (int cls = 1; cls < 4; ++cls) CHECK(counts[cls] == counts[0]);
    }
    CHECK(a.train.size() + a.val.size() + a.test.size() == 4 * 20);
}

TEST_CASE("a linear probe separates the blobs at low noise") {
    Dataset ds = synth_blobs(3, 40, 12, 12, 31, 0.05);
    const std::size_t dim = 144;
    std::mt19937_64 rng(1);
    Linear<float> probe(int(dim), 3, rng);
    NamedParams<float> params;
    probe.params("probe", params);
    AdamState<float> adam;
    TrainConfig cfg;
    cfg.lr = 5e-2;
    cfg.weight_decay = 0;

    auto flatten = [&](const DatasetSplit& s) {
        return reshape(s.images.clone(), {s.size(), dim});
    };
    auto xtr = flatten(ds.train);
    auto xval = flatten(ds.val);
    for (int epoch = 0; epoch < 60; ++epoch) {
        for (auto& [n, p] : params) p.zero_grad();
        cross_entropy(probe.forward(xtr), ds.train.labels).backward();
        adam_step(params, adam, cfg);
    }
    NoGradGuard ng;
    const double val_acc = accuracy(probe.forward(xval), ds.val.labels);
    CHECK(val_acc > 0.9);
}

TEST_CASE("loaded labels always lie in [0, C)") {
    Dataset ds = synth_blobs(5, 12, 10, 10, 77, 0.2);
    const fs::path p = temp_path("mk_range.npz");
    save_npz_dataset(p.string(), ds);
    Dataset back = load_npz_dataset(p.string());
    for (const DatasetSplit* s : {&back.train, &back.val, &back.test})
        for (auto l : s->labels) {
            CHECK(l >= 0);
            CHECK(l < back.num_classes);
        }
}

TEST_SUITE_END();
