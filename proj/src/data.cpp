#include "medkan/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

#include <zlib.h>

namespace medkan {

std::size_t npy_itemsize(NpyDtype d) {
    switch (d) {
        case NpyDtype::U8: return 1;
        case NpyDtype::I64: return 8;
        case NpyDtype::F32: return 4;
        case NpyDtype::F64: return 8;
    }
    return 0;
}

const char* npy_descr(NpyDtype d) {
    switch (d) {
        case NpyDtype::U8: return "|u1";
        case NpyDtype::I64: return "<i8";
        case NpyDtype::F32: return "<f4";
        case NpyDtype::F64: return "<f8";
    }
    return "?";
}

namespace {

NpyDtype dtype_from_descr(const std::string& descr) {
    // leading byte-order mark: '<' little, '|' none, '=' native (little here)
    std::string d = descr;
    if (!d.empty() && (d[0] == '<' || d[0] == '|' || d[0] == '=')) d = d.substr(1);
    if (d == "u1") return NpyDtype::U8;
    if (d == "i8") return NpyDtype::I64;
    if (d == "f4") return NpyDtype::F32;
    if (d == "f8") return NpyDtype::F64;
    if (!descr.empty() && descr[0] == '>')
        throw DataError("npy: big-endian data unsupported (descr '" + descr + "')");
    throw DataError("npy: unsupported dtype descr '" + descr + "'");
}

// minimal parser for the python-dict header written by array libraries
std::string header_value(const std::string& header, const std::string& key) {
    const std::string quoted = "'" + key + "'";
    std::size_t at = header.find(quoted);
    if (at == std::string::npos) throw DataError("npy: header missing key " + quoted);
    at = header.find(':', at + quoted.size());
    if (at == std::string::npos) throw DataError("npy: malformed header near " + quoted);
    ++at;
    while (at < header.size() && header[at] == ' ') ++at;
    if (at >= header.size()) throw DataError("npy: malformed header near " + quoted);
    if (header[at] == '\'') {
        std::size_t end = header.find('\'', at + 1);
        if (end == std::string::npos) throw DataError("npy: unterminated string in header");
        return header.substr(at + 1, end - at - 1);
    }
    if (header[at] == '(') {
        std::size_t end = header.find(')', at);
        if (end == std::string::npos) throw DataError("npy: unterminated tuple in header");
        return header.substr(at, end - at + 1);
    }
    std::size_t end = header.find_first_of(",}", at);
    if (end == std::string::npos) throw DataError("npy: malformed header value for " + quoted);
    std::string v = header.substr(at, end - at);
    while (!v.empty() && v.back() == ' ') v.pop_back();
    return v;
}

Shape parse_shape_tuple(const std::string& t) {
    if (t.size() < 2 || t.front() != '(' || t.back() != ')')
        throw DataError("npy: bad shape tuple '" + t + "'");
    Shape shape;
    std::size_t i = 1;
    while (i < t.size() - 1) {
        while (i < t.size() - 1 && (t[i] == ' ' || t[i] == ',')) ++i;
        if (i >= t.size() - 1) break;
        std::size_t j = i;
        while (j < t.size() - 1 && t[j] >= '0' && t[j] <= '9') ++j;
        if (j == i) throw DataError("npy: bad shape tuple '" + t + "'");
        shape.push_back(std::stoull(t.substr(i, j - i)));
        i = j;
    }
    return shape;
}

} // namespace

NpyArray parse_npy(std::span<const std::uint8_t> bytes) {
    static const std::uint8_t magic[6] = {0x93, 'N', 'U', 'M', 'P', 'Y'};
    if (bytes.size() < 10 || std::memcmp(bytes.data(), magic, 6) != 0)
        throw DataError("npy: bad magic");
    const int major = bytes[6];
    const int minor = bytes[7];
    if ((major != 1 && major != 2) || minor != 0)
        throw DataError("npy: unsupported version " + std::to_string(major) + "." +
                        std::to_string(minor));
    std::size_t header_len, header_off;
    if (major == 1) {
        header_len = bytes[8] | (std::size_t(bytes[9]) << 8);
        header_off = 10;
    } else {
        if (bytes.size() < 12) throw DataError("npy: truncated header length");
        header_len = bytes[8] | (std::size_t(bytes[9]) << 8) | (std::size_t(bytes[10]) << 16) |
                     (std::size_t(bytes[11]) << 24);
        header_off = 12;
    }
    if (bytes.size() < header_off + header_len) throw DataError("npy: truncated header");
    const std::string header(reinterpret_cast<const char*>(bytes.data()) + header_off, header_len);

    NpyArray arr;
    arr.dtype = dtype_from_descr(header_value(header, "descr"));
    const std::string forder = header_value(header, "fortran_order");
    if (forder == "True")
        throw DataError("npy: fortran_order=True unsupported; re-save the array C-contiguous");
    if (forder != "False") throw DataError("npy: bad fortran_order value '" + forder + "'");
    arr.shape = parse_shape_tuple(header_value(header, "shape"));

    const std::size_t want = arr.numel() * npy_itemsize(arr.dtype);
    const std::size_t have = bytes.size() - header_off - header_len;
    if (want != have)
        throw DataError("npy: payload length mismatch: shape " + shape_str(arr.shape) +
                        " wants " + std::to_string(want) + " bytes, file carries " +
                        std::to_string(have));
    arr.data.assign(bytes.begin() + header_off + header_len, bytes.end());
    return arr;
}

std::vector<std::uint8_t> serialize_npy(const NpyArray& arr) {
    std::string dict = "{'descr': '" + std::string(npy_descr(arr.dtype)) +
                       "', 'fortran_order': False, 'shape': (";
    for (std::size_t i = 0; i < arr.shape.size(); ++i) {
        dict += std::to_string(arr.shape[i]);
        if (arr.shape.size() == 1 || i + 1 < arr.shape.size()) dict += ",";
        if (i + 1 < arr.shape.size()) dict += " ";
    }
    dict += "), }";
    // pad so the data section starts 64-byte aligned
    std::size_t unpadded = 10 + dict.size() + 1;
    std::size_t pad = (64 - unpadded % 64) % 64;
    dict += std::string(pad, ' ');
    dict += '\n';

    std::vector<std::uint8_t> out;
    out.reserve(10 + dict.size() + arr.data.size());
    const std::uint8_t magic[8] = {0x93, 'N', 'U', 'M', 'P', 'Y', 1, 0};
    out.insert(out.end(), magic, magic + 8);
    out.push_back(std::uint8_t(dict.size() & 0xff));
    out.push_back(std::uint8_t(dict.size() >> 8));
    out.insert(out.end(), dict.begin(), dict.end());
    if (arr.data.size() != arr.numel() * npy_itemsize(arr.dtype))
        throw DataError("npy: array byte count does not match its shape");
    out.insert(out.end(), arr.data.begin(), arr.data.end());
    return out;
}

// --- ZIP ------------------------------------------------------------------------

namespace {

struct ZipCentralEntry {
    std::string name;
    std::uint16_t method;
    std::uint32_t crc, comp_size, uncomp_size, local_offset;
};

std::uint32_t rd32(const std::uint8_t* p) {
    return p[0] | (std::uint32_t(p[1]) << 8) | (std::uint32_t(p[2]) << 16) |
           (std::uint32_t(p[3]) << 24);
}
std::uint16_t rd16(const std::uint8_t* p) { return std::uint16_t(p[0] | (p[1] << 8)); }

std::vector<std::uint8_t> read_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary | std::ios::ate);
    if (!is) throw DataError("cannot open '" + path + "'");
    const std::streamsize n = is.tellg();
    is.seekg(0);
    std::vector<std::uint8_t> bytes(static_cast<std::size_t>(n));
    is.read(reinterpret_cast<char*>(bytes.data()), n);
    if (!is) throw DataError("read failed for '" + path + "'");
    return bytes;
}

std::vector<ZipCentralEntry> zip_central_dir(const std::vector<std::uint8_t>& bytes,
                                             const std::string& path) {
    if (bytes.size() < 22) throw DataError("zip: '" + path + "' too small to be an archive");
    // locate end-of-central-directory from the back (comment may follow)
    std::size_t eocd = std::string::npos;
    const std::size_t lowest = bytes.size() > 22 + 65535 ? bytes.size() - 22 - 65535 : 0;
    for (std::size_t i = bytes.size() - 22 + 1; i-- > lowest;) {
        if (rd32(&bytes[i]) == 0x06054b50) { eocd = i; break; }
    }
    if (eocd == std::string::npos) throw DataError("zip: no end-of-central-directory in '" + path + "'");
    const std::uint16_t count = rd16(&bytes[eocd + 10]);
    std::uint32_t cd_off = rd32(&bytes[eocd + 16]);
    std::vector<ZipCentralEntry> entries;
    entries.reserve(count);
    std::size_t p = cd_off;
    for (std::uint16_t i = 0; i < count; ++i) {
        if (p + 46 > bytes.size() || rd32(&bytes[p]) != 0x02014b50)
            throw DataError("zip: corrupt central directory in '" + path + "'");
        ZipCentralEntry e;
        e.method = rd16(&bytes[p + 10]);
        e.crc = rd32(&bytes[p + 16]);
        e.comp_size = rd32(&bytes[p + 20]);
        e.uncomp_size = rd32(&bytes[p + 24]);
        const std::uint16_t name_len = rd16(&bytes[p + 28]);
        const std::uint16_t extra_len = rd16(&bytes[p + 30]);
        const std::uint16_t comment_len = rd16(&bytes[p + 32]);
        e.local_offset = rd32(&bytes[p + 42]);
        if (p + 46 + name_len > bytes.size())
            throw DataError("zip: corrupt entry name in '" + path + "'");
        e.name.assign(reinterpret_cast<const char*>(&bytes[p + 46]), name_len);
        entries.push_back(std::move(e));
        p += 46u + name_len + extra_len + comment_len;
    }
    return entries;
}

std::vector<std::uint8_t> zip_extract(const std::vector<std::uint8_t>& bytes,
                                      const ZipCentralEntry& e, const std::string& path) {
    std::size_t p = e.local_offset;
    if (p + 30 > bytes.size() || rd32(&bytes[p]) != 0x04034b50)
        throw DataError("zip: corrupt local header for '" + e.name + "'");
    const std::uint16_t name_len = rd16(&bytes[p + 26]);
    const std::uint16_t extra_len = rd16(&bytes[p + 28]);
    const std::size_t data_off = p + 30 + name_len + extra_len;
    if (data_off + e.comp_size > bytes.size())
        throw DataError("zip: truncated member '" + e.name + "' in '" + path + "'");

    std::vector<std::uint8_t> out;
    if (e.method == 0) {
        if (e.comp_size != e.uncomp_size)
            throw DataError("zip: stored member '" + e.name + "' with inconsistent sizes");
        out.assign(bytes.begin() + data_off, bytes.begin() + data_off + e.comp_size);
    } else if (e.method == 8) {
        out.resize(e.uncomp_size);
        z_stream zs{};
        if (inflateInit2(&zs, -15) != Z_OK) throw RuntimeError("zlib: inflateInit failed");
        zs.next_in = const_cast<Bytef*>(bytes.data() + data_off);
        zs.avail_in = e.comp_size;
        zs.next_out = out.data();
        zs.avail_out = e.uncomp_size;
        const int rc = inflate(&zs, Z_FINISH);
        inflateEnd(&zs);
        if (rc != Z_STREAM_END || zs.total_out != e.uncomp_size)
            throw DataError("zip: deflate stream for '" + e.name + "' is corrupt");
    } else {
        throw DataError("zip: member '" + e.name + "' uses unsupported compression method " +
                        std::to_string(e.method) + " (only stored and deflate)");
    }
    const auto crc = std::uint32_t(crc32(0, out.data(), uInt(out.size())));
    if (crc != e.crc)
        throw DataError("zip: CRC mismatch for member '" + e.name + "'");
    return out;
}

void wr16(std::vector<std::uint8_t>& v, std::uint16_t x) {
    v.push_back(x & 0xff);
    v.push_back(x >> 8);
}
void wr32(std::vector<std::uint8_t>& v, std::uint32_t x) {
    for (int i = 0; i < 4; ++i) v.push_back((x >> (8 * i)) & 0xff);
}

} // namespace

std::vector<std::string> zip_member_names(const std::string& path) {
    auto bytes = read_file(path);
    std::vector<std::string> names;
    for (auto& e : zip_central_dir(bytes, path)) names.push_back(e.name);
    return names;
}

std::vector<std::uint8_t> zip_read_member(const std::string& path, const std::string& name) {
    auto bytes = read_file(path);
    for (auto& e : zip_central_dir(bytes, path))
        if (e.name == name) return zip_extract(bytes, e, path);
    throw DataError("zip: archive '" + path + "' has no member '" + name + "'");
}

void zip_write(const std::string& path, const std::vector<ZipEntry>& entries) {
    std::vector<std::uint8_t> out;
    std::vector<std::uint32_t> offsets;
    std::vector<std::uint32_t> crcs;
    for (const ZipEntry& e : entries) {
        offsets.push_back(std::uint32_t(out.size()));
        const auto crc = std::uint32_t(crc32(0, e.bytes.data(), uInt(e.bytes.size())));
        crcs.push_back(crc);
        wr32(out, 0x04034b50);
        wr16(out, 20);    // version needed
        wr16(out, 0);     // flags
        wr16(out, 0);     // method: stored
        wr16(out, 0);     // mod time
        wr16(out, 0x21);  // mod date (1980-01-01)
        wr32(out, crc);
        wr32(out, std::uint32_t(e.bytes.size()));
        wr32(out, std::uint32_t(e.bytes.size()));
        wr16(out, std::uint16_t(e.name.size()));
        wr16(out, 0); // extra
        out.insert(out.end(), e.name.begin(), e.name.end());
        out.insert(out.end(), e.bytes.begin(), e.bytes.end());
    }
    const std::uint32_t cd_start = std::uint32_t(out.size());
    for (std::size_t i = 0; i < entries.size(); ++i) {
        const ZipEntry& e = entries[i];
        wr32(out, 0x02014b50);
        wr16(out, 20); // version made by
        wr16(out, 20); // version needed
        wr16(out, 0);
        wr16(out, 0);
        wr16(out, 0);
        wr16(out, 0x21);
        wr32(out, crcs[i]);
        wr32(out, std::uint32_t(e.bytes.size()));
        wr32(out, std::uint32_t(e.bytes.size()));
        wr16(out, std::uint16_t(e.name.size()));
        wr16(out, 0);
        wr16(out, 0);
        wr16(out, 0); // disk number
        wr16(out, 0); // internal attrs
        wr32(out, 0); // external attrs
        wr32(out, offsets[i]);
        out.insert(out.end(), e.name.begin(), e.name.end());
    }
    const std::uint32_t cd_size = std::uint32_t(out.size()) - cd_start;
    wr32(out, 0x06054b50);
    wr16(out, 0);
    wr16(out, 0);
    wr16(out, std::uint16_t(entries.size()));
    wr16(out, std::uint16_t(entries.size()));
    wr32(out, cd_size);
    wr32(out, cd_start);
    wr16(out, 0); // no comment

    std::ofstream os(path, std::ios::binary);
    if (!os) throw RuntimeError("cannot open '" + path + "' for writing");
    os.write(reinterpret_cast<const char*>(out.data()), std::streamsize(out.size()));
    if (!os) throw RuntimeError("write failed for '" + path + "'");
}

// --- dataset loading ----------------------------------------------------------------

namespace {

Tensor<float> images_from_npy(const NpyArray& arr, const std::string& member) {
    if (arr.dtype != NpyDtype::U8)
        throw DataError("dataset: " + member + " must be uint8, got descr " +
                        npy_descr(arr.dtype));
    std::size_t N, C, H, W;
    bool hwc = false;
    if (arr.shape.size() == 3) {
        N = arr.shape[0]; C = 1; H = arr.shape[1]; W = arr.shape[2];
    } else if (arr.shape.size() == 4) {
        // MedMNIST RGB layout is [N,H,W,3]
        N = arr.shape[0]; H = arr.shape[1]; W = arr.shape[2]; C = arr.shape[3];
        hwc = true;
        if (C != 1 && C != 3)
            throw DataError("dataset: " + member + " has " + std::to_string(C) +
                            " trailing channels; expected 1 or 3");
    } else {
        throw DataError("dataset: " + member + " must be [N,H,W] or [N,H,W,C], got " +
                        shape_str(arr.shape));
    }
    Tensor<float> out = Tensor<float>::zeros({N, C, H, W});
    float* dst = out.data_mut();
    const std::uint8_t* src = arr.data.data();
    constexpr float inv = 1.0f / 255.0f;
    if (!hwc) {
        for (std::size_t i = 0; i < N * H * W; ++i) dst[i] = float(src[i]) * inv;
    } else {
        for (std::size_t n = 0; n < N; ++n)
            for (std::size_t h = 0; h < H; ++h)
                for (std::size_t w = 0; w < W; ++w)
                    for (std::size_t c = 0; c < C; ++c)
                        dst[((n * C + c) * H + h) * W + w] =
                            float(src[((n * H + h) * W + w) * C + c]) * inv;
    }
    return out;
}

std::vector<std::int64_t> labels_from_npy(const NpyArray& arr, const std::string& member) {
    std::size_t N;
    if (arr.shape.size() == 1) N = arr.shape[0];
    else if (arr.shape.size() == 2 && arr.shape[1] == 1) N = arr.shape[0];
    else
        throw DataError("dataset: " + member + " must be [N] or [N,1], got " +
                        shape_str(arr.shape));
    std::vector<std::int64_t> labels(N);
    if (arr.dtype == NpyDtype::U8) {
        for (std::size_t i = 0; i < N; ++i) labels[i] = arr.data[i];
    } else if (arr.dtype == NpyDtype::I64) {
        std::memcpy(labels.data(), arr.data.data(), N * 8);
    } else {
        throw DataError("dataset: " + member + " must be uint8 or int64 labels");
    }
    return labels;
}

} // namespace

Dataset load_npz_dataset(const std::string& path) {
    auto bytes = read_file(path);
    auto entries = zip_central_dir(bytes, path);
    auto member = [&](const std::string& base) -> NpyArray {
        for (auto& e : entries) {
            if (e.name == base + ".npy" || e.name == base) {
                auto raw = zip_extract(bytes, e, path);
                return parse_npy(raw);
            }
        }
        throw DataError("dataset: archive '" + path + "' is missing member '" + base + ".npy'");
    };

    Dataset ds;
    std::int64_t max_label = -1;
    for (auto* split : {&ds.train, &ds.val, &ds.test}) {
        const std::string name = split == &ds.train ? "train" : (split == &ds.val ? "val" : "test");
        split->name = name;
        split->images = images_from_npy(member(name + "_images"), name + "_images");
        split->labels = labels_from_npy(member(name + "_labels"), name + "_labels");
        if (split->images.extent(0) != split->labels.size())
            throw DataError("dataset: " + name + " has " +
                            std::to_string(split->images.extent(0)) + " images but " +
                            std::to_string(split->labels.size()) + " labels");
        for (std::int64_t l : split->labels) {
            if (l < 0) throw DataError("dataset: negative label in " + name);
            max_label = std::max(max_label, l);
        }
    }
    ds.num_classes = int(max_label + 1);
    if (ds.num_classes < 2) throw DataError("dataset: needs at least two classes");
    ds.channels = int(ds.train.images.extent(1));
    ds.height = int(ds.train.images.extent(2));
    ds.width = int(ds.train.images.extent(3));
    for (auto* split : {&ds.val, &ds.test}) {
        if (int(split->images.extent(1)) != ds.channels ||
            int(split->images.extent(2)) != ds.height ||
            int(split->images.extent(3)) != ds.width)
            throw DataError("dataset: split geometry differs from train split");
    }
    return ds;
}

void save_npz_dataset(const std::string& path, const Dataset& data) {
    std::vector<ZipEntry> entries;
    auto add_split = [&](const DatasetSplit& s, const std::string& name) {
        const std::size_t N = s.images.extent(0), C = s.images.extent(1);
        const std::size_t H = s.images.extent(2), W = s.images.extent(3);
        NpyArray img;
        img.dtype = NpyDtype::U8;
        img.shape = C == 1 ? Shape{N, H, W} : Shape{N, H, W, C};
        img.data.resize(img.numel());
        const float* src = s.images.data();
        if (C == 1) {
            for (std::size_t i = 0; i < N * H * W; ++i)
                img.data[i] = std::uint8_t(std::lround(std::clamp(src[i], 0.0f, 1.0f) * 255.0f));
        } else {
            for (std::size_t n = 0; n < N; ++n)
                for (std::size_t h = 0; h < H; ++h)
                    for (std::size_t w = 0; w < W; ++w)
                        for (std::size_t c = 0; c < C; ++c)
                            img.data[((n * H + h) * W + w) * C + c] = std::uint8_t(
                                std::lround(std::clamp(src[((n * C + c) * H + h) * W + w],
                                                       0.0f, 1.0f) * 255.0f));
        }
        entries.push_back({name + "_images.npy", serialize_npy(img)});
        NpyArray lab;
        lab.dtype = NpyDtype::I64;
        lab.shape = {s.labels.size()};
        lab.data.resize(s.labels.size() * 8);
        std::memcpy(lab.data.data(), s.labels.data(), lab.data.size());
        entries.push_back({name + "_labels.npy", serialize_npy(lab)});
    };
    add_split(data.train, "train");
    add_split(data.val, "val");
    add_split(data.test, "test");
    zip_write(path, entries);
}

// --- preprocessing -------------------------------------------------------------------

Tensor<float> resize_bilinear(const Tensor<float>& images, int out_h, int out_w) {
    if (images.rank() != 4)
        throw ShapeError("resize_bilinear: expected [N,C,H,W], got " + shape_str(images.shape()));
    if (out_h < 1 || out_w < 1) throw ConfigError("resize_bilinear: target must be >= 1");
    const std::size_t N = images.extent(0), C = images.extent(1);
    const int H = int(images.extent(2)), W = int(images.extent(3));
    if (H == out_h && W == out_w) {
        Tensor<float> out = Tensor<float>::zeros(images.shape());
        std::memcpy(out.data_mut(), images.data(), images.size() * sizeof(float));
        return out;
    }
    Tensor<float> out =
        Tensor<float>::zeros({N, C, std::size_t(out_h), std::size_t(out_w)});
    const float sy = float(H) / float(out_h);
    const float sx = float(W) / float(out_w);
    const float* src = images.data();
    float* dst = out.data_mut();
    for (std::size_t p = 0; p < N * C; ++p) {
        const float* plane = src + p * std::size_t(H) * W;
        float* oplane = dst + p * std::size_t(out_h) * out_w;
        for (int oy = 0; oy < out_h; ++oy) {
            float fy = (float(oy) + 0.5f) * sy - 0.5f;
            fy = std::clamp(fy, 0.0f, float(H - 1));
            const int y0 = int(fy);
            const int y1 = std::min(y0 + 1, H - 1);
            const float wy = fy - float(y0);
            for (int ox = 0; ox < out_w; ++ox) {
                float fx = (float(ox) + 0.5f) * sx - 0.5f;
                fx = std::clamp(fx, 0.0f, float(W - 1));
                const int x0 = int(fx);
                const int x1 = std::min(x0 + 1, W - 1);
                const float wx = fx - float(x0);
                const float top = plane[y0 * W + x0] * (1 - wx) + plane[y0 * W + x1] * wx;
                const float bot = plane[y1 * W + x0] * (1 - wx) + plane[y1 * W + x1] * wx;
                oplane[oy * out_w + ox] = top * (1 - wy) + bot * wy;
            }
        }
    }
    return out;
}

template <class T>
Tensor<T> normalize_images(const Tensor<T>& images) {
    Tensor<T> out = Tensor<T>::zeros(images.shape());
    const T* src = images.data();
    T* dst = out.data_mut();
    for (std::size_t i = 0; i < images.size(); ++i) dst[i] = (src[i] - T(0.5)) / T(0.5);
    return out;
}

template Tensor<float> normalize_images<float>(const Tensor<float>&);
template Tensor<double> normalize_images<double>(const Tensor<double>&);

// --- synthetic data -------------------------------------------------------------------

Dataset synth_blobs(int num_classes, int n_per_class, int height, int width, std::uint64_t seed,
                    double noise) {
    if (num_classes < 2) throw ConfigError("synth_blobs: need at least 2 classes");
    if (n_per_class < 3) throw ConfigError("synth_blobs: need at least 3 samples per class");
    if (height < 8 || width < 8) throw ConfigError("synth_blobs: image size must be >= 8");

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> jitter(-1.5, 1.5);

    const double m = std::min(height, width);
    const int n_train = int(std::lround(0.70 * n_per_class));
    const int n_val = int(std::lround(0.15 * n_per_class));
    const int n_test = n_per_class - n_train - n_val;

    Dataset ds;
    ds.num_classes = num_classes;
    ds.channels = 1;
    ds.height = height;
    ds.width = width;
    auto init_split = [&](DatasetSplit& s, const char* name, int per_class) {
        s.name = name;
        s.images = Tensor<float>::zeros(
            {std::size_t(per_class) * num_classes, 1, std::size_t(height), std::size_t(width)});
        s.labels.assign(std::size_t(per_class) * num_classes, 0);
    };
    init_split(ds.train, "train", n_train);
    init_split(ds.val, "val", n_val);
    init_split(ds.test, "test", n_test);

    for (int c = 0; c < num_classes; ++c) {
        const double angle = 2.0 * 3.14159265358979323846 * c / num_classes;
        const double cx0 = width / 2.0 + 0.27 * m * std::cos(angle);
        const double cy0 = height / 2.0 + 0.27 * m * std::sin(angle);
        const double sigma = (0.10 + 0.025 * (c % 4)) * m;
        for (int i = 0; i < n_per_class; ++i) {
            DatasetSplit* split;
            int idx_in_split;
            if (i < n_train) { split = &ds.train; idx_in_split = i; }
            else if (i < n_train + n_val) { split = &ds.val; idx_in_split = i - n_train; }
            else { split = &ds.test; idx_in_split = i - n_train - n_val; }
            const std::size_t row = std::size_t(c) * (split == &ds.train ? n_train
                                     : split == &ds.val ? n_val : n_test) + idx_in_split;
            const double cx = cx0 + jitter(rng);
            const double cy = cy0 + jitter(rng);
            float* img = split->images.data_mut() + row * std::size_t(height) * width;
            for (int y = 0; y < height; ++y)
                for (int x = 0; x < width; ++x) {
                    const double d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
                    double v = std::exp(-d2 / (2.0 * sigma * sigma));
                    v += noise * gauss(rng);
                    v = std::clamp(v, 0.0, 1.0);
                    // quantize to the u8 grid exactly as the loader rescales,
                    // so NPZ export round-trips bit-exactly
                    img[y * width + x] = float(std::lround(v * 255.0)) * (1.0f / 255.0f);
                }
            split->labels[row] = c;
        }
    }
    return ds;
}

} // namespace medkan
