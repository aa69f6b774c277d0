#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "medkan/tensor.hpp"

namespace medkan {

// --- NPY ---------------------------------------------------------------------

enum class NpyDtype : std::uint8_t { U8, I64, F32, F64 };

std::size_t npy_itemsize(NpyDtype d);
const char* npy_descr(NpyDtype d);

struct NpyArray {
    NpyDtype dtype = NpyDtype::U8;
    bool fortran_order = false; // always false after a successful parse
    Shape shape;
    std::vector<std::uint8_t> data;

    std::size_t numel() const { return shape_numel(shape); }
};

/// Accepts NPY versions 1.0 and 2.0, little-endian u8/i64/f32/f64,
/// C-contiguous only. Any inconsistency is a DataError; nothing is truncated
/// or coerced.
NpyArray parse_npy(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> serialize_npy(const NpyArray& arr);

// --- ZIP (stored + deflate, no ZIP64) -----------------------------------------

struct ZipEntry {
    std::string name;
    std::vector<std::uint8_t> bytes;
};

std::vector<std::string> zip_member_names(const std::string& path);
std::vector<std::uint8_t> zip_read_member(const std::string& path, const std::string& name);
/// Writes all entries with the stored (uncompressed) method.
void zip_write(const std::string& path, const std::vector<ZipEntry>& entries);

// --- datasets ------------------------------------------------------------------

struct DatasetSplit {
    Tensor<float> images; // [N,C,H,W], values in [0,1]
    std::vector<std::int64_t> labels;
    std::string name;

    std::size_t size() const { return labels.size(); }
};

struct Dataset {
    DatasetSplit train, val, test;
    int num_classes = 0;
    int channels = 0, height = 0, width = 0;
};

/// Loads a ZIP of NPY members named {train,val,test}_{images,labels}.npy.
/// Grayscale [N,H,W] images gain a channel axis; [N,H,W,3] becomes [N,3,H,W].
Dataset load_npz_dataset(const std::string& path);

/// Writes the dataset in the same NPZ layout (u8 images, i64 labels).
void save_npz_dataset(const std::string& path, const Dataset& data);

/// Per-channel bilinear resize, align-corners=false convention.
Tensor<float> resize_bilinear(const Tensor<float>& images, int out_h, int out_w);

/// x -> (x - 0.5) / 0.5, mapping [0,1] to [-1,1]. Applied at batch assembly.
template <class T> Tensor<T> normalize_images(const Tensor<T>& images);

/// Class-conditional Gaussian blobs with additive noise, quantized to the u8
/// grid so NPZ round-trips are exact. Splits 70/15/15 per class.
Dataset synth_blobs(int num_classes, int n_per_class, int height, int width, std::uint64_t seed,
                    double noise);

} // namespace medkan
