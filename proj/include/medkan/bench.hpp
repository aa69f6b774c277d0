#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace medkan {

struct BenchOptions {
    std::vector<int> basis_counts{4, 8, 16};
    std::vector<int> widths{64, 256};
    std::vector<int> batches{64, 1024};
    int max_threads = 0; // 0 = current pool size
    int warmup = 5;      // >= 5 per the report contract
    int iters = 31;      // >= 30 measured iterations, median reported
    std::uint64_t seed = 42;
};

struct BenchRow {
    std::string basis; // "rbf" | "bspline"
    int num_basis = 0, width = 0, batch = 0, threads = 0;
    double forward_us = 0, forward_backward_us = 0;
    // rbf time over bspline time for the same (K, width, batch, threads)
    double ratio_forward = 0, ratio_forward_backward = 0;
};

/// Times KANLinear forward and forward+backward for RBF vs degree-3 B-spline
/// at equal basis count and equal weight count, across the sweep grid and
/// thread settings {1, max}. Medians over `iters` measured iterations.
std::vector<BenchRow> run_bench(const BenchOptions& opts);

std::string bench_csv_header();
std::string bench_csv(const std::vector<BenchRow>& rows);

} // namespace medkan
