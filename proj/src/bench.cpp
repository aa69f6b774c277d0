#include "medkan/bench.hpp"

#include <algorithm>
#include <chrono>
#include <random>
#include <sstream>

#include "medkan/kan.hpp"
#include "medkan/threadpool.hpp"

namespace medkan {

namespace {

double median_us(std::vector<double>& xs) {
    std::sort(xs.begin(), xs.end());
    const std::size_t n = xs.size();
    return n % 2 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

template <class F>
double time_median_us(F&& fn, int warmup, int iters) {
    for (int i = 0; i < warmup; ++i) fn();
    std::vector<double> samples;
    samples.reserve(iters);
    for (int i = 0; i < iters; ++i) {
        const auto t0 = std::chrono::steady_clock::now();
        fn();
        const auto t1 = std::chrono::steady_clock::now();
        samples.push_back(std::chrono::duration<double, std::micro>(t1 - t0).count());
    }
    return median_us(samples);
}

struct CasePair {
    double fwd[2];    // [rbf, bspline]
    double fwdbwd[2];
};

} // namespace

std::vector<BenchRow> run_bench(const BenchOptions& opts) {
    const int prev_threads = num_threads();
    const int max_threads = opts.max_threads > 0 ? opts.max_threads : prev_threads;
    const int warmup = std::max(opts.warmup, 5);
    const int iters = std::max(opts.iters, 30);

    std::vector<BenchRow> rows;
    for (int K : opts.basis_counts) {
        for (int width : opts.widths) {
            for (int batch : opts.batches) {
                for (int threads : {1, max_threads}) {
                    set_num_threads(threads);
                    CasePair pair{};
                    for (int which = 0; which < 2; ++which) {
                        std::mt19937_64 rng(opts.seed);
                        Grid grid = which == 0
                                        ? Grid(RbfGrid::with_spacing_sigma(K, -2.0, 2.0))
                                        : Grid(BsplineGrid(K, 3, -2.0, 2.0));
                        KanLinear<float> layer(width, width, grid, rng);
                        Tensor<float> x = Tensor<float>::uniform(
                            {std::size_t(batch), std::size_t(width)}, rng, -1.8f, 1.8f);
                        {
                            NoGradGuard ng;
                            pair.fwd[which] = time_median_us(
                                [&] { Tensor<float> y = layer.forward(x); }, warmup, iters);
                        }
                        x.set_requires_grad(true);
                        pair.fwdbwd[which] = time_median_us(
                            [&] {
                                Tensor<float> loss = sum(layer.forward(x));
                                loss.backward();
                                x.zero_grad();
                                layer.spline_w.zero_grad();
                                if (layer.base_w.defined()) layer.base_w.zero_grad();
                                if (layer.bias.defined()) layer.bias.zero_grad();
                            },
                            warmup, iters);
                    }
                    for (int which = 0; which < 2; ++which) {
                        BenchRow r;
                        r.basis = which == 0 ? "rbf" : "bspline";
                        r.num_basis = K;
                        r.width = width;
                        r.batch = batch;
                        r.threads = threads;
                        r.forward_us = pair.fwd[which];
                        r.forward_backward_us = pair.fwdbwd[which];
                        r.ratio_forward = pair.fwd[0] / pair.fwd[1];
                        r.ratio_forward_backward = pair.fwdbwd[0] / pair.fwdbwd[1];
                        rows.push_back(std::move(r));
                    }
                }
            }
        }
    }
    set_num_threads(prev_threads);
    return rows;
}

std::string bench_csv_header() {
    return "basis,num_basis,width,batch,threads,forward_us,forward_backward_us,"
           "ratio_forward,ratio_forward_backward";
}

std::string bench_csv(const std::vector<BenchRow>& rows) {
    std::ostringstream os;
    os << bench_csv_header() << "\n";
    os.setf(std::ios::fixed);
    for (const BenchRow& r : rows) {
        os.precision(2);
        os << r.basis << "," << r.num_basis << "," << r.width << "," << r.batch << ","
           << r.threads << "," << r.forward_us << "," << r.forward_backward_us << ",";
        os.precision(4);
        os << r.ratio_forward << "," << r.ratio_forward_backward << "\n";
    }
    return os.str();
}

} // namespace medkan
