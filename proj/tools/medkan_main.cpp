// medkan command-line tool. Talks to the library exclusively through the
// C API in medkan/medkan.h; the only other dependencies are the CLI and
// JSON single-header utilities.

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "medkan/medkan.h"

namespace {

using nlohmann::json;

const char* status_kind(mk_status s) {
    switch (s) {
        case MK_OK: return "ok";
        case MK_FAIL: return "fail";
        case MK_CONFIG_ERROR: return "config";
        case MK_DATA_ERROR: return "data";
        case MK_RUNTIME_ERROR: return "runtime";
    }
    return "unknown";
}

int fail_with(mk_status s) {
    std::fprintf(stderr, "error_code=%s message=%s\n", status_kind(s), mk_last_error());
    return int(s);
}

int resolve_threads(int flag_value) {
    if (flag_value > 0) return flag_value;
    if (const char* env = std::getenv("MEDKAN_THREADS")) {
        const int n = std::atoi(env);
        if (n > 0) return n;
    }
    return 0; // hardware concurrency
}

std::string read_file(const std::string& path, bool& ok) {
    std::ifstream is(path, std::ios::binary);
    if (!is) { ok = false; return {}; }
    std::ostringstream os;
    os << is.rdbuf();
    ok = true;
    return os.str();
}

struct OwnedString {
    char* p = nullptr;
    ~OwnedString() { mk_string_free(p); }
    std::string str() const { return p ? std::string(p) : std::string(); }
};

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"MedKAN: RBF Kolmogorov-Arnold image classifier"};
    app.require_subcommand(1);

    int threads = 0;
    app.add_option("--threads", threads, "worker threads (0 = hardware, env MEDKAN_THREADS)");

    // train
    auto* train = app.add_subcommand("train", "train a model from a run-config JSON");
    std::string config_path, data_override, out_override;
    int runs_override = -1;
    long long seed_override = -1;
    train->add_option("--config", config_path, "run config JSON file")->required();
    train->add_option("--data", data_override, "dataset NPZ path (overrides config)");
    train->add_option("--out", out_override, "output directory (overrides config)");
    train->add_option("--runs", runs_override, "repeat with seeds seed..seed+R-1");
    train->add_option("--seed", seed_override, "base seed (overrides config)");

    // eval
    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
    std::string ckpt_path, data_path, split = "test", dump_logits;
    eval->add_option("--ckpt", ckpt_path, "checkpoint file")->required();
    eval->add_option("--data", data_path, "dataset NPZ path or synth:{...}")->required();
    eval->add_option("--split", split, "train|val|test (default test)");
    eval->add_option("--dump-logits", dump_logits, "write logits to this NPY file");

    // gradcheck
    auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient suite (f64)");
    bool selftest_corrupt = false;
    gradcheck->add_flag("--selftest-corrupt", selftest_corrupt,
                        "also run a deliberately broken backward rule (must fail)");

    // bench
    auto* bench = app.add_subcommand("bench", "RBF vs B-spline KANLinear throughput sweep");
    std::vector<int> bench_ks, bench_widths, bench_batches;
    int bench_iters = 31, bench_warmup = 5;
    unsigned long long bench_seed = 42;
    bench->add_option("--k", bench_ks, "basis counts (default 4 8 16)");
    bench->add_option("--width", bench_widths, "layer widths (default 64 256)");
    bench->add_option("--batch", bench_batches, "batch sizes (default 64 1024)");
    bench->add_option("--iters", bench_iters, "measured iterations (>= 30)");
    bench->add_option("--warmup", bench_warmup, "warmup iterations (>= 5)");
    bench->add_option("--seed", bench_seed, "input/weight seed");

    // gradcam
    auto* gradcam = app.add_subcommand("gradcam", "class-activation heatmap for one sample");
    std::string gc_ckpt, gc_data, gc_split = "test", gc_out;
    int gc_index = 0, gc_class = -1, gc_layer = -1;
    gradcam->add_option("--ckpt", gc_ckpt, "checkpoint file")->required();
    gradcam->add_option("--data", gc_data, "dataset NPZ path or synth:{...}")->required();
    gradcam->add_option("--split", gc_split, "train|val|test (default test)");
    gradcam->add_option("--index", gc_index, "sample index within the split")->required();
    gradcam->add_option("--class", gc_class, "target class (default: the sample's label)");
    gradcam->add_option("--layer", gc_layer, "stage index (default: last stage)");
    gradcam->add_option("--out", gc_out, "output prefix for .ppm and .f32")->required();

    // make-synth
    auto* synth = app.add_subcommand("make-synth", "write a synthetic blob dataset as NPZ");
    int sy_classes = 4, sy_per_class = 128, sy_size = 28;
    double sy_noise = 0.1;
    unsigned long long sy_seed = 1;
    std::string sy_out;
    synth->add_option("--classes", sy_classes, "number of classes");
    synth->add_option("--per-class", sy_per_class, "samples per class before splitting");
    synth->add_option("--size", sy_size, "image height/width");
    synth->add_option("--noise", sy_noise, "additive noise level");
    synth->add_option("--seed", sy_seed, "generator seed");
    synth->add_option("--out", sy_out, "output NPZ path")->required();

    for (CLI::App* sub : app.get_subcommands({})) sub->fallthrough();

    CLI11_PARSE(app, argc, argv);

    mk_set_threads(resolve_threads(threads));

    if (train->parsed()) {
        bool ok = false;
        const std::string text = read_file(config_path, ok);
        if (!ok) {
            std::fprintf(stderr, "error_code=config message=cannot read config file '%s'\n",
                         config_path.c_str());
            return int(MK_CONFIG_ERROR);
        }
        json j;
        try {
            j = json::parse(text);
        } catch (const json::exception& e) {
            std::fprintf(stderr, "error_code=config message=config JSON: %s\n", e.what());
            return int(MK_CONFIG_ERROR);
        }
        if (!data_override.empty()) j["data"] = data_override;
        if (!out_override.empty()) j["out_dir"] = out_override;
        if (runs_override > 0) j["runs"] = runs_override;
        if (seed_override >= 0) j["train"]["seed"] = seed_override;
        if (threads > 0) j["threads"] = threads;
        OwnedString summary;
        const mk_status s = mk_train_run(j.dump().c_str(), &summary.p);
        if (s != MK_OK) return fail_with(s);
        std::printf("%s\n", summary.str().c_str());
        return 0;
    }

    if (eval->parsed()) {
        OwnedString report;
        const mk_status s = mk_evaluate(ckpt_path.c_str(), data_path.c_str(), split.c_str(),
                                        dump_logits.empty() ? nullptr : dump_logits.c_str(),
                                        &report.p);
        if (s != MK_OK) return fail_with(s);
        std::printf("%s\n", report.str().c_str());
        return 0;
    }

    if (gradcheck->parsed()) {
        OwnedString report;
        const mk_status s = mk_gradcheck(selftest_corrupt ? 1 : 0, &report.p);
        if (s != MK_OK && s != MK_FAIL) return fail_with(s);
        json j = json::parse(report.str());
        for (const auto& e : j.at("checks"))
            std::printf("%-28s worst_rel_err %.3e %s%s\n",
                        e.at("kind").get<std::string>().c_str(),
                        e.at("worst_rel_err").get<double>(),
                        e.at("pass").get<bool>() ? "ok" : "FAIL at ",
                        e.at("pass").get<bool>() ? "" : e.at("worst_at").get<std::string>().c_str());
        std::printf("gradcheck %s (threshold %.1e)\n",
                    j.at("all_pass").get<bool>() ? "PASS" : "FAIL",
                    j.at("threshold").get<double>());
        if (s == MK_FAIL) {
            std::fprintf(stderr, "error_code=fail message=%s\n", mk_last_error());
            return 1;
        }
        return 0;
    }

    if (bench->parsed()) {
        json opts;
        if (!bench_ks.empty()) opts["ks"] = bench_ks;
        if (!bench_widths.empty()) opts["widths"] = bench_widths;
        if (!bench_batches.empty()) opts["batches"] = bench_batches;
        opts["iters"] = bench_iters;
        opts["warmup"] = bench_warmup;
        opts["seed"] = bench_seed;
        OwnedString csv;
        const mk_status s = mk_bench(opts.dump().c_str(), &csv.p);
        if (s != MK_OK) return fail_with(s);
        std::fputs(csv.str().c_str(), stdout);
        return 0;
    }

    if (gradcam->parsed()) {
        OwnedString report;
        const mk_status s = mk_gradcam_run(gc_ckpt.c_str(), gc_data.c_str(), gc_split.c_str(),
                                           gc_index, gc_class, gc_layer, gc_out.c_str(),
                                           &report.p);
        if (s != MK_OK) return fail_with(s);
        std::printf("%s\n", report.str().c_str());
        return 0;
    }

    if (synth->parsed()) {
        json spec{{"classes", sy_classes},
                  {"per_class", sy_per_class},
                  {"size", sy_size},
                  {"noise", sy_noise},
                  {"seed", sy_seed}};
        OwnedString report;
        const mk_status s = mk_make_synth(spec.dump().c_str(), sy_out.c_str(), &report.p);
        if (s != MK_OK) return fail_with(s);
        std::printf("%s\n", report.str().c_str());
        return 0;
    }

    return 0;
}
