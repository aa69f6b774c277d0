#include "medkan/medkan.h"

#include <cstdlib>
#include <cstring>
#include <optional>
#include <string>

#include "medkan/checkpoint.hpp"
#include "medkan/data.hpp"
#include "medkan/runconfig.hpp"
#include "medkan/threadpool.hpp"
#include "medkan/train.hpp"

using namespace medkan;

namespace {

thread_local std::string t_last_error;

char* dup_string(const std::string& s) {
    char* p = static_cast<char*>(std::malloc(s.size() + 1));
    if (p) std::memcpy(p, s.c_str(), s.size() + 1);
    return p;
}

template <class F>
mk_status guarded(F&& fn) {
    try {
        return fn();
    } catch (const ConfigError& e) {
        t_last_error = e.what();
        return MK_CONFIG_ERROR;
    } catch (const DataError& e) {
        t_last_error = e.what();
        return MK_DATA_ERROR;
    } catch (const RuntimeError& e) {
        t_last_error = e.what();
        return MK_RUNTIME_ERROR;
    } catch (const std::exception& e) {
        t_last_error = e.what();
        return MK_RUNTIME_ERROR;
    }
}

nlohmann::json parse_json_arg(const char* text, const char* what) {
    if (!text) throw ConfigError(std::string(what) + ": null JSON argument");
    try {
        return nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string(what) + ": " + e.what());
    }
}

} // namespace

struct mk_model {
    std::string dtype;
    MedKanConfig cfg;
    std::optional<MedKan<float>> f32;
    std::optional<MedKan<double>> f64;
};

struct mk_dataset {
    Dataset data;
};

extern "C" {

uint32_t mk_api_version(void) { return 1; }

const char* mk_last_error(void) { return t_last_error.c_str(); }

void mk_string_free(char* s) { std::free(s); }

void mk_set_threads(int n) { set_num_threads(n); }

int mk_get_threads(void) { return num_threads(); }

mk_status mk_model_create(const char* config_json, const char* dtype, uint64_t seed,
                          mk_model** out) {
    return guarded([&]() -> mk_status {
        if (!out) throw ConfigError("mk_model_create: null out pointer");
        nlohmann::json j = parse_json_arg(config_json, "model config");
        MedKanConfig cfg;
        if (j.is_object() && j.contains("variant")) {
            const std::string v = j.value("variant", "S");
            const int input_size = j.value("input_size", 224);
            const int num_classes = j.value("num_classes", 2);
            for (auto it = j.begin(); it != j.end(); ++it)
                if (it.key() != "variant" && it.key() != "input_size" && it.key() != "num_classes")
                    throw ConfigError("unknown key '" + it.key() + "' in variant request");
            if (v.size() != 1) throw ConfigError("variant must be S, B or L");
            cfg = build_variant(v[0], input_size, num_classes);
        } else {
            cfg = model_config_from_json(j);
        }
        cfg.validate();
        auto m = std::make_unique<mk_model>();
        m->dtype = dtype ? dtype : "f32";
        m->cfg = cfg;
        if (m->dtype == "f32")
            m->f32.emplace(cfg, seed);
        else if (m->dtype == "f64")
            m->f64.emplace(cfg, seed);
        else
            throw ConfigError("dtype must be f32 or f64, got '" + m->dtype + "'");
        *out = m.release();
        return MK_OK;
    });
}

mk_status mk_model_load(const char* ckpt_path, mk_model** out) {
    return guarded([&]() -> mk_status {
        if (!out || !ckpt_path) throw ConfigError("mk_model_load: null argument");
        Checkpoint ckpt = load_checkpoint(ckpt_path);
        if (!ckpt.config.contains("model"))
            throw DataError("checkpoint carries no model config");
        auto m = std::make_unique<mk_model>();
        m->cfg = model_config_from_json(ckpt.config.at("model"));
        m->dtype = ckpt.config.value("dtype", "f32");
        if (m->dtype == "f32") {
            m->f32.emplace(m->cfg, 0);
            load_weights(*m->f32, ckpt);
        } else if (m->dtype == "f64") {
            m->f64.emplace(m->cfg, 0);
            load_weights(*m->f64, ckpt);
        } else {
            throw DataError("checkpoint dtype '" + m->dtype + "' unsupported");
        }
        *out = m.release();
        return MK_OK;
    });
}

mk_status mk_model_save(const mk_model* m, const char* ckpt_path) {
    return guarded([&]() -> mk_status {
        if (!m || !ckpt_path) throw ConfigError("mk_model_save: null argument");
        Checkpoint ckpt = m->f32 ? make_checkpoint(*m->f32) : make_checkpoint(*m->f64);
        save_checkpoint(ckpt_path, ckpt);
        return MK_OK;
    });
}

void mk_model_free(mk_model* m) { delete m; }

mk_status mk_model_param_count(const mk_model* m, uint64_t* out) {
    return guarded([&]() -> mk_status {
        if (!m || !out) throw ConfigError("mk_model_param_count: null argument");
        *out = m->f32 ? m->f32->param_count() : m->f64->param_count();
        return MK_OK;
    });
}

mk_status mk_model_config_json(const mk_model* m, char** json_out) {
    return guarded([&]() -> mk_status {
        if (!m || !json_out) throw ConfigError("mk_model_config_json: null argument");
        nlohmann::json j{{"model", model_config_to_json(m->cfg)}, {"dtype", m->dtype}};
        *json_out = dup_string(j.dump());
        return MK_OK;
    });
}

mk_status mk_model_predict(const mk_model* m, const float* images, size_t n, float* logits_out) {
    return guarded([&]() -> mk_status {
        if (!m || !images || !logits_out) throw ConfigError("mk_model_predict: null argument");
        if (n == 0) throw ConfigError("mk_model_predict: empty batch");
        const std::size_t C = std::size_t(m->cfg.in_channels);
        const std::size_t S = std::size_t(m->cfg.input_size);
        const std::size_t plane = C * S * S;
        NoGradGuard ng;
        if (m->f32) {
            Tensor<float> x = Tensor<float>::zeros({n, C, S, S});
            float* xd = x.data_mut();
            for (std::size_t i = 0; i < n * plane; ++i) xd[i] = (images[i] - 0.5f) / 0.5f;
            Tensor<float> logits = m->f32->forward(x);
            std::memcpy(logits_out, logits.data(), logits.size() * sizeof(float));
        } else {
            Tensor<double> x = Tensor<double>::zeros({n, C, S, S});
            double* xd = x.data_mut();
            for (std::size_t i = 0; i < n * plane; ++i) xd[i] = (double(images[i]) - 0.5) / 0.5;
            Tensor<double> logits = m->f64->forward(x);
            const double* ld = logits.data();
            for (std::size_t i = 0; i < logits.size(); ++i) logits_out[i] = float(ld[i]);
        }
        return MK_OK;
    });
}

mk_status mk_dataset_load(const char* npz_path, mk_dataset** out) {
    return guarded([&]() -> mk_status {
        if (!out || !npz_path) throw ConfigError("mk_dataset_load: null argument");
        auto d = std::make_unique<mk_dataset>();
        d->data = load_npz_dataset(npz_path);
        *out = d.release();
        return MK_OK;
    });
}

mk_status mk_dataset_synth(const char* synth_json, mk_dataset** out) {
    return guarded([&]() -> mk_status {
        if (!out) throw ConfigError("mk_dataset_synth: null out pointer");
        SynthSpec spec =
            synth_json ? parse_synth_spec(parse_json_arg(synth_json, "synth spec")) : SynthSpec{};
        auto d = std::make_unique<mk_dataset>();
        d->data = synth_blobs(spec.classes, spec.per_class, spec.size, spec.size, spec.seed,
                              spec.noise);
        *out = d.release();
        return MK_OK;
    });
}

mk_status mk_dataset_save(const mk_dataset* d, const char* npz_path) {
    return guarded([&]() -> mk_status {
        if (!d || !npz_path) throw ConfigError("mk_dataset_save: null argument");
        save_npz_dataset(npz_path, d->data);
        return MK_OK;
    });
}

mk_status mk_dataset_info(const mk_dataset* d, char** json_out) {
    return guarded([&]() -> mk_status {
        if (!d || !json_out) throw ConfigError("mk_dataset_info: null argument");
        nlohmann::json j{{"num_classes", d->data.num_classes},
                         {"channels", d->data.channels},
                         {"height", d->data.height},
                         {"width", d->data.width},
                         {"train", d->data.train.size()},
                         {"val", d->data.val.size()},
                         {"test", d->data.test.size()}};
        *json_out = dup_string(j.dump());
        return MK_OK;
    });
}

void mk_dataset_free(mk_dataset* d) { delete d; }

mk_status mk_train_run(const char* run_config_json, char** summary_json_out) {
    return guarded([&]() -> mk_status {
        RunConfig rc = parse_run_config(parse_json_arg(run_config_json, "run config"));
        nlohmann::json summary = driver_train(rc);
        if (summary_json_out) *summary_json_out = dup_string(summary.dump());
        return MK_OK;
    });
}

mk_status mk_evaluate(const char* ckpt_path, const char* data_path, const char* split,
                      const char* dump_logits_path, char** report_json_out) {
    return guarded([&]() -> mk_status {
        if (!ckpt_path || !data_path) throw ConfigError("mk_evaluate: null path argument");
        nlohmann::json rep = driver_eval(ckpt_path, data_path, split ? split : "test",
                                         dump_logits_path ? dump_logits_path : "", 64);
        if (report_json_out) *report_json_out = dup_string(rep.dump());
        return MK_OK;
    });
}

mk_status mk_gradcheck(int with_corrupt_fixture, char** report_json_out) {
    return guarded([&]() -> mk_status {
        GradcheckReport report = run_gradcheck(with_corrupt_fixture != 0);
        if (report_json_out) *report_json_out = dup_string(gradcheck_report_json(report).dump());
        if (!report.all_pass) {
            for (const auto& e : report.entries)
                if (!e.pass) {
                    t_last_error = "gradient check failed: " + e.kind + " worst " +
                                   std::to_string(e.worst_rel_err) + " at " + e.worst_at;
                    break;
                }
            return MK_FAIL;
        }
        return MK_OK;
    });
}

mk_status mk_bench(const char* options_json, char** csv_out) {
    return guarded([&]() -> mk_status {
        BenchOptions opts;
        if (options_json) {
            nlohmann::json j = parse_json_arg(options_json, "bench options");
            for (auto it = j.begin(); it != j.end(); ++it) {
                const std::string& k = it.key();
                if (k != "ks" && k != "widths" && k != "batches" && k != "warmup" &&
                    k != "iters" && k != "seed" && k != "max_threads")
                    throw ConfigError("unknown key '" + k + "' in bench options");
            }
            if (j.contains("ks")) opts.basis_counts = j.at("ks").get<std::vector<int>>();
            if (j.contains("widths")) opts.widths = j.at("widths").get<std::vector<int>>();
            if (j.contains("batches")) opts.batches = j.at("batches").get<std::vector<int>>();
            opts.warmup = j.value("warmup", opts.warmup);
            opts.iters = j.value("iters", opts.iters);
            opts.seed = j.value("seed", opts.seed);
            opts.max_threads = j.value("max_threads", opts.max_threads);
        }
        std::vector<BenchRow> rows = run_bench(opts);
        if (csv_out) *csv_out = dup_string(bench_csv(rows));
        return MK_OK;
    });
}

mk_status mk_gradcam_run(const char* ckpt_path, const char* data_path, const char* split,
                         int index, int target_class, int stage, const char* out_prefix,
                         char** report_json_out) {
    return guarded([&]() -> mk_status {
        if (!ckpt_path || !data_path || !out_prefix)
            throw ConfigError("mk_gradcam_run: null argument");
        nlohmann::json rep = driver_gradcam(ckpt_path, data_path, split ? split : "test", index,
                                            target_class, stage, out_prefix);
        if (report_json_out) *report_json_out = dup_string(rep.dump());
        return MK_OK;
    });
}

mk_status mk_make_synth(const char* synth_json, const char* out_path, char** report_json_out) {
    return guarded([&]() -> mk_status {
        if (!out_path) throw ConfigError("mk_make_synth: null output path");
        SynthSpec spec =
            synth_json ? parse_synth_spec(parse_json_arg(synth_json, "synth spec")) : SynthSpec{};
        nlohmann::json rep = driver_make_synth(spec, out_path);
        if (report_json_out) *report_json_out = dup_string(rep.dump());
        return MK_OK;
    });
}

} // extern "C"
