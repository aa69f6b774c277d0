#include "medkan/runconfig.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "medkan/data.hpp"
#include "medkan/gradcam.hpp"
#include "medkan/threadpool.hpp"

namespace medkan {

namespace fs = std::filesystem;

namespace {

void reject_unknown(const nlohmann::json& j, std::initializer_list<const char*> allowed,
                    const char* where) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* k : allowed)
            if (it.key() == k) { ok = true; break; }
        if (!ok) throw ConfigError(std::string("unknown key '") + it.key() + "' in " + where);
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

TrainConfig train_config_from_json(const nlohmann::json& j) {
    reject_unknown(j,
                   {"lr", "weight_decay", "batch_size", "max_epochs", "patience", "seed", "dtype"},
                   "train config");
    TrainConfig cfg;
    cfg.lr = get_or(j, "lr", cfg.lr);
    cfg.weight_decay = get_or(j, "weight_decay", cfg.weight_decay);
    cfg.batch_size = get_or(j, "batch_size", cfg.batch_size);
    cfg.max_epochs = get_or(j, "max_epochs", cfg.max_epochs);
    cfg.patience = get_or(j, "patience", cfg.patience);
    cfg.seed = get_or(j, "seed", cfg.seed);
    cfg.dtype = get_or<std::string>(j, "dtype", cfg.dtype);
    cfg.validate();
    return cfg;
}

nlohmann::json train_config_to_json(const TrainConfig& cfg) {
    return {{"lr", cfg.lr},
            {"weight_decay", cfg.weight_decay},
            {"batch_size", cfg.batch_size},
            {"max_epochs", cfg.max_epochs},
            {"patience", cfg.patience},
            {"seed", cfg.seed},
            {"dtype", cfg.dtype}};
}

nlohmann::json synth_spec_to_json(const SynthSpec& s) {
    return {{"classes", s.classes},
            {"per_class", s.per_class},
            {"size", s.size},
            {"noise", s.noise},
            {"seed", s.seed}};
}

} // namespace

SynthSpec parse_synth_spec(const nlohmann::json& j) {
    reject_unknown(j, {"classes", "per_class", "size", "noise", "seed"}, "synth spec");
    SynthSpec s;
    s.classes = get_or(j, "classes", s.classes);
    s.per_class = get_or(j, "per_class", s.per_class);
    s.size = get_or(j, "size", s.size);
    s.noise = get_or(j, "noise", s.noise);
    s.seed = get_or(j, "seed", s.seed);
    return s;
}

RunConfig parse_run_config(const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigError("run config must be a JSON object");
    reject_unknown(j, {"variant", "model", "train", "data", "out_dir", "runs", "threads"},
                   "run config");
    RunConfig rc;
    rc.variant = get_or<std::string>(j, "variant", "");
    const bool has_model = j.contains("model");
    if (!rc.variant.empty() && has_model)
        throw ConfigError("run config: give either 'variant' or 'model', not both");
    if (rc.variant.empty() && !has_model)
        throw ConfigError("run config: one of 'variant' or 'model' is required");
    if (j.contains("train")) rc.train = train_config_from_json(j.at("train"));
    if (j.contains("data")) {
        const auto& d = j.at("data");
        if (d.is_string()) {
            rc.data_path = d.get<std::string>();
        } else if (d.is_object()) {
            reject_unknown(d, {"synth"}, "data");
            if (!d.contains("synth"))
                throw ConfigError("run config: data object must carry a 'synth' spec");
            rc.synth = parse_synth_spec(d.at("synth"));
        } else {
            throw ConfigError("run config: 'data' must be a path or a {\"synth\": ...} object");
        }
    }
    rc.out_dir = get_or<std::string>(j, "out_dir", rc.out_dir);
    rc.runs = get_or(j, "runs", rc.runs);
    if (rc.runs < 1) throw ConfigError("run config: runs must be >= 1");
    rc.threads = get_or(j, "threads", rc.threads);
    if (rc.threads < 0) throw ConfigError("run config: threads must be >= 0");

    if (!rc.variant.empty()) {
        if (rc.variant != "S" && rc.variant != "B" && rc.variant != "L")
            throw ConfigError("run config: variant must be S, B or L, got '" + rc.variant + "'");
        int input_size = 224, num_classes = 2;
        if (rc.synth) {
            input_size = rc.synth->size;
            num_classes = rc.synth->classes;
        }
        rc.model = build_variant(rc.variant[0], input_size, num_classes);
    } else {
        rc.model = model_config_from_json(j.at("model"));
    }
    rc.model.validate();
    return rc;
}

nlohmann::json echo_run_config(const RunConfig& rc) {
    nlohmann::json j{{"model", model_config_to_json(rc.model)},
                     {"train", train_config_to_json(rc.train)},
                     {"out_dir", rc.out_dir},
                     {"runs", rc.runs},
                     {"threads", rc.threads == 0 ? num_threads() : rc.threads}};
    if (rc.synth)
        j["data"] = {{"synth", synth_spec_to_json(*rc.synth)}};
    else
        j["data"] = rc.data_path;
    return j;
}

Dataset load_run_dataset(const RunConfig& rc, int target_size) {
    Dataset ds;
    if (rc.synth) {
        ds = synth_blobs(rc.synth->classes, rc.synth->per_class, rc.synth->size, rc.synth->size,
                         rc.synth->seed, rc.synth->noise);
    } else if (!rc.data_path.empty()) {
        ds = load_npz_dataset(rc.data_path);
    } else {
        throw ConfigError("run config: no dataset given (set 'data')");
    }
    if (ds.height != target_size || ds.width != target_size) {
        for (auto* split : {&ds.train, &ds.val, &ds.test})
            split->images = resize_bilinear(split->images, target_size, target_size);
        ds.height = ds.width = target_size;
    }
    return ds;
}

namespace {

void write_text(const std::string& path, const std::string& text) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw RuntimeError("cannot open '" + path + "' for writing");
    os << text;
    if (!os) throw RuntimeError("write failed for '" + path + "'");
}

struct RunOutcome {
    int best_epoch;
    double best_val_acc, best_val_auc;
    int epochs;
};

template <class T>
RunOutcome run_one(const RunConfig& rc, const Dataset& data, const fs::path& dir,
                   std::uint64_t seed) {
    TrainConfig tcfg = rc.train;
    tcfg.seed = seed;
    MedKan<T> model(rc.model, seed);

    std::ofstream csv(dir / "metrics.csv", std::ios::binary);
    if (!csv) throw RuntimeError("cannot open metrics.csv under '" + dir.string() + "'");
    csv << "epoch,train_loss,val_loss,val_acc,val_auc,seconds\n";
    csv.setf(std::ios::fixed);
    csv.precision(6);

    TrainHandles<T> handles;
    TrainResult result = train_loop<T>(
        model, data, tcfg,
        [&](const EpochRow& row) {
            csv << row.epoch << "," << row.train_loss << "," << row.val_loss << "," << row.val_acc
                << "," << row.val_auc << "," << row.seconds << "\n";
            csv.flush();
        },
        &handles);

    // model now holds the best weights
    Checkpoint best = make_checkpoint(model);
    best.config["train_state"] = {{"epoch", result.best_epoch},
                                  {"best_val_acc", result.best_val_acc},
                                  {"seed", seed}};
    save_checkpoint((dir / "best.ckpt").string(), best);

    NamedParams<T> params = model.named_params();
    std::vector<std::vector<T>> best_weights;
    for (auto& [name, p] : params) best_weights.emplace_back(p.data(), p.data() + p.size());
    for (std::size_t i = 0; i < params.size(); ++i)
        std::copy(handles.final_weights[i].begin(), handles.final_weights[i].end(),
                  params[i].second.data_mut());
    Checkpoint final_ckpt = make_checkpoint(model);
    final_ckpt.config["train_state"] = {{"epoch", int(result.history.size())},
                                        {"step", handles.adam.step},
                                        {"best_val_acc", result.best_val_acc},
                                        {"epochs_since_best", handles.epochs_since_best},
                                        {"seed", seed},
                                        {"rng", handles.rng_state}};
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor<T> m = Tensor<T>::from_vector(params[i].second.shape(), handles.adam.m[i]);
        Tensor<T> v = Tensor<T>::from_vector(params[i].second.shape(), handles.adam.v[i]);
        final_ckpt.tensors.emplace_back("adam.m." + params[i].first, tensor_to_ckpt(m));
        final_ckpt.tensors.emplace_back("adam.v." + params[i].first, tensor_to_ckpt(v));
    }
    save_checkpoint((dir / "final.ckpt").string(), final_ckpt);
    for (std::size_t i = 0; i < params.size(); ++i)
        std::copy(best_weights[i].begin(), best_weights[i].end(), params[i].second.data_mut());

    return {result.best_epoch, result.best_val_acc, result.best_val_auc,
            int(result.history.size())};
}

} // namespace

nlohmann::json driver_train(const RunConfig& rc) {
    set_num_threads(rc.threads);
    rc.model.validate();
    rc.train.validate();

    Dataset data = load_run_dataset(rc, rc.model.input_size);
    if (data.channels != rc.model.in_channels)
        throw ConfigError("dataset has " + std::to_string(data.channels) +
                          " channels but the model expects " +
                          std::to_string(rc.model.in_channels));
    if (data.num_classes != rc.model.num_classes)
        throw ConfigError("dataset has " + std::to_string(data.num_classes) +
                          " classes but the model expects " +
                          std::to_string(rc.model.num_classes));

    fs::create_directories(rc.out_dir);
    write_text((fs::path(rc.out_dir) / "config.echo.json").string(),
               echo_run_config(rc).dump(2) + "\n");

    std::vector<RunOutcome> outcomes;
    for (int r = 0; r < rc.runs; ++r) {
        fs::path dir = rc.out_dir;
        if (rc.runs > 1) {
            dir /= "run_" + std::to_string(r);
            fs::create_directories(dir);
        }
        const std::uint64_t seed = rc.train.seed + std::uint64_t(r);
        RunOutcome out = rc.train.dtype == "f64" ? run_one<double>(rc, data, dir, seed)
                                                 : run_one<float>(rc, data, dir, seed);
        outcomes.push_back(out);
    }

    double mean_acc = 0, mean_auc = 0;
    for (const auto& o : outcomes) {
        mean_acc += o.best_val_acc;
        mean_auc += o.best_val_auc;
    }
    mean_acc /= outcomes.size();
    mean_auc /= outcomes.size();
    double sd_acc = 0, sd_auc = 0;
    if (outcomes.size() > 1) {
        for (const auto& o : outcomes) {
            sd_acc += (o.best_val_acc - mean_acc) * (o.best_val_acc - mean_acc);
            sd_auc += (o.best_val_auc - mean_auc) * (o.best_val_auc - mean_auc);
        }
        sd_acc = std::sqrt(sd_acc / (outcomes.size() - 1));
        sd_auc = std::sqrt(sd_auc / (outcomes.size() - 1));
    }

    if (rc.runs > 1) {
        std::ostringstream os;
        os.setf(std::ios::fixed);
        os.precision(6);
        os << "run,seed,best_epoch,best_val_acc,best_val_auc\n";
        for (std::size_t r = 0; r < outcomes.size(); ++r)
            os << r << "," << (rc.train.seed + r) << "," << outcomes[r].best_epoch << ","
               << outcomes[r].best_val_acc << "," << outcomes[r].best_val_auc << "\n";
        os << "mean,,," << mean_acc << "," << mean_auc << "\n";
        os << "sd,,," << sd_acc << "," << sd_auc << "\n";
        write_text((fs::path(rc.out_dir) / "summary.csv").string(), os.str());
    }

    nlohmann::json summary{{"runs", rc.runs},
                           {"mean_val_acc", mean_acc},
                           {"sd_val_acc", sd_acc},
                           {"mean_val_auc", mean_auc},
                           {"sd_val_auc", sd_auc},
                           {"out_dir", rc.out_dir}};
    return summary;
}

namespace {

struct LoadedModel {
    std::string dtype;
    MedKanConfig cfg;
    std::optional<MedKan<float>> f32;
    std::optional<MedKan<double>> f64;
};

LoadedModel load_model(const std::string& ckpt_path) {
    Checkpoint ckpt = load_checkpoint(ckpt_path);
    if (!ckpt.config.contains("model"))
        throw DataError("checkpoint '" + ckpt_path + "' carries no model config");
    LoadedModel lm;
    lm.cfg = model_config_from_json(ckpt.config.at("model"));
    lm.dtype = ckpt.config.value("dtype", "f32");
    if (lm.dtype == "f32") {
        lm.f32.emplace(lm.cfg, 0);
        load_weights(*lm.f32, ckpt);
    } else if (lm.dtype == "f64") {
        lm.f64.emplace(lm.cfg, 0);
        load_weights(*lm.f64, ckpt);
    } else {
        throw DataError("checkpoint dtype '" + lm.dtype + "' unsupported");
    }
    return lm;
}

Dataset load_eval_dataset(const std::string& data_path, const MedKanConfig& cfg) {
    RunConfig rc;
    rc.model = cfg;
    if (data_path.rfind("synth:", 0) == 0) {
        rc.synth = parse_synth_spec(nlohmann::json::parse(data_path.substr(6)));
    } else {
        rc.data_path = data_path;
    }
    Dataset ds = load_run_dataset(rc, cfg.input_size);
    if (ds.channels != cfg.in_channels)
        throw ConfigError("dataset has " + std::to_string(ds.channels) +
                          " channels but the model expects " + std::to_string(cfg.in_channels));
    if (ds.num_classes != cfg.num_classes)
        throw ConfigError("dataset has " + std::to_string(ds.num_classes) +
                          " classes but the model expects " + std::to_string(cfg.num_classes));
    return ds;
}

const DatasetSplit& pick_split(const Dataset& ds, const std::string& split) {
    if (split == "train") return ds.train;
    if (split == "val") return ds.val;
    if (split == "test" || split.empty()) return ds.test;
    throw ConfigError("unknown split '" + split + "' (expected train|val|test)");
}

} // namespace

nlohmann::json driver_eval(const std::string& ckpt_path, const std::string& data_path,
                           const std::string& split, const std::string& dump_logits_path,
                           int batch_size) {
    LoadedModel lm = load_model(ckpt_path);
    Dataset ds = load_eval_dataset(data_path, lm.cfg);
    const DatasetSplit& sp = pick_split(ds, split);
    Tensor<float> logits;
    EvalReport rep = lm.f32 ? evaluate(*lm.f32, sp, batch_size, &logits)
                            : evaluate(*lm.f64, sp, batch_size, &logits);
    if (!dump_logits_path.empty()) {
        NpyArray arr;
        arr.dtype = NpyDtype::F32;
        arr.shape = logits.shape();
        arr.data.resize(logits.size() * 4);
        std::memcpy(arr.data.data(), logits.data(), arr.data.size());
        auto bytes = serialize_npy(arr);
        std::ofstream os(dump_logits_path, std::ios::binary);
        if (!os) throw RuntimeError("cannot open '" + dump_logits_path + "' for writing");
        os.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
    }
    return {{"acc", rep.acc},
            {"auc", std::isnan(rep.auc) ? nlohmann::json() : nlohmann::json(rep.auc)},
            {"loss", rep.loss},
            {"n", rep.n}};
}

nlohmann::json driver_gradcam(const std::string& ckpt_path, const std::string& data_path,
                              const std::string& split, int index, int target_class,
                              int stage_index, const std::string& out_prefix) {
    LoadedModel lm = load_model(ckpt_path);
    Dataset ds = load_eval_dataset(data_path, lm.cfg);
    const DatasetSplit& sp = pick_split(ds, split);
    if (index < 0 || std::size_t(index) >= sp.size())
        throw DataError("gradcam: index " + std::to_string(index) + " out of range for split '" +
                        sp.name + "' with " + std::to_string(sp.size()) + " samples");
    const std::size_t n_stages =
        lm.f32 ? lm.f32->num_stages() : lm.f64->num_stages();
    const std::size_t stage = stage_index < 0 ? n_stages - 1 : std::size_t(stage_index);
    if (target_class < 0) {
        // default to the dataset label of the chosen sample
        target_class = int(sp.labels[index]);
    }

    GradcamResult r;
    if (lm.f32) {
        Tensor<float> img = assemble_batch<float>(sp, {std::size_t(index)});
        r = gradcam(*lm.f32, img, target_class, stage);
    } else {
        Tensor<double> img = assemble_batch<double>(sp, {std::size_t(index)});
        r = gradcam(*lm.f64, img, target_class, stage);
    }
    const std::string ppm = out_prefix + ".ppm";
    const std::string raw = out_prefix + ".f32";
    write_heatmap_ppm(ppm, r);
    write_heatmap_f32(raw, r);
    return {{"pred_class", r.pred_class},
            {"target_class", target_class},
            {"target_prob", r.target_prob},
            {"label", sp.labels[index]},
            {"width", r.width},
            {"height", r.height},
            {"ppm", ppm},
            {"raw", raw}};
}

nlohmann::json driver_make_synth(const SynthSpec& spec, const std::string& out_path) {
    Dataset ds = synth_blobs(spec.classes, spec.per_class, spec.size, spec.size, spec.seed,
                             spec.noise);
    save_npz_dataset(out_path, ds);
    return {{"path", out_path},
            {"classes", ds.num_classes},
            {"train", ds.train.size()},
            {"val", ds.val.size()},
            {"test", ds.test.size()},
            {"size", spec.size},
            {"noise", spec.noise},
            {"seed", spec.seed}};
}

nlohmann::json gradcheck_report_json(const GradcheckReport& report) {
    nlohmann::json entries = nlohmann::json::array();
    for (const auto& e : report.entries)
        entries.push_back({{"kind", e.kind},
                           {"worst_rel_err", e.worst_rel_err},
                           {"worst_at", e.worst_at},
                           {"pass", e.pass}});
    return {{"all_pass", report.all_pass}, {"threshold", report.threshold}, {"checks", entries}};
}

} // namespace medkan
