#include "medkan/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <sstream>
#include <random>

namespace medkan {

void TrainConfig::validate() const {
    if (!(lr > 0)) throw ConfigError("train config: lr must be positive");
    if (weight_decay < 0) throw ConfigError("train config: weight_decay must be >= 0");
    if (batch_size < 1) throw ConfigError("train config: batch_size must be >= 1");
    if (max_epochs < 1) throw ConfigError("train config: max_epochs must be >= 1");
    if (patience < 1) throw ConfigError("train config: patience must be >= 1");
    if (dtype != "f32" && dtype != "f64")
        throw ConfigError("train config: dtype must be f32 or f64, got '" + dtype + "'");
}

template <class T>
void AdamState<T>::init(const NamedParams<T>& params) {
    m.clear();
    v.clear();
    for (const auto& [name, p] : params) {
        m.emplace_back(p.size(), T(0));
        v.emplace_back(p.size(), T(0));
    }
    step = 0;
}

template <class T>
void adam_step(NamedParams<T>& params, AdamState<T>& state, const TrainConfig& cfg) {
    if (!state.initialized()) state.init(params);
    if (state.m.size() != params.size())
        throw ConfigError("adam: state tracks " + std::to_string(state.m.size()) +
                          " tensors but " + std::to_string(params.size()) + " were given");
    constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    state.step += 1;
    const double bc1 = 1.0 - std::pow(beta1, double(state.step));
    const double bc2 = 1.0 - std::pow(beta2, double(state.step));
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Tensor<T>& p = params[pi].second;
        if (state.m[pi].size() != p.size())
            throw ConfigError("adam: moment shape mismatch for '" + params[pi].first + "'");
        T* w = p.data_mut();
        const T* g0 = p.grad_data();
        T* mm = state.m[pi].data();
        T* vv = state.v[pi].data();
        const T wd = T(cfg.weight_decay);
        const T lr = T(cfg.lr);
        for (std::size_t i = 0; i < p.size(); ++i) {
            T g = (g0 ? g0[i] : T(0)) + wd * w[i];
            mm[i] = T(beta1) * mm[i] + T(1 - beta1) * g;
            vv[i] = T(beta2) * vv[i] + T(1 - beta2) * g * g;
            const T mhat = mm[i] / T(bc1);
            const T vhat = vv[i] / T(bc2);
            w[i] -= lr * mhat / (std::sqrt(vhat) + T(eps));
        }
    }
}

// --- metrics ---------------------------------------------------------------------

template <class T>
double accuracy(const Tensor<T>& logits, const std::vector<std::int64_t>& labels) {
    if (logits.rank() != 2)
        throw ShapeError("accuracy: logits must be [N,C], got " + shape_str(logits.shape()));
    const std::size_t N = logits.extent(0), C = logits.extent(1);
    if (labels.size() != N)
        throw ShapeError("accuracy: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(N) + " rows");
    const T* d = logits.data();
    std::size_t hits = 0;
    for (std::size_t i = 0; i < N; ++i) {
        std::size_t arg = 0;
        for (std::size_t c = 1; c < C; ++c)
            if (d[i * C + c] > d[i * C + arg]) arg = c; // ties keep the lowest index
        if (std::int64_t(arg) == labels[i]) ++hits;
    }
    return double(hits) / double(N);
}

namespace {

/// Binary AUC from the Mann-Whitney rank statistic; ties share average ranks.
double auc_binary_ranked(const std::vector<double>& scores, const std::vector<char>& positive) {
    const std::size_t n = scores.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    std::vector<double> rank(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
        const double avg = 0.5 * double(i + j) + 1.0; // 1-based average rank
        for (std::size_t k = i; k <= j; ++k) rank[order[k]] = avg;
        i = j + 1;
    }
    double rank_sum = 0;
    std::size_t npos = 0;
    for (std::size_t k = 0; k < n; ++k)
        if (positive[k]) { rank_sum += rank[k]; ++npos; }
    const std::size_t nneg = n - npos;
    if (npos == 0 || nneg == 0) return -1.0; // caller skips
    const double u = rank_sum - double(npos) * (npos + 1) / 2.0;
    return u / (double(npos) * double(nneg));
}

} // namespace

template <class T>
double auc_macro_ovr(const Tensor<T>& scores, const std::vector<std::int64_t>& labels) {
    if (scores.rank() != 2)
        throw ShapeError("auc: scores must be [N,C], got " + shape_str(scores.shape()));
    const std::size_t N = scores.extent(0), C = scores.extent(1);
    if (labels.size() != N)
        throw ShapeError("auc: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(N) + " rows");
    if (N < 2) throw DataError("auc: needs at least two samples");
    const T* d = scores.data();
    double total = 0;
    int used = 0;
    std::vector<double> s(N);
    std::vector<char> pos(N);
    for (std::size_t c = 0; c < C; ++c) {
        for (std::size_t i = 0; i < N; ++i) {
            s[i] = double(d[i * C + c]);
            pos[i] = labels[i] == std::int64_t(c) ? 1 : 0;
        }
        const double a = auc_binary_ranked(s, pos);
        if (a >= 0) { total += a; ++used; }
    }
    if (used == 0)
        throw DataError("auc: undefined, every class is one-sided (single-class input)");
    return total / used;
}

// --- evaluation ---------------------------------------------------------------------

template <class T>
Tensor<T> assemble_batch(const DatasetSplit& split, const std::vector<std::size_t>& rows) {
    const std::size_t C = split.images.extent(1), H = split.images.extent(2),
                      W = split.images.extent(3);
    const std::size_t plane = C * H * W;
    Tensor<T> out = Tensor<T>::zeros({rows.size(), C, H, W});
    T* dst = out.data_mut();
    const float* src = split.images.data();
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const float* s = src + rows[r] * plane;
        T* o = dst + r * plane;
        for (std::size_t i = 0; i < plane; ++i) o[i] = (T(s[i]) - T(0.5)) / T(0.5);
    }
    return out;
}

template <class T>
EvalReport evaluate(const MedKan<T>& model, const DatasetSplit& split, int batch_size,
                    Tensor<float>* logits_out) {
    if (split.size() == 0) throw DataError("evaluate: empty split '" + split.name + "'");
    NoGradGuard ng;
    const std::size_t N = split.size();
    const std::size_t C = std::size_t(model.config().num_classes);
    EvalReport rep;
    rep.n = N;
    rep.per_class_correct.assign(C, 0);
    rep.per_class_total.assign(C, 0);
    Tensor<float> all_logits = Tensor<float>::zeros({N, C});
    double loss_sum = 0;
    for (std::size_t b = 0; b < N; b += std::size_t(batch_size)) {
        const std::size_t e = std::min(N, b + std::size_t(batch_size));
        std::vector<std::size_t> rows(e - b);
        std::iota(rows.begin(), rows.end(), b);
        Tensor<T> x = assemble_batch<T>(split, rows);
        Tensor<T> logits = model.forward(x);
        std::vector<std::int64_t> lab(split.labels.begin() + b, split.labels.begin() + e);
        loss_sum += double(cross_entropy(logits, lab).item()) * double(e - b);
        const T* ld = logits.data();
        float* dst = all_logits.data_mut() + b * C;
        for (std::size_t i = 0; i < (e - b) * C; ++i) dst[i] = float(ld[i]);
    }
    rep.loss = loss_sum / double(N);
    rep.acc = accuracy(all_logits, split.labels);
    try {
        Tensor<float> probs = softmax(all_logits, 1);
        rep.auc = auc_macro_ovr(probs, split.labels);
    } catch (const DataError&) {
        rep.auc = std::nan(""); // single-class split; undefined by contract
    }
    const float* ld = all_logits.data();
    for (std::size_t i = 0; i < N; ++i) {
        std::size_t arg = 0;
        for (std::size_t c = 1; c < C; ++c)
            if (ld[i * C + c] > ld[i * C + arg]) arg = c;
        if (std::size_t(split.labels[i]) < C) {
            rep.per_class_total[split.labels[i]] += 1;
            if (std::int64_t(arg) == split.labels[i]) rep.per_class_correct[split.labels[i]] += 1;
        }
    }
    if (logits_out) *logits_out = all_logits;
    return rep;
}

// --- training loop ---------------------------------------------------------------------

template <class T>
TrainResult train_loop(MedKan<T>& model, const Dataset& data, const TrainConfig& cfg,
                       const std::function<void(const EpochRow&)>& on_epoch,
                       TrainHandles<T>* handles) {
    cfg.validate();
    if (data.train.size() == 0) throw DataError("train: empty training split");
    if (data.val.size() == 0) throw DataError("train: empty validation split");

    std::mt19937_64 shuffle_rng(cfg.seed);
    NamedParams<T> params = model.named_params();
    AdamState<T> adam;
    adam.init(params);

    TrainResult result;
    double best_acc = -1.0;
    int epochs_since_best = 0;
    std::vector<std::vector<T>> best_weights;

    const std::size_t N = data.train.size();
    std::vector<std::size_t> order(N);
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        double loss_sum = 0;
        for (std::size_t b = 0; b < N; b += std::size_t(cfg.batch_size)) {
            const std::size_t e = std::min(N, b + std::size_t(cfg.batch_size));
            std::vector<std::size_t> rows(order.begin() + b, order.begin() + e);
            Tensor<T> x = assemble_batch<T>(data.train, rows);
            std::vector<std::int64_t> lab(rows.size());
            for (std::size_t i = 0; i < rows.size(); ++i) lab[i] = data.train.labels[rows[i]];
            Tensor<T> logits = model.forward(x);
            Tensor<T> loss = cross_entropy(logits, lab);
            loss_sum += double(loss.item()) * double(rows.size());
            for (auto& [name, p] : params) p.zero_grad();
            loss.backward();
            adam_step(params, adam, cfg);
            ++result.adam_steps;
        }
        EvalReport val = evaluate(model, data.val, cfg.batch_size);
        const double seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        EpochRow row{epoch, loss_sum / double(N), val.loss, val.acc, val.auc, seconds};
        result.history.push_back(row);
        if (on_epoch) on_epoch(row);

        if (val.acc > best_acc) {
            best_acc = val.acc;
            result.best_epoch = epoch;
            result.best_val_acc = val.acc;
            result.best_val_auc = val.auc;
            epochs_since_best = 0;
            best_weights.clear();
            for (auto& [name, p] : params)
                best_weights.emplace_back(p.data(), p.data() + p.size());
        } else {
            ++epochs_since_best;
        }

        bool stop = false;
        if (epochs_since_best >= cfg.patience) {
            result.stopped_early = true;
            stop = true;
        }
        if (cfg.stop_at_val_acc > 0 && val.acc >= cfg.stop_at_val_acc) stop = true;
        if (!stop && cfg.stop_at_train_acc > 0) {
            EvalReport tr = evaluate(model, data.train, cfg.batch_size);
            if (tr.acc >= cfg.stop_at_train_acc) stop = true;
        }
        if (stop) break;
    }

    if (handles) {
        handles->final_weights.clear();
        for (auto& [name, p] : params)
            handles->final_weights.emplace_back(p.data(), p.data() + p.size());
        handles->adam = std::move(adam);
        std::ostringstream os;
        os << shuffle_rng;
        handles->rng_state = os.str();
        handles->epochs_since_best = epochs_since_best;
    }
    if (!best_weights.empty()) {
        for (std::size_t i = 0; i < params.size(); ++i)
            std::copy(best_weights[i].begin(), best_weights[i].end(), params[i].second.data_mut());
    }
    return result;
}

#define MEDKAN_INSTANTIATE_TRAIN(T)                                                              \
    template struct AdamState<T>;                                                                \
    template void adam_step<T>(NamedParams<T>&, AdamState<T>&, const TrainConfig&);              \
    template double accuracy<T>(const Tensor<T>&, const std::vector<std::int64_t>&);             \
    template double auc_macro_ovr<T>(const Tensor<T>&, const std::vector<std::int64_t>&);        \
    template EvalReport evaluate<T>(const MedKan<T>&, const DatasetSplit&, int, Tensor<float>*); \
    template struct TrainHandles<T>;                                                             \
    template TrainResult train_loop<T>(MedKan<T>&, const Dataset&, const TrainConfig&,           \
                                       const std::function<void(const EpochRow&)>&,              \
                                       TrainHandles<T>*);                                        \
    template Tensor<T> assemble_batch<T>(const DatasetSplit&, const std::vector<std::size_t>&);

MEDKAN_INSTANTIATE_TRAIN(float)
MEDKAN_INSTANTIATE_TRAIN(double)
#undef MEDKAN_INSTANTIATE_TRAIN

} // namespace medkan
