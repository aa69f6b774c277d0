#include "medkan/gradcheck.hpp"

#include <cmath>
#include <random>

#include "medkan/arch.hpp"
#include "medkan/kan.hpp"
#include "medkan/train.hpp"
#include "tensor_detail.hpp"

namespace medkan {

double fd_max_rel_err(const std::function<Tensor<double>()>& loss_fn,
                      const std::vector<std::pair<std::string, Tensor<double>>>& targets,
                      double step, std::string* worst_at) {
    for (auto& [name, t] : targets) const_cast<Tensor<double>&>(t).zero_grad();
    Tensor<double> loss = loss_fn();
    loss.backward();

    std::vector<std::vector<double>> analytic;
    analytic.reserve(targets.size());
    for (auto& [name, t] : targets) {
        if (t.has_grad())
            analytic.emplace_back(t.grad_data(), t.grad_data() + t.size());
        else
            analytic.emplace_back(t.size(), 0.0);
    }

    double worst = 0;
    NoGradGuard ng;
    for (std::size_t ti = 0; ti < targets.size(); ++ti) {
        Tensor<double>& t = const_cast<Tensor<double>&>(targets[ti].second);
        double* d = t.data_mut();
        for (std::size_t i = 0; i < t.size(); ++i) {
            const double saved = d[i];
            d[i] = saved + step;
            const double lp = loss_fn().item();
            d[i] = saved - step;
            const double lm = loss_fn().item();
            d[i] = saved;
            const double numeric = (lp - lm) / (2 * step);
            const double a = analytic[ti][i];
            const double rel =
                std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-2});
            if (rel > worst) {
                worst = rel;
                if (worst_at)
                    *worst_at = targets[ti].first + "[" + std::to_string(i) + "]";
            }
        }
    }
    return worst;
}

namespace {

using detail::attach_node;

Tensor<double> randt(const Shape& s, std::mt19937_64& rng, double stddev = 1.0,
                     bool rg = true) {
    return Tensor<double>::randn(s, rng, stddev, rg);
}

/// fixed random projection makes a scalar loss out of any output
Tensor<double> project(const Tensor<double>& y, const Tensor<double>& r) {
    return sum(mul(y, r));
}

struct Suite {
    GradcheckReport report;
    double threshold;

    explicit Suite(double thr) : threshold(thr) { report.threshold = thr; }

    void run(const std::string& kind, int instances,
             const std::function<double(std::mt19937_64&, std::string*)>& one) {
        GradcheckEntry e;
        e.kind = kind;
        std::mt19937_64 rng(0xC0FFEE ^ std::hash<std::string>{}(kind));
        for (int i = 0; i < instances; ++i) {
            std::string at;
            const double err = one(rng, &at);
            if (err > e.worst_rel_err) {
                e.worst_rel_err = err;
                e.worst_at = at;
            }
        }
        e.pass = e.worst_rel_err < threshold;
        report.entries.push_back(std::move(e));
    }
};

// silu forward with a wrong backward rule; only ever registered by the
// harness self-test
Tensor<double> corrupt_silu(const Tensor<double>& x) {
    Tensor<double> y = Tensor<double>::zeros(x.shape());
    const double* xd = x.data();
    double* yd = y.data_mut();
    for (std::size_t i = 0; i < x.size(); ++i) yd[i] = detail::silu_fn(xd[i]);
    attach_node<double>(y, "corrupt_silu", {x}, [xi = x.impl_](const double* g) {
        double* gx = xi->grad.data();
        for (std::size_t i = 0; i < xi->data.size(); ++i) gx[i] += g[i]; // drops the chain factor
    });
    return y;
}

void add_primitive_suites(Suite& s) {
    using Td = Tensor<double>;
    const int inst = 20;

    s.run("op:add", inst, [](std::mt19937_64& rng, std::string* at) {
        Td a = randt({3, 4}, rng), b = randt({3, 4}, rng), r = randt({3, 4}, rng, 1.0, false);
        return fd_max_rel_err([&] { return project(add(a, b), r); }, {{"a", a}, {"b", b}}, 1e-5, at);
    });
    s.run("op:sub", inst, [](std::mt19937_64& rng, std::string* at) {
        Td a = randt({2, 5}, rng), b = randt({2, 5}, rng), r = randt({2, 5}, rng, 1.0, false);
        return fd_max_rel_err([&] { return project(sub(a, b), r); }, {{"a", a}, {"b", b}}, 1e-5, at);
    });
    s.run("op:mul", inst, [](std::mt19937_64& rng, std::string* at) {
        Td a = randt({4, 3}, rng), b = randt({4, 3}, rng), r = randt({4, 3}, rng, 1.0, false);
        return fd_max_rel_err([&] { return project(mul(a, b), r); }, {{"a", a}, {"b", b}}, 1e-5, at);
    });
    s.run("op:neg", inst, [](std::mt19937_64& rng, std::string* at) {
        Td a = randt({7}, rng), r = randt({7}, rng, 1.0, false);
        return fd_max_rel_err([&] { return project(neg(a), r); }, {{"a", a}}, 1e-5, at);
    });
    s.run("op:exp", inst, [](std::mt19937_64& rng, std::string* at) {
        Td a = randt({3, 3}, rng, 0.5), r = randt({3, 3}, rng, 1.0, false);
        return fd_max_rel_err([&] { return project(medkan::exp(a), r); }, {{"a", a}}, 1e-5, at);
    });
    s.run("op:silu", inst, [](std::mt19937_64& rng, std::string* at) {
        Td a = randt({4, 4}, rng), r = randt({4, 4}, rng, 1.0, false);
        return fd_max_rel_err([&] { return project(silu(a), r); }, {{"a", a}}, 1e-5, at);
    });
    s.run("op:relu", inst, [](std::mt19937_64& rng, std::string* at) {
        Td a = randt({4, 4}, rng), r = randt({4, 4}, rng, 1.0, false);
        // keep clear of the kink at zero where the subgradient is one-sided
        double* d = a.data_mut();
        for (std::size_t i = 0; i < a.size(); ++i)
            if (std::abs(d[i]) < 1e-3) d[i] = d[i] < 0 ? d[i] - 0.1 : d[i] + 0.1;
        return fd_max_rel_err([&] { return project(relu(a), r); }, {{"a", a}}, 1e-5, at);
    });
    s.run("op:gelu", inst, [](std::mt19937_64& rng, std::string* at) {
        Td a = randt({4, 4}, rng), r = randt({4, 4}, rng, 1.0, false);
        return fd_max_rel_err([&] { return project(gelu(a), r); }, {{"a", a}}, 1e-5, at);
    });
    s.run("op:add_scalar", inst, [](std::mt19937_64& rng, std::string* at) {
        Td a = randt({5}, rng), r = randt({5}, rng, 1.0, false);
        return fd_max_rel_err([&] { return project(add_scalar(a, 0.7), r); }, {{"a", a}}, 1e-5, at);
    });
    s.run("op:mul_scalar", inst, [](std::mt19937_64& rng, std::string* at) {
        Td a = randt({5}, rng), r = randt({5}, rng, 1.0, false);
        return fd_max_rel_err([&] { return project(mul_scalar(a, -1.3), r); }, {{"a", a}}, 1e-5, at);
    });
    s.run("op:sum", inst, [](std::mt19937_64& rng, std::string* at) {
        Td a = randt({3, 4}, rng);
        return fd_max_rel_err([&] { return sum(a); }, {{"a", a}}, 1e-5, at);
    });
    s.run("op:mean", inst, [](std::mt19937_64& rng, std::string* at) {
        Td a = randt({6}, rng);
        return fd_max_rel_err([&] { return mean(a); }, {{"a", a}}, 1e-5, at);
    });
    s.run("op:reshape", inst, [](std::mt19937_64& rng, std::string* at) {
        Td a = randt({3, 4}, rng), r = randt({2, 6}, rng, 1.0, false);
        return fd_max_rel_err([&] { return project(reshape(a, {2, 6}), r); }, {{"a", a}}, 1e-5, at);
    });
    s.run("op:permute", inst, [](std::mt19937_64& rng, std::string* at) {
        Td a = randt({2, 3, 4}, rng), r = randt({4, 2, 3}, rng, 1.0, false);
        return fd_max_rel_err([&] { return project(permute(a, {2, 0, 1}), r); }, {{"a", a}},
                              1e-5, at);
    });
    s.run("op:concat", inst, [](std::mt19937_64& rng, std::string* at) {
        Td a = randt({2, 3}, rng), b = randt({2, 2}, rng), r = randt({2, 5}, rng, 1.0, false);
        return fd_max_rel_err(
            [&] { return project(concat<double>({a, b}, 1), r); }, {{"a", a}, {"b", b}}, 1e-5, at);
    });
    s.run("op:slice", inst, [](std::mt19937_64& rng, std::string* at) {
        Td a = randt({3, 6}, rng), r = randt({3, 2}, rng, 1.0, false);
        return fd_max_rel_err([&] { return project(slice(a, 1, 2, 2), r); }, {{"a", a}}, 1e-5, at);
    });
    s.run("op:matmul", inst, [](std::mt19937_64& rng, std::string* at) {
        Td a = randt({3, 4}, rng), b = randt({4, 2}, rng), r = randt({3, 2}, rng, 1.0, false);
        return fd_max_rel_err([&] { return project(matmul(a, b), r); }, {{"a", a}, {"b", b}},
                              1e-5, at);
    });
    s.run("op:linear", inst, [](std::mt19937_64& rng, std::string* at) {
        Td x = randt({3, 4}, rng), w = randt({5, 4}, rng), b = randt({5}, rng);
        Td r = randt({3, 5}, rng, 1.0, false);
        return fd_max_rel_err([&] { return project(linear(x, w, b), r); },
                              {{"x", x}, {"w", w}, {"b", b}}, 1e-5, at);
    });
    s.run("op:conv2d", inst, [](std::mt19937_64& rng, std::string* at) {
        std::uniform_int_distribution<int> gpick(0, 2);
        const int g = 1 << gpick(rng);
        Td x = randt({2, 4, 5, 5}, rng);
        Td w = randt({std::size_t(4), std::size_t(4 / g), 3, 3}, rng, 0.5);
        Td b = randt({4}, rng, 0.2);
        Td r = randt({2, 4, 5, 5}, rng, 1.0, false);
        ConvGeom geom{1, 1, g};
        return fd_max_rel_err([&] { return project(conv2d(x, w, b, geom), r); },
                              {{"x", x}, {"w", w}, {"b", b}}, 1e-5, at);
    });
    s.run("op:softmax", inst, [](std::mt19937_64& rng, std::string* at) {
        Td a = randt({3, 5}, rng), r = randt({3, 5}, rng, 1.0, false);
        return fd_max_rel_err([&] { return project(softmax(a, 1), r); }, {{"a", a}}, 1e-5, at);
    });
    s.run("op:layer_norm", inst, [](std::mt19937_64& rng, std::string* at) {
        Td x = randt({2, 6, 3, 3}, rng), g = randt({6}, rng, 0.5), b = randt({6}, rng, 0.5);
        Td r = randt({2, 6, 3, 3}, rng, 1.0, false);
        return fd_max_rel_err(
            [&] { return project(layer_norm_channels(x, g, b), r); },
            {{"x", x}, {"gamma", g}, {"beta", b}}, 1e-5, at);
    });
    s.run("op:add_bias_channels", inst, [](std::mt19937_64& rng, std::string* at) {
        Td x = randt({2, 3, 4, 4}, rng), b = randt({3}, rng);
        Td r = randt({2, 3, 4, 4}, rng, 1.0, false);
        return fd_max_rel_err([&] { return project(add_bias_channels(x, b), r); },
                              {{"x", x}, {"b", b}}, 1e-5, at);
    });
    s.run("op:scale_channels", inst, [](std::mt19937_64& rng, std::string* at) {
        Td x = randt({2, 3, 4, 4}, rng), sc = randt({3}, rng);
        Td r = randt({2, 3, 4, 4}, rng, 1.0, false);
        return fd_max_rel_err([&] { return project(scale_channels(x, sc), r); },
                              {{"x", x}, {"s", sc}}, 1e-5, at);
    });
    s.run("op:global_avg_pool", inst, [](std::mt19937_64& rng, std::string* at) {
        Td x = randt({2, 3, 4, 4}, rng), r = randt({2, 3}, rng, 1.0, false);
        return fd_max_rel_err([&] { return project(global_avg_pool(x), r); }, {{"x", x}}, 1e-5, at);
    });
    s.run("op:cross_entropy", inst, [](std::mt19937_64& rng, std::string* at) {
        Td x = randt({4, 3}, rng);
        std::vector<std::int64_t> labels{0, 2, 1, 2};
        return fd_max_rel_err([&] { return cross_entropy(x, labels); }, {{"x", x}}, 1e-5, at);
    });
}

Grid small_grid(bool bspline) {
    if (bspline) return BsplineGrid(5, 3, -2.0, 2.0);
    return RbfGrid::with_spacing_sigma(5, -2.0, 2.0);
}

void add_kan_suites(Suite& s) {
    using Td = Tensor<double>;
    for (bool bsp : {false, true}) {
        const std::string tag = bsp ? "bspline" : "rbf";
        s.run("KANLinear[" + tag + "]", 10, [bsp](std::mt19937_64& rng, std::string* at) {
            KanLinear<double> layer(4, 3, small_grid(bsp), rng);
            Td x = Td::uniform({5, 4}, rng, -1.5, 1.5, true);
            Td r = randt({5, 3}, rng, 1.0, false);
            std::vector<std::pair<std::string, Td>> targets{{"x", x},
                                                            {"spline_w", layer.spline_w},
                                                            {"base_w", layer.base_w},
                                                            {"bias", layer.bias}};
            return fd_max_rel_err([&] { return project(layer.forward(x), r); }, targets, 1e-5, at);
        });
    }
    for (int g : {1, 2, 4}) {
        s.run("KANConv2d[rbf,g=" + std::to_string(g) + "]", 10,
              [g](std::mt19937_64& rng, std::string* at) {
            KanConv2d<double> layer(4, 4, 3, ConvGeom{1, 1, g}, small_grid(false), rng);
            Td x = Td::uniform({1, 4, 4, 4}, rng, -1.5, 1.5, true);
            Td r = randt({1, 4, 4, 4}, rng, 1.0, false);
            std::vector<std::pair<std::string, Td>> targets{{"x", x},
                                                            {"spline_w", layer.spline_w},
                                                            {"base_w", layer.base_w},
                                                            {"bias", layer.bias}};
            return fd_max_rel_err([&] { return project(layer.forward(x), r); }, targets, 1e-5, at);
        });
    }
    s.run("KANConv2d[bspline,g=2]", 10, [](std::mt19937_64& rng, std::string* at) {
        KanConv2d<double> layer(4, 4, 3, ConvGeom{1, 1, 2}, small_grid(true), rng);
        Td x = Td::uniform({1, 4, 4, 4}, rng, -1.5, 1.5, true);
        Td r = randt({1, 4, 4, 4}, rng, 1.0, false);
        std::vector<std::pair<std::string, Td>> targets{{"x", x},
                                                        {"spline_w", layer.spline_w},
                                                        {"base_w", layer.base_w},
                                                        {"bias", layer.bias}};
        return fd_max_rel_err([&] { return project(layer.forward(x), r); }, targets, 1e-5, at);
    });
}

template <class Block>
double block_check(Block& block, const Shape& in_shape, std::mt19937_64& rng, std::string* at) {
    Tensor<double> x = Tensor<double>::uniform(in_shape, rng, -1.2, 1.2, true);
    NamedParams<double> params;
    block.params("p", params);
    std::vector<std::pair<std::string, Tensor<double>>> targets{{"x", x}};
    for (auto& [n, t] : params) targets.emplace_back(n, t);
    Tensor<double> probe = block.forward(x);
    Tensor<double> r = Tensor<double>::randn(probe.shape(), rng, 1.0, false);
    return fd_max_rel_err([&] { return project(block.forward(x), r); }, targets, 1e-5, at);
}

void add_block_suites(Suite& s) {
    s.run("LGCK", 8, [](std::mt19937_64& rng, std::string* at) {
        LgckBlock<double> block(4, 2, small_grid(false), true, false, rng);
        return block_check(block, {1, 4, 4, 4}, rng, at);
    });
    s.run("SFFN", 8, [](std::mt19937_64& rng, std::string* at) {
        SffnBlock<double> block(4, 2, rng);
        return block_check(block, {1, 4, 4, 4}, rng, at);
    });
    s.run("GIK", 8, [](std::mt19937_64& rng, std::string* at) {
        GikBlock<double> block(3, 16, GlobalMixerKind::Kan, true, small_grid(false), true, rng);
        return block_check(block, {1, 3, 4, 4}, rng, at);
    });
    s.run("stem", 8, [](std::mt19937_64& rng, std::string* at) {
        Stem<double> block(1, 6, 4, rng);
        return block_check(block, {1, 1, 8, 8}, rng, at);
    });
    s.run("head", 8, [](std::mt19937_64& rng, std::string* at) {
        // pool + norm + classifier, the tail of the full model
        LayerNorm<double> norm(5);
        Linear<double> fc(5, 3, rng);
        Tensor<double> x = Tensor<double>::uniform({2, 5, 3, 3}, rng, -1.2, 1.2, true);
        Tensor<double> r = Tensor<double>::randn({2, 3}, rng, 1.0, false);
        std::vector<std::pair<std::string, Tensor<double>>> targets{
            {"x", x},       {"gamma", norm.gamma}, {"beta", norm.beta},
            {"w", fc.weight}, {"b", fc.bias}};
        return fd_max_rel_err(
            [&] { return project(fc.forward(norm.forward(global_avg_pool(x))), r); }, targets,
            1e-5, at);
    });
}

MedKanConfig toy_config() {
    MedKanConfig cfg;
    cfg.input_size = 8;
    cfg.in_channels = 1;
    cfg.num_classes = 3;
    cfg.stem_stride = 2;
    StageSpec st;
    st.dim = 8;
    st.groups = 2;
    st.num_lik = 1;
    st.num_gik = 1;
    st.downsample = false;
    cfg.stages = {st};
    cfg.grid.num_basis = 4;
    return cfg;
}

void add_model_suite(Suite& s) {
    s.run("model[toy]", 1, [](std::mt19937_64& rng, std::string* at) {
        MedKan<double> model(toy_config(), 7);
        Tensor<double> x = Tensor<double>::uniform({2, 1, 8, 8}, rng, -1.0, 1.0, true);
        std::vector<std::int64_t> labels{1, 2};
        std::vector<std::pair<std::string, Tensor<double>>> targets{{"input", x}};
        for (auto& [n, t] : model.named_params()) targets.emplace_back(n, t);
        return fd_max_rel_err(
            [&] { return cross_entropy(model.forward(x), labels); }, targets, 1e-5, at);
    });
}

} // namespace

GradcheckReport run_gradcheck(bool with_corrupt_fixture) {
    Suite s(1e-5);
    add_primitive_suites(s);
    add_kan_suites(s);
    add_block_suites(s);
    add_model_suite(s);
    if (with_corrupt_fixture) {
        s.run("fixture[corrupt-silu]", 1, [](std::mt19937_64& rng, std::string* at) {
            Tensor<double> a = Tensor<double>::randn({4, 4}, rng, 1.0, true);
            Tensor<double> r = Tensor<double>::randn({4, 4}, rng, 1.0, false);
            return fd_max_rel_err([&] { return project(corrupt_silu(a), r); }, {{"a", a}}, 1e-5,
                                  at);
        });
    }
    s.report.all_pass = true;
    for (const auto& e : s.report.entries)
        if (!e.pass) s.report.all_pass = false;
    return s.report;
}

} // namespace medkan
