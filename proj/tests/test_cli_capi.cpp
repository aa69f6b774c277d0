#include <doctest.h>

#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "medkan/data.hpp"
#include "medkan/medkan.h"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CmdResult {
    int exit_code;
    std::string out, err;
};

CmdResult run_cli(const std::string& args) {
    static int counter = 0;
    const fs::path out = fs::temp_directory_path() / ("mk_cli_out_" + std::to_string(counter));
    const fs::path err = fs::temp_directory_path() / ("mk_cli_err_" + std::to_string(counter));
    ++counter;
    const std::string cmd = std::string(MEDKAN_CLI_PATH) + " " + args + " >" + out.string() +
                            " 2>" + err.string();
    const int rc = std::system(cmd.c_str());
    auto slurp = [](const fs::path& p) {
        std::ifstream is(p);
        std::ostringstream os;
        os << is.rdbuf();
        return os.str();
    };
    CmdResult r;
    r.exit_code = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
    r.out = slurp(out);
    r.err = slurp(err);
    return r;
}

fs::path temp_dir(const std::string& name) {
    fs::path p = fs::temp_directory_path() / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string write_config(const fs::path& dir, const json& j) {
    const fs::path p = dir / "config.json";
    std::ofstream os(p);
    os << j.dump(2);
    return p.string();
}

json toy_run_config(const fs::path& out_dir) {
    return {
        {"model",
         {{"input_size", 16},
          {"in_channels", 1},
          {"num_classes", 3},
          {"stem_stride", 2},
          {"stages", json::array({{{"num_lik", 1}, {"num_gik", 1}, {"dim", 8}, {"groups", 2},
                                   {"downsample", false}}})},
          {"grid", {{"num_basis", 4}}}}},
        {"train",
         {{"lr", 2e-3}, {"batch_size", 16}, {"max_epochs", 4}, {"patience", 10}, {"seed", 5}}},
        {"data", {{"synth", {{"classes", 3}, {"per_class", 20}, {"size", 16}, {"noise", 0.05},
                             {"seed", 9}}}}},
        {"out_dir", out_dir.string()},
        {"runs", 1},
        {"threads", 2},
    };
}

std::string strip_seconds_column(const std::string& csv) {
    std::istringstream is(csv);
    std::ostringstream os;
    std::string line;
    while (std::getline(is, line)) {
        const auto pos = line.rfind(',');
        os << line.substr(0, pos) << "\n";
    }
    return os.str();
}

std::string slurp_file(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
}

} // namespace

TEST_SUITE_BEGIN("cli");

TEST_CASE("capi: model create / save / load / predict round trip") {
    const json cfg = {{"input_size", 16},
                      {"in_channels", 1},
                      {"num_classes", 3},
                      {"stem_stride", 2},
                      {"stages", json::array({{{"num_lik", 1}, {"num_gik", 0}, {"dim", 8},
                                               {"groups", 2}, {"downsample", false}}})},
                      {"grid", {{"num_basis", 4}}}};
    mk_model* model = nullptr;
    REQUIRE(mk_model_create(cfg.dump().c_str(), "f32", 42, &model) == MK_OK);
    uint64_t params = 0;
    CHECK(mk_model_param_count(model, &params) == MK_OK);
    CHECK(params > 0);

    std::vector<float> image(16 * 16, 0.5f);
    std::vector<float> logits_a(3), logits_b(3);
    REQUIRE(mk_model_predict(model, image.data(), 1, logits_a.data()) == MK_OK);

    const fs::path ckpt = fs::temp_directory_path() / "mk_capi.ckpt";
    REQUIRE(mk_model_save(model, ckpt.string().c_str()) == MK_OK);
    mk_model* loaded = nullptr;
    REQUIRE(mk_model_load(ckpt.string().c_str(), &loaded) == MK_OK);
    REQUIRE(mk_model_predict(loaded, image.data(), 1, logits_b.data()) == MK_OK);
    CHECK(std::memcmp(logits_a.data(), logits_b.data(), 3 * sizeof(float)) == 0);

    char* cfg_json = nullptr;
    REQUIRE(mk_model_config_json(loaded, &cfg_json) == MK_OK);
    CHECK(json::parse(cfg_json).at("model").at("num_classes") == 3);
    mk_string_free(cfg_json);
    mk_model_free(model);
    mk_model_free(loaded);
}

TEST_CASE("capi: error codes carry typed failures and messages") {
    mk_model* model = nullptr;
    CHECK(mk_model_create("{not json", "f32", 0, &model) == MK_CONFIG_ERROR);
    CHECK(std::strlen(mk_last_error()) > 0);
    CHECK(mk_model_create("{\"stages\": []}", "f32", 0, &model) == MK_CONFIG_ERROR);
    mk_model* bad = nullptr;
    CHECK(mk_model_load("/nonexistent/path.ckpt", &bad) == MK_DATA_ERROR);
    mk_dataset* ds = nullptr;
    CHECK(mk_dataset_load("/nonexistent/data.npz", &ds) == MK_DATA_ERROR);
}

TEST_CASE("capi: dataset handles") {
    mk_dataset* ds = nullptr;
    REQUIRE(mk_dataset_synth(R"({"classes":3,"per_class":10,"size":12,"noise":0.1,"seed":3})",
                             &ds) == MK_OK);
    char* info = nullptr;
    REQUIRE(mk_dataset_info(ds, &info) == MK_OK);
    json j = json::parse(info);
    CHECK(j.at("num_classes") == 3);
    CHECK(j.at("height") == 12);
    mk_string_free(info);
    const fs::path p = fs::temp_directory_path() / "mk_capi_ds.npz";
    REQUIRE(mk_dataset_save(ds, p.string().c_str()) == MK_OK);
    mk_dataset_free(ds);
    mk_dataset* back = nullptr;
    REQUIRE(mk_dataset_load(p.string().c_str(), &back) == MK_OK);
    mk_dataset_free(back);
}

TEST_CASE("cli train writes the four artifacts and exits zero") {
    const fs::path dir = temp_dir("mk_cli_train");
    const std::string cfg = write_config(dir, toy_run_config(dir / "out"));
    CmdResult r = run_cli("train --config " + cfg);
    INFO(r.err);
    CHECK(r.exit_code == 0);
    CHECK(fs::exists(dir / "out" / "metrics.csv"));
    CHECK(fs::exists(dir / "out" / "best.ckpt"));
    CHECK(fs::exists(dir / "out" / "final.ckpt"));
    CHECK(fs::exists(dir / "out" / "config.echo.json"));
    // echo has every default materialized and is strict-parse clean
    json echo = json::parse(slurp_file(dir / "out" / "config.echo.json"));
    CHECK(echo.at("train").at("weight_decay") == 1e-4);
    CHECK(echo.at("threads") == 2);
}

TEST_CASE("cli train exits 3 with a machine line on a missing dataset") {
    const fs::path dir = temp_dir("mk_cli_baddata");
    json cfg = toy_run_config(dir / "out");
    cfg["data"] = "/nonexistent/file.npz";
    const std::string path = write_config(dir, cfg);
    CmdResult r = run_cli("train --config " + path);
    CHECK(r.exit_code == 3);
    CHECK(r.err.rfind("error_code=data", 0) == 0);
}

TEST_CASE("cli train exits 2 on an unknown config key") {
    const fs::path dir = temp_dir("mk_cli_badkey");
    json cfg = toy_run_config(dir / "out");
    cfg["not_a_key"] = 1;
    const std::string path = write_config(dir, cfg);
    CmdResult r = run_cli("train --config " + path);
    CHECK(r.exit_code == 2);
    CHECK(r.err.rfind("error_code=config", 0) == 0);
    CHECK(r.err.find("not_a_key") != std::string::npos);
}

TEST_CASE("cli rerun from the echoed config is bit-identical apart from timings") {
    const fs::path dir = temp_dir("mk_cli_det");
    const std::string cfg = write_config(dir, toy_run_config(dir / "a"));
    REQUIRE(run_cli("train --config " + cfg).exit_code == 0);
    // second run straight from the materialized echo
    json echo = json::parse(slurp_file(dir / "a" / "config.echo.json"));
    echo["out_dir"] = (dir / "b").string();
    const fs::path echo_path = dir / "echo.json";
    {
        std::ofstream os(echo_path);
        os << echo.dump();
    }
    REQUIRE(run_cli("train --config " + echo_path.string()).exit_code == 0);
    CHECK(slurp_file(dir / "a" / "best.ckpt") == slurp_file(dir / "b" / "best.ckpt"));
    CHECK(slurp_file(dir / "a" / "final.ckpt") == slurp_file(dir / "b" / "final.ckpt"));
    CHECK(strip_seconds_column(slurp_file(dir / "a" / "metrics.csv")) ==
          strip_seconds_column(slurp_file(dir / "b" / "metrics.csv")));
}

TEST_CASE("cli --runs 3 writes summary.csv whose mean matches the per-run logs") {
    const fs::path dir = temp_dir("mk_cli_runs");
    json cfg = toy_run_config(dir / "out");
    cfg["train"]["max_epochs"] = 2;
    const std::string path = write_config(dir, cfg);
    CmdResult r = run_cli("train --config " + path + " --runs 3");
    INFO(r.err);
    CHECK(r.exit_code == 0);
    REQUIRE(fs::exists(dir / "out" / "summary.csv"));

    // recompute the mean best-val-acc from the per-run metrics files
    double mean = 0;
    for (int i = 0; i < 3; ++i) {
        std::ifstream is(dir / "out" / ("run_" + std::to_string(i)) / "metrics.csv");
        std::string line;
        std::getline(is, line); // header
        double best = -1;
        while (std::getline(is, line)) {
            std::istringstream ls(line);
            std::string field;
            for (int f = 0; f < 4; ++f) std::getline(ls, field, ',');
            best = std::max(best, std::stod(field));
        }
        mean += best;
    }
    mean /= 3;

    std::ifstream is(dir / "out" / "summary.csv");
    std::string line, mean_line;
    while (std::getline(is, line))
        if (line.rfind("mean", 0) == 0) mean_line = line;
    REQUIRE(!mean_line.empty());
    std::istringstream ls(mean_line);
    std::string field;
    for (int f = 0; f < 4; ++f) std::getline(ls, field, ',');
    // both files carry six decimals, so agreement is up to print precision
    CHECK(std::stod(field) == doctest::Approx(mean).epsilon(1e-5));
}

TEST_CASE("cli eval reproduces the logged best accuracy and dumped logits agree") {
    const fs::path dir = temp_dir("mk_cli_eval");
    json cfg = toy_run_config(dir / "out");
    const std::string path = write_config(dir, cfg);
    REQUIRE(run_cli("train --config " + path).exit_code == 0);

    const std::string synth =
        R"(synth:{"classes":3,"per_class":20,"size":16,"noise":0.05,"seed":9})";
    CmdResult r = run_cli("eval --ckpt " + (dir / "out" / "best.ckpt").string() + " --data '" +
                          synth + "' --split val --dump-logits " +
                          (dir / "logits.npy").string());
    INFO(r.err);
    REQUIRE(r.exit_code == 0);
    json rep = json::parse(r.out);

    // best val acc from metrics.csv must match eval on the same split
    std::ifstream is(dir / "out" / "metrics.csv");
    std::string line;
    std::getline(is, line);
    double best = -1;
    while (std::getline(is, line)) {
        std::istringstream ls(line);
        std::string field;
        for (int f = 0; f < 4; ++f) std::getline(ls, field, ',');
        best = std::max(best, std::stod(field));
    }
    CHECK(rep.at("acc").get<double>() == doctest::Approx(best).epsilon(1e-9));

    // offline recomputation from the dumped logits
    std::ifstream lf(dir / "logits.npy", std::ios::binary);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(lf)),
                                    std::istreambuf_iterator<char>());
    medkan::NpyArray arr = medkan::parse_npy(bytes);
    REQUIRE(arr.dtype == medkan::NpyDtype::F32);
    const std::size_t n = arr.shape[0], c = arr.shape[1];
    const float* ld = reinterpret_cast<const float*>(arr.data.data());
    medkan::Dataset ds = medkan::synth_blobs(3, 20, 16, 16, 9, 0.05);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t arg = 0;
        for (std::size_t k = 1; k < c; ++k)
            if (ld[i * c + k] > ld[i * c + arg]) arg = k;
        if (std::int64_t(arg) == ds.val.labels[i]) ++hits;
    }
    CHECK(double(hits) / double(n) == doctest::Approx(rep.at("acc").get<double>()));
}

TEST_CASE("cli eval exits 2 on a class-count mismatch") {
    const fs::path dir = temp_dir("mk_cli_mismatch");
    const std::string path = write_config(dir, toy_run_config(dir / "out"));
    REQUIRE(run_cli("train --config " + path).exit_code == 0);
    CmdResult r = run_cli("eval --ckpt " + (dir / "out" / "best.ckpt").string() +
                          " --data 'synth:{\"classes\":4,\"per_class\":10,\"size\":16}'");
    CHECK(r.exit_code == 2);
    CHECK(r.err.rfind("error_code=config", 0) == 0);
}

TEST_CASE("cli gradcam agrees with the logits dumped by eval") {
    const fs::path dir = temp_dir("mk_cli_cam");
    const std::string path = write_config(dir, toy_run_config(dir / "out"));
    REQUIRE(run_cli("train --config " + path).exit_code == 0);
    const std::string synth =
        R"(synth:{"classes":3,"per_class":20,"size":16,"noise":0.05,"seed":9})";

    CmdResult ev = run_cli("eval --ckpt " + (dir / "out" / "best.ckpt").string() + " --data '" +
                           synth + "' --split test --dump-logits " +
                           (dir / "logits.npy").string());
    REQUIRE(ev.exit_code == 0);
    CmdResult cam = run_cli("gradcam --ckpt " + (dir / "out" / "best.ckpt").string() +
                            " --data '" + synth + "' --split test --index 1 --class 0 --out " +
                            (dir / "cam").string());
    INFO(cam.err);
    REQUIRE(cam.exit_code == 0);
    json rep = json::parse(cam.out);

    std::ifstream lf(dir / "logits.npy", std::ios::binary);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(lf)),
                                    std::istreambuf_iterator<char>());
    medkan::NpyArray arr = medkan::parse_npy(bytes);
    const float* ld = reinterpret_cast<const float*>(arr.data.data());
    const std::size_t c = arr.shape[1];
    std::size_t arg = 0;
    for (std::size_t k = 1; k < c; ++k)
        if (ld[1 * c + k] > ld[1 * c + arg]) arg = k;
    CHECK(rep.at("pred_class").get<std::size_t>() == arg);

    // PPM dimensions equal the input image dimensions; raw map in [0,1]
    std::ifstream ppm(dir / "cam.ppm", std::ios::binary);
    std::string magic;
    int W, H, maxv;
    ppm >> magic >> W >> H >> maxv;
    CHECK(magic == "P6");
    CHECK(W == 16);
    CHECK(H == 16);
    CHECK(maxv == 255);
    std::ifstream raw(dir / "cam.f32", std::ios::binary);
    std::vector<float> map(16 * 16);
    raw.read(reinterpret_cast<char*>(map.data()), 16 * 16 * 4);
    for (float v : map) {
        CHECK(v >= 0.0f);
        CHECK(v <= 1.0f);
    }
}

TEST_CASE("cli gradcam exits 3 for an out-of-range index") {
    const fs::path dir = temp_dir("mk_cli_cam_range");
    const std::string path = write_config(dir, toy_run_config(dir / "out"));
    REQUIRE(run_cli("train --config " + path).exit_code == 0);
    CmdResult r = run_cli("gradcam --ckpt " + (dir / "out" / "best.ckpt").string() +
                          " --data 'synth:{\"classes\":3,\"per_class\":20,\"size\":16}'"
                          " --index 100000 --out " + (dir / "cam").string());
    CHECK(r.exit_code == 3);
    CHECK(r.err.rfind("error_code=data", 0) == 0);
}

TEST_CASE("cli make-synth round trips and respects the seed flag") {
    const fs::path dir = temp_dir("mk_cli_synth");
    const std::string a = (dir / "a.npz").string();
    const std::string b = (dir / "b.npz").string();
    const std::string c = (dir / "c.npz").string();
    REQUIRE(run_cli("make-synth --classes 3 --per-class 12 --size 12 --seed 5 --out " + a)
                .exit_code == 0);
    REQUIRE(run_cli("make-synth --classes 3 --per-class 12 --size 12 --seed 5 --out " + b)
                .exit_code == 0);
    REQUIRE(run_cli("make-synth --classes 3 --per-class 12 --size 12 --seed 6 --out " + c)
                .exit_code == 0);
    CHECK(slurp_file(a) == slurp_file(b));  // same seed, same bytes
    CHECK(slurp_file(a) != slurp_file(c));  // seed changes content

    medkan::Dataset ds = medkan::load_npz_dataset(a);
    CHECK(ds.num_classes == 3);

    // independent tool check: python's zipfile sees all six members
    const std::string py = "python3 -c \"import zipfile,sys; "
                           "names=zipfile.ZipFile('" + a + "').namelist(); "
                           "sys.exit(0 if len(names)==6 else 1)\"";
    CHECK(std::system(py.c_str()) == 0);
}

TEST_CASE("cli bench quick sweep keeps the schema and both thread rows") {
    CmdResult r = run_cli("bench --k 4 --width 8 --batch 8 --iters 30 --warmup 5 --threads 2");
    INFO(r.err);
    REQUIRE(r.exit_code == 0);
    std::istringstream is(r.out);
    std::string header;
    std::getline(is, header);
    CHECK(header ==
          "basis,num_basis,width,batch,threads,forward_us,forward_backward_us,"
          "ratio_forward,ratio_forward_backward");
    int rows = 0, rbf_rows = 0, bsp_rows = 0, t1 = 0, tmax = 0;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        ++rows;
        if (line.rfind("rbf", 0) == 0) ++rbf_rows;
        if (line.rfind("bspline", 0) == 0) ++bsp_rows;
        std::istringstream ls(line);
        std::string f;
        for (int i = 0; i < 5; ++i) std::getline(ls, f, ',');
        if (f == "1") ++t1;
        if (f == "2") ++tmax;
    }
    CHECK(rows == 4); // one case, two thread settings, two bases
    CHECK(rbf_rows == 2);
    CHECK(bsp_rows == 2);
    CHECK(t1 == 2);
    CHECK(tmax == 2);
}

TEST_CASE("cli gradcheck self-test fixture flips the exit code") {
    CmdResult ok = run_cli("gradcheck");
    INFO(ok.err);
    CHECK(ok.exit_code == 0);
    CHECK(ok.out.find("KANLinear") != std::string::npos);
    CHECK(ok.out.find("KANConv2d") != std::string::npos);
    CHECK(ok.out.find("LGCK") != std::string::npos);
    CHECK(ok.out.find("SFFN") != std::string::npos);
    CHECK(ok.out.find("GIK") != std::string::npos);
    CHECK(ok.out.find("stem") != std::string::npos);
    CHECK(ok.out.find("head") != std::string::npos);

    CmdResult bad = run_cli("gradcheck --selftest-corrupt");
    CHECK(bad.exit_code == 1);
    CHECK(bad.err.rfind("error_code=fail", 0) == 0);
}

TEST_SUITE_END();
