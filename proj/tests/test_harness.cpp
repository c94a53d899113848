#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "dctm/errors.hpp"
#include "dctm/harness.hpp"
#include "dctm/verify.hpp"

using namespace dctm;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("dctm_test_" + name)) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

// A model small enough to train in well under a second.
DctmConfig tiny_config() {
    DctmConfig c;
    c.apply_text(R"(
conv.channels = 4,4,4
model.hidden = 8
model.heads = 2
model.encoder_layers = 1
model.decoder_layers = 1
model.ff_dim = 16
model.dropout = 0
train.lr = 1e-3
train.epochs = 2
train.batch_size = 8
)");
    return c;
}

SyntheticSplits tiny_data(std::size_t frames = 200) {
    SyntheticSpec s;
    s.seed = 5;
    s.frames = frames;
    s.dims = {3, 4, 2};
    return generate_synthetic_splits(s, 4, 2, 0);
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace

TEST_CASE("config keys, defaults and overrides") {
    DctmConfig c;
    CHECK_THROWS_WITH_AS(c.set("model.hiden", "8"), doctest::Contains("model.hiden"), ConfigError);
    const auto entries = c.entries();
    auto value = [&](const std::string& key) {
        for (const auto& [k, v] : entries)
            if (k == key) return v;
        return std::string("<missing>");
    };
    CHECK(value("train.lr") == "1e-06");
    CHECK(value("train.epochs") == "30");
    CHECK(value("data.window") == "64");
    CHECK(value("conv.kernels") == "5,5,3");
    CHECK(value("conv.dilations") == "4,4,4");
    CHECK(value("model.heads") == "8");
    CHECK(value("model.hidden") == "128");
    CHECK(c.model_spec().receptive_field() == 41);

    c.set("train.lr", "0.001");
    CHECK(c.lr == 1e-3);
    CHECK_THROWS_WITH_AS(c.apply_text("train.epochs = 3\nbogus = 1\n", "x.cfg"), doctest::Contains("x.cfg:2"),
                         ConfigError);

    DctmConfig round;
    round.apply_text(tiny_config().to_text());
    CHECK(round.entries() == tiny_config().entries());

    c.set("conv.kernels", "5,4,3");
    CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("scoring: concatenated headline, per-session values, degenerate flags") {
    auto data = tiny_data();
    auto& sessions = data.train;
    std::vector<std::vector<double>> constant, exact;
    for (const auto& s : sessions) {
        constant.emplace_back(s.frames(), 0.5);
        exact.push_back(s.labels);
    }
    auto flat = score_sessions(sessions, constant);
    CHECK(flat.overall.ccc == 0.0);
    CHECK(flat.overall.degenerate);
    CHECK_FALSE(flat.degeneracy.empty());
    CHECK(flat.per_session.size() == sessions.size());

    auto perfect = score_sessions(sessions, exact);
    CHECK(perfect.overall.ccc == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(perfect.session_mean == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(perfect.degeneracy.empty());
}

TEST_CASE("train, write, reload, predict") {
    TempDir dir("run");
    auto data = tiny_data();
    auto cfg = tiny_config();
    auto result = train_model(cfg, data.train, data.val);
    CHECK(result.report.epochs.size() == 2);
    CHECK(result.report.loss_curve.size() == result.report.steps);
    CHECK(result.report.best_val_ccc.has_value());
    for (double l : result.report.loss_curve) CHECK(std::isfinite(l));
    write_run(dir.path, result);
    for (const char* f : {"best.dctm", "last.dctm", "config.txt", "norm_stats.csv", "report.json", "report.txt"})
        CHECK(fs::exists(dir.path / f));
    CHECK(read_file(dir.path / "report.json").find("\"build_id\"") != std::string::npos);

    auto run = load_run(dir.path / "best.dctm");
    auto report = evaluate_model(run, data.val, "val");
    REQUIRE(report.scores.has_value());
    CHECK(report.scores->overall.ccc == doctest::Approx(*result.report.best_val_ccc).epsilon(1e-12));

    // predict on a 100-frame unlabeled session
    auto fresh = tiny_data(100).val;
    for (auto& s : fresh) {
        s.labels.clear();
    }
    auto norm = normalize(fresh, run.stats);
    auto preds = predict_sessions(*run.model, norm, run.config.window, run.config.stride, run.config.batch_size);
    REQUIRE(preds.size() == fresh.size());
    CHECK(preds[0].size() == 100);
    for (double p : preds[0]) {
        CHECK(p > 0.0);
        CHECK(p < 1.0);
    }
    auto again = predict_sessions(*run.model, norm, run.config.window, run.config.stride, run.config.batch_size);
    CHECK(again == preds);

    const auto files = write_predictions(dir.path / "pred", norm, preds);
    REQUIRE(files.size() == fresh.size());
    const auto text = read_file(files[0]);
    CHECK(text.rfind("frame_index,score\n", 0) == 0);
    CHECK(std::count(text.begin(), text.end(), '\n') == 101);

    // a config that no longer matches the checkpoint names the tensor
    CHECK_THROWS_WITH(load_run(dir.path / "best.dctm", {{"conv.channels", "5,4,4"}}), doctest::Contains("conv."));
}

TEST_CASE("training failures are reported") {
    auto data = tiny_data();
    SUBCASE("empty training set") {
        CHECK_THROWS_AS(train_model(tiny_config(), {}, data.val), ConfigError);
    }
    SUBCASE("divergence names epoch and step") {
        auto cfg = tiny_config();
        cfg.lr = 1e38;
        CHECK_THROWS_WITH_AS(train_model(cfg, data.train, data.val), doctest::Contains("epoch 1"), NumericalError);
    }
}

TEST_CASE("ablation grid rows and receptive fields") {
    auto data = tiny_data();
    auto cfg = tiny_config();
    cfg.epochs = 1;
    auto report = run_ablation(cfg, data.train, data.val, {});
    REQUIRE(report.cells.size() == 4);
    for (const auto& cell : report.cells) {
        CHECK_MESSAGE(cell.error.empty(), cell.error);
        CHECK(cell.val_ccc.has_value());
        CHECK(cell.receptive_field == (cell.conv == ConvMode::Dilated ? 41u : 11u));
        CHECK(cell.voice_gate.has_value() == (cell.fusion == FusionKind::GatedMultimodal));
    }
    CHECK(report.magnitudes.size() == 3);
    CHECK(ablation_text(report).find("41") != std::string::npos);
}

TEST_CASE("verify: clean build passes, corrupted conv backward is caught") {
    auto results = run_verify(VerifyOptions{});
    for (const auto& r : results) CHECK_MESSAGE(r.passed, r.name << ": " << r.detail);

    VerifyOptions bad;
    bad.corrupt_conv_backward = true;
    std::vector<std::string> failed;
    for (const auto& r : run_verify(bad))
        if (!r.passed) failed.push_back(r.name);
    REQUIRE_FALSE(failed.empty());
    CHECK(std::find(failed.begin(), failed.end(), "grad.dilated_conv") != failed.end());
}
