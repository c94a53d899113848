// dctm: train / evaluate / predict / ablate / gen-synth / verify
//
// Exit codes: 0 ok, 1 config or data error, 2 numerical failure,
// 3 verify failure.

#include <cstdio>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "dctm/errors.hpp"
#include "dctm/harness.hpp"
#include "dctm/verify.hpp"

namespace {

using namespace dctm;

using Overrides = std::vector<std::pair<std::string, std::string>>;

// Leftover `--key=value` (or `--key value`) arguments become config overrides.
Overrides parse_overrides(const std::vector<std::string>& extras) {
    Overrides out;
    for (std::size_t i = 0; i < extras.size(); ++i) {
        const std::string& arg = extras[i];
        if (arg.rfind("--", 0) != 0) throw ConfigError("unexpected argument '" + arg + "'");
        const auto eq = arg.find('=');
        if (eq != std::string::npos) {
            out.emplace_back(arg.substr(2, eq - 2), arg.substr(eq + 1));
        } else if (i + 1 < extras.size()) {
            out.emplace_back(arg.substr(2), extras[++i]);
        } else {
            throw ConfigError("override '" + arg + "' has no value");
        }
    }
    return out;
}

DctmConfig make_config(const std::string& path, const Overrides& overrides) {
    DctmConfig config;
    if (!path.empty()) config.apply_file(path);
    for (const auto& [k, v] : overrides) config.set(k, v);
    config.validate();
    return config;
}

void write_file(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out << text;
}

std::vector<Session> load_dir(const std::string& dir, SubjectFilter subject, bool require_labels, const std::string& what) {
    if (dir.empty()) return {};
    if (!std::filesystem::is_directory(dir)) throw ConfigError(what + " directory not found: " + dir);
    return load_split(dir, subject, require_labels);
}

std::string split_dir(const DctmConfig& config, const std::string& split) {
    if (split == "train") return config.train_dir;
    if (split == "val") return config.val_dir;
    if (split == "test") return config.test_dir;
    throw ConfigError("unknown split '" + split + "' (expected train, val or test)");
}

int cmd_train(const std::string& config_path, const Overrides& overrides) {
    const auto config = make_config(config_path, overrides);
    if (config.train_dir.empty()) throw ConfigError("data.train is not set");
    const auto train = load_dir(config.train_dir, config.subject, true, "training");
    const auto val = load_dir(config.val_dir, config.subject, true, "validation");
    auto result = train_model(config, train, val, [](const EpochLog& e) {
        std::fprintf(stderr, "epoch %zu  steps %zu  train_loss %.5f  val_ccc %s\n", e.epoch, e.steps, e.train_loss,
                     e.val_ccc ? std::to_string(*e.val_ccc).c_str() : "-");
    });
    write_run(config.output_dir, result);
    std::cout << report_text(result.report);
    std::cout << "run written to " << config.output_dir << "\n";
    return 0;
}

int cmd_evaluate(const std::string& checkpoint, const std::string& split, const std::string& data,
                 const std::string& out, const Overrides& overrides) {
    auto run = load_run(checkpoint, overrides);
    const std::string dir = data.empty() ? split_dir(run.config, split) : data;
    if (dir.empty()) throw ConfigError("no data directory for split '" + split + "'");
    const auto sessions = load_dir(dir, run.config.subject, true, split);
    const auto report = evaluate_model(run, sessions, data.empty() ? split : dir);
    if (!out.empty()) {
        write_file(std::filesystem::path(out) / "report.json", report_json(report));
        write_file(std::filesystem::path(out) / "report.txt", report_text(report));
    }
    std::cout << report_text(report);
    return 0;
}

int cmd_predict(const std::string& checkpoint, const std::string& data, const std::string& out,
                const Overrides& overrides) {
    auto run = load_run(checkpoint, overrides);
    auto sessions = load_dir(data, run.config.subject, false, "input");
    if (sessions.empty()) throw ConfigError("no sessions found under " + data);
    for (const auto& s : sessions) {
        for (const auto& w : s.warnings) std::cerr << "warning: " << s.id << "/" << to_string(s.role) << ": " << w << "\n";
    }
    sessions = normalize(std::move(sessions), run.stats);
    const auto preds = predict_sessions(*run.model, sessions, run.config.window, run.config.stride, run.config.batch_size);
    for (const auto& path : write_predictions(out, sessions, preds)) std::cout << path.string() << "\n";
    return 0;
}

int cmd_ablate(const std::string& config_path, const std::string& out, const Overrides& overrides) {
    const auto config = make_config(config_path, overrides);
    const auto train = load_dir(config.train_dir, SubjectFilter::Both, true, "training");
    const auto val = load_dir(config.val_dir, SubjectFilter::Both, true, "validation");
    const auto test = load_dir(config.test_dir, SubjectFilter::Both, false, "test");
    if (train.empty()) throw ConfigError("data.train is not set or empty");
    const auto report = run_ablation(config, train, val, test, [](const AblationCell& c) {
        std::fprintf(stderr, "%s/%s/%s/%s: val %s%s\n", to_string(c.conv).c_str(), to_string(c.fusion).c_str(),
                     to_string(c.subject).c_str(), to_string(c.modalities).c_str(),
                     c.val_ccc ? std::to_string(*c.val_ccc).c_str() : "-",
                     c.error.empty() ? "" : (" error: " + c.error).c_str());
    });
    const std::filesystem::path dir = out.empty() ? std::filesystem::path(config.output_dir) : std::filesystem::path(out);
    write_file(dir / "ablation.json", ablation_json(report));
    write_file(dir / "ablation.txt", ablation_text(report));
    std::cout << ablation_text(report);
    return 0;
}

int cmd_gen_synth(const std::string& config_path, const std::string& out, const Overrides& overrides) {
    const auto config = make_config(config_path, overrides);
    const auto splits = generate_synthetic_splits(config.synth, config.synth_train, config.synth_val, config.synth_test);
    const std::filesystem::path root(out);
    auto write_split = [&](const std::string& name, const std::vector<Session>& sessions) {
        for (const auto& s : sessions) write_session(root / name, s);
        if (!sessions.empty()) std::cout << name << ": " << sessions.size() << " participants -> " << (root / name).string() << "\n";
    };
    write_split("train", splits.train);
    write_split("val", splits.val);
    write_split("test", splits.test);
    return 0;
}

int cmd_verify(const VerifyOptions& options) {
    const auto results = run_verify(options, [](const CheckResult& r) {
        std::cout << (r.passed ? "PASS " : "FAIL ") << r.name << ": " << r.detail << std::endl;
    });
    std::size_t failed = 0;
    for (const auto& r : results) failed += r.passed ? 0 : 1;
    std::cout << (failed ? std::to_string(failed) + " check(s) failed" : std::string("all checks passed")) << "\n";
    return failed ? 3 : 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Dilated convolutional transformer for frame-wise engagement regression"};
    app.require_subcommand(1);

    std::string config_path, checkpoint, split = "val", data, out;
    VerifyOptions verify_options;

    auto* train = app.add_subcommand("train", "Train a model and write a run directory");
    train->add_option("-c,--config", config_path, "Config file (key = value)");
    train->allow_extras();

    auto* evaluate = app.add_subcommand("evaluate", "Score a checkpoint on a labeled split");
    evaluate->add_option("--checkpoint", checkpoint, "best.dctm or last.dctm inside a run directory")->required();
    evaluate->add_option("--split", split, "train, val or test (paths from the run config)");
    evaluate->add_option("--data", data, "Explicit data directory instead of --split");
    evaluate->add_option("--out", out, "Directory for report.json / report.txt");
    evaluate->allow_extras();

    auto* predict = app.add_subcommand("predict", "Write per-frame scores for every session");
    predict->add_option("--checkpoint", checkpoint, "Checkpoint inside a run directory")->required();
    predict->add_option("--data", data, "Session directory")->required();
    predict->add_option("--out", out, "Output directory")->required();
    predict->allow_extras();

    auto* ablate = app.add_subcommand("ablate", "Train and score the conv x fusion x subject x modality grid");
    ablate->add_option("-c,--config", config_path, "Config file");
    ablate->add_option("--out", out, "Output directory (default: output key)");
    ablate->allow_extras();

    auto* gen = app.add_subcommand("gen-synth", "Write synthetic train/val/test sessions");
    gen->add_option("-c,--config", config_path, "Config file (synth.* keys)");
    gen->add_option("--out", out, "Output root")->required();
    gen->allow_extras();

    auto* verify = app.add_subcommand("verify", "Gradient checks and numerical oracles");
    verify->add_option("--seed", verify_options.seed, "Random seed");
    verify->add_option("--configs", verify_options.grad_configs, "Random configurations per op");
    verify->add_flag("--corrupt-conv-backward", verify_options.corrupt_conv_backward,
                     "Perturb the conv input gradient (negative control)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    try {
        if (*train) return cmd_train(config_path, parse_overrides(train->remaining()));
        if (*evaluate) return cmd_evaluate(checkpoint, split, data, out, parse_overrides(evaluate->remaining()));
        if (*predict) return cmd_predict(checkpoint, data, out, parse_overrides(predict->remaining()));
        if (*ablate) return cmd_ablate(config_path, out, parse_overrides(ablate->remaining()));
        if (*gen) return cmd_gen_synth(config_path, out, parse_overrides(gen->remaining()));
        if (*verify) return cmd_verify(verify_options);
    } catch (const NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
