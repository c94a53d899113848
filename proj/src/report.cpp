#include <cstdio>
#include <sstream>

#include "dctm/harness.hpp"
#include "json.hpp"

namespace dctm {

namespace {

using nlohmann::ordered_json;

ordered_json ccc_json(const CccResult& r) {
    return ordered_json{{"ccc", r.ccc},         {"pearson", r.pearson}, {"mean_pred", r.mean_x},
                        {"mean_label", r.mean_y}, {"var_pred", r.var_x},  {"var_label", r.var_y},
                        {"n", r.n},             {"degenerate", r.degenerate}};
}

ordered_json config_json(const std::vector<std::pair<std::string, std::string>>& config) {
    ordered_json out = ordered_json::object();
    for (const auto& [k, v] : config) out[k] = v;
    return out;
}

template <typename T>
ordered_json optional_json(const std::optional<T>& v) {
    return v ? ordered_json(*v) : ordered_json(nullptr);
}

std::string fixed(double v, int digits = 4) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

std::string fixed(const std::optional<double>& v) { return v ? fixed(*v) : std::string("-"); }

std::string pad(std::string s, std::size_t width) {
    if (s.size() < width) s.append(width - s.size(), ' ');
    return s;
}

} // namespace

std::string report_json(const EvalReport& report) {
    ordered_json j;
    j["command"] = report.command;
    j["split"] = report.split;
    if (report.scores) {
        const auto& s = *report.scores;
        j["ccc_overall"] = ccc_json(s.overall);
        j["ccc_session_mean"] = s.session_mean;
        ordered_json sessions = ordered_json::array();
        for (const auto& ps : s.per_session) {
            ordered_json e{{"session", ps.id}, {"role", to_string(ps.role)}};
            e["ccc"] = ps.result ? ordered_json(ps.result->ccc) : ordered_json(nullptr);
            e["n"] = ps.result ? ps.result->n : 0;
            e["degenerate"] = ps.result ? ps.result->degenerate : true;
            sessions.push_back(std::move(e));
        }
        j["ccc_per_session"] = std::move(sessions);
        j["degeneracy_flags"] = s.degeneracy;
    } else {
        j["ccc_overall"] = nullptr;
    }
    if (report.command == "train") {
        ordered_json epochs = ordered_json::array();
        for (const auto& e : report.epochs) {
            epochs.push_back({{"epoch", e.epoch}, {"steps", e.steps}, {"train_loss", e.train_loss},
                              {"val_ccc", optional_json(e.val_ccc)}});
        }
        j["epochs"] = std::move(epochs);
        j["best_epoch"] = report.best_epoch;
        j["best_val_ccc"] = optional_json(report.best_val_ccc);
        j["steps"] = report.steps;
        j["loss_curve"] = report.loss_curve;
    }
    j["top_gate_last_modality"] = optional_json(report.voice_gate);
    j["warnings"] = report.warnings;
    j["config"] = config_json(report.config);
    j["build_id"] = report.build;
    j["wall_seconds"] = report.wall_seconds;
    return j.dump(2) + "\n";
}

std::string report_text(const EvalReport& report) {
    std::ostringstream out;
    out << "command: " << report.command << "  split: " << report.split << "  build: " << report.build << "\n";
    if (report.command == "train") {
        out << "\nepoch  steps  train_loss  val_ccc\n";
        for (const auto& e : report.epochs) {
            out << pad(std::to_string(e.epoch), 7) << pad(std::to_string(e.steps), 7) << pad(fixed(e.train_loss), 12)
                << fixed(e.val_ccc) << "\n";
        }
        out << "best epoch: " << report.best_epoch << "\n";
    }
    if (report.scores) {
        const auto& s = *report.scores;
        out << "\nccc (concatenated frames): " << fixed(s.overall.ccc) << "  n=" << s.overall.n << "\n";
        out << "ccc (session mean):        " << fixed(s.session_mean) << "\n\n";
        out << pad("session", 20) << pad("role", 8) << pad("ccc", 10) << "frames\n";
        for (const auto& ps : s.per_session) {
            out << pad(ps.id, 20) << pad(to_string(ps.role), 8)
                << pad(ps.result ? fixed(ps.result->ccc) : std::string("-"), 10) << (ps.result ? ps.result->n : 0)
                << "\n";
        }
        for (const auto& d : s.degeneracy) out << "degenerate: " << d << "\n";
    }
    if (report.voice_gate) out << "top-level gate on last modality: " << fixed(*report.voice_gate) << "\n";
    for (const auto& w : report.warnings) out << "warning: " << w << "\n";
    out << "\nconfig:\n";
    for (const auto& [k, v] : report.config) out << "  " << k << " = " << v << "\n";
    out << "wall time: " << fixed(report.wall_seconds, 1) << " s\n";
    return out.str();
}

std::string ablation_json(const AblationReport& report) {
    ordered_json j;
    ordered_json grid = ordered_json::array();
    for (const auto& c : report.cells) {
        ordered_json e{{"conv", to_string(c.conv)},
                       {"fusion", to_string(c.fusion)},
                       {"subject", to_string(c.subject)},
                       {"modalities", to_string(c.modalities)},
                       {"receptive_field", c.receptive_field},
                       {"val_ccc", optional_json(c.val_ccc)},
                       {"test_ccc", optional_json(c.test_ccc)},
                       {"top_gate_last_modality", optional_json(c.voice_gate)},
                       {"seconds", c.seconds}};
        e["error"] = c.error.empty() ? ordered_json(nullptr) : ordered_json(c.error);
        grid.push_back(std::move(e));
    }
    j["grid"] = std::move(grid);
    ordered_json mags = ordered_json::array();
    for (const auto& m : report.magnitudes) {
        ordered_json e = ccc_json(m.result);
        e["modality"] = to_string(m.modality);
        mags.push_back(std::move(e));
    }
    j["magnitude_ccc"] = std::move(mags);
    j["config"] = config_json(report.config);
    j["build_id"] = report.build;
    j["wall_seconds"] = report.wall_seconds;
    return j.dump(2) + "\n";
}

std::string ablation_text(const AblationReport& report) {
    std::ostringstream out;
    out << pad("conv", 13) << pad("fusion", 8) << pad("subject", 9) << pad("modalities", 17) << pad("RF", 5)
        << pad("val", 9) << pad("test", 9) << "note\n";
    for (const auto& c : report.cells) {
        out << pad(to_string(c.conv), 13) << pad(to_string(c.fusion), 8) << pad(to_string(c.subject), 9)
            << pad(to_string(c.modalities), 17) << pad(std::to_string(c.receptive_field), 5) << pad(fixed(c.val_ccc), 9)
            << pad(fixed(c.test_ccc), 9) << (c.error.empty() ? "" : "error: " + c.error) << "\n";
    }
    out << "\n" << pad("modality", 10) << pad("magnitude ccc", 15) << "frames\n";
    for (const auto& m : report.magnitudes) {
        out << pad(to_string(m.modality), 10) << pad(fixed(m.result.ccc), 15) << m.result.n << "\n";
    }
    out << "wall time: " << fixed(report.wall_seconds, 1) << " s\n";
    return out.str();
}

} // namespace dctm
