#include "dctm/ridge.hpp"

#include <Eigen/Dense>

#include "dctm/errors.hpp"
#include "dctm/metrics.hpp"

namespace dctm {

namespace {

std::size_t feature_count(const Session& s, const std::vector<Modality>& modalities) {
    std::size_t n = 0;
    for (Modality m : modalities) n += s.stream(m).channels;
    return n;
}

void frame_features(const Session& s, const std::vector<Modality>& modalities, std::size_t t, double* out) {
    for (Modality m : modalities) {
        const auto& st = s.stream(m);
        for (std::size_t c = 0; c < st.channels; ++c) *out++ = st.at(t, c);
    }
}

} // namespace

RidgeModel fit_ridge(const std::vector<Session>& sessions, const std::vector<Modality>& modalities, double lambda) {
    if (sessions.empty()) throw DataError("ridge: no training sessions");
    const std::size_t dim = feature_count(sessions.front(), modalities);
    std::size_t rows = 0;
    for (const auto& s : sessions) {
        if (!s.labeled()) throw DataError("ridge: session " + s.id + " has no labels");
        for (std::size_t t = 0; t < s.frames(); ++t) rows += s.mask[t] ? 1 : 0;
    }
    if (rows < 2) throw DataError("ridge: fewer than two labeled frames");
    Eigen::MatrixXd x(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(dim));
    Eigen::VectorXd y(static_cast<Eigen::Index>(rows));
    std::vector<double> buf(dim);
    Eigen::Index r = 0;
    for (const auto& s : sessions) {
        for (std::size_t t = 0; t < s.frames(); ++t) {
            if (!s.mask[t]) continue;
            frame_features(s, modalities, t, buf.data());
            for (std::size_t j = 0; j < dim; ++j) x(r, static_cast<Eigen::Index>(j)) = buf[j];
            y(r) = s.labels[t];
            ++r;
        }
    }
    const Eigen::RowVectorXd x_mean = x.colwise().mean();
    const double y_mean = y.mean();
    x.rowwise() -= x_mean;
    y.array() -= y_mean;
    Eigen::MatrixXd gram = x.transpose() * x;
    gram.diagonal().array() += lambda;
    const Eigen::VectorXd w = gram.ldlt().solve(x.transpose() * y);

    RidgeModel model;
    model.modalities = modalities;
    model.lambda = lambda;
    model.weights.assign(w.data(), w.data() + w.size());
    model.intercept = y_mean - x_mean.dot(w);
    return model;
}

std::vector<double> predict_ridge(const RidgeModel& model, const Session& session) {
    const std::size_t dim = feature_count(session, model.modalities);
    if (dim != model.weights.size()) throw DimensionError("ridge: session feature count differs from the fitted model");
    std::vector<double> buf(dim);
    std::vector<double> out(session.frames());
    for (std::size_t t = 0; t < session.frames(); ++t) {
        frame_features(session, model.modalities, t, buf.data());
        double v = model.intercept;
        for (std::size_t j = 0; j < dim; ++j) v += model.weights[j] * buf[j];
        out[t] = v;
    }
    return out;
}

RidgeBaseline ridge_baseline(const std::vector<Session>& train, const std::vector<Session>& val,
                             const std::vector<Modality>& modalities, const std::vector<double>& lambdas) {
    if (lambdas.empty()) throw ContractError("ridge_baseline: empty lambda grid");
    RidgeBaseline best;
    bool have = false;
    for (double lambda : lambdas) {
        RidgeModel model = fit_ridge(train, modalities, lambda);
        std::vector<double> pred;
        std::vector<double> truth;
        for (const auto& s : val) {
            auto p = predict_ridge(model, s);
            for (std::size_t t = 0; t < s.frames(); ++t) {
                if (!s.labeled() || !s.mask[t]) continue;
                pred.push_back(p[t]);
                truth.push_back(s.labels[t]);
            }
        }
        const double score = ccc(pred, truth).ccc;
        if (!have || score > best.val_ccc) {
            best.model = std::move(model);
            best.val_ccc = score;
            have = true;
        }
    }
    return best;
}

} // namespace dctm
