#pragma once

#include <vector>

#include "dctm/modality.hpp"
#include "dctm/session.hpp"

namespace dctm {

// Per-frame linear regression from concatenated modality features to labels,
// fitted in closed form: w = (Xc^T Xc + lambda I)^-1 Xc^T yc on centered data.
struct RidgeModel {
    std::vector<Modality> modalities;
    std::vector<double> weights;
    double intercept = 0.0;
    double lambda = 0.0;
};

RidgeModel fit_ridge(const std::vector<Session>& sessions, const std::vector<Modality>& modalities, double lambda);
std::vector<double> predict_ridge(const RidgeModel& model, const Session& session);

struct RidgeBaseline {
    RidgeModel model;
    double val_ccc = 0.0;  // concatenated unmasked validation frames
};

/// Fits one model per lambda on `train` and keeps the one with the best
/// validation CCC.
RidgeBaseline ridge_baseline(const std::vector<Session>& train, const std::vector<Session>& val,
                             const std::vector<Modality>& modalities,
                             const std::vector<double>& lambdas = {1e-3, 1e-2, 1e-1, 1.0, 10.0, 100.0, 1000.0});

} // namespace dctm
