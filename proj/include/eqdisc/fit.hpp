#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "eqdisc/dataset.hpp"
#include "eqdisc/expr.hpp"

namespace eqdisc {

struct FitConfig {
    int multistart_count = 10;
    int max_iterations = 200;
    double tolerance = 1e-10; // relative SSE change per accepted step
    double penalty = 1e12;    // stands in for non-finite residuals
    std::uint64_t seed = 0;

    void validate() const;
};

/// mse/r2 on one data subset. A candidate whose predictions go non-finite
/// gets the failed sentinel, which ranks below every finite score.
struct Score {
    double mse = std::numeric_limits<double>::quiet_NaN();
    double r2 = std::numeric_limits<double>::quiet_NaN();

    bool ok() const { return std::isfinite(mse) && std::isfinite(r2); }
    static Score failed() { return {}; }
};

/// true iff a ranks strictly better: higher r2, then lower mse. Failed
/// scores lose to every finite score.
bool score_better(const Score& a, const Score& b);

Score score(const Expression& expr, std::span<const double> coeffs, const DataView& view);
Score score_predictions(std::span<const double> predictions, std::span<const double> targets);

struct FitResult {
    std::vector<double> coefficients;
    Score train;
    bool linear_path = false;
    bool underdetermined = false; // more coefficients than training rows
};

/// Fits the expression's coefficients to the view. Linear-in-coefficient
/// expressions go through an exact rank-revealing least-squares solve
/// (minimum-norm on rank deficiency); everything else runs seeded multistart
/// Levenberg-Marquardt with a finite-difference Jacobian. Deterministic for a
/// fixed (expr, data, cfg, init).
FitResult fit_candidate(const Expression& expr, const DataView& train, const FitConfig& cfg,
                        std::span<const double> init = {});

/// Stop rule: relative validation error mse/var(targets) below 2%.
/// Zero-variance targets fail the rule and set the diagnostic.
bool success_criterion(const Score& validation, std::span<const double> validation_targets,
                       std::string* diagnostic = nullptr);

double relative_validation_error(const Score& validation, std::span<const double> validation_targets);

} // namespace eqdisc
