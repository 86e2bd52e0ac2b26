#include "eqdisc/fit.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <unordered_map>

#include <Eigen/Dense>

#include "eqdisc/errors.hpp"

namespace eqdisc {

void FitConfig::validate() const {
    if (multistart_count < 1 || max_iterations < 1 || !(tolerance > 0.0) || !(penalty > 0.0))
        throw ConfigError("fit config values must be positive");
}

bool score_better(const Score& a, const Score& b) {
    if (a.ok() != b.ok()) return a.ok();
    if (!a.ok()) return false;
    if (a.r2 != b.r2) return a.r2 > b.r2;
    return a.mse < b.mse;
}

Score score_predictions(std::span<const double> predictions, std::span<const double> targets) {
    const std::size_t n = targets.size();
    if (n == 0) throw DataError("cannot score an empty subset");
    if (predictions.size() != n) throw DataError("prediction/target length mismatch");

    double mean = 0.0;
    for (double y : targets) mean += y;
    mean /= static_cast<double>(n);

    double sse = 0.0, sst = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (!std::isfinite(predictions[i])) return Score::failed();
        const double e = predictions[i] - targets[i];
        const double d = targets[i] - mean;
        sse += e * e;
        sst += d * d;
    }

    Score s;
    s.mse = sse / static_cast<double>(n);
    if (sst == 0.0) {
        if (sse == 0.0) s.r2 = 1.0;
        else return Score::failed();
    } else {
        s.r2 = 1.0 - sse / sst;
    }
    return s;
}

namespace {

struct RowEvaluator {
    const Expression* expr;
    std::unordered_map<std::string, std::size_t> columns;

    double operator()(std::span<const double> coeffs, std::span<const double> row) const {
        return expr->evaluate(coeffs, [&](const std::string& name) {
            return row[columns.at(name)];
        });
    }
};

RowEvaluator bind_columns(const Expression& expr, const ProcessSchema& schema) {
    RowEvaluator ev{&expr, {}};
    for (const auto& var : expr.variables()) {
        const int idx = schema.input_index(var);
        if (idx < 0) throw DataError("expression variable '" + var + "' is not a schema input");
        ev.columns[var] = static_cast<std::size_t>(idx);
    }
    return ev;
}

} // namespace

Score score(const Expression& expr, std::span<const double> coeffs, const DataView& view) {
    if (view.size() == 0) throw DataError("cannot score an empty subset");
    const RowEvaluator eval = bind_columns(expr, view.data->schema);
    std::vector<double> preds(view.size()), targets(view.size());
    for (std::size_t i = 0; i < view.size(); ++i) {
        preds[i] = eval(coeffs, view.inputs(i));
        targets[i] = view.target_value(i);
    }
    return score_predictions(preds, targets);
}

namespace {

struct LmProblem {
    const RowEvaluator* eval;
    const DataView* view;
    double penalty;

    void residuals(const Eigen::VectorXd& c, Eigen::VectorXd& r) const {
        const std::span<const double> coeffs(c.data(), static_cast<std::size_t>(c.size()));
        for (std::size_t i = 0; i < view->size(); ++i) {
            const double pred = (*eval)(coeffs, view->inputs(i));
            r(static_cast<Eigen::Index>(i)) =
                std::isfinite(pred) ? pred - view->target_value(i) : penalty;
        }
    }
};

struct LmOutcome {
    Eigen::VectorXd coefficients;
    double sse = std::numeric_limits<double>::infinity();
};

LmOutcome levenberg_marquardt(const LmProblem& problem, Eigen::VectorXd c, const FitConfig& cfg) {
    const Eigen::Index m = static_cast<Eigen::Index>(problem.view->size());
    const Eigen::Index k = c.size();

    Eigen::VectorXd r(m), r_try(m), r_step(m);
    problem.residuals(c, r);
    double sse = r.squaredNorm();
    if (!std::isfinite(sse)) return {c, std::numeric_limits<double>::infinity()};

    Eigen::MatrixXd jac(m, k);
    double lambda = 1e-3;
    constexpr double kStepScale = 1.4901161193847656e-08; // sqrt(machine epsilon)

    for (int iter = 0; iter < cfg.max_iterations; ++iter) {
        for (Eigen::Index j = 0; j < k; ++j) {
            const double h = kStepScale * (1.0 + std::fabs(c(j)));
            Eigen::VectorXd c_step = c;
            c_step(j) += h;
            problem.residuals(c_step, r_step);
            jac.col(j) = (r_step - r) / h;
        }
        const Eigen::VectorXd gradient = jac.transpose() * r;
        if (gradient.lpNorm<Eigen::Infinity>() < 1e-14) break;
        const Eigen::MatrixXd hessian = jac.transpose() * jac;

        bool accepted = false;
        for (int attempt = 0; attempt < 24; ++attempt) {
            Eigen::MatrixXd damped = hessian;
            for (Eigen::Index j = 0; j < k; ++j)
                damped(j, j) += lambda * std::max(hessian(j, j), 1e-12);
            const Eigen::VectorXd delta = damped.ldlt().solve(-gradient);
            const Eigen::VectorXd c_try = c + delta;
            problem.residuals(c_try, r_try);
            const double sse_try = r_try.squaredNorm();
            if (std::isfinite(sse_try) && sse_try < sse) { // accepted steps never increase SSE
                const double rel = (sse - sse_try) / std::max(sse, 1e-300);
                c = c_try;
                r = r_try;
                sse = sse_try;
                lambda = std::max(lambda / 3.0, 1e-12);
                accepted = true;
                if (rel < cfg.tolerance) return {c, sse};
                break;
            }
            lambda *= 10.0;
            if (lambda > 1e14) return {c, sse};
        }
        if (!accepted) break;
    }
    return {c, sse};
}

} // namespace

FitResult fit_candidate(const Expression& expr, const DataView& train, const FitConfig& cfg,
                        std::span<const double> init) {
    cfg.validate();
    const std::size_t n = train.size();
    if (n == 0) throw DataError("cannot fit on an empty subset");
    const int k = expr.coefficient_count();
    const RowEvaluator eval = bind_columns(expr, train.data->schema);

    FitResult result;
    result.underdetermined = static_cast<std::size_t>(k) > n;

    if (k == 0) {
        result.linear_path = true;
        result.train = score(expr, {}, train);
        return result;
    }

    std::vector<double> targets(n);
    for (std::size_t i = 0; i < n; ++i) targets[i] = train.target_value(i);

    if (is_linear_in_coefficients(expr)) {
        result.linear_path = true;
        // Column j of the design is f(x; e_j) - f(x; 0).
        Eigen::MatrixXd design(n, k);
        Eigen::VectorXd rhs(static_cast<Eigen::Index>(n));
        std::vector<double> probe(static_cast<std::size_t>(k), 0.0);
        bool finite = true;
        for (std::size_t i = 0; i < n && finite; ++i) {
            const double base = eval(probe, train.inputs(i));
            if (!std::isfinite(base)) { finite = false; break; }
            rhs(static_cast<Eigen::Index>(i)) = targets[i] - base;
            for (int j = 0; j < k; ++j) {
                probe[static_cast<std::size_t>(j)] = 1.0;
                const double v = eval(probe, train.inputs(i)) - base;
                probe[static_cast<std::size_t>(j)] = 0.0;
                if (!std::isfinite(v)) { finite = false; break; }
                design(static_cast<Eigen::Index>(i), j) = v;
            }
        }
        if (!finite) {
            // Coefficients enter linearly, so no coefficient choice can fix a
            // non-finite basis value on the training rows.
            result.coefficients.assign(static_cast<std::size_t>(k), 0.0);
            result.train = Score::failed();
            return result;
        }
        Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(design);
        const Eigen::VectorXd solution = cod.solve(rhs);
        result.coefficients.assign(solution.data(), solution.data() + k);
        result.train = score(expr, result.coefficients, train);
        return result;
    }

    // Nonlinear coefficient placement: seeded multistart Levenberg-Marquardt.
    std::vector<Eigen::VectorXd> starts;
    starts.emplace_back(Eigen::VectorXd::Zero(k));
    starts.emplace_back(Eigen::VectorXd::Ones(k));
    if (static_cast<int>(init.size()) == k) {
        Eigen::VectorXd s(k);
        for (int j = 0; j < k; ++j) s(j) = init[static_cast<std::size_t>(j)];
        starts.push_back(std::move(s));
    }
    std::mt19937_64 rng(cfg.seed);
    auto uniform01 = [&] { return static_cast<double>(rng() >> 11) * 0x1.0p-53; };
    while (static_cast<int>(starts.size()) < cfg.multistart_count) {
        Eigen::VectorXd s(k);
        for (int j = 0; j < k; ++j) {
            const double u1 = std::max(uniform01(), 1e-12);
            const double u2 = uniform01();
            s(j) = std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
        }
        starts.push_back(std::move(s));
    }

    const LmProblem problem{&eval, &train, cfg.penalty};
    LmOutcome best;
    for (const auto& start : starts) {
        LmOutcome outcome = levenberg_marquardt(problem, start, cfg);
        if (outcome.sse < best.sse) best = std::move(outcome);
    }

    if (!std::isfinite(best.sse)) {
        result.coefficients.assign(static_cast<std::size_t>(k), 0.0);
        result.train = Score::failed();
        return result;
    }
    result.coefficients.assign(best.coefficients.data(), best.coefficients.data() + k);
    result.train = score(expr, result.coefficients, train);
    return result;
}

double relative_validation_error(const Score& validation, std::span<const double> validation_targets) {
    if (!validation.ok()) return std::numeric_limits<double>::infinity();
    const std::size_t n = validation_targets.size();
    if (n == 0) throw DataError("validation subset is empty");
    double mean = 0.0;
    for (double y : validation_targets) mean += y;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double y : validation_targets) var += (y - mean) * (y - mean);
    var /= static_cast<double>(n);
    if (var == 0.0) return std::numeric_limits<double>::infinity();
    return validation.mse / var;
}

bool success_criterion(const Score& validation, std::span<const double> validation_targets,
                       std::string* diagnostic) {
    if (validation_targets.empty()) throw DataError("validation subset is empty");
    if (!validation.ok()) {
        if (diagnostic) *diagnostic = "validation score is the failed sentinel";
        return false;
    }
    double mean = 0.0;
    for (double y : validation_targets) mean += y;
    mean /= static_cast<double>(validation_targets.size());
    double var = 0.0;
    for (double y : validation_targets) var += (y - mean) * (y - mean);
    var /= static_cast<double>(validation_targets.size());
    if (var == 0.0) {
        if (diagnostic) *diagnostic = "validation targets have zero variance";
        return false;
    }
    return validation.mse / var < 0.02;
}

} // namespace eqdisc
