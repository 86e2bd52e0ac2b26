#include "eqdisc/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <numeric>
#include <random>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "eqdisc/errors.hpp"

namespace eqdisc {

GprConfig GprConfig::defaults() {
    GprConfig cfg;
    // 24 knots: a coarser grid can miss the likelihood optimum by enough to
    // visibly bend interpolation between grid points
    const int count = 24;
    cfg.length_scales.resize(count);
    const double lo = std::log(1e-2), hi = std::log(1e2);
    for (int i = 0; i < count; ++i)
        cfg.length_scales[static_cast<std::size_t>(i)] =
            std::exp(lo + (hi - lo) * static_cast<double>(i) / (count - 1));
    return cfg;
}

namespace {

double squared_distance(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

struct CholeskyFit {
    Eigen::VectorXd alpha;
    double lml = -std::numeric_limits<double>::infinity();
    bool ok = false;
};

CholeskyFit solve_gp(const Eigen::MatrixXd& kernel, const Eigen::VectorXd& y, double noise) {
    const Eigen::Index n = y.size();
    Eigen::MatrixXd K = kernel;
    for (Eigen::Index i = 0; i < n; ++i) K(i, i) += noise;
    Eigen::LLT<Eigen::MatrixXd> llt(K);
    if (llt.info() != Eigen::Success) return {};

    CholeskyFit fit;
    fit.alpha = llt.solve(y);
    const Eigen::MatrixXd& L = llt.matrixLLT();
    double log_det_half = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) log_det_half += std::log(L(i, i));
    fit.lml = -0.5 * y.dot(fit.alpha) - log_det_half -
              0.5 * static_cast<double>(n) * std::log(2.0 * M_PI);
    fit.ok = std::isfinite(fit.lml);
    return fit;
}

} // namespace

GprModel GprModel::fit(const DataView& train, const GprConfig& cfg) {
    const std::size_t n = train.size();
    if (n < 1) throw DataError("GPR needs at least one training row");
    const std::size_t d = train.data->schema.inputs.size();

    GprModel model;
    model.input_mean_.assign(d, 0.0);
    model.input_sd_.assign(d, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) model.input_mean_[j] += train.inputs(i)[j];
    for (auto& m : model.input_mean_) m /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) {
            const double c = train.inputs(i)[j] - model.input_mean_[j];
            model.input_sd_[j] += c * c;
        }
    for (auto& s : model.input_sd_) {
        s = std::sqrt(s / static_cast<double>(n));
        if (s == 0.0) s = 1.0;
    }

    model.train_inputs_.resize(n, std::vector<double>(d));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j)
            model.train_inputs_[i][j] = (train.inputs(i)[j] - model.input_mean_[j]) / model.input_sd_[j];

    Eigen::VectorXd y(static_cast<Eigen::Index>(n));
    model.target_mean_ = 0.0;
    for (std::size_t i = 0; i < n; ++i) model.target_mean_ += train.target_value(i);
    model.target_mean_ /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i)
        y(static_cast<Eigen::Index>(i)) = train.target_value(i) - model.target_mean_;

    double signal = y.squaredNorm() / static_cast<double>(n);
    if (signal == 0.0) signal = 1.0; // constant targets: prior mean carries the prediction
    model.signal_variance_ = signal;

    double best_lml = -std::numeric_limits<double>::infinity();
    bool found = false;
    for (double ell : cfg.length_scales) {
        Eigen::MatrixXd kernel(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                kernel(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                    signal * std::exp(-squared_distance(model.train_inputs_[i], model.train_inputs_[j]) /
                                      (2.0 * ell * ell));
        for (double nf : cfg.noise_fractions) {
            const double noise = nf * signal;
            bool jittered = false;
            CholeskyFit fit = solve_gp(kernel, y, noise);
            if (!fit.ok) {
                fit = solve_gp(kernel, y, noise + cfg.jitter * signal);
                jittered = true;
            }
            if (!fit.ok) continue;
            found = true;
            if (fit.lml > best_lml) {
                best_lml = fit.lml;
                model.length_scale_ = ell;
                model.noise_variance_ = noise;
                model.lml_ = fit.lml;
                model.jitter_added_ = jittered;
                model.alpha_.assign(fit.alpha.data(), fit.alpha.data() + fit.alpha.size());
            }
        }
    }
    if (!found) throw DataError("GPR: every hyperparameter choice produced a singular kernel");
    return model;
}

double GprModel::predict(std::span<const double> row) const {
    const std::size_t d = input_mean_.size();
    std::vector<double> x(d);
    for (std::size_t j = 0; j < d; ++j) x[j] = (row[j] - input_mean_[j]) / input_sd_[j];
    double mu = 0.0;
    for (std::size_t i = 0; i < train_inputs_.size(); ++i) {
        const double k = signal_variance_ *
                         std::exp(-squared_distance(x, train_inputs_[i]) /
                                  (2.0 * length_scale_ * length_scale_));
        mu += k * alpha_[i];
    }
    return mu + target_mean_;
}

// ---------------------------------------------------------------------------
// Random forest

namespace {

struct SplitChoice {
    int feature = -1;
    double threshold = 0.0;
    double cost = std::numeric_limits<double>::infinity();
};

double subset_sse(const std::vector<double>& ys, std::size_t from, std::size_t to,
                  const std::vector<double>& prefix, const std::vector<double>& prefix_sq) {
    const double sum = prefix[to] - prefix[from];
    const double sum_sq = prefix_sq[to] - prefix_sq[from];
    const double count = static_cast<double>(to - from);
    (void)ys;
    return sum_sq - sum * sum / count;
}

} // namespace

ForestModel ForestModel::fit(const DataView& train, const ForestConfig& cfg, std::uint64_t seed) {
    const std::size_t n = train.size();
    if (n < 1) throw DataError("RFR needs at least one training row");
    if (cfg.tree_count < 1 || cfg.min_leaf < 1) throw ConfigError("forest config values must be positive");
    const std::size_t d = train.data->schema.inputs.size();

    ForestModel model;
    model.train_min_ = std::numeric_limits<double>::infinity();
    model.train_max_ = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
        model.train_min_ = std::min(model.train_min_, train.target_value(i));
        model.train_max_ = std::max(model.train_max_, train.target_value(i));
    }

    std::mt19937_64 rng(seed);
    model.trees_.resize(static_cast<std::size_t>(cfg.tree_count));

    for (auto& tree : model.trees_) {
        std::vector<std::size_t> sample(n);
        for (auto& s : sample) s = static_cast<std::size_t>(rng() % n);

        // Recursive variance-reduction splitter over the bootstrap sample.
        std::function<int(std::vector<std::size_t>)> build = [&](std::vector<std::size_t> rows) -> int {
            double mean = 0.0;
            for (std::size_t r : rows) mean += train.target_value(r);
            mean /= static_cast<double>(rows.size());

            bool constant = true;
            for (std::size_t r : rows)
                if (train.target_value(r) != train.target_value(rows[0])) constant = false;

            auto make_leaf = [&] {
                tree.nodes.push_back({-1, 0.0, -1, -1, mean});
                return static_cast<int>(tree.nodes.size() - 1);
            };
            if (rows.size() < 2 * static_cast<std::size_t>(cfg.min_leaf) || constant) return make_leaf();

            SplitChoice best;
            for (std::size_t f = 0; f < d; ++f) {
                std::vector<std::size_t> order = rows;
                std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
                    return train.inputs(a)[f] < train.inputs(b)[f];
                });
                std::vector<double> ys(order.size());
                for (std::size_t i = 0; i < order.size(); ++i) ys[i] = train.target_value(order[i]);
                std::vector<double> prefix(order.size() + 1, 0.0), prefix_sq(order.size() + 1, 0.0);
                for (std::size_t i = 0; i < order.size(); ++i) {
                    prefix[i + 1] = prefix[i] + ys[i];
                    prefix_sq[i + 1] = prefix_sq[i] + ys[i] * ys[i];
                }
                for (std::size_t cut = static_cast<std::size_t>(cfg.min_leaf);
                     cut + static_cast<std::size_t>(cfg.min_leaf) <= order.size(); ++cut) {
                    const double left_v = train.inputs(order[cut - 1])[f];
                    const double right_v = train.inputs(order[cut])[f];
                    if (left_v == right_v) continue;
                    const double cost = subset_sse(ys, 0, cut, prefix, prefix_sq) +
                                        subset_sse(ys, cut, order.size(), prefix, prefix_sq);
                    if (cost < best.cost) {
                        best.cost = cost;
                        best.feature = static_cast<int>(f);
                        best.threshold = 0.5 * (left_v + right_v);
                    }
                }
            }
            if (best.feature < 0) return make_leaf(); // all features constant on this subset

            std::vector<std::size_t> left, right;
            for (std::size_t r : rows) {
                if (train.inputs(r)[static_cast<std::size_t>(best.feature)] <= best.threshold)
                    left.push_back(r);
                else right.push_back(r);
            }
            const int self = static_cast<int>(tree.nodes.size());
            tree.nodes.push_back({best.feature, best.threshold, -1, -1, mean});
            const int l = build(std::move(left));
            const int r = build(std::move(right));
            tree.nodes[static_cast<std::size_t>(self)].left = l;
            tree.nodes[static_cast<std::size_t>(self)].right = r;
            return self;
        };
        build(sample);
    }
    return model;
}

double ForestModel::predict(std::span<const double> row) const {
    double sum = 0.0;
    for (const auto& tree : trees_) {
        int at = 0;
        while (tree.nodes[static_cast<std::size_t>(at)].feature >= 0) {
            const auto& node = tree.nodes[static_cast<std::size_t>(at)];
            at = row[static_cast<std::size_t>(node.feature)] <= node.threshold ? node.left : node.right;
        }
        sum += tree.nodes[static_cast<std::size_t>(at)].value;
    }
    return sum / static_cast<double>(trees_.size());
}

// ---------------------------------------------------------------------------
// Comparison report

namespace {

Score score_view(const DataView& view, const std::function<double(std::span<const double>)>& predict) {
    std::vector<double> preds(view.size()), targets(view.size());
    for (std::size_t i = 0; i < view.size(); ++i) {
        preds[i] = predict(view.inputs(i));
        targets[i] = view.target_value(i);
    }
    return score_predictions(preds, targets);
}

} // namespace

CompareReport compare_report(const SplitDataset& split, const std::string& target_output,
                             const ModelCandidate& candidate, const GprModel& gpr,
                             const ForestModel& rfr) {
    const Dataset& ds = *split.dataset;
    const int target_idx = ds.target_index(target_output);
    if (target_idx < 0) throw ConfigError("dataset has no target '" + target_output + "'");
    const std::size_t t = static_cast<std::size_t>(target_idx);

    CompareReport report;
    report.process = ds.schema.process;
    report.target_output = target_output;
    report.placeholder_ranges = ds.schema.placeholder_ranges;

    const auto add = [&](const std::string& name,
                         const std::function<double(std::span<const double>)>& predict) {
        report.rows.push_back({name, "validation", score_view(split.validation_view(t), predict)});
        report.rows.push_back({name, "test", score_view(split.test_view(t), predict)});
    };

    add("candidate", [&](std::span<const double> row) {
        return candidate.expression.evaluate(candidate.coefficients, [&](const std::string& name) {
            return row[static_cast<std::size_t>(ds.schema.input_index(name))];
        });
    });
    add("gpr", [&](std::span<const double> row) { return gpr.predict(row); });
    add("rfr", [&](std::span<const double> row) { return rfr.predict(row); });
    return report;
}

void write_compare_csv(const CompareReport& report, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write comparison csv: " + path);
    out.precision(17);
    out << "model,subset,mse,r2\n";
    for (const auto& row : report.rows) {
        out << row.model << ',' << row.subset << ',';
        if (row.scored.ok()) out << row.scored.mse << ',' << row.scored.r2;
        else out << ",";
        out << '\n';
    }
}

void write_compare_json(const CompareReport& report, const std::string& path) {
    nlohmann::json j;
    j["process"] = report.process;
    j["target_output"] = report.target_output;
    j["inputs_standardized"] = report.inputs_standardized;
    j["placeholder_ranges"] = report.placeholder_ranges;
    j["rows"] = nlohmann::json::array();
    for (const auto& row : report.rows) {
        nlohmann::json r;
        r["model"] = row.model;
        r["subset"] = row.subset;
        if (row.scored.ok()) {
            r["mse"] = row.scored.mse;
            r["r2"] = row.scored.r2;
        } else {
            r["failed"] = true;
        }
        j["rows"].push_back(std::move(r));
    }
    std::ofstream out(path);
    if (!out) throw DataError("cannot write comparison json: " + path);
    out << j.dump(2) << "\n";
}

} // namespace eqdisc
