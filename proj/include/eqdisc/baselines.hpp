#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "eqdisc/dataset.hpp"
#include "eqdisc/fit.hpp"
#include "eqdisc/generator.hpp"

namespace eqdisc {

struct GprConfig {
    // log-spaced length scales in standardized input units
    std::vector<double> length_scales;
    // noise variance grid, as fractions of the signal variance
    std::vector<double> noise_fractions{0.0, 1e-8, 1e-4, 1e-2};
    double jitter = 1e-10;

    static GprConfig defaults();
};

/// RBF-kernel Gaussian process regression. Inputs are standardized and the
/// prior mean is the training-target mean; hyperparameters maximize the log
/// marginal likelihood over the config grid.
class GprModel {
public:
    static GprModel fit(const DataView& train, const GprConfig& cfg = GprConfig::defaults());

    double predict(std::span<const double> row) const;

    double length_scale() const { return length_scale_; }
    double signal_variance() const { return signal_variance_; }
    double noise_variance() const { return noise_variance_; }
    double log_marginal_likelihood() const { return lml_; }
    bool jitter_added() const { return jitter_added_; }

private:
    std::vector<std::vector<double>> train_inputs_; // standardized
    std::vector<double> alpha_;
    std::vector<double> input_mean_, input_sd_;
    double target_mean_ = 0.0;
    double length_scale_ = 1.0;
    double signal_variance_ = 1.0;
    double noise_variance_ = 0.0;
    double lml_ = 0.0;
    bool jitter_added_ = false;
};

struct ForestConfig {
    int tree_count = 100;
    int min_leaf = 1;
};

/// Bootstrap-bagged regression trees with variance-reduction splits. Every
/// prediction is a mean of training targets, so it stays inside their range.
class ForestModel {
public:
    static ForestModel fit(const DataView& train, const ForestConfig& cfg, std::uint64_t seed);

    double predict(std::span<const double> row) const;
    double train_min() const { return train_min_; }
    double train_max() const { return train_max_; }

private:
    struct Node {
        int feature = -1; // -1 marks a leaf
        double threshold = 0.0;
        int left = -1, right = -1;
        double value = 0.0;
    };
    struct Tree {
        std::vector<Node> nodes;
    };

    std::vector<Tree> trees_;
    double train_min_ = 0.0;
    double train_max_ = 0.0;
};

struct ReportRow {
    std::string model;
    std::string subset; // validation | test
    Score scored;
};

struct CompareReport {
    std::string process;
    std::string target_output;
    bool inputs_standardized = true; // GPR standardizes internally
    bool placeholder_ranges = false;
    std::vector<ReportRow> rows;
};

/// Validation and test MSE/R^2 for the discovered candidate next to the GPR
/// and RFR baselines, all trained on the same training subset. R^2 is
/// reported as-is, negatives included.
CompareReport compare_report(const SplitDataset& split, const std::string& target_output,
                             const ModelCandidate& candidate, const GprModel& gpr,
                             const ForestModel& rfr);

void write_compare_csv(const CompareReport& report, const std::string& path);
void write_compare_json(const CompareReport& report, const std::string& path);

} // namespace eqdisc
