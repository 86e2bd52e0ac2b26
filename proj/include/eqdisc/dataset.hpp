#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "eqdisc/expr.hpp"
#include "eqdisc/schema.hpp"

namespace eqdisc {

/// Grid data for one process: input rows plus one or more target columns.
/// Immutable after construction.
struct Dataset {
    ProcessSchema schema;
    std::vector<std::vector<double>> rows; // rows[i][j] = value of input j
    std::vector<std::string> target_names;
    std::vector<std::vector<double>> targets; // targets[t][i]

    std::size_t size() const { return rows.size(); }
    int target_index(std::string_view name) const;
    void validate() const; // throws DataError
};

/// Non-owning view over a row subset of one target column.
struct DataView {
    const Dataset* data = nullptr;
    std::span<const std::size_t> rows;
    std::size_t target = 0;

    std::size_t size() const { return rows.size(); }
    std::span<const double> inputs(std::size_t i) const { return data->rows[rows[i]]; }
    double target_value(std::size_t i) const { return data->targets[target][rows[i]]; }
};

/// Full Cartesian product of the schema's grid levels, row-major in declared
/// input order (first input varies slowest).
std::vector<std::vector<double>> generate_grid(const ProcessSchema& schema);

/// Evaluates the truth expression on the given rows and adds Gaussian noise.
/// A non-finite target aborts with the offending row in the message.
Dataset synthesize_on(const ProcessSchema& schema, const std::string& output_name,
                      const Expression& truth, std::span<const double> coeffs,
                      std::vector<std::vector<double>> rows,
                      double noise_sd = 0.0, std::uint64_t seed = 0);

/// synthesize_on over the schema's full grid.
Dataset synthesize(const ProcessSchema& schema, const std::string& output_name,
                   const Expression& truth, std::span<const double> coeffs,
                   double noise_sd = 0.0, std::uint64_t seed = 0);

struct SplitDataset {
    std::shared_ptr<const Dataset> dataset;
    std::vector<std::size_t> train;
    std::vector<std::size_t> validation;
    std::vector<std::size_t> test;
    std::vector<double> thresholds; // final retention threshold per input
    double fraction = 0.75;
    std::size_t train_size = 0;
    std::uint64_t seed = 0;

    DataView train_view(std::size_t target) const { return {dataset.get(), train, target}; }
    DataView validation_view(std::size_t target) const { return {dataset.get(), validation, target}; }
    DataView test_view(std::size_t target) const { return {dataset.get(), test, target}; }
};

/// Stepwise extrapolation split: for each input in declared order the rows
/// above min + fraction*(max - min) of the currently retained subset move to
/// the test set; the retained rest is shuffled into train/validation.
SplitDataset extrapolation_split(std::shared_ptr<const Dataset> dataset, double retain_fraction,
                                 std::size_t train_size, std::uint64_t seed);

void save_dataset_csv(const Dataset& ds, const std::string& path);
Dataset load_dataset_csv(const ProcessSchema& schema, const std::string& path);

void save_split_json(const SplitDataset& split, const std::string& path);
SplitDataset load_split_json(std::shared_ptr<const Dataset> dataset, const std::string& path);

} // namespace eqdisc
