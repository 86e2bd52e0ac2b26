#include "eqdisc/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "eqdisc/errors.hpp"

namespace eqdisc {

int Dataset::target_index(std::string_view name) const {
    for (std::size_t i = 0; i < target_names.size(); ++i)
        if (target_names[i] == name) return static_cast<int>(i);
    return -1;
}

void Dataset::validate() const {
    schema.validate();
    for (const auto& col : targets)
        if (col.size() != rows.size())
            throw DataError("target column length " + std::to_string(col.size()) +
                            " does not match row count " + std::to_string(rows.size()));
    if (target_names.size() != targets.size())
        throw DataError("target name/column count mismatch");
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != schema.inputs.size())
            throw DataError("row " + std::to_string(i) + " has wrong arity");
        for (std::size_t j = 0; j < schema.inputs.size(); ++j) {
            const auto& levels = schema.inputs[j].levels;
            const double v = rows[i][j];
            if (!std::isfinite(v) || v < levels.front() || v > levels.back())
                throw DataError("row " + std::to_string(i) + ": input '" + schema.inputs[j].name +
                                "' value outside schema range");
        }
    }
    for (std::size_t t = 0; t < targets.size(); ++t)
        for (std::size_t i = 0; i < targets[t].size(); ++i)
            if (!std::isfinite(targets[t][i]))
                throw DataError("non-finite target '" + target_names[t] + "' at row " + std::to_string(i));
}

std::vector<std::vector<double>> generate_grid(const ProcessSchema& schema) {
    schema.validate();
    std::size_t total = 1;
    for (const auto& in : schema.inputs) {
        if (in.levels.empty()) throw DataError("input '" + in.name + "' has no levels");
        total *= in.levels.size();
    }
    std::vector<std::vector<double>> rows;
    rows.reserve(total);
    const std::size_t d = schema.inputs.size();
    std::vector<std::size_t> idx(d, 0);
    for (std::size_t r = 0; r < total; ++r) {
        std::vector<double> row(d);
        for (std::size_t j = 0; j < d; ++j) row[j] = schema.inputs[j].levels[idx[j]];
        rows.push_back(std::move(row));
        for (std::size_t j = d; j-- > 0;) { // last input varies fastest
            if (++idx[j] < schema.inputs[j].levels.size()) break;
            idx[j] = 0;
        }
    }
    return rows;
}

Dataset synthesize_on(const ProcessSchema& schema, const std::string& output_name,
                      const Expression& truth, std::span<const double> coeffs,
                      std::vector<std::vector<double>> rows,
                      double noise_sd, std::uint64_t seed) {
    if (schema.output_index(output_name) < 0)
        throw DataError("schema has no output named '" + output_name + "'");
    if (noise_sd < 0.0) throw DataError("noise_sd must be >= 0");

    std::vector<int> column(truth.variables().size());
    for (std::size_t v = 0; v < truth.variables().size(); ++v) {
        column[v] = schema.input_index(truth.variables()[v]);
        if (column[v] < 0)
            throw DataError("truth expression uses unknown variable '" + truth.variables()[v] + "'");
    }

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, noise_sd > 0.0 ? noise_sd : 1.0);

    std::vector<double> values(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& row = rows[i];
        double y = truth.evaluate(coeffs, [&](const std::string& name) {
            return row[static_cast<std::size_t>(schema.input_index(name))];
        });
        if (!std::isfinite(y))
            throw DataError("truth expression is non-finite at row " + std::to_string(i));
        if (noise_sd > 0.0) y += noise(rng);
        values[i] = y;
    }

    Dataset ds;
    ds.schema = schema;
    ds.rows = std::move(rows);
    ds.target_names = {output_name};
    ds.targets = {std::move(values)};
    ds.validate();
    return ds;
}

Dataset synthesize(const ProcessSchema& schema, const std::string& output_name,
                   const Expression& truth, std::span<const double> coeffs,
                   double noise_sd, std::uint64_t seed) {
    return synthesize_on(schema, output_name, truth, coeffs, generate_grid(schema), noise_sd, seed);
}

SplitDataset extrapolation_split(std::shared_ptr<const Dataset> dataset, double retain_fraction,
                                 std::size_t train_size, std::uint64_t seed) {
    if (!(retain_fraction > 0.0 && retain_fraction < 1.0))
        throw DataError("retain_fraction must lie in (0, 1)");
    const Dataset& ds = *dataset;

    std::vector<std::size_t> retained(ds.size());
    std::iota(retained.begin(), retained.end(), std::size_t{0});

    SplitDataset split;
    split.dataset = dataset;
    split.fraction = retain_fraction;
    split.train_size = train_size;
    split.seed = seed;

    for (std::size_t j = 0; j < ds.schema.inputs.size(); ++j) {
        double lo = std::numeric_limits<double>::infinity();
        double hi = -std::numeric_limits<double>::infinity();
        for (std::size_t r : retained) {
            lo = std::min(lo, ds.rows[r][j]);
            hi = std::max(hi, ds.rows[r][j]);
        }
        const double threshold = lo + retain_fraction * (hi - lo);
        split.thresholds.push_back(threshold);

        std::vector<std::size_t> keep;
        keep.reserve(retained.size());
        for (std::size_t r : retained) {
            if (ds.rows[r][j] <= threshold) keep.push_back(r); // boundary rows stay
            else split.test.push_back(r);
        }
        retained = std::move(keep);
    }

    if (train_size > retained.size())
        throw DataError("train_size " + std::to_string(train_size) + " exceeds retained count " +
                        std::to_string(retained.size()));

    std::mt19937_64 rng(seed);
    std::shuffle(retained.begin(), retained.end(), rng);
    split.train.assign(retained.begin(), retained.begin() + static_cast<std::ptrdiff_t>(train_size));
    split.validation.assign(retained.begin() + static_cast<std::ptrdiff_t>(train_size), retained.end());
    std::sort(split.train.begin(), split.train.end());
    std::sort(split.validation.begin(), split.validation.end());
    std::sort(split.test.begin(), split.test.end());
    return split;
}

void save_dataset_csv(const Dataset& ds, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write dataset: " + path);
    out.precision(17);
    for (std::size_t j = 0; j < ds.schema.inputs.size(); ++j) {
        if (j) out << ',';
        out << ds.schema.inputs[j].name;
    }
    for (const auto& name : ds.target_names) out << ',' << name;
    out << '\n';
    for (std::size_t i = 0; i < ds.size(); ++i) {
        for (std::size_t j = 0; j < ds.rows[i].size(); ++j) {
            if (j) out << ',';
            out << ds.rows[i][j];
        }
        for (const auto& col : ds.targets) out << ',' << col[i];
        out << '\n';
    }
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    return fields;
}

} // namespace

Dataset load_dataset_csv(const ProcessSchema& schema, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open dataset: " + path);

    std::string line;
    if (!std::getline(in, line)) throw DataError("empty dataset file: " + path);
    const auto header = split_csv_line(line);
    const std::size_t d = schema.inputs.size();
    if (header.size() <= d) throw DataError("dataset header needs inputs plus at least one output");
    for (std::size_t j = 0; j < d; ++j)
        if (header[j] != schema.inputs[j].name)
            throw DataError("dataset column '" + header[j] + "' does not match schema input '" +
                            schema.inputs[j].name + "'");

    Dataset ds;
    ds.schema = schema;
    ds.target_names.assign(header.begin() + static_cast<std::ptrdiff_t>(d), header.end());
    ds.targets.resize(ds.target_names.size());

    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const auto fields = split_csv_line(line);
        if (fields.size() != header.size())
            throw DataError("dataset line " + std::to_string(line_no) + ": wrong field count");
        const auto parse_field = [&](const std::string& field) {
            try {
                std::size_t used = 0;
                const double v = std::stod(field, &used);
                if (used == 0) throw std::invalid_argument(field);
                return v;
            } catch (const std::exception&) {
                throw DataError("dataset line " + std::to_string(line_no) + ": bad number '" +
                                field + "'");
            }
        };
        std::vector<double> row(d);
        for (std::size_t j = 0; j < d; ++j) row[j] = parse_field(fields[j]);
        ds.rows.push_back(std::move(row));
        for (std::size_t t = 0; t < ds.targets.size(); ++t)
            ds.targets[t].push_back(parse_field(fields[d + t]));
    }
    ds.validate();
    return ds;
}

void save_split_json(const SplitDataset& split, const std::string& path) {
    nlohmann::json j;
    j["schema"] = split.dataset->schema.process;
    j["fraction"] = split.fraction;
    j["train_size"] = split.train_size;
    j["seed"] = split.seed;
    j["thresholds"] = split.thresholds;
    j["train"] = split.train;
    j["validation"] = split.validation;
    j["test"] = split.test;
    std::ofstream out(path);
    if (!out) throw DataError("cannot write split manifest: " + path);
    out << j.dump(2) << "\n";
}

SplitDataset load_split_json(std::shared_ptr<const Dataset> dataset, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open split manifest: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("split manifest JSON: ") + e.what());
    }
    SplitDataset split;
    split.dataset = std::move(dataset);
    split.fraction = j.at("fraction").get<double>();
    split.train_size = j.at("train_size").get<std::size_t>();
    split.seed = j.at("seed").get<std::uint64_t>();
    split.thresholds = j.value("thresholds", std::vector<double>{});
    split.train = j.at("train").get<std::vector<std::size_t>>();
    split.validation = j.at("validation").get<std::vector<std::size_t>>();
    split.test = j.at("test").get<std::vector<std::size_t>>();

    const std::size_t total = split.train.size() + split.validation.size() + split.test.size();
    if (total != split.dataset->size())
        throw DataError("split manifest covers " + std::to_string(total) + " rows, dataset has " +
                        std::to_string(split.dataset->size()));
    return split;
}

} // namespace eqdisc
