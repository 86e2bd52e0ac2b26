#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include <Eigen/Dense>

#include "eqdisc/baselines.hpp"
#include "eqdisc/fixtures.hpp"

using namespace eqdisc;

namespace {

ProcessSchema line_schema(std::vector<double> levels) {
    ProcessSchema s;
    s.process = "line";
    s.inputs = {{"x1", "", {}, std::move(levels)}};
    s.outputs = {{"y", ""}};
    s.validate();
    return s;
}

struct Bundle {
    std::shared_ptr<Dataset> ds;
    std::vector<std::size_t> rows;
    DataView view() const { return {ds.get(), rows, 0}; }
};

Bundle bundle_from(const ProcessSchema& schema, const std::string& truth, std::vector<std::size_t> rows) {
    Bundle b;
    b.ds = std::make_shared<Dataset>(synthesize(schema, "y", parse_expression(truth, schema), {}));
    b.rows = std::move(rows);
    return b;
}

} // namespace

TEST_CASE("gpr: single training point interpolates") {
    const auto schema = line_schema({0, 1});
    Bundle b;
    b.ds = std::make_shared<Dataset>(Dataset{schema, {{0.0}}, {"y"}, {{1.0}}});
    b.rows = {0};
    GprConfig cfg = GprConfig::defaults();
    cfg.noise_fractions = {0.0};
    const GprModel gpr = GprModel::fit(b.view(), cfg);
    CHECK(gpr.predict(std::vector<double>{0.0}) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("gpr: interpolation, mid-grid accuracy, and reversion to the prior mean") {
    const auto schema = line_schema({0, 1, 2, 3, 4});
    const Bundle b = bundle_from(schema, "x1", {0, 1, 2, 3, 4});
    GprConfig cfg = GprConfig::defaults();
    cfg.noise_fractions = {0.0};
    const GprModel gpr = GprModel::fit(b.view(), cfg);

    for (std::size_t i = 0; i < 5; ++i)
        CHECK(std::fabs(gpr.predict(b.ds->rows[i]) - b.ds->targets[0][i]) <= 1e-6);

    CHECK(gpr.predict(std::vector<double>{2.5}) == doctest::Approx(2.5).epsilon(1e-2));

    // at 10 length scales past the data the posterior collapses to the prior
    const double sd = std::sqrt(2.0); // population sd of {0..4}
    const double far = 2.0 + (10.0 * gpr.length_scale() + 3.0) * sd;
    const double mu = gpr.predict(std::vector<double>{far});
    CHECK(std::fabs(mu - 2.0) < 1e-3 * std::sqrt(gpr.signal_variance()));
}

TEST_CASE("gpr: log marginal likelihood matches a dense oracle on a 5-point problem") {
    const auto schema = line_schema({0, 1, 2, 3, 4});
    const Bundle b = bundle_from(schema, "x1 + 0.5*x1^2", {0, 1, 2, 3, 4});

    GprConfig cfg;
    cfg.length_scales = {0.9};
    cfg.noise_fractions = {1e-4};
    const GprModel gpr = GprModel::fit(b.view(), cfg);

    // oracle: rebuild everything with plain dense algebra
    const std::size_t n = 5;
    double mean_x = 0, sd_x = 0, mean_y = 0;
    for (std::size_t i = 0; i < n; ++i) mean_x += b.ds->rows[i][0];
    mean_x /= n;
    for (std::size_t i = 0; i < n; ++i) sd_x += (b.ds->rows[i][0] - mean_x) * (b.ds->rows[i][0] - mean_x);
    sd_x = std::sqrt(sd_x / n);
    for (std::size_t i = 0; i < n; ++i) mean_y += b.ds->targets[0][i];
    mean_y /= n;

    Eigen::VectorXd y(n);
    for (std::size_t i = 0; i < n; ++i) y(static_cast<Eigen::Index>(i)) = b.ds->targets[0][i] - mean_y;
    const double signal = y.squaredNorm() / static_cast<double>(n);
    const double ell = 0.9, noise = 1e-4 * signal;

    Eigen::MatrixXd K(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            const double xi = (b.ds->rows[i][0] - mean_x) / sd_x;
            const double xj = (b.ds->rows[j][0] - mean_x) / sd_x;
            K(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                signal * std::exp(-(xi - xj) * (xi - xj) / (2.0 * ell * ell));
        }
    Eigen::MatrixXd A = K + noise * Eigen::MatrixXd::Identity(n, n);
    const double lml_oracle = -0.5 * y.dot(A.inverse() * y) - 0.5 * std::log(A.determinant()) -
                              0.5 * static_cast<double>(n) * std::log(2.0 * M_PI);
    CHECK(gpr.log_marginal_likelihood() == doctest::Approx(lml_oracle).epsilon(1e-8));
}

TEST_CASE("gpr: duplicate inputs with zero noise fall back to jitter") {
    const auto schema = line_schema({0, 1});
    Bundle b;
    b.ds = std::make_shared<Dataset>(Dataset{schema, {{0.0}, {0.0}, {1.0}}, {"y"}, {{1.0, 1.0, 2.0}}});
    b.rows = {0, 1, 2};
    GprConfig cfg = GprConfig::defaults();
    cfg.noise_fractions = {0.0};
    const GprModel gpr = GprModel::fit(b.view(), cfg);
    CHECK(gpr.jitter_added());
    CHECK(std::fabs(gpr.predict(std::vector<double>{1.0}) - 2.0) < 1e-3);
}

TEST_CASE("rfr: single row predicts its own target everywhere") {
    const auto schema = line_schema({0, 1});
    Bundle b;
    b.ds = std::make_shared<Dataset>(Dataset{schema, {{0.5}}, {"y"}, {{3.25}}});
    b.rows = {0};
    const ForestModel rfr = ForestModel::fit(b.view(), {10, 1}, 1);
    CHECK(rfr.predict(std::vector<double>{0.0}) == doctest::Approx(3.25));
    CHECK(rfr.predict(std::vector<double>{123.0}) == doctest::Approx(3.25));
}

TEST_CASE("rfr: range-bound extrapolation on monotone data") {
    const auto schema = line_schema({0, 1, 2, 3});
    const Bundle b = bundle_from(schema, "x1", {0, 1, 2, 3});
    const ForestModel rfr = ForestModel::fit(b.view(), {50, 1}, 2);
    const double far = rfr.predict(std::vector<double>{10.0});
    CHECK(far <= 3.0 + 1e-12);
    CHECK(far >= 0.0 - 1e-12);
    CHECK(rfr.train_max() == 3.0);
}

TEST_CASE("rfr: seeded determinism, in-sample fit quality") {
    const auto schema = line_schema({0, 1, 2, 3, 4, 5, 6, 7});
    const Bundle b = bundle_from(schema, "2*x1 + 1", {0, 1, 2, 3, 4, 5, 6, 7});
    const ForestModel a = ForestModel::fit(b.view(), {30, 1}, 9);
    const ForestModel c = ForestModel::fit(b.view(), {30, 1}, 9);
    const ForestModel d = ForestModel::fit(b.view(), {30, 1}, 10);
    bool all_equal = true, any_differs = false;
    for (double x = 0; x <= 7.0; x += 0.25) {
        const std::vector<double> row{x};
        if (a.predict(row) != c.predict(row)) all_equal = false;
        if (a.predict(row) != d.predict(row)) any_differs = true;
    }
    CHECK(all_equal);
    CHECK(any_differs);

    // with min_leaf 1 and many trees, training rows are fit closely
    double max_err = 0;
    for (std::size_t i = 0; i < b.rows.size(); ++i)
        max_err = std::max(max_err, std::fabs(a.predict(b.ds->rows[i]) - b.ds->targets[0][i]));
    CHECK(max_err < 1.0);
}

TEST_CASE("compare_report: layout, negative R2 passthrough, candidate ordering") {
    const auto& lib = FixtureLibrary::instance();
    const ProcessSchema schema = lib.schema("flipmm");
    const Expression truth = lib.expression_for(lib.get("flipmm.depth"), schema);
    auto ds = std::make_shared<Dataset>(synthesize(schema, "Depth", truth, {}));
    const SplitDataset split = extrapolation_split(ds, 0.75, 30, 31);

    const LiftResult family = lift_constants(truth);
    const FitResult fitted = fit_candidate(family.expr, split.train_view(0), {}, family.initial_values);
    ModelCandidate candidate;
    candidate.expression = family.expr;
    candidate.canonical = family.expr.render();
    candidate.coefficients = fitted.coefficients;
    candidate.validation = score(family.expr, fitted.coefficients, split.validation_view(0));

    const GprModel gpr = GprModel::fit(split.train_view(0));
    const ForestModel rfr = ForestModel::fit(split.train_view(0), {}, 3);
    const CompareReport report = compare_report(split, "Depth", candidate, gpr, rfr);

    CHECK(report.rows.size() == 6); // 3 models x 2 subsets
    CHECK(report.placeholder_ranges);

    double candidate_test_r2 = 0, rfr_test_r2 = 0;
    for (const auto& row : report.rows) {
        if (row.model == "candidate" && row.subset == "test") candidate_test_r2 = row.scored.r2;
        if (row.model == "rfr" && row.subset == "test") rfr_test_r2 = row.scored.r2;
    }
    CHECK(candidate_test_r2 >= 0.999);
    CHECK(rfr_test_r2 < candidate_test_r2);

    namespace fs = std::filesystem;
    const auto dir = fs::temp_directory_path() / "eqdisc_baseline_io";
    fs::create_directories(dir);
    write_compare_csv(report, (dir / "cmp.csv").string());
    write_compare_json(report, (dir / "cmp.json").string());
    std::ifstream csv(dir / "cmp.csv");
    std::string header;
    std::getline(csv, header);
    CHECK(header == "model,subset,mse,r2");
    std::size_t data_lines = 0;
    for (std::string line; std::getline(csv, line);)
        if (!line.empty()) ++data_lines;
    CHECK(data_lines == report.rows.size());
}
