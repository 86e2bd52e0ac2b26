#include <doctest.h>

#include <cmath>
#include <cstring>
#include <random>

#include "eqdisc/dataset.hpp"
#include "eqdisc/fit.hpp"
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

Bundle make_bundle(const ProcessSchema& schema, const std::string& truth_text) {
    Bundle b;
    const Expression truth = parse_expression(truth_text, schema);
    b.ds = std::make_shared<Dataset>(synthesize(schema, schema.outputs[0].name, truth, {}));
    b.rows.resize(b.ds->size());
    for (std::size_t i = 0; i < b.rows.size(); ++i) b.rows[i] = i;
    return b;
}

} // namespace

TEST_CASE("score: perfect, mean, and hand-computed cases") {
    CHECK(score_predictions(std::vector<double>{1, 2, 3}, std::vector<double>{1, 2, 3}).mse == 0.0);
    CHECK(score_predictions(std::vector<double>{1, 2, 3}, std::vector<double>{1, 2, 3}).r2 == 1.0);

    const Score mean_pred = score_predictions(std::vector<double>{2, 2, 2}, std::vector<double>{1, 2, 3});
    CHECK(mean_pred.r2 == doctest::Approx(0.0));

    const Score hand = score_predictions(std::vector<double>{0, 1, 2}, std::vector<double>{0, 0, 3});
    CHECK(hand.mse == doctest::Approx(2.0 / 3.0));
    CHECK(hand.r2 == doctest::Approx(1.0 - 2.0 / 6.0));
}

TEST_CASE("score: zero-variance subsets and non-finite predictions") {
    CHECK(score_predictions(std::vector<double>{5, 5}, std::vector<double>{5, 5}).r2 == 1.0);
    CHECK_FALSE(score_predictions(std::vector<double>{5, 6}, std::vector<double>{5, 5}).ok());
    const double nan = std::numeric_limits<double>::quiet_NaN();
    CHECK_FALSE(score_predictions(std::vector<double>{nan, 1}, std::vector<double>{0, 1}).ok());
    CHECK_THROWS_AS(score_predictions({}, {}), DataError);
}

TEST_CASE("score agrees with a naive two-pass oracle on random instances") {
    std::mt19937_64 rng(314);
    auto uniform = [&](double lo, double hi) {
        return lo + (hi - lo) * (static_cast<double>(rng() >> 11) * 0x1.0p-53);
    };
    for (int trial = 0; trial < 300; ++trial) {
        const std::size_t n = 2 + rng() % 9;
        std::vector<double> preds(n), targets(n);
        for (std::size_t i = 0; i < n; ++i) {
            preds[i] = uniform(-5, 5);
            targets[i] = uniform(-5, 5);
        }
        double mean = 0;
        for (double y : targets) mean += y;
        mean /= static_cast<double>(n);
        double sse = 0, sst = 0;
        for (std::size_t i = 0; i < n; ++i) {
            sse += (preds[i] - targets[i]) * (preds[i] - targets[i]);
            sst += (targets[i] - mean) * (targets[i] - mean);
        }
        const Score s = score_predictions(preds, targets);
        CHECK(s.mse == doctest::Approx(sse / n).epsilon(1e-12));
        CHECK(s.r2 == doctest::Approx(1.0 - sse / sst).epsilon(1e-12));
    }
}

TEST_CASE("score over split subsets equals the naive oracle") {
    const auto& lib = FixtureLibrary::instance();
    const ProcessSchema schema = lib.schema("tadcr");
    const Expression truth = lib.expression_for(lib.get("tadcr.surface_hardness"), schema);
    auto ds = std::make_shared<Dataset>(synthesize(schema, "Surface_Hardness", truth, {}, 2.0, 8));
    const SplitDataset split = extrapolation_split(ds, 0.75, 30, 13);

    const Expression model = parse_expression("a0 + a1*B + a2*R + a3*I + a4*N", schema);
    const FitResult fit = fit_candidate(model, split.train_view(0), {});
    REQUIRE(fit.train.ok());

    for (const DataView& view :
         {split.train_view(0), split.validation_view(0), split.test_view(0)}) {
        std::vector<double> preds(view.size()), targets(view.size());
        for (std::size_t i = 0; i < view.size(); ++i) {
            preds[i] = model.evaluate(fit.coefficients, [&](const std::string& name) {
                return view.inputs(i)[static_cast<std::size_t>(schema.input_index(name))];
            });
            targets[i] = view.target_value(i);
        }
        double mean = 0;
        for (double y : targets) mean += y;
        mean /= static_cast<double>(targets.size());
        double sse = 0, sst = 0;
        for (std::size_t i = 0; i < targets.size(); ++i) {
            sse += (preds[i] - targets[i]) * (preds[i] - targets[i]);
            sst += (targets[i] - mean) * (targets[i] - mean);
        }
        const Score got = score(model, fit.coefficients, view);
        CHECK(got.mse == doctest::Approx(sse / targets.size()).epsilon(1e-12));
        CHECK(got.r2 == doctest::Approx(1.0 - sse / sst).epsilon(1e-12));
    }
}

TEST_CASE("score_better ranks failed below everything") {
    Score good{0.5, 0.9};
    Score better{0.1, 0.99};
    CHECK(score_better(better, good));
    CHECK_FALSE(score_better(good, better));
    CHECK(score_better(good, Score::failed()));
    CHECK_FALSE(score_better(Score::failed(), good));
    CHECK_FALSE(score_better(Score::failed(), Score::failed()));
}

TEST_CASE("fit: quadratic family solves the 3x3 system exactly") {
    const auto schema = line_schema({0, 1, 2});
    const Bundle b = make_bundle(schema, "2 + 3*x1"); // targets (2, 5, 8)
    const Expression family = parse_expression("a0 + a1*x1 + a2*x1^2", schema);
    const FitResult fit = fit_candidate(family, b.view(), {});
    CHECK(fit.linear_path);
    REQUIRE(fit.coefficients.size() == 3);
    CHECK(fit.coefficients[0] == doctest::Approx(2.0).epsilon(1e-8));
    CHECK(fit.coefficients[1] == doctest::Approx(3.0).epsilon(1e-8));
    CHECK(std::fabs(fit.coefficients[2]) < 1e-8);
}

TEST_CASE("fit: depth family training MSE is essentially zero") {
    const auto& lib = FixtureLibrary::instance();
    const ProcessSchema schema = lib.schema("flipmm");
    const Expression truth = lib.expression_for(lib.get("flipmm.depth"), schema);
    auto ds = std::make_shared<Dataset>(synthesize(schema, "Depth", truth, {}));
    const SplitDataset split = extrapolation_split(ds, 0.75, 30, 21);

    const LiftResult family = lift_constants(truth);
    const FitResult fit = fit_candidate(family.expr, split.train_view(0), {}, family.initial_values);
    CHECK(fit.linear_path);
    REQUIRE(fit.train.ok());
    CHECK(fit.train.mse <= 1e-10);
}

TEST_CASE("fit: LM recovers a0*exp(a1*x1)") {
    const auto schema = line_schema({0, 1, 2, 3, 4});
    const Bundle b = make_bundle(schema, "2*exp(0.5*x1)");
    const Expression family = parse_expression("a0*exp(a1*x1)", schema);
    const FitResult fit = fit_candidate(family, b.view(), {});
    CHECK_FALSE(fit.linear_path);
    REQUIRE(fit.coefficients.size() == 2);
    CHECK(fit.coefficients[0] == doctest::Approx(2.0).epsilon(1e-6));
    CHECK(fit.coefficients[1] == doctest::Approx(0.5).epsilon(1e-6));
}

TEST_CASE("fit: zero-coefficient expressions are scored as-is") {
    const auto schema = line_schema({1, 2, 3});
    const Bundle b = make_bundle(schema, "x1");
    const FitResult fit = fit_candidate(parse_expression("x1", schema), b.view(), {});
    CHECK(fit.coefficients.empty());
    CHECK(fit.train.ok());
    CHECK(fit.train.mse == 0.0);
}

TEST_CASE("fit: unfixable domain violations yield the failed sentinel") {
    const auto schema = line_schema({0, 1, 2, 3, 4});
    const Bundle b = make_bundle(schema, "x1");
    const FitResult linear = fit_candidate(parse_expression("a0 + ln(x1 - 100)", schema), b.view(), {});
    CHECK_FALSE(linear.train.ok());
    const FitResult nonlinear =
        fit_candidate(parse_expression("a0*exp(a1*x1) + ln(x1 - 100)", schema), b.view(), {});
    CHECK_FALSE(nonlinear.train.ok());
}

TEST_CASE("fit: linear-path optimality against random perturbations") {
    const auto schema = line_schema({0, 1, 2, 3, 4});
    const Bundle b = make_bundle(schema, "1 + 2*x1 + 0.3*x1^2");
    const Expression family = parse_expression("a0 + a1*x1 + a2*sqrt(x1 + 1)", schema);
    const FitResult fit = fit_candidate(family, b.view(), {});
    REQUIRE(fit.train.ok());

    const auto sse_at = [&](const std::vector<double>& c) {
        double sse = 0;
        for (std::size_t i = 0; i < b.rows.size(); ++i) {
            const double pred = family.evaluate(c, {{"x1", b.ds->rows[i][0]}});
            const double err = pred - b.ds->targets[0][i];
            sse += err * err;
        }
        return sse;
    };
    const double base = sse_at(fit.coefficients);
    std::mt19937_64 rng(8);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> perturbed = fit.coefficients;
        for (auto& c : perturbed) {
            const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
            c += 1e-4 * (2.0 * u - 1.0);
        }
        CHECK(sse_at(perturbed) >= base - 1e-15);
    }
}

TEST_CASE("fit: best SSE never exceeds the SSE at any multistart origin") {
    const auto schema = line_schema({0, 1, 2, 3, 4});
    const Bundle b = make_bundle(schema, "3*exp(0.4*x1)");
    const Expression family = parse_expression("a0*exp(a1*x1)", schema);
    const FitResult fit = fit_candidate(family, b.view(), {});
    REQUIRE(fit.train.ok());

    const auto sse_at = [&](const std::vector<double>& c) {
        double sse = 0;
        for (std::size_t i = 0; i < b.rows.size(); ++i) {
            const double pred = family.evaluate(c, {{"x1", b.ds->rows[i][0]}});
            const double err = pred - b.ds->targets[0][i];
            sse += err * err;
        }
        return sse;
    };
    const double fitted_sse = sse_at(fit.coefficients);
    CHECK(fitted_sse <= sse_at({0.0, 0.0}) + 1e-12);
    CHECK(fitted_sse <= sse_at({1.0, 1.0}) + 1e-12);
}

TEST_CASE("fit: bitwise deterministic for a fixed seed") {
    const auto schema = line_schema({0, 1, 2, 3, 4});
    const Bundle b = make_bundle(schema, "2*exp(0.5*x1) - x1");
    const Expression family = parse_expression("a0*exp(a1*x1) + a2*x1", schema);
    FitConfig cfg;
    cfg.seed = 99;
    const FitResult first = fit_candidate(family, b.view(), cfg);
    const FitResult second = fit_candidate(family, b.view(), cfg);
    REQUIRE(first.coefficients.size() == second.coefficients.size());
    for (std::size_t i = 0; i < first.coefficients.size(); ++i)
        CHECK(std::memcmp(&first.coefficients[i], &second.coefficients[i], sizeof(double)) == 0);
}

TEST_CASE("fit: underdetermined systems take the minimum-norm solution") {
    const auto schema = line_schema({0, 1});
    const Bundle b = make_bundle(schema, "x1");
    const Expression family = parse_expression("a0 + a1*x1 + a2*x1^2 + a3*x1^3", schema);
    const FitResult fit = fit_candidate(family, b.view(), {});
    CHECK(fit.underdetermined);
    REQUIRE(fit.train.ok());
    CHECK(fit.train.mse <= 1e-18);
    // duplicated basis columns: x1 == x1^2 == x1^3 on {0,1}; minimum norm
    // spreads the unit weight evenly
    CHECK(fit.coefficients[1] == doctest::Approx(fit.coefficients[2]).epsilon(1e-9));
    CHECK(fit.coefficients[2] == doctest::Approx(fit.coefficients[3]).epsilon(1e-9));
}

TEST_CASE("success_criterion: the 2% rule") {
    std::vector<double> targets;
    for (int i = 0; i < 10; ++i) targets.push_back(static_cast<double>(i)); // variance 8.25
    const double variance = 8.25;

    Score ok_score{0.5 * variance * 0.02, 0.0};
    CHECK(success_criterion(ok_score, targets));

    Score boundary{variance * 0.02, 0.0}; // exactly 2%: strict inequality fails
    CHECK_FALSE(success_criterion(boundary, targets));

    CHECK(relative_validation_error(ok_score, targets) == doctest::Approx(0.01));

    std::string diagnostic;
    const std::vector<double> flat{3, 3, 3};
    CHECK_FALSE(success_criterion(Score{0.0, 1.0}, flat, &diagnostic));
    CHECK(diagnostic.find("zero variance") != std::string::npos);

    CHECK_FALSE(success_criterion(Score::failed(), targets));
}

TEST_CASE("success_criterion: arithmetic example") {
    // mse 0.5 over targets with variance 100 -> 0.005 < 0.02
    std::vector<double> targets;
    for (int i = 0; i < 100; ++i) targets.push_back((i % 2) ? 10.0 : -10.0); // variance 100
    CHECK(success_criterion(Score{0.5, 0.0}, targets));
    CHECK_FALSE(success_criterion(Score{3.0, 0.0}, targets));
}
