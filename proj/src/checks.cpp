#include "eqdisc/checks.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "eqdisc/backends.hpp"
#include "eqdisc/baselines.hpp"
#include "eqdisc/config.hpp"
#include "eqdisc/dataset.hpp"
#include "eqdisc/errors.hpp"
#include "eqdisc/fit.hpp"
#include "eqdisc/fixtures.hpp"
#include "eqdisc/generator.hpp"
#include "eqdisc/knowledge.hpp"

namespace eqdisc {

namespace {

std::string fmt(double v) {
    std::ostringstream out;
    out.precision(10);
    out << v;
    return out.str();
}

struct Expect {
    bool ok = true;
    std::string detail;

    void require(bool condition, const std::string& what) {
        if (!condition) {
            ok = false;
            if (!detail.empty()) detail += "; ";
            detail += what;
        }
    }
    void note(const std::string& what) {
        if (!detail.empty()) detail += "; ";
        detail += what;
    }
};

// ---------------------------------------------------------------------------
// Shared scaffolding for the scripted mechanics runs

ProcessSchema mechanics_schema() {
    ProcessSchema s;
    s.process = "mechanics";
    s.placeholder_ranges = true;
    s.inputs = {
        {"x1", "", {}, {1, 2, 3, 4}},
        {"x2", "", {}, {1, 2, 3, 4}},
        {"x3", "", {}, {1, 2, 3, 4}},
    };
    s.outputs = {{"y", ""}};
    s.validate();
    return s;
}

constexpr const char* kMechanicsTruth = "3 + 2*x1^2 + 6*x2*x3";
constexpr const char* kMechanicsExactFamily = "a0 + a1*x1^2 + a2*x2*x3";

// Additive candidates over a fixed basis. None carries an x2*x3 cross term,
// so none can reach the 2% stop rule on the mechanics truth.
std::vector<std::string> mechanics_blocks(std::size_t count) {
    const std::vector<std::string> terms = {
        "x1",      "x2",      "x3",      "x1^2",   "x2^2",   "x3^2",  "sqrt(x1)", "sqrt(x2)",
        "sqrt(x3)", "ln(x1)", "ln(x2)", "ln(x3)", "x1*x2",  "x1*x3", "exp(x1/4)",
    };
    std::vector<std::string> blocks;
    for (const auto& t : terms) blocks.push_back("a0 + a1*" + t);
    for (std::size_t i = 0; i < terms.size(); ++i)
        for (std::size_t j = i + 1; j < terms.size(); ++j)
            blocks.push_back("a0 + a1*" + terms[i] + " + a2*" + terms[j]);
    if (blocks.size() < count)
        throw DataError("mechanics basis yields only " + std::to_string(blocks.size()) + " blocks");
    blocks.resize(count);
    return blocks;
}

SplitDataset mechanics_split() {
    const ProcessSchema schema = mechanics_schema();
    const Expression truth = parse_expression(kMechanicsTruth, schema);
    auto ds = std::make_shared<Dataset>(synthesize(schema, "y", truth, {}));
    return extrapolation_split(ds, 0.75, 18, 11);
}

struct MechanicsRun {
    RunResult result;
    std::string report;
};

MechanicsRun run_mechanics(Scenario scenario, const std::vector<std::string>& blocks,
                           int max_iterations) {
    const SplitDataset split = mechanics_split();
    const TemplateSet templates = TemplateSet::load(default_asset_dir() + "/templates");

    RetrievedContext ctx;
    ctx.answer = "The output grows quadratically with x1 and rises jointly with x2 and x3.";

    ScriptedBackend backend{blocks, "scripted-mechanics"};
    GeneratorConfig cfg;
    cfg.budgets.initial_n = 50;
    cfg.budgets.per_iteration_n = 20;
    cfg.budgets.max_iterations = max_iterations;
    cfg.seed = 7;

    MechanicsRun run;
    run.result = run_discovery(scenario, split, "y",
                               scenario_uses_rag(scenario) ? &ctx : nullptr, backend, templates, cfg);

    RunMetadata meta;
    meta.scenario = to_string(scenario);
    meta.process = "mechanics";
    meta.target_output = "y";
    meta.backend_id = backend.id();
    meta.placeholder_ranges = true;
    meta.seed = cfg.seed;
    run.report = run_report_text(meta, run.result);
    return run;
}

void check_mechanics_guarantees(Expect& expect, const MechanicsRun& first, const MechanicsRun& second,
                                std::size_t expected_calls) {
    const RefinementState& state = first.result.state;
    expect.require(state.generation_calls == expected_calls,
                   "generation calls " + std::to_string(state.generation_calls) + " != " +
                       std::to_string(expected_calls));
    for (const auto& pool_r2 : state.pool_r2_by_iteration)
        expect.require(pool_r2.size() <= 20, "pool exceeded capacity 20");
    for (std::size_t i = 1; i < state.pool_r2_by_iteration.size(); ++i) {
        const auto& prev = state.pool_r2_by_iteration[i - 1];
        const auto& cur = state.pool_r2_by_iteration[i];
        expect.require(!cur.empty() && !prev.empty() && cur.front() >= prev.front(),
                       "best validation R2 decreased between iterations");
        for (std::size_t r = 0; r < prev.size() && r < cur.size(); ++r)
            expect.require(cur[r] >= prev[r], "pool rank " + std::to_string(r) + " degraded");
    }
    for (const auto& entry : state.history)
        if (entry.entered_pool)
            expect.require(entry.validation.ok(), "a failed fit entered the pool");
    expect.require(first.report == second.report, "repeat run differs (nondeterministic)");
}

// ---------------------------------------------------------------------------
// Individual checks

CheckResult check_split_counts() {
    Expect expect;
    const auto& lib = FixtureLibrary::instance();

    {
        const ProcessSchema schema = lib.schema("flipmm");
        const Fixture& fixture = lib.get("flipmm.depth");
        auto ds = std::make_shared<Dataset>(
            synthesize(schema, fixture.output, lib.expression_for(fixture), {}));
        expect.require(ds->size() == 256, "4^4 grid has " + std::to_string(ds->size()) + " rows");
        const SplitDataset split = extrapolation_split(ds, 0.75, 30, 3);
        expect.require(split.train.size() == 30, "flipmm train " + std::to_string(split.train.size()));
        expect.require(split.validation.size() == 51,
                       "flipmm validation " + std::to_string(split.validation.size()));
        expect.require(split.test.size() == 175, "flipmm test " + std::to_string(split.test.size()));
    }
    {
        const ProcessSchema schema = lib.schema("msla");
        const Fixture& fixture = lib.get("msla.uts");
        auto ds = std::make_shared<Dataset>(
            synthesize(schema, fixture.output, lib.expression_for(fixture), {}));
        expect.require(ds->size() == 216, "6^3 grid has " + std::to_string(ds->size()) + " rows");
        const SplitDataset split = extrapolation_split(ds, 0.75, 30, 3);
        expect.require(split.train.size() == 30, "msla train " + std::to_string(split.train.size()));
        expect.require(split.validation.size() == 34,
                       "msla validation " + std::to_string(split.validation.size()));
        expect.require(split.test.size() == 152, "msla test " + std::to_string(split.test.size()));
    }
    if (expect.ok) expect.note("30/51/175 and 30/34/152 reproduced exactly");
    return {"split-counts", expect.ok, false, expect.detail};
}

CheckResult check_exact_recovery(const std::string& check_name, const std::string& fixture_name) {
    Expect expect;
    const auto& lib = FixtureLibrary::instance();
    const Fixture& fixture = lib.get(fixture_name);
    const ProcessSchema schema = lib.schema(fixture.process);
    const Expression truth = lib.expression_for(fixture, schema);

    auto ds = std::make_shared<Dataset>(synthesize(schema, fixture.output, truth, {}));
    const SplitDataset split = extrapolation_split(ds, 0.75, 30, 17);
    const std::size_t target = 0;

    const LiftResult family = lift_constants(truth);
    FitConfig cfg;
    const FitResult fitted = fit_candidate(family.expr, split.train_view(target), cfg,
                                           family.initial_values);
    expect.require(fitted.train.ok(), "training fit failed");
    const Score test = score(family.expr, fitted.coefficients, split.test_view(target));
    expect.require(test.ok(), "test score failed");
    if (test.ok()) {
        expect.require(test.mse <= 1e-10, "test MSE " + fmt(test.mse) + " > 1e-10");
        expect.require(test.r2 >= 0.999999, "test R2 " + fmt(test.r2) + " < 0.999999");
        expect.note("test mse=" + fmt(test.mse) + " r2=" + fmt(test.r2));
    }
    return {check_name, expect.ok, false, expect.detail};
}

CheckResult check_reference_depth_mse(const CheckOptions& options) {
    if (options.ranges_path.empty() || !std::filesystem::exists(options.ranges_path))
        return {"reference-depth-mse", false, true,
                "SKIPPED(ranges-unavailable): supply --ranges with the physical input levels"};

    Expect expect;
    const auto& lib = FixtureLibrary::instance();
    ProcessSchema schema = lib.schema("flipmm");
    schema.placeholder_ranges = false;

    std::ifstream in(options.ranges_path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("ranges JSON: ") + e.what());
    }
    for (auto& input : schema.inputs) {
        if (!j.at("inputs").contains(input.name))
            throw ConfigError("ranges file lacks input '" + input.name + "'");
        input.levels = j.at("inputs").at(input.name).get<std::vector<double>>();
    }
    schema.validate();

    const Expression truth = lib.expression_for(lib.get("flipmm.depth"), schema);
    auto ds = std::make_shared<Dataset>(synthesize(schema, "Depth", truth, {}));
    const SplitDataset split = extrapolation_split(ds, 0.75, 30, 17);

    const Expression printed = lib.expression_for(lib.get("flipmm.depth.ctx_initial"), schema);
    const Score test = score(printed, {}, split.test_view(0));
    expect.require(test.ok(), "test score failed");
    if (test.ok()) {
        expect.require(std::fabs(test.mse - 36.938) <= 0.05 * 36.938,
                       "test MSE " + fmt(test.mse) + " outside 36.938 +/- 5%");
        expect.require(std::fabs(test.r2 - 0.6847) <= 0.05 * 0.6847,
                       "test R2 " + fmt(test.r2) + " outside 0.6847 +/- 5%");
        expect.note("test mse=" + fmt(test.mse) + " r2=" + fmt(test.r2));
    }
    return {"reference-depth-mse", expect.ok, false, expect.detail};
}

CheckResult check_refinement_mechanics() {
    Expect expect;
    const auto blocks = mechanics_blocks(110);
    const MechanicsRun first = run_mechanics(Scenario::ctx_refined, blocks, 3);
    const MechanicsRun second = run_mechanics(Scenario::ctx_refined, blocks, 3);

    expect.require(first.result.state.iteration == 3, "expected 3 refinement iterations");
    expect.require(first.result.state.stop_reason == "budget_exhausted",
                   "stop reason " + first.result.state.stop_reason);
    check_mechanics_guarantees(expect, first, second, 110);
    if (expect.ok)
        expect.note("50+3x20 calls exact, pool<=20, rank-monotone, bitwise-identical repeat");
    return {"refinement-mechanics", expect.ok, false, expect.detail};
}

CheckResult check_stop_rule() {
    Expect expect;

    // Exact family inside the initial batch: success at iteration 0.
    std::vector<std::string> with_exact = mechanics_blocks(49);
    with_exact.insert(with_exact.begin(), kMechanicsExactFamily);
    const MechanicsRun hit = run_mechanics(Scenario::ctx_refined, with_exact, 5);
    expect.require(hit.result.state.stop_reason == "success",
                   "stop reason " + hit.result.state.stop_reason + " != success");
    expect.require(hit.result.state.iteration == 0,
                   "stopped at iteration " + std::to_string(hit.result.state.iteration));
    expect.require(hit.result.state.generation_calls == 50, "expected exactly 50 calls");
    {
        const SplitDataset split = mechanics_split();
        const DataView validation = split.validation_view(0);
        std::vector<double> targets(validation.size());
        for (std::size_t i = 0; i < validation.size(); ++i) targets[i] = validation.target_value(i);
        const double rel = relative_validation_error(hit.result.best.validation, targets);
        expect.require(rel < 0.02, "relative validation MSE " + fmt(rel) + " >= 0.02");
    }

    // Poor candidates only: run to the configured cap.
    const MechanicsRun miss = run_mechanics(Scenario::ctx_refined, mechanics_blocks(110), 3);
    expect.require(miss.result.state.stop_reason == "budget_exhausted",
                   "poor run stop reason " + miss.result.state.stop_reason);
    expect.require(miss.result.state.iteration == 3, "poor run stopped early");

    if (expect.ok) expect.note("success at iteration 0 with rel MSE < 2%; cap honored otherwise");
    return {"stop-rule", expect.ok, false, expect.detail};
}

CheckResult check_metric_oracles() {
    Expect expect;
    std::mt19937_64 rng(99);
    auto uniform = [&](double lo, double hi) {
        return lo + (hi - lo) * (static_cast<double>(rng() >> 11) * 0x1.0p-53);
    };

    for (int trial = 0; trial < 1000 && expect.ok; ++trial) {
        const std::size_t n = 2 + rng() % 11;
        std::vector<double> preds(n), targets(n);
        for (std::size_t i = 0; i < n; ++i) {
            preds[i] = uniform(-10.0, 10.0);
            targets[i] = uniform(-10.0, 10.0);
        }
        const Score fast = score_predictions(preds, targets);

        // independent naive route
        double mean = 0.0;
        for (double y : targets) mean += y;
        mean /= static_cast<double>(n);
        double sse = 0.0, sst = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            sse += (preds[i] - targets[i]) * (preds[i] - targets[i]);
            sst += (targets[i] - mean) * (targets[i] - mean);
        }
        const double mse = sse / static_cast<double>(n);
        const double r2 = 1.0 - sse / sst;
        expect.require(std::fabs(fast.mse - mse) <= 1e-12 * std::max(1.0, std::fabs(mse)),
                       "mse mismatch at trial " + std::to_string(trial));
        expect.require(std::fabs(fast.r2 - r2) <= 1e-12 * std::max(1.0, std::fabs(r2)),
                       "r2 mismatch at trial " + std::to_string(trial));
    }

    const std::vector<double> preds{0, 1, 2}, targets{0, 0, 3};
    const Score hand = score_predictions(preds, targets);
    expect.require(std::fabs(hand.r2 - 0.6667) <= 1e-4,
                   "hand case r2 " + fmt(hand.r2) + " != 0.6667 +/- 1e-4");
    expect.require(std::fabs(hand.mse - 2.0 / 3.0) <= 1e-15, "hand case mse != 2/3");
    if (expect.ok) expect.note("1000 random instances match brute force to 1e-12");
    return {"metric-oracles", expect.ok, false, expect.detail};
}

ProcessSchema single_input_schema(std::vector<double> levels) {
    ProcessSchema s;
    s.process = "line";
    s.inputs = {{"x1", "", {}, std::move(levels)}};
    s.outputs = {{"y", ""}};
    s.validate();
    return s;
}

CheckResult check_fit_correctness() {
    Expect expect;

    // LM on a0*exp(a1*x1)
    const ProcessSchema schema = single_input_schema({0, 1, 2, 3, 4});
    const Expression truth = parse_expression("2*exp(0.5*x1)", schema);
    auto ds = std::make_shared<Dataset>(synthesize(schema, "y", truth, {}));
    std::vector<std::size_t> all_rows(ds->size());
    for (std::size_t i = 0; i < all_rows.size(); ++i) all_rows[i] = i;
    const DataView view{ds.get(), all_rows, 0};

    const Expression model = parse_expression("a0*exp(a1*x1)", schema);
    FitConfig cfg;
    const FitResult fitted = fit_candidate(model, view, cfg);
    expect.require(fitted.train.ok(), "LM fit failed");
    expect.require(!fitted.linear_path, "a0*exp(a1*x1) took the linear path");
    if (fitted.coefficients.size() == 2) {
        expect.require(std::fabs(fitted.coefficients[0] - 2.0) <= 1e-6,
                       "a0 " + fmt(fitted.coefficients[0]) + " != 2 +/- 1e-6");
        expect.require(std::fabs(fitted.coefficients[1] - 0.5) <= 1e-6,
                       "a1 " + fmt(fitted.coefficients[1]) + " != 0.5 +/- 1e-6");
    } else {
        expect.require(false, "wrong coefficient count");
    }

    // Finite-difference Jacobian of the residuals at the solution vs central
    // differences with step 1e-6.
    if (fitted.coefficients.size() == 2) {
        const auto residual = [&](const std::vector<double>& c, std::size_t i) {
            return model.evaluate(c, [&](const std::string&) { return ds->rows[i][0]; }) -
                   ds->targets[0][i];
        };
        for (std::size_t i = 0; i < ds->size(); ++i) {
            for (std::size_t jcol = 0; jcol < 2; ++jcol) {
                std::vector<double> c = fitted.coefficients;
                const double h_fwd = 1.4901161193847656e-08 * (1.0 + std::fabs(c[jcol]));
                const double base = residual(c, i);
                c[jcol] += h_fwd;
                const double fwd = (residual(c, i) - base) / h_fwd;

                c = fitted.coefficients;
                const double h_cen = 1e-6;
                c[jcol] += h_cen;
                const double plus = residual(c, i);
                c[jcol] -= 2 * h_cen;
                const double minus = residual(c, i);
                const double cen = (plus - minus) / (2 * h_cen);
                expect.require(std::fabs(fwd - cen) <= 1e-4 * std::max(1.0, std::fabs(cen)),
                               "jacobian mismatch at row " + std::to_string(i));
            }
        }
    }

    // Linear path vs a dense normal-equations oracle.
    {
        const ProcessSchema ls_schema = single_input_schema({0, 1, 2});
        const Expression line = parse_expression("2 + 3*x1", ls_schema);
        auto ls_ds = std::make_shared<Dataset>(synthesize(ls_schema, "y", line, {}));
        std::vector<std::size_t> rows{0, 1, 2};
        const DataView ls_view{ls_ds.get(), rows, 0};
        const Expression family = parse_expression("a0 + a1*x1 + a2*x1^2", ls_schema);
        const FitResult ls_fit = fit_candidate(family, ls_view, cfg);
        expect.require(ls_fit.linear_path, "quadratic family missed the linear path");

        Eigen::MatrixXd design(3, 3);
        Eigen::VectorXd rhs(3);
        for (int i = 0; i < 3; ++i) {
            const double x = ls_ds->rows[static_cast<std::size_t>(i)][0];
            design(i, 0) = 1.0;
            design(i, 1) = x;
            design(i, 2) = x * x;
            rhs(i) = ls_ds->targets[0][static_cast<std::size_t>(i)];
        }
        const Eigen::VectorXd oracle =
            (design.transpose() * design).fullPivLu().solve(design.transpose() * rhs);
        for (int k = 0; k < 3; ++k)
            expect.require(std::fabs(ls_fit.coefficients[static_cast<std::size_t>(k)] - oracle(k)) <= 1e-8,
                           "linear path differs from normal equations at a" + std::to_string(k));
        expect.require(std::fabs(ls_fit.coefficients[0] - 2.0) <= 1e-8 &&
                           std::fabs(ls_fit.coefficients[1] - 3.0) <= 1e-8 &&
                           std::fabs(ls_fit.coefficients[2]) <= 1e-8,
                       "expected coefficients (2, 3, 0)");
    }

    if (expect.ok) expect.note("LM recovers (2,0.5); jacobian and linear path agree with oracles");
    return {"fit-correctness", expect.ok, false, expect.detail};
}

CheckResult check_retrieval_properties() {
    Expect expect;
    std::mt19937_64 rng(4242);
    auto uniform = [&](double lo, double hi) {
        return lo + (hi - lo) * (static_cast<double>(rng() >> 11) * 0x1.0p-53);
    };

    // Exact top-k vs an independent brute-force scan.
    for (int trial = 0; trial < 10000 && expect.ok; ++trial) {
        const std::size_t dim = 4 + rng() % 9;
        const std::size_t count = 1 + rng() % 16;
        std::vector<DocumentChunk> chunks;
        for (std::size_t i = 0; i < count; ++i) {
            DocumentChunk c;
            c.doc_id = "d" + std::to_string(rng() % 5);
            c.chunk_index = static_cast<int>(i);
            c.text = "t" + std::to_string(i);
            c.embedding.resize(dim);
            double norm = 0.0;
            for (auto& x : c.embedding) {
                x = uniform(-1.0, 1.0);
                norm += x * x;
            }
            if (norm == 0.0) c.embedding[0] = 1.0;
            chunks.push_back(std::move(c));
        }
        const VectorIndex index(chunks);
        std::vector<double> query(dim);
        for (auto& x : query) x = uniform(-1.0, 1.0);
        const std::size_t k = 1 + rng() % count;
        const auto hits = index.search(query, k);

        // naive route: full scan, repeated argmax with the tie rule
        std::vector<std::size_t> remaining(count);
        for (std::size_t i = 0; i < count; ++i) remaining[i] = i;
        auto cosine = [&](const std::vector<double>& v) {
            double dot = 0, na = 0, nb = 0;
            for (std::size_t i = 0; i < dim; ++i) {
                dot += query[i] * v[i];
                na += query[i] * query[i];
                nb += v[i] * v[i];
            }
            return dot / (std::sqrt(na) * std::sqrt(nb));
        };
        for (std::size_t rank = 0; rank < k; ++rank) {
            std::size_t best = remaining[0];
            for (std::size_t cand : remaining) {
                const double cb = cosine(chunks[cand].embedding);
                const double cbest = cosine(chunks[best].embedding);
                if (cb > cbest ||
                    (cb == cbest && (chunks[cand].doc_id < chunks[best].doc_id ||
                                     (chunks[cand].doc_id == chunks[best].doc_id &&
                                      chunks[cand].chunk_index < chunks[best].chunk_index))))
                    best = cand;
            }
            expect.require(hits[rank].chunk == best,
                           "top-k mismatch at trial " + std::to_string(trial) + " rank " +
                               std::to_string(rank));
            remaining.erase(std::find(remaining.begin(), remaining.end(), best));
        }
    }

    // Chunk coverage and reconstruction on a fuzzed corpus.
    const std::string alphabet = "abcdefg hij.k\nlm nop. qrs\n\ntuv wxyz. ";
    for (int trial = 0; trial < 200 && expect.ok; ++trial) {
        const std::size_t len = 1 + rng() % 5000;
        std::string text;
        text.reserve(len);
        for (std::size_t i = 0; i < len; ++i) text += alphabet[rng() % alphabet.size()];
        const std::size_t size = 32 + rng() % 481;
        const std::size_t overlap = rng() % (size / 2);
        const auto chunks = chunk_document("doc", text, size, overlap);

        std::vector<bool> covered(text.size(), false);
        for (const auto& c : chunks) {
            expect.require(text.compare(c.offset, c.text.size(), c.text) == 0,
                           "chunk text does not match its offset");
            for (std::size_t p = c.offset; p < c.offset + c.text.size(); ++p) covered[p] = true;
        }
        expect.require(std::all_of(covered.begin(), covered.end(), [](bool b) { return b; }),
                       "coverage hole at trial " + std::to_string(trial));

        std::string rebuilt = chunks.front().text;
        for (std::size_t i = 1; i < chunks.size(); ++i)
            rebuilt += chunks[i].text.substr(overlap);
        expect.require(rebuilt == text, "overlap reconstruction failed at trial " + std::to_string(trial));
    }

    // The worked lexical example.
    {
        LocalHashEmbedder embedder;
        const std::vector<std::string> texts{"laser power effect on width",
                                             "laser power increases width", "resin exposure time"};
        const auto vecs = embedder.embed(texts);
        auto cos = [&](const std::vector<double>& a, const std::vector<double>& b) {
            double d = 0;
            for (std::size_t i = 0; i < a.size(); ++i) d += a[i] * b[i];
            return d; // embedder output is L2-normalized
        };
        const double qa = cos(vecs[0], vecs[1]);
        const double qb = cos(vecs[0], vecs[2]);
        expect.require(std::fabs(qa - 3.0 / std::sqrt(20.0)) <= 1e-12,
                       "cosine(query, laser chunk) " + fmt(qa) + " != 3/sqrt(20)");
        expect.require(qb == 0.0, "cosine(query, resin chunk) " + fmt(qb) + " != 0");
        expect.require(qa > qb, "laser chunk must outrank resin chunk");
    }

    if (expect.ok) expect.note("10000 top-k scans, 200 fuzzed chunkings, worked example all exact");
    return {"retrieval-properties", expect.ok, false, expect.detail};
}

CheckResult check_baseline_properties() {
    Expect expect;

    // Interpolation with zero noise, and mean reversion far from the data.
    {
        const ProcessSchema schema = single_input_schema({0, 1, 2, 3, 4});
        const Expression line = parse_expression("x1", schema);
        auto ds = std::make_shared<Dataset>(synthesize(schema, "y", line, {}));
        std::vector<std::size_t> rows{0, 1, 2, 3, 4};
        const DataView view{ds.get(), rows, 0};

        GprConfig cfg = GprConfig::defaults();
        cfg.noise_fractions = {0.0};
        const GprModel gpr = GprModel::fit(view, cfg);
        for (std::size_t i = 0; i < rows.size(); ++i) {
            const double pred = gpr.predict(ds->rows[i]);
            expect.require(std::fabs(pred - ds->targets[0][i]) <= 1e-6,
                           "GPR missed training target at row " + std::to_string(i));
        }
        // standardized inputs have sd ~sqrt(2); 10 length scales past the data
        const double far = 2.0 + 10.0 * gpr.length_scale() * std::sqrt(2.0) + 4.0;
        const std::vector<double> far_row{far};
        const double reverted = gpr.predict(far_row);
        const double sigma_f = std::sqrt(gpr.signal_variance());
        expect.require(std::fabs(reverted - 2.0) <= 1e-3 * sigma_f,
                       "GPR far prediction " + fmt(reverted) + " not at prior mean 2");

        const double mid = gpr.predict(std::vector<double>{2.5});
        expect.require(std::fabs(mid - 2.5) <= 1e-2, "GPR mid-grid prediction " + fmt(mid));
    }

    // Negative R^2 must pass through unclamped.
    {
        const ProcessSchema schema = single_input_schema({0, 1, 2, 3, 4, 20, 25, 30});
        const Expression steep = parse_expression("10*x1", schema);
        auto ds = std::make_shared<Dataset>(synthesize(schema, "y", steep, {}));
        std::vector<std::size_t> train_rows{0, 1, 2, 3, 4}, test_rows{5, 6, 7};
        const DataView train{ds.get(), train_rows, 0};
        const DataView test{ds.get(), test_rows, 0};
        const GprModel gpr = GprModel::fit(train);
        std::vector<double> preds(test.size()), targets(test.size());
        for (std::size_t i = 0; i < test.size(); ++i) {
            preds[i] = gpr.predict(test.inputs(i));
            targets[i] = test.target_value(i);
        }
        const Score far_score = score_predictions(preds, targets);
        expect.require(far_score.ok() && far_score.r2 < 0.0,
                       "far-extrapolation R2 " + fmt(far_score.r2) + " should be negative");
    }

    // Range-bound forest vs the exact-family candidate on monotone data.
    {
        const auto& lib = FixtureLibrary::instance();
        const ProcessSchema schema = lib.schema("flipmm");
        const Expression truth = lib.expression_for(lib.get("flipmm.depth"), schema);
        auto ds = std::make_shared<Dataset>(synthesize(schema, "Depth", truth, {}));
        const SplitDataset split = extrapolation_split(ds, 0.75, 30, 17);
        const DataView train = split.train_view(0);
        const DataView test = split.test_view(0);

        const ForestModel rfr = ForestModel::fit(train, {100, 1}, 7);
        for (std::size_t i = 0; i < test.size(); ++i) {
            const double pred = rfr.predict(test.inputs(i));
            expect.require(pred >= rfr.train_min() - 1e-9 && pred <= rfr.train_max() + 1e-9,
                           "RFR prediction escaped the training target range");
        }

        const LiftResult family = lift_constants(truth);
        FitConfig cfg;
        const FitResult fitted = fit_candidate(family.expr, train, cfg, family.initial_values);
        const Score cand_test = score(family.expr, fitted.coefficients, test);
        std::vector<double> preds(test.size()), targets(test.size());
        for (std::size_t i = 0; i < test.size(); ++i) {
            preds[i] = rfr.predict(test.inputs(i));
            targets[i] = test.target_value(i);
        }
        const Score rfr_test = score_predictions(preds, targets);
        expect.require(cand_test.ok() && cand_test.r2 >= 0.999, "candidate test R2 below 0.999");
        expect.require(rfr_test.ok() && rfr_test.r2 < cand_test.r2,
                       "RFR test R2 " + fmt(rfr_test.r2) + " not below candidate " + fmt(cand_test.r2));
        expect.note("candidate r2=" + fmt(cand_test.r2) + " rfr r2=" + fmt(rfr_test.r2));
    }

    return {"baseline-properties", expect.ok, false, expect.detail};
}

CheckResult check_norag_ablation() {
    Expect expect;
    const auto blocks = mechanics_blocks(110);
    const MechanicsRun first = run_mechanics(Scenario::norag_refined, blocks, 3);
    const MechanicsRun second = run_mechanics(Scenario::norag_refined, blocks, 3);

    for (const auto& [iteration, prompt] : first.result.state.prompts) {
        (void)iteration;
        expect.require(prompt.find("retrieved information") == std::string::npos,
                       "prompt mentions retrieved information");
        expect.require(prompt.find("Context passages:") == std::string::npos,
                       "prompt embeds retrieved chunks");
    }
    expect.require(first.result.state.stop_reason == "budget_exhausted",
                   "stop reason " + first.result.state.stop_reason);
    check_mechanics_guarantees(expect, first, second, 110);
    if (expect.ok) expect.note("prompts carry zero retrieved text; mechanics guarantees hold");
    return {"norag-ablation", expect.ok, false, expect.detail};
}

CheckResult check_pool_monotonic() {
    Expect expect;
    const auto blocks = mechanics_blocks(110);
    const MechanicsRun run = run_mechanics(Scenario::ctx_refined, blocks, 3);
    const auto& snapshots = run.result.state.pool_r2_by_iteration;
    expect.require(snapshots.size() == 4, "expected 4 pool snapshots");
    for (std::size_t i = 1; i < snapshots.size(); ++i) {
        expect.require(snapshots[i].front() >= snapshots[i - 1].front(),
                       "best R2 decreased at iteration " + std::to_string(i));
        for (std::size_t r = 0; r < snapshots[i - 1].size() && r < snapshots[i].size(); ++r)
            expect.require(snapshots[i][r] >= snapshots[i - 1][r],
                           "rank " + std::to_string(r) + " degraded at iteration " + std::to_string(i));
    }
    if (expect.ok) expect.note("pool dominates its predecessor at every rank across 3 iterations");
    return {"pool-monotonic", expect.ok, false, expect.detail};
}

} // namespace

std::vector<std::string> check_names() {
    return {
        "split-counts",
        "exact-recovery-depth",
        "exact-recovery-uts",
        "exact-recovery-printing-time",
        "reference-depth-mse",
        "refinement-mechanics",
        "pool-monotonic",
        "stop-rule",
        "metric-oracles",
        "fit-correctness",
        "retrieval-properties",
        "baseline-properties",
        "norag-ablation",
    };
}

CheckResult run_check(const std::string& name, const CheckOptions& options) {
    if (name == "split-counts") return check_split_counts();
    if (name == "exact-recovery-depth") return check_exact_recovery(name, "flipmm.depth");
    if (name == "exact-recovery-uts") return check_exact_recovery(name, "msla.uts");
    if (name == "exact-recovery-printing-time")
        return check_exact_recovery(name, "msla.printing_time");
    if (name == "reference-depth-mse") return check_reference_depth_mse(options);
    if (name == "refinement-mechanics") return check_refinement_mechanics();
    if (name == "pool-monotonic") return check_pool_monotonic();
    if (name == "stop-rule") return check_stop_rule();
    if (name == "metric-oracles") return check_metric_oracles();
    if (name == "fit-correctness") return check_fit_correctness();
    if (name == "retrieval-properties") return check_retrieval_properties();
    if (name == "baseline-properties") return check_baseline_properties();
    if (name == "norag-ablation") return check_norag_ablation();
    throw ConfigError("unknown check '" + name + "'; names: " + [] {
        std::string all;
        for (const auto& n : check_names()) {
            if (!all.empty()) all += ", ";
            all += n;
        }
        return all;
    }());
}

std::vector<CheckResult> run_all_checks(const CheckOptions& options) {
    std::vector<CheckResult> results;
    for (const auto& name : check_names()) results.push_back(run_check(name, options));
    return results;
}

} // namespace eqdisc
