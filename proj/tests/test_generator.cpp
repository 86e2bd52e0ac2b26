#include <doctest.h>

#include <cmath>
#include <random>

#include "eqdisc/config.hpp"
#include "eqdisc/generator.hpp"

using namespace eqdisc;

namespace {

ProcessSchema xyz_schema() {
    ProcessSchema s;
    s.process = "xyz";
    s.inputs = {{"x1", "", {}, {1, 2, 3, 4}},
                {"x2", "", {}, {1, 2, 3, 4}},
                {"x3", "", {}, {1, 2, 3, 4}}};
    s.outputs = {{"y", ""}};
    s.validate();
    return s;
}

SplitDataset make_split(const ProcessSchema& schema, const std::string& truth_text) {
    const Expression truth = parse_expression(truth_text, schema);
    auto ds = std::make_shared<Dataset>(synthesize(schema, "y", truth, {}));
    return extrapolation_split(ds, 0.75, 18, 11);
}

ModelCandidate pool_candidate(const ProcessSchema& schema, const std::string& text, double r2,
                              double mse, std::size_t age) {
    ModelCandidate c;
    c.expression = parse_expression(text, schema);
    c.canonical = c.expression.render();
    c.validation = {mse, r2};
    c.provenance.generation_index = age;
    return c;
}

} // namespace

TEST_CASE("sample_temperature: range, determinism, and mean") {
    std::mt19937_64 rng(1);
    for (int i = 0; i < 10000; ++i) {
        const double t = sample_temperature(rng);
        CHECK(t >= 0.3);
        CHECK(t <= 0.8);
    }

    std::mt19937_64 a(7), b(7);
    for (int i = 0; i < 100; ++i) CHECK(sample_temperature(a) == sample_temperature(b));

    std::mt19937_64 rng2(123);
    double sum = 0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) sum += sample_temperature(rng2);
    CHECK(std::fabs(sum / n - 0.55) < 0.01);
}

TEST_CASE("scripted backend: block parsing and exhaustion") {
    const std::string script = "a0 + a1*x1\n---\na0*exp(x1)\n---\n\nln(x1) + a0\n";
    const auto blocks = parse_script_blocks(script);
    REQUIRE(blocks.size() == 3);
    CHECK(blocks[0] == "a0 + a1*x1");
    CHECK(blocks[2] == "ln(x1) + a0");

    ScriptedBackend backend(blocks);
    CHECK(backend.complete("p", 0.5) == "a0 + a1*x1");
    CHECK(backend.remaining() == 2);
    backend.complete("p", 0.5);
    backend.complete("p", 0.5);
    CHECK_THROWS_AS(backend.complete("p", 0.5), BackendExhausted);

    const std::string rejoined = join_script_blocks(blocks);
    CHECK(parse_script_blocks(rejoined) == blocks);
}

TEST_CASE("generate_batch: fixture order, drop accounting, exact call counts") {
    const auto schema = xyz_schema();
    std::mt19937_64 rng(3);
    std::size_t counter = 0;

    {
        ScriptedBackend backend({"a0 + a1*x1", "a0*x2", "sqrt(x3)*a0"});
        const DraftBatch batch =
            generate_batch("p", 3, backend, rng, schema, Scenario::norag_initial, 0, counter, 2);
        REQUIRE(batch.drafts.size() == 3);
        CHECK(batch.calls == 3);
        CHECK(batch.drafts[0].canonical == "a0 + a1*x1");
        CHECK(batch.drafts[1].canonical == "a0*x2");
        CHECK_FALSE(batch.backend_exhausted);
    }
    {
        // one garbage block among five, then exhaustion while retrying
        ScriptedBackend backend({"a0 + x1", "complete gibberish here.", "a0 + x2", "a0 + x3",
                                 "a0*x1*x2"});
        std::size_t counter2 = 0;
        const DraftBatch batch =
            generate_batch("p", 5, backend, rng, schema, Scenario::norag_initial, 0, counter2, 2);
        CHECK(batch.drafts.size() == 4);
        CHECK(batch.backend_exhausted); // retry hit the end of the script
        std::size_t drops = 0;
        for (const auto& e : batch.log)
            if (!e.parsed) ++drops;
        CHECK(drops == 1);
    }
    {
        std::vector<std::string> fifty(50, "a0 + a1*x1*x2");
        ScriptedBackend backend(fifty);
        std::size_t counter3 = 0;
        const DraftBatch batch =
            generate_batch("p", 50, backend, rng, schema, Scenario::norag_initial, 0, counter3, 2);
        CHECK(batch.calls == 50);
        CHECK(backend.calls() == 50);
        CHECK(batch.drafts.size() == 50);
    }
}

TEST_CASE("pool: capacity, ranking, dedup, failed rejection") {
    const auto schema = xyz_schema();
    CandidatePool pool(3);

    CHECK_FALSE(pool.insert(pool_candidate(schema, "a0", std::nan(""), std::nan(""), 0)));
    ModelCandidate failed = pool_candidate(schema, "a0*x1", 0.0, 0.0, 1);
    failed.validation = Score::failed();
    CHECK_FALSE(pool.insert(failed));
    CHECK(pool.empty());

    CHECK(pool.insert(pool_candidate(schema, "a0 + a1*x1", 0.5, 2.0, 0)));
    CHECK(pool.insert(pool_candidate(schema, "a0 + a1*x2", 0.8, 1.0, 1)));
    CHECK(pool.insert(pool_candidate(schema, "a0 + a1*x3", 0.7, 1.5, 2)));
    REQUIRE(pool.size() == 3);
    CHECK(pool.ranked()[0].canonical == "a0 + a1*x2");
    CHECK(pool.ranked()[2].canonical == "a0 + a1*x1");

    // over capacity: worst falls out
    CHECK(pool.insert(pool_candidate(schema, "a0*sqrt(x1)", 0.9, 0.5, 3)));
    REQUIRE(pool.size() == 3);
    CHECK(pool.ranked()[0].canonical == "a0*sqrt(x1)");
    CHECK(pool.ranked()[2].canonical == "a0 + a1*x3");

    // a worse candidate bounces off a full pool
    CHECK_FALSE(pool.insert(pool_candidate(schema, "a0*ln(x1)", 0.1, 9.0, 4)));
    CHECK(pool.size() == 3);

    // duplicate canonical keeps the better score
    CHECK(pool.insert(pool_candidate(schema, "a0*sqrt(x1)", 0.95, 0.4, 5)));
    CHECK(pool.size() == 3);
    CHECK(pool.ranked()[0].validation.r2 == doctest::Approx(0.95));
    CHECK_FALSE(pool.insert(pool_candidate(schema, "a0*sqrt(x1)", 0.2, 5.0, 6)));
    CHECK(pool.ranked()[0].validation.r2 == doctest::Approx(0.95));

    // rank ties: equal r2 resolves by mse, then age
    CandidatePool tie_pool(4);
    tie_pool.insert(pool_candidate(schema, "a0 + x1", 0.5, 2.0, 10));
    tie_pool.insert(pool_candidate(schema, "a0 + x2", 0.5, 1.0, 11));
    tie_pool.insert(pool_candidate(schema, "a0 + x3", 0.5, 1.0, 9));
    CHECK(tie_pool.ranked()[0].canonical == "a0 + x3"); // same mse, earlier generation
    CHECK(tie_pool.ranked()[1].canonical == "a0 + x2");
}

TEST_CASE("prompts: scenario-specific content") {
    const auto templates = TemplateSet::load(default_asset_dir() + "/templates");
    const auto schema = xyz_schema();

    RetrievedContext ctx;
    ctx.answer = "y rises with x1 and falls with x3";

    const std::string norag =
        render_initial_prompt(Scenario::norag_initial, nullptr, schema, "y", templates);
    CHECK(norag.find("retrieved") == std::string::npos);
    CHECK(norag.find("a0, a1, a2") != std::string::npos);

    const std::string with_ctx =
        render_initial_prompt(Scenario::ctx_initial, &ctx, schema, "y", templates);
    CHECK(with_ctx.find("Use the following retrieved information") != std::string::npos);
    CHECK(with_ctx.find(ctx.answer) != std::string::npos);

    CHECK_THROWS_AS(render_initial_prompt(Scenario::ctx_initial, nullptr, schema, "y", templates),
                    ConfigError);
    CHECK_THROWS_AS(render_initial_prompt(Scenario::eqctx_initial, &ctx, schema, "y", templates),
                    ConfigError); // no extracted equation

    ctx.extracted_equation = "a0 + a1*x1";
    ctx.extracted_initials = {1.0, 2.0};
    ctx.hint = "eqctx";
    const std::string eq_prompt =
        render_initial_prompt(Scenario::eqctx_initial, &ctx, schema, "y", templates);
    CHECK(eq_prompt.find("a0 + a1*x1") != std::string::npos);
    CHECK(eq_prompt.find("format that equation as specified") != std::string::npos);
}

TEST_CASE("refine prompt: summary length and the strategy lines") {
    const auto templates = TemplateSet::load(default_asset_dir() + "/templates");
    const auto schema = xyz_schema();
    RetrievedContext ctx;
    ctx.answer = "context";

    CandidatePool one(20);
    one.insert(pool_candidate(schema, "a0 + a1*x1", 0.5, 1.0, 0));
    const std::string single =
        render_refine_prompt(Scenario::ctx_refined, one, &ctx, schema, "y", templates);
    CHECK(single.find("1. y = ") != std::string::npos);
    CHECK(single.find("2. y = ") == std::string::npos);
    CHECK(single.find("algebraic manipulation") != std::string::npos);
    CHECK(single.find("Combine terms or introduce new terms") != std::string::npos);

    CandidatePool full(20);
    const char* vars[] = {"x1", "x2", "x3"};
    for (int i = 0; i < 25; ++i) {
        const std::string text = "a0 + a" + std::to_string(1 + i % 7) + "*" + vars[i % 3] + "^" +
                                 std::to_string(1 + i / 3);
        full.insert(pool_candidate(schema, text, 0.3 + 0.02 * i, 1.0, static_cast<std::size_t>(i)));
    }
    REQUIRE(full.size() == 20);
    const std::string twenty =
        render_refine_prompt(Scenario::ctx_refined, full, &ctx, schema, "y", templates);
    CHECK(twenty.find("20. y = ") != std::string::npos);
    CHECK(twenty.find("21. y = ") == std::string::npos);

    CandidatePool empty(20);
    CHECK_THROWS_AS(render_refine_prompt(Scenario::ctx_refined, empty, &ctx, schema, "y", templates),
                    DataError);
}

TEST_CASE("run: exact family in the first batch stops at iteration 0") {
    const auto templates = TemplateSet::load(default_asset_dir() + "/templates");
    const auto schema = xyz_schema();
    const SplitDataset split = make_split(schema, "3 + 2*x1^2 + 6*x2*x3");

    std::vector<std::string> blocks{"a0 + a1*x1^2 + a2*x2*x3"};
    for (int i = 0; i < 9; ++i) blocks.push_back("a0 + a1*x" + std::to_string(1 + i % 3));
    ScriptedBackend backend(blocks);

    GeneratorConfig cfg;
    cfg.budgets.initial_n = 10;
    cfg.budgets.per_iteration_n = 5;
    cfg.budgets.max_iterations = 4;
    cfg.seed = 5;

    const RunResult run = run_discovery(Scenario::norag_refined, split, "y", nullptr, backend,
                                        templates, cfg);
    CHECK(run.state.stop_reason == "success");
    CHECK(run.state.iteration == 0);
    CHECK(run.state.generation_calls == 10);
    REQUIRE(run.best.test.has_value());
    CHECK(run.best.test->r2 >= 0.999);
}

TEST_CASE("run: max_iterations 0 keeps the best of the initial batch") {
    const auto templates = TemplateSet::load(default_asset_dir() + "/templates");
    const auto schema = xyz_schema();
    const SplitDataset split = make_split(schema, "3 + 2*x1^2 + 6*x2*x3");

    std::vector<std::string> blocks;
    for (int i = 0; i < 8; ++i)
        blocks.push_back("a0 + a1*" + std::string(i % 2 ? "x1" : "sqrt(x2)"));
    ScriptedBackend backend(blocks);

    GeneratorConfig cfg;
    cfg.budgets.initial_n = 8;
    cfg.budgets.max_iterations = 0;
    const RunResult run = run_discovery(Scenario::norag_refined, split, "y", nullptr, backend,
                                        templates, cfg);
    CHECK(run.state.stop_reason == "budget_exhausted");
    CHECK(run.state.iteration == 0);
    CHECK(run.state.generation_calls == 8);
}

TEST_CASE("run: eqctx seats the lifted equation as candidate #1 without a backend call") {
    const auto templates = TemplateSet::load(default_asset_dir() + "/templates");
    const auto schema = xyz_schema();
    const SplitDataset split = make_split(schema, "3 + 2*x1^2 + 6*x2*x3");

    RetrievedContext ctx;
    ctx.answer = "an equation was found";
    ctx.extracted_equation = "a0 + a1*x1^2 + a2*x2*x3";
    ctx.extracted_initials = {3.0, 2.0, 6.0};
    ctx.hint = "eqctx";

    std::vector<std::string> blocks(5, "a0 + a1*x1");
    ScriptedBackend backend(blocks);
    GeneratorConfig cfg;
    cfg.budgets.initial_n = 5;
    cfg.budgets.max_iterations = 3;

    const RunResult run =
        run_discovery(Scenario::eqctx_refined, split, "y", &ctx, backend, templates, cfg);
    REQUIRE_FALSE(run.state.history.empty());
    CHECK(run.state.history[0].generation_index == 0);
    CHECK(run.state.history[0].raw_text == *ctx.extracted_equation);
    CHECK(run.state.generation_calls == 5); // the seeded candidate is free
    CHECK(run.best.provenance.backend_id == "retrieved-equation");
    CHECK(run.state.stop_reason == "success");
}

TEST_CASE("run: empty initial batch fails with a diagnostic") {
    const auto templates = TemplateSet::load(default_asset_dir() + "/templates");
    const auto schema = xyz_schema();
    const SplitDataset split = make_split(schema, "x1 + x2");

    ScriptedBackend backend(std::vector<std::string>(8, "pure prose, nothing parseable."));
    GeneratorConfig cfg;
    cfg.budgets.initial_n = 4;
    cfg.budgets.attempt_factor = 2;
    CHECK_THROWS_AS(run_discovery(Scenario::norag_initial, split, "y", nullptr, backend, templates,
                                  cfg),
                    DataError);
}

TEST_CASE("run: scripted runs are deterministic") {
    const auto templates = TemplateSet::load(default_asset_dir() + "/templates");
    const auto schema = xyz_schema();
    const SplitDataset split = make_split(schema, "3 + 2*x1^2 + 6*x2*x3");

    std::vector<std::string> blocks;
    for (int i = 0; i < 20; ++i)
        blocks.push_back("a0 + a1*x" + std::to_string(1 + i % 3) + "^" + std::to_string(1 + i % 2));

    const auto once = [&] {
        ScriptedBackend backend(blocks);
        GeneratorConfig cfg;
        cfg.budgets.initial_n = 10;
        cfg.budgets.per_iteration_n = 5;
        cfg.budgets.max_iterations = 2;
        cfg.seed = 42;
        const RunResult run = run_discovery(Scenario::norag_refined, split, "y", nullptr, backend,
                                            templates, cfg);
        RunMetadata meta;
        meta.scenario = "norag_refined";
        meta.process = "xyz";
        meta.target_output = "y";
        meta.backend_id = backend.id();
        meta.seed = cfg.seed;
        return run_report_text(meta, run);
    };
    CHECK(once() == once());
}
