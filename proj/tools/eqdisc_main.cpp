// Command-line front end for the discovery pipeline: corpus ingestion,
// retrieval, split/fit utilities, full discovery runs, baseline comparisons,
// and the reproduction checks.

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <set>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "eqdisc/backends.hpp"
#include "eqdisc/baselines.hpp"
#include "eqdisc/checks.hpp"
#include "eqdisc/config.hpp"
#include "eqdisc/dataset.hpp"
#include "eqdisc/errors.hpp"
#include "eqdisc/fit.hpp"
#include "eqdisc/fixtures.hpp"
#include "eqdisc/generator.hpp"
#include "eqdisc/knowledge.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitBackend = 2;
constexpr int kExitAcceptance = 3;

using namespace eqdisc;

ProcessSchema schema_from_arg(const std::string& arg) {
    constexpr std::string_view kBuiltin = "builtin:";
    if (arg.rfind(kBuiltin, 0) == 0)
        return FixtureLibrary::instance().schema(arg.substr(kBuiltin.size()));
    return load_schema(arg);
}

int cmd_ingest(const std::string& corpus, const std::string& out, const std::string& backend_kind,
               const std::string& base_url, const std::string& model, std::size_t chunk_size,
               std::size_t overlap) {
    BackendSpec spec;
    spec.kind = backend_kind;
    spec.http.base_url = base_url;
    spec.http.model = model;
    auto embedder = make_embedding_backend(spec);
    VectorIndex index = ingest_corpus(corpus, *embedder, chunk_size, overlap);
    index.save_jsonl(out);

    std::set<std::string> docs;
    for (const auto& c : index.chunks()) docs.insert(c.doc_id);
    std::cout << "indexed " << docs.size() << " documents into " << index.chunks().size()
              << " chunks -> " << out << "\n";
    return kExitOk;
}

int cmd_ask(const std::string& index_path, const std::string& schema_arg, const std::string& output,
            int form_id, std::size_t k, double alpha, const std::string& script_path,
            const std::string& base_url, const std::string& model, const std::string& templates_dir) {
    const ProcessSchema schema = schema_from_arg(schema_arg);
    const VectorIndex index = VectorIndex::load_jsonl(index_path);
    const TemplateSet templates =
        TemplateSet::load(templates_dir.empty() ? default_asset_dir() + "/templates" : templates_dir);

    LocalHashEmbedder embedder;
    BackendSpec spec;
    if (!script_path.empty()) {
        spec.kind = "scripted";
        spec.script_path = script_path;
    } else {
        spec.kind = "http";
        spec.http.base_url = base_url;
        spec.http.model = model;
    }
    auto llm = make_chat_backend(spec);

    const QueryForm form = render_query_form(form_id, templates, schema, output);
    RetrievalConfig rcfg;
    rcfg.k = k;
    rcfg.alpha = alpha;
    const RetrievedContext ctx =
        retrieve_and_synthesize(form, index, embedder, *llm, schema, output, rcfg);

    std::cout << "retrieved " << ctx.chunks.size() << " chunks (scores";
    for (const auto& c : ctx.chunks) std::cout << ' ' << std::setprecision(4) << c.score;
    std::cout << ")\n\nanswer:\n" << ctx.answer << "\n";
    if (ctx.extracted_equation) {
        std::cout << "\nextracted equation: " << *ctx.extracted_equation << "\ninitials:";
        for (double v : ctx.extracted_initials) std::cout << ' ' << v;
        std::cout << "\nscenario hint: " << ctx.hint << "\n";
    } else {
        std::cout << "\nno equation extracted; scenario hint: " << ctx.hint << "\n";
    }
    return kExitOk;
}

int cmd_split(const std::string& schema_arg, const std::string& fixture, const std::string& csv,
              double fraction, std::size_t train_size, std::uint64_t seed, double noise_sd,
              std::uint64_t noise_seed, const std::string& out_dir) {
    ProcessSchema schema = schema_from_arg(schema_arg);
    std::shared_ptr<const Dataset> ds;
    if (!fixture.empty()) {
        const auto& lib = FixtureLibrary::instance();
        const Fixture& fx = lib.get(fixture);
        ds = std::make_shared<Dataset>(synthesize(schema, fx.output,
                                                  lib.expression_for(fx, schema), {}, noise_sd,
                                                  noise_seed));
    } else if (!csv.empty()) {
        ds = std::make_shared<Dataset>(load_dataset_csv(schema, csv));
    } else {
        throw ConfigError("split needs --fixture or --csv");
    }

    const SplitDataset split = extrapolation_split(ds, fraction, train_size, seed);
    std::filesystem::create_directories(out_dir);
    save_dataset_csv(*ds, out_dir + "/dataset.csv");
    save_split_json(split, out_dir + "/split.json");
    std::cout << "rows " << ds->size() << " -> train " << split.train.size() << " / validation "
              << split.validation.size() << " / test " << split.test.size() << "\n";
    std::cout << "thresholds:";
    for (double t : split.thresholds) std::cout << ' ' << t;
    std::cout << "\nwrote " << out_dir << "/dataset.csv and " << out_dir << "/split.json\n";
    return kExitOk;
}

int cmd_fit(const std::string& schema_arg, const std::string& csv, const std::string& split_path,
            const std::string& expr_text, const std::string& target, std::uint64_t seed) {
    const ProcessSchema schema = schema_from_arg(schema_arg);
    auto ds = std::make_shared<Dataset>(load_dataset_csv(schema, csv));
    const std::string target_name = target.empty() ? ds->target_names.front() : target;
    const int target_idx = ds->target_index(target_name);
    if (target_idx < 0) throw ConfigError("dataset has no target '" + target_name + "'");

    SplitDataset split;
    if (!split_path.empty()) {
        split = load_split_json(ds, split_path);
    } else {
        split = extrapolation_split(ds, 0.75, std::min<std::size_t>(30, ds->size() / 2), seed);
    }

    const Expression expr = parse_expression(expr_text, schema);
    FitConfig cfg;
    cfg.seed = seed;
    const std::size_t t = static_cast<std::size_t>(target_idx);
    const FitResult fitted = fit_candidate(expr, split.train_view(t), cfg);
    if (!fitted.train.ok()) {
        std::cout << "fit failed: no coefficient start produced a finite SSE\n";
        return kExitOk;
    }
    const Score validation = score(expr, fitted.coefficients, split.validation_view(t));
    const Score test = score(expr, fitted.coefficients, split.test_view(t));

    std::cout << "expression: " << expr.render() << "\n";
    std::cout << "fitted:     " << expr.render_with(fitted.coefficients) << "\n";
    std::cout << "path:       " << (fitted.linear_path ? "linear least squares" : "levenberg-marquardt")
              << (fitted.underdetermined ? " (underdetermined)" : "") << "\n";
    std::cout << std::setprecision(10);
    std::cout << "train       mse " << fitted.train.mse << "  r2 " << fitted.train.r2 << "\n";
    std::cout << "validation  mse " << validation.mse << "  r2 " << validation.r2 << "\n";
    std::cout << "test        mse " << test.mse << "  r2 " << test.r2 << "\n";
    return kExitOk;
}

int cmd_discover(const std::string& config_path, const std::string& scenario_override,
                 std::int64_t seed_override, const std::string& out_override,
                 const std::string& backend_override) {
    RunConfig cfg = RunConfig::load(config_path);
    if (!scenario_override.empty()) cfg.scenario = scenario_override;
    if (seed_override >= 0) cfg.seed = static_cast<std::uint64_t>(seed_override);
    if (!out_override.empty()) cfg.output_dir = out_override;
    if (!backend_override.empty()) {
        cfg.chat.kind = "scripted";
        cfg.chat.script_path = backend_override;
    }
    cfg.validate();

    const DiscoverArtifacts artifacts = run_discover_pipeline(cfg);
    const RefinementState& state = artifacts.result.state;
    const ModelCandidate& best = artifacts.result.best;

    std::cout << "scenario " << cfg.scenario << ": stop=" << state.stop_reason << " after iteration "
              << state.iteration << " (" << state.generation_calls << " generation calls)\n";
    if (artifacts.used_rag)
        std::cout << "retrieval hint: " << artifacts.context.hint
                  << (artifacts.context.extracted_equation
                          ? " (equation: " + *artifacts.context.extracted_equation + ")"
                          : "")
                  << "\n";
    std::cout << std::setprecision(10);
    std::cout << "best: " << best.expression.render_with(best.coefficients) << "\n";
    std::cout << "  validation mse " << best.validation.mse << "  r2 " << best.validation.r2 << "\n";
    if (best.test) std::cout << "  test       mse " << best.test->mse << "  r2 " << best.test->r2 << "\n";
    std::cout << "report: " << artifacts.report_path << "\n";
    return kExitOk;
}

int cmd_eval(const std::string& config_path, const std::string& best_model_path,
             const std::string& out_dir) {
    RunConfig cfg = RunConfig::load(config_path);
    const ProcessSchema schema = cfg.resolve_schema();
    auto ds = build_dataset(cfg, schema);
    const SplitDataset split = build_split(cfg, ds);
    const int target_idx = ds->target_index(cfg.target_output);
    if (target_idx < 0) throw ConfigError("dataset has no target '" + cfg.target_output + "'");
    const std::size_t t = static_cast<std::size_t>(target_idx);

    std::ifstream in(best_model_path);
    if (!in) throw ConfigError("cannot open best model file: " + best_model_path);
    nlohmann::json j;
    in >> j;
    ModelCandidate candidate;
    candidate.expression = parse_expression(j.at("expression").get<std::string>(), schema);
    candidate.canonical = candidate.expression.render();
    candidate.coefficients = j.value("coefficients", std::vector<double>{});
    candidate.validation = score(candidate.expression, candidate.coefficients, split.validation_view(t));

    const GprModel gpr = GprModel::fit(split.train_view(t));
    const ForestModel rfr = ForestModel::fit(split.train_view(t), {}, cfg.seed);
    const CompareReport report = compare_report(split, cfg.target_output, candidate, gpr, rfr);

    const std::string dir = out_dir.empty() ? cfg.output_dir : out_dir;
    std::filesystem::create_directories(dir);
    write_compare_csv(report, dir + "/comparison.csv");
    write_compare_json(report, dir + "/comparison.json");

    std::cout << std::left << std::setw(12) << "model" << std::setw(12) << "subset" << std::setw(16)
              << "mse" << "r2\n";
    std::cout << std::setprecision(6);
    for (const auto& row : report.rows)
        std::cout << std::left << std::setw(12) << row.model << std::setw(12) << row.subset
                  << std::setw(16) << row.scored.mse << row.scored.r2 << "\n";
    std::cout << "wrote " << dir << "/comparison.csv and .json\n";
    return kExitOk;
}

int cmd_reproduce(const std::string& name, const std::string& ranges) {
    CheckOptions options;
    options.ranges_path = ranges;

    std::vector<CheckResult> results;
    if (name == "all") results = run_all_checks(options);
    else results.push_back(run_check(name, options));

    bool any_failed = false;
    for (const auto& r : results) {
        const char* status = r.skipped ? "SKIP" : (r.passed ? "PASS" : "FAIL");
        std::cout << std::left << std::setw(30) << r.name << std::setw(6) << status << r.detail
                  << "\n";
        if (!r.passed && !r.skipped) any_failed = true;
    }
    return any_failed ? kExitAcceptance : kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"equation-discovery pipeline: retrieval-backed model generation, "
                 "coefficient fitting, and extrapolation evaluation"};
    app.require_subcommand(1);

    // ingest
    auto* ingest = app.add_subcommand("ingest", "chunk and embed a corpus into a JSONL index");
    std::string in_corpus, in_out = "index.jsonl", in_backend = "local", in_url, in_model;
    std::size_t in_chunk = 1024, in_overlap = 128;
    ingest->add_option("--corpus", in_corpus, "directory of .txt/.md files")->required();
    ingest->add_option("--out", in_out, "index output path");
    ingest->add_option("--backend", in_backend, "embeddings backend: local|http");
    ingest->add_option("--base-url", in_url, "http embeddings base url");
    ingest->add_option("--model", in_model, "http embeddings model name");
    ingest->add_option("--chunk-size", in_chunk, "chunk size in chars");
    ingest->add_option("--overlap", in_overlap, "chunk overlap in chars");

    // ask
    auto* ask = app.add_subcommand("ask", "one-off retrieval and answer synthesis");
    std::string ask_index, ask_schema = "builtin:flipmm", ask_output, ask_script, ask_templates;
    std::string ask_url, ask_model;
    int ask_form = 2;
    std::size_t ask_k = 8;
    double ask_alpha = 0.7;
    ask->add_option("--index", ask_index, "JSONL index path")->required();
    ask->add_option("--schema", ask_schema, "schema JSON path or builtin:<process>");
    ask->add_option("--output", ask_output, "target output variable")->required();
    ask->add_option("--form", ask_form, "query form: 1 or 2");
    ask->add_option("--k", ask_k, "chunks per query");
    ask->add_option("--alpha", ask_alpha, "rerank blend: cosine weight");
    ask->add_option("--script", ask_script, "scripted answer fixture (default: http chat)");
    ask->add_option("--base-url", ask_url, "http chat base url");
    ask->add_option("--model", ask_model, "http chat model name");
    ask->add_option("--templates", ask_templates, "templates directory");

    // split
    auto* split = app.add_subcommand("split", "synthesize/load a dataset and write the extrapolation split");
    std::string sp_schema = "builtin:flipmm", sp_fixture, sp_csv, sp_out = "out/split";
    double sp_fraction = 0.75, sp_noise = 0.0;
    std::size_t sp_train = 30;
    std::uint64_t sp_seed = 0, sp_noise_seed = 0;
    split->add_option("--schema", sp_schema, "schema JSON path or builtin:<process>");
    split->add_option("--fixture", sp_fixture, "ground-truth fixture name");
    split->add_option("--csv", sp_csv, "dataset CSV path");
    split->add_option("--fraction", sp_fraction, "retention fraction");
    split->add_option("--train-size", sp_train, "training rows");
    split->add_option("--seed", sp_seed, "shuffle seed");
    split->add_option("--noise-sd", sp_noise, "gaussian noise sd for synthesis");
    split->add_option("--noise-seed", sp_noise_seed, "noise seed");
    split->add_option("--out", sp_out, "output directory");

    // fit
    auto* fit = app.add_subcommand("fit", "fit one expression against a dataset");
    std::string ft_schema = "builtin:flipmm", ft_csv, ft_split, ft_expr, ft_target;
    std::uint64_t ft_seed = 0;
    fit->add_option("--schema", ft_schema, "schema JSON path or builtin:<process>");
    fit->add_option("--csv", ft_csv, "dataset CSV path")->required();
    fit->add_option("--split", ft_split, "split manifest (defaults to a fresh 75% split)");
    fit->add_option("--expr", ft_expr, "DSL expression with a<k> coefficients")->required();
    fit->add_option("--target", ft_target, "target output (defaults to the first)");
    fit->add_option("--seed", ft_seed, "fit seed");

    // discover
    auto* discover = app.add_subcommand("discover", "run the full discovery pipeline from a config");
    std::string dc_config, dc_scenario, dc_out, dc_backend;
    std::int64_t dc_seed = -1;
    discover->add_option("--config", dc_config, "run config JSON")->required();
    discover->add_option("--scenario", dc_scenario, "override config scenario");
    discover->add_option("--seed", dc_seed, "override config seed");
    discover->add_option("--out", dc_out, "override output directory");
    discover->add_option("--backend", dc_backend, "override chat backend with a scripted fixture");

    // eval
    auto* eval = app.add_subcommand("eval", "compare a discovered model against GPR/RFR baselines");
    std::string ev_config, ev_best, ev_out;
    eval->add_option("--config", ev_config, "run config JSON")->required();
    eval->add_option("--best", ev_best, "best_model.json from a discover run")->required();
    eval->add_option("--out", ev_out, "output directory (defaults to config output_dir)");

    // reproduce
    auto* reproduce = app.add_subcommand("reproduce", "run a named reproduction check (or 'all')");
    std::string rp_name = "all", rp_ranges;
    reproduce->add_option("check", rp_name, "check name or 'all'");
    reproduce->add_option("--ranges", rp_ranges, "physical input levels JSON for reference-depth-mse");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*ingest)
            return cmd_ingest(in_corpus, in_out, in_backend, in_url, in_model, in_chunk, in_overlap);
        if (*ask)
            return cmd_ask(ask_index, ask_schema, ask_output, ask_form, ask_k, ask_alpha, ask_script,
                           ask_url, ask_model, ask_templates);
        if (*split)
            return cmd_split(sp_schema, sp_fixture, sp_csv, sp_fraction, sp_train, sp_seed, sp_noise,
                             sp_noise_seed, sp_out);
        if (*fit) return cmd_fit(ft_schema, ft_csv, ft_split, ft_expr, ft_target, ft_seed);
        if (*discover) return cmd_discover(dc_config, dc_scenario, dc_seed, dc_out, dc_backend);
        if (*eval) return cmd_eval(ev_config, ev_best, ev_out);
        if (*reproduce) return cmd_reproduce(rp_name, rp_ranges);
    } catch (const BackendError& e) {
        std::cerr << "backend error: " << e.what() << "\n";
        return kExitBackend;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const ParseError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    }
    return kExitOk;
}
