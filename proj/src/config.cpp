#include "eqdisc/config.hpp"

#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "eqdisc/errors.hpp"
#include "eqdisc/fixtures.hpp"

namespace eqdisc {

std::string default_asset_dir() {
#ifdef EQDISC_ASSET_DIR
    return EQDISC_ASSET_DIR;
#else
    return "assets";
#endif
}

namespace {

BackendSpec backend_from_json(const nlohmann::json& j, const std::string& what) {
    BackendSpec spec;
    spec.kind = j.value("kind", "");
    if (spec.kind.empty()) throw ConfigError(what + " backend needs a 'kind'");
    spec.script_path = j.value("script_path", "");
    spec.http.base_url = j.value("base_url", "");
    spec.http.path = j.value("path", "");
    spec.http.model = j.value("model", "");
    spec.http.api_key_env = j.value("api_key_env", "");
    spec.http.timeout_seconds = j.value("timeout_seconds", 30);
    spec.http.retries = j.value("retries", 2);
    return spec;
}

} // namespace

RunConfig RunConfig::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config JSON: ") + e.what());
    }

    RunConfig cfg;
    cfg.schema = j.value("schema", cfg.schema);
    cfg.target_output = j.value("target_output", "");

    if (j.contains("data")) {
        const auto& d = j.at("data");
        cfg.dataset_csv = d.value("dataset_csv", "");
        cfg.truth_fixture = d.value("truth_fixture", "");
        cfg.noise_sd = d.value("noise_sd", 0.0);
        cfg.noise_seed = d.value("noise_seed", 0ULL);
    }
    if (j.contains("split")) {
        const auto& s = j.at("split");
        cfg.split_fraction = s.value("fraction", cfg.split_fraction);
        cfg.train_size = s.value("train_size", cfg.train_size);
        cfg.split_seed = s.value("seed", cfg.split_seed);
    }
    cfg.scenario = j.value("scenario", cfg.scenario);
    if (j.contains("retrieval")) {
        const auto& r = j.at("retrieval");
        cfg.corpus_dir = r.value("corpus_dir", "");
        cfg.index_path = r.value("index_path", "");
        cfg.retrieval.k = r.value("k", cfg.retrieval.k);
        cfg.retrieval.alpha = r.value("alpha", cfg.retrieval.alpha);
        cfg.chunk_size = r.value("chunk_size", cfg.chunk_size);
        cfg.chunk_overlap = r.value("chunk_overlap", cfg.chunk_overlap);
    }
    if (j.contains("backends")) {
        const auto& b = j.at("backends");
        if (b.contains("embeddings")) cfg.embeddings = backend_from_json(b.at("embeddings"), "embeddings");
        if (b.contains("chat")) cfg.chat = backend_from_json(b.at("chat"), "chat");
    }
    if (j.contains("budgets")) {
        const auto& b = j.at("budgets");
        cfg.budgets.initial_n = b.value("initial_n", cfg.budgets.initial_n);
        cfg.budgets.per_iteration_n = b.value("per_iteration_n", cfg.budgets.per_iteration_n);
        cfg.budgets.max_iterations = b.value("max_iterations", cfg.budgets.max_iterations);
        cfg.budgets.attempt_factor = b.value("attempt_factor", cfg.budgets.attempt_factor);
    }
    if (j.contains("fit")) {
        const auto& f = j.at("fit");
        cfg.fit.multistart_count = f.value("multistart_count", cfg.fit.multistart_count);
        cfg.fit.max_iterations = f.value("max_iterations", cfg.fit.max_iterations);
        cfg.fit.tolerance = f.value("tolerance", cfg.fit.tolerance);
        cfg.fit.penalty = f.value("penalty", cfg.fit.penalty);
    }
    cfg.seed = j.value("seed", 0ULL);
    cfg.pool_capacity = j.value("pool_capacity", cfg.pool_capacity);
    cfg.extraction_rules = j.value("extraction_rules", "");
    if (j.contains("expr_limits")) {
        const auto& e = j.at("expr_limits");
        cfg.limits.max_depth = e.value("max_depth", cfg.limits.max_depth);
        cfg.limits.max_nodes = e.value("max_nodes", cfg.limits.max_nodes);
    }
    cfg.templates_dir = j.value("templates_dir", "");
    cfg.output_dir = j.value("output_dir", cfg.output_dir);
    cfg.validate();
    return cfg;
}

void RunConfig::validate() const {
    if (target_output.empty()) throw ConfigError("config needs target_output");
    const bool has_csv = !dataset_csv.empty();
    const bool has_fixture = !truth_fixture.empty();
    if (has_csv == has_fixture)
        throw ConfigError("config needs exactly one of data.dataset_csv / data.truth_fixture");
    scenario_from_string(scenario); // throws on unknown names
    if (!(split_fraction > 0.0 && split_fraction < 1.0))
        throw ConfigError("split.fraction must lie in (0, 1)");
    const Scenario s = scenario_from_string(scenario);
    if (scenario_uses_rag(s)) {
        if (corpus_dir.empty() && index_path.empty())
            throw ConfigError("scenario " + scenario + " needs retrieval.corpus_dir or retrieval.index_path");
    }
    if (chat.kind.empty()) throw ConfigError("config needs backends.chat");
    if (chat.kind == "scripted" && chat.script_path.empty())
        throw ConfigError("scripted chat backend needs script_path");
    if (output_dir.empty()) throw ConfigError("config needs a non-empty output_dir");
}

ProcessSchema RunConfig::resolve_schema() const {
    constexpr std::string_view kBuiltin = "builtin:";
    if (schema.rfind(kBuiltin, 0) == 0)
        return FixtureLibrary::instance().schema(schema.substr(kBuiltin.size()));
    return load_schema(schema);
}

std::string RunConfig::resolved_templates_dir() const {
    return templates_dir.empty() ? default_asset_dir() + "/templates" : templates_dir;
}

namespace {

// Base URLs may come from the environment instead of the config; the API key
// always stays in the environment.
HttpBackendConfig with_env(HttpBackendConfig http, const char* base_url_env,
                           const char* default_key_env) {
    if (http.base_url.empty()) {
        if (const char* url = std::getenv(base_url_env)) http.base_url = url;
    }
    if (http.api_key_env.empty()) http.api_key_env = default_key_env;
    return http;
}

} // namespace

std::unique_ptr<EmbeddingBackend> make_embedding_backend(const BackendSpec& spec) {
    if (spec.kind == "local" || spec.kind.empty()) return std::make_unique<LocalHashEmbedder>();
    if (spec.kind == "http")
        return std::make_unique<HttpEmbeddingBackend>(
            with_env(spec.http, "EQDISC_EMBEDDINGS_BASE_URL", "EQDISC_API_KEY"));
    throw ConfigError("unknown embeddings backend kind '" + spec.kind + "'");
}

std::unique_ptr<CompletionBackend> make_chat_backend(const BackendSpec& spec) {
    if (spec.kind == "scripted")
        return std::make_unique<ScriptedBackend>(ScriptedBackend::from_file(spec.script_path));
    if (spec.kind == "http")
        return std::make_unique<HttpChatBackend>(
            with_env(spec.http, "EQDISC_CHAT_BASE_URL", "EQDISC_API_KEY"));
    throw ConfigError("unknown chat backend kind '" + spec.kind + "'");
}

std::shared_ptr<const Dataset> build_dataset(const RunConfig& cfg, const ProcessSchema& schema) {
    if (!cfg.dataset_csv.empty())
        return std::make_shared<Dataset>(load_dataset_csv(schema, cfg.dataset_csv));

    const auto& library = FixtureLibrary::instance();
    const Fixture& fixture = library.get(cfg.truth_fixture);
    if (schema.output_index(fixture.output) < 0)
        throw ConfigError("fixture '" + fixture.name + "' targets output '" + fixture.output +
                          "' which the schema lacks");
    const Expression truth = library.expression_for(fixture, schema);
    return std::make_shared<Dataset>(
        synthesize(schema, fixture.output, truth, {}, cfg.noise_sd, cfg.noise_seed));
}

SplitDataset build_split(const RunConfig& cfg, std::shared_ptr<const Dataset> dataset) {
    return extrapolation_split(std::move(dataset), cfg.split_fraction, cfg.train_size, cfg.split_seed);
}

DiscoverArtifacts run_discover_pipeline(const RunConfig& cfg) {
    cfg.validate();
    namespace fs = std::filesystem;
    fs::create_directories(cfg.output_dir);

    const ProcessSchema schema = cfg.resolve_schema();
    if (schema.output_index(cfg.target_output) < 0)
        throw ConfigError("schema has no output named '" + cfg.target_output + "'");

    auto dataset = build_dataset(cfg, schema);
    SplitDataset split = build_split(cfg, dataset);
    save_dataset_csv(*dataset, cfg.output_dir + "/dataset.csv");
    save_split_json(split, cfg.output_dir + "/split.json");

    const TemplateSet templates = TemplateSet::load(cfg.resolved_templates_dir());
    const Scenario scenario = scenario_from_string(cfg.scenario);
    auto chat = make_chat_backend(cfg.chat);

    DiscoverArtifacts artifacts;
    if (scenario_uses_rag(scenario)) {
        auto embedder = make_embedding_backend(cfg.embeddings);
        VectorIndex index;
        if (!cfg.index_path.empty()) {
            index = VectorIndex::load_jsonl(cfg.index_path);
        } else {
            index = ingest_corpus(cfg.corpus_dir, *embedder, cfg.chunk_size, cfg.chunk_overlap);
            index.save_jsonl(cfg.output_dir + "/index.jsonl");
        }
        artifacts.context = retrieve_for_scenario(templates, index, *embedder, *chat, schema,
                                                  cfg.target_output, cfg.retrieval);
        artifacts.used_rag = true;
        if (scenario_wants_equation(scenario) && !artifacts.context.extracted_equation)
            throw DataError("scenario " + cfg.scenario +
                            " needs an extracted equation, but retrieval found none "
                            "(hint downgraded to ctx)");

        nlohmann::json jr;
        jr["hint"] = artifacts.context.hint;
        jr["answer"] = artifacts.context.answer;
        jr["raw_answers"] = artifacts.context.raw_answers;
        if (artifacts.context.extracted_equation) {
            jr["extracted_equation"] = *artifacts.context.extracted_equation;
            jr["extracted_initials"] = artifacts.context.extracted_initials;
        }
        jr["chunks"] = nlohmann::json::array();
        for (const auto& c : artifacts.context.chunks)
            jr["chunks"].push_back({{"doc_id", c.doc_id},
                                    {"chunk_index", c.chunk_index},
                                    {"score", c.score},
                                    {"text", c.text}});
        std::ofstream out(cfg.output_dir + "/retrieval.json");
        if (!out) throw DataError("cannot write retrieval log");
        out << jr.dump(2) << "\n";
    }

    GeneratorConfig gen_cfg;
    gen_cfg.budgets = cfg.budgets;
    gen_cfg.fit = cfg.fit;
    gen_cfg.seed = cfg.seed;
    gen_cfg.pool_capacity = cfg.pool_capacity;
    gen_cfg.limits = cfg.limits;
    if (!cfg.extraction_rules.empty())
        gen_cfg.substitutions = load_substitution_rules(cfg.extraction_rules);

    artifacts.result = run_discovery(scenario, split, cfg.target_output,
                                     artifacts.used_rag ? &artifacts.context : nullptr, *chat,
                                     templates, gen_cfg);

    RunMetadata meta;
    meta.scenario = cfg.scenario;
    meta.process = schema.process;
    meta.target_output = cfg.target_output;
    meta.backend_id = chat->id();
    meta.placeholder_ranges = schema.placeholder_ranges;
    meta.seed = cfg.seed;
    for (const auto& input : schema.inputs) meta.input_levels.emplace_back(input.name, input.levels);

    artifacts.report_path = cfg.output_dir + "/run_report.json";
    artifacts.metrics_path = cfg.output_dir + "/metrics.csv";
    artifacts.best_model_path = cfg.output_dir + "/best_model.json";
    write_run_report(artifacts.report_path, meta, artifacts.result);
    write_metrics_csv(artifacts.metrics_path, artifacts.result);

    {
        const ModelCandidate& best = artifacts.result.best;
        nlohmann::json j;
        j["target_output"] = cfg.target_output;
        j["expression"] = best.canonical;
        j["coefficients"] = best.coefficients;
        j["fitted"] = best.expression.render_with(best.coefficients);
        j["validation"] = {{"mse", best.validation.mse}, {"r2", best.validation.r2}};
        if (best.test && best.test->ok())
            j["test"] = {{"mse", best.test->mse}, {"r2", best.test->r2}};
        j["placeholder_ranges"] = schema.placeholder_ranges;
        std::ofstream out(artifacts.best_model_path);
        if (!out) throw DataError("cannot write best model: " + artifacts.best_model_path);
        out << j.dump(2) << "\n";
    }
    return artifacts;
}

} // namespace eqdisc
