#pragma once

#include <memory>
#include <string>

#include "eqdisc/backends.hpp"
#include "eqdisc/baselines.hpp"
#include "eqdisc/dataset.hpp"
#include "eqdisc/generator.hpp"
#include "eqdisc/knowledge.hpp"
#include "eqdisc/schema.hpp"

namespace eqdisc {

/// Directory holding templates/, schemas/, corpus/ shipped with the project.
std::string default_asset_dir();

struct BackendSpec {
    std::string kind; // embeddings: local|http, chat: scripted|http
    std::string script_path;
    HttpBackendConfig http;
};

struct RunConfig {
    // schema: a JSON file path, or "builtin:<process>" for the bundled ones
    std::string schema = "builtin:flipmm";
    std::string target_output;

    // data: exactly one of dataset_csv / truth_fixture
    std::string dataset_csv;
    std::string truth_fixture;
    double noise_sd = 0.0;
    std::uint64_t noise_seed = 0;

    double split_fraction = 0.75;
    std::size_t train_size = 30;
    std::uint64_t split_seed = 0;

    std::string scenario = "ctx_refined";

    std::string corpus_dir;
    std::string index_path; // prebuilt index; ingested from corpus_dir when empty
    RetrievalConfig retrieval;
    std::size_t chunk_size = 1024;
    std::size_t chunk_overlap = 128;

    BackendSpec embeddings{"local", "", {}};
    BackendSpec chat;

    GeneratorBudgets budgets;
    FitConfig fit;
    std::uint64_t seed = 0;
    std::size_t pool_capacity = 20;
    std::string extraction_rules; // substitution-table JSON; built-ins when empty
    ExprLimits limits;

    std::string templates_dir; // default: <assets>/templates
    std::string output_dir = "out";

    static RunConfig load(const std::string& path);
    void validate() const;

    ProcessSchema resolve_schema() const;
    std::string resolved_templates_dir() const;
};

std::unique_ptr<EmbeddingBackend> make_embedding_backend(const BackendSpec& spec);
std::unique_ptr<CompletionBackend> make_chat_backend(const BackendSpec& spec);

std::shared_ptr<const Dataset> build_dataset(const RunConfig& cfg, const ProcessSchema& schema);
SplitDataset build_split(const RunConfig& cfg, std::shared_ptr<const Dataset> dataset);

struct DiscoverArtifacts {
    RunResult result;
    bool used_rag = false;
    RetrievedContext context;
    std::string report_path;
    std::string metrics_path;
    std::string best_model_path;
};

/// ingest-or-load index, retrieve (unless norag), generate, refine, evaluate,
/// and write the run artifacts into cfg.output_dir.
DiscoverArtifacts run_discover_pipeline(const RunConfig& cfg);

} // namespace eqdisc
