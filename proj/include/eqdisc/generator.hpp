#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "eqdisc/backends.hpp"
#include "eqdisc/dataset.hpp"
#include "eqdisc/expr.hpp"
#include "eqdisc/fit.hpp"
#include "eqdisc/knowledge.hpp"

namespace eqdisc {

enum class Scenario {
    ctx_initial,
    ctx_refined,
    eqctx_initial,
    eqctx_refined,
    norag_initial,
    norag_refined,
};

Scenario scenario_from_string(const std::string& name);
std::string to_string(Scenario scenario);
bool scenario_uses_rag(Scenario s);       // ctx_*/eqctx_* condition on retrieved context
bool scenario_wants_equation(Scenario s); // eqctx_* require an extracted equation
bool scenario_refines(Scenario s);        // *_refined run the refinement loop

struct Provenance {
    std::string scenario;
    int iteration = 0;
    std::string backend_id;
    std::string raw_text;
    double temperature = 0.0;
    std::size_t generation_index = 0;
    bool underdetermined = false;
};

struct ModelCandidate {
    Expression expression;
    std::string canonical; // cached render with coefficient slots
    std::vector<double> coefficients;
    Score validation;
    std::optional<Score> test;
    Provenance provenance;
};

/// Keeps the top `capacity` candidates sorted by validation R^2 descending,
/// MSE ascending, then generation order. One entry per canonical expression;
/// failed fits never enter.
class CandidatePool {
public:
    explicit CandidatePool(std::size_t capacity = 20) : capacity_(capacity) {}

    /// Returns true when the candidate is in the pool afterwards.
    bool insert(ModelCandidate candidate);

    const std::vector<ModelCandidate>& ranked() const { return ranked_; }
    std::size_t capacity() const { return capacity_; }
    bool empty() const { return ranked_.empty(); }
    std::size_t size() const { return ranked_.size(); }

private:
    std::size_t capacity_;
    std::vector<ModelCandidate> ranked_;
};

struct GeneratorBudgets {
    int initial_n = 50;
    int per_iteration_n = 20;
    int max_iterations = 10;
    int attempt_factor = 2; // per-batch attempt cap = factor * n
};

struct HistoryEntry {
    int iteration = 0; // 0 = initial batch
    std::size_t generation_index = 0;
    double temperature = 0.0;
    std::string raw_text;
    bool parsed = false;
    std::string parse_error;
    std::string canonical;
    Score validation;
    bool entered_pool = false;
};

struct RefinementState {
    CandidatePool pool{20};
    int iteration = 0;
    GeneratorBudgets budgets;
    std::uint64_t seed = 0;
    std::string stop_reason; // success | budget_exhausted | backend_exhausted
    std::vector<HistoryEntry> history;
    std::vector<std::pair<int, std::string>> prompts; // (iteration, prompt text)
    std::size_t generation_calls = 0;
    // pool validation-R^2 vector after the initial batch and each iteration
    std::vector<std::vector<double>> pool_r2_by_iteration;
};

/// Uniform draw in [0.3, 0.8].
double sample_temperature(std::mt19937_64& rng);

std::string render_initial_prompt(Scenario scenario, const RetrievedContext* context,
                                  const ProcessSchema& schema, const std::string& output_name,
                                  const TemplateSet& templates);
std::string render_refine_prompt(Scenario scenario, const CandidatePool& pool,
                                 const RetrievedContext* context, const ProcessSchema& schema,
                                 const std::string& output_name, const TemplateSet& templates);

struct DraftBatch {
    std::vector<ModelCandidate> drafts;
    std::vector<HistoryEntry> log; // one entry per backend call, drops included
    std::size_t calls = 0;
    bool backend_exhausted = false;
};

struct GeneratorConfig {
    GeneratorBudgets budgets;
    FitConfig fit;
    std::uint64_t seed = 0;
    std::size_t pool_capacity = 20;
    std::vector<SubstitutionRule> substitutions = default_substitution_rules();
    ExprLimits limits;
};

/// Issues up to attempt_factor*n completions (stopping once n parse), each at
/// a freshly sampled temperature; unparseable outputs are logged and dropped.
DraftBatch generate_batch(const std::string& prompt, int n, CompletionBackend& backend,
                          std::mt19937_64& rng, const ProcessSchema& schema, Scenario scenario,
                          int iteration, std::size_t& generation_counter, int attempt_factor,
                          std::span<const SubstitutionRule> rules = {},
                          const ExprLimits& limits = {});

struct RunResult {
    RefinementState state;
    ModelCandidate best; // test score filled
};

/// Full loop: initial batch, fit on train, score on validation, pool merge,
/// then refinement until the stop rule, the iteration cap, or backend
/// exhaustion. Deterministic for a scripted backend and fixed seed.
RunResult run_discovery(Scenario scenario, const SplitDataset& split, const std::string& target_output,
                        const RetrievedContext* context, CompletionBackend& backend,
                        const TemplateSet& templates, const GeneratorConfig& cfg);

struct RunMetadata {
    std::string scenario;
    std::string process;
    std::string target_output;
    std::string backend_id;
    bool placeholder_ranges = false;
    std::uint64_t seed = 0;
    // the grid levels each input actually used, stamped into the report
    std::vector<std::pair<std::string, std::vector<double>>> input_levels;
};

std::string run_report_text(const RunMetadata& meta, const RunResult& result);
void write_run_report(const std::string& path, const RunMetadata& meta, const RunResult& result);
void write_metrics_csv(const std::string& path, const RunResult& result);

} // namespace eqdisc
