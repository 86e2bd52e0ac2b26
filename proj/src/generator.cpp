#include "eqdisc/generator.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>

#include <nlohmann/json.hpp>

#include "eqdisc/errors.hpp"

namespace eqdisc {

Scenario scenario_from_string(const std::string& name) {
    if (name == "ctx_initial") return Scenario::ctx_initial;
    if (name == "ctx_refined") return Scenario::ctx_refined;
    if (name == "eqctx_initial") return Scenario::eqctx_initial;
    if (name == "eqctx_refined") return Scenario::eqctx_refined;
    if (name == "norag_initial") return Scenario::norag_initial;
    if (name == "norag_refined") return Scenario::norag_refined;
    throw ConfigError("unknown scenario '" + name + "'");
}

std::string to_string(Scenario scenario) {
    switch (scenario) {
    case Scenario::ctx_initial: return "ctx_initial";
    case Scenario::ctx_refined: return "ctx_refined";
    case Scenario::eqctx_initial: return "eqctx_initial";
    case Scenario::eqctx_refined: return "eqctx_refined";
    case Scenario::norag_initial: return "norag_initial";
    case Scenario::norag_refined: return "norag_refined";
    }
    return "?";
}

bool scenario_uses_rag(Scenario s) {
    return s != Scenario::norag_initial && s != Scenario::norag_refined;
}

bool scenario_wants_equation(Scenario s) {
    return s == Scenario::eqctx_initial || s == Scenario::eqctx_refined;
}

bool scenario_refines(Scenario s) {
    return s == Scenario::ctx_refined || s == Scenario::eqctx_refined || s == Scenario::norag_refined;
}

// ---------------------------------------------------------------------------
// Candidate pool

namespace {

bool candidate_ranks_before(const ModelCandidate& a, const ModelCandidate& b) {
    if (a.validation.r2 != b.validation.r2) return a.validation.r2 > b.validation.r2;
    if (a.validation.mse != b.validation.mse) return a.validation.mse < b.validation.mse;
    return a.provenance.generation_index < b.provenance.generation_index;
}

} // namespace

bool CandidatePool::insert(ModelCandidate candidate) {
    if (!candidate.validation.ok()) return false;
    if (candidate.canonical.empty()) candidate.canonical = candidate.expression.render();

    for (std::size_t i = 0; i < ranked_.size(); ++i) {
        if (ranked_[i].canonical != candidate.canonical) continue;
        if (candidate_ranks_before(candidate, ranked_[i])) {
            ranked_.erase(ranked_.begin() + static_cast<std::ptrdiff_t>(i));
            break; // better duplicate replaces the old entry
        }
        return false;
    }

    auto at = std::upper_bound(ranked_.begin(), ranked_.end(), candidate, candidate_ranks_before);
    const bool inserted = ranked_.size() < capacity_ || at != ranked_.end();
    ranked_.insert(at, std::move(candidate));
    if (ranked_.size() > capacity_) ranked_.pop_back();
    return inserted;
}

// ---------------------------------------------------------------------------
// Prompt rendering

double sample_temperature(std::mt19937_64& rng) {
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    return 0.3 + 0.5 * u;
}

namespace {

std::string shortest(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    (void)ec;
    return std::string(buf, ptr);
}

std::string input_list(const ProcessSchema& schema) {
    std::string out;
    for (std::size_t i = 0; i < schema.inputs.size(); ++i) {
        if (i) out += ", ";
        out += schema.inputs[i].name;
        if (!schema.inputs[i].unit.empty()) out += " (" + schema.inputs[i].unit + ")";
    }
    return out;
}

std::string pool_summary(const CandidatePool& pool, const std::string& output_name) {
    std::string out;
    int rank = 1;
    for (const auto& cand : pool.ranked()) {
        out += std::to_string(rank++);
        out += ". ";
        out += output_name;
        out += " = ";
        out += cand.expression.render_with(cand.coefficients);
        out += "\n   validation R2 = " + shortest(cand.validation.r2);
        out += ", validation MSE = " + shortest(cand.validation.mse);
        out += "\n";
    }
    return out;
}

} // namespace

std::string render_initial_prompt(Scenario scenario, const RetrievedContext* context,
                                  const ProcessSchema& schema, const std::string& output_name,
                                  const TemplateSet& templates) {
    if (scenario_uses_rag(scenario)) {
        if (!context) throw ConfigError("scenario " + to_string(scenario) + " requires retrieved context");
        std::string equation_section;
        if (scenario_wants_equation(scenario)) {
            if (!context->extracted_equation)
                throw ConfigError("scenario " + to_string(scenario) +
                                  " requires a context with an extracted equation");
            equation_section = "An equation extracted from the retrieved information:\n\n" +
                               output_name + " = " + *context->extracted_equation + "\n";
        }
        return render_template(templates.prompt_form_1,
                               {{"response", context->answer},
                                {"equation_section", equation_section},
                                {"input_variables", input_list(schema)},
                                {"output_variable", output_name}});
    }
    return render_template(templates.prompt_form_s1, {{"input_variables", input_list(schema)},
                                                      {"output_variable", output_name}});
}

std::string render_refine_prompt(Scenario scenario, const CandidatePool& pool,
                                 const RetrievedContext* context, const ProcessSchema& schema,
                                 const std::string& output_name, const TemplateSet& templates) {
    if (pool.empty()) throw DataError("refinement prompt needs a non-empty pool");
    const std::string summary = pool_summary(pool, output_name);
    if (scenario_uses_rag(scenario)) {
        if (!context) throw ConfigError("scenario " + to_string(scenario) + " requires retrieved context");
        return render_template(templates.prompt_form_2,
                               {{"response", context->answer},
                                {"summary", summary},
                                {"input_variables", input_list(schema)},
                                {"output_variable", output_name}});
    }
    return render_template(templates.prompt_form_s2, {{"summary", summary},
                                                      {"input_variables", input_list(schema)},
                                                      {"output_variable", output_name}});
}

// ---------------------------------------------------------------------------
// Batch generation

DraftBatch generate_batch(const std::string& prompt, int n, CompletionBackend& backend,
                          std::mt19937_64& rng, const ProcessSchema& schema, Scenario scenario,
                          int iteration, std::size_t& generation_counter, int attempt_factor,
                          std::span<const SubstitutionRule> rules, const ExprLimits& limits) {
    if (n < 1) throw ConfigError("generate_batch needs n >= 1");
    DraftBatch batch;
    const auto default_rules = default_substitution_rules();
    if (rules.empty()) rules = default_rules;
    const int attempt_cap = std::max(n, attempt_factor * n);

    while (static_cast<int>(batch.drafts.size()) < n && static_cast<int>(batch.calls) < attempt_cap) {
        const double temperature = sample_temperature(rng);
        std::string raw;
        try {
            raw = backend.complete(prompt, temperature);
        } catch (const BackendError&) {
            batch.backend_exhausted = true;
            break;
        }
        ++batch.calls;

        HistoryEntry entry;
        entry.iteration = iteration;
        entry.generation_index = generation_counter++;
        entry.temperature = temperature;
        entry.raw_text = raw;
        try {
            const std::string text = extract_candidate(raw, rules);
            Expression expr = parse_expression(text, schema, limits);
            entry.parsed = true;
            entry.canonical = expr.render();

            ModelCandidate draft;
            draft.expression = std::move(expr);
            draft.canonical = entry.canonical;
            draft.provenance.scenario = to_string(scenario);
            draft.provenance.iteration = iteration;
            draft.provenance.backend_id = backend.id();
            draft.provenance.raw_text = raw;
            draft.provenance.temperature = temperature;
            draft.provenance.generation_index = entry.generation_index;
            batch.drafts.push_back(std::move(draft));
        } catch (const Error& e) {
            entry.parsed = false;
            entry.parse_error = e.what();
        }
        batch.log.push_back(std::move(entry));
    }
    return batch;
}

// ---------------------------------------------------------------------------
// The refinement loop

namespace {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

struct FitContext {
    const SplitDataset* split;
    std::size_t target;
    const GeneratorConfig* cfg;
    std::vector<double> validation_targets;
};

void fit_and_score(ModelCandidate& cand, const FitContext& ctx, std::span<const double> init) {
    FitConfig fit_cfg = ctx.cfg->fit;
    fit_cfg.seed = mix_seed(ctx.cfg->seed, cand.provenance.generation_index);
    const DataView train = ctx.split->train_view(ctx.target);
    const FitResult fitted = fit_candidate(cand.expression, train, fit_cfg, init);
    cand.coefficients = fitted.coefficients;
    cand.provenance.underdetermined = fitted.underdetermined;
    cand.validation = fitted.train.ok()
                          ? score(cand.expression, cand.coefficients, ctx.split->validation_view(ctx.target))
                          : Score::failed();
}

void absorb_batch(DraftBatch& batch, const FitContext& ctx, RefinementState& state) {
    for (std::size_t i = 0; i < batch.drafts.size(); ++i) {
        ModelCandidate& draft = batch.drafts[i];
        fit_and_score(draft, ctx, {});
        for (auto& entry : batch.log) {
            if (entry.generation_index != draft.provenance.generation_index) continue;
            entry.validation = draft.validation;
            entry.entered_pool = state.pool.insert(draft);
            break;
        }
    }
    state.generation_calls += batch.calls;
    for (auto& entry : batch.log) state.history.push_back(std::move(entry));

    std::vector<double> pool_r2;
    pool_r2.reserve(state.pool.size());
    for (const auto& cand : state.pool.ranked()) pool_r2.push_back(cand.validation.r2);
    state.pool_r2_by_iteration.push_back(std::move(pool_r2));
}

} // namespace

RunResult run_discovery(Scenario scenario, const SplitDataset& split, const std::string& target_output,
                        const RetrievedContext* context, CompletionBackend& backend,
                        const TemplateSet& templates, const GeneratorConfig& cfg) {
    const Dataset& ds = *split.dataset;
    const int target_idx = ds.target_index(target_output);
    if (target_idx < 0) throw ConfigError("dataset has no target '" + target_output + "'");
    if (split.train.empty() || split.validation.empty() || split.test.empty())
        throw DataError("discovery needs non-empty train/validation/test subsets");
    if (!scenario_uses_rag(scenario) && context)
        throw ConfigError("scenario " + to_string(scenario) + " takes no retrieved context");

    RunResult result;
    RefinementState& state = result.state;
    state.budgets = cfg.budgets;
    state.seed = cfg.seed;
    state.pool = CandidatePool(cfg.pool_capacity);

    FitContext fit_ctx{&split, static_cast<std::size_t>(target_idx), &cfg, {}};
    const DataView validation = split.validation_view(fit_ctx.target);
    fit_ctx.validation_targets.resize(validation.size());
    for (std::size_t i = 0; i < validation.size(); ++i)
        fit_ctx.validation_targets[i] = validation.target_value(i);

    std::mt19937_64 rng(cfg.seed);
    std::size_t generation_counter = 0;

    const std::string initial_prompt =
        render_initial_prompt(scenario, context, ds.schema, target_output, templates);
    state.prompts.emplace_back(0, initial_prompt);

    // The lifted literature equation rides along as candidate #1 of the
    // initial batch; it costs no backend call.
    if (scenario_wants_equation(scenario)) {
        ModelCandidate seeded;
        seeded.expression = parse_expression(*context->extracted_equation, ds.schema);
        seeded.canonical = seeded.expression.render();
        seeded.provenance.scenario = to_string(scenario);
        seeded.provenance.iteration = 0;
        seeded.provenance.backend_id = "retrieved-equation";
        seeded.provenance.raw_text = *context->extracted_equation;
        seeded.provenance.generation_index = generation_counter++;
        fit_and_score(seeded, fit_ctx, context->extracted_initials);

        HistoryEntry entry;
        entry.iteration = 0;
        entry.generation_index = seeded.provenance.generation_index;
        entry.raw_text = seeded.provenance.raw_text;
        entry.parsed = true;
        entry.canonical = seeded.canonical;
        entry.validation = seeded.validation;
        entry.entered_pool = state.pool.insert(seeded);
        state.history.push_back(std::move(entry));
    }

    DraftBatch initial = generate_batch(initial_prompt, cfg.budgets.initial_n, backend, rng, ds.schema,
                                        scenario, 0, generation_counter, cfg.budgets.attempt_factor,
                                        cfg.substitutions, cfg.limits);
    const bool initial_had_drafts = !initial.drafts.empty() || !state.pool.empty();
    bool exhausted = initial.backend_exhausted;
    absorb_batch(initial, fit_ctx, state);

    if (!initial_had_drafts)
        throw DataError("no parseable candidates in the initial batch (" +
                        std::to_string(initial.calls) + " completions tried)");
    if (state.pool.empty())
        throw DataError("no candidate in the initial batch produced a finite validation score");

    auto succeeded = [&] {
        return success_criterion(state.pool.ranked().front().validation, fit_ctx.validation_targets);
    };

    bool success = succeeded();
    while (!success && !exhausted && scenario_refines(scenario) &&
           state.iteration < cfg.budgets.max_iterations) {
        state.iteration += 1;
        const std::string prompt =
            render_refine_prompt(scenario, state.pool, context, ds.schema, target_output, templates);
        state.prompts.emplace_back(state.iteration, prompt);
        DraftBatch batch =
            generate_batch(prompt, cfg.budgets.per_iteration_n, backend, rng, ds.schema, scenario,
                           state.iteration, generation_counter, cfg.budgets.attempt_factor,
                           cfg.substitutions, cfg.limits);
        exhausted = batch.backend_exhausted;
        absorb_batch(batch, fit_ctx, state);
        success = succeeded();
    }

    state.stop_reason = success ? "success" : (exhausted ? "backend_exhausted" : "budget_exhausted");

    result.best = state.pool.ranked().front();
    result.best.test = score(result.best.expression, result.best.coefficients,
                             split.test_view(fit_ctx.target));
    return result;
}

// ---------------------------------------------------------------------------
// Run artifacts

namespace {

nlohmann::json score_json(const Score& s) {
    nlohmann::json j;
    if (s.ok()) {
        j["mse"] = s.mse;
        j["r2"] = s.r2;
    } else {
        j["failed"] = true;
    }
    return j;
}

nlohmann::json candidate_json(const ModelCandidate& cand) {
    nlohmann::json j;
    j["expression"] = cand.canonical;
    j["fitted"] = cand.expression.render_with(cand.coefficients);
    j["coefficients"] = cand.coefficients;
    j["validation"] = score_json(cand.validation);
    if (cand.test) j["test"] = score_json(*cand.test);
    j["provenance"] = {
        {"scenario", cand.provenance.scenario},
        {"iteration", cand.provenance.iteration},
        {"backend_id", cand.provenance.backend_id},
        {"raw_text", cand.provenance.raw_text},
        {"temperature", cand.provenance.temperature},
        {"generation_index", cand.provenance.generation_index},
        {"underdetermined", cand.provenance.underdetermined},
    };
    return j;
}

} // namespace

std::string run_report_text(const RunMetadata& meta, const RunResult& result) {
    nlohmann::json j;
    j["version"] = 1;
    j["scenario"] = meta.scenario;
    j["process"] = meta.process;
    j["target_output"] = meta.target_output;
    j["backend_id"] = meta.backend_id;
    j["placeholder_ranges"] = meta.placeholder_ranges;
    j["seed"] = meta.seed;
    j["input_levels"] = nlohmann::json::object();
    for (const auto& [name, levels] : meta.input_levels) j["input_levels"][name] = levels;

    const RefinementState& state = result.state;
    j["state"] = {
        {"iterations", state.iteration},
        {"stop_reason", state.stop_reason},
        {"generation_calls", state.generation_calls},
        {"pool_r2_by_iteration", state.pool_r2_by_iteration},
        {"budgets",
         {{"initial_n", state.budgets.initial_n},
          {"per_iteration_n", state.budgets.per_iteration_n},
          {"max_iterations", state.budgets.max_iterations},
          {"attempt_factor", state.budgets.attempt_factor}}},
    };

    j["pool"] = nlohmann::json::array();
    for (const auto& cand : state.pool.ranked()) j["pool"].push_back(candidate_json(cand));
    j["best"] = candidate_json(result.best);

    j["prompts"] = nlohmann::json::array();
    for (const auto& [iteration, text] : state.prompts)
        j["prompts"].push_back({{"iteration", iteration}, {"text", text}});

    j["history"] = nlohmann::json::array();
    for (const auto& entry : state.history) {
        nlohmann::json h;
        h["iteration"] = entry.iteration;
        h["generation_index"] = entry.generation_index;
        h["temperature"] = entry.temperature;
        h["raw_text"] = entry.raw_text;
        h["parsed"] = entry.parsed;
        if (!entry.parsed) h["parse_error"] = entry.parse_error;
        else {
            h["canonical"] = entry.canonical;
            h["validation"] = score_json(entry.validation);
            h["entered_pool"] = entry.entered_pool;
        }
        j["history"].push_back(std::move(h));
    }
    return j.dump(2) + "\n";
}

void write_run_report(const std::string& path, const RunMetadata& meta, const RunResult& result) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write run report: " + path);
    out << run_report_text(meta, result);
}

void write_metrics_csv(const std::string& path, const RunResult& result) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write metrics csv: " + path);
    out.precision(17);
    out << "generation_index,iteration,parsed,expression,validation_mse,validation_r2,in_pool\n";
    for (const auto& entry : result.state.history) {
        out << entry.generation_index << ',' << entry.iteration << ',' << (entry.parsed ? 1 : 0) << ',';
        out << '"' << entry.canonical << '"' << ',';
        if (entry.parsed && entry.validation.ok())
            out << entry.validation.mse << ',' << entry.validation.r2;
        else
            out << ",";
        out << ',' << (entry.entered_pool ? 1 : 0) << '\n';
    }
}

} // namespace eqdisc
