#pragma once

#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "eqdisc/backends.hpp"
#include "eqdisc/expr.hpp"
#include "eqdisc/schema.hpp"

namespace eqdisc {

struct DocumentChunk {
    std::string doc_id;
    int chunk_index = 0;
    std::size_t offset = 0; // char offset in the source document, not persisted
    std::string text;
    std::vector<double> embedding;
};

/// Windows of `size` chars stepping by size-overlap, cut preferentially at a
/// paragraph or sentence boundary within a 10% slack band. Consecutive chunks
/// overlap by exactly `overlap` chars, so every source char lands in a chunk.
std::vector<DocumentChunk> chunk_document(const std::string& doc_id, const std::string& text,
                                          std::size_t size = 1024, std::size_t overlap = 128);

struct SearchHit {
    std::size_t chunk = 0; // index into VectorIndex::chunks()
    double cosine = 0.0;
    double score = 0.0; // cosine, or the blended score after reranking
};

/// Exact (brute-force) cosine index; write-once, then read-only.
class VectorIndex {
public:
    VectorIndex() = default;
    explicit VectorIndex(std::vector<DocumentChunk> chunks);

    const std::vector<DocumentChunk>& chunks() const { return chunks_; }
    std::size_t dimension() const { return dimension_; }
    bool empty() const { return chunks_.empty(); }

    /// Exact top-k by cosine; ties broken by (doc_id, chunk_index) ascending.
    std::vector<SearchHit> search(std::span<const double> query, std::size_t k) const;

    void save_jsonl(const std::string& path) const;
    static VectorIndex load_jsonl(const std::string& path);

private:
    std::vector<DocumentChunk> chunks_;
    std::size_t dimension_ = 0;
};

/// score = alpha*cosine + (1-alpha)*|query tokens ∩ chunk tokens|/|query tokens|.
/// Stable: equal scores keep the incoming order.
std::vector<SearchHit> rerank(const std::string& query_text, const VectorIndex& index,
                              std::vector<SearchHit> hits, double alpha);

/// Reads .txt/.md files of a corpus directory in lexicographic filename
/// order, chunks and embeds them.
VectorIndex ingest_corpus(const std::string& corpus_dir, EmbeddingBackend& embedder,
                          std::size_t chunk_size = 1024, std::size_t chunk_overlap = 128);

// ---------------------------------------------------------------------------
// Query forms and retrieval

struct TemplateSet {
    std::string query_form_1;
    std::string query_form_2;
    std::string prompt_form_1;
    std::string prompt_form_2;
    std::string prompt_form_s1;
    std::string prompt_form_s2;

    static TemplateSet load(const std::string& dir);
};

/// Fills {placeholders}; an unresolved placeholder throws ConfigError.
std::string render_template(const std::string& text,
                            const std::unordered_map<std::string, std::string>& values);

struct QueryForm {
    int form_id = 1; // 1 = descriptive relationships, 2 = equation finding
    std::string text;
};

QueryForm render_query_form(int form_id, const TemplateSet& templates, const ProcessSchema& schema,
                            const std::string& output_name);

struct RankedChunk {
    std::string doc_id;
    int chunk_index = 0;
    std::string text;
    double score = 0.0;
};

struct RetrievedContext {
    std::vector<RankedChunk> chunks; // scores non-increasing
    std::string answer;
    std::optional<std::string> extracted_equation; // canonical lifted template
    std::vector<double> extracted_initials;        // per lifted slot
    std::string hint = "ctx";                      // "ctx" or "eqctx"
    // every backend answer in call order, kept so a scripted run can be
    // replayed from its own log
    std::vector<std::string> raw_answers;
};

struct RetrievalConfig {
    std::size_t k = 8;
    double alpha = 0.7;
};

/// Searches with the rendered form, reranks, asks the completion backend to
/// synthesize an answer over the top chunks, and (form 2) tries to pull an
/// `output = f(inputs)` equation out of the answer. Extraction failure
/// downgrades the hint to ctx.
RetrievedContext retrieve_and_synthesize(const QueryForm& form, const VectorIndex& index,
                                         EmbeddingBackend& embedder, CompletionBackend& llm,
                                         const ProcessSchema& schema, const std::string& output_name,
                                         const RetrievalConfig& cfg = {});

/// Form 2 first; falls back to form 1 when no equation comes out.
RetrievedContext retrieve_for_scenario(const TemplateSet& templates, const VectorIndex& index,
                                       EmbeddingBackend& embedder, CompletionBackend& llm,
                                       const ProcessSchema& schema, const std::string& output_name,
                                       const RetrievalConfig& cfg = {});

struct ExtractedEquation {
    std::string lifted; // canonical DSL with coefficient slots
    std::vector<double> initials;
};

/// Scans answer text for `output = rhs` lines whose rhs parses under the
/// schema after alias mapping, then lifts the constants.
std::optional<ExtractedEquation> find_equation_in_answer(const std::string& answer,
                                                         const ProcessSchema& schema,
                                                         const std::string& output_name);

} // namespace eqdisc
