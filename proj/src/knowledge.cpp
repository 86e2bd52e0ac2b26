#include "eqdisc/knowledge.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "eqdisc/errors.hpp"

namespace eqdisc {

namespace {

// Best cut position inside [lo, hi]: end of a paragraph break, else end of a
// sentence, else a line break, else the exact target.
std::size_t pick_boundary(const std::string& text, std::size_t lo, std::size_t hi, std::size_t target) {
    std::size_t best_para = std::string::npos;
    std::size_t best_sentence = std::string::npos;
    std::size_t best_line = std::string::npos;
    for (std::size_t p = lo; p < hi; ++p) {
        if (text[p] == '\n' && p + 1 < text.size() && text[p + 1] == '\n') best_para = p + 2;
        if ((text[p] == '.' || text[p] == '!' || text[p] == '?') && p + 1 < text.size() &&
            (text[p + 1] == ' ' || text[p + 1] == '\n'))
            best_sentence = p + 2;
        if (text[p] == '\n') best_line = p + 1;
    }
    if (best_para != std::string::npos) return best_para;
    if (best_sentence != std::string::npos) return best_sentence;
    if (best_line != std::string::npos) return best_line;
    return target;
}

} // namespace

std::vector<DocumentChunk> chunk_document(const std::string& doc_id, const std::string& text,
                                          std::size_t size, std::size_t overlap) {
    if (text.empty()) throw DataError("cannot chunk empty document '" + doc_id + "'");
    if (!(size > overlap)) throw DataError("chunk size must exceed overlap");

    const std::size_t slack = std::max<std::size_t>(1, size / 10);
    std::vector<DocumentChunk> chunks;
    std::size_t pos = 0;
    int index = 0;
    while (pos < text.size()) {
        std::size_t cut;
        if (text.size() - pos <= size) {
            cut = text.size();
        } else {
            const std::size_t target = pos + size;
            const std::size_t lo = std::max(pos + overlap + 1, target - slack);
            const std::size_t hi = std::min(text.size(), target + slack);
            cut = pick_boundary(text, lo, hi, target);
            cut = std::min(std::max(cut, lo), hi);
        }
        chunks.push_back({doc_id, index++, pos, text.substr(pos, cut - pos), {}});
        if (cut >= text.size()) break;
        pos = cut - overlap;
    }
    return chunks;
}

// ---------------------------------------------------------------------------
// Vector index

VectorIndex::VectorIndex(std::vector<DocumentChunk> chunks) : chunks_(std::move(chunks)) {
    for (const auto& chunk : chunks_) {
        if (chunk.text.empty()) throw DataError("index chunk with empty text: " + chunk.doc_id);
        if (chunk.embedding.empty())
            throw DataError("index chunk without embedding: " + chunk.doc_id);
        if (dimension_ == 0) dimension_ = chunk.embedding.size();
        if (chunk.embedding.size() != dimension_)
            throw DataError("embedding dimension mismatch in chunk of " + chunk.doc_id);
        double norm = 0.0;
        for (double x : chunk.embedding) norm += x * x;
        if (!(norm > 0.0)) throw DataError("zero-norm embedding in chunk of " + chunk.doc_id);
    }
}

namespace {

double cosine(std::span<const double> a, std::span<const double> b) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

} // namespace

std::vector<SearchHit> VectorIndex::search(std::span<const double> query, std::size_t k) const {
    if (chunks_.empty()) throw DataError("search on an empty index");
    if (k < 1) throw DataError("search needs k >= 1");
    if (query.size() != dimension_)
        throw DataError("query dimension " + std::to_string(query.size()) + " does not match index " +
                        std::to_string(dimension_));

    std::vector<SearchHit> hits(chunks_.size());
    for (std::size_t i = 0; i < chunks_.size(); ++i) {
        const double c = cosine(query, chunks_[i].embedding);
        hits[i] = {i, c, c};
    }
    std::sort(hits.begin(), hits.end(), [&](const SearchHit& a, const SearchHit& b) {
        if (a.score != b.score) return a.score > b.score;
        const auto& ca = chunks_[a.chunk];
        const auto& cb = chunks_[b.chunk];
        if (ca.doc_id != cb.doc_id) return ca.doc_id < cb.doc_id;
        return ca.chunk_index < cb.chunk_index;
    });
    if (hits.size() > k) hits.resize(k);
    return hits;
}

void VectorIndex::save_jsonl(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write index: " + path);
    for (const auto& chunk : chunks_) {
        nlohmann::json j;
        j["doc_id"] = chunk.doc_id;
        j["chunk_index"] = chunk.chunk_index;
        j["text"] = chunk.text;
        j["vector"] = chunk.embedding;
        out << j.dump() << '\n';
    }
}

VectorIndex VectorIndex::load_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open index: " + path);
    std::vector<DocumentChunk> chunks;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            const nlohmann::json j = nlohmann::json::parse(line);
            DocumentChunk chunk;
            chunk.doc_id = j.at("doc_id").get<std::string>();
            chunk.chunk_index = j.at("chunk_index").get<int>();
            chunk.text = j.at("text").get<std::string>();
            chunk.embedding = j.at("vector").get<std::vector<double>>();
            chunks.push_back(std::move(chunk));
        } catch (const nlohmann::json::exception& e) {
            throw DataError("index line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return VectorIndex(std::move(chunks));
}

std::vector<SearchHit> rerank(const std::string& query_text, const VectorIndex& index,
                              std::vector<SearchHit> hits, double alpha) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw DataError("rerank alpha must lie in [0, 1]");

    const auto query_tokens = tokenize_words(query_text);
    const std::set<std::string> query_set(query_tokens.begin(), query_tokens.end());
    for (auto& hit : hits) {
        const auto chunk_tokens = tokenize_words(index.chunks()[hit.chunk].text);
        const std::set<std::string> chunk_set(chunk_tokens.begin(), chunk_tokens.end());
        std::size_t shared = 0;
        for (const auto& t : query_set)
            if (chunk_set.count(t)) ++shared;
        const double lexical =
            query_set.empty() ? 0.0 : static_cast<double>(shared) / static_cast<double>(query_set.size());
        hit.score = alpha * hit.cosine + (1.0 - alpha) * lexical;
    }
    std::stable_sort(hits.begin(), hits.end(),
                     [](const SearchHit& a, const SearchHit& b) { return a.score > b.score; });
    return hits;
}

VectorIndex ingest_corpus(const std::string& corpus_dir, EmbeddingBackend& embedder,
                          std::size_t chunk_size, std::size_t chunk_overlap) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(corpus_dir)) throw ConfigError("corpus directory not found: " + corpus_dir);

    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(corpus_dir)) {
        if (!entry.is_regular_file()) continue;
        const std::string ext = entry.path().extension().string();
        if (ext == ".txt" || ext == ".md") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end()); // doc ids in lexicographic filename order
    if (files.empty()) throw ConfigError("corpus directory has no .txt/.md files: " + corpus_dir);

    std::vector<DocumentChunk> chunks;
    for (const auto& file : files) {
        std::ifstream in(file);
        std::stringstream buf;
        buf << in.rdbuf();
        auto doc_chunks = chunk_document(file.filename().string(), buf.str(), chunk_size, chunk_overlap);
        for (auto& c : doc_chunks) chunks.push_back(std::move(c));
    }

    std::vector<std::string> texts;
    texts.reserve(chunks.size());
    for (const auto& c : chunks) texts.push_back(c.text);
    auto vectors = embedder.embed(texts);
    for (std::size_t i = 0; i < chunks.size(); ++i) chunks[i].embedding = std::move(vectors[i]);
    return VectorIndex(std::move(chunks));
}

// ---------------------------------------------------------------------------
// Templates and query forms

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open template: " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

} // namespace

TemplateSet TemplateSet::load(const std::string& dir) {
    TemplateSet t;
    t.query_form_1 = read_file(dir + "/query_form_1.txt");
    t.query_form_2 = read_file(dir + "/query_form_2.txt");
    t.prompt_form_1 = read_file(dir + "/prompt_form_1.txt");
    t.prompt_form_2 = read_file(dir + "/prompt_form_2.txt");
    t.prompt_form_s1 = read_file(dir + "/prompt_form_s1.txt");
    t.prompt_form_s2 = read_file(dir + "/prompt_form_s2.txt");
    return t;
}

std::string render_template(const std::string& text,
                            const std::unordered_map<std::string, std::string>& values) {
    std::string out;
    out.reserve(text.size());
    std::size_t i = 0;
    while (i < text.size()) {
        if (text[i] == '{') {
            const std::size_t close = text.find('}', i);
            if (close != std::string::npos) {
                const std::string key = text.substr(i + 1, close - i - 1);
                auto it = values.find(key);
                if (it == values.end())
                    throw ConfigError("template placeholder '{" + key + "}' has no value");
                out += it->second;
                i = close + 1;
                continue;
            }
        }
        out += text[i];
        ++i;
    }
    return out;
}

namespace {

// Bare names only: unit strings can collide with other variable names, and
// each name must land in the rendered form exactly once.
std::string describe_inputs(const ProcessSchema& schema) {
    std::string out;
    for (std::size_t i = 0; i < schema.inputs.size(); ++i) {
        if (i) out += ", ";
        out += schema.inputs[i].name;
    }
    return out;
}

std::string describe_output(const ProcessSchema& schema, const std::string& output_name) {
    if (schema.output_index(output_name) < 0)
        throw ConfigError("schema has no output named '" + output_name + "'");
    return output_name;
}

} // namespace

QueryForm render_query_form(int form_id, const TemplateSet& templates, const ProcessSchema& schema,
                            const std::string& output_name) {
    const std::string* base = nullptr;
    if (form_id == 1) base = &templates.query_form_1;
    else if (form_id == 2) base = &templates.query_form_2;
    else throw ConfigError("query form id must be 1 or 2");

    QueryForm form;
    form.form_id = form_id;
    form.text = render_template(*base, {{"input_variables", describe_inputs(schema)},
                                        {"output_variable", describe_output(schema, output_name)}});
    return form;
}

// ---------------------------------------------------------------------------
// Answer equation extraction

namespace {

std::string lower(std::string s) {
    for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

bool lhs_names_output(const std::string& lhs, const std::string& output_name) {
    const std::string want = lower(output_name);
    for (const auto& token : tokenize_words(lhs)) {
        if (token == want || token == "output") return true;
        if (token.size() > want.size() && token.compare(0, want.size(), want) == 0) return true;
    }
    return false;
}

} // namespace

std::optional<ExtractedEquation> find_equation_in_answer(const std::string& answer,
                                                         const ProcessSchema& schema,
                                                         const std::string& output_name) {
    const auto rules = default_substitution_rules();
    std::stringstream ss(answer);
    std::string line;
    while (std::getline(ss, line)) {
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos) continue;
        if (eq + 1 < line.size() && line[eq + 1] == '=') continue;
        const std::string lhs = line.substr(0, eq);
        if (!lhs_names_output(lhs, output_name)) continue;
        std::string rhs = line.substr(eq + 1);
        while (!rhs.empty() && (rhs.back() == '.' || rhs.back() == '$' || rhs.back() == ' ' ||
                                rhs.back() == '\r'))
            rhs.pop_back();
        rhs = apply_substitutions(rhs, rules);
        try {
            const Expression parsed = parse_expression(rhs, schema);
            LiftResult lifted = lift_constants(parsed);
            return ExtractedEquation{normalize(lifted.expr).render(), std::move(lifted.initial_values)};
        } catch (const ParseError&) {
            continue; // try the next candidate line
        }
    }
    return std::nullopt;
}

RetrievedContext retrieve_and_synthesize(const QueryForm& form, const VectorIndex& index,
                                         EmbeddingBackend& embedder, CompletionBackend& llm,
                                         const ProcessSchema& schema, const std::string& output_name,
                                         const RetrievalConfig& cfg) {
    if (index.empty()) throw DataError("retrieval requires a built index");

    const std::vector<std::string> query_texts{form.text};
    const auto query_vec = embedder.embed(query_texts).front();
    auto hits = rerank(form.text, index, index.search(query_vec, cfg.k), cfg.alpha);

    std::string prompt = form.text;
    prompt += "\n\nContext passages:\n";
    RetrievedContext ctx;
    for (const auto& hit : hits) {
        const auto& chunk = index.chunks()[hit.chunk];
        prompt += "\n[" + chunk.doc_id + " #" + std::to_string(chunk.chunk_index) + "]\n";
        prompt += chunk.text;
        prompt += '\n';
        ctx.chunks.push_back({chunk.doc_id, chunk.chunk_index, chunk.text, hit.score});
    }

    ctx.answer = llm.complete(prompt, 0.0);
    ctx.raw_answers.push_back(ctx.answer);
    ctx.hint = "ctx";
    if (form.form_id == 2) {
        if (auto eq = find_equation_in_answer(ctx.answer, schema, output_name)) {
            ctx.extracted_equation = eq->lifted;
            ctx.extracted_initials = std::move(eq->initials);
            ctx.hint = "eqctx";
        }
    }
    return ctx;
}

RetrievedContext retrieve_for_scenario(const TemplateSet& templates, const VectorIndex& index,
                                       EmbeddingBackend& embedder, CompletionBackend& llm,
                                       const ProcessSchema& schema, const std::string& output_name,
                                       const RetrievalConfig& cfg) {
    const QueryForm form2 = render_query_form(2, templates, schema, output_name);
    RetrievedContext ctx = retrieve_and_synthesize(form2, index, embedder, llm, schema, output_name, cfg);
    if (ctx.extracted_equation) return ctx;
    // No equation came out of the equation-finding pass; descriptive
    // relationships come from form 1 instead.
    const QueryForm form1 = render_query_form(1, templates, schema, output_name);
    RetrievedContext fallback =
        retrieve_and_synthesize(form1, index, embedder, llm, schema, output_name, cfg);
    fallback.raw_answers.insert(fallback.raw_answers.begin(), ctx.raw_answers.begin(),
                                ctx.raw_answers.end());
    return fallback;
}

} // namespace eqdisc
