#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "eqdisc/errors.hpp"

namespace eqdisc {

class CompletionBackend {
public:
    virtual ~CompletionBackend() = default;
    virtual std::string id() const = 0;
    virtual std::string complete(const std::string& prompt, double temperature) = 0;
};

class EmbeddingBackend {
public:
    virtual ~EmbeddingBackend() = default;
    virtual std::string id() const = 0;
    virtual std::vector<std::vector<double>> embed(std::span<const std::string> texts) = 0;
};

/// Lowercased [a-z0-9]+ runs.
std::vector<std::string> tokenize_words(std::string_view text);

/// Deterministic local embedder: token counts hashed (FNV-1a 64) into 256
/// buckets, L2-normalized. Drives every test; no network involved.
class LocalHashEmbedder : public EmbeddingBackend {
public:
    static constexpr std::size_t kDimension = 256;

    std::string id() const override { return "local-hash-256"; }
    std::vector<std::vector<double>> embed(std::span<const std::string> texts) override;

    static std::size_t bucket(std::string_view token);
};

/// Replays candidate blocks from a fixture, separated by a line containing
/// only "---", in order. Throws BackendExhausted when the blocks run out.
class ScriptedBackend : public CompletionBackend {
public:
    explicit ScriptedBackend(std::vector<std::string> blocks, std::string id = "scripted");
    static ScriptedBackend from_file(const std::string& path);

    std::string id() const override { return id_; }
    std::string complete(const std::string& prompt, double temperature) override;

    std::size_t calls() const { return next_; }
    std::size_t remaining() const { return blocks_.size() - next_; }

private:
    std::vector<std::string> blocks_;
    std::string id_;
    std::size_t next_ = 0;
};

std::vector<std::string> parse_script_blocks(const std::string& text);
std::string join_script_blocks(std::span<const std::string> blocks);

struct HttpBackendConfig {
    std::string base_url;    // e.g. http://localhost:8089
    std::string path;        // defaulted per backend kind when empty
    std::string model;
    std::string api_key_env; // name of the env var holding the key; empty = no auth
    int timeout_seconds = 30;
    int retries = 2;
};

/// POST {model, messages, temperature} -> first choice's message content.
class HttpChatBackend : public CompletionBackend {
public:
    explicit HttpChatBackend(HttpBackendConfig cfg);
    std::string id() const override;
    std::string complete(const std::string& prompt, double temperature) override;

private:
    HttpBackendConfig cfg_;
};

/// POST {model, input: [texts]} -> {data: [{embedding}]}.
class HttpEmbeddingBackend : public EmbeddingBackend {
public:
    explicit HttpEmbeddingBackend(HttpBackendConfig cfg);
    std::string id() const override;
    std::vector<std::vector<double>> embed(std::span<const std::string> texts) override;

private:
    HttpBackendConfig cfg_;
};

} // namespace eqdisc
