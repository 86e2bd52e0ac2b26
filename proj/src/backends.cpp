#include "eqdisc/backends.hpp"

#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include <httplib.h>
#include <nlohmann/json.hpp>

namespace eqdisc {

std::vector<std::string> tokenize_words(std::string_view text) {
    std::vector<std::string> tokens;
    std::string current;
    for (char c : text) {
        const unsigned char uc = static_cast<unsigned char>(c);
        if (std::isalnum(uc)) {
            current += static_cast<char>(std::tolower(uc));
        } else if (!current.empty()) {
            tokens.push_back(std::move(current));
            current.clear();
        }
    }
    if (!current.empty()) tokens.push_back(std::move(current));
    return tokens;
}

std::size_t LocalHashEmbedder::bucket(std::string_view token) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : token) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return static_cast<std::size_t>(h % kDimension);
}

std::vector<std::vector<double>> LocalHashEmbedder::embed(std::span<const std::string> texts) {
    if (texts.empty()) throw BackendError("embed: no texts given");
    std::vector<std::vector<double>> out;
    out.reserve(texts.size());
    for (const auto& text : texts) {
        std::vector<double> v(kDimension, 0.0);
        for (const auto& tok : tokenize_words(text)) v[bucket(tok)] += 1.0;
        double norm = 0.0;
        for (double x : v) norm += x * x;
        norm = std::sqrt(norm);
        if (norm > 0.0)
            for (double& x : v) x /= norm;
        out.push_back(std::move(v));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Scripted backend

std::vector<std::string> parse_script_blocks(const std::string& text) {
    std::vector<std::string> blocks;
    std::string current;
    std::stringstream ss(text);
    std::string line;
    auto flush = [&] {
        // trim surrounding blank space of the block
        const auto b = current.find_first_not_of(" \t\r\n");
        if (b == std::string::npos) {
            current.clear();
            return;
        }
        const auto e = current.find_last_not_of(" \t\r\n");
        blocks.push_back(current.substr(b, e - b + 1));
        current.clear();
    };
    while (std::getline(ss, line)) {
        std::string stripped = line;
        if (!stripped.empty() && stripped.back() == '\r') stripped.pop_back();
        if (stripped == "---") {
            flush();
        } else {
            current += line;
            current += '\n';
        }
    }
    flush();
    return blocks;
}

std::string join_script_blocks(std::span<const std::string> blocks) {
    std::string out;
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        if (i) out += "\n---\n";
        out += blocks[i];
    }
    out += '\n';
    return out;
}

ScriptedBackend::ScriptedBackend(std::vector<std::string> blocks, std::string id)
    : blocks_(std::move(blocks)), id_(std::move(id)) {}

ScriptedBackend ScriptedBackend::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open scripted backend fixture: " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    // the id stays path-independent so replayed runs produce identical reports
    return ScriptedBackend(parse_script_blocks(buf.str()), "scripted");
}

std::string ScriptedBackend::complete(const std::string&, double) {
    if (next_ >= blocks_.size())
        throw BackendExhausted("scripted backend exhausted after " + std::to_string(next_) + " blocks");
    return blocks_[next_++];
}

// ---------------------------------------------------------------------------
// HTTP backends

namespace {

std::string bearer_token(const std::string& env_name) {
    if (env_name.empty()) return "";
    const char* value = std::getenv(env_name.c_str());
    return value ? value : "";
}

nlohmann::json post_json(const HttpBackendConfig& cfg, const std::string& path,
                         const nlohmann::json& body) {
    httplib::Client client(cfg.base_url);
    client.set_connection_timeout(cfg.timeout_seconds, 0);
    client.set_read_timeout(cfg.timeout_seconds, 0);

    httplib::Headers headers;
    const std::string token = bearer_token(cfg.api_key_env);
    if (!token.empty()) headers.emplace("Authorization", "Bearer " + token);

    std::string last_error;
    const int attempts = cfg.retries + 1;
    for (int attempt = 1; attempt <= attempts; ++attempt) {
        auto res = client.Post(path, headers, body.dump(), "application/json");
        if (!res) {
            last_error = "transport error (" + httplib::to_string(res.error()) + ")";
        } else if (res->status >= 500) {
            last_error = "server status " + std::to_string(res->status);
        } else if (res->status != 200) {
            throw BackendError("backend " + cfg.base_url + path + " returned status " +
                               std::to_string(res->status) + ": " + res->body);
        } else {
            try {
                return nlohmann::json::parse(res->body);
            } catch (const nlohmann::json::exception& e) {
                last_error = std::string("bad JSON response: ") + e.what();
            }
        }
    }
    throw BackendExhausted("backend " + cfg.base_url + path + " failed after " +
                           std::to_string(attempts) + " attempts: " + last_error);
}

} // namespace

HttpChatBackend::HttpChatBackend(HttpBackendConfig cfg) : cfg_(std::move(cfg)) {
    if (cfg_.path.empty()) cfg_.path = "/v1/chat/completions";
    if (cfg_.base_url.empty()) throw ConfigError("chat backend needs a base_url");
}

std::string HttpChatBackend::id() const { return "http-chat:" + cfg_.model; }

std::string HttpChatBackend::complete(const std::string& prompt, double temperature) {
    nlohmann::json body;
    body["model"] = cfg_.model;
    body["temperature"] = temperature;
    body["messages"] = nlohmann::json::array({{{"role", "user"}, {"content", prompt}}});
    const nlohmann::json res = post_json(cfg_, cfg_.path, body);
    try {
        return res.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw BackendError(std::string("chat response missing choices[0].message.content: ") + e.what());
    }
}

HttpEmbeddingBackend::HttpEmbeddingBackend(HttpBackendConfig cfg) : cfg_(std::move(cfg)) {
    if (cfg_.path.empty()) cfg_.path = "/v1/embeddings";
    if (cfg_.base_url.empty()) throw ConfigError("embeddings backend needs a base_url");
}

std::string HttpEmbeddingBackend::id() const { return "http-embed:" + cfg_.model; }

std::vector<std::vector<double>> HttpEmbeddingBackend::embed(std::span<const std::string> texts) {
    if (texts.empty()) throw BackendError("embed: no texts given");
    nlohmann::json body;
    body["model"] = cfg_.model;
    body["input"] = std::vector<std::string>(texts.begin(), texts.end());
    const nlohmann::json res = post_json(cfg_, cfg_.path, body);

    std::vector<std::vector<double>> out;
    try {
        for (const auto& item : res.at("data"))
            out.push_back(item.at("embedding").get<std::vector<double>>());
    } catch (const nlohmann::json::exception& e) {
        throw BackendError(std::string("embeddings response missing data[].embedding: ") + e.what());
    }
    if (out.size() != texts.size())
        throw BackendError("embeddings response count mismatch");
    return out;
}

} // namespace eqdisc
