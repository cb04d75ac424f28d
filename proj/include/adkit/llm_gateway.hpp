#pragma once

#include <charconv>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>

#include <adkit/jsonl.hpp>
#include <adkit/rand.hpp>

namespace adkit::llm {

class GatewayError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class RequestTag { ad_generation, cot_annotation, ner, segeval };

inline std::string to_string(RequestTag tag) {
    switch (tag) {
        case RequestTag::ad_generation: return "ad_generation";
        case RequestTag::cot_annotation: return "cot_annotation";
        case RequestTag::ner: return "ner";
        case RequestTag::segeval: return "segeval";
    }
    throw GatewayError("invalid RequestTag");
}

inline RequestTag tag_from_string(std::string_view name) {
    if (name == "ad_generation") return RequestTag::ad_generation;
    if (name == "cot_annotation") return RequestTag::cot_annotation;
    if (name == "ner") return RequestTag::ner;
    if (name == "segeval") return RequestTag::segeval;
    throw GatewayError("unknown request tag '" + std::string(name) + "'");
}

struct ChatRequest {
    std::string prompt;
    double temperature = 0.0;
    int max_output = 256;
    RequestTag tag = RequestTag::ad_generation;
};

/// Exactly one of: a text response, a content-filter rejection, or a
/// transport failure. Content filtering is a deterministic policy outcome
/// with its own downstream handling, not an error.
struct ChatOutcome {
    enum class Kind { text, content_filtered, transport_error };

    Kind kind = Kind::transport_error;
    std::string payload;  // response text, or failure detail

    static ChatOutcome from_text(std::string text) {
        return ChatOutcome{Kind::text, std::move(text)};
    }
    static ChatOutcome filtered() { return ChatOutcome{Kind::content_filtered, {}}; }
    static ChatOutcome error(std::string detail) {
        return ChatOutcome{Kind::transport_error, std::move(detail)};
    }

    bool is_text() const { return kind == Kind::text; }
    bool is_filtered() const { return kind == Kind::content_filtered; }
    bool is_error() const { return kind == Kind::transport_error; }
};

inline std::string to_string(ChatOutcome::Kind kind) {
    switch (kind) {
        case ChatOutcome::Kind::text: return "text";
        case ChatOutcome::Kind::content_filtered: return "content_filtered";
        case ChatOutcome::Kind::transport_error: return "transport_error";
    }
    throw GatewayError("invalid outcome kind");
}

inline ChatOutcome::Kind outcome_kind_from_string(std::string_view name) {
    if (name == "text") return ChatOutcome::Kind::text;
    if (name == "content_filtered") return ChatOutcome::Kind::content_filtered;
    if (name == "transport_error") return ChatOutcome::Kind::transport_error;
    throw GatewayError("unknown outcome kind '" + std::string(name) + "'");
}

class ChatBackend {
public:
    virtual ~ChatBackend() = default;
    virtual ChatOutcome complete(const ChatRequest& request) = 0;
};

/// Canonical serialization hashed into the replay key. Newline-separated
/// fields in fixed order; temperature printed with std::to_chars (shortest
/// round-trip form), so the key is stable across platforms and runs.
inline std::string canonical_request(const ChatRequest& request) {
    char buffer[32];
    auto [end, ec] = std::to_chars(buffer, buffer + sizeof(buffer), request.temperature);
    if (ec != std::errc{}) {
        throw GatewayError("cannot format temperature");
    }
    std::string canonical;
    canonical += "tag:";
    canonical += to_string(request.tag);
    canonical += "\ntemperature:";
    canonical.append(buffer, end);
    canonical += "\nmax_output:";
    canonical += std::to_string(request.max_output);
    canonical += "\nprompt:";
    canonical += request.prompt;
    return canonical;
}

/// 16 lowercase hex chars of FNV-1a over the canonical serialization.
inline std::string request_key(const ChatRequest& request) {
    std::uint64_t h = fnv1a64(canonical_request(request));
    static const char* digits = "0123456789abcdef";
    std::string key(16, '0');
    for (int i = 15; i >= 0; --i) {
        key[static_cast<std::size_t>(i)] = digits[h & 0xf];
        h >>= 4;
    }
    return key;
}

struct RetryPolicy {
    int max_attempts = 3;
    std::chrono::milliseconds initial_backoff{100};
    double backoff_multiplier = 2.0;
};

/// Chat-completion boundary. Transport errors are retried with exponential
/// backoff until the policy is exhausted; content_filtered returns
/// immediately since repeating the request cannot change a policy decision.
inline ChatOutcome complete(ChatBackend& backend, const ChatRequest& request,
                            const RetryPolicy& policy = {}) {
    ChatOutcome outcome = ChatOutcome::error("no attempts made");
    std::chrono::milliseconds backoff = policy.initial_backoff;
    for (int attempt = 1; attempt <= policy.max_attempts; ++attempt) {
        outcome = backend.complete(request);
        if (!outcome.is_error()) {
            return outcome;
        }
        if (attempt < policy.max_attempts && backoff.count() > 0) {
            std::this_thread::sleep_for(backoff);
            backoff = std::chrono::milliseconds(static_cast<long long>(
                static_cast<double>(backoff.count()) * policy.backoff_multiplier));
        }
    }
    return ChatOutcome::error("retries exhausted after " +
                              std::to_string(policy.max_attempts) +
                              " attempts: " + outcome.payload);
}

/// Hash-keyed store of recorded outcomes. Keys survive reordering of
/// parallel calls, unlike a sequence-numbered transcript.
class ReplayStore {
public:
    ReplayStore() = default;

    static ReplayStore load(const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in) {
            throw GatewayError("cannot open replay store " + path.string());
        }
        ReplayStore store;
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (line.find_first_not_of(" \t\r") == std::string::npos) {
                continue;
            }
            json row = json::parse(line, nullptr, false);
            if (row.is_discarded()) {
                throw GatewayError(path.string() + ":" + std::to_string(lineno) +
                                   ": malformed replay entry");
            }
            try {
                Entry entry;
                entry.tag = tag_from_string(row.at("tag").get<std::string>());
                entry.prompt = row.at("prompt").get<std::string>();
                entry.outcome.kind =
                    outcome_kind_from_string(row.at("outcome").at("kind").get<std::string>());
                entry.outcome.payload = row.at("outcome").value("payload", "");
                store.entries_[row.at("key").get<std::string>()] = std::move(entry);
            } catch (const json::exception& e) {
                throw GatewayError(path.string() + ":" + std::to_string(lineno) +
                                   ": invalid replay entry: " + e.what());
            }
        }
        return store;
    }

    void put(const ChatRequest& request, const ChatOutcome& outcome) {
        entries_[request_key(request)] = Entry{request.tag, request.prompt, outcome};
    }

    std::optional<ChatOutcome> find(const std::string& key) const {
        auto it = entries_.find(key);
        if (it == entries_.end()) {
            return std::nullopt;
        }
        return it->second.outcome;
    }

    void save(const std::filesystem::path& path) const {
        std::vector<json> rows;
        rows.reserve(entries_.size());
        for (const auto& [key, entry] : entries_) {
            rows.push_back(json{{"key", key},
                                {"tag", to_string(entry.tag)},
                                {"prompt", entry.prompt},
                                {"outcome",
                                 json{{"kind", to_string(entry.outcome.kind)},
                                      {"payload", entry.outcome.payload}}}});
        }
        write_jsonl(path, rows);
    }

    std::size_t size() const { return entries_.size(); }

    /// Drops entries whose prompt contains the marker. Test helper for
    /// simulating stores with missing responses.
    std::size_t erase_prompts_containing(std::string_view marker) {
        std::size_t erased = 0;
        for (auto it = entries_.begin(); it != entries_.end();) {
            if (it->second.prompt.find(marker) != std::string::npos) {
                it = entries_.erase(it);
                ++erased;
            } else {
                ++it;
            }
        }
        return erased;
    }

private:
    struct Entry {
        RequestTag tag = RequestTag::ad_generation;
        std::string prompt;
        ChatOutcome outcome;
    };

    std::map<std::string, Entry> entries_;  // ordered for deterministic save
};

/// Strict replay: a request whose key is absent from the store becomes a
/// transport_error naming the hash, so a drifted prompt fails loudly
/// instead of silently hitting a live service.
class ReplayBackend : public ChatBackend {
public:
    explicit ReplayBackend(ReplayStore store) : store_(std::move(store)) {}

    ChatOutcome complete(const ChatRequest& request) override {
        std::string key = request_key(request);
        if (auto outcome = store_.find(key)) {
            return *outcome;
        }
        return ChatOutcome::error("replay miss for request " + key + " (tag " +
                                  to_string(request.tag) + ")");
    }

    const ReplayStore& store() const { return store_; }

private:
    ReplayStore store_;
};

/// Pass-through wrapper that records every (request, outcome) pair into a
/// store for later replay.
class RecordingBackend : public ChatBackend {
public:
    RecordingBackend(ChatBackend& inner, ReplayStore& store)
        : inner_(inner), store_(store) {}

    ChatOutcome complete(const ChatRequest& request) override {
        ChatOutcome outcome = inner_.complete(request);
        store_.put(request, outcome);
        return outcome;
    }

private:
    ChatBackend& inner_;
    ReplayStore& store_;
};

}  // namespace adkit::llm
