#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iostream>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <adkit/jsonl.hpp>
#include <adkit/llm_gateway.hpp>
#include <adkit/memory.hpp>
#include <adkit/promptgen.hpp>
#include <adkit/rand.hpp>

namespace adkit::icl {

class IclError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// One in-context learning example: a (Q, A) pair, extended to (Q, R, A)
/// once chain-of-thought annotation has run. n_atomic is present exactly
/// when reasoning is, and always equals atomic_steps(reasoning).
struct Demonstration {
    std::string demo_id;
    std::string question;
    std::optional<std::string> reasoning;
    std::string answer;
    std::optional<int> n_atomic;
    std::optional<std::vector<float>> query_embedding;
};

enum class PoolProvenance { full, simple, hard, random_subset };

inline std::string to_string(PoolProvenance p) {
    switch (p) {
        case PoolProvenance::full: return "full";
        case PoolProvenance::simple: return "simple";
        case PoolProvenance::hard: return "hard";
        case PoolProvenance::random_subset: return "random_subset";
    }
    throw IclError("invalid provenance");
}

inline PoolProvenance provenance_from_string(std::string_view name) {
    if (name == "full") return PoolProvenance::full;
    if (name == "simple") return PoolProvenance::simple;
    if (name == "hard") return PoolProvenance::hard;
    if (name == "random_subset") return PoolProvenance::random_subset;
    throw IclError("unknown provenance '" + std::string(name) + "'");
}

struct DemonstrationPool {
    std::vector<Demonstration> demos;  // insertion order is the tie-break order
    PoolProvenance provenance = PoolProvenance::full;
};

/// Number of atomic reasoning steps: lines that are nonempty once trimmed.
/// Blank lines are formatting, not reasoning, so they never count.
inline int atomic_steps(std::string_view reasoning) {
    int count = 0;
    std::size_t start = 0;
    while (start <= reasoning.size()) {
        std::size_t eol = reasoning.find('\n', start);
        std::string_view line = reasoning.substr(
            start, eol == std::string_view::npos ? std::string_view::npos : eol - start);
        if (line.find_first_not_of(" \t\r") != std::string_view::npos) {
            ++count;
        }
        if (eol == std::string_view::npos) {
            break;
        }
        start = eol + 1;
    }
    return count;
}

/// Source row for pool construction: the text-formed clues of one training
/// clip plus its ground-truth context and answer. Demonstration queries use
/// human-annotated context ADs and no visual-memory recall.
struct TrainingRecord {
    std::string record_id;
    std::vector<std::string> captions;
    std::string dialogue;
    std::vector<memory::ADRecord> context_ads;  // ground-truth context
    std::string answer;                         // ground-truth AD
    std::optional<std::vector<float>> query_embedding;
};

inline std::vector<TrainingRecord> load_training_records(
    const std::filesystem::path& path) {
    std::vector<TrainingRecord> records;
    for (const json& row : read_jsonl(path)) {
        TrainingRecord rec;
        rec.record_id = row.at("record_id").get<std::string>();
        rec.captions = row.at("captions").get<std::vector<std::string>>();
        rec.dialogue = row.value("dialogue", "");
        if (row.contains("context_ads")) {
            for (const json& ad : row.at("context_ads")) {
                memory::ADRecord record;
                record.clip_id = ad.value("clip_id", "");
                record.t_start = ad.at("t_start").get<double>();
                record.t_end = ad.value("t_end", record.t_start);
                record.text = ad.at("text").get<std::string>();
                record.source = memory::AdSource::ground_truth;
                rec.context_ads.push_back(std::move(record));
            }
        }
        rec.answer = row.value("answer", "");
        if (row.contains("query_embedding")) {
            rec.query_embedding = row.at("query_embedding").get<std::vector<float>>();
        }
        records.push_back(std::move(rec));
    }
    return records;
}

/// Builds (Q, A) demonstrations. Q is rendered by the same query builder
/// used for main queries, so demonstrations and live queries share one
/// structure. Records without an answer are skipped with a warning.
inline DemonstrationPool build_pool(const std::vector<TrainingRecord>& records,
                                    std::ostream& warnings = std::cerr) {
    DemonstrationPool pool;
    for (const TrainingRecord& rec : records) {
        if (rec.answer.empty()) {
            warnings << "warning: training record " << rec.record_id
                     << " has no ground-truth answer, skipped\n";
            continue;
        }
        if (rec.captions.empty()) {
            warnings << "warning: training record " << rec.record_id
                     << " has no captions, skipped\n";
            continue;
        }
        prompt::QueryParts parts;
        for (std::size_t i = 0; i < rec.captions.size(); ++i) {
            parts.captions.push_back({i + 1, rec.captions[i], {}});
        }
        for (const memory::ADRecord& ad : rec.context_ads) {
            parts.context_ads.push_back({ad.t_start, ad.text});
        }
        parts.dialogue = rec.dialogue;

        Demonstration demo;
        demo.demo_id = rec.record_id;
        demo.question = prompt::build_query(parts);
        demo.answer = rec.answer;
        demo.query_embedding = rec.query_embedding;
        pool.demos.push_back(std::move(demo));
    }
    return pool;
}

struct AnnotateSummary {
    std::size_t annotated = 0;
    std::size_t already = 0;
    std::size_t failed = 0;
};

/// Fills in the reasoning of every unannotated demonstration through one
/// chat call each, then records the atomic-step count. Failed calls leave
/// the demo unannotated and are tallied; already-annotated demos are
/// untouched, so the pass is idempotent.
inline AnnotateSummary annotate_cot(DemonstrationPool& pool, llm::ChatBackend& backend,
                                    const llm::RetryPolicy& retry = {},
                                    int max_output = 512,
                                    std::ostream& warnings = std::cerr) {
    AnnotateSummary summary;
    for (Demonstration& demo : pool.demos) {
        if (demo.reasoning.has_value()) {
            ++summary.already;
            continue;
        }
        llm::ChatRequest request;
        request.prompt = prompt::build_cot_prompt(demo.question, demo.answer);
        request.temperature = 0.0;
        request.max_output = max_output;
        request.tag = llm::RequestTag::cot_annotation;
        llm::ChatOutcome outcome = llm::complete(backend, request, retry);
        if (!outcome.is_text() || atomic_steps(outcome.payload) == 0) {
            ++summary.failed;
            warnings << "warning: CoT annotation failed for demo " << demo.demo_id
                     << " (" << (outcome.is_text() ? "empty response"
                                                   : to_string(outcome.kind))
                     << ")\n";
            continue;
        }
        demo.reasoning = outcome.payload;
        demo.n_atomic = atomic_steps(outcome.payload);
        ++summary.annotated;
    }
    return summary;
}

enum class ComplexityDirection { shortest, longest };

/// Stable sort by atomic-step count (ascending for shortest, descending for
/// longest; ties keep insertion order) and keep the first
/// ceil(fraction * |pool|) demos. Requires a fully annotated pool.
inline DemonstrationPool partition_by_complexity(const DemonstrationPool& pool,
                                                 double fraction,
                                                 ComplexityDirection direction) {
    if (!(fraction > 0.0) || fraction > 1.0) {
        throw IclError("fraction must be in (0, 1]");
    }
    for (const Demonstration& demo : pool.demos) {
        if (!demo.n_atomic.has_value()) {
            throw IclError("demo " + demo.demo_id +
                           " is not annotated; run CoT annotation first");
        }
    }
    std::vector<std::size_t> order(pool.demos.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        int na = *pool.demos[a].n_atomic;
        int nb = *pool.demos[b].n_atomic;
        return direction == ComplexityDirection::shortest ? na < nb : na > nb;
    });
    std::size_t keep = static_cast<std::size_t>(
        std::ceil(fraction * static_cast<double>(pool.demos.size())));
    keep = std::min(keep, pool.demos.size());

    DemonstrationPool out;
    out.provenance = direction == ComplexityDirection::shortest
                         ? PoolProvenance::simple
                         : PoolProvenance::hard;
    out.demos.reserve(keep);
    for (std::size_t i = 0; i < keep; ++i) {
        out.demos.push_back(pool.demos[order[i]]);
    }
    return out;
}

/// C distinct demos sampled uniformly without replacement, deterministic
/// for a fixed seed (partial Fisher-Yates over the portable engine).
inline std::vector<Demonstration> select_random(const DemonstrationPool& pool,
                                                std::size_t c, std::uint64_t seed) {
    if (c == 0) {
        throw IclError("selection count must be positive");
    }
    if (pool.demos.size() < c) {
        throw IclError("pool of " + std::to_string(pool.demos.size()) +
                       " demos cannot supply " + std::to_string(c));
    }
    std::vector<std::size_t> order(pool.demos.size());
    std::iota(order.begin(), order.end(), 0);
    SeededRng rng(seed);
    std::vector<Demonstration> out;
    out.reserve(c);
    for (std::size_t i = 0; i < c; ++i) {
        std::size_t j = i + rng.below(order.size() - i);
        std::swap(order[i], order[j]);
        out.push_back(pool.demos[order[i]]);
    }
    return out;
}

enum class SimilarityOrder { descending, ascending };

/// Top-c demos by cosine similarity between stored query embeddings and the
/// test query, presented most-similar-first or reversed. Similarity ties
/// keep insertion order.
inline std::vector<Demonstration> select_similar(const DemonstrationPool& pool,
                                                 std::span<const float> query_embedding,
                                                 std::size_t c, SimilarityOrder order) {
    if (c == 0) {
        throw IclError("selection count must be positive");
    }
    if (pool.demos.size() < c) {
        throw IclError("pool of " + std::to_string(pool.demos.size()) +
                       " demos cannot supply " + std::to_string(c));
    }
    std::vector<std::pair<double, std::size_t>> ranked;
    ranked.reserve(pool.demos.size());
    for (std::size_t i = 0; i < pool.demos.size(); ++i) {
        const Demonstration& demo = pool.demos[i];
        if (!demo.query_embedding.has_value()) {
            throw IclError("demo " + demo.demo_id + " has no query embedding");
        }
        ranked.emplace_back(
            memory::cosine_similarity(query_embedding, *demo.query_embedding), i);
    }
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    std::vector<Demonstration> out;
    out.reserve(c);
    for (std::size_t i = 0; i < c; ++i) {
        out.push_back(pool.demos[ranked[i].second]);
    }
    if (order == SimilarityOrder::ascending) {
        std::reverse(out.begin(), out.end());
    }
    return out;
}

/// Complexity-based selection: random sampling restricted to the simple
/// subset (the fraction of the pool with the fewest atomic steps).
inline std::vector<Demonstration> select_complexity(const DemonstrationPool& pool,
                                                    std::size_t c, double fraction,
                                                    std::uint64_t seed) {
    return select_random(partition_by_complexity(pool, fraction,
                                                 ComplexityDirection::shortest),
                         c, seed);
}

// Pool file: one JSON header line carrying provenance, then one
// demonstration per line.
inline void save_pool(const DemonstrationPool& pool,
                      const std::filesystem::path& path) {
    std::vector<json> rows;
    rows.reserve(pool.demos.size() + 1);
    rows.push_back(json{{"format", "adkit_demo_pool"},
                        {"version", 1},
                        {"provenance", to_string(pool.provenance)}});
    for (const Demonstration& demo : pool.demos) {
        json row{{"demo_id", demo.demo_id},
                 {"question", demo.question},
                 {"answer", demo.answer}};
        if (demo.reasoning.has_value()) {
            row["reasoning"] = *demo.reasoning;
            row["n_atomic"] = *demo.n_atomic;
        }
        if (demo.query_embedding.has_value()) {
            row["query_embedding"] = *demo.query_embedding;
        }
        rows.push_back(std::move(row));
    }
    write_jsonl(path, rows);
}

inline DemonstrationPool load_pool(const std::filesystem::path& path) {
    std::vector<json> rows = read_jsonl(path);
    if (rows.empty() || !rows.front().contains("format") ||
        rows.front().at("format") != "adkit_demo_pool") {
        throw IclError(path.string() + " is not a demonstration pool file");
    }
    DemonstrationPool pool;
    pool.provenance =
        provenance_from_string(rows.front().value("provenance", "full"));
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const json& row = rows[i];
        Demonstration demo;
        demo.demo_id = row.at("demo_id").get<std::string>();
        demo.question = row.at("question").get<std::string>();
        demo.answer = row.at("answer").get<std::string>();
        if (row.contains("reasoning")) {
            demo.reasoning = row.at("reasoning").get<std::string>();
            demo.n_atomic = row.contains("n_atomic")
                                ? row.at("n_atomic").get<int>()
                                : atomic_steps(*demo.reasoning);
            if (*demo.n_atomic != atomic_steps(*demo.reasoning)) {
                throw IclError("demo " + demo.demo_id +
                               " has an n_atomic inconsistent with its reasoning");
            }
        }
        if (row.contains("query_embedding")) {
            demo.query_embedding =
                row.at("query_embedding").get<std::vector<float>>();
        }
        pool.demos.push_back(std::move(demo));
    }
    return pool;
}

}  // namespace adkit::icl
