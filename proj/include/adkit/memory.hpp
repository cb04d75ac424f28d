#pragma once

#include <cmath>
#include <deque>
#include <iostream>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include <adkit/jsonl.hpp>
#include <adkit/perception.hpp>

namespace adkit::memory {

class MemoryError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class AdSource { llm, fallback, ground_truth };

inline std::string to_string(AdSource source) {
    switch (source) {
        case AdSource::llm: return "llm";
        case AdSource::fallback: return "fallback";
        case AdSource::ground_truth: return "ground_truth";
    }
    throw MemoryError("invalid AdSource");
}

inline AdSource ad_source_from_string(std::string_view name) {
    if (name == "llm") return AdSource::llm;
    if (name == "fallback") return AdSource::fallback;
    if (name == "ground_truth") return AdSource::ground_truth;
    throw MemoryError("unknown AD source '" + std::string(name) + "'");
}

/// One generated or ground-truth audio description with timestamps.
struct ADRecord {
    std::string clip_id;
    double t_start = 0.0;
    double t_end = 0.0;
    std::string text;
    AdSource source = AdSource::llm;
};

inline void to_json(json& j, const ADRecord& ad) {
    j = json{{"clip_id", ad.clip_id},
             {"t_start", ad.t_start},
             {"t_end", ad.t_end},
             {"text", ad.text},
             {"source", to_string(ad.source)}};
}

inline void from_json(const json& j, ADRecord& ad) {
    ad.clip_id = j.at("clip_id").get<std::string>();
    ad.t_start = j.at("t_start").get<double>();
    ad.t_end = j.at("t_end").get<double>();
    ad.text = j.at("text").get<std::string>();
    ad.source = ad_source_from_string(j.at("source").get<std::string>());
}

inline std::vector<ADRecord> load_ad_records(const std::filesystem::path& path) {
    std::vector<ADRecord> records;
    for (const json& row : read_jsonl(path)) {
        records.push_back(row.get<ADRecord>());
    }
    return records;
}

inline void save_ad_records(const std::filesystem::path& path,
                            std::span<const ADRecord> records) {
    std::vector<json> rows;
    rows.reserve(records.size());
    for (const ADRecord& ad : records) {
        rows.push_back(json(ad));
    }
    write_jsonl(path, rows);
}

/// Sliding window of the K most recently generated ADs, oldest first.
/// Pushing evicts from the front once the capacity is exceeded; a push whose
/// t_start precedes the newest item is an ordering error.
class ShortTermQueue {
public:
    explicit ShortTermQueue(std::size_t capacity) : capacity_(capacity) {}

    void push(const ADRecord& ad) {
        if (!items_.empty() && ad.t_start < items_.back().t_start) {
            throw MemoryError("out-of-order AD push: t_start " +
                              std::to_string(ad.t_start) + " precedes queue tail " +
                              std::to_string(items_.back().t_start));
        }
        items_.push_back(ad);
        while (items_.size() > capacity_) {
            items_.pop_front();
        }
    }

    const std::deque<ADRecord>& items() const { return items_; }
    std::size_t capacity() const { return capacity_; }
    std::size_t size() const { return items_.size(); }
    bool empty() const { return items_.empty(); }

private:
    std::size_t capacity_;
    std::deque<ADRecord> items_;
};

/// dot(a,b) / (|a|*|b|), accumulated in double. Zero when either norm is
/// zero, so zero-norm embeddings always fail the positive-similarity filter.
inline double cosine_similarity(std::span<const float> a, std::span<const float> b) {
    if (a.size() != b.size()) {
        throw MemoryError("cosine similarity dimension mismatch: " +
                          std::to_string(a.size()) + " vs " + std::to_string(b.size()));
    }
    double dot = 0.0, norm_a = 0.0, norm_b = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += static_cast<double>(a[i]) * b[i];
        norm_a += static_cast<double>(a[i]) * a[i];
        norm_b += static_cast<double>(b[i]) * b[i];
    }
    if (norm_a == 0.0 || norm_b == 0.0) {
        return 0.0;
    }
    return dot / (std::sqrt(norm_a) * std::sqrt(norm_b));
}

/// Person-name extraction boundary (an LLM-backed implementation lives in
/// promptgen). extract() may throw; register_frames degrades gracefully.
class NameExtractor {
public:
    virtual ~NameExtractor() = default;
    virtual std::vector<std::string> extract(const std::string& text) = 0;
};

struct VisualMemoryEntry {
    std::string frame_id;
    std::vector<float> embedding;
    ADRecord ad;
    std::vector<std::string> person_names;  // cached NER output, possibly empty
};

struct RecallResult {
    ADRecord ad;
    std::vector<std::string> person_names;
    double similarity = 0.0;
};

/// Append-only frame-level bank for character re-identification. Frames are
/// registered with the AD generated for their clip; recall retrieves the
/// best past match for a single-person query frame.
class VisualMemoryBank {
public:
    /// Appends one entry per distinct frame, all linked to ad. Names are
    /// extracted once from ad.text and cached on every entry; an extractor
    /// failure logs a warning and stores empty names, which recall skips.
    /// Re-registering a frame_id from an earlier call is a uniqueness error;
    /// repeats inside one call (oversampled short clips) are collapsed.
    void register_frames(std::span<const perception::FrameObservation> frames,
                         const ADRecord& ad, NameExtractor& ner,
                         std::ostream& warnings = std::cerr) {
        std::vector<std::string> names;
        try {
            names = ner.extract(ad.text);
        } catch (const std::exception& e) {
            warnings << "warning: name extraction failed for clip " << ad.clip_id
                     << " (" << e.what() << "); registering without names\n";
            names.clear();
        }
        register_frames_named(frames, ad, names);
    }

    /// Same as register_frames but with the names already known (character
    /// bank seeds carry their name by construction, no extractor call).
    void register_frames_named(std::span<const perception::FrameObservation> frames,
                               const ADRecord& ad, std::vector<std::string> names) {
        std::unordered_set<std::string> batch;
        for (const perception::FrameObservation& frame : frames) {
            if (!batch.insert(frame.frame_id).second) {
                continue;  // duplicate from oversampling, keep first
            }
            if (frame_ids_.contains(frame.frame_id)) {
                throw MemoryError("frame " + frame.frame_id +
                                  " is already registered in the visual bank");
            }
        }
        batch.clear();
        for (const perception::FrameObservation& frame : frames) {
            if (!batch.insert(frame.frame_id).second) {
                continue;
            }
            VisualMemoryEntry entry;
            entry.frame_id = frame.frame_id;
            entry.embedding = frame.embedding;
            entry.ad = ad;
            entry.person_names = names;
            frame_ids_.insert(entry.frame_id);
            entries_.push_back(std::move(entry));
        }
    }

    /// Register-and-recall retrieval. Gated to query frames where exactly
    /// one person is detected; candidates are entries with recognized names
    /// and strictly positive cosine similarity; the highest similarity wins,
    /// ties going to the most recently registered entry.
    std::optional<RecallResult> recall(const perception::FrameObservation& query) const {
        if (query.person_count != 1) {
            return std::nullopt;
        }
        const VisualMemoryEntry* best = nullptr;
        double best_similarity = 0.0;
        for (const VisualMemoryEntry& entry : entries_) {
            if (entry.person_names.empty()) {
                continue;
            }
            double similarity = cosine_similarity(query.embedding, entry.embedding);
            if (similarity <= 0.0) {
                continue;
            }
            if (best == nullptr || similarity >= best_similarity) {
                best = &entry;
                best_similarity = similarity;
            }
        }
        if (best == nullptr) {
            return std::nullopt;
        }
        return RecallResult{best->ad, best->person_names, best_similarity};
    }

    const std::vector<VisualMemoryEntry>& entries() const { return entries_; }
    std::size_t size() const { return entries_.size(); }

    // Bank snapshot for checkpoint/resume of long movies.
    void save_jsonl(const std::filesystem::path& path) const {
        std::vector<json> rows;
        rows.reserve(entries_.size());
        for (const VisualMemoryEntry& entry : entries_) {
            rows.push_back(entry_to_json(entry));
        }
        write_jsonl(path, rows);
    }

    static VisualMemoryBank load_jsonl(const std::filesystem::path& path) {
        VisualMemoryBank bank;
        for (const json& row : read_jsonl(path)) {
            bank.append_entry(entry_from_json(row));
        }
        return bank;
    }

    static json entry_to_json(const VisualMemoryEntry& entry) {
        return json{{"frame_id", entry.frame_id},
                    {"embedding", entry.embedding},
                    {"ad", entry.ad},
                    {"person_names", entry.person_names}};
    }

    static VisualMemoryEntry entry_from_json(const json& row) {
        VisualMemoryEntry entry;
        entry.frame_id = row.at("frame_id").get<std::string>();
        entry.embedding = row.at("embedding").get<std::vector<float>>();
        entry.ad = row.at("ad").get<ADRecord>();
        entry.person_names = row.at("person_names").get<std::vector<std::string>>();
        return entry;
    }

    void append_entry(VisualMemoryEntry entry) {
        if (!frame_ids_.insert(entry.frame_id).second) {
            throw MemoryError("frame " + entry.frame_id +
                              " is already registered in the visual bank");
        }
        entries_.push_back(std::move(entry));
    }

private:
    std::vector<VisualMemoryEntry> entries_;
    std::unordered_set<std::string> frame_ids_;
};

}  // namespace adkit::memory
