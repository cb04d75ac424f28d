#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iostream>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <adkit/icl.hpp>
#include <adkit/jsonl.hpp>
#include <adkit/llm_gateway.hpp>
#include <adkit/memory.hpp>
#include <adkit/perception.hpp>
#include <adkit/promptgen.hpp>
#include <adkit/rand.hpp>

namespace adkit::narrate {

class NarrationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Transport failure that exhausted its retries; narrate_video converts it
/// into an abort with a resumable checkpoint.
class TransportFailure : public NarrationError {
public:
    using NarrationError::NarrationError;
};

class NarrationAborted : public NarrationError {
public:
    NarrationAborted(const std::string& what, std::filesystem::path checkpoint)
        : NarrationError(what + (checkpoint.empty()
                                     ? std::string(" (no checkpoint configured)")
                                     : " (resume from " + checkpoint.string() + ")")),
          checkpoint_(std::move(checkpoint)) {}

    const std::filesystem::path& checkpoint() const { return checkpoint_; }

private:
    std::filesystem::path checkpoint_;
};

enum class SelectionStrategy { zero, random, similar, complexity };

inline std::string to_string(SelectionStrategy s) {
    switch (s) {
        case SelectionStrategy::zero: return "zero";
        case SelectionStrategy::random: return "random";
        case SelectionStrategy::similar: return "similar";
        case SelectionStrategy::complexity: return "complexity";
    }
    throw NarrationError("invalid strategy");
}

inline SelectionStrategy strategy_from_string(std::string_view name) {
    if (name == "zero") return SelectionStrategy::zero;
    if (name == "random") return SelectionStrategy::random;
    if (name == "similar") return SelectionStrategy::similar;
    if (name == "complexity") return SelectionStrategy::complexity;
    throw NarrationError("unknown strategy '" + std::string(name) + "'");
}

/// Every component of the pipeline is a flag so the build-up from a bare
/// image captioner to the full narrator is a pure configuration matrix:
/// frames_per_clip, use_subtitles, use_hint, queue_capacity, strategy/shots,
/// use_recall, plus the character bank passed at run time.
struct NarratorConfig {
    perception::PerceptionConfig perception{};
    std::size_t queue_capacity = 7;
    bool use_subtitles = true;
    bool use_hint = true;
    bool use_recall = true;
    SelectionStrategy strategy = SelectionStrategy::zero;
    std::size_t shots = 5;
    bool use_cot = false;
    double simple_fraction = 0.10;
    icl::SimilarityOrder similar_order = icl::SimilarityOrder::descending;
    std::uint64_t seed = 0;
    double temperature = 0.0;
    int max_output = 128;
    std::size_t prompt_char_budget = 0;  // 0 = unlimited
    std::size_t checkpoint_every = 25;
    std::string last_resort_caption = "Someone is in the scene.";
    llm::RetryPolicy retry{};
};

inline NarratorConfig config_from_json(const json& doc) {
    NarratorConfig cfg;
    cfg.perception.frames_per_clip =
        doc.value("frames_per_clip", cfg.perception.frames_per_clip);
    cfg.perception.subtitle_window_s =
        doc.value("subtitle_window_s", cfg.perception.subtitle_window_s);
    cfg.perception.embedding_dim =
        doc.value("embedding_dim", cfg.perception.embedding_dim);
    cfg.queue_capacity = doc.value("queue_capacity", cfg.queue_capacity);
    cfg.use_subtitles = doc.value("use_subtitles", cfg.use_subtitles);
    cfg.use_hint = doc.value("use_hint", cfg.use_hint);
    cfg.use_recall = doc.value("use_recall", cfg.use_recall);
    if (doc.contains("strategy")) {
        cfg.strategy = strategy_from_string(doc.at("strategy").get<std::string>());
    }
    cfg.shots = doc.value("shots", cfg.shots);
    cfg.use_cot = doc.value("use_cot", cfg.use_cot);
    cfg.simple_fraction = doc.value("simple_fraction", cfg.simple_fraction);
    if (doc.contains("similar_order")) {
        cfg.similar_order = doc.at("similar_order").get<std::string>() == "ascending"
                                ? icl::SimilarityOrder::ascending
                                : icl::SimilarityOrder::descending;
    }
    cfg.seed = doc.value("seed", cfg.seed);
    cfg.temperature = doc.value("temperature", cfg.temperature);
    cfg.max_output = doc.value("max_output", cfg.max_output);
    cfg.prompt_char_budget = doc.value("prompt_char_budget", cfg.prompt_char_budget);
    cfg.checkpoint_every = doc.value("checkpoint_every", cfg.checkpoint_every);
    cfg.last_resort_caption =
        doc.value("last_resort_caption", cfg.last_resort_caption);
    return cfg;
}

/// Error handler for content-filtered generations: maps the mean-pooled
/// frame embedding of the clip to a caption.
class FallbackCaptioner {
public:
    virtual ~FallbackCaptioner() = default;
    virtual std::optional<std::string> caption(std::span<const float> mean_embedding) = 0;
};

/// Fixture captioner keyed on the mean embedding: nearest stored vector
/// within a distance tolerance wins.
class FixtureFallbackCaptioner : public FallbackCaptioner {
public:
    static FixtureFallbackCaptioner load(const std::filesystem::path& path,
                                         double tolerance = 1e-6) {
        FixtureFallbackCaptioner captioner;
        captioner.tolerance_ = tolerance;
        for (const json& row : read_jsonl(path)) {
            captioner.entries_.push_back(
                {row.at("embedding").get<std::vector<float>>(),
                 row.at("text").get<std::string>()});
        }
        return captioner;
    }

    std::optional<std::string> caption(std::span<const float> mean_embedding) override {
        const Entry* best = nullptr;
        double best_distance = 0.0;
        for (const Entry& entry : entries_) {
            if (entry.embedding.size() != mean_embedding.size()) {
                continue;
            }
            double distance = 0.0;
            for (std::size_t i = 0; i < mean_embedding.size(); ++i) {
                double d = static_cast<double>(mean_embedding[i]) - entry.embedding[i];
                distance += d * d;
            }
            if (best == nullptr || distance < best_distance) {
                best = &entry;
                best_distance = distance;
            }
        }
        if (best == nullptr || std::sqrt(best_distance) > tolerance_) {
            return std::nullopt;
        }
        return best->text;
    }

private:
    struct Entry {
        std::vector<float> embedding;
        std::string text;
    };
    std::vector<Entry> entries_;
    double tolerance_ = 1e-6;
};

inline std::vector<float> mean_embedding(
    std::span<const perception::FrameObservation> frames) {
    if (frames.empty()) {
        throw NarrationError("cannot mean-pool zero frames");
    }
    const std::size_t dim = frames.front().embedding.size();
    std::vector<double> acc(dim, 0.0);
    for (const perception::FrameObservation& frame : frames) {
        if (frame.embedding.size() != dim) {
            throw NarrationError("inconsistent embedding dimensions in clip");
        }
        for (std::size_t i = 0; i < dim; ++i) {
            acc[i] += frame.embedding[i];
        }
    }
    std::vector<float> mean(dim);
    for (std::size_t i = 0; i < dim; ++i) {
        mean[i] = static_cast<float>(acc[i] / static_cast<double>(frames.size()));
    }
    return mean;
}

/// Produces the fallback AD for a clip whose generation was content
/// filtered: mean-pool the frame embeddings, let the captioner describe the
/// result, and fall back to the configured constant caption if even the
/// captioner is unavailable. The record is always marked source=fallback.
inline memory::ADRecord fallback_ad(const perception::VideoClip& clip,
                                    const perception::PerceptionTuple& tuple,
                                    FallbackCaptioner* captioner,
                                    const std::string& last_resort) {
    std::vector<float> mean = mean_embedding(tuple.frames);
    std::optional<std::string> text;
    if (captioner != nullptr) {
        text = captioner->caption(mean);
    }
    memory::ADRecord ad;
    ad.clip_id = clip.clip_id;
    ad.t_start = clip.t_start;
    ad.t_end = clip.t_end;
    ad.text = text.has_value() ? *text : last_resort;
    ad.source = memory::AdSource::fallback;
    return ad;
}

/// Collapses an LLM response into one line of AD text: lines are trimmed,
/// blanks dropped, and the remainder joined with single spaces.
inline std::string collapse_response(std::string_view response) {
    std::string out;
    std::size_t start = 0;
    while (start <= response.size()) {
        std::size_t eol = response.find('\n', start);
        std::string line = prompt::detail::trim(response.substr(
            start, eol == std::string_view::npos ? std::string_view::npos : eol - start));
        if (!line.empty()) {
            if (!out.empty()) {
                out += ' ';
            }
            out += line;
        }
        if (eol == std::string_view::npos) {
            break;
        }
        start = eol + 1;
    }
    return out;
}

/// Portrait-matched introduction frames for one main character.
struct CharacterBankEntry {
    std::string character_name;
    std::vector<std::string> frame_refs;
};

inline std::vector<CharacterBankEntry> load_character_bank(
    const std::filesystem::path& path) {
    json doc = json::parse(read_text_file(path));
    std::vector<CharacterBankEntry> entries;
    for (const json& row : doc.at("characters")) {
        CharacterBankEntry entry;
        entry.character_name = row.at("character_name").get<std::string>();
        entry.frame_refs = row.at("frame_refs").get<std::vector<std::string>>();
        entries.push_back(std::move(entry));
    }
    return entries;
}

struct CharacterSeeds {
    std::vector<perception::VideoClip> clips;  // synthetic, precede clip 0
    std::vector<memory::ADRecord> seed_ads;    // one per clip, the name itself
};

/// Builds one synthetic introduction clip per character, placed just before
/// the first real clip, with a seed AD of "<Name> appears." whose name
/// passes the NER gate by construction. Registering these seeds makes later
/// close-ups recallable before the name is ever spoken.
inline CharacterSeeds prepend_character_bank(
    const perception::MovieManifest& movie,
    std::span<const CharacterBankEntry> entries) {
    CharacterSeeds seeds;
    if (entries.empty()) {
        return seeds;
    }
    const double base = movie.clips.empty() ? 0.0 : movie.clips.front().t_start;
    const double count = static_cast<double>(entries.size());
    for (std::size_t i = 0; i < entries.size(); ++i) {
        const CharacterBankEntry& entry = entries[i];
        if (entry.character_name.empty()) {
            throw NarrationError("character bank entry with empty name");
        }
        if (entry.frame_refs.empty()) {
            throw NarrationError("character bank entry for " + entry.character_name +
                                 " has no frames");
        }
        perception::VideoClip clip;
        clip.clip_id = "charbank:" + entry.character_name;
        clip.movie_id = movie.movie_id;
        clip.t_start = base - (count - static_cast<double>(i));
        clip.t_end = clip.t_start + 1.0;
        clip.frame_refs = entry.frame_refs;
        seeds.clips.push_back(clip);

        memory::ADRecord seed;
        seed.clip_id = clip.clip_id;
        seed.t_start = clip.t_start;
        seed.t_end = clip.t_end;
        seed.text = entry.character_name + " appears.";
        seed.source = memory::AdSource::ground_truth;
        seeds.seed_ads.push_back(std::move(seed));
    }
    return seeds;
}

struct NarrationState {
    memory::ShortTermQueue queue;
    memory::VisualMemoryBank bank;
    std::vector<memory::ADRecord> outputs;
    std::size_t clip_cursor = 0;

    explicit NarrationState(std::size_t queue_capacity) : queue(queue_capacity) {}
};

inline void save_checkpoint(const std::filesystem::path& path,
                            const std::string& movie_id,
                            const NarrationState& state) {
    json doc;
    doc["movie_id"] = movie_id;
    doc["clip_cursor"] = state.clip_cursor;
    doc["queue_capacity"] = state.queue.capacity();
    json queue_items = json::array();
    for (const memory::ADRecord& ad : state.queue.items()) {
        queue_items.push_back(json(ad));
    }
    doc["queue"] = queue_items;
    json bank_rows = json::array();
    for (const memory::VisualMemoryEntry& entry : state.bank.entries()) {
        bank_rows.push_back(memory::VisualMemoryBank::entry_to_json(entry));
    }
    doc["bank"] = bank_rows;
    json outputs = json::array();
    for (const memory::ADRecord& ad : state.outputs) {
        outputs.push_back(json(ad));
    }
    doc["outputs"] = outputs;
    write_text_file(path, doc.dump());
}

inline NarrationState load_checkpoint(const std::filesystem::path& path,
                                      const std::string& movie_id,
                                      std::size_t queue_capacity) {
    json doc = json::parse(read_text_file(path));
    if (doc.at("movie_id").get<std::string>() != movie_id) {
        throw NarrationError("checkpoint " + path.string() + " belongs to movie " +
                             doc.at("movie_id").get<std::string>());
    }
    if (doc.at("queue_capacity").get<std::size_t>() != queue_capacity) {
        throw NarrationError("checkpoint queue capacity does not match the config");
    }
    NarrationState state(queue_capacity);
    for (const json& row : doc.at("queue")) {
        state.queue.push(row.get<memory::ADRecord>());
    }
    for (const json& row : doc.at("bank")) {
        state.bank.append_entry(memory::VisualMemoryBank::entry_from_json(row));
    }
    for (const json& row : doc.at("outputs")) {
        state.outputs.push_back(row.get<memory::ADRecord>());
    }
    state.clip_cursor = doc.at("clip_cursor").get<std::size_t>();
    if (state.outputs.size() != state.clip_cursor) {
        throw NarrationError("corrupt checkpoint: outputs do not match cursor");
    }
    return state;
}

struct NarrationBackends {
    llm::ChatBackend* llm = nullptr;              // required
    perception::ExpertAdapters* experts = nullptr;  // required
    memory::NameExtractor* ner = nullptr;         // required when use_recall
    FallbackCaptioner* fallback = nullptr;        // optional
    const icl::DemonstrationPool* pool = nullptr;  // required for few-shot
    // Observability hook: receives every AD-generation prompt before the
    // chat call. Used by tests to audit prompt structure.
    std::function<void(const std::string& clip_id, const std::string& prompt)>
        prompt_sink;
    std::ostream* warnings = &std::cerr;
};

struct NarrateRunOptions {
    std::vector<CharacterBankEntry> character_bank;
    std::filesystem::path output_path;      // final AD JSONL, written when set
    std::filesystem::path checkpoint_path;  // periodic + abort checkpoints
    std::filesystem::path resume_from;      // restore state before narrating
};

/// The recurrent loop: perceive the clip, recall characters from the visual
/// bank, assemble the few-shot prompt, generate, and update both memories.
class Narrator {
public:
    Narrator(NarratorConfig config, NarrationBackends backends,
             prompt::PromptTemplate tpl = {},
             std::vector<perception::SubtitleLine> subtitles = {})
        : config_(std::move(config)),
          backends_(backends),
          template_(std::move(tpl)),
          subtitles_(std::move(subtitles)) {
        if (backends_.llm == nullptr || backends_.experts == nullptr) {
            throw NarrationError("narrator requires a chat backend and experts");
        }
        if (config_.use_recall && backends_.ner == nullptr) {
            throw NarrationError("recall requires a name extractor");
        }
        if (config_.strategy != SelectionStrategy::zero) {
            if (backends_.pool == nullptr) {
                throw NarrationError("few-shot strategies require a demonstration pool");
            }
            if (config_.shots == 0) {
                throw NarrationError("few-shot strategies require shots > 0");
            }
        }
        if (!config_.use_hint) {
            template_.task_hint.clear();
        }
    }

    const NarratorConfig& config() const { return config_; }

    /// Generates the AD for the next clip and advances the state. The clip
    /// must be the one at clip_cursor; the prompt for clip t therefore only
    /// ever sees state produced by clips before t.
    memory::ADRecord narrate_clip(NarrationState& state,
                                  const perception::VideoClip& clip) {
        perception::PerceptionTuple tuple = perception::perceive(
            clip, *backends_.experts,
            config_.use_subtitles ? subtitles_ : kNoSubtitles, config_.perception);

        prompt::QueryParts parts;
        for (std::size_t i = 0; i < tuple.frames.size(); ++i) {
            prompt::CaptionLine line;
            line.frame_index = i + 1;
            line.caption = tuple.frames[i].caption;
            if (config_.use_recall) {
                if (auto recalled = state.bank.recall(tuple.frames[i])) {
                    line.recalled_names = recalled->person_names;
                }
            }
            parts.captions.push_back(std::move(line));
        }
        for (const memory::ADRecord& ad : state.queue.items()) {
            parts.context_ads.push_back({ad.t_start, ad.text});
        }
        parts.dialogue = tuple.dialogue;

        std::vector<icl::Demonstration> demos = select_demos(tuple, clip.clip_id);
        std::string prompt_text =
            prompt::build_prompt(template_, demos, prompt::build_query(parts),
                                 config_.use_cot, config_.prompt_char_budget);
        if (backends_.prompt_sink) {
            backends_.prompt_sink(clip.clip_id, prompt_text);
        }

        llm::ChatRequest request;
        request.prompt = std::move(prompt_text);
        request.temperature = config_.temperature;
        request.max_output = config_.max_output;
        request.tag = llm::RequestTag::ad_generation;
        llm::ChatOutcome outcome = llm::complete(*backends_.llm, request, config_.retry);

        memory::ADRecord ad;
        if (outcome.is_text() && !collapse_response(outcome.payload).empty()) {
            ad.clip_id = clip.clip_id;
            ad.t_start = clip.t_start;
            ad.t_end = clip.t_end;
            ad.text = collapse_response(outcome.payload);
            ad.source = memory::AdSource::llm;
        } else if (outcome.is_error()) {
            throw TransportFailure("AD generation failed for clip " + clip.clip_id +
                                   ": " + outcome.payload);
        } else {
            // content filtered (or an empty response): error-handler path
            ad = fallback_ad(clip, tuple, backends_.fallback,
                             config_.last_resort_caption);
        }

        state.queue.push(ad);
        if (config_.use_recall) {
            state.bank.register_frames(tuple.frames, ad, *backends_.ner,
                                       *backends_.warnings);
        }
        state.outputs.push_back(ad);
        ++state.clip_cursor;
        return ad;
    }

    /// Folds narrate_clip over the movie. Character-bank seeds are
    /// registered into the visual bank before the first clip; checkpoints
    /// are written periodically and on transport aborts, and resuming from
    /// one reproduces the uninterrupted output exactly (replay backends).
    std::vector<memory::ADRecord> narrate_video(
        const perception::MovieManifest& movie, const NarrateRunOptions& run = {}) {
        NarrationState state(config_.queue_capacity);
        if (!run.resume_from.empty()) {
            state = load_checkpoint(run.resume_from, movie.movie_id,
                                    config_.queue_capacity);
        } else if (!run.character_bank.empty()) {
            seed_character_bank(state, movie, run.character_bank);
        }

        for (std::size_t idx = state.clip_cursor; idx < movie.clips.size(); ++idx) {
            try {
                narrate_clip(state, movie.clips[idx]);
            } catch (const TransportFailure& failure) {
                if (!run.checkpoint_path.empty()) {
                    save_checkpoint(run.checkpoint_path, movie.movie_id, state);
                }
                throw NarrationAborted(failure.what(), run.checkpoint_path);
            }
            if (!run.checkpoint_path.empty() && config_.checkpoint_every > 0 &&
                (idx + 1) % config_.checkpoint_every == 0) {
                save_checkpoint(run.checkpoint_path, movie.movie_id, state);
            }
        }
        if (!run.output_path.empty()) {
            memory::save_ad_records(run.output_path, state.outputs);
        }
        return state.outputs;
    }

private:
    static inline const std::vector<perception::SubtitleLine> kNoSubtitles{};

    std::vector<icl::Demonstration> select_demos(
        const perception::PerceptionTuple& tuple, const std::string& clip_id) {
        if (config_.strategy == SelectionStrategy::zero) {
            return {};
        }
        // Per-clip seed so each query samples its own demonstrations while
        // the run as a whole stays reproducible.
        std::uint64_t clip_seed =
            fnv1a64(std::to_string(config_.seed) + ":" + clip_id);
        switch (config_.strategy) {
            case SelectionStrategy::random:
                return icl::select_random(*backends_.pool, config_.shots, clip_seed);
            case SelectionStrategy::similar: {
                std::vector<float> query = mean_embedding(tuple.frames);
                return icl::select_similar(*backends_.pool, query, config_.shots,
                                           config_.similar_order);
            }
            case SelectionStrategy::complexity:
                return icl::select_complexity(*backends_.pool, config_.shots,
                                              config_.simple_fraction, clip_seed);
            case SelectionStrategy::zero:
                break;
        }
        return {};
    }

    void seed_character_bank(NarrationState& state,
                             const perception::MovieManifest& movie,
                             std::span<const CharacterBankEntry> entries) {
        CharacterSeeds seeds = prepend_character_bank(movie, entries);
        for (std::size_t i = 0; i < seeds.clips.size(); ++i) {
            perception::PerceptionTuple tuple = perception::perceive(
                seeds.clips[i], *backends_.experts, kNoSubtitles, config_.perception);
            state.bank.register_frames_named(tuple.frames, seeds.seed_ads[i],
                                             {entries[i].character_name});
        }
    }

    NarratorConfig config_;
    NarrationBackends backends_;
    prompt::PromptTemplate template_;
    std::vector<perception::SubtitleLine> subtitles_;
};

}  // namespace adkit::narrate
