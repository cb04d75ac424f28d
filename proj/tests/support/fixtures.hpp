#pragma once

// Deterministic fixtures shared by the unit suite, the golden generator and
// the acceptance suite: a 3-clip movie with embeddings/captions/detections/
// subtitles, scripted chat backends standing in for live services, and the
// hand-built inputs behind the golden prompts.

#include <array>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <adkit/icl.hpp>
#include <adkit/jsonl.hpp>
#include <adkit/llm_gateway.hpp>
#include <adkit/memory.hpp>
#include <adkit/narrator.hpp>
#include <adkit/perception.hpp>
#include <adkit/promptgen.hpp>

namespace adkit::testfix {

namespace fs = std::filesystem;

struct TempDir {
    fs::path path;

    explicit TempDir(const std::string& prefix) {
        path = fs::temp_directory_path() /
               (prefix + "-" + std::to_string(std::random_device{}()));
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
};

struct FixtureFrame {
    std::string id;
    std::array<float, 4> embedding;
    std::string caption;
    int person_count;
};

inline const std::vector<FixtureFrame>& fixture_frames() {
    static const std::vector<FixtureFrame> frames = {
        // clip c0, t [0, 10]
        {"f00", {0.5f, 0.5f, 0.0f, 0.0f}, "A man in a dark coat stands by the door.", 0},
        {"f01", {0.0f, 1.0f, 0.0f, 0.0f}, "Two people talk in the hallway.", 2},
        {"f02", {0.25f, 0.25f, 0.5f, 0.0f}, "The hallway stretches toward a lit room.", 0},
        {"f03", {1.0f, 0.0f, 0.0f, 0.0f}, "A close-up of a man with wet hair.", 1},
        {"f04", {0.0f, 0.5f, 0.5f, 0.0f}, "Coats hang along the wall.", 0},
        {"f05", {0.5f, 0.0f, 0.5f, 0.0f}, "Three figures pass the doorway.", 3},
        {"f06", {0.0f, 0.0f, 1.0f, 0.0f}, "An empty corridor.", 0},
        {"f07", {0.5f, 0.25f, 0.25f, 0.0f}, "The man looks over his shoulder.", 1},
        // clip c1, t [12, 20], 10 frames so sampling skips f12 and f17
        {"f10", {0.0f, 1.0f, 0.0f, 0.0f}, "Two women sit by the window.", 2},
        {"f11", {0.0f, 0.5f, 0.5f, 0.0f}, "Rain streaks the glass.", 0},
        {"f12", {0.25f, 0.5f, 0.25f, 0.0f}, "A tray of cups rests on the table.", 0},
        {"f13", {0.0f, 0.0f, 0.5f, 0.5f}, "The curtains drift in the draft.", 0},
        {"f14", {1.0f, 0.0f, 0.0f, 0.0f}, "A young man waves near the window.", 1},
        {"f15", {0.0f, 0.0f, 1.0f, 0.0f}, "The window frames the grey street.", 0},
        {"f16", {0.5f, 0.5f, 0.5f, 0.0f}, "Guests gather around the table.", 4},
        {"f17", {0.0f, 0.25f, 0.75f, 0.0f}, "Steam rises from the cups.", 0},
        {"f18", {0.75f, 0.25f, 0.0f, 0.0f}, "The young man smiles.", 1},
        {"f19", {0.0f, 0.0f, 0.0f, 1.0f}, "A clock on the wall reads noon.", 0},
        // clip c2, t [22, 30]; its generation is content filtered in fixtures
        {"f20", {0.0f, 0.0f, 1.0f, 0.0f}, "A crowded market street.", 0},
        {"f21", {0.0f, 0.0f, 1.0f, 0.0f}, "Stalls line the narrow lane.", 0},
        {"f22", {0.0f, 0.0f, 1.0f, 0.0f}, "Shoppers crowd a fruit stall.", 0},
        {"f23", {0.0f, 0.0f, 1.0f, 0.0f}, "Baskets of produce on a cart.", 0},
        {"f24", {0.0f, 0.0f, 0.5f, 0.5f}, "A vendor weighs vegetables.", 1},
        {"f25", {0.0f, 0.0f, 0.5f, 0.5f}, "Coins change hands at a stall.", 0},
        {"f26", {0.0f, 0.0f, 0.5f, 0.5f}, "Awnings flap over the lane.", 0},
        {"f27", {0.0f, 0.0f, 0.5f, 0.5f}, "A cart rolls past the stalls.", 5},
        // character-bank portraits, not part of any clip
        {"pj0", {1.0f, 0.0f, 0.0f, 0.0f}, "Portrait of a man.", 1},
        {"pj1", {0.75f, 0.25f, 0.0f, 0.0f}, "Portrait of a man smiling.", 1},
        {"pr0", {0.0f, 1.0f, 0.0f, 0.0f}, "Portrait of a woman.", 1},
    };
    return frames;
}

inline perception::MovieManifest fixture_manifest() {
    perception::MovieManifest movie;
    movie.movie_id = "fixture_movie";
    auto clip = [&](const std::string& id, double t0, double t1,
                    std::vector<std::string> refs) {
        perception::VideoClip c;
        c.clip_id = id;
        c.movie_id = movie.movie_id;
        c.t_start = t0;
        c.t_end = t1;
        c.frame_refs = std::move(refs);
        movie.clips.push_back(std::move(c));
    };
    clip("c0", 0.0, 10.0, {"f00", "f01", "f02", "f03", "f04", "f05", "f06", "f07"});
    clip("c1", 12.0, 20.0,
         {"f10", "f11", "f12", "f13", "f14", "f15", "f16", "f17", "f18", "f19"});
    clip("c2", 22.0, 30.0, {"f20", "f21", "f22", "f23", "f24", "f25", "f26", "f27"});
    return movie;
}

inline std::vector<perception::SubtitleLine> fixture_subtitles() {
    return {{2.0, 4.0, "JACK: It's freezing out here."},
            {13.0, 15.0, "ROSE: Where have you been?"},
            {16.0, 17.5, "JACK: Walking. Just walking."},
            {26.0, 28.0, "VENDOR: Fresh apples, two a penny!"}};
}

inline std::vector<narrate::CharacterBankEntry> fixture_character_bank() {
    return {{"Jack", {"pj0", "pj1"}}, {"Rose", {"pr0"}}};
}

// Exact mean of clip c2's eight embeddings (four of each kind).
inline std::vector<float> fixture_market_mean() {
    return {0.0f, 0.0f, 0.75f, 0.25f};
}

inline const char* kFallbackMarketCaption = "People move through a crowded market.";
inline const char* kAdClip0 = "Jack walks into the dim hallway.";
inline const char* kAdClip1 = "He greets Rose at the window.";
inline const char* kGenericAd = "Someone moves.";

/// Writes the whole fixture movie to dir: manifest.json, embeddings.bin +
/// embeddings.json sidecar, captions.jsonl, detections.jsonl,
/// subtitles.jsonl, fallback_captions.jsonl, char_bank.json, config.json.
inline void write_fixture_movie(const fs::path& dir) {
    fs::create_directories(dir);
    const auto& frames = fixture_frames();

    json manifest;
    perception::MovieManifest movie = fixture_manifest();
    manifest["movie_id"] = movie.movie_id;
    json clips = json::array();
    for (const perception::VideoClip& clip : movie.clips) {
        clips.push_back(json{{"clip_id", clip.clip_id},
                             {"t_start", clip.t_start},
                             {"t_end", clip.t_end},
                             {"frame_refs", clip.frame_refs}});
    }
    manifest["clips"] = clips;
    write_text_file(dir / "manifest.json", manifest.dump(2) + "\n");

    std::string bin;
    json rows = json::object();
    for (std::size_t i = 0; i < frames.size(); ++i) {
        rows[frames[i].id] = i;
        for (float value : frames[i].embedding) {
            std::uint32_t bits = std::bit_cast<std::uint32_t>(value);
            bin += static_cast<char>(bits & 0xff);
            bin += static_cast<char>((bits >> 8) & 0xff);
            bin += static_cast<char>((bits >> 16) & 0xff);
            bin += static_cast<char>((bits >> 24) & 0xff);
        }
    }
    write_text_file(dir / "embeddings.bin", bin);
    write_text_file(dir / "embeddings.json",
                    json{{"dim", 4}, {"rows", rows}}.dump(2) + "\n");

    std::vector<json> captions, detections;
    for (const FixtureFrame& frame : frames) {
        captions.push_back(json{{"frame_id", frame.id}, {"caption", frame.caption}});
        detections.push_back(
            json{{"frame_id", frame.id}, {"person_count", frame.person_count}});
    }
    write_jsonl(dir / "captions.jsonl", captions);
    write_jsonl(dir / "detections.jsonl", detections);

    std::vector<json> subs;
    for (const perception::SubtitleLine& line : fixture_subtitles()) {
        subs.push_back(json{
            {"t_start", line.t_start}, {"t_end", line.t_end}, {"text", line.text}});
    }
    write_jsonl(dir / "subtitles.jsonl", subs);

    write_jsonl(dir / "fallback_captions.jsonl",
                {json{{"embedding", fixture_market_mean()},
                      {"text", kFallbackMarketCaption}}});

    json bank;
    json characters = json::array();
    for (const narrate::CharacterBankEntry& entry : fixture_character_bank()) {
        characters.push_back(json{{"character_name", entry.character_name},
                                  {"frame_refs", entry.frame_refs}});
    }
    bank["characters"] = characters;
    write_text_file(dir / "char_bank.json", bank.dump(2) + "\n");

    json config{{"frames_per_clip", 8},
                {"subtitle_window_s", 15.0},
                {"embedding_dim", 4},
                {"queue_capacity", 7},
                {"checkpoint_every", 1},
                {"fixtures",
                 json{{"embeddings_bin", "embeddings.bin"},
                      {"embeddings_sidecar", "embeddings.json"},
                      {"captions", "captions.jsonl"},
                      {"detections", "detections.jsonl"},
                      {"subtitles", "subtitles.jsonl"},
                      {"fallback_captions", "fallback_captions.jsonl"}}}};
    write_text_file(dir / "config.json", config.dump(2) + "\n");
}

inline perception::FixtureExperts load_fixture_experts(const fs::path& dir) {
    perception::FixturePaths paths;
    paths.embeddings_bin = dir / "embeddings.bin";
    paths.embeddings_sidecar = dir / "embeddings.json";
    paths.captions = dir / "captions.jsonl";
    paths.detections = dir / "detections.jsonl";
    return perception::FixtureExperts::load(paths);
}

/// Stands in for the live chat service. AD generation answers are keyed on
/// marker captions inside the prompt, the market clip is content filtered,
/// NER scans the text for the fixture names, and CoT requests get a fixed
/// four-step reasoning.
class ScriptedChatBackend : public llm::ChatBackend {
public:
    int calls = 0;

    llm::ChatOutcome complete(const llm::ChatRequest& request) override {
        ++calls;
        switch (request.tag) {
            case llm::RequestTag::ad_generation: {
                if (request.prompt.find("A crowded market street.") != std::string::npos) {
                    return llm::ChatOutcome::filtered();
                }
                if (request.prompt.find("A close-up of a man with wet hair.") !=
                    std::string::npos) {
                    return llm::ChatOutcome::from_text(kAdClip0);
                }
                if (request.prompt.find("A young man waves near the window.") !=
                    std::string::npos) {
                    return llm::ChatOutcome::from_text(kAdClip1);
                }
                return llm::ChatOutcome::from_text(kGenericAd);
            }
            case llm::RequestTag::ner: {
                std::string names;
                for (const char* name : {"Jack", "Rose"}) {
                    if (request.prompt.find(name) != std::string::npos) {
                        if (!names.empty()) {
                            names += "|";
                        }
                        names += name;
                    }
                }
                return llm::ChatOutcome::from_text(names.empty() ? "none" : names);
            }
            case llm::RequestTag::cot_annotation:
                return llm::ChatOutcome::from_text(
                    "Read the captions for the main subject.\n"
                    "Check the dialogue for names.\n"
                    "Link the context ADs to the current scene.\n"
                    "Describe the key action in one sentence.");
            case llm::RequestTag::segeval:
                return llm::ChatOutcome::from_text(
                    "Assistant-1: 7/10\nAssistant-2: 7/10\nRationale: Comparable.");
        }
        return llm::ChatOutcome::error("unscripted request");
    }
};

/// Judge whose marks follow the segments, not the slots: the segment whose
/// text contains pd_marker gets pd_mark, the other gt_mark. Works for both
/// pairwise and single-segment prompts.
class ScriptedJudgeBackend : public llm::ChatBackend {
public:
    std::string pd_marker = "PD_SEG";
    int pd_mark = 8;
    int gt_mark = 5;
    bool garble = false;  // respond unparseably
    int calls = 0;

    llm::ChatOutcome complete(const llm::ChatRequest& request) override {
        ++calls;
        if (garble) {
            return llm::ChatOutcome::from_text("I cannot decide on a mark.");
        }
        std::size_t a1 = request.prompt.find("Assistant-1 segment:");
        if (a1 == std::string::npos) {
            // single-segment prompt
            bool is_pd = request.prompt.find(pd_marker) != std::string::npos;
            return llm::ChatOutcome::from_text(
                "Assistant: " + std::to_string(is_pd ? pd_mark : gt_mark) +
                "/10\nRationale: Scripted.");
        }
        std::size_t a2 = request.prompt.find("Assistant-2 segment:");
        std::size_t pd_pos = request.prompt.find(pd_marker);
        bool pd_is_first = pd_pos != std::string::npos && pd_pos > a1 && pd_pos < a2;
        int mark1 = pd_is_first ? pd_mark : gt_mark;
        int mark2 = pd_is_first ? gt_mark : pd_mark;
        return llm::ChatOutcome::from_text(
            "Assistant-1: " + std::to_string(mark1) + "/10\nAssistant-2: " +
            std::to_string(mark2) + "/10\nRationale: Scripted comparison.");
    }
};

class StubNer : public memory::NameExtractor {
public:
    std::vector<std::string> names;
    bool fail = false;
    int calls = 0;

    explicit StubNer(std::vector<std::string> n = {}) : names(std::move(n)) {}

    std::vector<std::string> extract(const std::string&) override {
        ++calls;
        if (fail) {
            throw std::runtime_error("stub NER outage");
        }
        return names;
    }
};

/// Hand-built demonstration pool behind the 5-shot golden prompts. The
/// questions go through build_query so demonstrations and main queries stay
/// structurally identical.
inline icl::DemonstrationPool golden_demo_pool() {
    icl::DemonstrationPool pool;
    struct Row {
        const char* id;
        const char* caption_a;
        const char* caption_b;
        const char* dialogue;
        const char* context;
        double context_t;
        const char* answer;
        const char* reasoning;
    };
    const Row rows[] = {
        {"d0", "A woman runs along a beach.", "Waves crash behind her.",
         "MAN: Wait for me!", "She drops her bag on the sand.", 101.0,
         "Anna sprints toward the water.",
         "The captions show a woman running on a beach.\n"
         "The dialogue names no one, but the context AD follows the same woman.\n"
         "Describe her sprint toward the water."},
        {"d1", "A car pulls into a driveway.", "A man steps out.",
         "none of note", "The house lights turn on.", 220.5,
         "Tom parks and walks to the porch.",
         "The captions show a car arriving and a man stepping out.\n"
         "The context AD says the house lights turned on, so someone expects him.\n"
         "Name the man from earlier context and describe the arrival."},
        {"d2", "Two children chase a kite.", "The kite dips over a hedge.",
         "GIRL: Higher, higher!", "The park empties in the evening light.", 305.0,
         "The children race after the falling kite.",
         "The captions follow a kite and two children.\n"
         "The dialogue shows excitement.\n"
         "Describe the chase as one action."},
        {"d3", "A chef plates a dish.", "Steam rises from the pan.",
         "CHEF: Service, please.", "Waiters line up at the counter.", 410.0,
         "The chef slides the plate across the counter.",
         "The captions center on the chef finishing a dish.\n"
         "The context AD places waiters nearby.\n"
         "The dialogue calls for service, so the plate is handed over."},
        {"d4", "A dog digs under a fence.", "Dirt sprays across the grass.",
         "BOY: Rex, stop it!", "Rex buries a bone by the shed.", 512.5,
         "Rex digs furiously under the fence.",
         "The captions show a dog digging.\n"
         "The dialogue names the dog Rex.\n"
         "The context AD confirms Rex was in the yard.\n"
         "Describe the digging with the name."},
    };
    for (const Row& row : rows) {
        prompt::QueryParts parts;
        parts.captions.push_back({1, row.caption_a, {}});
        parts.captions.push_back({2, row.caption_b, {}});
        parts.context_ads.push_back({row.context_t, row.context});
        parts.dialogue = row.dialogue;

        icl::Demonstration demo;
        demo.demo_id = row.id;
        demo.question = prompt::build_query(parts);
        demo.answer = row.answer;
        demo.reasoning = row.reasoning;
        demo.n_atomic = icl::atomic_steps(row.reasoning);
        pool.demos.push_back(std::move(demo));
    }
    return pool;
}

/// The main query used by all three golden prompts: full sections with a
/// recalled name on one caption.
inline prompt::QueryParts golden_query_parts() {
    prompt::QueryParts parts;
    parts.context_ads.push_back({391.0, "Jack shoulders the door open."});
    parts.context_ads.push_back({397.5, "He shakes the rain from his coat."});
    parts.dialogue = "ROSE: You're soaked through.\nJACK: It's nothing.";
    parts.captions.push_back({1, "A man stands dripping in a doorway.", {}});
    parts.captions.push_back({2, "A woman hands him a towel.", {}});
    parts.captions.push_back({3, "A close-up of the man's face.", {"Jack"}});
    parts.captions.push_back({4, "The fire casts light over the room.", {}});
    return parts;
}

}  // namespace adkit::testfix
