#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <adkit/jsonl.hpp>

namespace adkit::perception {

class PerceptionError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct VideoClip {
    std::string clip_id;
    std::string movie_id;
    double t_start = 0.0;
    double t_end = 0.0;
    std::vector<std::string> frame_refs;  // ordered, globally unique per movie
};

struct FrameObservation {
    std::string frame_id;
    std::vector<float> embedding;  // unit-norm expected, dimension D
    std::string caption;
    int person_count = 0;
};

struct SubtitleLine {
    double t_start = 0.0;
    double t_end = 0.0;
    std::string text;
};

/// Per-clip bundle of expert outputs: N sampled frames plus the dialogue
/// collected around the clip.
struct PerceptionTuple {
    std::string clip_id;
    std::vector<FrameObservation> frames;
    std::string dialogue;
};

struct PerceptionConfig {
    std::size_t frames_per_clip = 8;
    double subtitle_window_s = 15.0;  // 0.25 minutes
    std::size_t embedding_dim = 768;
};

/// Evenly spaced sampling: index i maps to round(i*(M-1)/(n-1)). All zeros
/// when M == 1 or n == 1; duplicates appear when M < n. Output indices are
/// nondecreasing; the first is 0 and the last is M-1 whenever both M and n
/// are at least 2.
inline std::vector<std::size_t> sample_frame_indices(std::size_t m, std::size_t n) {
    if (m == 0) {
        throw PerceptionError("cannot sample frames from an empty clip");
    }
    if (n == 0) {
        throw PerceptionError("frame sample count must be positive");
    }
    std::vector<std::size_t> indices(n, 0);
    if (m == 1 || n == 1) {
        return indices;
    }
    // round(i*(M-1)/(n-1)) in exact integer arithmetic, half rounds up.
    for (std::size_t i = 0; i < n; ++i) {
        indices[i] = (2 * i * (m - 1) + (n - 1)) / (2 * (n - 1));
    }
    return indices;
}

inline std::vector<std::string> sample_frames(const VideoClip& clip, std::size_t n) {
    std::vector<std::size_t> indices = sample_frame_indices(clip.frame_refs.size(), n);
    std::vector<std::string> refs;
    refs.reserve(n);
    for (std::size_t idx : indices) {
        refs.push_back(clip.frame_refs[idx]);
    }
    return refs;
}

/// Concatenates, newline separated and in temporal order, every subtitle
/// line whose [t_start, t_end] overlaps the clip extended by t_sub on both
/// sides. Expects subs sorted by t_start.
inline std::string collect_dialogue(const std::vector<SubtitleLine>& subs,
                                    const VideoClip& clip, double t_sub) {
    const double window_start = clip.t_start - t_sub;
    const double window_end = clip.t_end + t_sub;
    std::string dialogue;
    for (const SubtitleLine& line : subs) {
        if (line.t_start <= window_end && line.t_end >= window_start) {
            if (!dialogue.empty()) {
                dialogue += '\n';
            }
            dialogue += line.text;
        }
    }
    return dialogue;
}

/// Boundary to the expert models (embedding extractor, image captioner,
/// people detector). Implementations resolve a frame id to its observation;
/// a missing frame must raise PerceptionError naming the id.
class ExpertAdapters {
public:
    virtual ~ExpertAdapters() = default;
    virtual FrameObservation observe(const std::string& frame_id) = 0;
};

struct FixturePaths {
    std::filesystem::path embeddings_bin;
    std::filesystem::path embeddings_sidecar;
    std::filesystem::path captions;    // JSONL {frame_id, caption}
    std::filesystem::path detections;  // JSONL {frame_id, person_count}
};

/// File-backed experts. Embeddings live in a little-endian float32 binary,
/// row-major [num_frames x D], with a JSON sidecar mapping frame_id -> row
/// and declaring D. Captions and detections are JSONL keyed by frame_id.
class FixtureExperts : public ExpertAdapters {
public:
    static FixtureExperts load(const FixturePaths& paths) {
        FixtureExperts experts;
        json sidecar = json::parse(read_text_file(paths.embeddings_sidecar));
        experts.dim_ = sidecar.at("dim").get<std::size_t>();
        if (experts.dim_ == 0) {
            throw PerceptionError("embedding sidecar declares dim 0");
        }
        for (const auto& [frame_id, row] : sidecar.at("rows").items()) {
            experts.rows_[frame_id] = row.get<std::size_t>();
        }

        std::ifstream bin(paths.embeddings_bin, std::ios::binary);
        if (!bin) {
            throw PerceptionError("cannot open " + paths.embeddings_bin.string());
        }
        std::vector<unsigned char> raw(
            (std::istreambuf_iterator<char>(bin)), std::istreambuf_iterator<char>());
        const std::size_t expected = experts.rows_.size() * experts.dim_ * 4;
        if (raw.size() != expected) {
            throw PerceptionError("embedding binary size " + std::to_string(raw.size()) +
                                  " does not match sidecar (" + std::to_string(expected) +
                                  " bytes expected)");
        }
        experts.data_.resize(experts.rows_.size() * experts.dim_);
        for (std::size_t i = 0; i < experts.data_.size(); ++i) {
            std::uint32_t bits = static_cast<std::uint32_t>(raw[4 * i]) |
                                 (static_cast<std::uint32_t>(raw[4 * i + 1]) << 8) |
                                 (static_cast<std::uint32_t>(raw[4 * i + 2]) << 16) |
                                 (static_cast<std::uint32_t>(raw[4 * i + 3]) << 24);
            experts.data_[i] = std::bit_cast<float>(bits);
        }

        for (const json& row : read_jsonl(paths.captions)) {
            experts.captions_[row.at("frame_id").get<std::string>()] =
                row.at("caption").get<std::string>();
        }
        for (const json& row : read_jsonl(paths.detections)) {
            int count = row.at("person_count").get<int>();
            if (count < 0) {
                throw PerceptionError("negative person_count for frame " +
                                      row.at("frame_id").get<std::string>());
            }
            experts.person_counts_[row.at("frame_id").get<std::string>()] = count;
        }
        return experts;
    }

    FrameObservation observe(const std::string& frame_id) override {
        auto row = rows_.find(frame_id);
        if (row == rows_.end()) {
            throw PerceptionError("missing fixture embedding for frame " + frame_id);
        }
        auto caption = captions_.find(frame_id);
        if (caption == captions_.end()) {
            throw PerceptionError("missing fixture caption for frame " + frame_id);
        }
        auto persons = person_counts_.find(frame_id);
        if (persons == person_counts_.end()) {
            throw PerceptionError("missing fixture detection for frame " + frame_id);
        }
        FrameObservation obs;
        obs.frame_id = frame_id;
        obs.embedding.assign(data_.begin() + static_cast<std::ptrdiff_t>(row->second * dim_),
                             data_.begin() + static_cast<std::ptrdiff_t>((row->second + 1) * dim_));
        obs.caption = caption->second;
        obs.person_count = persons->second;
        return obs;
    }

    std::size_t dim() const { return dim_; }

private:
    std::size_t dim_ = 0;
    std::unordered_map<std::string, std::size_t> rows_;
    std::vector<float> data_;
    std::unordered_map<std::string, std::string> captions_;
    std::unordered_map<std::string, int> person_counts_;
};

/// Runs the expert adapters over the sampled frames of a clip and windows
/// the dialogue. Deterministic for fixed fixtures and config.
inline PerceptionTuple perceive(const VideoClip& clip, ExpertAdapters& experts,
                                const std::vector<SubtitleLine>& subs,
                                const PerceptionConfig& config) {
    PerceptionTuple tuple;
    tuple.clip_id = clip.clip_id;
    tuple.frames.reserve(config.frames_per_clip);
    for (const std::string& frame_id : sample_frames(clip, config.frames_per_clip)) {
        FrameObservation obs = experts.observe(frame_id);
        if (obs.embedding.size() != config.embedding_dim) {
            throw PerceptionError("frame " + frame_id + " has embedding dimension " +
                                  std::to_string(obs.embedding.size()) + ", expected " +
                                  std::to_string(config.embedding_dim));
        }
        tuple.frames.push_back(std::move(obs));
    }
    tuple.dialogue = collect_dialogue(subs, clip, config.subtitle_window_s);
    return tuple;
}

struct MovieManifest {
    std::string movie_id;
    std::vector<VideoClip> clips;
};

inline MovieManifest load_manifest(const std::filesystem::path& path) {
    json doc = json::parse(read_text_file(path));
    MovieManifest manifest;
    manifest.movie_id = doc.at("movie_id").get<std::string>();
    std::unordered_set<std::string> seen_frames;
    for (const json& entry : doc.at("clips")) {
        VideoClip clip;
        clip.clip_id = entry.at("clip_id").get<std::string>();
        clip.movie_id = manifest.movie_id;
        clip.t_start = entry.at("t_start").get<double>();
        clip.t_end = entry.at("t_end").get<double>();
        clip.frame_refs = entry.at("frame_refs").get<std::vector<std::string>>();
        if (clip.frame_refs.empty()) {
            throw PerceptionError("clip " + clip.clip_id + " has no frames");
        }
        if (!(clip.t_start < clip.t_end)) {
            throw PerceptionError("clip " + clip.clip_id + " has t_start >= t_end");
        }
        for (const std::string& ref : clip.frame_refs) {
            if (!seen_frames.insert(ref).second) {
                throw PerceptionError("frame " + ref + " appears in more than one clip");
            }
        }
        manifest.clips.push_back(std::move(clip));
    }
    return manifest;
}

inline std::vector<SubtitleLine> load_subtitles(const std::filesystem::path& path) {
    std::vector<SubtitleLine> subs;
    for (const json& row : read_jsonl(path)) {
        SubtitleLine line;
        line.t_start = row.at("t_start").get<double>();
        line.t_end = row.at("t_end").get<double>();
        line.text = row.at("text").get<std::string>();
        if (line.t_start > line.t_end) {
            throw PerceptionError("subtitle line with t_start > t_end");
        }
        if (line.text.empty()) {
            throw PerceptionError("subtitle line with empty text");
        }
        subs.push_back(std::move(line));
    }
    std::stable_sort(subs.begin(), subs.end(),
                     [](const SubtitleLine& a, const SubtitleLine& b) {
                         return a.t_start < b.t_start;
                     });
    return subs;
}

}  // namespace adkit::perception
