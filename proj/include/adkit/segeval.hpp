#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <regex>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <adkit/jsonl.hpp>
#include <adkit/llm_gateway.hpp>
#include <adkit/memory.hpp>
#include <adkit/promptgen.hpp>
#include <adkit/rand.hpp>

namespace adkit::segeval {

class SegevalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class Criterion { originality, consistency, coherence, diversity, specificity };

inline std::string to_string(Criterion c) {
    switch (c) {
        case Criterion::originality: return "originality";
        case Criterion::consistency: return "consistency";
        case Criterion::coherence: return "coherence";
        case Criterion::diversity: return "diversity";
        case Criterion::specificity: return "specificity";
    }
    throw SegevalError("invalid criterion");
}

inline Criterion criterion_from_string(std::string_view name) {
    if (name == "originality") return Criterion::originality;
    if (name == "consistency") return Criterion::consistency;
    if (name == "coherence") return Criterion::coherence;
    if (name == "diversity") return Criterion::diversity;
    if (name == "specificity") return Criterion::specificity;
    throw SegevalError("unknown criterion '" + std::string(name) + "'");
}

/// Originality and consistency are text-level (judged without context,
/// W = 1); coherence, diversity and specificity are sequence-level and need
/// surrounding segments (W > 1).
inline bool needs_context(Criterion c) {
    return c == Criterion::coherence || c == Criterion::diversity ||
           c == Criterion::specificity;
}

inline std::string criterion_definition(Criterion c) {
    switch (c) {
        case Criterion::originality:
            return "Whether the segment is novel and non-repetitive, enriching the "
                   "watching experience for visually impaired audiences.";
        case Criterion::consistency:
            return "Whether the segment maintains a consistent tone and content "
                   "throughout.";
        case Criterion::coherence:
            return "Whether the segment logically connects to the given context, "
                   "flowing smoothly and deepening understanding of the movie.";
        case Criterion::diversity:
            return "Whether the segment offers varied output rather than repetitive "
                   "or highly similar content against the given context.";
        case Criterion::specificity:
            return "Whether the segment is sufficiently detailed and focused for "
                   "the context, measuring its level of detail.";
    }
    throw SegevalError("invalid criterion");
}

enum class SegmentSource { predicted, ground_truth };

struct Segment {
    std::size_t index = 0;
    std::vector<memory::ADRecord> ads;  // nonempty, temporal order
    SegmentSource source = SegmentSource::ground_truth;
    bool partial = false;  // trailing chunk shorter than L
};

/// Chunks a temporally ordered AD sequence into consecutive segments of L,
/// keeping (and flagging) a trailing partial segment.
inline std::vector<Segment> make_segments(std::span<const memory::ADRecord> ads,
                                          std::size_t segment_size,
                                          SegmentSource source) {
    if (segment_size == 0) {
        throw SegevalError("segment size must be positive");
    }
    std::vector<Segment> segments;
    for (std::size_t start = 0; start < ads.size(); start += segment_size) {
        Segment seg;
        seg.index = segments.size();
        seg.source = source;
        std::size_t end = std::min(start + segment_size, ads.size());
        seg.ads.assign(ads.begin() + static_cast<std::ptrdiff_t>(start),
                       ads.begin() + static_cast<std::ptrdiff_t>(end));
        seg.partial = seg.ads.size() < segment_size;
        segments.push_back(std::move(seg));
    }
    return segments;
}

/// Oracle context around segment idx: up to (W-1)/2 ground-truth segments
/// on each side, truncated at the sequence boundaries. W must be odd; W = 1
/// yields the empty window used for text-level criteria.
struct ContextWindow {
    std::vector<Segment> past;
    std::vector<Segment> future;
    bool empty() const { return past.empty() && future.empty(); }
};

inline ContextWindow build_context(const std::vector<Segment>& gt_segments,
                                   std::size_t idx, std::size_t window) {
    if (window == 0 || window % 2 == 0) {
        throw SegevalError("context window length must be odd and positive");
    }
    if (idx >= gt_segments.size()) {
        throw SegevalError("segment index out of range");
    }
    ContextWindow ctx;
    std::size_t half = (window - 1) / 2;
    std::size_t past_begin = idx > half ? idx - half : 0;
    for (std::size_t i = past_begin; i < idx; ++i) {
        if (gt_segments[i].source != SegmentSource::ground_truth) {
            throw SegevalError("context must be built from ground-truth segments");
        }
        ctx.past.push_back(gt_segments[i]);
    }
    std::size_t future_end = std::min(gt_segments.size(), idx + half + 1);
    for (std::size_t i = idx + 1; i < future_end; ++i) {
        if (gt_segments[i].source != SegmentSource::ground_truth) {
            throw SegevalError("context must be built from ground-truth segments");
        }
        ctx.future.push_back(gt_segments[i]);
    }
    return ctx;
}

/// Raw marks and rescaled ratio for one (segment, criterion) judgement.
/// r is present exactly when the ground-truth raw mark is positive, and is
/// then raw_pd / raw_gt; a zero ground-truth mark leaves the segment
/// unscored instead of producing an infinity.
struct SegmentScore {
    std::size_t segment_index = 0;
    Criterion criterion = Criterion::originality;
    int repeat = 0;
    double raw_pd = 0.0;
    double raw_gt = 0.0;
    std::optional<double> r;
    int pd_slot = 0;  // 1 or 2 in pairwise mode; 0 when judged in separate prompts
    bool scored = false;
    std::string unscored_reason;
    std::string rationale;
    bool partial = false;
};

struct JudgeOptions {
    int max_attempts = 3;   // parse retries per judgement
    bool pairwise = true;   // both segments in one prompt; false = two prompts
    double temperature = 0.0;
    int max_output = 512;
    llm::RetryPolicy retry{};
};

namespace detail {

inline void append_segment_lines(std::string& out, const Segment& seg) {
    for (const memory::ADRecord& ad : seg.ads) {
        out += "[" + prompt::format_seconds(ad.t_start) + "s] " + ad.text + "\n";
    }
}

inline std::string context_block(const ContextWindow& ctx) {
    std::string block =
        "Context (ground-truth ADs around the evaluated segment):\nPast:\n";
    if (ctx.past.empty()) {
        block += "none\n";
    } else {
        for (const Segment& seg : ctx.past) {
            append_segment_lines(block, seg);
        }
    }
    block += "Future:\n";
    if (ctx.future.empty()) {
        block += "none\n";
    } else {
        for (const Segment& seg : ctx.future) {
            append_segment_lines(block, seg);
        }
    }
    block.pop_back();
    return block;
}

inline std::optional<double> parse_mark(const std::string& response,
                                        const std::string& label) {
    std::regex pattern(label + R"(\s*:\s*(\d{1,2})\s*/\s*10)");
    std::smatch match;
    if (!std::regex_search(response, match, pattern)) {
        return std::nullopt;
    }
    int mark = std::stoi(match[1].str());
    if (mark < 0 || mark > 10) {
        return std::nullopt;
    }
    return static_cast<double>(mark);
}

inline std::string parse_rationale(const std::string& response) {
    std::size_t pos = response.find("Rationale:");
    if (pos == std::string::npos) {
        return {};
    }
    std::string rationale = response.substr(pos + std::string("Rationale:").size());
    return prompt::detail::trim(rationale);
}

}  // namespace detail

/// The pairwise judge prompt: both anonymous assistants, the criterion, the
/// ground-truth-only context (omitted entirely when the window is empty)
/// and a strict response schema on a declared 0-10 integer scale.
inline std::string build_judge_prompt(const Segment& slot1, const Segment& slot2,
                                      const ContextWindow& ctx, Criterion criterion) {
    std::string prompt_text =
        "You are a fair judge of audio description (AD) quality. Assistant-1 and "
        "Assistant-2 each produced an AD segment for the same part of a movie. "
        "Judge both segments on the single criterion below, using only the text "
        "shown.";
    prompt_text += "\n\nCriterion: " + to_string(criterion) + "\n" +
                   criterion_definition(criterion);
    if (!ctx.empty()) {
        prompt_text += "\n\n" + detail::context_block(ctx);
    }
    prompt_text += "\n\nAssistant-1 segment:\n";
    detail::append_segment_lines(prompt_text, slot1);
    prompt_text += "\nAssistant-2 segment:\n";
    detail::append_segment_lines(prompt_text, slot2);
    prompt_text +=
        "\nMark each segment for the criterion on an integer scale from 0 (worst) "
        "to 10 (best).\nRespond in exactly this format:\nAssistant-1: <mark>/10\n"
        "Assistant-2: <mark>/10\nRationale: <short explanation>";
    return prompt_text;
}

/// Single-segment variant used by the two-prompt mode.
inline std::string build_single_judge_prompt(const Segment& seg,
                                             const ContextWindow& ctx,
                                             Criterion criterion) {
    std::string prompt_text =
        "You are a fair judge of audio description (AD) quality. An assistant "
        "produced an AD segment for part of a movie. Judge the segment on the "
        "single criterion below, using only the text shown.";
    prompt_text += "\n\nCriterion: " + to_string(criterion) + "\n" +
                   criterion_definition(criterion);
    if (!ctx.empty()) {
        prompt_text += "\n\n" + detail::context_block(ctx);
    }
    prompt_text += "\n\nAssistant segment:\n";
    detail::append_segment_lines(prompt_text, seg);
    prompt_text +=
        "\nMark the segment for the criterion on an integer scale from 0 (worst) "
        "to 10 (best).\nRespond in exactly this format:\nAssistant: <mark>/10\n"
        "Rationale: <short explanation>";
    return prompt_text;
}

namespace detail {

struct JudgeCall {
    std::optional<double> mark1;
    std::optional<double> mark2;  // unused in single mode
    std::string rationale;
    std::string prompt;
    bool ok = false;
    std::string failure;
};

inline JudgeCall run_judge(llm::ChatBackend& backend, const std::string& prompt_text,
                           bool pairwise, const JudgeOptions& opts) {
    JudgeCall call;
    call.prompt = prompt_text;
    llm::ChatRequest request;
    request.prompt = prompt_text;
    request.temperature = opts.temperature;
    request.max_output = opts.max_output;
    request.tag = llm::RequestTag::segeval;
    for (int attempt = 1; attempt <= opts.max_attempts; ++attempt) {
        llm::ChatOutcome outcome = llm::complete(backend, request, opts.retry);
        if (!outcome.is_text()) {
            call.failure = outcome.is_filtered() ? "content filtered" : outcome.payload;
            continue;
        }
        call.mark1 = parse_mark(outcome.payload, pairwise ? "Assistant-1" : "Assistant");
        call.mark2 = pairwise ? parse_mark(outcome.payload, "Assistant-2")
                              : std::optional<double>(0.0);
        if (call.mark1.has_value() && call.mark2.has_value()) {
            call.rationale = parse_rationale(outcome.payload);
            call.ok = true;
            return call;
        }
        call.failure = "unparseable judge response";
    }
    if (call.failure.empty()) {
        call.failure = "no judge attempts succeeded";
    }
    return call;
}

}  // namespace detail

/// Judges one predicted/ground-truth segment pair on one criterion. In
/// pairwise mode the two segments are shown together as anonymous
/// assistants, the PD slot drawn from the seed; in two-prompt mode each
/// segment is marked independently. Unparseable responses are retried up to
/// the attempt budget, then the segment is recorded unscored with a reason.
/// Callers pair context-dependent criteria with W > 1 and context-free ones
/// with W = 1; the prompt simply renders whatever window it is given.
inline SegmentScore judge_pair(const Segment& pd, const Segment& gt,
                               const ContextWindow& ctx, Criterion criterion,
                               llm::ChatBackend& backend, std::uint64_t seed,
                               const JudgeOptions& opts = {},
                               std::vector<std::string>* prompt_audit = nullptr) {
    SegmentScore score;
    score.segment_index = pd.index;
    score.criterion = criterion;
    score.partial = pd.partial || gt.partial;

    if (opts.pairwise) {
        const bool pd_first = SeededRng(seed).coin();
        score.pd_slot = pd_first ? 1 : 2;
        std::string prompt_text = build_judge_prompt(pd_first ? pd : gt,
                                                     pd_first ? gt : pd, ctx, criterion);
        if (prompt_audit != nullptr) {
            prompt_audit->push_back(prompt_text);
        }
        detail::JudgeCall call = detail::run_judge(backend, prompt_text, true, opts);
        if (!call.ok) {
            score.unscored_reason = call.failure;
            return score;
        }
        score.raw_pd = pd_first ? *call.mark1 : *call.mark2;
        score.raw_gt = pd_first ? *call.mark2 : *call.mark1;
        score.rationale = call.rationale;
    } else {
        score.pd_slot = 0;
        std::string pd_prompt = build_single_judge_prompt(pd, ctx, criterion);
        std::string gt_prompt = build_single_judge_prompt(gt, ctx, criterion);
        if (prompt_audit != nullptr) {
            prompt_audit->push_back(pd_prompt);
            prompt_audit->push_back(gt_prompt);
        }
        detail::JudgeCall pd_call = detail::run_judge(backend, pd_prompt, false, opts);
        detail::JudgeCall gt_call = detail::run_judge(backend, gt_prompt, false, opts);
        if (!pd_call.ok || !gt_call.ok) {
            score.unscored_reason = !pd_call.ok ? pd_call.failure : gt_call.failure;
            return score;
        }
        score.raw_pd = *pd_call.mark1;
        score.raw_gt = *gt_call.mark1;
        score.rationale = pd_call.rationale;
    }

    if (score.raw_gt > 0.0) {
        score.r = score.raw_pd / score.raw_gt;
        score.scored = true;
    } else {
        score.unscored_reason = "ground-truth raw mark is 0";
    }
    return score;
}

struct CriterionAggregate {
    double mean_r = 0.0;                  // over every scored segment, repeats pooled
    std::vector<double> per_repeat_mean;  // one entry per repeat
    double stddev = 0.0;                  // across per-repeat means (population)
    std::size_t scored = 0;
    std::size_t unscored = 0;
};

struct EvalOptions {
    JudgeOptions judge{};
    bool include_partial = true;
    bool keep_prompts = false;  // record every judged prompt in the report
};

struct EvalReport {
    std::map<Criterion, CriterionAggregate> criteria;
    std::vector<SegmentScore> scores;
    std::vector<std::string> prompts;

    json to_json() const {
        json doc;
        json crit = json::object();
        for (const auto& [criterion, agg] : criteria) {
            crit[to_string(criterion)] = json{{"mean_r", agg.mean_r},
                                              {"per_repeat_mean", agg.per_repeat_mean},
                                              {"stddev", agg.stddev},
                                              {"scored", agg.scored},
                                              {"unscored", agg.unscored}};
        }
        doc["criteria"] = crit;
        json rows = json::array();
        for (const SegmentScore& score : scores) {
            json row{{"segment_index", score.segment_index},
                     {"criterion", to_string(score.criterion)},
                     {"repeat", score.repeat},
                     {"raw_pd", score.raw_pd},
                     {"raw_gt", score.raw_gt},
                     {"pd_slot", score.pd_slot},
                     {"scored", score.scored},
                     {"partial", score.partial},
                     {"rationale", score.rationale}};
            if (score.r.has_value()) {
                row["r"] = *score.r;
            }
            if (!score.unscored_reason.empty()) {
                row["unscored_reason"] = score.unscored_reason;
            }
            rows.push_back(std::move(row));
        }
        doc["scores"] = rows;
        if (!prompts.empty()) {
            doc["prompts"] = prompts;
        }
        return doc;
    }
};

/// Full evaluation: segments both AD sequences, pairs them by index, and
/// judges every (segment, criterion, repeat) combination. Context-dependent
/// criteria demand W > 1 and context-free ones W = 1; predicted segments
/// never enter a context window.
inline EvalReport evaluate(std::span<const memory::ADRecord> pd_ads,
                           std::span<const memory::ADRecord> gt_ads,
                           std::size_t segment_size, std::size_t window,
                           const std::vector<Criterion>& criteria,
                           llm::ChatBackend& backend, std::uint64_t seed,
                           int repeats, const EvalOptions& opts = {}) {
    if (repeats < 1) {
        throw SegevalError("repeats must be at least 1");
    }
    for (Criterion criterion : criteria) {
        if (needs_context(criterion) && window == 1) {
            throw SegevalError(to_string(criterion) +
                               " is sequence-level and requires W > 1");
        }
        if (!needs_context(criterion) && window != 1) {
            throw SegevalError(to_string(criterion) +
                               " is text-level and requires W = 1");
        }
    }
    std::vector<Segment> pd_segments =
        make_segments(pd_ads, segment_size, SegmentSource::predicted);
    std::vector<Segment> gt_segments =
        make_segments(gt_ads, segment_size, SegmentSource::ground_truth);
    if (pd_segments.size() != gt_segments.size()) {
        throw SegevalError("segment count mismatch: " +
                           std::to_string(pd_segments.size()) + " predicted vs " +
                           std::to_string(gt_segments.size()) + " ground-truth");
    }

    EvalReport report;
    for (Criterion criterion : criteria) {
        CriterionAggregate agg;
        double sum_all = 0.0;
        for (int repeat = 0; repeat < repeats; ++repeat) {
            double repeat_sum = 0.0;
            std::size_t repeat_scored = 0;
            for (std::size_t idx = 0; idx < pd_segments.size(); ++idx) {
                if (!opts.include_partial &&
                    (pd_segments[idx].partial || gt_segments[idx].partial)) {
                    continue;
                }
                ContextWindow ctx = build_context(gt_segments, idx, window);
                std::uint64_t sub_seed =
                    fnv1a64(std::to_string(seed) + ":" + std::to_string(repeat) + ":" +
                            to_string(criterion) + ":" + std::to_string(idx));
                SegmentScore score = judge_pair(
                    pd_segments[idx], gt_segments[idx], ctx, criterion, backend,
                    sub_seed, opts.judge,
                    opts.keep_prompts ? &report.prompts : nullptr);
                score.repeat = repeat;
                if (score.scored) {
                    ++agg.scored;
                    ++repeat_scored;
                    sum_all += *score.r;
                    repeat_sum += *score.r;
                } else {
                    ++agg.unscored;
                }
                report.scores.push_back(std::move(score));
            }
            agg.per_repeat_mean.push_back(
                repeat_scored > 0 ? repeat_sum / static_cast<double>(repeat_scored)
                                  : 0.0);
        }
        agg.mean_r = agg.scored > 0 ? sum_all / static_cast<double>(agg.scored) : 0.0;
        double mean_of_means = 0.0;
        for (double m : agg.per_repeat_mean) {
            mean_of_means += m;
        }
        mean_of_means /= static_cast<double>(agg.per_repeat_mean.size());
        double variance = 0.0;
        for (double m : agg.per_repeat_mean) {
            variance += (m - mean_of_means) * (m - mean_of_means);
        }
        variance /= static_cast<double>(agg.per_repeat_mean.size());
        agg.stddev = std::sqrt(variance);
        report.criteria[criterion] = agg;
    }
    return report;
}

}  // namespace adkit::segeval
