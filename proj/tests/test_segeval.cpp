#include <adkit/segeval.hpp>

#include <catch2/catch_amalgamated.hpp>

#include "support/fixtures.hpp"

using namespace adkit;
using namespace adkit::segeval;
using adkit::testfix::ScriptedJudgeBackend;

namespace {

std::vector<memory::ADRecord> make_ads(int count, const std::string& prefix,
                                       memory::AdSource source) {
    std::vector<memory::ADRecord> ads;
    for (int i = 0; i < count; ++i) {
        memory::ADRecord ad;
        ad.clip_id = "c" + std::to_string(i);
        ad.t_start = 10.0 * i;
        ad.t_end = 10.0 * i + 5.0;
        ad.text = prefix + " " + std::to_string(i);
        ad.source = source;
        ads.push_back(std::move(ad));
    }
    return ads;
}

Segment make_segment(int count, const std::string& prefix, SegmentSource source,
                     std::size_t index = 0) {
    Segment seg;
    seg.index = index;
    seg.source = source;
    auto ads = make_ads(count, prefix,
                        source == SegmentSource::predicted
                            ? memory::AdSource::llm
                            : memory::AdSource::ground_truth);
    seg.ads.assign(ads.begin(), ads.end());
    return seg;
}

}  // namespace

TEST_CASE("make_segments chunks with a flagged partial tail") {
    auto ads = make_ads(12, "GT", memory::AdSource::ground_truth);
    auto segments = make_segments(ads, 5, SegmentSource::ground_truth);
    REQUIRE(segments.size() == 3);
    CHECK(segments[0].ads.size() == 5);
    CHECK(segments[1].ads.size() == 5);
    CHECK(segments[2].ads.size() == 2);
    CHECK_FALSE(segments[0].partial);
    CHECK(segments[2].partial);
    CHECK(segments[1].index == 1);

    CHECK(make_segments(make_ads(5, "GT", memory::AdSource::ground_truth), 5,
                        SegmentSource::ground_truth)
              .size() == 1);
    CHECK(make_segments(std::vector<memory::ADRecord>{}, 5,
                        SegmentSource::ground_truth)
              .empty());
    CHECK_THROWS_AS(make_segments(ads, 0, SegmentSource::ground_truth),
                    SegevalError);
}

TEST_CASE("build_context gathers ground-truth neighbours") {
    auto gt_segments = make_segments(make_ads(60, "GT", memory::AdSource::ground_truth),
                                     5, SegmentSource::ground_truth);
    REQUIRE(gt_segments.size() == 12);

    SECTION("W=1 is the empty window") {
        ContextWindow ctx = build_context(gt_segments, 4, 1);
        CHECK(ctx.empty());
    }
    SECTION("boundary truncation at the start") {
        ContextWindow ctx = build_context(gt_segments, 0, 3);
        CHECK(ctx.past.empty());
        REQUIRE(ctx.future.size() == 1);
        CHECK(ctx.future[0].index == 1);
    }
    SECTION("W=11 in the middle takes five on each side") {
        ContextWindow ctx = build_context(gt_segments, 6, 11);
        REQUIRE(ctx.past.size() == 5);
        REQUIRE(ctx.future.size() == 5);
        CHECK(ctx.past.front().index == 1);
        CHECK(ctx.past.back().index == 5);
        CHECK(ctx.future.front().index == 7);
        CHECK(ctx.future.back().index == 11);
    }
    SECTION("even windows are a configuration error") {
        CHECK_THROWS_AS(build_context(gt_segments, 2, 4), SegevalError);
        CHECK_THROWS_AS(build_context(gt_segments, 2, 0), SegevalError);
    }
    SECTION("only ground-truth segments may enter") {
        auto tainted = gt_segments;
        tainted[5].source = SegmentSource::predicted;
        CHECK_THROWS_AS(build_context(tainted, 6, 3), SegevalError);
    }
}

TEST_CASE("judge_pair reproduces the documented rescaling") {
    Segment pd = make_segment(5, "PD_SEG", SegmentSource::predicted);
    Segment gt = make_segment(5, "GT_SEG", SegmentSource::ground_truth);
    ContextWindow empty_ctx;

    SECTION("marks 8 and 5 rescale to 1.6") {
        ScriptedJudgeBackend judge;
        judge.pd_mark = 8;
        judge.gt_mark = 5;
        SegmentScore score =
            judge_pair(pd, gt, empty_ctx, Criterion::originality, judge, 7);
        REQUIRE(score.scored);
        CHECK(score.raw_pd == 8.0);
        CHECK(score.raw_gt == 5.0);
        CHECK(*score.r == Catch::Approx(1.6));
        CHECK((score.pd_slot == 1 || score.pd_slot == 2));
    }
    SECTION("marks 9 and 4 rescale to 2.25") {
        ScriptedJudgeBackend judge;
        judge.pd_mark = 9;
        judge.gt_mark = 4;
        SegmentScore score =
            judge_pair(pd, gt, empty_ctx, Criterion::consistency, judge, 3);
        REQUIRE(score.scored);
        CHECK(*score.r == Catch::Approx(2.25));
    }
    SECTION("a zero ground-truth mark leaves the segment unscored") {
        ScriptedJudgeBackend judge;
        judge.pd_mark = 6;
        judge.gt_mark = 0;
        SegmentScore score =
            judge_pair(pd, gt, empty_ctx, Criterion::originality, judge, 3);
        CHECK_FALSE(score.scored);
        CHECK_FALSE(score.r.has_value());
        CHECK(score.raw_pd == 6.0);
        CHECK(score.raw_gt == 0.0);
        CHECK(score.unscored_reason.find("0") != std::string::npos);
    }
    SECTION("unparseable responses are retried then recorded unscored") {
        ScriptedJudgeBackend judge;
        judge.garble = true;
        JudgeOptions opts;
        opts.max_attempts = 3;
        SegmentScore score =
            judge_pair(pd, gt, empty_ctx, Criterion::originality, judge, 3, opts);
        CHECK_FALSE(score.scored);
        CHECK(score.unscored_reason.find("unparseable") != std::string::npos);
        CHECK(judge.calls == 3);
    }
    SECTION("assignment is deterministic per seed and varies across seeds") {
        ScriptedJudgeBackend judge;
        SegmentScore a = judge_pair(pd, gt, empty_ctx, Criterion::originality,
                                    judge, 1234);
        SegmentScore b = judge_pair(pd, gt, empty_ctx, Criterion::originality,
                                    judge, 1234);
        CHECK(a.pd_slot == b.pd_slot);
        bool saw_slot1 = false, saw_slot2 = false;
        for (std::uint64_t seed = 0; seed < 64; ++seed) {
            SegmentScore s = judge_pair(pd, gt, empty_ctx, Criterion::originality,
                                        judge, seed);
            (s.pd_slot == 1 ? saw_slot1 : saw_slot2) = true;
        }
        CHECK(saw_slot1);
        CHECK(saw_slot2);
    }
    SECTION("two-prompt mode marks the segments independently") {
        ScriptedJudgeBackend judge;
        judge.pd_mark = 9;
        judge.gt_mark = 6;
        JudgeOptions opts;
        opts.pairwise = false;
        SegmentScore score =
            judge_pair(pd, gt, empty_ctx, Criterion::originality, judge, 3, opts);
        REQUIRE(score.scored);
        CHECK(score.raw_pd == 9.0);
        CHECK(score.raw_gt == 6.0);
        CHECK(score.pd_slot == 0);
        CHECK(*score.r == Catch::Approx(1.5));
        CHECK(judge.calls == 2);
    }
}

TEST_CASE("judge prompts carry the schema and honor anonymity") {
    Segment pd = make_segment(2, "PD_SEG", SegmentSource::predicted);
    Segment gt = make_segment(2, "GT_SEG", SegmentSource::ground_truth);
    auto gt_segments = make_segments(make_ads(20, "CTX", memory::AdSource::ground_truth),
                                     5, SegmentSource::ground_truth);
    ContextWindow ctx = build_context(gt_segments, 2, 3);

    std::string prompt_text = build_judge_prompt(pd, gt, ctx, Criterion::coherence);
    CHECK(prompt_text.find("Criterion: coherence") != std::string::npos);
    CHECK(prompt_text.find("Assistant-1 segment:") != std::string::npos);
    CHECK(prompt_text.find("Assistant-2 segment:") != std::string::npos);
    CHECK(prompt_text.find("Assistant-1: <mark>/10") != std::string::npos);
    CHECK(prompt_text.find("Context (ground-truth ADs") != std::string::npos);
    // no source labels leak into the prompt
    CHECK(prompt_text.find("predicted") == std::string::npos);
    CHECK(prompt_text.find("ground_truth") == std::string::npos);

    ContextWindow empty_ctx;
    std::string bare = build_judge_prompt(pd, gt, empty_ctx, Criterion::originality);
    CHECK(bare.find("Context (") == std::string::npos);
}

TEST_CASE("evaluate aggregates per criterion and repeat") {
    auto pd = make_ads(12, "PD_SEG", memory::AdSource::llm);
    auto gt = make_ads(12, "GT_SEG", memory::AdSource::ground_truth);

    SECTION("equal marks give mean r of 1.0 and zero variance") {
        ScriptedJudgeBackend judge;
        judge.pd_mark = 7;
        judge.gt_mark = 7;
        EvalReport report = evaluate(pd, gt, 5, 1,
                                     {Criterion::originality, Criterion::consistency},
                                     judge, 9, 3);
        for (const auto& [criterion, agg] : report.criteria) {
            CHECK(agg.mean_r == Catch::Approx(1.0));
            CHECK(agg.stddev == 0.0);
            CHECK(agg.scored == 9);  // 3 segments x 3 repeats
            CHECK(agg.unscored == 0);
            REQUIRE(agg.per_repeat_mean.size() == 3);
        }
        CHECK(report.scores.size() == 18);
    }

    SECTION("deterministic replay makes repeated evaluations identical") {
        ScriptedJudgeBackend judge;
        llm::ReplayStore store;
        llm::RecordingBackend recorder(judge, store);
        EvalReport recorded = evaluate(pd, gt, 5, 3, {Criterion::coherence},
                                       recorder, 4, 3);
        llm::ReplayBackend replay{store};
        EvalReport replayed = evaluate(pd, gt, 5, 3, {Criterion::coherence},
                                       replay, 4, 3);
        CHECK(replayed.criteria.at(Criterion::coherence).stddev == 0.0);
        CHECK(replayed.criteria.at(Criterion::coherence).mean_r ==
              recorded.criteria.at(Criterion::coherence).mean_r);
    }

    SECTION("segment-count mismatch is a pairing error") {
        auto short_pd = make_ads(7, "PD_SEG", memory::AdSource::llm);
        ScriptedJudgeBackend judge;
        CHECK_THROWS_AS(
            evaluate(short_pd, gt, 5, 1, {Criterion::originality}, judge, 1, 1),
            SegevalError);
    }

    SECTION("criteria and window sizes must agree") {
        ScriptedJudgeBackend judge;
        CHECK_THROWS_AS(evaluate(pd, gt, 5, 1, {Criterion::coherence}, judge, 1, 1),
                        SegevalError);
        CHECK_THROWS_AS(
            evaluate(pd, gt, 5, 3, {Criterion::originality}, judge, 1, 1),
            SegevalError);
    }

    SECTION("partial segments can be excluded") {
        auto pd13 = make_ads(13, "PD_SEG", memory::AdSource::llm);
        auto gt13 = make_ads(13, "GT_SEG", memory::AdSource::ground_truth);
        ScriptedJudgeBackend judge;
        EvalOptions opts;
        opts.include_partial = false;
        EvalReport report = evaluate(pd13, gt13, 5, 1, {Criterion::originality},
                                     judge, 1, 1, opts);
        CHECK(report.scores.size() == 2);  // the trailing 3-AD segment is skipped
        for (const SegmentScore& score : report.scores) {
            CHECK_FALSE(score.partial);
        }
    }

    SECTION("prompts are auditable and never leak predicted context") {
        ScriptedJudgeBackend judge;
        EvalOptions opts;
        opts.keep_prompts = true;
        EvalReport report = evaluate(pd, gt, 5, 3, {Criterion::diversity}, judge,
                                     11, 2, opts);
        REQUIRE_FALSE(report.prompts.empty());
        for (const std::string& prompt_text : report.prompts) {
            std::size_t ctx_pos = prompt_text.find("Context (");
            if (ctx_pos == std::string::npos) {
                continue;
            }
            std::size_t ctx_end = prompt_text.find("Assistant-1 segment:");
            REQUIRE(ctx_end != std::string::npos);
            CHECK(prompt_text.substr(ctx_pos, ctx_end - ctx_pos).find("PD_SEG") ==
                  std::string::npos);
        }
    }
}

TEST_CASE("PD slot assignment is uniform over seeds") {
    Segment pd = make_segment(2, "PD_SEG", SegmentSource::predicted);
    Segment gt = make_segment(2, "GT_SEG", SegmentSource::ground_truth);
    ContextWindow empty_ctx;
    ScriptedJudgeBackend judge;
    int slot1 = 0;
    for (std::uint64_t seed = 0; seed < 1000; ++seed) {
        SegmentScore score =
            judge_pair(pd, gt, empty_ctx, Criterion::originality, judge, seed);
        if (score.pd_slot == 1) {
            ++slot1;
        }
    }
    CHECK(slot1 >= 450);
    CHECK(slot1 <= 550);
}

TEST_CASE("r is scale-free in the judge's mark range") {
    Segment pd = make_segment(3, "PD_SEG", SegmentSource::predicted);
    Segment gt = make_segment(3, "GT_SEG", SegmentSource::ground_truth);
    ContextWindow empty_ctx;
    ScriptedJudgeBackend small, doubled;
    small.pd_mark = 3;
    small.gt_mark = 4;
    doubled.pd_mark = 6;
    doubled.gt_mark = 8;
    SegmentScore s =
        judge_pair(pd, gt, empty_ctx, Criterion::originality, small, 17);
    SegmentScore d =
        judge_pair(pd, gt, empty_ctx, Criterion::originality, doubled, 17);
    REQUIRE(s.scored);
    REQUIRE(d.scored);
    CHECK(*s.r == *d.r);
}

TEST_CASE("evaluation reports serialize") {
    auto pd = make_ads(5, "PD_SEG", memory::AdSource::llm);
    auto gt = make_ads(5, "GT_SEG", memory::AdSource::ground_truth);
    ScriptedJudgeBackend judge;
    EvalReport report =
        evaluate(pd, gt, 5, 1, {Criterion::originality}, judge, 2, 1);
    json doc = report.to_json();
    CHECK(doc.at("criteria").contains("originality"));
    CHECK(doc.at("scores").size() == 1);
    CHECK(doc.at("scores")[0].contains("r"));
}
