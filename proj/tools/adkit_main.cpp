// adkit command line: recurrent AD narration, segment-based LLM-judge
// evaluation, and reference-based scoring over AD JSONL files.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include <adkit/http_adapters.hpp>
#include <adkit/icl.hpp>
#include <adkit/jsonl.hpp>
#include <adkit/llm_gateway.hpp>
#include <adkit/memory.hpp>
#include <adkit/metrics.hpp>
#include <adkit/narrator.hpp>
#include <adkit/perception.hpp>
#include <adkit/promptgen.hpp>
#include <adkit/segeval.hpp>

namespace fs = std::filesystem;
using adkit::json;

namespace {

// Chat backend selected from flags: strict replay wins, then the live
// endpoint from the environment; --record wraps either and flushes the
// store on shutdown.
class BackendHolder {
public:
    BackendHolder(const std::string& replay_path, const std::string& record_path)
        : record_path_(record_path) {
        if (!replay_path.empty()) {
            replay_ = std::make_unique<adkit::llm::ReplayBackend>(
                adkit::llm::ReplayStore::load(replay_path));
            active_ = replay_.get();
        } else if (const char* endpoint = std::getenv("ADKIT_LLM_ENDPOINT")) {
            adkit::llm::HttpChatBackend::Settings settings;
            settings.host = endpoint;
            http_ = std::make_unique<adkit::llm::HttpChatBackend>(settings);
            active_ = http_.get();
        } else {
            throw std::runtime_error(
                "no chat backend: pass --replay STORE or set ADKIT_LLM_ENDPOINT");
        }
        if (!record_path_.empty()) {
            recording_ = std::make_unique<adkit::llm::RecordingBackend>(
                *active_, record_store_);
            active_ = recording_.get();
        }
    }

    ~BackendHolder() {
        if (!record_path_.empty()) {
            try {
                record_store_.save(record_path_);
            } catch (const std::exception& e) {
                std::cerr << "warning: could not save record store: " << e.what()
                          << "\n";
            }
        }
    }

    adkit::llm::ChatBackend& backend() { return *active_; }

private:
    std::string record_path_;
    adkit::llm::ReplayStore record_store_;
    std::unique_ptr<adkit::llm::ReplayBackend> replay_;
    std::unique_ptr<adkit::llm::HttpChatBackend> http_;
    std::unique_ptr<adkit::llm::RecordingBackend> recording_;
    adkit::llm::ChatBackend* active_ = nullptr;
};

fs::path resolve_relative(const fs::path& base_dir, const std::string& value) {
    fs::path p(value);
    return p.is_absolute() ? p : base_dir / p;
}

struct NarrateArgs {
    std::string manifest;
    std::string config;
    std::string strategy;
    std::optional<std::size_t> shots;
    std::optional<std::uint64_t> seed;
    std::string replay;
    std::string record;
    std::string pool;
    std::string char_bank;
    std::string resume;
    std::string checkpoint;
    std::string out;
    std::string template_file;
};

int run_narrate(const NarrateArgs& args) {
    json config_doc = json::parse(adkit::read_text_file(args.config));
    adkit::narrate::NarratorConfig config =
        adkit::narrate::config_from_json(config_doc);
    if (!args.strategy.empty()) {
        config.strategy = adkit::narrate::strategy_from_string(args.strategy);
    }
    if (args.shots.has_value()) {
        config.shots = *args.shots;
    }
    if (args.seed.has_value()) {
        config.seed = *args.seed;
    }

    const fs::path config_dir = fs::path(args.config).parent_path();

    std::unique_ptr<adkit::perception::ExpertAdapters> experts;
    std::unique_ptr<adkit::narrate::FallbackCaptioner> fallback;
    std::vector<adkit::perception::SubtitleLine> subtitles;
    if (config_doc.contains("fixtures")) {
        const json& fixtures = config_doc.at("fixtures");
        adkit::perception::FixturePaths paths;
        paths.embeddings_bin =
            resolve_relative(config_dir, fixtures.at("embeddings_bin"));
        paths.embeddings_sidecar =
            resolve_relative(config_dir, fixtures.at("embeddings_sidecar"));
        paths.captions = resolve_relative(config_dir, fixtures.at("captions"));
        paths.detections = resolve_relative(config_dir, fixtures.at("detections"));
        experts = std::make_unique<adkit::perception::FixtureExperts>(
            adkit::perception::FixtureExperts::load(paths));
        if (fixtures.contains("subtitles")) {
            subtitles = adkit::perception::load_subtitles(
                resolve_relative(config_dir, fixtures.at("subtitles")));
        }
        if (fixtures.contains("fallback_captions")) {
            fallback = std::make_unique<adkit::narrate::FixtureFallbackCaptioner>(
                adkit::narrate::FixtureFallbackCaptioner::load(
                    resolve_relative(config_dir, fixtures.at("fallback_captions"))));
        }
    } else if (config_doc.contains("experts_endpoint")) {
        experts = std::make_unique<adkit::perception::HttpExperts>(
            config_doc.at("experts_endpoint").get<std::string>());
    } else {
        throw std::runtime_error(
            "config needs a fixtures block or an experts_endpoint");
    }

    BackendHolder llm(args.replay, args.record);
    adkit::prompt::LlmNameExtractor ner(llm.backend(), config.retry);

    adkit::icl::DemonstrationPool pool;
    if (!args.pool.empty()) {
        pool = adkit::icl::load_pool(args.pool);
    }
    adkit::prompt::PromptTemplate tpl;
    if (!args.template_file.empty()) {
        tpl = adkit::prompt::PromptTemplate::load(args.template_file);
    }

    adkit::narrate::NarrationBackends backends;
    backends.llm = &llm.backend();
    backends.experts = experts.get();
    backends.ner = &ner;
    backends.fallback = fallback.get();
    backends.pool = args.pool.empty() ? nullptr : &pool;

    adkit::narrate::Narrator narrator(config, backends, tpl, subtitles);
    adkit::narrate::NarrateRunOptions run;
    if (!args.char_bank.empty()) {
        run.character_bank = adkit::narrate::load_character_bank(args.char_bank);
    }
    run.output_path = args.out;
    run.checkpoint_path = args.checkpoint;
    run.resume_from = args.resume;

    adkit::perception::MovieManifest movie =
        adkit::perception::load_manifest(args.manifest);
    std::vector<adkit::memory::ADRecord> outputs = narrator.narrate_video(movie, run);
    if (args.out.empty()) {
        for (const adkit::memory::ADRecord& ad : outputs) {
            std::cout << json(ad).dump() << "\n";
        }
    } else {
        std::cerr << "wrote " << outputs.size() << " ADs to " << args.out << "\n";
    }
    return 0;
}

struct SegevalArgs {
    std::string pd;
    std::string gt;
    std::size_t segment_size = 5;
    std::size_t window = 1;
    std::string criteria;
    int repeats = 3;
    std::uint64_t seed = 0;
    std::string replay;
    std::string record;
    std::string out;
    bool two_prompt = false;
    bool include_prompts = false;
    bool exclude_partial = false;
};

int run_segeval(const SegevalArgs& args) {
    std::vector<adkit::segeval::Criterion> criteria;
    std::string token;
    for (char c : args.criteria + ",") {
        if (c == ',') {
            if (!token.empty()) {
                criteria.push_back(adkit::segeval::criterion_from_string(token));
                token.clear();
            }
        } else {
            token += c;
        }
    }
    if (criteria.empty()) {
        throw std::runtime_error("--criteria requires at least one criterion");
    }

    std::vector<adkit::memory::ADRecord> pd = adkit::memory::load_ad_records(args.pd);
    std::vector<adkit::memory::ADRecord> gt = adkit::memory::load_ad_records(args.gt);

    BackendHolder llm(args.replay, args.record);
    adkit::segeval::EvalOptions opts;
    opts.judge.pairwise = !args.two_prompt;
    opts.keep_prompts = args.include_prompts;
    opts.include_partial = !args.exclude_partial;
    adkit::segeval::EvalReport report = adkit::segeval::evaluate(
        pd, gt, args.segment_size, args.window, criteria, llm.backend(), args.seed,
        args.repeats, opts);

    std::string rendered = report.to_json().dump(2) + "\n";
    if (args.out.empty()) {
        std::cout << rendered;
    } else {
        adkit::write_text_file(args.out, rendered);
        std::cerr << "wrote report to " << args.out << "\n";
    }
    return 0;
}

struct ScoreArgs {
    std::string pd;
    std::string gt;
    std::string metrics = "rouge_l,bleu_1,cider_d";
    std::string out;
};

int run_score(const ScoreArgs& args) {
    std::vector<adkit::memory::ADRecord> pd = adkit::memory::load_ad_records(args.pd);
    std::vector<adkit::memory::ADRecord> gt = adkit::memory::load_ad_records(args.gt);
    if (pd.size() != gt.size()) {
        throw std::runtime_error("pd and gt must have the same number of records");
    }

    adkit::metrics::ScoredCorpus corpus;
    for (std::size_t i = 0; i < pd.size(); ++i) {
        corpus.pairs.push_back({pd[i].text, {gt[i].text}});
    }

    json results = json::object();
    std::string token;
    for (char c : args.metrics + ",") {
        if (c != ',') {
            token += c;
            continue;
        }
        if (token.empty()) {
            continue;
        }
        if (token == "rouge_l" || token == "bleu_1") {
            double total = 0.0;
            for (const auto& pair : corpus.pairs) {
                total += token == "rouge_l"
                             ? adkit::metrics::rouge_l(pair.candidate, pair.references)
                             : adkit::metrics::bleu_1(pair.candidate, pair.references);
            }
            results[token] =
                corpus.pairs.empty() ? 0.0 : total / static_cast<double>(corpus.pairs.size());
        } else if (token == "cider_d") {
            adkit::metrics::CiderResult cider = adkit::metrics::cider_d(corpus);
            results["cider_d"] = cider.mean;
            if (cider.degenerate_idf) {
                results["cider_d_degenerate_idf"] = true;
            }
        } else if (token.rfind("recall@", 0) == 0) {
            std::string spec = token.substr(std::string("recall@").size());
            std::size_t slash = spec.find('/');
            if (slash == std::string::npos) {
                throw std::runtime_error("recall metric must look like recall@5/16");
            }
            adkit::metrics::NeighbourRecallConfig cfg;
            cfg.k = std::stoul(spec.substr(0, slash));
            cfg.n = std::stoul(spec.substr(slash + 1));
            adkit::metrics::NeighbourRecallResult recall =
                adkit::metrics::recall_at_k_within_n(pd, gt, cfg);
            results[token] = recall.value;
            if (recall.truncated) {
                results[token + "_truncated"] = true;
            }
        } else {
            throw std::runtime_error("unknown metric '" + token + "'");
        }
        token.clear();
    }

    std::string rendered = results.dump(2) + "\n";
    if (args.out.empty()) {
        std::cout << rendered;
    } else {
        adkit::write_text_file(args.out, rendered);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Recurrent audio-description narration and evaluation toolkit"};
    app.require_subcommand(1);

    NarrateArgs narrate_args;
    CLI::App* narrate = app.add_subcommand("narrate", "Narrate a movie manifest");
    narrate->add_option("--manifest", narrate_args.manifest, "Movie manifest JSON")
        ->required();
    narrate->add_option("--config", narrate_args.config, "Narrator config JSON")
        ->required();
    narrate->add_option("--strategy", narrate_args.strategy,
                        "zero|random|similar|complexity");
    std::size_t shots_value = 0;
    CLI::Option* shots_opt =
        narrate->add_option("--shots", shots_value, "Demonstrations per prompt");
    std::uint64_t seed_value = 0;
    CLI::Option* seed_opt = narrate->add_option("--seed", seed_value, "Sampling seed");
    narrate->add_option("--replay", narrate_args.replay, "Replay store (strict)");
    narrate->add_option("--record", narrate_args.record, "Record store to write");
    narrate->add_option("--pool", narrate_args.pool, "Demonstration pool file");
    narrate->add_option("--char-bank", narrate_args.char_bank,
                        "External character bank JSON");
    narrate->add_option("--resume", narrate_args.resume, "Checkpoint to resume from");
    narrate->add_option("--checkpoint", narrate_args.checkpoint,
                        "Checkpoint path to write");
    narrate->add_option("--out", narrate_args.out, "Output AD JSONL");
    narrate->add_option("--template", narrate_args.template_file,
                        "Prompt template overrides (JSON)");

    SegevalArgs segeval_args;
    CLI::App* segeval =
        app.add_subcommand("eval-segeval", "Segment-based LLM-judge evaluation");
    segeval->add_option("--pd", segeval_args.pd, "Predicted AD JSONL")->required();
    segeval->add_option("--gt", segeval_args.gt, "Ground-truth AD JSONL")->required();
    segeval->add_option("-L,--segment-size", segeval_args.segment_size,
                        "ADs per segment");
    segeval->add_option("-W,--window", segeval_args.window,
                        "Oracle context window length (odd)");
    segeval->add_option("--criteria", segeval_args.criteria,
                        "Comma-separated criteria")
        ->required();
    segeval->add_option("--repeats", segeval_args.repeats, "Repeated evaluations");
    segeval->add_option("--seed", segeval_args.seed, "Assignment seed");
    segeval->add_option("--replay", segeval_args.replay, "Replay store (strict)");
    segeval->add_option("--record", segeval_args.record, "Record store to write");
    segeval->add_option("--out", segeval_args.out, "Report JSON path");
    segeval->add_flag("--two-prompt", segeval_args.two_prompt,
                      "Judge PD and GT in separate prompts");
    segeval->add_flag("--include-prompts", segeval_args.include_prompts,
                      "Record judged prompts in the report");
    segeval->add_flag("--exclude-partial", segeval_args.exclude_partial,
                      "Skip trailing partial segments");

    ScoreArgs score_args;
    CLI::App* score =
        app.add_subcommand("score", "Reference-based captioning metrics");
    score->add_option("--pd", score_args.pd, "Predicted AD JSONL")->required();
    score->add_option("--gt", score_args.gt, "Ground-truth AD JSONL")->required();
    score->add_option("--metrics", score_args.metrics,
                      "e.g. rouge_l,bleu_1,cider_d,recall@5/16");
    score->add_option("--out", score_args.out, "Results JSON path");

    std::string records_path, pool_out;
    CLI::App* build_pool =
        app.add_subcommand("build-pool", "Build a demonstration pool");
    build_pool->add_option("--records", records_path, "Training records JSONL")
        ->required();
    build_pool->add_option("--out", pool_out, "Pool file to write")->required();

    std::string annotate_in, annotate_out, annotate_replay, annotate_record;
    int annotate_max_output = 512;
    CLI::App* annotate =
        app.add_subcommand("annotate-cot", "Annotate a pool with reasoning");
    annotate->add_option("--pool", annotate_in, "Pool file to annotate")->required();
    annotate->add_option("--out", annotate_out, "Annotated pool path")->required();
    annotate->add_option("--replay", annotate_replay, "Replay store (strict)");
    annotate->add_option("--record", annotate_record, "Record store to write");
    annotate->add_option("--max-output", annotate_max_output,
                         "Reasoning token budget");

    CLI11_PARSE(app, argc, argv);

    try {
        if (narrate->parsed()) {
            if (*shots_opt) {
                narrate_args.shots = shots_value;
            }
            if (*seed_opt) {
                narrate_args.seed = seed_value;
            }
            return run_narrate(narrate_args);
        }
        if (segeval->parsed()) {
            return run_segeval(segeval_args);
        }
        if (score->parsed()) {
            return run_score(score_args);
        }
        if (build_pool->parsed()) {
            adkit::icl::DemonstrationPool pool = adkit::icl::build_pool(
                adkit::icl::load_training_records(records_path));
            adkit::icl::save_pool(pool, pool_out);
            std::cerr << "wrote pool of " << pool.demos.size() << " demos to "
                      << pool_out << "\n";
            return 0;
        }
        if (annotate->parsed()) {
            adkit::icl::DemonstrationPool pool = adkit::icl::load_pool(annotate_in);
            BackendHolder llm(annotate_replay, annotate_record);
            adkit::icl::AnnotateSummary summary = adkit::icl::annotate_cot(
                pool, llm.backend(), {}, annotate_max_output);
            adkit::icl::save_pool(pool, annotate_out);
            std::cerr << "annotated " << summary.annotated << ", already "
                      << summary.already << ", failed " << summary.failed << "\n";
            return summary.failed == 0 ? 0 : 2;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
