#pragma once

#include <charconv>
#include <concepts>
#include <cstdio>
#include <optional>
#include <ranges>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <adkit/jsonl.hpp>
#include <adkit/llm_gateway.hpp>
#include <adkit/memory.hpp>

namespace adkit::prompt {

class PromptError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Locale-free seconds with one decimal ("417.2"). Golden prompts depend on
/// this never changing shape.
inline std::string format_seconds(double t) {
    char buffer[64];
    int written = std::snprintf(buffer, sizeof(buffer), "%.1f", t);
    if (written < 0 || written >= static_cast<int>(sizeof(buffer))) {
        throw PromptError("cannot format timestamp");
    }
    return std::string(buffer, static_cast<std::size_t>(written));
}

struct CaptionLine {
    std::size_t frame_index = 0;  // 1-based position in the sampled clip
    std::string caption;
    std::vector<std::string> recalled_names;  // from visual-memory recall
};

struct ContextAd {
    double timestamp = 0.0;
    std::string text;
};

struct QueryParts {
    std::vector<CaptionLine> captions;  // nonempty
    std::vector<ContextAd> context_ads;
    std::string dialogue;
};

/// Renders the text-formed multimodal clues into the query. Fixed section
/// order: recent context ADs, character dialogues, numbered frame captions.
/// Empty sections render "none"; recalled names are appended to their
/// caption with a hedged "(possibly ...)" suffix.
inline std::string build_query(const QueryParts& parts) {
    if (parts.captions.empty()) {
        throw PromptError("query requires at least one frame caption");
    }
    std::string query;
    query += "Recent context ADs:\n";
    if (parts.context_ads.empty()) {
        query += "none\n";
    } else {
        for (const ContextAd& ad : parts.context_ads) {
            query += "[" + format_seconds(ad.timestamp) + "s] " + ad.text + "\n";
        }
    }
    query += "Character dialogues:\n";
    if (parts.dialogue.empty()) {
        query += "none\n";
    } else {
        query += parts.dialogue + "\n";
    }
    query += "Frame captions:\n";
    for (const CaptionLine& line : parts.captions) {
        query += std::to_string(line.frame_index) + ". " + line.caption;
        if (!line.recalled_names.empty()) {
            query += " (possibly ";
            for (std::size_t i = 0; i < line.recalled_names.size(); ++i) {
                if (i > 0) {
                    query += ", ";
                }
                query += line.recalled_names[i];
            }
            query += ")";
        }
        query += "\n";
    }
    query.pop_back();  // no trailing newline; sections are joined by the prompt builder
    return query;
}

/// Task framing for the AD-generation prompt. The default wording is a
/// working reconstruction and every section can be overridden from a
/// template file; the hint line is the documented one.
struct PromptTemplate {
    std::string task_intro =
        "You are an audio description (AD) narrator for movies. Given multimodal "
        "clues for the current video clip, write one concise AD sentence that "
        "describes the key visual content. Use character names when they can be "
        "inferred, write in the third person and present tense, and do not repeat "
        "the recent context ADs.";
    std::string task_hint =
        "Hint: try to infer character names from subtitles for AD generation.";
    std::string icl_instructions =
        "Here are some examples. Each example contains a QUESTION with multimodal "
        "clues and its ANSWER; some examples also include the REASONING that "
        "derives the ANSWER from the QUESTION.";

    static PromptTemplate load(const std::filesystem::path& path) {
        json doc = json::parse(read_text_file(path));
        PromptTemplate tpl;
        tpl.task_intro = doc.value("task_intro", tpl.task_intro);
        tpl.task_hint = doc.value("task_hint", tpl.task_hint);
        tpl.icl_instructions = doc.value("icl_instructions", tpl.icl_instructions);
        return tpl;
    }
};

template <typename T>
concept DemonstrationLike = requires(const T& demo) {
    { demo.question } -> std::convertible_to<std::string>;
    { demo.answer } -> std::convertible_to<std::string>;
    { demo.reasoning.has_value() } -> std::convertible_to<bool>;
    { *demo.reasoning } -> std::convertible_to<std::string>;
};

/// Assembles the full AD-generation prompt: task introduction, optional
/// hint, ICL instructions plus QUESTION/[REASONING]/ANSWER blocks when
/// demonstrations are present, then the main query with an answer cue.
/// Byte-identical output for identical inputs. A positive char_budget is a
/// hard cap: exceeding it raises PromptError rather than truncating.
template <std::ranges::input_range Range>
    requires DemonstrationLike<std::ranges::range_value_t<Range>>
std::string build_prompt(const PromptTemplate& tpl, const Range& demos,
                         const std::string& main_query, bool use_cot,
                         std::size_t char_budget = 0) {
    if (tpl.task_intro.empty()) {
        throw PromptError("prompt template requires a task introduction");
    }
    std::string prompt = tpl.task_intro;
    if (!tpl.task_hint.empty()) {
        prompt += "\n\n" + tpl.task_hint;
    }
    bool any_demo = false;
    std::size_t demo_index = 0;
    for (const auto& demo : demos) {
        if (!any_demo) {
            if (tpl.icl_instructions.empty()) {
                throw PromptError("few-shot prompt requires ICL instructions");
            }
            prompt += "\n\n" + tpl.icl_instructions;
            any_demo = true;
        }
        ++demo_index;
        prompt += "\n\nExample " + std::to_string(demo_index) + ":\nQUESTION:\n";
        prompt += demo.question;
        if (use_cot) {
            if (!demo.reasoning.has_value()) {
                throw PromptError("use_cot requires reasoning on every demonstration "
                                  "(missing at example " + std::to_string(demo_index) + ")");
            }
            prompt += "\nREASONING:\n" + *demo.reasoning;
        }
        prompt += "\nANSWER:\n";
        prompt += demo.answer;
    }
    if (any_demo) {
        prompt += "\n\nNow answer the main query.";
    }
    prompt += "\n\nQUESTION:\n" + main_query + "\nANSWER:";
    if (char_budget > 0 && prompt.size() > char_budget) {
        throw PromptError("prompt of " + std::to_string(prompt.size()) +
                          " characters exceeds the budget of " +
                          std::to_string(char_budget));
    }
    return prompt;
}

/// Prompt for articulating the reasoning steps that connect a demonstration
/// question to its ground-truth answer. The constraint sentence keeps the
/// model filling in reasoning instead of predicting its own answer.
inline std::string build_cot_prompt(const std::string& question,
                                    const std::string& answer) {
    return "QUESTION:\n" + question + "\nANSWER:\n" + answer +
           "\nConstraint: lets fill-in the REASONING process which derives the "
           "ANSWER from QUESTION.\nREASONING:";
}

inline constexpr std::string_view kPersonNerPrefix =
    "Extract the people names in the following text as a string splitted by '|' "
    "(return 'none' if none of names are recognized): ";

namespace detail {
inline std::string trim(std::string_view s) {
    std::size_t begin = s.find_first_not_of(" \t\r\n");
    if (begin == std::string_view::npos) {
        return {};
    }
    std::size_t end = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(begin, end - begin + 1));
}

inline bool iequals(std::string_view a, std::string_view b) {
    if (a.size() != b.size()) {
        return false;
    }
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (std::tolower(static_cast<unsigned char>(a[i])) !=
            std::tolower(static_cast<unsigned char>(b[i]))) {
            return false;
        }
    }
    return true;
}
}  // namespace detail

/// Splits a Person-NER response on '|', trimming fields and dropping empty
/// ones. A response of "none" (any case) means no names.
inline std::vector<std::string> parse_person_names(std::string_view response) {
    std::string trimmed = detail::trim(response);
    if (trimmed.empty() || detail::iequals(trimmed, "none")) {
        return {};
    }
    std::vector<std::string> names;
    std::size_t start = 0;
    while (start <= trimmed.size()) {
        std::size_t sep = trimmed.find('|', start);
        std::string field = detail::trim(std::string_view(trimmed).substr(
            start, sep == std::string::npos ? std::string::npos : sep - start));
        if (!field.empty()) {
            names.push_back(std::move(field));
        }
        if (sep == std::string::npos) {
            break;
        }
        start = sep + 1;
    }
    return names;
}

/// Queries the backend with the Person-NER prefix and parses the response.
/// Non-text outcomes (filtered or transport failure) propagate as
/// PromptError; register_frames downgrades that to empty names.
inline std::vector<std::string> extract_person_names(
    const std::string& text, llm::ChatBackend& backend,
    const llm::RetryPolicy& retry = {}, int max_output = 64) {
    llm::ChatRequest request;
    request.prompt = std::string(kPersonNerPrefix) + text;
    request.temperature = 0.0;
    request.max_output = max_output;
    request.tag = llm::RequestTag::ner;
    llm::ChatOutcome outcome = llm::complete(backend, request, retry);
    if (!outcome.is_text()) {
        throw PromptError("person-NER request failed: " +
                          (outcome.is_filtered() ? std::string("content filtered")
                                                 : outcome.payload));
    }
    return parse_person_names(outcome.payload);
}

/// NameExtractor backed by the chat gateway, used by the visual bank at
/// registration time.
class LlmNameExtractor : public memory::NameExtractor {
public:
    explicit LlmNameExtractor(llm::ChatBackend& backend,
                              llm::RetryPolicy retry = {})
        : backend_(backend), retry_(retry) {}

    std::vector<std::string> extract(const std::string& text) override {
        return extract_person_names(text, backend_, retry_);
    }

private:
    llm::ChatBackend& backend_;
    llm::RetryPolicy retry_;
};

}  // namespace adkit::prompt
