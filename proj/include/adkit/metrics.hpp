#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <adkit/memory.hpp>

namespace adkit::metrics {

class MetricsError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// The one tokenizer shared by every metric, pinned for reproducibility:
/// the text is ASCII-lowercased and tokens are the maximal runs of
/// alphanumeric characters; everything else separates.
inline std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> tokens;
    std::string current;
    for (char c : text) {
        unsigned char uc = static_cast<unsigned char>(c);
        if (std::isalnum(uc)) {
            current += static_cast<char>(std::tolower(uc));
        } else if (!current.empty()) {
            tokens.push_back(std::move(current));
            current.clear();
        }
    }
    if (!current.empty()) {
        tokens.push_back(std::move(current));
    }
    return tokens;
}

namespace detail {

inline std::size_t lcs_length(const std::vector<std::string>& a,
                              const std::vector<std::string>& b) {
    if (a.empty() || b.empty()) {
        return 0;
    }
    std::vector<std::size_t> prev(b.size() + 1, 0), curr(b.size() + 1, 0);
    for (std::size_t i = 1; i <= a.size(); ++i) {
        for (std::size_t j = 1; j <= b.size(); ++j) {
            if (a[i - 1] == b[j - 1]) {
                curr[j] = prev[j - 1] + 1;
            } else {
                curr[j] = std::max(prev[j], curr[j - 1]);
            }
        }
        std::swap(prev, curr);
    }
    return prev[b.size()];
}

inline std::map<std::string, std::size_t> unigram_counts(
    const std::vector<std::string>& tokens) {
    std::map<std::string, std::size_t> counts;
    for (const std::string& token : tokens) {
        ++counts[token];
    }
    return counts;
}

}  // namespace detail

/// ROUGE-L F-measure with beta = 1.2: LCS precision and recall are each
/// maximized over the references before combining. 1.0 for an exact match,
/// 0.0 when no common subsequence exists or the candidate is empty.
inline double rouge_l(const std::string& candidate,
                      const std::vector<std::string>& references) {
    if (references.empty()) {
        throw MetricsError("rouge_l requires at least one reference");
    }
    const std::vector<std::string> cand = tokenize(candidate);
    if (cand.empty()) {
        return 0.0;
    }
    constexpr double beta = 1.2;
    double best_precision = 0.0, best_recall = 0.0;
    for (const std::string& reference : references) {
        const std::vector<std::string> ref = tokenize(reference);
        if (ref.empty()) {
            continue;
        }
        double lcs = static_cast<double>(detail::lcs_length(ref, cand));
        best_precision = std::max(best_precision, lcs / static_cast<double>(cand.size()));
        best_recall = std::max(best_recall, lcs / static_cast<double>(ref.size()));
    }
    if (best_precision == 0.0 || best_recall == 0.0) {
        return 0.0;
    }
    return ((1.0 + beta * beta) * best_precision * best_recall) /
           (best_recall + beta * beta * best_precision);
}

/// BLEU-1: clipped unigram precision times the brevity penalty. The
/// effective reference length is the one closest to the candidate length,
/// ties to the shorter reference.
inline double bleu_1(const std::string& candidate,
                     const std::vector<std::string>& references) {
    if (references.empty()) {
        throw MetricsError("bleu_1 requires at least one reference");
    }
    const std::vector<std::string> cand = tokenize(candidate);
    if (cand.empty()) {
        return 0.0;
    }
    std::map<std::string, std::size_t> max_ref_counts;
    std::size_t best_ref_len = 0;
    std::size_t best_distance = std::numeric_limits<std::size_t>::max();
    for (const std::string& reference : references) {
        const std::vector<std::string> ref = tokenize(reference);
        for (const auto& [token, count] : detail::unigram_counts(ref)) {
            max_ref_counts[token] = std::max(max_ref_counts[token], count);
        }
        std::size_t distance = ref.size() > cand.size() ? ref.size() - cand.size()
                                                        : cand.size() - ref.size();
        if (distance < best_distance ||
            (distance == best_distance && ref.size() < best_ref_len)) {
            best_distance = distance;
            best_ref_len = ref.size();
        }
    }
    std::size_t clipped = 0;
    for (const auto& [token, count] : detail::unigram_counts(cand)) {
        auto it = max_ref_counts.find(token);
        if (it != max_ref_counts.end()) {
            clipped += std::min(count, it->second);
        }
    }
    double precision = static_cast<double>(clipped) / static_cast<double>(cand.size());
    double brevity = 1.0;
    if (cand.size() < best_ref_len) {
        brevity = std::exp(1.0 - static_cast<double>(best_ref_len) /
                                     static_cast<double>(cand.size()));
    }
    return brevity * precision;
}

struct ScoredPair {
    std::string candidate;
    std::vector<std::string> references;  // nonempty
};

struct ScoredCorpus {
    std::vector<ScoredPair> pairs;
};

struct CiderResult {
    std::vector<double> per_pair;
    double mean = 0.0;
    bool degenerate_idf = false;  // corpus smaller than 2 pairs
};

/// CIDEr-D over n-grams 1..4 with corpus-level IDF, reference-clipped
/// TF-IDF cosine per n, a Gaussian length penalty (sigma = 6) and the
/// conventional x10 scaling, matching the published reference scorer.
inline CiderResult cider_d(const ScoredCorpus& corpus) {
    constexpr std::size_t kMaxN = 4;
    constexpr double kSigma = 6.0;
    using NgramCounts = std::map<std::string, double>;

    if (corpus.pairs.empty()) {
        throw MetricsError("cider_d requires a nonempty corpus");
    }
    for (const ScoredPair& pair : corpus.pairs) {
        if (pair.references.empty()) {
            throw MetricsError("cider_d requires references for every candidate");
        }
    }

    auto ngram_counts = [](const std::vector<std::string>& tokens) {
        std::array<NgramCounts, kMaxN> counts;
        for (std::size_t n = 1; n <= kMaxN; ++n) {
            if (tokens.size() < n) {
                break;
            }
            for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
                std::string key;
                for (std::size_t j = 0; j < n; ++j) {
                    if (j > 0) {
                        key += '\x1f';
                    }
                    key += tokens[i + j];
                }
                counts[n - 1][key] += 1.0;
            }
        }
        return counts;
    };

    // Document frequency: one count per pair in which the n-gram appears in
    // any reference.
    std::array<NgramCounts, kMaxN> document_frequency;
    std::vector<std::array<NgramCounts, kMaxN>> ref_counts_per_pair;
    std::vector<std::array<NgramCounts, kMaxN>> cand_counts_per_pair;
    ref_counts_per_pair.reserve(corpus.pairs.size());
    for (const ScoredPair& pair : corpus.pairs) {
        cand_counts_per_pair.push_back(ngram_counts(tokenize(pair.candidate)));
        std::array<NgramCounts, kMaxN> merged;
        for (const std::string& reference : pair.references) {
            auto counts = ngram_counts(tokenize(reference));
            for (std::size_t n = 0; n < kMaxN; ++n) {
                for (const auto& [ngram, _] : counts[n]) {
                    merged[n][ngram] = 1.0;
                }
            }
        }
        for (std::size_t n = 0; n < kMaxN; ++n) {
            for (const auto& [ngram, _] : merged[n]) {
                document_frequency[n][ngram] += 1.0;
            }
        }
    }

    const double log_corpus = std::log(static_cast<double>(corpus.pairs.size()));

    struct TfIdfVec {
        std::array<NgramCounts, kMaxN> vec;
        std::array<double, kMaxN> norm{};
        double length = 0.0;  // bigram total, equal to word count - 1
    };
    auto to_tfidf = [&](const std::array<NgramCounts, kMaxN>& counts) {
        TfIdfVec out;
        for (std::size_t n = 0; n < kMaxN; ++n) {
            for (const auto& [ngram, term_freq] : counts[n]) {
                auto df_it = document_frequency[n].find(ngram);
                double df = df_it == document_frequency[n].end() ? 0.0 : df_it->second;
                double idf = log_corpus - std::log(std::max(1.0, df));
                double value = term_freq * idf;
                out.vec[n][ngram] = value;
                out.norm[n] += value * value;
                if (n == 1) {
                    out.length += term_freq;
                }
            }
            out.norm[n] = std::sqrt(out.norm[n]);
        }
        return out;
    };

    CiderResult result;
    result.degenerate_idf = corpus.pairs.size() < 2;
    result.per_pair.reserve(corpus.pairs.size());
    double total = 0.0;
    for (std::size_t p = 0; p < corpus.pairs.size(); ++p) {
        TfIdfVec cand = to_tfidf(cand_counts_per_pair[p]);
        std::array<double, kMaxN> score{};
        for (const std::string& reference : corpus.pairs[p].references) {
            TfIdfVec ref = to_tfidf(ngram_counts(tokenize(reference)));
            double delta = cand.length - ref.length;
            double penalty = std::exp(-(delta * delta) / (2.0 * kSigma * kSigma));
            for (std::size_t n = 0; n < kMaxN; ++n) {
                double dot = 0.0;
                for (const auto& [ngram, cand_value] : cand.vec[n]) {
                    auto it = ref.vec[n].find(ngram);
                    if (it != ref.vec[n].end()) {
                        dot += std::min(cand_value, it->second) * it->second;
                    }
                }
                if (cand.norm[n] != 0.0 && ref.norm[n] != 0.0) {
                    dot /= cand.norm[n] * ref.norm[n];
                }
                score[n] += dot * penalty;
            }
        }
        double mean_over_n = 0.0;
        for (double s : score) {
            mean_over_n += s;
        }
        mean_over_n /= static_cast<double>(kMaxN);
        mean_over_n /= static_cast<double>(corpus.pairs[p].references.size());
        mean_over_n *= 10.0;
        result.per_pair.push_back(mean_over_n);
        total += mean_over_n;
    }
    result.mean = total / static_cast<double>(corpus.pairs.size());
    return result;
}

/// Unigram-overlap F1, the default similarity for the neighbour-recall
/// metric (any text-similarity backend can replace it).
inline double token_overlap_f1(const std::string& a, const std::string& b) {
    const std::vector<std::string> ta = tokenize(a);
    const std::vector<std::string> tb = tokenize(b);
    if (ta.empty() || tb.empty()) {
        return 0.0;
    }
    auto ca = detail::unigram_counts(ta);
    auto cb = detail::unigram_counts(tb);
    std::size_t overlap = 0;
    for (const auto& [token, count] : ca) {
        auto it = cb.find(token);
        if (it != cb.end()) {
            overlap += std::min(count, it->second);
        }
    }
    if (overlap == 0) {
        return 0.0;
    }
    double precision = static_cast<double>(overlap) / static_cast<double>(ta.size());
    double recall = static_cast<double>(overlap) / static_cast<double>(tb.size());
    return 2.0 * precision * recall / (precision + recall);
}

struct NeighbourRecallConfig {
    std::size_t k = 5;
    std::size_t n = 16;  // k <= n
    std::function<double(const std::string&, const std::string&)> similarity =
        token_overlap_f1;
};

struct NeighbourRecallResult {
    double value = 0.0;
    bool truncated = false;  // fewer than n records available
};

/// Recall@k within n temporal neighbours. For each index i the window is
/// the n ground-truth records nearest to i (by position in the temporally
/// ordered sequence, ties toward the earlier record). The prediction pd[i]
/// is scored against every window member; the trial succeeds when the
/// aligned gt[i] ranks in the top k, similarity ties broken by the stable
/// index order.
inline NeighbourRecallResult recall_at_k_within_n(
    std::span<const memory::ADRecord> pd, std::span<const memory::ADRecord> gt,
    const NeighbourRecallConfig& cfg) {
    if (cfg.k == 0 || cfg.k > cfg.n) {
        throw MetricsError("neighbour recall requires 0 < k <= n");
    }
    if (pd.size() != gt.size()) {
        throw MetricsError("neighbour recall requires pd and gt aligned by index");
    }
    NeighbourRecallResult result;
    if (gt.empty()) {
        return result;
    }
    result.truncated = gt.size() < cfg.n;

    std::size_t successes = 0;
    for (std::size_t i = 0; i < gt.size(); ++i) {
        // Grow [lo, hi] around i until it holds n members (or everything).
        std::size_t lo = i, hi = i;
        while (hi - lo + 1 < cfg.n && (lo > 0 || hi + 1 < gt.size())) {
            bool can_left = lo > 0;
            bool can_right = hi + 1 < gt.size();
            if (can_left && (!can_right || i - (lo - 1) <= (hi + 1) - i)) {
                --lo;
            } else {
                ++hi;
            }
        }
        double self_similarity = cfg.similarity(pd[i].text, gt[i].text);
        std::size_t rank = 1;
        for (std::size_t j = lo; j <= hi; ++j) {
            if (j == i) {
                continue;
            }
            double s = cfg.similarity(pd[i].text, gt[j].text);
            if (s > self_similarity || (s == self_similarity && j < i)) {
                ++rank;
            }
        }
        if (rank <= cfg.k) {
            ++successes;
        }
    }
    result.value = static_cast<double>(successes) / static_cast<double>(gt.size());
    return result;
}

}  // namespace adkit::metrics
