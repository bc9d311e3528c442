// Synthetic multi-aspect review corpora with known ground-truth rationales.
//
// Per-aspect raw scores come from a Gaussian copula (correlated latents pushed
// through fixed score quantiles), are binarized with the score >= hi / <= lo
// rule, and the corpus is exactly class-balanced per aspect by keeping
// complementary label-vector pairs in generation order. The binarization
// boundary sits at the latent median, so pair-matching preserves the
// configured cross-aspect correlation structure.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "cfrat/rng.hpp"

namespace cfrat {

struct AspectSpec {
    std::string id;
    std::vector<std::string> pos_pool;   // paired with neg_pool: pos_pool[i] is the antonym of neg_pool[i]
    std::vector<std::string> neg_pool;
    int min_aspect_tokens = 2;           // sentiment tokens per document for this aspect
    int max_aspect_tokens = 4;
    int min_sentence_tokens = 5;         // total segment length, padded with filler
    int max_sentence_tokens = 8;
    double token_noise = -1.0;           // per-aspect override; negative = corpus-wide rate
};

struct CorpusConfig {
    std::vector<AspectSpec> aspects;
    std::vector<std::string> filler_pool;  // neutral tokens, shared across aspects
    int num_documents = 1000;
    std::vector<std::vector<double>> correlation;  // aspect-score correlation, symmetric, unit diagonal
    int binarize_hi = 3;                 // score >= hi  -> class 1
    int binarize_lo = 2;                 // score <= lo  -> class 0; strictly between -> dropped
    double token_noise_rate = 0.05;      // chance a sentiment token is drawn from the opposite pool
    int max_tokens = 256;
    std::uint64_t seed = 0;

    void validate() const;
    int aspect_index(const std::string& id) const;
};

// Cumulative probabilities of raw scores 1..4 (score 5 takes the rest).
// P(score <= 2) = 0.5 puts the default binarization boundary at the median.
inline constexpr double kScoreCum[4] = {0.25, 0.5, 0.75, 0.9};

struct Document {
    std::int64_t id = 0;
    std::vector<std::string> tokens;
    std::map<std::string, int> labels;                      // aspect id -> 0/1
    std::map<std::string, std::vector<std::uint8_t>> masks; // aspect id -> ground-truth rationale mask
    std::string provenance = "original";
    std::int64_t source_id = -1;                            // back-reference for generated documents

    const std::vector<std::uint8_t>& mask_for(const std::string& aspect) const {
        auto it = masks.find(aspect);
        if (it == masks.end()) throw std::invalid_argument("Document: no mask for aspect " + aspect);
        return it->second;
    }

    int label_for(const std::string& aspect) const {
        auto it = labels.find(aspect);
        if (it == labels.end()) throw std::invalid_argument("Document: no label for aspect " + aspect);
        return it->second;
    }
};

using Corpus = std::vector<Document>;

inline void CorpusConfig::validate() const {
    if (aspects.empty()) throw std::invalid_argument("CorpusConfig: no aspects");
    if (filler_pool.empty()) throw std::invalid_argument("CorpusConfig: empty filler pool");
    if (num_documents < 1) throw std::invalid_argument("CorpusConfig: num_documents must be positive");
    if (binarize_hi <= binarize_lo || binarize_lo < 1 || binarize_hi > 5)
        throw std::invalid_argument("CorpusConfig: need 1 <= lo < hi <= 5");
    if (token_noise_rate < 0.0 || token_noise_rate > 1.0)
        throw std::invalid_argument("CorpusConfig: token_noise_rate outside [0,1]");

    const std::set<std::string> filler(filler_pool.begin(), filler_pool.end());
    std::set<std::string> ids;
    int worst_case_len = 0;
    for (const auto& a : aspects) {
        if (!ids.insert(a.id).second) throw std::invalid_argument("CorpusConfig: duplicate aspect id " + a.id);
        if (a.pos_pool.empty() || a.neg_pool.empty())
            throw std::invalid_argument("CorpusConfig: empty sentiment pool for aspect " + a.id);
        if (a.min_aspect_tokens < 1 || a.max_aspect_tokens < a.min_aspect_tokens)
            throw std::invalid_argument("CorpusConfig: bad tokens-per-aspect range for " + a.id);
        if (a.min_sentence_tokens < a.max_aspect_tokens || a.max_sentence_tokens < a.min_sentence_tokens)
            throw std::invalid_argument("CorpusConfig: bad sentence-length range for " + a.id);
        if (a.token_noise > 1.0)
            throw std::invalid_argument("CorpusConfig: token_noise override above 1 for " + a.id);
        std::set<std::string> pos(a.pos_pool.begin(), a.pos_pool.end());
        for (const auto& t : a.neg_pool)
            if (pos.count(t))
                throw std::invalid_argument("CorpusConfig: pools overlap in aspect " + a.id);
        for (const auto& t : a.pos_pool)
            if (filler.count(t)) throw std::invalid_argument("CorpusConfig: pos pool overlaps filler in " + a.id);
        for (const auto& t : a.neg_pool)
            if (filler.count(t)) throw std::invalid_argument("CorpusConfig: neg pool overlaps filler in " + a.id);
        worst_case_len += a.max_sentence_tokens;
    }
    if (worst_case_len > max_tokens)
        throw std::invalid_argument("CorpusConfig: maximum document length exceeds max_tokens");

    const std::size_t n = aspects.size();
    if (correlation.size() != n)
        throw std::invalid_argument("CorpusConfig: correlation matrix size mismatch");
    for (std::size_t i = 0; i < n; ++i) {
        if (correlation[i].size() != n)
            throw std::invalid_argument("CorpusConfig: correlation matrix not square");
        if (std::abs(correlation[i][i] - 1.0) > 1e-9)
            throw std::invalid_argument("CorpusConfig: correlation diagonal must be 1");
        for (std::size_t j = 0; j < n; ++j) {
            if (std::abs(correlation[i][j] - correlation[j][i]) > 1e-9)
                throw std::invalid_argument("CorpusConfig: correlation matrix not symmetric");
            if (correlation[i][j] < -1.0 - 1e-9 || correlation[i][j] > 1.0 + 1e-9)
                throw std::invalid_argument("CorpusConfig: correlation entries must be in [-1,1]");
        }
    }
}

inline int CorpusConfig::aspect_index(const std::string& id) const {
    for (std::size_t i = 0; i < aspects.size(); ++i)
        if (aspects[i].id == id) return static_cast<int>(i);
    throw std::invalid_argument("CorpusConfig: unknown aspect " + id);
}

namespace detail {

// Lower-triangular Cholesky factor; fails on non-PSD input.
inline std::vector<std::vector<double>> cholesky(const std::vector<std::vector<double>>& m) {
    const std::size_t n = m.size();
    std::vector<std::vector<double>> L(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            double sum = m[i][j];
            for (std::size_t k = 0; k < j; ++k) sum -= L[i][k] * L[j][k];
            if (i == j) {
                if (sum < -1e-9)
                    throw std::invalid_argument("correlation matrix is not positive semidefinite");
                L[i][j] = std::sqrt(std::max(sum, 0.0));
            } else {
                L[i][j] = L[j][j] > 0.0 ? sum / L[j][j] : 0.0;
            }
        }
    }
    return L;
}

inline double std_normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

// Map a standard-normal latent to a raw score in 1..5 via kScoreCum.
inline int latent_to_score(double z) {
    const double u = std_normal_cdf(z);
    for (int s = 0; s < 4; ++s)
        if (u < kScoreCum[s]) return s + 1;
    return 5;
}

}  // namespace detail

// score >= hi -> 1, score <= lo -> 0, strictly between -> nullopt (dropped).
inline std::optional<int> binarize_score(int score, int hi, int lo) {
    if (score >= hi) return 1;
    if (score <= lo) return 0;
    return std::nullopt;
}

// Deterministic corpus generation. The explicit seed overrides config.seed.
inline Corpus generate_corpus(const CorpusConfig& config, std::uint64_t seed) {
    config.validate();
    const std::size_t n_aspects = config.aspects.size();
    const auto chol = detail::cholesky(config.correlation);
    Rng rng(seed);

    // Emit exactly balanced labels by keeping complementary label-vector
    // pairs in generation order; unmatched candidates are dropped.
    std::map<std::vector<int>, std::deque<std::vector<int>>> pending;  // complement vector -> queued label vectors
    std::vector<std::vector<int>> kept_labels;
    const int max_attempts = config.num_documents * 64 + 4096;
    int attempts = 0;
    while (static_cast<int>(kept_labels.size()) < config.num_documents && attempts < max_attempts) {
        ++attempts;
        std::vector<double> z(n_aspects);
        for (auto& v : z) v = rng.normal();
        std::vector<int> labels(n_aspects);
        bool dropped = false;
        for (std::size_t i = 0; i < n_aspects; ++i) {
            double latent = 0.0;
            for (std::size_t k = 0; k <= i; ++k) latent += chol[i][k] * z[k];
            const auto cls = binarize_score(detail::latent_to_score(latent), config.binarize_hi,
                                            config.binarize_lo);
            if (!cls) {
                dropped = true;  // score in the (lo, hi) gap
                break;
            }
            labels[i] = *cls;
        }
        if (dropped) continue;

        std::vector<int> complement(n_aspects);
        for (std::size_t i = 0; i < n_aspects; ++i) complement[i] = 1 - labels[i];
        auto it = pending.find(labels);
        if (it != pending.end() && !it->second.empty()) {
            kept_labels.push_back(std::move(it->second.front()));
            it->second.pop_front();
            kept_labels.push_back(std::move(labels));
            if (static_cast<int>(kept_labels.size()) > config.num_documents) kept_labels.pop_back();
        } else {
            pending[complement].push_back(std::move(labels));
        }
    }
    if (static_cast<int>(kept_labels.size()) < config.num_documents)
        throw std::runtime_error("generate_corpus: could not balance classes; check binarization gap");

    Corpus corpus;
    corpus.reserve(kept_labels.size());
    for (std::size_t doc_idx = 0; doc_idx < kept_labels.size(); ++doc_idx) {
        const auto& labels = kept_labels[doc_idx];
        Document doc;
        doc.id = static_cast<std::int64_t>(doc_idx);

        // Aspect segments in randomized order so position is not a shortcut.
        std::vector<int> order(n_aspects);
        for (std::size_t i = 0; i < n_aspects; ++i) order[i] = static_cast<int>(i);
        rng.shuffle(order);

        std::vector<std::pair<std::string, int>> tagged;  // (token, owning aspect or -1 for filler)
        for (int ai : order) {
            const auto& spec = config.aspects[ai];
            const int n_sent = static_cast<int>(rng.uniform_int(spec.min_aspect_tokens, spec.max_aspect_tokens));
            const int sent_len = static_cast<int>(
                rng.uniform_int(std::max(spec.min_sentence_tokens, n_sent), spec.max_sentence_tokens));
            // Sentiment tokens form one contiguous run at a random offset,
            // like a phrase, with filler around it.
            const double noise_rate =
                spec.token_noise >= 0.0 ? spec.token_noise : config.token_noise_rate;
            const int offset = static_cast<int>(rng.uniform_int(0, sent_len - n_sent));
            std::vector<std::pair<std::string, int>> segment;
            segment.reserve(sent_len);
            for (int t = 0; t < sent_len; ++t) {
                if (t >= offset && t < offset + n_sent) {
                    const bool flip = rng.bernoulli(noise_rate);
                    const bool positive = (labels[ai] == 1) != flip;
                    const auto& pool = positive ? spec.pos_pool : spec.neg_pool;
                    segment.emplace_back(pool[rng.uniform_int(0, static_cast<std::int64_t>(pool.size()) - 1)],
                                         ai);
                } else {
                    segment.emplace_back(
                        config.filler_pool[rng.uniform_int(0, static_cast<std::int64_t>(config.filler_pool.size()) - 1)],
                        -1);
                }
            }
            tagged.insert(tagged.end(), segment.begin(), segment.end());
        }

        for (std::size_t i = 0; i < n_aspects; ++i) {
            doc.labels[config.aspects[i].id] = labels[i];
            doc.masks[config.aspects[i].id] = std::vector<std::uint8_t>(tagged.size(), 0);
        }
        doc.tokens.reserve(tagged.size());
        for (std::size_t pos = 0; pos < tagged.size(); ++pos) {
            doc.tokens.push_back(tagged[pos].first);
            if (tagged[pos].second >= 0) doc.masks[config.aspects[tagged[pos].second].id][pos] = 1;
        }
        corpus.push_back(std::move(doc));
    }
    return corpus;
}

// Involution over sentiment tokens: the i-th positive token of an aspect maps
// to the i-th negative token and back. Filler tokens are absent.
inline std::map<std::string, std::string> antonym_map(const CorpusConfig& config) {
    std::map<std::string, std::string> map;
    for (const auto& a : config.aspects) {
        if (a.pos_pool.size() != a.neg_pool.size())
            throw std::invalid_argument("antonym_map: pools of aspect " + a.id + " are not paired");
        for (std::size_t i = 0; i < a.pos_pool.size(); ++i) {
            map[a.pos_pool[i]] = a.neg_pool[i];
            map[a.neg_pool[i]] = a.pos_pool[i];
        }
    }
    return map;
}

struct CorpusSplit {
    Corpus train;
    Corpus dev;
    Corpus annotated;  // the only split whose ground-truth masks evaluation may read
};

// Disjoint, deterministic split. Fractions must sum to 1.
inline CorpusSplit split_corpus(const Corpus& corpus, double train_frac, double dev_frac,
                                double annotated_frac, std::uint64_t seed) {
    if (train_frac < 0 || dev_frac < 0 || annotated_frac < 0 ||
        std::abs(train_frac + dev_frac + annotated_frac - 1.0) > 1e-9)
        throw std::invalid_argument("split_corpus: fractions must be nonnegative and sum to 1");
    std::vector<std::size_t> idx(corpus.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    Rng rng(derive_seed(seed, 0x5717));
    rng.shuffle(idx);

    const auto n = corpus.size();
    const std::size_t n_train = static_cast<std::size_t>(std::llround(train_frac * static_cast<double>(n)));
    const std::size_t n_dev =
        std::min(n - n_train, static_cast<std::size_t>(std::llround(dev_frac * static_cast<double>(n))));
    CorpusSplit split;
    for (std::size_t i = 0; i < n; ++i) {
        const Document& d = corpus[idx[i]];
        if (i < n_train)
            split.train.push_back(d);
        else if (i < n_train + n_dev)
            split.dev.push_back(d);
        else
            split.annotated.push_back(d);
    }
    return split;
}

}  // namespace cfrat
