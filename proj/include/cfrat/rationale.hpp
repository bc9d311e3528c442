// MMI rationale model: a context-window token selector with hard top-K
// masking and a max-pooled bag classifier that sees only selected tokens.
//
// The mask enters the classifier multiplicatively (feature_j = max_t m_t *
// e_{t,j}), so unselected tokens provably cannot change the output and the
// empty mask yields logistic(bias). Gradients reach selector scores through
// the straight-through rule: forward uses the hard mask, backward treats the
// mask as the identity function of the scores.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "cfrat/corpus.hpp"
#include "cfrat/rng.hpp"

namespace cfrat {

// ---------------------------------------------------------------------------
// Small dense helpers
// ---------------------------------------------------------------------------

struct Mat {
    int rows = 0, cols = 0;
    std::vector<double> a;

    Mat() = default;
    Mat(int r, int c) : rows(r), cols(c), a(static_cast<std::size_t>(r) * c, 0.0) {}

    double& at(int r, int c) { return a[static_cast<std::size_t>(r) * cols + c]; }
    double at(int r, int c) const { return a[static_cast<std::size_t>(r) * cols + c]; }
    const double* row(int r) const { return a.data() + static_cast<std::size_t>(r) * cols; }
    double* row(int r) { return a.data() + static_cast<std::size_t>(r) * cols; }
};

inline double sigmoid(double x) {
    if (x >= 0) {
        const double z = std::exp(-x);
        return 1.0 / (1.0 + z);
    }
    const double z = std::exp(x);
    return z / (1.0 + z);
}

inline double bce_loss(double p, int label) {
    const double q = std::clamp(p, 1e-12, 1.0 - 1e-12);
    return label ? -std::log(q) : -std::log(1.0 - q);
}

// Adam with bias correction; one instance per parameter blob.
class Adam {
public:
    Adam(std::size_t n, double lr) : lr_(lr), m_(n, 0.0), v_(n, 0.0) {}

    void step(double* params, const double* grads, std::size_t n) {
        if (n != m_.size()) throw std::invalid_argument("Adam: size mismatch");
        ++t_;
        const double bc1 = 1.0 - std::pow(kBeta1, t_);
        const double bc2 = 1.0 - std::pow(kBeta2, t_);
        for (std::size_t i = 0; i < n; ++i) {
            m_[i] = kBeta1 * m_[i] + (1.0 - kBeta1) * grads[i];
            v_[i] = kBeta2 * v_[i] + (1.0 - kBeta2) * grads[i] * grads[i];
            params[i] -= lr_ * (m_[i] / bc1) / (std::sqrt(v_[i] / bc2) + kEps);
        }
    }

    void set_rate(double lr) { lr_ = lr; }

private:
    static constexpr double kBeta1 = 0.9;
    static constexpr double kBeta2 = 0.999;
    static constexpr double kEps = 1e-8;
    double lr_;
    int t_ = 0;
    std::vector<double> m_, v_;
};

// ---------------------------------------------------------------------------
// Vocabulary
// ---------------------------------------------------------------------------

class Vocabulary {
public:
    Vocabulary() = default;

    static Vocabulary build(const std::vector<const Corpus*>& corpora,
                            const std::vector<std::string>& extra = {}) {
        std::set<std::string> set(extra.begin(), extra.end());
        for (const auto* corpus : corpora)
            for (const auto& doc : *corpus) set.insert(doc.tokens.begin(), doc.tokens.end());
        Vocabulary v;
        v.tokens_.assign(set.begin(), set.end());  // sorted, deterministic
        for (int i = 0; i < static_cast<int>(v.tokens_.size()); ++i) v.index_[v.tokens_[i]] = i;
        return v;
    }

    static Vocabulary from_tokens(std::vector<std::string> tokens) {
        Vocabulary v;
        v.tokens_ = std::move(tokens);
        for (int i = 0; i < static_cast<int>(v.tokens_.size()); ++i) v.index_[v.tokens_[i]] = i;
        return v;
    }

    int size() const { return static_cast<int>(tokens_.size()); }
    const std::string& token(int id) const { return tokens_.at(id); }
    const std::vector<std::string>& tokens() const { return tokens_; }

    // -1 for out-of-vocabulary tokens; lookups stay total, embeddings treat
    // -1 as the zero vector.
    int id_or(const std::string& token) const {
        auto it = index_.find(token);
        return it == index_.end() ? -1 : it->second;
    }

    std::vector<int> encode(const std::vector<std::string>& tokens) const {
        std::vector<int> ids(tokens.size());
        for (std::size_t i = 0; i < tokens.size(); ++i) ids[i] = id_or(tokens[i]);
        return ids;
    }

    bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

private:
    std::vector<std::string> tokens_;
    std::map<std::string, int> index_;
};

// ---------------------------------------------------------------------------
// Model types
// ---------------------------------------------------------------------------

struct RationaleMask {
    std::vector<std::uint8_t> bits;

    std::size_t size() const { return bits.size(); }
    int ones() const { return static_cast<int>(std::count(bits.begin(), bits.end(), 1)); }
    std::vector<double> as_real() const { return std::vector<double>(bits.begin(), bits.end()); }
};

struct SelectorParams {
    Mat embed;                 // vocab x d
    std::vector<double> w;     // 3d: previous, current, next neighbor weights
    double b = 0.0;
    double k_percent = 0.10;   // rationale fraction
};

struct ClassifierParams {
    Mat embed;                 // vocab x d, separate table from the selector
    std::vector<double> u;     // d
    double b = 0.0;
};

struct TrainConfig {
    double lambda_r = 1.0;     // coherency weight
    double learning_rate = 1e-3;
    int epochs = 21;
    int batch_size = 50;
    int patience = 5;          // early-stopping horizon, in epochs
    int finetune_epochs = 10;
    int embed_dim = 16;
    double k_percent = 0.10;
    std::uint64_t seed = 0;

    void validate() const {
        if (lambda_r < 0) throw std::invalid_argument("TrainConfig: lambda_r must be >= 0");
        if (!(k_percent > 0.0 && k_percent <= 1.0))
            throw std::invalid_argument("TrainConfig: k_percent must be in (0,1]");
        if (learning_rate <= 0 || epochs < 0 || batch_size < 1 || embed_dim < 1)
            throw std::invalid_argument("TrainConfig: bad optimization parameters");
    }
};

// Number of selected tokens for a document of length T: ceil(k% * T), at
// least 1. The epsilon keeps exact products like 0.10 * 20 from rounding up.
inline int mask_cardinality(double k_percent, int T) {
    if (T < 1) throw std::invalid_argument("mask_cardinality: empty document");
    const int k = static_cast<int>(std::ceil(k_percent * static_cast<double>(T) - 1e-9));
    return std::clamp(k, 1, T);
}

// Mask with ones at the k largest scores; ties broken toward the lowest index.
inline RationaleMask select_topk(const std::vector<double>& scores, int k) {
    const int T = static_cast<int>(scores.size());
    if (k < 1 || k > T) throw std::invalid_argument("select_topk: k out of range");
    std::vector<int> order(T);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return scores[a] > scores[b]; });
    RationaleMask mask;
    mask.bits.assign(T, 0);
    for (int i = 0; i < k; ++i) mask.bits[order[i]] = 1;
    return mask;
}

// L_r = (lambda_r / T) * sum_{t=1..T-1} |m_t - m_{t-1}|; no boundary term.
inline double coherency_penalty(const RationaleMask& mask, double lambda_r) {
    const std::size_t T = mask.size();
    if (T == 0) return 0.0;
    int transitions = 0;
    for (std::size_t t = 1; t < T; ++t) transitions += mask.bits[t] != mask.bits[t - 1];
    return lambda_r * static_cast<double>(transitions) / static_cast<double>(T);
}

inline int mask_transitions(const RationaleMask& mask) {
    int transitions = 0;
    for (std::size_t t = 1; t < mask.size(); ++t) transitions += mask.bits[t] != mask.bits[t - 1];
    return transitions;
}

// ---------------------------------------------------------------------------
// Forward / backward passes
// ---------------------------------------------------------------------------

// Classifier forward with a real-valued mask (hard masks pass 0/1 bits):
//   z_j = max over selected t of (m_t * e_{t,j}),  p = sigmoid(u . z + b)
// The pool runs over positions with m_t > 0 only, so unselected tokens are
// excluded outright (occlusion) and negative feature values stay visible;
// with nothing selected the features are zero and p = sigmoid(b).
struct ClassifierTape {
    double p = 0.5;
    double loss = 0.0;
    std::vector<double> d_mask;                // dL/dm_t
    std::vector<std::vector<double>> d_input;  // dL/de_t (classifier embedding inputs)
    Mat d_embed;
    std::vector<double> d_u;
    double d_b = 0.0;
};

inline ClassifierTape classifier_forward_backward(const std::vector<int>& ids,
                                                  const std::vector<double>& mask, int label,
                                                  const ClassifierParams& cp) {
    const int T = static_cast<int>(ids.size());
    if (static_cast<int>(mask.size()) != T)
        throw std::invalid_argument("classify: mask length does not match token count");
    const int d = cp.embed.cols;

    std::vector<double> z(d, 0.0);
    std::vector<int> argmax(d, -1);
    for (int j = 0; j < d; ++j) {
        double best = -std::numeric_limits<double>::infinity();
        int best_t = -1;
        for (int t = 0; t < T; ++t) {
            if (mask[t] <= 0.0) continue;
            const double e = ids[t] >= 0 ? cp.embed.at(ids[t], j) : 0.0;
            const double v = mask[t] * e;
            if (v > best) {
                best = v;
                best_t = t;
            }
        }
        z[j] = best_t >= 0 ? best : 0.0;
        argmax[j] = best_t;
    }

    double logit = cp.b;
    for (int j = 0; j < d; ++j) logit += cp.u[j] * z[j];

    ClassifierTape tape;
    tape.p = sigmoid(logit);
    tape.loss = bce_loss(tape.p, label);
    tape.d_mask.assign(T, 0.0);
    tape.d_input.assign(T, std::vector<double>(d, 0.0));
    tape.d_embed = Mat(cp.embed.rows, d);
    tape.d_u.assign(d, 0.0);

    const double dlogit = tape.p - static_cast<double>(label);
    tape.d_b = dlogit;
    for (int j = 0; j < d; ++j) {
        tape.d_u[j] = dlogit * z[j];
        const double dz = dlogit * cp.u[j];
        const int t = argmax[j];
        if (t < 0) continue;
        const double e = ids[t] >= 0 ? cp.embed.at(ids[t], j) : 0.0;
        tape.d_mask[t] += dz * e;
        if (ids[t] >= 0) {
            tape.d_embed.at(ids[t], j) += dz * mask[t];
            tape.d_input[t][j] += dz * mask[t];
        }
    }
    return tape;
}

// Probability from selected tokens only.
inline double classify(const Document& doc, const RationaleMask& mask, const ClassifierParams& cp,
                       const Vocabulary& vocab) {
    if (doc.tokens.empty()) return sigmoid(cp.b);
    return classifier_forward_backward(vocab.encode(doc.tokens), mask.as_real(), 0, cp).p;
}

// score_t = w_prev . e_{t-1} + w_cur . e_t + w_next . e_{t+1} + b, with zero
// vectors at the boundaries.
inline std::vector<double> selector_scores(const std::vector<int>& ids, const SelectorParams& sp) {
    const int T = static_cast<int>(ids.size());
    const int d = sp.embed.cols;
    std::vector<double> scores(T, sp.b);
    for (int t = 0; t < T; ++t) {
        for (int off = -1; off <= 1; ++off) {
            const int src = t + off;
            if (src < 0 || src >= T || ids[src] < 0) continue;
            const double* e = sp.embed.row(ids[src]);
            const double* w = sp.w.data() + static_cast<std::size_t>(off + 1) * d;
            double acc = 0.0;
            for (int j = 0; j < d; ++j) acc += w[j] * e[j];
            scores[t] += acc;
        }
    }
    return scores;
}

struct SelectorTape {
    Mat d_embed;
    std::vector<double> d_w;
    double d_b = 0.0;
    std::vector<std::vector<double>> d_input;  // dL/de_t (selector embedding inputs)
};

// Backpropagate dL/d(score) into the selector parameters and inputs.
inline SelectorTape selector_backward(const std::vector<int>& ids, const std::vector<double>& d_scores,
                                      const SelectorParams& sp) {
    const int T = static_cast<int>(ids.size());
    const int d = sp.embed.cols;
    SelectorTape tape;
    tape.d_embed = Mat(sp.embed.rows, d);
    tape.d_w.assign(3 * static_cast<std::size_t>(d), 0.0);
    tape.d_input.assign(T, std::vector<double>(d, 0.0));
    for (int t = 0; t < T; ++t) {
        const double ds = d_scores[t];
        tape.d_b += ds;
        if (ds == 0.0) continue;
        for (int off = -1; off <= 1; ++off) {
            const int src = t + off;
            if (src < 0 || src >= T) continue;
            const double* w = sp.w.data() + static_cast<std::size_t>(off + 1) * d;
            for (int j = 0; j < d; ++j) {
                if (ids[src] >= 0) {
                    tape.d_w[static_cast<std::size_t>(off + 1) * d + j] += ds * sp.embed.at(ids[src], j);
                    tape.d_embed.at(ids[src], j) += ds * w[j];
                    tape.d_input[src][j] += ds * w[j];
                }
            }
        }
    }
    return tape;
}

// Gradient of L_r with respect to a relaxed mask, using the multilinear
// extension |a - b| = a + b - 2ab (exact on binary masks, smooth in between).
// At a hard mask this pushes isolated selections down, gaps between
// selections up, and leaves block edges alone, so contiguous blocks are
// stable fixed points of the straight-through dynamics.
inline std::vector<double> coherency_mask_grad_relaxed(const std::vector<double>& mask,
                                                       double lambda_r) {
    const int T = static_cast<int>(mask.size());
    std::vector<double> g(T, 0.0);
    if (T == 0 || lambda_r == 0.0) return g;
    const double scale = lambda_r / static_cast<double>(T);
    for (int t = 0; t < T; ++t) {
        if (t >= 1) g[t] += scale * (1.0 - 2.0 * mask[t - 1]);
        if (t + 1 < T) g[t] += scale * (1.0 - 2.0 * mask[t + 1]);
    }
    return g;
}

inline std::vector<double> coherency_mask_grad(const RationaleMask& mask, double lambda_r) {
    return coherency_mask_grad_relaxed(mask.as_real(), lambda_r);
}

// The multilinear extension itself, for gradient checks on relaxed masks.
inline double coherency_penalty_relaxed(const std::vector<double>& mask, double lambda_r) {
    const std::size_t T = mask.size();
    if (T == 0) return 0.0;
    double sum = 0.0;
    for (std::size_t t = 1; t < T; ++t)
        sum += mask[t] + mask[t - 1] - 2.0 * mask[t] * mask[t - 1];
    return lambda_r * sum / static_cast<double>(T);
}

// Loss of a frozen model against a target label, with gradients w.r.t. the
// per-position classifier-embedding inputs. This is what lets another model
// (the counterfactual predictor) backpropagate through a frozen rationale
// model into its own token choices. The frozen selector re-selects on the
// input in the forward pass, but its mask is a constant of the backward
// pass: gradients flowing through the mask choice would teach the generator
// to hide tokens from the selector rather than to flip the label.
struct FrozenInputGrads {
    double p = 0.5;
    double loss = 0.0;
    std::vector<std::vector<double>> d_embed_c;  // T x d
};

struct RationaleModel;
inline FrozenInputGrads frozen_loss_input_grads(const RationaleModel& model,
                                                const std::vector<int>& ids, int target_label);

// ---------------------------------------------------------------------------
// The trained artifact
// ---------------------------------------------------------------------------

struct RationaleModel {
    Vocabulary vocab;
    std::string aspect;
    SelectorParams selector;
    ClassifierParams classifier;
    TrainConfig config;
    std::uint64_t seed = 0;

    RationaleMask mask_for(const Document& doc) const {
        const auto scores = selector_scores(vocab.encode(doc.tokens), selector);
        return select_topk(scores, mask_cardinality(selector.k_percent, static_cast<int>(scores.size())));
    }

    double predict(const Document& doc) const { return classify(doc, mask_for(doc), classifier, vocab); }
};

inline FrozenInputGrads frozen_loss_input_grads(const RationaleModel& model,
                                                const std::vector<int>& ids, int target_label) {
    const auto scores = selector_scores(ids, model.selector);
    const auto mask = select_topk(
        scores, mask_cardinality(model.selector.k_percent, static_cast<int>(ids.size())));
    const auto tape = classifier_forward_backward(ids, mask.as_real(), target_label, model.classifier);
    FrozenInputGrads out;
    out.p = tape.p;
    out.loss = tape.loss;
    out.d_embed_c = tape.d_input;
    return out;
}

struct EpochStats {
    int epoch;
    double l_y;
    double l_r;
    double l_s;
    double dev_acc;
};

struct TrainResult {
    RationaleModel model;
    std::vector<EpochStats> log;
};

namespace detail {

inline void random_init(Mat& m, Rng& rng, double scale) {
    for (auto& v : m.a) v = rng.normal() * scale;
}

struct DevStats {
    double l_y = 0.0, l_r = 0.0, acc = 0.0, coherency_cost = 0.0;
};

inline DevStats dev_eval(const RationaleModel& model, const Corpus& dev) {
    DevStats s;
    if (dev.empty()) return s;
    for (const auto& doc : dev) {
        const auto ids = model.vocab.encode(doc.tokens);
        const auto scores = selector_scores(ids, model.selector);
        const auto mask = select_topk(
            scores, mask_cardinality(model.selector.k_percent, static_cast<int>(scores.size())));
        const int y = doc.label_for(model.aspect);
        const double p =
            classifier_forward_backward(ids, mask.as_real(), y, model.classifier).p;
        s.l_y += bce_loss(p, y);
        s.l_r += coherency_penalty(mask, model.config.lambda_r);
        s.coherency_cost += coherency_penalty(mask, 1.0);
        s.acc += (p >= 0.5 ? 1 : 0) == y ? 1.0 : 0.0;
    }
    const double n = static_cast<double>(dev.size());
    s.l_y /= n;
    s.l_r /= n;
    s.acc /= n;
    s.coherency_cost /= n;
    return s;
}

}  // namespace detail

// Dev-set costs of a trained model: classification cross-entropy, weighted
// and unweighted coherency, accuracy.
struct ModelCosts {
    double l_y = 0.0;
    double l_r = 0.0;             // lambda_r-weighted coherency penalty
    double coherency_cost = 0.0;  // transitions / T, unweighted
    double accuracy = 0.0;
};

inline ModelCosts measure_costs(const RationaleModel& model, const Corpus& corpus) {
    const auto s = detail::dev_eval(model, corpus);
    return {s.l_y, s.l_r, s.coherency_cost, s.acc};
}

// Joint phase-1 training: selector and classifier together, early stopping on
// the dev selector cost L_s = L_r + L_y, best-epoch snapshot returned.
// Deterministic given (data, config, seed). An optional warm start copies
// selector rows for shared tokens (used by iterative augmentation rounds).
inline TrainResult train_joint(const Corpus& train, const Corpus& dev, const std::string& aspect,
                               const TrainConfig& config, std::uint64_t seed,
                               const RationaleModel* warm_start = nullptr) {
    config.validate();
    if (train.empty()) throw std::invalid_argument("train_joint: empty training corpus");

    RationaleModel model;
    model.vocab = Vocabulary::build({&train, &dev});
    model.aspect = aspect;
    model.config = config;
    model.seed = seed;

    const int V = model.vocab.size();
    const int d = config.embed_dim;
    Rng rng(derive_seed(seed, 0x7a11));
    model.selector.embed = Mat(V, d);
    model.selector.w.assign(3 * static_cast<std::size_t>(d), 0.0);
    model.selector.k_percent = config.k_percent;
    model.classifier.embed = Mat(V, d);
    model.classifier.u.assign(d, 0.0);
    detail::random_init(model.selector.embed, rng, 0.1);
    detail::random_init(model.classifier.embed, rng, 0.1);
    for (auto& v : model.selector.w) v = rng.normal() * 0.1;
    for (auto& v : model.classifier.u) v = rng.normal() * 0.1;

    if (warm_start) {
        // Copy selector rows for tokens both vocabularies know.
        for (int id = 0; id < V; ++id) {
            const int prev = warm_start->vocab.id_or(model.vocab.token(id));
            if (prev < 0) continue;
            for (int j = 0; j < std::min(d, warm_start->selector.embed.cols); ++j)
                model.selector.embed.at(id, j) = warm_start->selector.embed.at(prev, j);
        }
        if (static_cast<int>(warm_start->selector.w.size()) == 3 * d) {
            model.selector.w = warm_start->selector.w;
            model.selector.b = warm_start->selector.b;
        }
    }

    Adam opt_se(model.selector.embed.a.size(), config.learning_rate);
    Adam opt_sw(model.selector.w.size(), config.learning_rate);
    Adam opt_sb(1, config.learning_rate);
    Adam opt_ce(model.classifier.embed.a.size(), config.learning_rate);
    Adam opt_cu(model.classifier.u.size(), config.learning_rate);
    Adam opt_cb(1, config.learning_rate);

    TrainResult result;
    RationaleModel best = model;
    double best_ls = std::numeric_limits<double>::infinity();
    int since_best = 0;

    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        rng.shuffle(order);
        double epoch_ly = 0.0, epoch_lr = 0.0;
        std::size_t seen = 0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t stop = std::min(order.size(), start + config.batch_size);
            const double inv_batch = 1.0 / static_cast<double>(stop - start);

            Mat g_se(V, d), g_ce(V, d);
            std::vector<double> g_sw(model.selector.w.size(), 0.0), g_cu(d, 0.0);
            double g_sb = 0.0, g_cb = 0.0;

            for (std::size_t i = start; i < stop; ++i) {
                const Document& doc = train[order[i]];
                const auto ids = model.vocab.encode(doc.tokens);
                const int y = doc.label_for(aspect);
                const auto scores = selector_scores(ids, model.selector);
                const auto mask =
                    select_topk(scores, mask_cardinality(config.k_percent, static_cast<int>(ids.size())));

                auto tape = classifier_forward_backward(ids, mask.as_real(), y, model.classifier);
                const double l_r = coherency_penalty(mask, config.lambda_r);
                if (!std::isfinite(tape.loss))
                    throw std::runtime_error("train_joint: non-finite loss at epoch " +
                                             std::to_string(epoch) + ", doc " + std::to_string(doc.id));
                epoch_ly += tape.loss;
                epoch_lr += l_r;
                ++seen;

                // Classifier parameters follow L_y only.
                for (std::size_t k = 0; k < g_ce.a.size(); ++k) g_ce.a[k] += inv_batch * tape.d_embed.a[k];
                for (int j = 0; j < d; ++j) g_cu[j] += inv_batch * tape.d_u[j];
                g_cb += inv_batch * tape.d_b;

                // Selector follows L_s = L_r + L_y through the straight-through mask.
                auto d_scores = tape.d_mask;
                const auto d_coh = coherency_mask_grad(mask, config.lambda_r);
                for (std::size_t t = 0; t < d_scores.size(); ++t) d_scores[t] += d_coh[t];
                const auto sel = selector_backward(ids, d_scores, model.selector);
                for (std::size_t k = 0; k < g_se.a.size(); ++k) g_se.a[k] += inv_batch * sel.d_embed.a[k];
                for (std::size_t k = 0; k < g_sw.size(); ++k) g_sw[k] += inv_batch * sel.d_w[k];
                g_sb += inv_batch * sel.d_b;
            }

            opt_se.step(model.selector.embed.a.data(), g_se.a.data(), g_se.a.size());
            opt_sw.step(model.selector.w.data(), g_sw.data(), g_sw.size());
            opt_sb.step(&model.selector.b, &g_sb, 1);
            opt_ce.step(model.classifier.embed.a.data(), g_ce.a.data(), g_ce.a.size());
            opt_cu.step(model.classifier.u.data(), g_cu.data(), g_cu.size());
            opt_cb.step(&model.classifier.b, &g_cb, 1);
        }

        const auto dev_stats = detail::dev_eval(model, dev.empty() ? train : dev);
        const double dev_ls = dev_stats.l_y + dev_stats.l_r;
        result.log.push_back({epoch, seen ? epoch_ly / static_cast<double>(seen) : 0.0,
                              seen ? epoch_lr / static_cast<double>(seen) : 0.0, dev_ls, dev_stats.acc});
        if (dev_ls < best_ls) {
            best_ls = dev_ls;
            best = model;
            since_best = 0;
        } else if (++since_best >= config.patience) {
            break;
        }
    }

    result.model = std::move(best);
    return result;
}

// Phase-2: classifier fine-tuning on the original corpus with the selector
// frozen bit-for-bit. The pre-finetune state is an early-stopping candidate,
// so zero epochs (or no improvement) returns the model unchanged.
inline RationaleModel finetune_classifier(const RationaleModel& trained, const Corpus& original_train,
                                          const Corpus& dev, int epochs) {
    if (epochs < 0) throw std::invalid_argument("finetune_classifier: negative epochs");
    RationaleModel model = trained;
    if (epochs == 0 || original_train.empty()) return model;

    Rng rng(derive_seed(trained.seed, 0xf17e));
    Adam opt_ce(model.classifier.embed.a.size(), model.config.learning_rate);
    Adam opt_cu(model.classifier.u.size(), model.config.learning_rate);
    Adam opt_cb(1, model.config.learning_rate);

    const Corpus& eval_set = dev.empty() ? original_train : dev;
    RationaleModel best = model;
    double best_ly = detail::dev_eval(model, eval_set).l_y;

    std::vector<std::size_t> order(original_train.size());
    std::iota(order.begin(), order.end(), 0);
    const int d = model.classifier.embed.cols;

    for (int epoch = 1; epoch <= epochs; ++epoch) {
        rng.shuffle(order);
        for (std::size_t start = 0; start < order.size(); start += model.config.batch_size) {
            const std::size_t stop = std::min(order.size(), start + model.config.batch_size);
            const double inv_batch = 1.0 / static_cast<double>(stop - start);
            Mat g_ce(model.classifier.embed.rows, d);
            std::vector<double> g_cu(d, 0.0);
            double g_cb = 0.0;
            for (std::size_t i = start; i < stop; ++i) {
                const Document& doc = original_train[order[i]];
                const auto ids = model.vocab.encode(doc.tokens);
                const auto scores = selector_scores(ids, model.selector);
                const auto mask = select_topk(
                    scores, mask_cardinality(model.selector.k_percent, static_cast<int>(ids.size())));
                const int y = doc.label_for(model.aspect);
                auto tape = classifier_forward_backward(ids, mask.as_real(), y, model.classifier);
                if (!std::isfinite(tape.loss))
                    throw std::runtime_error("finetune_classifier: non-finite loss");
                for (std::size_t k = 0; k < g_ce.a.size(); ++k) g_ce.a[k] += inv_batch * tape.d_embed.a[k];
                for (int j = 0; j < d; ++j) g_cu[j] += inv_batch * tape.d_u[j];
                g_cb += inv_batch * tape.d_b;
            }
            opt_ce.step(model.classifier.embed.a.data(), g_ce.a.data(), g_ce.a.size());
            opt_cu.step(model.classifier.u.data(), g_cu.data(), g_cu.size());
            opt_cb.step(&model.classifier.b, &g_cb, 1);
        }
        const double dev_ly = detail::dev_eval(model, eval_set).l_y;
        if (dev_ly < best_ly) {
            best_ly = dev_ly;
            best = model;
        }
    }
    return best;
}

// ---------------------------------------------------------------------------
// Grid-search model selection
// ---------------------------------------------------------------------------

struct GridResult {
    double lambda_r;   // the candidate hyperparameter
    double l_c;        // coherency cost (unweighted transitions / T, dev mean)
    double l_y;        // classification cost (dev mean cross-entropy)
};

// Minimizer of lambda_c * L_c + lambda_y * L_y where each weight is the
// inverse of that cost's mean across the grid. Returns the index of the
// winner; ties go to the earlier entry.
inline std::size_t model_select(const std::vector<GridResult>& results) {
    if (results.empty()) throw std::invalid_argument("model_select: empty grid");
    double mean_c = 0.0, mean_y = 0.0;
    for (const auto& r : results) {
        mean_c += r.l_c;
        mean_y += r.l_y;
    }
    mean_c /= static_cast<double>(results.size());
    mean_y /= static_cast<double>(results.size());
    const double wc = mean_c > 0.0 ? 1.0 / mean_c : 0.0;
    const double wy = mean_y > 0.0 ? 1.0 / mean_y : 0.0;
    std::size_t best = 0;
    double best_score = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < results.size(); ++i) {
        const double score = wc * results[i].l_c + wy * results[i].l_y;
        if (score < best_score) {
            best_score = score;
            best = i;
        }
    }
    return best;
}

// Second-stage grid around the stage-1 winner: {best-2, best-1, best+1, best+2},
// clamped to nonnegative values and deduplicated.
inline std::vector<double> refine_grid(double best, const std::vector<double>& stage1) {
    std::set<double> seen(stage1.begin(), stage1.end());
    std::vector<double> out;
    for (double delta : {-2.0, -1.0, 1.0, 2.0}) {
        const double v = best + delta;
        if (v < 0.0) continue;
        if (seen.insert(v).second) out.push_back(v);
    }
    return out;
}

}  // namespace cfrat
