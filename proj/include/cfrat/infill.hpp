// Class-conditioned counterfactual infilling.
//
// For each target class a linear-softmax token model scores the vocabulary
// from (left-context window of size 2, bag of kept tokens); it is trained
// with a reinforcement-style flip loss through a frozen rationale model plus
// an adversarial loss against a bag-of-tokens discriminator:
//
//   L_CFP = lambda_RL * L_RL - lambda_A * L_A,     L_D = L_A / lambda_A
//
// Token choices are discrete; gradients pass through them straight-through
// (backward treats the chosen one-hot as the softmax that produced it).
// Training infills all rationale positions in one step from a masked context
// view; inference decodes them left to right, greedily.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "cfrat/corpus.hpp"
#include "cfrat/rationale.hpp"
#include "cfrat/rng.hpp"

namespace cfrat {

struct CFPConfig {
    double lambda_rl = 5.0;
    double lambda_a = 10.0;
    double peak_learning_rate = 0.02;  // linear warmup to the peak, then linear decay to zero
    double disc_learning_rate = 30.0;  // SGD step on the 1/lambda_A-scaled loss; sized for 1/T bag features
    int warmup_steps = 100;
    int epochs = 7;
    int batch_size = 25;
    int eval_interval = 50;            // checkpoint-metric cadence, in steps
    int checkpoint_samples = 500;      // first-N training docs for the metric
    std::vector<double> lambda_grid = {1, 5, 10, 15, 20, 25};  // for both axes, lambda_RL <= lambda_A
    std::uint64_t seed = 0;

    void validate() const {
        // lambda_rl = 0 is allowed so the pure-adversarial ablation is runnable;
        // lambda_a scales the discriminator loss and must stay positive.
        if (lambda_rl < 0.0 || lambda_a <= 0.0)
            throw std::invalid_argument("CFPConfig: lambda_rl must be >= 0 and lambda_a > 0");
        if (peak_learning_rate <= 0.0 || warmup_steps < 1 || epochs < 1 || batch_size < 1 ||
            eval_interval < 1 || checkpoint_samples < 1)
            throw std::invalid_argument("CFPConfig: bad schedule parameters");
    }
};

// Conditional token scorer for one target class:
//   logits = bias + A1[left1] + A2[left2] + C . bag(kept tokens)
// Context rows reserve two extra ids: out-of-document and masked-position.
struct InfillModel {
    int target_class = 1;
    Vocabulary vocab;
    Mat ctx1;                  // (V+2) x V
    Mat ctx2;                  // (V+2) x V
    Mat bag;                   // V x V, column-indexed by kept token
    std::vector<double> bias;  // V

    int pad_id() const { return vocab.size(); }
    int mask_id() const { return vocab.size() + 1; }

    // context_view holds token ids with mask_id() at undecoded rationale
    // positions; bag_counts are (token id, count) pairs over kept tokens.
    std::vector<double> logits(const std::vector<int>& context_view, int position,
                               const std::vector<std::pair<int, double>>& bag_counts) const {
        const int V = vocab.size();
        std::vector<double> out(bias);
        const int c1 = position >= 1 ? context_view[position - 1] : pad_id();
        const int c2 = position >= 2 ? context_view[position - 2] : pad_id();
        for (int v = 0; v < V; ++v) out[v] += ctx1.at(c1, v) + ctx2.at(c2, v);
        for (const auto& [token, weight] : bag_counts) {
            const double* col = bag.a.data() + static_cast<std::size_t>(token) * V;
            for (int v = 0; v < V; ++v) out[v] += weight * col[v];
        }
        return out;
    }
};

inline std::vector<double> softmax(const std::vector<double>& logits) {
    const double mx = *std::max_element(logits.begin(), logits.end());
    std::vector<double> p(logits.size());
    double total = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        p[i] = std::exp(logits[i] - mx);
        total += p[i];
    }
    for (auto& v : p) v /= total;
    return p;
}

inline int argmax_index(const std::vector<double>& v) {
    return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
}

// Linear real-vs-generated scorer over normalized bag-of-token features.
struct Discriminator {
    std::vector<double> weights;  // V
    double bias = 0.0;

    double real_probability(const std::vector<double>& features) const {
        double logit = bias;
        for (std::size_t v = 0; v < weights.size(); ++v) logit += weights[v] * features[v];
        return sigmoid(logit);
    }
};

inline std::vector<double> bag_features(const std::vector<int>& ids, int vocab_size) {
    std::vector<double> f(vocab_size, 0.0);
    if (ids.empty()) return f;
    for (int id : ids)
        if (id >= 0 && id < vocab_size) f[id] += 1.0;
    for (auto& v : f) v /= static_cast<double>(ids.size());
    return f;
}

// L_A and its discriminator-side gradients, scaled by 1/lambda_a exactly.
// Kept as a free function so one optimizer step is checkable by hand.
struct DiscriminatorGrad {
    double l_a = 0.0;       // unscaled adversarial cross-entropy (mean)
    double accuracy = 0.0;  // 0.5-thresholded real-vs-fake accuracy
    std::vector<double> d_weights;
    double d_bias = 0.0;
};

inline DiscriminatorGrad discriminator_loss_grad(const Discriminator& disc,
                                                 const std::vector<std::vector<double>>& real_features,
                                                 const std::vector<std::vector<double>>& fake_features,
                                                 double lambda_a) {
    DiscriminatorGrad out;
    out.d_weights.assign(disc.weights.size(), 0.0);
    const double n = static_cast<double>(real_features.size() + fake_features.size());
    if (n == 0) return out;
    const double inv_scaled = 1.0 / (lambda_a * n);
    for (int is_real = 0; is_real <= 1; ++is_real) {
        for (const auto& f : (is_real ? real_features : fake_features)) {
            const double p = disc.real_probability(f);
            out.l_a += bce_loss(p, is_real) / n;
            out.accuracy += ((p >= 0.5 ? 1 : 0) == is_real ? 1.0 : 0.0) / n;
            const double dlogit = (p - is_real) * inv_scaled;
            for (std::size_t v = 0; v < f.size(); ++v) out.d_weights[v] += dlogit * f[v];
            out.d_bias += dlogit;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Infilling
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<int> masked_positions(const RationaleMask& mask) {
    std::vector<int> out;
    for (std::size_t t = 0; t < mask.size(); ++t)
        if (mask.bits[t]) out.push_back(static_cast<int>(t));
    return out;
}

inline std::vector<std::pair<int, double>> kept_bag(const std::vector<int>& ids,
                                                    const RationaleMask& mask) {
    std::map<int, double> counts;
    double kept = 0.0;
    for (std::size_t t = 0; t < ids.size(); ++t) {
        if (mask.bits[t] || ids[t] < 0) continue;
        counts[ids[t]] += 1.0;
        kept += 1.0;
    }
    std::vector<std::pair<int, double>> out;
    out.reserve(counts.size());
    for (const auto& [token, count] : counts) out.emplace_back(token, kept > 0 ? count / kept : 0.0);
    return out;
}

}  // namespace detail

// One prediction per rationale position, all from the same masked context
// view (the training-time regime). Returns the infilled ids and, optionally,
// each position's softmax for backpropagation.
inline std::vector<int> one_step_infill(const InfillModel& model, const std::vector<int>& ids,
                                        const RationaleMask& mask,
                                        std::vector<std::vector<double>>* probs_out = nullptr) {
    if (ids.size() != mask.size()) throw std::invalid_argument("one_step_infill: mask length mismatch");
    std::vector<int> view(ids);
    for (std::size_t t = 0; t < ids.size(); ++t) {
        if (mask.bits[t])
            view[t] = model.mask_id();
        else if (view[t] < 0)
            view[t] = model.pad_id();
    }
    const auto bag = detail::kept_bag(ids, mask);
    std::vector<int> out(ids);
    if (probs_out) probs_out->clear();
    for (int t : detail::masked_positions(mask)) {
        const auto q = softmax(model.logits(view, t, bag));
        out[t] = argmax_index(q);
        if (probs_out) probs_out->push_back(q);
    }
    return out;
}

// Left-to-right greedy decoding: each rationale token is conditioned on the
// kept tokens and the counterfactual tokens already decoded. Non-rationale
// tokens are copied verbatim.
inline Document decode_counterfactual(const Document& doc, const RationaleMask& mask,
                                      int target_class, const InfillModel& model) {
    if (doc.tokens.size() != mask.size())
        throw std::invalid_argument("decode_counterfactual: mask length does not match document");
    if (model.target_class != target_class)
        throw std::invalid_argument("decode_counterfactual: model conditions on the other class");
    const auto ids = model.vocab.encode(doc.tokens);
    std::vector<int> view(ids);
    for (std::size_t t = 0; t < view.size(); ++t) {
        if (mask.bits[t])
            view[t] = model.mask_id();
        else if (view[t] < 0)
            view[t] = model.pad_id();
    }
    const auto bag = detail::kept_bag(ids, mask);
    Document out = doc;
    for (int t : detail::masked_positions(mask)) {
        const auto q = softmax(model.logits(view, t, bag));
        const int choice = argmax_index(q);
        view[t] = choice;  // later positions condition on this decode
        out.tokens[t] = model.vocab.token(choice);
    }
    return out;
}

// Idealized infiller that reads the generator's true class-conditional pools:
// a masked position owned by an aspect is filled from that aspect's pool for
// the target class; unowned (filler) positions refill from the filler pool.
// Deterministic in (doc id, position).
inline Document oracle_infill(const Document& doc, const RationaleMask& mask, int target_class,
                              const CorpusConfig& generator) {
    if (doc.tokens.size() != mask.size())
        throw std::invalid_argument("oracle_infill: mask length does not match document");
    Document out = doc;
    for (std::size_t t = 0; t < mask.size(); ++t) {
        if (!mask.bits[t]) continue;
        const std::vector<std::string>* pool = &generator.filler_pool;
        for (const auto& spec : generator.aspects) {
            auto it = doc.masks.find(spec.id);
            if (it != doc.masks.end() && t < it->second.size() && it->second[t]) {
                pool = target_class == 1 ? &spec.pos_pool : &spec.neg_pool;
                break;
            }
        }
        const std::uint64_t h =
            derive_seed(static_cast<std::uint64_t>(doc.id) * 0x9e3779b97f4a7c15ULL + t, 0x0f111);
        out.tokens[t] = (*pool)[h % pool->size()];
    }
    return out;
}

// ---------------------------------------------------------------------------
// Checkpoint metric: 4.5a + t
// ---------------------------------------------------------------------------

struct CheckpointMetric {
    double a = 0.0;      // flip rate judged by the frozen rationale model
    double t = 0.0;      // entropy (bits) of the pooled infilled-token distribution
    double score = 0.0;  // 4.5a + t
};

inline double checkpoint_score(double a, double t) { return 4.5 * a + t; }

// Measured over the sample docs whose label differs from the infiller's
// target class, with one-step decoding (the training-time regime).
inline CheckpointMetric checkpoint_metric(const Corpus& samples, const InfillModel& infiller,
                                          const RationaleModel& frozen) {
    if (samples.empty()) throw std::invalid_argument("checkpoint_metric: no sample documents");
    std::map<int, double> infilled_counts;
    double infilled_total = 0.0;
    double flipped = 0.0, sources = 0.0;
    for (const auto& doc : samples) {
        if (doc.label_for(frozen.aspect) == infiller.target_class) continue;
        sources += 1.0;
        const auto ids = frozen.vocab.encode(doc.tokens);
        const auto mask = frozen.mask_for(doc);
        std::vector<int> gen_ids = infiller.vocab.encode(doc.tokens);
        const auto infilled = one_step_infill(infiller, gen_ids, mask);
        Document judged = doc;
        for (int t : detail::masked_positions(mask)) {
            judged.tokens[t] = infiller.vocab.token(infilled[t]);
            infilled_counts[infilled[t]] += 1.0;
            infilled_total += 1.0;
        }
        flipped += (frozen.predict(judged) >= 0.5 ? 1 : 0) == infiller.target_class ? 1.0 : 0.0;
    }
    if (sources == 0.0)
        throw std::invalid_argument("checkpoint_metric: no documents of the source class in sample");
    CheckpointMetric m;
    m.a = flipped / sources;
    for (const auto& [token, count] : infilled_counts) {
        const double p = count / infilled_total;
        m.t -= p * std::log2(p);
    }
    m.score = checkpoint_score(m.a, m.t);
    return m;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct CheckpointRow {
    int step;
    double a;
    double t;
    double score;
};

struct InfillTrainResult {
    InfillModel model;           // best checkpoint by 4.5a + t
    Discriminator discriminator;
    std::vector<CheckpointRow> log;
    bool mode_collapse_warning = false;
    int best_step = 0;
};

namespace detail {

struct CachedDoc {
    std::vector<int> ids;        // in the generator's vocabulary
    RationaleMask mask;          // frozen selector's rationale
    std::vector<int> positions;  // rationale positions, increasing
    std::vector<int> view;       // ids with mask_id at rationale positions, pad_id for OOV
    std::vector<std::pair<int, double>> bag;
};

inline double schedule(double peak, int warmup, int total, int step) {
    if (step <= warmup) return peak * static_cast<double>(step) / warmup;
    if (total <= warmup) return peak;
    return peak * static_cast<double>(total - step) / static_cast<double>(total - warmup);
}

}  // namespace detail

// Adversarial + RL training of one class-conditional infiller against a
// frozen rationale model. Reals shown to the discriminator carry the target
// class label; fakes are one-step counterfactuals built from the other class.
inline InfillTrainResult train_infiller(const Corpus& train, const RationaleModel& frozen,
                                        const CFPConfig& config, int target_class) {
    config.validate();
    if (train.empty()) throw std::invalid_argument("train_infiller: empty corpus");

    InfillModel model;
    model.target_class = target_class;
    model.vocab = frozen.vocab;
    const int V = model.vocab.size();
    model.ctx1 = Mat(V + 2, V);
    model.ctx2 = Mat(V + 2, V);
    model.bag = Mat(V, V);
    model.bias.assign(V, 0.0);

    Rng rng(derive_seed(config.seed, 0xcf0 + target_class));
    detail::random_init(model.ctx1, rng, 0.01);
    detail::random_init(model.ctx2, rng, 0.01);
    detail::random_init(model.bag, rng, 0.01);

    Discriminator disc;
    disc.weights.assign(V, 0.0);
    for (auto& w : disc.weights) w = rng.normal() * 0.01;

    // Cache sources (label != target) and reals (label == target).
    std::vector<detail::CachedDoc> sources;
    std::vector<std::vector<double>> real_feats;
    std::vector<double> rationale_counts(V, 1.0);  // add-1 smoothed
    for (const auto& doc : train) {
        if (doc.label_for(frozen.aspect) == target_class) {
            real_feats.push_back(bag_features(frozen.vocab.encode(doc.tokens), V));
        } else {
            detail::CachedDoc c;
            c.ids = model.vocab.encode(doc.tokens);
            c.mask = frozen.mask_for(doc);
            c.positions = detail::masked_positions(c.mask);
            c.view = c.ids;
            for (auto& v : c.view)
                if (v < 0) v = model.pad_id();
            for (int t : c.positions) {
                c.view[t] = model.mask_id();
                if (c.ids[t] >= 0) rationale_counts[c.ids[t]] += 1.0;
            }
            c.bag = detail::kept_bag(c.ids, c.mask);
            sources.push_back(std::move(c));
        }
    }
    if (sources.empty() || real_feats.empty())
        throw std::invalid_argument("train_infiller: need both classes in the corpus");

    // Count-based warm start: the bias carries the marginal distribution of
    // rationale tokens, so the first infills are plausible rationale words
    // that the frozen selector will actually select. This stands in for the
    // masked-language-model pretraining of the full-scale system.
    double count_total = 0.0;
    for (double c : rationale_counts) count_total += c;
    for (int v = 0; v < V; ++v) model.bias[v] = std::log(rationale_counts[v] / count_total);

    Corpus metric_samples(
        train.begin(),
        train.begin() + std::min<std::size_t>(train.size(), config.checkpoint_samples));

    const int steps_per_epoch =
        static_cast<int>((sources.size() + config.batch_size - 1) / config.batch_size);
    const int total_steps = steps_per_epoch * config.epochs;

    Adam opt_ctx1(model.ctx1.a.size(), config.peak_learning_rate);
    Adam opt_ctx2(model.ctx2.a.size(), config.peak_learning_rate);
    Adam opt_bag(model.bag.a.size(), config.peak_learning_rate);
    Adam opt_bias(model.bias.size(), config.peak_learning_rate);

    InfillTrainResult result;
    result.model = model;
    result.discriminator = disc;
    double best_score = -std::numeric_limits<double>::infinity();

    std::vector<std::size_t> src_order(sources.size()), real_order(real_feats.size());
    std::iota(src_order.begin(), src_order.end(), 0);
    std::iota(real_order.begin(), real_order.end(), 0);
    std::size_t real_cursor = 0;

    const int d = frozen.classifier.embed.cols;
    int step = 0;
    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        rng.shuffle(src_order);
        rng.shuffle(real_order);
        bool disc_perfect_all_epoch = true;
        for (std::size_t start = 0; start < src_order.size(); start += config.batch_size) {
            ++step;
            const std::size_t stop = std::min(src_order.size(), start + config.batch_size);
            const double lr = detail::schedule(config.peak_learning_rate, config.warmup_steps,
                                               total_steps, step);
            opt_ctx1.set_rate(lr);
            opt_ctx2.set_rate(lr);
            opt_bag.set_rate(lr);
            opt_bias.set_rate(lr);

            Mat g_ctx1(V + 2, V), g_ctx2(V + 2, V), g_bag(V, V);
            std::vector<double> g_bias(V, 0.0);

            std::vector<std::vector<double>> fake_feats;
            std::vector<const detail::CachedDoc*> batch;
            for (std::size_t i = start; i < stop; ++i) batch.push_back(&sources[src_order[i]]);
            std::vector<std::vector<double>> batch_reals;
            for (std::size_t i = start; i < stop; ++i) {
                batch_reals.push_back(real_feats[real_order[real_cursor]]);
                real_cursor = (real_cursor + 1) % real_order.size();
            }

            struct FakeTape {
                const detail::CachedDoc* doc;
                std::vector<int> infilled;
                std::vector<std::vector<double>> probs;
            };
            std::vector<FakeTape> tapes;
            for (const auto* doc : batch) {
                FakeTape tape;
                tape.doc = doc;
                tape.infilled = one_step_infill(model, doc->ids, doc->mask, &tape.probs);
                fake_feats.push_back(bag_features(tape.infilled, V));
                tapes.push_back(std::move(tape));
            }

            // Discriminator pass: L_D = L_A / lambda_A over this batch.
            const auto dg = discriminator_loss_grad(disc, batch_reals, fake_feats, config.lambda_a);
            if (dg.accuracy < 1.0) disc_perfect_all_epoch = false;

            // Generator pass: lambda_RL * L_RL - lambda_A * L_A.
            const double inv_batch = 1.0 / static_cast<double>(batch.size());
            const double n_adv = static_cast<double>(batch_reals.size() + fake_feats.size());
            for (std::size_t bi = 0; bi < tapes.size(); ++bi) {
                const auto& tape = tapes[bi];
                const auto& cached = *tape.doc;

                const auto frozen_grads =
                    frozen_loss_input_grads(frozen, tape.infilled, target_class);
                if (!std::isfinite(frozen_grads.loss))
                    throw std::runtime_error("train_infiller: non-finite RL loss at step " +
                                             std::to_string(step));
                const double p_fake = disc.real_probability(fake_feats[bi]);
                // Non-saturating realization of the -lambda_A * L_A term: the
                // push toward "looks real" is proportional to 1 - D(fake), so
                // it stays alive when the discriminator confidently rejects a
                // fake (the literal minimax gradient would vanish there).
                const double adv_dlogit = 1.0 - p_fake;
                const double T_doc = static_cast<double>(cached.ids.size());

                for (std::size_t pi = 0; pi < cached.positions.size(); ++pi) {
                    const int t = cached.positions[pi];
                    const auto& q = tape.probs[pi];

                    // dL/d(one-hot)[v], straight-through to the softmax.
                    std::vector<double> dh(V, 0.0);
                    for (int v = 0; v < V; ++v) {
                        double acc_c = 0.0;
                        for (int j = 0; j < d; ++j)
                            acc_c += frozen_grads.d_embed_c[t][j] * frozen.classifier.embed.at(v, j);
                        const double rl_term = config.lambda_rl * acc_c * inv_batch;
                        const double adv_term =
                            -config.lambda_a * adv_dlogit * disc.weights[v] / (T_doc * n_adv);
                        dh[v] = rl_term + adv_term;
                    }

                    // Through the softmax: dlogits = q * (dh - q.dh).
                    double dot = 0.0;
                    for (int v = 0; v < V; ++v) dot += dh[v] * q[v];
                    const int c1 = t >= 1 ? cached.view[t - 1] : model.pad_id();
                    const int c2 = t >= 2 ? cached.view[t - 2] : model.pad_id();
                    for (int v = 0; v < V; ++v) {
                        const double dl = q[v] * (dh[v] - dot);
                        g_bias[v] += dl;
                        g_ctx1.at(c1, v) += dl;
                        g_ctx2.at(c2, v) += dl;
                    }
                    for (const auto& [token, weight] : cached.bag) {
                        double* col = g_bag.a.data() + static_cast<std::size_t>(token) * V;
                        for (int v = 0; v < V; ++v) col[v] += weight * q[v] * (dh[v] - dot);
                    }
                }
            }

            opt_ctx1.step(model.ctx1.a.data(), g_ctx1.a.data(), g_ctx1.a.size());
            opt_ctx2.step(model.ctx2.a.data(), g_ctx2.a.data(), g_ctx2.a.size());
            opt_bag.step(model.bag.a.data(), g_bag.a.data(), g_bag.a.size());
            opt_bias.step(model.bias.data(), g_bias.data(), g_bias.size());

            // Hamstrung discriminator: plain SGD on the 1/lambda_A-scaled
            // loss, so larger lambda_A genuinely slows it down (a normalizing
            // optimizer would erase the scaling).
            for (std::size_t v = 0; v < disc.weights.size(); ++v)
                disc.weights[v] -= config.disc_learning_rate * dg.d_weights[v];
            disc.bias -= config.disc_learning_rate * dg.d_bias;

            if (step % config.eval_interval == 0 || step == total_steps) {
                const auto metric = checkpoint_metric(metric_samples, model, frozen);
                result.log.push_back({step, metric.a, metric.t, metric.score});
                if (metric.score > best_score) {
                    best_score = metric.score;
                    result.model = model;
                    result.discriminator = disc;
                    result.best_step = step;
                }
            }
        }
        if (disc_perfect_all_epoch) result.mode_collapse_warning = true;
    }
    if (result.log.empty()) {
        const auto metric = checkpoint_metric(metric_samples, model, frozen);
        result.log.push_back({step, metric.a, metric.t, metric.score});
        result.model = model;
        result.discriminator = disc;
        result.best_step = step;
    }
    return result;
}

struct CfPredictor {
    InfillModel infill0;
    InfillModel infill1;
    Discriminator disc0;
    Discriminator disc1;
    std::vector<CheckpointRow> log0;
    std::vector<CheckpointRow> log1;
    bool mode_collapse_warning = false;
};

// The two per-class infillers, trained independently against the same frozen
// rationale model.
inline CfPredictor train_infillers(const Corpus& train, const RationaleModel& frozen,
                                   const CFPConfig& config) {
    CfPredictor out;
    auto r0 = train_infiller(train, frozen, config, 0);
    auto r1 = train_infiller(train, frozen, config, 1);
    out.infill0 = std::move(r0.model);
    out.disc0 = std::move(r0.discriminator);
    out.log0 = std::move(r0.log);
    out.infill1 = std::move(r1.model);
    out.disc1 = std::move(r1.discriminator);
    out.log1 = std::move(r1.log);
    out.mode_collapse_warning = r0.mode_collapse_warning || r1.mode_collapse_warning;
    return out;
}

}  // namespace cfrat
