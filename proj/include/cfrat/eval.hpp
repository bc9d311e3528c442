// Evaluation: token-level rationale precision/recall/F1 against ground-truth
// masks, dev accuracy, empirical mutual-information audits and degenerate-run
// detection, plus CSV reporting.
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "cfrat/corpus.hpp"
#include "cfrat/empirical.hpp"
#include "cfrat/rationale.hpp"
#include "cfrat/util.hpp"

namespace cfrat {

struct RationaleMetrics {
    double precision = 0.0;  // percent
    double recall = 0.0;
    double f1 = 0.0;
};

// Per-document token-level metrics averaged across documents (macro
// average); documents with empty gold rationales are excluded.
inline RationaleMetrics rationale_metrics(const std::vector<RationaleMask>& predicted,
                                          const std::vector<std::vector<std::uint8_t>>& gold) {
    if (predicted.size() != gold.size())
        throw std::invalid_argument("rationale_metrics: document count mismatch");
    RationaleMetrics out;
    double n = 0.0;
    for (std::size_t i = 0; i < predicted.size(); ++i) {
        if (predicted[i].size() != gold[i].size())
            throw std::invalid_argument("rationale_metrics: mask length mismatch at document " +
                                        std::to_string(i));
        double tp = 0, pred = 0, g = 0;
        for (std::size_t t = 0; t < gold[i].size(); ++t) {
            pred += predicted[i].bits[t] ? 1 : 0;
            g += gold[i][t] ? 1 : 0;
            tp += (predicted[i].bits[t] && gold[i][t]) ? 1 : 0;
        }
        if (g == 0) continue;  // no annotated rationale for this document
        const double p = pred > 0 ? tp / pred : 0.0;
        const double r = tp / g;
        out.precision += p;
        out.recall += r;
        out.f1 += (p + r) > 0 ? 2.0 * p * r / (p + r) : 0.0;
        n += 1.0;
    }
    if (n > 0) {
        out.precision *= 100.0 / n;
        out.recall *= 100.0 / n;
        out.f1 *= 100.0 / n;
    }
    return out;
}

inline RationaleMetrics rationale_metrics(const RationaleModel& model, const Corpus& annotated) {
    std::vector<RationaleMask> predicted;
    std::vector<std::vector<std::uint8_t>> gold;
    predicted.reserve(annotated.size());
    for (const auto& doc : annotated) {
        predicted.push_back(model.mask_for(doc));
        gold.push_back(doc.mask_for(model.aspect));
    }
    return rationale_metrics(predicted, gold);
}

using PredictFn = std::function<double(const Document&)>;

// Percent of correct 0.5-thresholded predictions.
inline double dev_accuracy(const PredictFn& predict, const Corpus& dev, const std::string& aspect) {
    if (dev.empty()) return 0.0;
    double correct = 0.0;
    for (const auto& doc : dev)
        correct += (predict(doc) >= 0.5 ? 1 : 0) == doc.label_for(aspect) ? 1.0 : 0.0;
    return 100.0 * correct / static_cast<double>(dev.size());
}

inline double dev_accuracy(const RationaleModel& model, const Corpus& dev) {
    return dev_accuracy([&model](const Document& d) { return model.predict(d); }, dev, model.aspect);
}

struct FeatureMi {
    std::string feature;
    double mi_bits;
};

// I(feature, label) per feature via the empirical 2x2x2 joint, sorted
// descending by information content.
inline std::vector<FeatureMi> measure_feature_mi(const Corpus& corpus,
                                                 const std::vector<TokenPredicate>& features,
                                                 const std::string& aspect, double smoothing = 1.0) {
    std::vector<FeatureMi> out;
    out.reserve(features.size());
    for (const auto& feature : features) {
        const auto joint = estimate_binary_joint(corpus, feature, feature, aspect, smoothing);
        out.push_back({feature.name, information_measures(joint, Var::Y1, Var::X1).mutual_information});
    }
    std::stable_sort(out.begin(), out.end(),
                     [](const FeatureMi& a, const FeatureMi& b) { return a.mi_bits > b.mi_bits; });
    return out;
}

// Expected precision of a uniformly random fixed-percentage mask: for each
// document the expected hit rate is gold-cardinality / length, independent
// of how many tokens the mask draws.
inline double random_mask_precision(const Corpus& annotated, const std::string& aspect) {
    double total = 0.0, n = 0.0;
    for (const auto& doc : annotated) {
        if (doc.tokens.empty()) continue;
        const auto& gold = doc.mask_for(aspect);
        double g = 0;
        for (auto b : gold) g += b ? 1 : 0;
        if (g == 0) continue;
        total += g / static_cast<double>(doc.tokens.size());
        n += 1.0;
    }
    return n > 0 ? 100.0 * total / n : 0.0;
}

struct ExperimentRecord {
    std::string method;  // MMI | FDA | ANT | CDA
    std::string regime;  // correlated | decorrelated
    std::string aspect;
    std::uint64_t seed = 0;
    double rat_prec = 0.0;
    double rat_rec = 0.0;
    double rat_f1 = 0.0;
    double dev_acc = 0.0;
    bool degenerate = false;
};

struct DegeneracyThresholds {
    double precision_margin = 2.0;  // points above the random-mask baseline
    double accuracy_floor = 55.0;   // percent
};

// A run with little or no selector skill: precision within a couple points
// of a random mask, or a classifier near chance.
inline bool detect_degenerate(const ExperimentRecord& record, double random_baseline,
                              const DegeneracyThresholds& thresholds = {}) {
    return record.rat_prec <= random_baseline + thresholds.precision_margin ||
           record.dev_acc <= thresholds.accuracy_floor;
}

// ---------------------------------------------------------------------------
// Reporting
// ---------------------------------------------------------------------------

inline const std::vector<std::string>& results_csv_header() {
    static const std::vector<std::string> header = {"method", "regime",  "aspect",  "seed",      "rat_prec",
                                                    "rat_rec", "rat_f1", "dev_acc", "degenerate"};
    return header;
}

inline std::string results_csv(const std::vector<ExperimentRecord>& records) {
    CsvWriter csv(results_csv_header());
    for (const auto& r : records)
        csv.add_row({r.method, r.regime, r.aspect, std::to_string(r.seed), format_double(r.rat_prec),
                     format_double(r.rat_rec), format_double(r.rat_f1), format_double(r.dev_acc),
                     r.degenerate ? "1" : "0"});
    return csv.str();
}

inline std::vector<ExperimentRecord> results_from_csv(const std::string& text) {
    std::vector<ExperimentRecord> out;
    std::istringstream in(text);
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (first) {
            first = false;
            continue;
        }
        std::istringstream cells(line);
        std::string cell;
        std::vector<std::string> row;
        while (std::getline(cells, cell, ',')) row.push_back(cell);
        if (row.size() != results_csv_header().size())
            throw std::invalid_argument("results_from_csv: malformed row: " + line);
        ExperimentRecord r;
        r.method = row[0];
        r.regime = row[1];
        r.aspect = row[2];
        r.seed = std::stoull(row[3]);
        r.rat_prec = std::stod(row[4]);
        r.rat_rec = std::stod(row[5]);
        r.rat_f1 = std::stod(row[6]);
        r.dev_acc = std::stod(row[7]);
        r.degenerate = row[8] == "1";
        out.push_back(std::move(r));
    }
    return out;
}

struct AggregateRow {
    std::string method, regime, aspect;
    int n_runs = 0;
    int n_degenerate = 0;
    double prec_mean = 0, prec_std = 0;
    double rec_mean = 0, rec_std = 0;
    double f1_mean = 0, f1_std = 0;
    double acc_mean = 0, acc_std = 0;
};

// Mean and sample standard deviation per (method, regime, aspect). With
// include_degenerate = false, flagged runs are dropped before aggregating
// (both variants are reported side by side downstream).
inline std::vector<AggregateRow> aggregate_records(const std::vector<ExperimentRecord>& records,
                                                   bool include_degenerate = true) {
    std::map<std::tuple<std::string, std::string, std::string>, std::vector<const ExperimentRecord*>>
        groups;
    for (const auto& r : records) {
        if (!include_degenerate && r.degenerate) continue;
        groups[{r.method, r.regime, r.aspect}].push_back(&r);
    }
    std::vector<AggregateRow> out;
    for (const auto& [key, rows] : groups) {
        AggregateRow agg;
        std::tie(agg.method, agg.regime, agg.aspect) = key;
        agg.n_runs = static_cast<int>(rows.size());
        auto stat = [&rows](auto field, double& mean, double& stddev) {
            double m = 0;
            for (const auto* r : rows) m += field(*r);
            m /= static_cast<double>(rows.size());
            double var = 0;
            for (const auto* r : rows) var += (field(*r) - m) * (field(*r) - m);
            mean = m;
            stddev = rows.size() > 1 ? std::sqrt(var / static_cast<double>(rows.size() - 1)) : 0.0;
        };
        stat([](const ExperimentRecord& r) { return r.rat_prec; }, agg.prec_mean, agg.prec_std);
        stat([](const ExperimentRecord& r) { return r.rat_rec; }, agg.rec_mean, agg.rec_std);
        stat([](const ExperimentRecord& r) { return r.rat_f1; }, agg.f1_mean, agg.f1_std);
        stat([](const ExperimentRecord& r) { return r.dev_acc; }, agg.acc_mean, agg.acc_std);
        for (const auto* r : rows) agg.n_degenerate += r->degenerate ? 1 : 0;
        out.push_back(std::move(agg));
    }
    return out;
}

inline std::string aggregate_csv(const std::vector<AggregateRow>& rows) {
    CsvWriter csv({"method", "regime", "aspect", "n_runs", "n_degenerate", "rat_prec_mean",
                   "rat_prec_std", "rat_rec_mean", "rat_rec_std", "rat_f1_mean", "rat_f1_std",
                   "dev_acc_mean", "dev_acc_std"});
    for (const auto& r : rows)
        csv.add_row({r.method, r.regime, r.aspect, std::to_string(r.n_runs),
                     std::to_string(r.n_degenerate), format_double(r.prec_mean),
                     format_double(r.prec_std), format_double(r.rec_mean), format_double(r.rec_std),
                     format_double(r.f1_mean), format_double(r.f1_std), format_double(r.acc_mean),
                     format_double(r.acc_std)});
    return csv.str();
}

}  // namespace cfrat
