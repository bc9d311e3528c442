// Empirical 2x2x2 joints from token-occurrence features over a corpus.
#pragma once

#include <functional>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "cfrat/corpus.hpp"
#include "cfrat/info_core.hpp"

namespace cfrat {

// A named boolean feature of a document.
struct TokenPredicate {
    std::string name;
    std::function<bool(const Document&)> fn;

    bool operator()(const Document& doc) const { return fn(doc); }
};

// Fires if any token of the set occurs in the document.
inline TokenPredicate any_of_predicate(std::string name, const std::vector<std::string>& tokens) {
    auto set = std::make_shared<std::set<std::string>>(tokens.begin(), tokens.end());
    return {std::move(name), [set](const Document& doc) {
                for (const auto& t : doc.tokens)
                    if (set->count(t)) return true;
                return false;
            }};
}

// Fires if the two tokens occur consecutively.
inline TokenPredicate bigram_predicate(std::string first, std::string second) {
    std::string name = first + " " + second;
    return {std::move(name), [first, second](const Document& doc) {
                for (std::size_t i = 0; i + 1 < doc.tokens.size(); ++i)
                    if (doc.tokens[i] == first && doc.tokens[i + 1] == second) return true;
                return false;
            }};
}

// Empirical joint over (feature_a fires, feature_b fires, aspect label).
// Additive smoothing spreads `smoothing` pseudo-counts over each of the 8
// cells; with smoothing disabled a feature that never fires (or always
// fires) leaves a conditional undefined and is rejected.
inline JointDistribution estimate_binary_joint(const Corpus& corpus, const TokenPredicate& feature_a,
                                               const TokenPredicate& feature_b, const std::string& aspect,
                                               double smoothing = 1.0) {
    if (corpus.empty()) throw std::invalid_argument("estimate_binary_joint: empty corpus");
    if (smoothing < 0.0) throw std::invalid_argument("estimate_binary_joint: negative smoothing");
    double counts[2][2][2] = {};
    for (const auto& doc : corpus) {
        const int a = feature_a(doc) ? 1 : 0;
        const int b = feature_b(doc) ? 1 : 0;
        const int y = doc.label_for(aspect);
        counts[a][b][y] += 1.0;
    }
    if (smoothing == 0.0) {
        double a_fires = 0.0, b_fires = 0.0;
        for (int b = 0; b < 2; ++b)
            for (int y = 0; y < 2; ++y) {
                a_fires += counts[1][b][y];
                b_fires += counts[b][1][y];
            }
        if (a_fires == 0.0)
            throw std::runtime_error("estimate_binary_joint: degenerate conditional, feature '" +
                                     feature_a.name + "' never fires and smoothing is disabled");
        if (b_fires == 0.0)
            throw std::runtime_error("estimate_binary_joint: degenerate conditional, feature '" +
                                     feature_b.name + "' never fires and smoothing is disabled");
    }
    const double total = static_cast<double>(corpus.size()) + 8.0 * smoothing;
    std::vector<double> cells(8);
    std::size_t i = 0;
    for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b)
            for (int y = 0; y < 2; ++y) cells[i++] = (counts[a][b][y] + smoothing) / total;
    return JointDistribution(2, 2, 2, std::move(cells));
}

}  // namespace cfrat
