// Ready-made corpus configurations: a three-aspect beverage-review corpus in
// a correlated and a decorrelated flavor. The correlated regime gives the
// non-target aspects high label correlation with the target, which is what
// makes the rationale task hard.
#pragma once

#include "cfrat/corpus.hpp"

namespace cfrat {

inline CorpusConfig preset_corpus_config(double off_diagonal_correlation, int num_documents,
                                         std::uint64_t seed) {
    CorpusConfig config;
    config.aspects = {
        {"smell",
         {"fragrant", "aromatic", "floral", "inviting", "fresh", "sweetscented", "perfumed", "crisp",
          "delicate", "pleasant", "heady", "balanced"},
         {"rancid", "musty", "moldy", "offputting", "stale", "sourscented", "skunky", "acrid",
          "harsh", "unpleasant", "faint", "unbalanced"},
         3, 5, 7, 10},
        {"taste",
         {"delicious", "tasty", "savory", "luscious", "smooth", "flavorful", "hearty", "zesty",
          "mellow", "satisfying", "robust", "refined"},
         {"disgusting", "bland", "insipid", "vile", "bitter", "flavorless", "watery", "flat",
          "cloying", "disappointing", "weak", "coarse"},
         3, 5, 7, 10},
        {"look",
         {"sparkling", "radiant", "golden", "clear", "luminous", "vivid", "glossy", "elegant",
          "bright", "attractive", "creamy", "lacy"},
         {"murky", "dull", "brownish", "cloudy", "drab", "muted", "matte", "clumsy", "dim", "ugly",
          "oily", "lifeless"},
         3, 5, 7, 10},
    };
    config.filler_pool = {
        "the",     "a",       "of",     "and",     "it",      "this",    "with",    "was",
        "poured",  "into",    "glass",  "bottle",  "from",    "brewery", "tonight", "evening",
        "friend",  "shared",  "table",  "notes",   "review",  "overall", "style",   "label",
        "pour",    "serving", "medium", "amber",   "pint",    "tap",     "session", "batch",
        "tried",   "again",   "second", "opinion", "earlier", "simple",  "classic", "standard"};
    config.num_documents = num_documents;
    const double c = off_diagonal_correlation;
    config.correlation = {{1.0, c, c}, {c, 1.0, c}, {c, c, 1.0}};
    config.seed = seed;
    return config;
}

inline CorpusConfig correlated_corpus_config(int num_documents, std::uint64_t seed) {
    return preset_corpus_config(0.95, num_documents, seed);
}

inline CorpusConfig decorrelated_corpus_config(int num_documents, std::uint64_t seed) {
    return preset_corpus_config(0.0, num_documents, seed);
}

}  // namespace cfrat
