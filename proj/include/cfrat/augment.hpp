// Dataset augmentation: counterfactual (CDA), factual (FDA) and antonym
// substitution (ANT). Each method derives one generated document per
// original and concatenates originals with the generated set.
#pragma once

#include <functional>
#include <map>
#include <set>
#include <stdexcept>
#include <string>

#include "cfrat/corpus.hpp"
#include "cfrat/infill.hpp"
#include "cfrat/rationale.hpp"

namespace cfrat {

// Originals followed by generated documents carrying provenance tags and
// back-references to their source ids.
using AugmentedCorpus = Corpus;

using MaskFn = std::function<RationaleMask(const Document&)>;
using InfillFn = std::function<Document(const Document&, const RationaleMask&, int target_class)>;

inline MaskFn selector_mask_fn(const RationaleModel& model) {
    return [&model](const Document& doc) { return model.mask_for(doc); };
}

// The document's own ground-truth rationale for an aspect (the perfect
// selector of the idealized analysis).
inline MaskFn ground_truth_mask_fn(const std::string& aspect) {
    return [aspect](const Document& doc) {
        RationaleMask mask;
        mask.bits = doc.mask_for(aspect);
        return mask;
    };
}

inline InfillFn cf_infiller(const InfillModel& infill0, const InfillModel& infill1) {
    return [&infill0, &infill1](const Document& doc, const RationaleMask& mask, int target_class) {
        return decode_counterfactual(doc, mask, target_class,
                                     target_class == 1 ? infill1 : infill0);
    };
}

inline InfillFn oracle_infiller(const CorpusConfig& generator) {
    return [generator](const Document& doc, const RationaleMask& mask, int target_class) {
        return oracle_infill(doc, mask, target_class, generator);
    };
}

// Stable concatenation with referential integrity checks.
inline AugmentedCorpus concat_augmented(const Corpus& original, const Corpus& generated) {
    std::set<std::int64_t> ids;
    for (const auto& doc : original)
        if (!ids.insert(doc.id).second)
            throw std::invalid_argument("concat_augmented: duplicate id " + std::to_string(doc.id));
    AugmentedCorpus out = original;
    for (const auto& doc : generated) {
        if (!ids.insert(doc.id).second)
            throw std::invalid_argument("concat_augmented: id collision at " + std::to_string(doc.id));
        if (doc.provenance != "original" && !ids.count(doc.source_id))
            throw std::invalid_argument("concat_augmented: dangling source_id " +
                                        std::to_string(doc.source_id));
        out.push_back(doc);
    }
    return out;
}

namespace detail {

// Ground-truth masks carry over from the source, with the replaced positions
// re-tagged to the intended target aspect.
inline void retag_masks(Document& doc, const RationaleMask& mask, const std::string& aspect) {
    for (auto& [owner, bits] : doc.masks) {
        for (std::size_t t = 0; t < mask.size() && t < bits.size(); ++t) {
            if (!mask.bits[t]) continue;
            bits[t] = owner == aspect ? 1 : 0;
        }
    }
}

inline std::int64_t id_offset(const Corpus& corpus) {
    std::int64_t max_id = -1;
    for (const auto& doc : corpus) max_id = std::max(max_id, doc.id);
    return max_id + 1;
}

inline AugmentedCorpus augment_with(const Corpus& corpus, const std::string& aspect,
                                    const MaskFn& mask_fn, const std::string& provenance,
                                    bool flip_label, const InfillFn& infill) {
    const std::int64_t offset = detail::id_offset(corpus);
    Corpus generated;
    generated.reserve(corpus.size());
    for (const auto& doc : corpus) {
        const auto mask = mask_fn(doc);
        const int y = doc.label_for(aspect);
        const int target = flip_label ? 1 - y : y;
        Document gen = infill(doc, mask, target);
        gen.id = offset + doc.id;
        gen.source_id = doc.id;
        gen.provenance = provenance;
        gen.labels[aspect] = target;
        detail::retag_masks(gen, mask, aspect);
        generated.push_back(std::move(gen));
    }
    return concat_augmented(corpus, generated);
}

}  // namespace detail

// Counterfactual augmentation: regenerate the rationale for the flipped
// label and add the flipped-label document.
inline AugmentedCorpus make_cda(const Corpus& corpus, const std::string& aspect, const MaskFn& mask_fn,
                                const InfillFn& infill) {
    return detail::augment_with(corpus, aspect, mask_fn, "cda", /*flip_label=*/true, infill);
}

inline AugmentedCorpus make_cda(const Corpus& corpus, const RationaleModel& selector,
                                const InfillFn& infill) {
    return make_cda(corpus, selector.aspect, selector_mask_fn(selector), infill);
}

// Factual augmentation: same generation, same label.
inline AugmentedCorpus make_fda(const Corpus& corpus, const std::string& aspect, const MaskFn& mask_fn,
                                const InfillFn& infill) {
    return detail::augment_with(corpus, aspect, mask_fn, "fda", /*flip_label=*/false, infill);
}

inline AugmentedCorpus make_fda(const Corpus& corpus, const RationaleModel& selector,
                                const InfillFn& infill) {
    return make_fda(corpus, selector.aspect, selector_mask_fn(selector), infill);
}

// Antonym substitution inside the rationale: mapped tokens flip, unmapped
// tokens stay, the label flips.
inline AugmentedCorpus make_ant(const Corpus& corpus, const std::string& aspect, const MaskFn& mask_fn,
                                const std::map<std::string, std::string>& antonyms) {
    const InfillFn substitute = [&antonyms](const Document& doc, const RationaleMask& mask,
                                            int /*target*/) {
        if (doc.tokens.size() != mask.size())
            throw std::invalid_argument("make_ant: mask length does not match document");
        Document out = doc;
        for (std::size_t t = 0; t < mask.size(); ++t) {
            if (!mask.bits[t]) continue;
            auto it = antonyms.find(out.tokens[t]);
            if (it != antonyms.end()) out.tokens[t] = it->second;
        }
        return out;
    };
    return detail::augment_with(corpus, aspect, mask_fn, "ant", /*flip_label=*/true, substitute);
}

inline AugmentedCorpus make_ant(const Corpus& corpus, const RationaleModel& selector,
                                const std::map<std::string, std::string>& antonyms) {
    return make_ant(corpus, selector.aspect, selector_mask_fn(selector), antonyms);
}

}  // namespace cfrat
