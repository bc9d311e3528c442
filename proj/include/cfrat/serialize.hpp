// JSON / JSONL persistence for corpora, configs and probability tables.
//
// Corpus files are JSON Lines, one document per line:
//   {"id":..,"tokens":[..],"labels":{"aspect":0|1,..},
//    "masks":{"aspect":[0,1,..],..},"provenance":"original","source_id":..}
// (source_id appears on generated documents only).
#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "cfrat/corpus.hpp"
#include "cfrat/info_core.hpp"

namespace cfrat {

using Json = nlohmann::ordered_json;

inline Json document_to_json(const Document& doc) {
    Json j;
    j["id"] = doc.id;
    j["tokens"] = doc.tokens;
    Json labels = Json::object();
    for (const auto& [aspect, label] : doc.labels) labels[aspect] = label;
    j["labels"] = labels;
    Json masks = Json::object();
    for (const auto& [aspect, mask] : doc.masks) masks[aspect] = mask;
    j["masks"] = masks;
    j["provenance"] = doc.provenance;
    if (doc.provenance != "original") j["source_id"] = doc.source_id;
    return j;
}

inline Document document_from_json(const Json& j) {
    Document doc;
    doc.id = j.at("id").get<std::int64_t>();
    doc.tokens = j.at("tokens").get<std::vector<std::string>>();
    for (const auto& [aspect, label] : j.at("labels").items())
        doc.labels[aspect] = label.get<int>();
    for (const auto& [aspect, mask] : j.at("masks").items())
        doc.masks[aspect] = mask.get<std::vector<std::uint8_t>>();
    doc.provenance = j.at("provenance").get<std::string>();
    doc.source_id = j.value("source_id", static_cast<std::int64_t>(-1));
    if (!doc.tokens.empty())
        for (const auto& [aspect, mask] : doc.masks)
            if (mask.size() != doc.tokens.size())
                throw std::invalid_argument("document: mask length mismatch for aspect " + aspect);
    return doc;
}

inline std::string corpus_to_jsonl(const Corpus& corpus) {
    std::ostringstream out;
    for (const auto& doc : corpus) out << document_to_json(doc).dump() << '\n';
    return out.str();
}

inline Corpus corpus_from_jsonl(const std::string& text) {
    Corpus corpus;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        corpus.push_back(document_from_json(Json::parse(line)));
    }
    return corpus;
}

inline void save_corpus(const Corpus& corpus, const std::filesystem::path& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for writing: " + path.string());
    f << corpus_to_jsonl(corpus);
}

inline Corpus load_corpus(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for reading: " + path.string());
    std::ostringstream ss;
    ss << f.rdbuf();
    return corpus_from_jsonl(ss.str());
}

// Joints serialize as arrays of cells {x1,x2,y1,p}.
inline Json joint_to_json(const JointDistribution& joint) {
    Json cells = Json::array();
    for (int x1 = 0; x1 < joint.size(Var::X1); ++x1)
        for (int x2 = 0; x2 < joint.size(Var::X2); ++x2)
            for (int y = 0; y < joint.size(Var::Y1); ++y) {
                Json cell;
                cell["x1"] = x1;
                cell["x2"] = x2;
                cell["y1"] = y;
                cell["p"] = joint.cell(x1, x2, y);
                cells.push_back(cell);
            }
    return cells;
}

inline JointDistribution joint_from_json(const Json& cells) {
    int n1 = 0, n2 = 0, ny = 0;
    for (const auto& c : cells) {
        n1 = std::max(n1, c.at("x1").get<int>() + 1);
        n2 = std::max(n2, c.at("x2").get<int>() + 1);
        ny = std::max(ny, c.at("y1").get<int>() + 1);
    }
    std::vector<double> p(static_cast<std::size_t>(n1) * n2 * ny, 0.0);
    for (const auto& c : cells)
        p[(static_cast<std::size_t>(c.at("x1").get<int>()) * n2 + c.at("x2").get<int>()) * ny +
          c.at("y1").get<int>()] = c.at("p").get<double>();
    return JointDistribution(n1, n2, ny, std::move(p));
}

inline Json corpus_config_to_json(const CorpusConfig& config) {
    Json j;
    Json aspects = Json::array();
    for (const auto& a : config.aspects) {
        Json aj;
        aj["id"] = a.id;
        aj["pos_pool"] = a.pos_pool;
        aj["neg_pool"] = a.neg_pool;
        aj["tokens_per_aspect"] = {a.min_aspect_tokens, a.max_aspect_tokens};
        aj["sentence_tokens"] = {a.min_sentence_tokens, a.max_sentence_tokens};
        if (a.token_noise >= 0.0) aj["token_noise"] = a.token_noise;
        aspects.push_back(aj);
    }
    j["aspects"] = aspects;
    j["filler_pool"] = config.filler_pool;
    j["num_documents"] = config.num_documents;
    j["correlation"] = config.correlation;
    j["binarize_hi"] = config.binarize_hi;
    j["binarize_lo"] = config.binarize_lo;
    j["token_noise_rate"] = config.token_noise_rate;
    j["max_tokens"] = config.max_tokens;
    j["seed"] = config.seed;
    return j;
}

inline CorpusConfig corpus_config_from_json(const Json& j) {
    CorpusConfig config;
    for (const auto& aj : j.at("aspects")) {
        AspectSpec a;
        a.id = aj.at("id").get<std::string>();
        a.pos_pool = aj.at("pos_pool").get<std::vector<std::string>>();
        a.neg_pool = aj.at("neg_pool").get<std::vector<std::string>>();
        if (aj.contains("tokens_per_aspect")) {
            a.min_aspect_tokens = aj.at("tokens_per_aspect").at(0).get<int>();
            a.max_aspect_tokens = aj.at("tokens_per_aspect").at(1).get<int>();
        }
        if (aj.contains("sentence_tokens")) {
            a.min_sentence_tokens = aj.at("sentence_tokens").at(0).get<int>();
            a.max_sentence_tokens = aj.at("sentence_tokens").at(1).get<int>();
        }
        a.token_noise = aj.value("token_noise", a.token_noise);
        config.aspects.push_back(std::move(a));
    }
    config.filler_pool = j.at("filler_pool").get<std::vector<std::string>>();
    config.num_documents = j.value("num_documents", config.num_documents);
    config.correlation = j.at("correlation").get<std::vector<std::vector<double>>>();
    config.binarize_hi = j.value("binarize_hi", config.binarize_hi);
    config.binarize_lo = j.value("binarize_lo", config.binarize_lo);
    config.token_noise_rate = j.value("token_noise_rate", config.token_noise_rate);
    config.max_tokens = j.value("max_tokens", config.max_tokens);
    config.seed = j.value("seed", config.seed);
    config.validate();
    return config;
}

inline Json load_json(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open for reading: " + path.string());
    return Json::parse(f);
}

inline void save_json(const Json& j, const std::filesystem::path& path, int indent = 2) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for writing: " + path.string());
    f << j.dump(indent) << '\n';
}

}  // namespace cfrat
