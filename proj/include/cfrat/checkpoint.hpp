// JSON checkpoints for trained models and CSV training logs.
#pragma once

#include <string>
#include <vector>

#include "cfrat/infill.hpp"
#include "cfrat/rationale.hpp"
#include "cfrat/serialize.hpp"
#include "cfrat/util.hpp"

namespace cfrat {

inline Json mat_to_json(const Mat& m) {
    Json rows = Json::array();
    for (int r = 0; r < m.rows; ++r) {
        Json row = Json::array();
        for (int c = 0; c < m.cols; ++c) row.push_back(m.at(r, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline Mat mat_from_json(const Json& j) {
    const int rows = static_cast<int>(j.size());
    const int cols = rows ? static_cast<int>(j.at(0).size()) : 0;
    Mat m(rows, cols);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) m.at(r, c) = j.at(r).at(c).get<double>();
    return m;
}

inline Json train_config_to_json(const TrainConfig& c) {
    Json j;
    j["lambda_r"] = c.lambda_r;
    j["learning_rate"] = c.learning_rate;
    j["epochs"] = c.epochs;
    j["batch_size"] = c.batch_size;
    j["patience"] = c.patience;
    j["finetune_epochs"] = c.finetune_epochs;
    j["embed_dim"] = c.embed_dim;
    j["k_percent"] = c.k_percent;
    j["seed"] = c.seed;
    return j;
}

inline TrainConfig train_config_from_json(const Json& j) {
    TrainConfig c;
    c.lambda_r = j.value("lambda_r", c.lambda_r);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.patience = j.value("patience", c.patience);
    c.finetune_epochs = j.value("finetune_epochs", c.finetune_epochs);
    c.embed_dim = j.value("embed_dim", c.embed_dim);
    c.k_percent = j.value("k_percent", c.k_percent);
    c.seed = j.value("seed", c.seed);
    return c;
}

inline Json model_to_json(const RationaleModel& m) {
    Json j;
    j["kind"] = "rationale_model";
    j["aspect"] = m.aspect;
    j["seed"] = m.seed;
    j["vocab"] = m.vocab.tokens();
    j["config"] = train_config_to_json(m.config);
    Json sel;
    sel["embed"] = mat_to_json(m.selector.embed);
    sel["w"] = m.selector.w;
    sel["b"] = m.selector.b;
    sel["k_percent"] = m.selector.k_percent;
    j["selector"] = sel;
    Json cls;
    cls["embed"] = mat_to_json(m.classifier.embed);
    cls["u"] = m.classifier.u;
    cls["b"] = m.classifier.b;
    j["classifier"] = cls;
    return j;
}

inline RationaleModel model_from_json(const Json& j) {
    RationaleModel m;
    m.aspect = j.at("aspect").get<std::string>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.vocab = Vocabulary::from_tokens(j.at("vocab").get<std::vector<std::string>>());
    m.config = train_config_from_json(j.at("config"));
    const auto& sel = j.at("selector");
    m.selector.embed = mat_from_json(sel.at("embed"));
    m.selector.w = sel.at("w").get<std::vector<double>>();
    m.selector.b = sel.at("b").get<double>();
    m.selector.k_percent = sel.at("k_percent").get<double>();
    const auto& cls = j.at("classifier");
    m.classifier.embed = mat_from_json(cls.at("embed"));
    m.classifier.u = cls.at("u").get<std::vector<double>>();
    m.classifier.b = cls.at("b").get<double>();
    return m;
}

inline std::string train_log_csv(const std::vector<EpochStats>& log) {
    CsvWriter csv({"epoch", "L_y", "L_r", "L_s", "dev_acc"});
    for (const auto& e : log)
        csv.add_row({std::to_string(e.epoch), format_double(e.l_y), format_double(e.l_r),
                     format_double(e.l_s), format_double(e.dev_acc)});
    return csv.str();
}

inline Json cfp_config_to_json(const CFPConfig& c) {
    Json j;
    j["lambda_rl"] = c.lambda_rl;
    j["lambda_a"] = c.lambda_a;
    j["peak_learning_rate"] = c.peak_learning_rate;
    j["disc_learning_rate"] = c.disc_learning_rate;
    j["warmup_steps"] = c.warmup_steps;
    j["epochs"] = c.epochs;
    j["batch_size"] = c.batch_size;
    j["eval_interval"] = c.eval_interval;
    j["checkpoint_samples"] = c.checkpoint_samples;
    j["lambda_grid"] = c.lambda_grid;
    j["seed"] = c.seed;
    return j;
}

inline CFPConfig cfp_config_from_json(const Json& j) {
    CFPConfig c;
    c.lambda_rl = j.value("lambda_rl", c.lambda_rl);
    c.lambda_a = j.value("lambda_a", c.lambda_a);
    c.peak_learning_rate = j.value("peak_learning_rate", c.peak_learning_rate);
    c.disc_learning_rate = j.value("disc_learning_rate", c.disc_learning_rate);
    c.warmup_steps = j.value("warmup_steps", c.warmup_steps);
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.eval_interval = j.value("eval_interval", c.eval_interval);
    c.checkpoint_samples = j.value("checkpoint_samples", c.checkpoint_samples);
    if (j.contains("lambda_grid")) c.lambda_grid = j.at("lambda_grid").get<std::vector<double>>();
    c.seed = j.value("seed", c.seed);
    return c;
}

// Infill checkpoints: weights + config + step.
inline Json infill_to_json(const InfillModel& m, const CFPConfig& config, int step) {
    Json j;
    j["kind"] = "infill_model";
    j["target_class"] = m.target_class;
    j["step"] = step;
    j["config"] = cfp_config_to_json(config);
    j["vocab"] = m.vocab.tokens();
    j["ctx1"] = mat_to_json(m.ctx1);
    j["ctx2"] = mat_to_json(m.ctx2);
    j["bag"] = mat_to_json(m.bag);
    j["bias"] = m.bias;
    return j;
}

inline InfillModel infill_from_json(const Json& j, CFPConfig* config_out = nullptr, int* step_out = nullptr) {
    InfillModel m;
    m.target_class = j.at("target_class").get<int>();
    m.vocab = Vocabulary::from_tokens(j.at("vocab").get<std::vector<std::string>>());
    m.ctx1 = mat_from_json(j.at("ctx1"));
    m.ctx2 = mat_from_json(j.at("ctx2"));
    m.bag = mat_from_json(j.at("bag"));
    m.bias = j.at("bias").get<std::vector<double>>();
    if (config_out) *config_out = cfp_config_from_json(j.at("config"));
    if (step_out) *step_out = j.at("step").get<int>();
    return m;
}

inline std::string checkpoint_log_csv(const std::vector<CheckpointRow>& log) {
    CsvWriter csv({"step", "a", "t", "score"});
    for (const auto& row : log)
        csv.add_row({std::to_string(row.step), format_double(row.a), format_double(row.t),
                     format_double(row.score)});
    return csv.str();
}

}  // namespace cfrat
