// End-to-end experiment pipeline: generate a corpus, train the rationale
// model over a two-stage coherency grid, train counterfactual predictors,
// build augmented datasets, retrain, fine-tune the classifier on originals,
// and evaluate. Every run owns a directory of artifacts and is reproducible
// from (config, seed).
#pragma once

#include <cctype>
#include <filesystem>
#include <limits>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "cfrat/augment.hpp"
#include "cfrat/checkpoint.hpp"
#include "cfrat/corpus.hpp"
#include "cfrat/eval.hpp"
#include "cfrat/infill.hpp"
#include "cfrat/presets.hpp"
#include "cfrat/rationale.hpp"
#include "cfrat/serialize.hpp"
#include "cfrat/util.hpp"

namespace cfrat {

inline constexpr const char* kToolVersion = "cfrat 0.1.0";

struct PipelineConfig {
    CorpusConfig corpus;
    std::filesystem::path out_dir;
    std::vector<std::string> methods = {"mmi", "cda"};
    std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
    std::vector<double> lambda_r_grid = {0.5, 1.0, 2.0, 4.0};
    TrainConfig train;
    CFPConfig cfp;
    std::string aspect = "smell";
    std::string regime = "correlated";
    double split_train = 0.8, split_dev = 0.1, split_annotated = 0.1;
    int rounds = 1;
    int jobs = 1;

    void validate() const {
        corpus.validate();
        if (seeds.empty()) throw std::invalid_argument("PipelineConfig: seeds must be nonempty");
        if (methods.empty()) throw std::invalid_argument("PipelineConfig: methods must be nonempty");
        for (const auto& m : methods)
            if (m != "mmi" && m != "cda" && m != "fda" && m != "ant")
                throw std::invalid_argument("PipelineConfig: unknown method " + m);
        if (lambda_r_grid.empty())
            throw std::invalid_argument("PipelineConfig: lambda_r grid must be nonempty");
        if (rounds < 1 || jobs < 1)
            throw std::invalid_argument("PipelineConfig: rounds and jobs must be >= 1");
        corpus.aspect_index(aspect);
        train.validate();
    }
};

inline std::string method_record_name(const std::string& method) {
    std::string out;
    for (char c : method) out.push_back(static_cast<char>(std::toupper(c)));
    return out;
}

// ---------------------------------------------------------------------------
// Pipeline config JSON
// ---------------------------------------------------------------------------

inline Json pipeline_config_to_json(const PipelineConfig& c) {
    Json j;
    j["corpus_config"] = corpus_config_to_json(c.corpus);
    j["out_dir"] = c.out_dir.string();
    j["methods"] = c.methods;
    j["seeds"] = c.seeds;
    j["lambda_r_grid"] = c.lambda_r_grid;
    j["train"] = train_config_to_json(c.train);
    j["cfp"] = cfp_config_to_json(c.cfp);
    j["aspect"] = c.aspect;
    j["regime"] = c.regime;
    j["split"] = {c.split_train, c.split_dev, c.split_annotated};
    j["rounds"] = c.rounds;
    j["jobs"] = c.jobs;
    return j;
}

// corpus_config may be inline or a path relative to base_dir.
inline PipelineConfig pipeline_config_from_json(const Json& j,
                                                const std::filesystem::path& base_dir = ".") {
    PipelineConfig c;
    const auto& cc = j.at("corpus_config");
    if (cc.is_string()) {
        auto path = std::filesystem::path(cc.get<std::string>());
        if (path.is_relative()) path = base_dir / path;
        c.corpus = corpus_config_from_json(load_json(path));
    } else {
        c.corpus = corpus_config_from_json(cc);
    }
    c.out_dir = j.at("out_dir").get<std::string>();
    if (c.out_dir.is_relative()) c.out_dir = base_dir / c.out_dir;
    if (j.contains("methods")) c.methods = j.at("methods").get<std::vector<std::string>>();
    if (j.contains("seeds")) c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    if (j.contains("lambda_r_grid"))
        c.lambda_r_grid = j.at("lambda_r_grid").get<std::vector<double>>();
    if (j.contains("train")) c.train = train_config_from_json(j.at("train"));
    if (j.contains("cfp")) c.cfp = cfp_config_from_json(j.at("cfp"));
    c.aspect = j.value("aspect", c.aspect);
    c.regime = j.value("regime", c.regime);
    if (j.contains("split")) {
        c.split_train = j.at("split").at(0).get<double>();
        c.split_dev = j.at("split").at(1).get<double>();
        c.split_annotated = j.at("split").at(2).get<double>();
    }
    c.rounds = j.value("rounds", c.rounds);
    c.jobs = j.value("jobs", c.jobs);
    c.validate();
    return c;
}

// ---------------------------------------------------------------------------
// Grid-searched rationale training (A.3.2 protocol)
// ---------------------------------------------------------------------------

struct GridRun {
    double lambda_r;
    RationaleModel model;
    GridResult costs;
};

struct GridOutcome {
    RationaleModel model;            // selected, before fine-tuning
    std::vector<GridResult> results; // all grid points, stage 1 then stage 2
    std::size_t selected = 0;
};

// Two-stage grid over the coherency weight; selection by the inverse-mean
// weighted sum of dev coherency and classification costs.
inline GridOutcome grid_train(const Corpus& train, const Corpus& dev, const std::string& aspect,
                              const TrainConfig& base, const std::vector<double>& stage1,
                              std::uint64_t seed, std::uint64_t stage_tag) {
    std::vector<GridRun> runs;
    auto run_one = [&](double lambda_r, std::uint64_t tag) {
        TrainConfig config = base;
        config.lambda_r = lambda_r;
        auto result = train_joint(train, dev, aspect, config, derive_seed(seed, tag));
        const auto costs = measure_costs(result.model, dev.empty() ? train : dev);
        runs.push_back({lambda_r, std::move(result.model),
                        GridResult{lambda_r, costs.coherency_cost, costs.l_y}});
    };

    for (std::size_t i = 0; i < stage1.size(); ++i)
        run_one(stage1[i], stage_tag * 0x100 + i);

    std::vector<GridResult> stage1_results;
    for (const auto& r : runs) stage1_results.push_back(r.costs);
    const double best1 = runs[model_select(stage1_results)].lambda_r;

    const auto stage2 = refine_grid(best1, stage1);
    for (std::size_t i = 0; i < stage2.size(); ++i)
        run_one(stage2[i], stage_tag * 0x100 + 0x40 + i);

    std::vector<GridResult> all;
    for (const auto& r : runs) all.push_back(r.costs);
    GridOutcome out;
    out.selected = model_select(all);
    out.model = runs[out.selected].model;
    out.results = std::move(all);
    return out;
}

inline std::string grid_results_csv(const std::vector<GridResult>& results, std::size_t selected) {
    CsvWriter csv({"lambda_r", "L_c", "L_y", "selected"});
    for (std::size_t i = 0; i < results.size(); ++i)
        csv.add_row({format_double(results[i].lambda_r), format_double(results[i].l_c),
                     format_double(results[i].l_y), i == selected ? "1" : "0"});
    return csv.str();
}

// ---------------------------------------------------------------------------
// Counterfactual-predictor grid (A.3.3 protocol)
// ---------------------------------------------------------------------------

struct CfGridOutcome {
    InfillModel infill0, infill1;
    std::vector<CheckpointRow> log0, log1;   // selected runs' checkpoint logs
    double lambda_rl0 = 0, lambda_a0 = 0, lambda_rl1 = 0, lambda_a1 = 0;
    bool mode_collapse_warning = false;
    struct Row {
        int target_class;
        double lambda_rl, lambda_a;
        double best_score;
        int best_step;
    };
    std::vector<Row> grid_log;
};

// Per-class grid over (lambda_RL, lambda_A) with lambda_RL <= lambda_A; each
// class keeps its best checkpoint by the 4.5a + t metric.
inline CfGridOutcome train_cf_grid(const Corpus& train, const RationaleModel& frozen,
                                   const CFPConfig& base, std::uint64_t seed,
                                   std::uint64_t stage_tag) {
    std::vector<std::pair<double, double>> pairs;
    for (double rl : base.lambda_grid)
        for (double a : base.lambda_grid)
            if (rl <= a) pairs.emplace_back(rl, a);
    if (pairs.empty()) throw std::invalid_argument("train_cf_grid: empty lambda grid");

    CfGridOutcome out;
    for (int target_class = 0; target_class <= 1; ++target_class) {
        double best_score = -std::numeric_limits<double>::infinity();
        InfillTrainResult best;
        double best_rl = 0, best_a = 0;
        for (std::size_t i = 0; i < pairs.size(); ++i) {
            CFPConfig config = base;
            config.lambda_rl = pairs[i].first;
            config.lambda_a = pairs[i].second;
            config.seed = derive_seed(seed, stage_tag * 0x100 + i * 2 + target_class);
            auto result = train_infiller(train, frozen, config, target_class);
            double score = -std::numeric_limits<double>::infinity();
            for (const auto& row : result.log)
                if (row.step == result.best_step) score = row.score;
            out.grid_log.push_back(
                {target_class, pairs[i].first, pairs[i].second, score, result.best_step});
            out.mode_collapse_warning |= result.mode_collapse_warning;
            if (score > best_score) {
                best_score = score;
                best = std::move(result);
                best_rl = pairs[i].first;
                best_a = pairs[i].second;
            }
        }
        if (target_class == 0) {
            out.infill0 = std::move(best.model);
            out.log0 = std::move(best.log);
            out.lambda_rl0 = best_rl;
            out.lambda_a0 = best_a;
        } else {
            out.infill1 = std::move(best.model);
            out.log1 = std::move(best.log);
            out.lambda_rl1 = best_rl;
            out.lambda_a1 = best_a;
        }
    }
    return out;
}

inline std::string cf_grid_csv(const std::vector<CfGridOutcome::Row>& rows) {
    CsvWriter csv({"target_class", "lambda_rl", "lambda_a", "best_score", "best_step"});
    for (const auto& r : rows)
        csv.add_row({std::to_string(r.target_class), format_double(r.lambda_rl),
                     format_double(r.lambda_a), format_double(r.best_score),
                     std::to_string(r.best_step)});
    return csv.str();
}

// ---------------------------------------------------------------------------
// One (method, seed) run
// ---------------------------------------------------------------------------

struct RunResult {
    ExperimentRecord record;
    std::filesystem::path run_dir;
};

namespace detail {

inline void write_stage(const std::filesystem::path& run_dir, const std::string& stage) {
    CsvWriter::write_text(run_dir / "stage.txt", stage + "\n");
}

inline ExperimentRecord evaluate_run(const RationaleModel& model, const CorpusSplit& split,
                                     const std::string& method, const std::string& regime,
                                     std::uint64_t seed) {
    ExperimentRecord record;
    record.method = method_record_name(method);
    record.regime = regime;
    record.aspect = model.aspect;
    record.seed = seed;
    const auto metrics = rationale_metrics(model, split.annotated);
    record.rat_prec = metrics.precision;
    record.rat_rec = metrics.recall;
    record.rat_f1 = metrics.f1;
    record.dev_acc = dev_accuracy(model, split.dev);
    record.degenerate =
        detect_degenerate(record, random_mask_precision(split.annotated, model.aspect));
    return record;
}

}  // namespace detail

// Runs one method for one seed inside run_dir; the splits are shared across
// methods of the same seed. Stages: mmi -> (cfp -> augment -> retrain) -> eval.
inline RunResult run_method_seed(const PipelineConfig& config, const std::string& method,
                                 std::uint64_t seed, const CorpusSplit& split,
                                 const std::filesystem::path& run_dir) {
    namespace fs = std::filesystem;
    fs::create_directories(run_dir);
    save_json(pipeline_config_to_json(config), run_dir / "resolved_config.json");
    CsvWriter::write_text(run_dir / "version.txt", std::string(kToolVersion) + "\n");
    detail::write_stage(run_dir, "mmi_grid");

    // Phase 1 + selection, then classifier fine-tuning on originals.
    auto mmi_grid = grid_train(split.train, split.dev, config.aspect, config.train,
                               config.lambda_r_grid, seed, 0xA1);
    CsvWriter::write_text(run_dir / "mmi_grid.csv",
                          grid_results_csv(mmi_grid.results, mmi_grid.selected));
    detail::write_stage(run_dir, "mmi_finetune");
    RationaleModel initial =
        finetune_classifier(mmi_grid.model, split.train, split.dev, config.train.finetune_epochs);
    save_json(model_to_json(initial), run_dir / "mmi_model.json");

    RationaleModel final_model = initial;
    if (method != "mmi") {
        for (int round = 1; round <= config.rounds; ++round) {
            const std::uint64_t round_tag = 0xB0 + static_cast<std::uint64_t>(round) * 0x10;
            AugmentedCorpus augmented;
            if (method == "ant") {
                detail::write_stage(run_dir, "augment_round" + std::to_string(round));
                augmented = make_ant(split.train, final_model, antonym_map(config.corpus));
            } else {
                detail::write_stage(run_dir, "cfp_round" + std::to_string(round));
                auto cf = train_cf_grid(split.train, final_model, config.cfp, seed, round_tag);
                CsvWriter::write_text(run_dir / ("cfp_grid_round" + std::to_string(round) + ".csv"),
                                      cf_grid_csv(cf.grid_log));
                CFPConfig selected0 = config.cfp;
                selected0.lambda_rl = cf.lambda_rl0;
                selected0.lambda_a = cf.lambda_a0;
                CFPConfig selected1 = config.cfp;
                selected1.lambda_rl = cf.lambda_rl1;
                selected1.lambda_a = cf.lambda_a1;
                save_json(infill_to_json(cf.infill0, selected0,
                                         cf.log0.empty() ? 0 : cf.log0.back().step),
                          run_dir / "cfp_class0.json");
                save_json(infill_to_json(cf.infill1, selected1,
                                         cf.log1.empty() ? 0 : cf.log1.back().step),
                          run_dir / "cfp_class1.json");
                CsvWriter::write_text(run_dir / "cfp_log_class0.csv", checkpoint_log_csv(cf.log0));
                CsvWriter::write_text(run_dir / "cfp_log_class1.csv", checkpoint_log_csv(cf.log1));

                detail::write_stage(run_dir, "augment_round" + std::to_string(round));
                const auto infill = cf_infiller(cf.infill0, cf.infill1);
                augmented = method == "cda" ? make_cda(split.train, final_model, infill)
                                            : make_fda(split.train, final_model, infill);
            }
            save_corpus(augmented, run_dir / ("augmented_round" + std::to_string(round) + ".jsonl"));

            detail::write_stage(run_dir, "retrain_round" + std::to_string(round));
            auto retrain_grid = grid_train(augmented, split.dev, config.aspect, config.train,
                                           config.lambda_r_grid, seed, round_tag + 1);
            CsvWriter::write_text(run_dir / ("retrain_grid_round" + std::to_string(round) + ".csv"),
                                  grid_results_csv(retrain_grid.results, retrain_grid.selected));
            // Classifier fine-tuning always returns to the original dataset.
            final_model = finetune_classifier(retrain_grid.model, split.train, split.dev,
                                              config.train.finetune_epochs);
        }
    }
    save_json(model_to_json(final_model), run_dir / "final_model.json");

    detail::write_stage(run_dir, "evaluate");
    RunResult result;
    result.record = detail::evaluate_run(final_model, split, method, config.regime, seed);
    result.run_dir = run_dir;
    CsvWriter::write_text(run_dir / "record.csv", results_csv({result.record}));
    detail::write_stage(run_dir, "done");
    return result;
}

// ---------------------------------------------------------------------------
// Full pipeline
// ---------------------------------------------------------------------------

struct PipelineOutcome {
    std::vector<ExperimentRecord> records;
    std::filesystem::path out_dir;
};

inline PipelineOutcome run_pipeline(const PipelineConfig& config) {
    namespace fs = std::filesystem;
    config.validate();
    fs::create_directories(config.out_dir);
    save_json(pipeline_config_to_json(config), config.out_dir / "resolved_config.json");
    CsvWriter::write_text(config.out_dir / "version.txt", std::string(kToolVersion) + "\n");

    // Corpora are per-seed and shared across methods.
    std::vector<CorpusSplit> splits;
    for (std::uint64_t seed : config.seeds) {
        const auto corpus = generate_corpus(config.corpus, seed);
        auto split = split_corpus(corpus, config.split_train, config.split_dev,
                                  config.split_annotated, seed);
        const auto seed_dir = config.out_dir / "seeds" / std::to_string(seed);
        fs::create_directories(seed_dir);
        save_corpus(corpus, seed_dir / "corpus.jsonl");
        save_corpus(split.train, seed_dir / "train.jsonl");
        save_corpus(split.dev, seed_dir / "dev.jsonl");
        save_corpus(split.annotated, seed_dir / "annotated.jsonl");
        splits.push_back(std::move(split));
    }

    struct Task {
        std::string method;
        std::uint64_t seed;
        const CorpusSplit* split;
    };
    std::vector<Task> tasks;
    for (const auto& method : config.methods)
        for (std::size_t s = 0; s < config.seeds.size(); ++s)
            tasks.push_back({method, config.seeds[s], &splits[s]});

    std::vector<RunResult> results(tasks.size());
    std::vector<std::string> failures;
    std::mutex mutex;
    std::size_t next = 0;

    auto worker = [&]() {
        for (;;) {
            std::size_t index;
            {
                std::lock_guard<std::mutex> lock(mutex);
                if (next >= tasks.size()) return;
                index = next++;
            }
            const auto& task = tasks[index];
            const auto run_dir =
                config.out_dir / "runs" / (task.method + "_" + std::to_string(task.seed));
            try {
                results[index] =
                    run_method_seed(config, task.method, task.seed, *task.split, run_dir);
            } catch (const std::exception& e) {
                std::lock_guard<std::mutex> lock(mutex);
                failures.push_back(task.method + "_" + std::to_string(task.seed) + ": " + e.what());
            }
        }
    };

    const int n_workers = std::max(1, std::min<int>(config.jobs, static_cast<int>(tasks.size())));
    if (n_workers == 1) {
        worker();
    } else {
        std::vector<std::thread> threads;
        for (int i = 0; i < n_workers; ++i) threads.emplace_back(worker);
        for (auto& t : threads) t.join();
    }
    if (!failures.empty()) {
        std::string what = "pipeline stage failures:";
        for (const auto& f : failures) what += "\n  " + f;
        throw std::runtime_error(what);
    }

    PipelineOutcome outcome;
    outcome.out_dir = config.out_dir;
    for (const auto& r : results) outcome.records.push_back(r.record);
    CsvWriter::write_text(config.out_dir / "results.csv", results_csv(outcome.records));
    CsvWriter::write_text(config.out_dir / "aggregate_all.csv",
                          aggregate_csv(aggregate_records(outcome.records, true)));
    CsvWriter::write_text(config.out_dir / "aggregate_nondegenerate.csv",
                          aggregate_csv(aggregate_records(outcome.records, false)));
    return outcome;
}

// ---------------------------------------------------------------------------
// Theory curves (the benefit-analysis emitters)
// ---------------------------------------------------------------------------

// Figure-2 style family: one curve per offset c, scenario p(Y1|X2) shifted
// by c relative to the base. CSV columns: alpha,c,benefit_bits.
inline std::string theory_curves_csv(const std::vector<double>& alphas,
                                     const std::vector<double>& c_list,
                                     const BinaryScenario& base) {
    CsvWriter csv({"alpha", "c", "benefit_bits"});
    for (double c : c_list) {
        const BinaryScenario scenario(base.p_y1, base.p_x1, base.p_x2, base.p_y1_gx1,
                                      base.p_y1_gx2 + c);
        const auto curve = benefit_curve(scenario, alphas);
        for (const auto& point : curve.points)
            csv.add_row({format_double(point.alpha), format_double(c),
                         format_double(point.benefit_bits)});
    }
    return csv.str();
}

// Empirical analog from corpus bigram/token features. Same columns with
// c = 0 so the files concatenate cleanly.
inline std::string empirical_curve_csv(const Corpus& corpus, const TokenPredicate& target_feature,
                                       const TokenPredicate& spurious_feature,
                                       const std::string& aspect, const std::vector<double>& alphas,
                                       double smoothing = 1.0) {
    const auto joint = estimate_binary_joint(corpus, target_feature, spurious_feature, aspect,
                                             smoothing);
    CsvWriter csv({"alpha", "c", "benefit_bits"});
    for (const auto& point : benefit_curve(joint, alphas).points)
        csv.add_row({format_double(point.alpha), "0", format_double(point.benefit_bits)});
    return csv.str();
}

}  // namespace cfrat
