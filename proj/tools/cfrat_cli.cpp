// Command-line workbench: corpus generation, rationale training with the
// augmentation methods, dataset augmentation, evaluation aggregation, and
// benefit-analysis curve emission.
//
// Exit codes: 0 success, 2 configuration error, 3 stage failure.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "cfrat/augment.hpp"
#include "cfrat/checkpoint.hpp"
#include "cfrat/pipeline.hpp"

namespace fs = std::filesystem;
using namespace cfrat;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfigError = 2;
constexpr int kExitStageFailure = 3;

// "start:end:step" -> inclusive grid.
std::vector<double> parse_range(const std::string& text) {
    const auto first = text.find(':');
    const auto second = text.find(':', first + 1);
    if (first == std::string::npos || second == std::string::npos)
        throw std::invalid_argument("range must be start:end:step, got " + text);
    const double start = std::stod(text.substr(0, first));
    const double end = std::stod(text.substr(first + 1, second - first - 1));
    const double step = std::stod(text.substr(second + 1));
    if (step <= 0 || end < start) throw std::invalid_argument("bad range " + text);
    std::vector<double> out;
    for (double v = start; v < end + step / 2; v += step) out.push_back(std::min(v, end));
    if (!out.empty()) out.back() = end;
    return out;
}

std::vector<double> parse_list(const std::string& text) {
    std::vector<double> out;
    std::istringstream in(text);
    std::string cell;
    while (std::getline(in, cell, ',')) out.push_back(std::stod(cell));
    if (out.empty()) throw std::invalid_argument("empty list");
    return out;
}

std::vector<std::string> parse_tokens(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream in(text);
    std::string cell;
    while (std::getline(in, cell, ',')) out.push_back(cell);
    return out;
}

struct GenCorpusArgs {
    std::string config_path;
    std::uint64_t seed = 0;
    std::string out_dir;
};

int run_gen_corpus(const GenCorpusArgs& args) {
    auto config = corpus_config_from_json(load_json(args.config_path));
    config.seed = args.seed;
    const auto corpus = generate_corpus(config, args.seed);
    fs::create_directories(args.out_dir);
    save_corpus(corpus, fs::path(args.out_dir) / "corpus.jsonl");
    save_json(corpus_config_to_json(config), fs::path(args.out_dir) / "corpus_config.json");
    CsvWriter::write_text(fs::path(args.out_dir) / "version.txt", std::string(kToolVersion) + "\n");
    std::cout << "wrote " << corpus.size() << " documents to " << args.out_dir << "/corpus.jsonl\n";
    return kExitOk;
}

struct TrainArgs {
    std::string method;
    std::string corpus_dir;
    std::uint64_t seed = 1;
    std::string out_dir;
    std::string pipeline_config_path;
    std::string aspect = "smell";
    std::string regime = "correlated";
    int rounds = 1;
};

int run_train(const TrainArgs& args) {
    PipelineConfig config;
    if (!args.pipeline_config_path.empty()) {
        config = pipeline_config_from_json(load_json(args.pipeline_config_path),
                                           fs::path(args.pipeline_config_path).parent_path());
    } else {
        config.corpus =
            corpus_config_from_json(load_json(fs::path(args.corpus_dir) / "corpus_config.json"));
    }
    config.aspect = args.aspect;
    config.regime = args.regime;
    config.rounds = args.rounds;
    config.out_dir = args.out_dir;
    config.methods = {args.method};
    config.seeds = {args.seed};
    config.validate();

    const auto corpus = load_corpus(fs::path(args.corpus_dir) / "corpus.jsonl");
    const auto split = split_corpus(corpus, config.split_train, config.split_dev,
                                    config.split_annotated, args.seed);
    const auto result = run_method_seed(config, args.method, args.seed, split,
                                        fs::path(args.out_dir));
    std::cout << results_csv({result.record});
    return kExitOk;
}

struct AugmentArgs {
    std::string method;
    std::string model_path;
    std::string corpus_path;
    std::string out_path;
    std::string infill0_path, infill1_path;
    std::string corpus_config_path;
    bool oracle = false;
};

int run_augment(const AugmentArgs& args) {
    const auto model = model_from_json(load_json(args.model_path));
    const auto corpus = load_corpus(args.corpus_path);

    AugmentedCorpus augmented;
    if (args.method == "ant") {
        if (args.corpus_config_path.empty())
            throw std::invalid_argument("augment --method ant needs --corpus-config for the antonym map");
        const auto config = corpus_config_from_json(load_json(args.corpus_config_path));
        augmented = make_ant(corpus, model, antonym_map(config));
    } else {
        InfillFn infill;
        InfillModel infill0, infill1;
        CorpusConfig oracle_config;
        if (args.oracle) {
            if (args.corpus_config_path.empty())
                throw std::invalid_argument("augment --oracle needs --corpus-config");
            oracle_config = corpus_config_from_json(load_json(args.corpus_config_path));
            infill = oracle_infiller(oracle_config);
        } else {
            if (args.infill0_path.empty() || args.infill1_path.empty())
                throw std::invalid_argument("augment needs --infill0 and --infill1 (or --oracle)");
            infill0 = infill_from_json(load_json(args.infill0_path));
            infill1 = infill_from_json(load_json(args.infill1_path));
            infill = cf_infiller(infill0, infill1);
        }
        augmented = args.method == "cda" ? make_cda(corpus, model, infill)
                                         : make_fda(corpus, model, infill);
    }
    save_corpus(augmented, args.out_path);
    std::cout << "wrote " << augmented.size() << " documents to " << args.out_path << "\n";
    return kExitOk;
}

struct EvaluateArgs {
    std::string runs_dir;
};

int run_evaluate(const EvaluateArgs& args) {
    std::vector<ExperimentRecord> records;
    std::vector<fs::path> record_files;
    for (const auto& entry : fs::recursive_directory_iterator(args.runs_dir))
        if (entry.is_regular_file() && entry.path().filename() == "record.csv")
            record_files.push_back(entry.path());
    std::sort(record_files.begin(), record_files.end());
    for (const auto& path : record_files)
        for (auto& r : results_from_csv(read_text(path))) records.push_back(std::move(r));
    if (records.empty()) throw std::invalid_argument("no record.csv files under " + args.runs_dir);

    const fs::path out(args.runs_dir);
    CsvWriter::write_text(out / "results.csv", results_csv(records));
    CsvWriter::write_text(out / "aggregate_all.csv",
                          aggregate_csv(aggregate_records(records, true)));
    CsvWriter::write_text(out / "aggregate_nondegenerate.csv",
                          aggregate_csv(aggregate_records(records, false)));
    std::cout << aggregate_csv(aggregate_records(records, true));
    return kExitOk;
}

struct CurvesArgs {
    std::string alphas = "0:1:0.01";
    std::string c_list = "-0.125,0,0.125";
    std::string out_path;
    double p_y1 = 0.5, p_x1 = 0.5, p_x2 = 0.5, p_y1_gx1 = 0.75;
    std::string corpus_path, aspect = "smell", feature_a, feature_b, out_empirical;
    double smoothing = 1.0;
};

int run_theory_curves(const CurvesArgs& args) {
    const auto alphas = parse_range(args.alphas);
    const BinaryScenario base(args.p_y1, args.p_x1, args.p_x2, args.p_y1_gx1, args.p_y1_gx1);
    const auto csv = theory_curves_csv(alphas, parse_list(args.c_list), base);
    CsvWriter::write_text(args.out_path, csv);
    std::cout << "wrote " << args.out_path << " (benefit in bits)\n";

    if (!args.corpus_path.empty()) {
        if (args.feature_a.empty() || args.feature_b.empty() || args.out_empirical.empty())
            throw std::invalid_argument(
                "corpus mode needs --feature-a, --feature-b and --out-empirical");
        const auto corpus = load_corpus(args.corpus_path);
        const auto feat_a = any_of_predicate("feature_a", parse_tokens(args.feature_a));
        const auto feat_b = any_of_predicate("feature_b", parse_tokens(args.feature_b));
        CsvWriter::write_text(args.out_empirical,
                              empirical_curve_csv(corpus, feat_a, feat_b, args.aspect, alphas,
                                                  args.smoothing));
        const auto joint = estimate_binary_joint(corpus, feat_a, feat_b, args.aspect, args.smoothing);
        std::cout << "empirical error budget: " << format_double(error_budget(joint)) << "\n";
    }
    return kExitOk;
}

struct PipelineArgs {
    std::string config_path;
    int rounds = 0;  // 0 = take from config
    int jobs = 0;
};

int run_pipeline_cmd(const PipelineArgs& args) {
    auto config = pipeline_config_from_json(load_json(args.config_path),
                                            fs::path(args.config_path).parent_path());
    if (args.rounds > 0) config.rounds = args.rounds;
    if (args.jobs > 0) config.jobs = args.jobs;
    const auto outcome = run_pipeline(config);
    std::cout << aggregate_csv(aggregate_records(outcome.records, true));
    std::cout << "artifacts under " << outcome.out_dir.string() << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"counterfactual data augmentation workbench for rationale models"};
    app.require_subcommand(1);

    GenCorpusArgs gen_args;
    auto* gen = app.add_subcommand("gen-corpus", "generate a synthetic multi-aspect corpus");
    gen->add_option("--config", gen_args.config_path, "corpus config JSON")->required();
    gen->add_option("--seed", gen_args.seed, "generation seed")->required();
    gen->add_option("--out", gen_args.out_dir, "output directory")->required();

    TrainArgs train_args;
    auto* train = app.add_subcommand("train", "train a rationale model with one method");
    train->add_option("--method", train_args.method, "mmi|cda|fda|ant")
        ->required()
        ->check(CLI::IsMember({"mmi", "cda", "fda", "ant"}));
    train->add_option("--corpus", train_args.corpus_dir, "gen-corpus output directory")->required();
    train->add_option("--seed", train_args.seed, "run seed")->required();
    train->add_option("--out", train_args.out_dir, "run directory")->required();
    train->add_option("--pipeline-config", train_args.pipeline_config_path,
                      "optional pipeline config JSON with grids and schedules");
    train->add_option("--aspect", train_args.aspect, "target aspect id");
    train->add_option("--regime", train_args.regime, "correlated|decorrelated (label only)");
    train->add_option("--rounds", train_args.rounds, "augmentation rounds (cda/fda/ant)");

    AugmentArgs aug_args;
    auto* augment = app.add_subcommand("augment", "build an augmented dataset");
    augment->add_option("--method", aug_args.method, "cda|fda|ant")
        ->required()
        ->check(CLI::IsMember({"cda", "fda", "ant"}));
    augment->add_option("--model", aug_args.model_path, "rationale model checkpoint JSON")->required();
    augment->add_option("--corpus", aug_args.corpus_path, "corpus JSONL")->required();
    augment->add_option("--out", aug_args.out_path, "output JSONL")->required();
    augment->add_option("--infill0", aug_args.infill0_path, "class-0 infill checkpoint");
    augment->add_option("--infill1", aug_args.infill1_path, "class-1 infill checkpoint");
    augment->add_flag("--oracle", aug_args.oracle, "use the generator-truth infiller");
    augment->add_option("--corpus-config", aug_args.corpus_config_path,
                        "corpus config JSON (oracle and ant)");

    EvaluateArgs eval_args;
    auto* evaluate = app.add_subcommand("evaluate", "aggregate run records");
    evaluate->add_option("--runs", eval_args.runs_dir, "directory containing run records")->required();

    CurvesArgs curves_args;
    auto* curves = app.add_subcommand("theory-curves", "emit benefit-vs-error-rate curves");
    curves->add_option("--alphas", curves_args.alphas, "error-rate grid start:end:step");
    curves->add_option("--c", curves_args.c_list, "comma-separated informativeness offsets");
    curves->add_option("--out", curves_args.out_path, "output CSV")->required();
    curves->add_option("--p-y1", curves_args.p_y1, "p(Y1=1)");
    curves->add_option("--p-x1", curves_args.p_x1, "p(X1=1)");
    curves->add_option("--p-x2", curves_args.p_x2, "p(X2=1)");
    curves->add_option("--p-y1-gx1", curves_args.p_y1_gx1, "p(Y1=1|X1=1)");
    curves->add_option("--corpus", curves_args.corpus_path, "corpus JSONL for the empirical analog");
    curves->add_option("--aspect", curves_args.aspect, "aspect id for the empirical analog");
    curves->add_option("--feature-a", curves_args.feature_a, "comma-separated target feature tokens");
    curves->add_option("--feature-b", curves_args.feature_b, "comma-separated spurious feature tokens");
    curves->add_option("--out-empirical", curves_args.out_empirical, "empirical curve CSV");
    curves->add_option("--smoothing", curves_args.smoothing, "additive smoothing for counts");

    PipelineArgs pipe_args;
    auto* pipeline = app.add_subcommand("pipeline", "run the full multi-seed experiment");
    pipeline->add_option("--config", pipe_args.config_path, "pipeline config JSON")->required();
    pipeline->add_option("--rounds", pipe_args.rounds, "override augmentation rounds");
    pipeline->add_option("--jobs", pipe_args.jobs, "override worker count");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfigError;
    }

    try {
        if (gen->parsed()) return run_gen_corpus(gen_args);
        if (train->parsed()) return run_train(train_args);
        if (augment->parsed()) return run_augment(aug_args);
        if (evaluate->parsed()) return run_evaluate(eval_args);
        if (curves->parsed()) return run_theory_curves(curves_args);
        if (pipeline->parsed()) return run_pipeline_cmd(pipe_args);
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfigError;
    } catch (const Json::parse_error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfigError;
    } catch (const std::exception& e) {
        std::cerr << "stage failure: " << e.what() << "\n";
        return kExitStageFailure;
    }
    return kExitConfigError;
}
