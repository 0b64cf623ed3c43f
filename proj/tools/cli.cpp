#include "cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

#include "malimg/errors.hpp"
#include "malimg/fixture.hpp"
#include "malimg/model_io.hpp"
#include "malimg/pipeline.hpp"
#include "malimg/png_io.hpp"
#include "malimg/rng.hpp"
#include "malimg/runlog.hpp"

namespace malimg::cli {
namespace {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

constexpr const char* kRunLogName = "run_log.json";

constexpr const char* kBinHelp =
    "Width bins use half-open KB ranges (lo, hi] with 1 KB = 1024 bytes: "
    "<=10 KB -> 32, <=30 -> 64, <=60 -> 128, <=100 -> 256, <=200 -> 384, "
    "<=500 -> 512, <=1000 -> 768, larger -> 1024.";

std::string num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string abs_path(const std::string& p) { return fs::absolute(p).lexically_normal().generic_string(); }

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

std::string join(const std::vector<std::string>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + v[i];
    return s;
}

/// "0.2" or "80/20" (train/test percentages) -> test fraction.
double parse_split_fraction(const std::string& s) {
    try {
        const auto slash = s.find('/');
        if (slash != std::string::npos) {
            const double train = std::stod(s.substr(0, slash));
            const double test = std::stod(s.substr(slash + 1));
            if (train <= 0 || test <= 0) throw UsageError("");
            return test / (train + test);
        }
        std::size_t used = 0;
        const double f = std::stod(s, &used);
        if (used != s.size()) throw UsageError("");
        return f;
    } catch (const std::exception&) {
        throw UsageError("--split expects a test fraction such as 0.2 or a ratio such as 80/20, got '" + s + "'");
    }
}

Weighting parse_weighting(const std::string& s) {
    if (s == "distance") return Weighting::distance;
    if (s == "uniform") return Weighting::uniform;
    throw UsageError("--weighting expects distance or uniform");
}

std::vector<int> parse_hidden(const std::string& s) {
    std::vector<int> out;
    for (const auto& item : split_list(s)) {
        try {
            out.push_back(std::stoi(item));
        } catch (const std::exception&) {
            throw UsageError("--hidden expects comma-separated layer sizes");
        }
        if (out.back() < 1) throw UsageError("--hidden layer sizes must be positive");
    }
    if (out.empty()) throw UsageError("--hidden needs at least one layer");
    return out;
}

struct ModelFlags {
    std::string model = "knn";
    int k = 20;
    std::string weighting = "distance";
    std::string hidden = "100,100,100,20";
    double alpha = 1e-4;
    double lr = 0.01;
    int epochs = 30;
    int batch = 32;
    int trees = 50;
    int depth = 6;
    int max_features = 0;
    int stack_folds = 5;
    std::string roster = "knn:probabilities,mlp:probabilities,forest:label";
};

void add_model_flags(CLI::App* app, ModelFlags& f, bool with_model) {
    if (with_model) app->add_option("--model", f.model, "knn | mlp | forest | vote | stacked")->capture_default_str();
    app->add_option("--k", f.k, "kNN neighbours")->capture_default_str();
    app->add_option("--weighting", f.weighting, "kNN weighting: distance | uniform")->capture_default_str();
    app->add_option("--hidden", f.hidden, "MLP hidden layer sizes")->capture_default_str();
    app->add_option("--alpha", f.alpha, "MLP L2 penalty")->capture_default_str();
    app->add_option("--lr", f.lr, "MLP learning rate")->capture_default_str();
    app->add_option("--epochs", f.epochs, "MLP epochs")->capture_default_str();
    app->add_option("--batch", f.batch, "MLP mini-batch size")->capture_default_str();
    app->add_option("--trees", f.trees, "forest size")->capture_default_str();
    app->add_option("--depth", f.depth, "forest max depth")->capture_default_str();
    app->add_option("--max-features", f.max_features, "features per split (0 = sqrt)")->capture_default_str();
    app->add_option("--stack-folds", f.stack_folds, "out-of-fold rounds for stacking")->capture_default_str();
    app->add_option("--roster", f.roster, "ensemble members as kind:probabilities|label")->capture_default_str();
}

std::vector<MemberSpec> parse_roster(const std::string& s, const TrainOptions& base) {
    std::vector<MemberSpec> roster;
    for (const auto& item : split_list(s)) {
        const auto colon = item.find(':');
        MemberSpec m{parse_model_kind(item.substr(0, colon)), OutputKind::label, base.knn, base.mlp, base.forest};
        if (m.kind == ModelKind::vote || m.kind == ModelKind::stacked) {
            throw UsageError("ensembles cannot be roster members");
        }
        const std::string out = colon == std::string::npos ? "label" : item.substr(colon + 1);
        if (out == "probabilities" || out == "prob") m.output = OutputKind::probabilities;
        else if (out != "label") throw UsageError("roster output must be probabilities or label, got '" + out + "'");
        roster.push_back(m);
    }
    if (roster.empty()) throw UsageError("--roster is empty");
    return roster;
}

TrainOptions train_options(const ModelFlags& f, std::uint64_t seed, int workers) {
    TrainOptions o;
    o.model = parse_model_kind(f.model);
    o.knn = KnnParams{f.k, parse_weighting(f.weighting)};
    o.mlp.hidden = parse_hidden(f.hidden);
    o.mlp.l2_alpha = f.alpha;
    o.mlp.learning_rate = f.lr;
    o.mlp.epochs = f.epochs;
    o.mlp.batch_size = f.batch;
    o.mlp.seed = seed;
    o.forest = ForestParams{f.trees, f.depth, seed, f.max_features, true, workers};
    o.stack.folds = f.stack_folds;
    o.stack.seed = seed;
    o.stack.meta = ForestParams{f.trees, f.depth, derive_seed(seed, 0x5ac4), f.max_features, true, workers};
    o.stack.workers = workers;
    o.workers = workers;
    o.roster = parse_roster(f.roster, o);
    return o;
}

std::vector<std::string> model_argv(const ModelFlags& f, bool with_model) {
    std::vector<std::string> a;
    if (with_model) a.insert(a.end(), {"--model", std::string(to_string(parse_model_kind(f.model)))});
    a.insert(a.end(), {"--k", std::to_string(f.k), "--weighting", f.weighting, "--hidden", f.hidden,
                       "--alpha", num(f.alpha), "--lr", num(f.lr), "--epochs", std::to_string(f.epochs),
                       "--batch", std::to_string(f.batch), "--trees", std::to_string(f.trees), "--depth",
                       std::to_string(f.depth), "--max-features", std::to_string(f.max_features),
                       "--stack-folds", std::to_string(f.stack_folds), "--roster", f.roster});
    return a;
}

ojson model_config(const TrainOptions& o) {
    ojson j;
    j["model"] = to_string(o.model);
    j["knn"] = {{"k", o.knn.k}, {"weighting", o.knn.weighting == Weighting::distance ? "distance" : "uniform"},
                {"metric", "euclidean"}};
    j["mlp"] = {{"hidden", o.mlp.hidden},         {"activation", "relu"},       {"l2_alpha", o.mlp.l2_alpha},
                {"learning_rate", o.mlp.learning_rate}, {"epochs", o.mlp.epochs}, {"batch_size", o.mlp.batch_size},
                {"seed", o.mlp.seed}};
    auto forest_json = [](const ForestParams& p) {
        return ojson{{"n_trees", p.n_trees},   {"max_depth", p.max_depth},       {"criterion", "entropy"},
                     {"max_features", p.max_features}, {"bootstrap", p.bootstrap}, {"seed", p.seed}};
    };
    j["forest"] = forest_json(o.forest);
    ojson roster = ojson::array();
    for (const auto& m : o.roster) {
        roster.push_back({{"kind", to_string(m.kind)},
                          {"output", m.output == OutputKind::probabilities ? "probabilities" : "label"}});
    }
    j["roster"] = roster;
    j["stack"] = {{"folds", o.stack.folds}, {"seed", o.stack.seed}, {"meta", forest_json(o.stack.meta)}};
    return j;
}

std::map<std::string, std::string> input_hashes(const std::vector<std::string>& paths) {
    std::map<std::string, std::string> out;
    for (const auto& p : paths) {
        if (fs::is_regular_file(p)) {
            out[p] = sha256_file(p);
        } else if (fs::is_directory(p)) {
            for (const auto& [rel, h] : hash_tree(p, {kRunLogName})) out[p + "/" + rel] = h;
        }
    }
    return out;
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
}

void write_report(const fs::path& dir, const EvalReport& report) {
    write_text(dir / "report.json", to_json(report).dump(2) + "\n");
    write_text(dir / "report.txt", to_table(report));
    write_text(dir / "confusion.csv", confusion_csv(report));
}

int finish(const fs::path& out, RunLog log) {
    log.artifacts = hash_tree(out, {kRunLogName});
    write_run_log(out / kRunLogName, log);
    return log.exit_code;
}

// extract ---------------------------------------------------------------

struct ExtractFlags {
    std::string corpus, out, labels;
    std::string method = "colormap", geometry = "truncated";
    std::uint32_t size = 128;
    std::uint64_t seed = 42;
    int workers = 1;
};

int cmd_extract(const ExtractFlags& f, std::ostream& out, std::ostream& err) {
    ExtractOptions o;
    o.corpus = abs_path(f.corpus);
    o.out = abs_path(f.out);
    o.config = ExtractConfig{parse_method(f.method), parse_geometry(f.geometry), f.size};
    if (!f.labels.empty()) {
        o.family_source = FamilySource::label_file;
        o.label_file = abs_path(f.labels);
    }
    o.workers = f.workers;
    if (!fs::is_directory(o.corpus)) throw UsageError("corpus directory not found: " + f.corpus);

    const auto run = extract_corpus(o);
    if (run.records.empty() && run.errors.empty()) throw UsageError("no files found under " + f.corpus);

    RunLog log;
    log.command = "extract";
    log.argv = {"extract", "--corpus", o.corpus.generic_string(), "--out", o.out.generic_string(), "--method",
                std::string(to_string(o.config.method)), "--geometry", std::string(to_string(o.config.geometry)),
                "--size", std::to_string(f.size), "--seed", std::to_string(f.seed), "--workers",
                std::to_string(f.workers)};
    if (o.label_file) log.argv.insert(log.argv.end(), {"--labels", o.label_file->generic_string()});
    log.config = {{"corpus", o.corpus.generic_string()},
                  {"out", o.out.generic_string()},
                  {"method", to_string(o.config.method)},
                  {"geometry", to_string(o.config.geometry)},
                  {"size", f.size},
                  {"family_source", o.label_file ? "label_file" : "subdirectory"},
                  {"label_file", o.label_file ? o.label_file->generic_string() : ""},
                  {"seed", f.seed},
                  {"workers", f.workers}};
    log.inputs = input_hashes({o.corpus.generic_string()});

    if (!run.errors.empty()) {
        std::string lines;
        for (const auto& e : run.errors) {
            lines += ojson{{"path", e.path}, {"error", e.message}}.dump() + "\n";
            err << "error: " << e.path << ": " << e.message << "\n";
            log.warnings.push_back(e.path + ": " + e.message);
        }
        write_text(o.out / "errors.jsonl", lines);
        err << run.errors.size() << " of " << run.errors.size() + run.records.size() << " files failed\n";
        log.exit_code = kExitPartial;
    }
    std::size_t flagged = 0;
    for (const auto& r : run.records) flagged += r.flags.empty() ? 0 : 1;
    out << "extracted " << run.records.size() << " images (" << flagged << " flagged) to " << o.out.generic_string()
        << "\n";
    return finish(o.out, log);
}

// dataset ---------------------------------------------------------------

struct DatasetFlags {
    std::string manifest, corpus, out;
    std::string method = "colormap", geometry = "truncated";
    std::uint32_t size = 128;
    std::string split = "0.2";
    std::uint64_t seed = 42;
    int workers = 1;
};

int cmd_dataset(const DatasetFlags& f, std::ostream& out) {
    if (f.manifest.empty() == f.corpus.empty()) throw UsageError("dataset needs exactly one of --manifest or --corpus");
    const double test_fraction = parse_split_fraction(f.split);
    const fs::path out_dir = abs_path(f.out);
    RunLog log;
    log.command = "dataset";
    log.argv = {"dataset", "--out", out_dir.generic_string(), "--split", num(test_fraction), "--seed",
                std::to_string(f.seed), "--workers", std::to_string(f.workers)};
    log.config = {{"out", out_dir.generic_string()}, {"test_fraction", test_fraction}, {"seed", f.seed},
                  {"workers", f.workers}};

    Dataset ds;
    if (!f.manifest.empty()) {
        const fs::path manifest = abs_path(f.manifest);
        if (!fs::is_regular_file(manifest)) throw UsageError("manifest not found: " + f.manifest);
        ds = build_dataset(read_manifest_jsonl(manifest), manifest.parent_path(), test_fraction, f.seed, f.workers);
        log.argv.insert(log.argv.end(), {"--manifest", manifest.generic_string()});
        log.config["manifest"] = manifest.generic_string();
        log.inputs = input_hashes({manifest.generic_string()});
    } else {
        const std::string corpus = abs_path(f.corpus);
        if (!fs::is_directory(corpus)) throw UsageError("corpus directory not found: " + f.corpus);
        const ExtractConfig cfg{parse_method(f.method), parse_geometry(f.geometry), f.size};
        ds = build_dataset_in_memory(scan_corpus(corpus), cfg, test_fraction, f.seed, f.workers);
        log.argv.insert(log.argv.end(), {"--corpus", corpus, "--method", std::string(to_string(cfg.method)),
                                         "--geometry", std::string(to_string(cfg.geometry)), "--size",
                                         std::to_string(f.size)});
        log.config["corpus"] = corpus;
        log.config["method"] = to_string(cfg.method);
        log.config["geometry"] = to_string(cfg.geometry);
        log.config["size"] = f.size;
        log.inputs = input_hashes({corpus});
    }
    save_dataset(out_dir, ds);
    out << "dataset: " << ds.classes.size() << " classes, " << ds.train.rows << " train, " << ds.test.rows
        << " test, " << ds.train.cols << " features\n";
    return finish(out_dir, log);
}

// train -----------------------------------------------------------------

struct TrainFlags {
    std::string dataset, out;
    ModelFlags model;
    std::uint64_t seed = 42;
    int workers = 1;
};

int cmd_train(const TrainFlags& f, std::ostream& out) {
    const TrainOptions opts = train_options(f.model, f.seed, f.workers);
    const std::string dataset = abs_path(f.dataset);
    const fs::path out_dir = abs_path(f.out);
    const Dataset ds = load_dataset(dataset);
    const auto model = train_model(ds, opts);
    fs::create_directories(out_dir);
    save_model_file(out_dir / "model.mimm", *model);
    write_text(out_dir / "classes.json", nlohmann::json(ds.classes).dump() + "\n");

    RunLog log;
    log.command = "train";
    log.argv = {"train", "--dataset", dataset, "--out", out_dir.generic_string(), "--seed", std::to_string(f.seed),
                "--workers", std::to_string(f.workers)};
    const auto margv = model_argv(f.model, true);
    log.argv.insert(log.argv.end(), margv.begin(), margv.end());
    log.config = model_config(opts);
    log.config["dataset"] = dataset;
    log.config["out"] = out_dir.generic_string();
    log.config["seed"] = f.seed;
    log.config["workers"] = f.workers;
    log.config["model_format_version"] = kModelFormatVersion;
    log.inputs = input_hashes({dataset});
    out << "trained " << to_string(model->kind()) << " on " << ds.train.rows << " samples -> "
        << (out_dir / "model.mimm").generic_string() << "\n";
    return finish(out_dir, log);
}

// eval ------------------------------------------------------------------

struct EvalFlags {
    std::string task = "classify";
    std::string dataset, model, predictions, out;
    std::string real, fake;
    ModelFlags realfake_model;
    int folds = 5;
    std::uint64_t seed = 42;
    int workers = 1;
};

int cmd_eval_classify(const EvalFlags& f, std::ostream& out) {
    if (f.dataset.empty()) throw UsageError("eval needs --dataset");
    if (f.model.empty() == f.predictions.empty()) throw UsageError("eval needs exactly one of --model or --predictions");
    const std::string dataset = abs_path(f.dataset);
    const fs::path out_dir = abs_path(f.out);
    const Dataset ds = load_dataset(dataset);
    if (ds.test_records.empty()) throw UsageError("dataset has no test split");

    RunLog log;
    log.command = "eval";
    log.argv = {"eval", "--task", "classify", "--dataset", dataset, "--out", out_dir.generic_string(), "--workers",
                std::to_string(f.workers)};
    log.config = {{"task", "classify"}, {"dataset", dataset}, {"out", out_dir.generic_string()},
                  {"workers", f.workers}};
    std::vector<Prediction> preds;
    std::vector<std::string> inputs{dataset};
    if (!f.model.empty()) {
        const std::string model_path = abs_path(f.model);
        const auto model = load_model_file(model_path);
        if (model->num_classes() != static_cast<int>(ds.classes.size())) {
            throw UsageError("model was trained with a different number of classes");
        }
        preds = model->predict_all(ds.test, f.workers);
        log.argv.insert(log.argv.end(), {"--model", model_path});
        log.config["model"] = model_path;
        inputs.push_back(model_path);
    } else {
        const std::string pred_path = abs_path(f.predictions);
        std::map<std::string, Prediction> by_id;
        for (auto& r : read_predictions(pred_path, ds.classes)) by_id[r.sample_id] = std::move(r.prediction);
        for (const auto& r : ds.test_records) {
            const auto it = by_id.find(r.sample_id);
            if (it == by_id.end()) throw UsageError("no prediction for test sample '" + r.sample_id + "'");
            preds.push_back(it->second);
        }
        log.argv.insert(log.argv.end(), {"--predictions", pred_path});
        log.config["predictions"] = pred_path;
        inputs.push_back(pred_path);
    }
    log.inputs = input_hashes(inputs);

    const EvalReport report = evaluate(ds.test_labels, preds, ds.classes);
    std::vector<PredictionRecord> records;
    for (std::size_t i = 0; i < preds.size(); ++i) records.push_back({ds.test_records[i].sample_id, preds[i]});
    write_predictions(out_dir / "predictions.jsonl", records);
    write_report(out_dir, report);
    out << to_table(report);
    return finish(out_dir, log);
}

int cmd_eval_realfake(const EvalFlags& f, std::ostream& out) {
    if (f.real.empty() || f.fake.empty()) throw UsageError("--task realfake needs --real and --fake directories");
    RealFakeOptions o;
    o.real_dir = abs_path(f.real);
    o.fake_dir = abs_path(f.fake);
    ModelFlags mf = f.realfake_model;
    if (!f.model.empty()) mf.model = f.model;
    o.train = train_options(mf, f.seed, f.workers);
    o.folds = f.folds;
    o.seed = f.seed;
    const fs::path out_dir = abs_path(f.out);
    if (o.folds < 2) throw UsageError("--folds must be at least 2");

    const auto result = evaluate_real_fake(o);
    write_predictions(out_dir / "predictions.jsonl", result.predictions);
    write_report(out_dir, result.report);

    RunLog log;
    log.command = "eval";
    log.argv = {"eval", "--task", "realfake", "--real", o.real_dir.generic_string(), "--fake",
                o.fake_dir.generic_string(), "--out", out_dir.generic_string(), "--folds", std::to_string(o.folds),
                "--seed", std::to_string(f.seed), "--workers", std::to_string(f.workers)};
    const auto margv = model_argv(mf, true);
    log.argv.insert(log.argv.end(), margv.begin(), margv.end());
    log.config = model_config(o.train);
    log.config["task"] = "realfake";
    log.config["real"] = o.real_dir.generic_string();
    log.config["fake"] = o.fake_dir.generic_string();
    log.config["folds"] = o.folds;
    log.config["seed"] = f.seed;
    log.config["workers"] = f.workers;
    log.inputs = input_hashes({o.real_dir.generic_string(), o.fake_dir.generic_string()});
    out << to_table(result.report);
    return finish(out_dir, log);
}

// compare ---------------------------------------------------------------

struct CompareFlags {
    std::string corpus, out;
    std::string methods = "grayscale,colormap,threegram,pe";
    std::string models = "knn,mlp,forest";
    std::string geometry = "truncated";
    std::uint32_t size = 128;
    std::string split = "0.2";
    ModelFlags model;
    std::uint64_t seed = 42;
    int workers = 1;
};

int cmd_compare(const CompareFlags& f, std::ostream& out) {
    const std::string corpus = abs_path(f.corpus);
    if (!fs::is_directory(corpus)) throw UsageError("corpus directory not found: " + f.corpus);
    const fs::path out_dir = abs_path(f.out);
    const double test_fraction = parse_split_fraction(f.split);
    const Geometry geometry = parse_geometry(f.geometry);
    std::vector<Method> methods;
    std::vector<std::string> method_names, model_names;
    for (const auto& m : split_list(f.methods)) {
        methods.push_back(parse_method(m));
        method_names.emplace_back(to_string(methods.back()));
    }
    std::vector<TrainOptions> models;
    for (const auto& m : split_list(f.models)) {
        ModelFlags mf = f.model;
        mf.model = m;
        models.push_back(train_options(mf, f.seed, f.workers));
        model_names.emplace_back(to_string(models.back().model));
    }
    if (methods.empty() || models.empty()) throw UsageError("compare needs at least one method and one model");

    const auto entries = scan_corpus(corpus);
    std::string grid_csv = "method,model,accuracy,macro_precision,macro_recall,macro_f1,weighted_f1\n";
    std::string family_csv = "method,model,family,precision,recall,f1,support\n";
    ojson grid = ojson::array();
    for (const Method method : methods) {
        const ExtractConfig cfg{method, geometry, f.size};
        const Dataset ds = build_dataset_in_memory(entries, cfg, test_fraction, f.seed, f.workers);
        if (ds.test.rows == 0) throw UsageError("test split is empty");
        for (const auto& opts : models) {
            const auto model = train_model(ds, opts);
            const auto preds = model->predict_all(ds.test, f.workers);
            const EvalReport report = evaluate(ds.test_labels, preds, ds.classes);
            const std::string cell = std::string(to_string(method)) + "_" + std::string(to_string(opts.model));
            write_report(out_dir / "cells" / cell, report);
            grid_csv += std::string(to_string(method)) + "," + std::string(to_string(opts.model)) + "," +
                        num(report.accuracy) + "," + num(report.macro.precision) + "," + num(report.macro.recall) +
                        "," + num(report.macro.f1) + "," + num(report.weighted.f1) + "\n";
            for (std::size_t c = 0; c < ds.classes.size(); ++c) {
                const auto& m = report.per_class[c];
                family_csv += std::string(to_string(method)) + "," + std::string(to_string(opts.model)) + "," +
                              ds.classes[c] + "," + num(m.precision) + "," + num(m.recall) + "," + num(m.f1) + "," +
                              std::to_string(m.support) + "\n";
            }
            grid.push_back({{"method", to_string(method)},
                            {"model", to_string(opts.model)},
                            {"accuracy", report.accuracy},
                            {"macro_f1", report.macro.f1},
                            {"weighted_f1", report.weighted.f1}});
            out << to_string(method) << " + " << to_string(opts.model) << ": accuracy " << num(report.accuracy)
                << "\n";
        }
    }
    write_text(out_dir / "grid.csv", grid_csv);
    write_text(out_dir / "grid.json", grid.dump(2) + "\n");
    write_text(out_dir / "per_family_f1.csv", family_csv);

    RunLog log;
    log.command = "compare";
    log.argv = {"compare", "--corpus", corpus, "--out", out_dir.generic_string(), "--methods", join(method_names),
                "--models", join(model_names), "--geometry", std::string(to_string(geometry)), "--size",
                std::to_string(f.size), "--split", num(test_fraction), "--seed", std::to_string(f.seed),
                "--workers", std::to_string(f.workers)};
    const auto margv = model_argv(f.model, false);
    log.argv.insert(log.argv.end(), margv.begin(), margv.end());
    log.config = model_config(models.front());
    log.config.erase("model");
    log.config["methods"] = method_names;
    log.config["models"] = model_names;
    log.config["geometry"] = to_string(geometry);
    log.config["size"] = f.size;
    log.config["test_fraction"] = test_fraction;
    log.config["corpus"] = corpus;
    log.config["seed"] = f.seed;
    log.config["workers"] = f.workers;
    log.inputs = input_hashes({corpus});
    return finish(out_dir, log);
}

// stats -----------------------------------------------------------------

struct StatsFlags {
    std::string corpus, out, real;
    bool make_fixture = false;
    bool make_fakes = false;
    int families = 10;
    int per_family = 200;
    int benign = 0;
    int non_pe = 0;
    int count = 100;
    double sigma = 24.0;
    std::uint64_t seed = 42;
};

int cmd_stats(const StatsFlags& f, std::ostream& out) {
    const fs::path out_dir = abs_path(f.out);
    RunLog log;
    log.command = "stats";
    if (f.make_fixture && f.make_fakes) throw UsageError("choose one of --make-fixture and --make-fakes");
    if (f.make_fixture) {
        if (f.families < 1 || f.per_family < 1) throw UsageError("--families and --per-family must be positive");
        const FixtureConfig cfg{f.families, f.per_family, f.seed, f.benign, f.non_pe};
        const std::size_t n = make_fixture(out_dir, cfg);
        log.argv = {"stats", "--make-fixture", "--out", out_dir.generic_string(), "--families",
                    std::to_string(f.families), "--per-family", std::to_string(f.per_family), "--benign",
                    std::to_string(f.benign), "--non-pe", std::to_string(f.non_pe), "--seed",
                    std::to_string(f.seed)};
        log.config = {{"mode", "make_fixture"}, {"out", out_dir.generic_string()}, {"families", f.families},
                      {"per_family", f.per_family}, {"benign", f.benign}, {"non_pe_per_family", f.non_pe},
                      {"seed", f.seed}};
        out << "wrote " << n << " fixture files to " << out_dir.generic_string() << "\n";
    } else if (f.make_fakes) {
        if (f.real.empty()) throw UsageError("--make-fakes needs --real");
        if (f.count < 1) throw UsageError("--count must be positive");
        const std::string real = abs_path(f.real);
        std::vector<MalImage> reals;
        for (const auto& p : list_pngs(real)) reals.push_back(read_png(p));
        if (reals.empty()) throw UsageError("no PNGs under " + f.real);
        const auto fakes = noise_fakes(reals, static_cast<std::size_t>(f.count), f.seed, f.sigma);
        std::vector<ManifestRecord> records;
        for (std::size_t i = 0; i < fakes.size(); ++i) {
            char name[32];
            std::snprintf(name, sizeof name, "fake_%05zu.png", i);
            write_png(out_dir / name, fakes[i]);
            ManifestRecord r;
            r.sample_id = std::string("fake/") + name;
            r.family = "fake";
            r.method = std::string(to_string(fakes[i].method));
            r.geometry = std::string(to_string(fakes[i].geometry));
            r.image_path = name;
            r.generated = true;
            r.flags = {"generated", "noise_baseline"};
            records.push_back(std::move(r));
        }
        write_manifest_jsonl(out_dir / "manifest.jsonl", records);
        log.argv = {"stats", "--make-fakes", "--real", real, "--out", out_dir.generic_string(), "--count",
                    std::to_string(f.count), "--sigma", num(f.sigma), "--seed", std::to_string(f.seed)};
        log.config = {{"mode", "make_fakes"}, {"real", real}, {"out", out_dir.generic_string()},
                      {"count", f.count}, {"sigma", f.sigma}, {"seed", f.seed}};
        log.inputs = input_hashes({real});
        out << "wrote " << fakes.size() << " noise-baseline fakes to " << out_dir.generic_string() << "\n";
    } else {
        if (f.corpus.empty()) throw UsageError("stats needs --corpus, --make-fixture or --make-fakes");
        const std::string corpus = abs_path(f.corpus);
        if (!fs::is_directory(corpus)) throw UsageError("corpus directory not found: " + f.corpus);
        const auto entries = scan_corpus(corpus);
        const CorpusStats stats = corpus_stats(entries);
        write_text(out_dir / "stats.json", to_json(stats).dump(2) + "\n");
        std::string csv = "upper_bytes,width,count\n";
        for (std::size_t i = 0; i < stats.histogram_counts.size(); ++i) {
            const auto upper = stats.histogram_upper_bytes[i];
            const std::string upper_s = upper == UINT64_MAX ? "inf" : std::to_string(upper);
            csv += upper_s + "," + std::to_string(width_bins()[i].width) + "," +
                   std::to_string(stats.histogram_counts[i]) + "\n";
        }
        write_text(out_dir / "size_histogram.csv", csv);
        log.argv = {"stats", "--corpus", corpus, "--out", out_dir.generic_string(), "--seed",
                    std::to_string(f.seed)};
        log.config = {{"mode", "corpus"}, {"corpus", corpus}, {"out", out_dir.generic_string()}, {"seed", f.seed}};
        log.inputs = input_hashes({corpus});
        out << stats.total << " files in " << stats.family_counts.size() << " families\n";
        for (const auto& [fam, n] : stats.family_counts) {
            out << "  " << fam << ": " << n << " (mean " << num(stats.family_mean_kb.at(fam)) << " KB)\n";
        }
    }
    return finish(out_dir, log);
}

// replay ----------------------------------------------------------------

int cmd_replay(const std::string& log_path, const std::string& out_override, std::ostream& out, std::ostream& err) {
    const RunLog original = read_run_log(log_path);
    std::vector<std::string> args = original.argv;
    auto it = std::find(args.begin(), args.end(), "--out");
    if (it == args.end() || std::next(it) == args.end()) throw FormatError("run log argv has no --out");
    const std::string target = abs_path(out_override.empty() ? *std::next(it) + ".replay" : out_override);
    if (fs::exists(target) && !fs::is_empty(target)) throw UsageError("replay output is not empty: " + target);
    *std::next(it) = target;

    for (const auto& [path, hash] : original.inputs) {
        if (!fs::is_regular_file(path) || sha256_file(path) != hash) err << "warning: input changed: " << path << "\n";
    }
    std::ostringstream sink;
    const int code = run(args, sink, err);
    if (code == kExitUsage) return code;
    const auto replayed = hash_tree(target, {kRunLogName});

    std::size_t mismatches = 0;
    for (const auto& [rel, hash] : original.artifacts) {
        const auto found = replayed.find(rel);
        if (found == replayed.end()) {
            err << "missing: " << rel << "\n";
            ++mismatches;
        } else if (found->second != hash) {
            err << "differs: " << rel << "\n";
            ++mismatches;
        }
    }
    for (const auto& [rel, hash] : replayed) {
        if (!original.artifacts.contains(rel)) {
            err << "extra: " << rel << "\n";
            ++mismatches;
        }
    }
    if (mismatches == 0) {
        out << "replay identical: " << original.artifacts.size() << " artifacts (" << target << ")\n";
        return kExitOk;
    }
    out << "replay differs: " << mismatches << " of " << original.artifacts.size() << " artifacts\n";
    return kExitPartial;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"malimg: executables to images, image classifiers and evaluation"};
    app.require_subcommand(1);
    app.footer(kBinHelp);

    ExtractFlags ef;
    auto* extract = app.add_subcommand("extract", "encode every corpus file as a PNG and write a manifest");
    extract->add_option("--corpus", ef.corpus, "corpus root (one subdirectory per family)")->required();
    extract->add_option("--out", ef.out, "output directory")->required();
    extract->add_option("--method", ef.method, "grayscale | colormap | threegram | pe")->capture_default_str();
    extract->add_option("--geometry", ef.geometry, "truncated | resized")->capture_default_str();
    extract->add_option("--size", ef.size, "image side in pixels")->capture_default_str()->check(CLI::PositiveNumber);
    extract->add_option("--labels", ef.labels, "label file (rel_path,family) instead of subdirectories");
    extract->add_option("--seed", ef.seed, "recorded seed")->capture_default_str();
    extract->add_option("--workers", ef.workers, "worker threads")->capture_default_str()->check(CLI::PositiveNumber);

    DatasetFlags df;
    auto* dataset = app.add_subcommand("dataset", "split, flatten and normalise into a dataset directory");
    dataset->add_option("--manifest", df.manifest, "manifest.jsonl written by extract");
    dataset->add_option("--corpus", df.corpus, "corpus root, extracted in memory");
    dataset->add_option("--out", df.out, "dataset directory")->required();
    dataset->add_option("--method", df.method, "with --corpus")->capture_default_str();
    dataset->add_option("--geometry", df.geometry, "with --corpus")->capture_default_str();
    dataset->add_option("--size", df.size, "with --corpus")->capture_default_str()->check(CLI::PositiveNumber);
    dataset->add_option("--split", df.split, "test fraction (0.2) or train/test ratio (80/20)")->capture_default_str();
    dataset->add_option("--seed", df.seed, "split seed")->capture_default_str();
    dataset->add_option("--workers", df.workers, "worker threads")->capture_default_str()->check(CLI::PositiveNumber);

    TrainFlags tf;
    auto* train = app.add_subcommand("train", "fit a model on a dataset's training split");
    train->add_option("--dataset", tf.dataset, "dataset directory")->required();
    train->add_option("--out", tf.out, "output directory for model.mimm")->required();
    train->add_option("--seed", tf.seed, "model seed")->capture_default_str();
    train->add_option("--workers", tf.workers, "worker threads")->capture_default_str()->check(CLI::PositiveNumber);
    add_model_flags(train, tf.model, true);

    EvalFlags vf;
    auto* eval = app.add_subcommand("eval", "evaluate a model or a predictions file");
    eval->add_option("--task", vf.task, "classify | realfake")->capture_default_str();
    eval->add_option("--dataset", vf.dataset, "classify: dataset directory");
    eval->add_option("--model", vf.model, "classify: model.mimm path; realfake: model kind");
    eval->add_option("--predictions", vf.predictions, "classify: predictions JSONL instead of a model");
    eval->add_option("--real", vf.real, "realfake: directory of real PNGs");
    eval->add_option("--fake", vf.fake, "realfake: directory of fake PNGs");
    eval->add_option("--folds", vf.folds, "realfake: cross-validation folds")->capture_default_str();
    eval->add_option("--out", vf.out, "report directory")->required();
    eval->add_option("--seed", vf.seed, "realfake: fold and model seed")->capture_default_str();
    eval->add_option("--workers", vf.workers, "worker threads")->capture_default_str()->check(CLI::PositiveNumber);
    add_model_flags(eval, vf.realfake_model, false);

    CompareFlags cf;
    auto* compare = app.add_subcommand("compare", "accuracy grid over methods x models");
    compare->add_option("--corpus", cf.corpus, "corpus root")->required();
    compare->add_option("--out", cf.out, "output directory")->required();
    compare->add_option("--methods", cf.methods, "comma-separated methods")->capture_default_str();
    compare->add_option("--models", cf.models, "comma-separated models")->capture_default_str();
    compare->add_option("--method", cf.methods, "alias of --methods");
    compare->add_option("--model", cf.models, "alias of --models");
    compare->add_option("--geometry", cf.geometry, "truncated | resized")->capture_default_str();
    compare->add_option("--size", cf.size, "image side")->capture_default_str()->check(CLI::PositiveNumber);
    compare->add_option("--split", cf.split, "test fraction or train/test ratio")->capture_default_str();
    compare->add_option("--seed", cf.seed, "split and model seed")->capture_default_str();
    compare->add_option("--workers", cf.workers, "worker threads")->capture_default_str()->check(CLI::PositiveNumber);
    add_model_flags(compare, cf.model, false);

    StatsFlags sf;
    auto* stats = app.add_subcommand("stats", "corpus statistics, synthetic fixtures and noise fakes");
    stats->add_option("--corpus", sf.corpus, "corpus root to summarise");
    stats->add_option("--out", sf.out, "output directory")->required();
    stats->add_flag("--make-fixture", sf.make_fixture, "write a synthetic PE corpus to --out");
    stats->add_flag("--make-fakes", sf.make_fakes, "write noise-baseline fake PNGs to --out");
    stats->add_option("--families", sf.families, "fixture families")->capture_default_str();
    stats->add_option("--per-family", sf.per_family, "fixture samples per family")->capture_default_str();
    stats->add_option("--benign", sf.benign, "fixture benign samples")->capture_default_str();
    stats->add_option("--non-pe", sf.non_pe, "fixture non-PE files per family")->capture_default_str();
    stats->add_option("--real", sf.real, "fakes: directory of real PNGs");
    stats->add_option("--count", sf.count, "fakes: how many")->capture_default_str();
    stats->add_option("--sigma", sf.sigma, "fakes: noise standard deviation")->capture_default_str();
    stats->add_option("--seed", sf.seed, "generator seed")->capture_default_str();

    std::string replay_log, replay_out;
    auto* replay = app.add_subcommand("replay", "re-run a command from its run log and compare artifact hashes");
    replay->add_option("--log", replay_log, "run_log.json")->required();
    replay->add_option("--out", replay_out, "output directory (default: original --out + .replay)");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e, out, err);
        err << "usage error: " << e.what() << "\n";
        return kExitUsage;
    }

    try {
        if (extract->parsed()) return cmd_extract(ef, out, err);
        if (dataset->parsed()) return cmd_dataset(df, out);
        if (train->parsed()) return cmd_train(tf, out);
        if (eval->parsed()) {
            if (vf.task == "classify") return cmd_eval_classify(vf, out);
            if (vf.task == "realfake") return cmd_eval_realfake(vf, out);
            throw UsageError("--task expects classify or realfake");
        }
        if (compare->parsed()) return cmd_compare(cf, out);
        if (stats->parsed()) return cmd_stats(sf, out);
        if (replay->parsed()) return cmd_replay(replay_log, replay_out, out, err);
    } catch (const UsageError& e) {
        err << "usage error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitPartial;
    }
    return kExitUsage;
}

}  // namespace malimg::cli
