#include "malimg/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include "malimg/binary_io.hpp"
#include "malimg/errors.hpp"
#include "malimg/forest.hpp"
#include "malimg/knn.hpp"
#include "malimg/mlp.hpp"
#include "malimg/parallel.hpp"
#include "malimg/png_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace malimg {

namespace {

void fill_row(FeatureMatrix& m, std::size_t row, const MalImage& img) {
    if (img.pixels.size() != m.cols) throw UsageError("image shape differs from the rest of the dataset");
    std::copy(img.pixels.begin(), img.pixels.end(), m.row(row).begin());
}

struct SplitIndex {
    std::vector<std::size_t> train, test;
};

SplitIndex index_splits(const std::vector<ManifestRecord>& records) {
    SplitIndex s;
    for (std::size_t i = 0; i < records.size(); ++i) {
        (records[i].split == Split::test ? s.test : s.train).push_back(i);
    }
    return s;
}

// Loads or synthesises the image of each selected record straight into rows.
template <typename ImageFor>
FeatureMatrix gather(const std::vector<std::size_t>& idx, std::size_t cols, int workers, ImageFor&& image_for) {
    FeatureMatrix m(idx.size(), cols);
    parallel_for(idx.size(), workers, [&](std::size_t i) { fill_row(m, i, image_for(idx[i])); });
    return m;
}

Dataset assemble(std::vector<ManifestRecord> records, double test_fraction, std::uint64_t seed, int workers,
                 const std::function<MalImage(std::size_t)>& image_for) {
    if (records.empty()) throw UsageError("dataset: no records");
    stratified_split(records, test_fraction, seed);
    Dataset ds;
    ds.classes = family_classes(records);
    const SplitIndex split = index_splits(records);
    if (split.train.empty()) throw UsageError("dataset: training split is empty");
    const std::size_t cols = image_for(split.train.front()).pixels.size();

    ds.train = gather(split.train, cols, workers, image_for);
    ds.test = gather(split.test, cols, workers, image_for);
    for (auto i : split.train) {
        ds.train_records.push_back(records[i]);
        ds.train_labels.push_back(class_index(ds.classes, records[i].family));
    }
    for (auto i : split.test) {
        ds.test_records.push_back(records[i]);
        ds.test_labels.push_back(class_index(ds.classes, records[i].family));
    }
    ds.normalizer = Normalizer::fit(ds.train);
    ds.normalizer.apply_inplace(ds.train);
    if (ds.test.rows > 0) ds.normalizer.apply_inplace(ds.test);
    return ds;
}

}  // namespace

std::string image_name_for(const std::string& rel_path) {
    std::string name;
    for (std::size_t i = 0; i < rel_path.size(); ++i) {
        if (rel_path[i] == '/') name += "__";
        else name += rel_path[i];
    }
    return name + ".png";
}

ExtractRun extract_corpus(const ExtractOptions& opt) {
    const auto entries = scan_corpus(opt.corpus, opt.family_source, opt.label_file);
    std::vector<std::optional<ManifestRecord>> slots(entries.size());
    std::vector<std::optional<FileError>> failures(entries.size());

    parallel_for(entries.size(), opt.workers, [&](std::size_t i) {
        const auto& e = entries[i];
        try {
            if (std::find(e.flags.begin(), e.flags.end(), "unreadable") != e.flags.end()) {
                throw IoError("unreadable file");
            }
            const Bytes bytes = read_file_bytes(e.path);
            const Extraction ex = extract_image(bytes, opt.config);
            ManifestRecord r;
            r.sample_id = e.rel_path;
            r.source_path = e.rel_path;
            r.family = e.family;
            r.method = std::string(to_string(opt.config.method));
            r.geometry = std::string(to_string(opt.config.geometry));
            r.image_path = "images/" + e.family + "/" + image_name_for(e.rel_path);
            r.flags = ex.flags;
            write_png(opt.out / r.image_path, ex.image);
            slots[i] = std::move(r);
        } catch (const std::exception& err) {
            failures[i] = FileError{e.rel_path, err.what()};
        }
    });

    ExtractRun run;
    for (std::size_t i = 0; i < entries.size(); ++i) {
        if (slots[i]) run.records.push_back(std::move(*slots[i]));
        if (failures[i]) run.errors.push_back(std::move(*failures[i]));
    }
    write_manifest_jsonl(opt.out / "manifest.jsonl", run.records);
    write_manifest_csv(opt.out / "manifest.csv", run.records);
    return run;
}

int class_index(const std::vector<std::string>& classes, const std::string& family) {
    const auto it = std::lower_bound(classes.begin(), classes.end(), family);
    if (it == classes.end() || *it != family) throw UsageError("unknown family '" + family + "'");
    return static_cast<int>(it - classes.begin());
}

Dataset build_dataset(std::vector<ManifestRecord> records, const fs::path& image_root, double test_fraction,
                      std::uint64_t seed, int workers) {
    const auto snapshot = records;
    return assemble(std::move(records), test_fraction, seed, workers,
                    [&](std::size_t i) { return read_png(image_root / snapshot[i].image_path); });
}

Dataset build_dataset_in_memory(const std::vector<CorpusEntry>& corpus, const ExtractConfig& config,
                                double test_fraction, std::uint64_t seed, int workers) {
    std::vector<ManifestRecord> records;
    std::vector<const CorpusEntry*> sources;
    for (const auto& e : corpus) {
        if (e.size_bytes == 0 || std::find(e.flags.begin(), e.flags.end(), "unreadable") != e.flags.end()) continue;
        ManifestRecord r;
        r.sample_id = e.rel_path;
        r.source_path = e.rel_path;
        r.family = e.family;
        r.method = std::string(to_string(config.method));
        r.geometry = std::string(to_string(config.geometry));
        records.push_back(std::move(r));
        sources.push_back(&e);
    }
    return assemble(std::move(records), test_fraction, seed, workers, [&](std::size_t i) {
        return extract_image(read_file_bytes(sources[i]->path), config).image;
    });
}

void save_dataset(const fs::path& dir, const Dataset& ds) {
    fs::create_directories(dir);
    std::vector<ManifestRecord> all = ds.train_records;
    all.insert(all.end(), ds.test_records.begin(), ds.test_records.end());
    write_manifest_jsonl(dir / "manifest.jsonl", all);
    write_manifest_csv(dir / "manifest.csv", all);
    {
        std::ofstream out(dir / "classes.json", std::ios::trunc);
        out << json(ds.classes).dump() << '\n';
    }
    write_feature_matrix(dir / "train.mimf", ds.train);
    write_feature_matrix(dir / "test.mimf", ds.test);
    write_all((dir / "normalizer.bin").string(), ds.normalizer.serialize());
}

Dataset load_dataset(const fs::path& dir) {
    Dataset ds;
    std::ifstream cls(dir / "classes.json");
    if (!cls) throw IoError("dataset has no classes.json: " + dir.string());
    ds.classes = json::parse(cls).get<std::vector<std::string>>();
    for (auto& r : read_manifest_jsonl(dir / "manifest.jsonl")) {
        if (r.split == Split::unassigned) throw UsageError("dataset manifest has records without a split");
        (r.split == Split::test ? ds.test_records : ds.train_records).push_back(std::move(r));
    }
    ds.train = read_feature_matrix(dir / "train.mimf");
    ds.test = read_feature_matrix(dir / "test.mimf");
    if (ds.train.rows != ds.train_records.size() || ds.test.rows != ds.test_records.size()) {
        throw FormatError("dataset matrices do not match the manifest splits");
    }
    for (const auto& r : ds.train_records) ds.train_labels.push_back(class_index(ds.classes, r.family));
    for (const auto& r : ds.test_records) ds.test_labels.push_back(class_index(ds.classes, r.family));
    ds.normalizer = Normalizer::deserialize(read_all((dir / "normalizer.bin").string()));
    return ds;
}

std::vector<MemberSpec> default_roster(const TrainOptions& o) {
    MemberSpec knn{ModelKind::knn, OutputKind::probabilities, o.knn, o.mlp, o.forest};
    MemberSpec mlp{ModelKind::mlp, OutputKind::probabilities, o.knn, o.mlp, o.forest};
    MemberSpec forest{ModelKind::forest, OutputKind::label, o.knn, o.mlp, o.forest};
    return {knn, mlp, forest};
}

std::unique_ptr<Classifier> train_model(const Dataset& ds, const TrainOptions& o) {
    const int C = static_cast<int>(ds.classes.size());
    auto roster = o.roster.empty() ? default_roster(o) : o.roster;
    for (auto& m : roster) m.forest.workers = o.workers;
    switch (o.model) {
        case ModelKind::knn:
        case ModelKind::mlp:
        case ModelKind::forest: {
            MemberSpec spec{o.model, OutputKind::label, o.knn, o.mlp, o.forest};
            spec.forest.workers = o.workers;
            return fit_member(spec, ds.train, ds.train_labels, C);
        }
        case ModelKind::vote: {
            std::vector<std::unique_ptr<Classifier>> members;
            for (const auto& spec : roster) members.push_back(fit_member(spec, ds.train, ds.train_labels, C));
            return std::make_unique<VoteEnsemble>(std::move(members));
        }
        case ModelKind::stacked: {
            StackParams sp = o.stack;
            sp.workers = o.workers;
            sp.meta.workers = o.workers;
            return std::make_unique<StackedEnsemble>(stacked_fit(ds.train, ds.train_labels, C, roster, sp));
        }
    }
    throw UsageError("unsupported model kind");
}

void write_predictions(const fs::path& path, const std::vector<PredictionRecord>& preds) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    for (const auto& p : preds) {
        nlohmann::ordered_json j;
        j["sample_id"] = p.sample_id;
        j["label"] = p.prediction.label;
        j["probabilities"] = p.prediction.probabilities;
        out << j.dump() << '\n';
    }
}

std::vector<PredictionRecord> read_predictions(const fs::path& path, const std::vector<std::string>& classes) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open predictions " + path.string());
    std::vector<PredictionRecord> out;
    std::string line;
    std::size_t lineno = 0;
    const auto C = classes.size();
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            const json j = json::parse(line);
            PredictionRecord rec;
            rec.sample_id = j.at("sample_id").get<std::string>();
            const auto& label = j.at("label");
            int id = label.is_string() ? class_index(classes, label.get<std::string>()) : label.get<int>();
            if (id < 0 || static_cast<std::size_t>(id) >= C) throw UsageError("label out of range");
            if (j.contains("probabilities") && !j["probabilities"].is_null()) {
                rec.prediction.probabilities = j["probabilities"].get<std::vector<double>>();
                if (rec.prediction.probabilities.size() != C) throw UsageError("probability vector has wrong length");
            } else {
                rec.prediction.probabilities.assign(C, 0.0);
                rec.prediction.probabilities[static_cast<std::size_t>(id)] = 1.0;
            }
            rec.prediction.label = id;
            out.push_back(std::move(rec));
        } catch (const json::exception& e) {
            throw FormatError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        } catch (const UsageError& e) {
            throw FormatError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

EvalReport evaluate(std::span<const int> truth, std::span<const Prediction> preds,
                    const std::vector<std::string>& classes) {
    if (truth.size() != preds.size()) throw UsageError("evaluate: prediction count differs from labels");
    std::vector<int> labels;
    labels.reserve(preds.size());
    for (const auto& p : preds) labels.push_back(p.label);
    auto report = classification_metrics(confusion(truth, labels, classes.size()), classes);
    if (classes.size() == 2) {
        std::vector<double> scores;
        for (const auto& p : preds) scores.push_back(p.probabilities.at(1));
        try {
            report.auc = roc_auc(scores, truth);
        } catch (const UndefinedAucError&) {
        }
    }
    return report;
}

std::vector<fs::path> list_pngs(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
    std::vector<fs::path> out;
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
        if (e.is_regular_file() && e.path().extension() == ".png") out.push_back(e.path());
    }
    std::sort(out.begin(), out.end());
    return out;
}

RealFakeResult evaluate_real_fake(const std::vector<MalImage>& real, const std::vector<MalImage>& fake,
                                  const TrainOptions& train, int folds, std::uint64_t seed) {
    if (real.empty() || fake.empty()) throw UsageError("realfake: need both real and fake images");
    std::vector<MalImage> all = real;
    all.insert(all.end(), fake.begin(), fake.end());
    const FeatureMatrix x = stack_images(all);
    std::vector<int> y(real.size(), 0);
    y.resize(all.size(), 1);
    std::vector<std::string> strata;
    for (int v : y) strata.push_back(std::to_string(v));
    const auto fold_of = stratified_folds(strata, folds, seed);

    std::vector<Prediction> preds(all.size());
    const std::vector<std::string> classes{"real", "fake"};
    for (int f = 0; f < folds; ++f) {
        std::vector<std::size_t> fit_rows, held_rows;
        for (std::size_t i = 0; i < all.size(); ++i) (fold_of[i] == f ? held_rows : fit_rows).push_back(i);
        if (held_rows.empty()) continue;
        Dataset ds;
        ds.classes = classes;
        ds.train = x.select_rows(fit_rows);
        ds.test = x.select_rows(held_rows);
        for (auto i : fit_rows) ds.train_labels.push_back(y[i]);
        ds.normalizer = Normalizer::fit(ds.train);
        ds.normalizer.apply_inplace(ds.train);
        ds.normalizer.apply_inplace(ds.test);
        TrainOptions opts = train;
        opts.knn.k = std::min<int>(opts.knn.k, static_cast<int>(fit_rows.size()));
        const auto model = train_model(ds, opts);
        const auto held = model->predict_all(ds.test, train.workers);
        for (std::size_t h = 0; h < held_rows.size(); ++h) preds[held_rows[h]] = held[h];
    }
    RealFakeResult result;
    result.report = evaluate(y, preds, classes);
    for (std::size_t i = 0; i < all.size(); ++i) {
        const std::string prefix = i < real.size() ? "real/" : "fake/";
        const std::size_t n = i < real.size() ? i : i - real.size();
        result.predictions.push_back({prefix + std::to_string(n), preds[i]});
    }
    return result;
}

RealFakeResult evaluate_real_fake(const RealFakeOptions& o) {
    std::vector<MalImage> real, fake;
    const auto real_paths = list_pngs(o.real_dir);
    const auto fake_paths = list_pngs(o.fake_dir);
    for (const auto& p : real_paths) real.push_back(read_png(p));
    for (const auto& p : fake_paths) fake.push_back(read_png(p));
    auto result = evaluate_real_fake(real, fake, o.train, o.folds, o.seed);
    for (std::size_t i = 0; i < result.predictions.size(); ++i) {
        const bool is_real = i < real.size();
        const auto& p = is_real ? real_paths[i] : fake_paths[i - real.size()];
        result.predictions[i].sample_id =
            (is_real ? "real/" : "fake/") + fs::relative(p, is_real ? o.real_dir : o.fake_dir).generic_string();
    }
    return result;
}

}  // namespace malimg
