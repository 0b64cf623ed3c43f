#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "malimg/classifier.hpp"
#include "malimg/dataset.hpp"
#include "malimg/ensemble.hpp"
#include "malimg/extract.hpp"
#include "malimg/features.hpp"
#include "malimg/metrics.hpp"

namespace malimg {

struct ExtractOptions {
    std::filesystem::path corpus;
    std::filesystem::path out;
    ExtractConfig config;
    FamilySource family_source = FamilySource::subdirectory;
    std::optional<std::filesystem::path> label_file;
    int workers = 1;
};

struct FileError {
    std::string path;
    std::string message;
};

struct ExtractRun {
    std::vector<ManifestRecord> records;
    std::vector<FileError> errors;
};

/// Image file name for a corpus-relative path: separators become "__".
std::string image_name_for(const std::string& rel_path);

/// Extracts every corpus file to out/images/<family>/<name>.png and writes
/// out/manifest.jsonl and out/manifest.csv. Files that fail (empty,
/// unreadable) are reported in `errors` and left out of the manifest.
ExtractRun extract_corpus(const ExtractOptions& options);

/// A split, normalised dataset held in memory.
struct Dataset {
    std::vector<std::string> classes;
    std::vector<ManifestRecord> train_records;
    std::vector<ManifestRecord> test_records;
    FeatureMatrix train;
    FeatureMatrix test;
    std::vector<int> train_labels;
    std::vector<int> test_labels;
    Normalizer normalizer;
};

int class_index(const std::vector<std::string>& classes, const std::string& family);

/// Splits `records` (stratified), loads their images relative to
/// `image_root`, flattens, fits the normaliser on train and applies it to
/// both splits.
Dataset build_dataset(std::vector<ManifestRecord> records, const std::filesystem::path& image_root,
                      double test_fraction, std::uint64_t seed, int workers = 1);

/// The same, extracting images from corpus files in memory (no PNGs).
Dataset build_dataset_in_memory(const std::vector<CorpusEntry>& corpus, const ExtractConfig& config,
                                double test_fraction, std::uint64_t seed, int workers = 1);

/// Directory layout: manifest.jsonl (with splits), classes.json,
/// train.mimf, test.mimf (+ .hdr sidecars), normalizer.bin. Matrix rows
/// follow manifest order within each split.
void save_dataset(const std::filesystem::path& dir, const Dataset& ds);
Dataset load_dataset(const std::filesystem::path& dir);

/// Full model roster configuration for training.
struct TrainOptions {
    ModelKind model = ModelKind::knn;
    KnnParams knn;
    MlpParams mlp;
    ForestParams forest;
    std::vector<MemberSpec> roster;  // vote / stacked; empty = default_roster()
    StackParams stack;
    int workers = 1;
};

/// knn and mlp contribute probability vectors, forest its label.
std::vector<MemberSpec> default_roster(const TrainOptions& options);

std::unique_ptr<Classifier> train_model(const Dataset& ds, const TrainOptions& options);

/// Exchange format: one {"sample_id", "label", "probabilities"} object per line.
/// `label` is written as the class id.
struct PredictionRecord {
    std::string sample_id;
    Prediction prediction;
};
void write_predictions(const std::filesystem::path& path, const std::vector<PredictionRecord>& preds);

/// Accepts labels as class ids or family names (resolved against `classes`).
/// Missing probabilities become one-hot.
std::vector<PredictionRecord> read_predictions(const std::filesystem::path& path,
                                               const std::vector<std::string>& classes);

EvalReport evaluate(std::span<const int> truth, std::span<const Prediction> preds,
                    const std::vector<std::string>& classes);

/// Real-vs-fake detection. Label 1 = fake (positive). Out-of-fold
/// probabilities from stratified k-fold cross-validation, each fold with its
/// own normaliser; the AUC uses P(fake).
struct RealFakeOptions {
    std::filesystem::path real_dir;
    std::filesystem::path fake_dir;
    TrainOptions train;
    int folds = 5;
    std::uint64_t seed = 42;
};

struct RealFakeResult {
    EvalReport report;
    std::vector<PredictionRecord> predictions;
};

RealFakeResult evaluate_real_fake(const RealFakeOptions& options);
RealFakeResult evaluate_real_fake(const std::vector<MalImage>& real, const std::vector<MalImage>& fake,
                                  const TrainOptions& train, int folds, std::uint64_t seed);

/// PNGs under a directory, sorted by relative path.
std::vector<std::filesystem::path> list_pngs(const std::filesystem::path& dir);

}  // namespace malimg
