#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace malimg {

enum class FamilySource { subdirectory, label_file };

/// A file found by scan_corpus. Bytes are loaded on demand (load_binary).
struct CorpusEntry {
    std::filesystem::path path;
    std::string rel_path;  // generic form, relative to the corpus root
    std::string family;
    std::uint64_t size_bytes = 0;
    std::vector<std::string> flags;
};

/// All regular files under root, sorted by relative path.
///
/// subdirectory: the family is the first path component below root; files
/// directly in root are skipped. label_file: lines of "rel_path,family"
/// (or tab separated); files without a label are skipped.
/// Unreadable files are kept with an "unreadable" flag.
std::vector<CorpusEntry> scan_corpus(const std::filesystem::path& root,
                                     FamilySource source = FamilySource::subdirectory,
                                     const std::optional<std::filesystem::path>& label_file = std::nullopt);

struct CorpusStats {
    std::size_t total = 0;
    std::map<std::string, std::size_t> family_counts;
    std::map<std::string, double> family_mean_kb;
    std::vector<std::uint64_t> histogram_upper_bytes;  // bin upper edges (width bins)
    std::vector<std::size_t> histogram_counts;
};

/// Throws UsageError on an empty record list.
CorpusStats corpus_stats(std::span<const CorpusEntry> records);
nlohmann::json to_json(const CorpusStats& stats);

enum class Split { unassigned, train, test };
std::string_view to_string(Split s);
Split parse_split(std::string_view s);

struct ManifestRecord {
    std::string sample_id;
    std::string source_path;
    std::string family;
    std::string method;
    std::string geometry;
    std::string image_path;  // relative to the manifest's directory
    Split split = Split::unassigned;
    std::vector<std::string> flags;
    std::optional<int> fold;
    bool generated = false;

    bool has_flag(std::string_view f) const;
    void add_flag(std::string f);
};

struct DatasetManifest {
    std::vector<ManifestRecord> records;
    std::uint64_t seed = 42;
    std::string created_at;
    nlohmann::json encoder_config = nlohmann::json::object();
};

/// Keys in a fixed order so manifest lines are byte-stable.
nlohmann::ordered_json to_json(const ManifestRecord& r);
ManifestRecord record_from_json(const nlohmann::json& j);

/// One compact JSON object per line, keys in a fixed order.
void write_manifest_jsonl(const std::filesystem::path& path, std::span<const ManifestRecord> records);
std::vector<ManifestRecord> read_manifest_jsonl(const std::filesystem::path& path);
void write_manifest_csv(const std::filesystem::path& path, std::span<const ManifestRecord> records);

/// Sorted distinct family names; class id = index in this list.
std::vector<std::string> family_classes(std::span<const ManifestRecord> records);

/// Per family (in sorted family order) shuffles that family's records with a
/// single seeded generator and sends round(n * test_fraction) of them to
/// test, keeping at least one in train. Singleton families stay in train
/// and get a "singleton_family" flag. Throws UsageError unless 0 < f < 1.
void stratified_split(std::span<ManifestRecord> records, double test_fraction, std::uint64_t seed);

/// Stratified k-fold assignment: each family's shuffled records are dealt
/// round-robin into folds 0..k-1. Returns the fold per record.
std::vector<int> stratified_folds(std::span<const std::string> families, int k, std::uint64_t seed);
void kfold_assign(std::span<ManifestRecord> records, int k, std::uint64_t seed);

}  // namespace malimg
