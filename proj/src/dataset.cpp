#include "malimg/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "malimg/binary_ingest.hpp"
#include "malimg/errors.hpp"
#include "malimg/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace malimg {

namespace {

std::map<std::string, std::string> read_label_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open label file " + path.string());
    std::map<std::string, std::string> labels;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        const auto sep = line.find_first_of(",\t");
        if (sep == std::string::npos) throw FormatError("label file line without separator: " + line);
        labels[line.substr(0, sep)] = line.substr(sep + 1);
    }
    return labels;
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

std::string join_flags(const std::vector<std::string>& flags, char sep) {
    std::string out;
    for (std::size_t i = 0; i < flags.size(); ++i) {
        if (i) out += sep;
        out += flags[i];
    }
    return out;
}

// Record indices grouped by family, families in sorted order.
std::map<std::string, std::vector<std::size_t>> group_by_family(std::span<const std::string> families) {
    std::map<std::string, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < families.size(); ++i) groups[families[i]].push_back(i);
    return groups;
}

}  // namespace

std::vector<CorpusEntry> scan_corpus(const fs::path& root, FamilySource source,
                                     const std::optional<fs::path>& label_file) {
    if (!fs::is_directory(root)) throw IoError("corpus root is not a directory: " + root.string());
    std::map<std::string, std::string> labels;
    if (source == FamilySource::label_file) {
        if (!label_file) throw UsageError("scan_corpus: label_file source needs a label file");
        labels = read_label_file(*label_file);
    }

    std::vector<CorpusEntry> entries;
    for (auto it = fs::recursive_directory_iterator(root, fs::directory_options::skip_permission_denied);
         it != fs::recursive_directory_iterator(); ++it) {
        std::error_code ec;
        if (!it->is_regular_file(ec)) continue;
        CorpusEntry e;
        e.path = it->path();
        e.rel_path = fs::relative(it->path(), root).generic_string();
        if (source == FamilySource::subdirectory) {
            const auto slash = e.rel_path.find('/');
            if (slash == std::string::npos) continue;
            e.family = e.rel_path.substr(0, slash);
        } else {
            const auto found = labels.find(e.rel_path);
            if (found == labels.end()) continue;
            e.family = found->second;
        }
        e.size_bytes = it->file_size(ec);
        if (ec || !std::ifstream(e.path, std::ios::binary)) e.flags.emplace_back("unreadable");
        entries.push_back(std::move(e));
    }
    std::sort(entries.begin(), entries.end(),
              [](const CorpusEntry& a, const CorpusEntry& b) { return a.rel_path < b.rel_path; });
    return entries;
}

CorpusStats corpus_stats(std::span<const CorpusEntry> records) {
    if (records.empty()) throw UsageError("corpus_stats: no records");
    CorpusStats stats;
    stats.total = records.size();
    const auto bins = width_bins();
    for (const auto& b : bins) stats.histogram_upper_bytes.push_back(b.upper_bytes);
    stats.histogram_counts.assign(bins.size(), 0);

    std::map<std::string, std::uint64_t> bytes_per_family;
    for (const auto& r : records) {
        ++stats.family_counts[r.family];
        bytes_per_family[r.family] += r.size_bytes;
        for (std::size_t i = 0; i < bins.size(); ++i) {
            if (r.size_bytes <= bins[i].upper_bytes) {
                ++stats.histogram_counts[i];
                break;
            }
        }
    }
    for (const auto& [family, count] : stats.family_counts) {
        stats.family_mean_kb[family] =
            static_cast<double>(bytes_per_family[family]) / static_cast<double>(kKiB) / static_cast<double>(count);
    }
    return stats;
}

json to_json(const CorpusStats& stats) {
    json bins = json::array();
    for (std::size_t i = 0; i < stats.histogram_counts.size(); ++i) {
        const auto upper = stats.histogram_upper_bytes[i];
        bins.push_back({{"upper_kb", upper == UINT64_MAX ? json(nullptr) : json(upper / kKiB)},
                        {"count", stats.histogram_counts[i]}});
    }
    return {{"total", stats.total},
            {"family_counts", stats.family_counts},
            {"family_mean_kb", stats.family_mean_kb},
            {"size_histogram", bins}};
}

std::string_view to_string(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::test: return "test";
        case Split::unassigned: break;
    }
    return "unassigned";
}

Split parse_split(std::string_view s) {
    if (s == "train") return Split::train;
    if (s == "test") return Split::test;
    if (s == "unassigned" || s.empty()) return Split::unassigned;
    throw FormatError("unknown split '" + std::string(s) + "'");
}

bool ManifestRecord::has_flag(std::string_view f) const {
    return std::find(flags.begin(), flags.end(), f) != flags.end();
}

void ManifestRecord::add_flag(std::string f) {
    if (!has_flag(f)) flags.push_back(std::move(f));
}

nlohmann::ordered_json to_json(const ManifestRecord& r) {
    nlohmann::ordered_json j;
    j["sample_id"] = r.sample_id;
    j["source_path"] = r.source_path;
    j["family"] = r.family;
    j["method"] = r.method;
    j["geometry"] = r.geometry;
    j["image_path"] = r.image_path;
    j["split"] = to_string(r.split);
    j["flags"] = r.flags;
    if (r.fold) j["fold"] = *r.fold;
    if (r.generated) j["generated"] = true;
    return j;
}

ManifestRecord record_from_json(const json& j) {
    try {
        ManifestRecord r;
        r.sample_id = j.at("sample_id").get<std::string>();
        r.source_path = j.value("source_path", "");
        r.family = j.at("family").get<std::string>();
        r.method = j.value("method", "");
        r.geometry = j.value("geometry", "");
        r.image_path = j.at("image_path").get<std::string>();
        r.split = parse_split(j.value("split", "unassigned"));
        r.flags = j.value("flags", std::vector<std::string>{});
        if (j.contains("fold")) r.fold = j.at("fold").get<int>();
        r.generated = j.value("generated", false);
        return r;
    } catch (const json::exception& e) {
        throw FormatError(std::string("manifest record: ") + e.what());
    }
}

void write_manifest_jsonl(const fs::path& path, std::span<const ManifestRecord> records) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    for (const auto& r : records) out << to_json(r).dump() << '\n';
}

std::vector<ManifestRecord> read_manifest_jsonl(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open manifest " + path.string());
    std::vector<ManifestRecord> records;
    std::set<std::string> seen;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw FormatError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
        auto r = record_from_json(j);
        if (!seen.insert(r.sample_id).second) {
            throw FormatError(path.string() + ": duplicate sample_id " + r.sample_id);
        }
        records.push_back(std::move(r));
    }
    return records;
}

void write_manifest_csv(const fs::path& path, std::span<const ManifestRecord> records) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << "sample_id,source_path,family,method,geometry,image_path,split,flags\n";
    for (const auto& r : records) {
        out << csv_field(r.sample_id) << ',' << csv_field(r.source_path) << ',' << csv_field(r.family)
            << ',' << r.method << ',' << r.geometry << ',' << csv_field(r.image_path) << ','
            << to_string(r.split) << ',' << csv_field(join_flags(r.flags, ';')) << '\n';
    }
}

std::vector<std::string> family_classes(std::span<const ManifestRecord> records) {
    std::set<std::string> names;
    for (const auto& r : records) names.insert(r.family);
    return {names.begin(), names.end()};
}

void stratified_split(std::span<ManifestRecord> records, double test_fraction, std::uint64_t seed) {
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
        throw UsageError("stratified_split: test fraction must lie in (0, 1)");
    }
    std::vector<std::string> families;
    families.reserve(records.size());
    for (const auto& r : records) families.push_back(r.family);

    Rng rng(seed);
    for (auto& [family, idx] : group_by_family(families)) {
        rng.shuffle(std::span(idx));
        const std::size_t n = idx.size();
        if (n == 1) {
            records[idx[0]].split = Split::train;
            records[idx[0]].add_flag("singleton_family");
            continue;
        }
        auto n_test = static_cast<std::size_t>(std::llround(static_cast<double>(n) * test_fraction));
        n_test = std::min(n_test, n - 1);
        for (std::size_t i = 0; i < n; ++i) {
            records[idx[i]].split = i < n_test ? Split::test : Split::train;
        }
    }
}

std::vector<int> stratified_folds(std::span<const std::string> families, int k, std::uint64_t seed) {
    if (k < 2) throw UsageError("stratified_folds: need at least 2 folds");
    std::vector<int> folds(families.size(), 0);
    Rng rng(seed);
    int offset = 0;
    for (auto& [family, idx] : group_by_family(families)) {
        rng.shuffle(std::span(idx));
        for (std::size_t i = 0; i < idx.size(); ++i) {
            folds[idx[i]] = static_cast<int>((i + static_cast<std::size_t>(offset)) % static_cast<std::size_t>(k));
        }
        // continue dealing where the previous family stopped to balance fold sizes
        offset = static_cast<int>((static_cast<std::size_t>(offset) + idx.size()) % static_cast<std::size_t>(k));
    }
    return folds;
}

void kfold_assign(std::span<ManifestRecord> records, int k, std::uint64_t seed) {
    std::vector<std::string> families;
    for (const auto& r : records) families.push_back(r.family);
    const auto folds = stratified_folds(families, k, seed);
    for (std::size_t i = 0; i < records.size(); ++i) records[i].fold = folds[i];
}

}  // namespace malimg
