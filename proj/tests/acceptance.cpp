// Acceptance suite: one PASS/FAIL line per criterion.
//
//   malimg_acceptance            run every criterion
//   malimg_acceptance 3 4        run a subset

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "cli.hpp"
#include "malimg/binary_ingest.hpp"
#include "malimg/encoders.hpp"
#include "malimg/errors.hpp"
#include "malimg/ensemble.hpp"
#include "malimg/extract.hpp"
#include "malimg/fixture.hpp"
#include "malimg/metrics.hpp"
#include "malimg/mlp.hpp"
#include "malimg/pe_parser.hpp"
#include "malimg/pipeline.hpp"
#include "malimg/png_io.hpp"
#include "malimg/rng.hpp"
#include "malimg/runlog.hpp"

using namespace malimg;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

// Pinned tolerances and thresholds.
constexpr int kFuzzCases = 1000;
constexpr double kEncoderBudgetSeconds = 60.0;
constexpr double kEntropyTolerance = 1e-12;
constexpr int kAucInstances = 500;
constexpr std::size_t kAucMaxN = 200;
constexpr int kConfusionInstances = 100;
constexpr int kGradientBatches = 20;
constexpr double kGradientRelError = 1e-4;
constexpr int kFamilies = 10;
constexpr int kPerFamily = 200;
constexpr std::uint32_t kImageSize = 128;
constexpr double kMinMulticlassAccuracy = 0.90;
constexpr double kMulticlassBudgetSeconds = 15 * 60.0;
constexpr double kVoteSlack = 0.02;
constexpr double kStackSlack = 0.01;
constexpr std::uint64_t kSeed = 42;
constexpr double kTestFraction = 0.2;

struct Outcome {
    bool pass;
    std::string detail;
};

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v, int prec = 4) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", prec, v);
    return buf;
}

std::string fmt_sci(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.3e", v);
    return buf;
}

class TempDir {
public:
    explicit TempDir(const std::string& tag)
        : path_(fs::temp_directory_path() / ("malimg_accept_" + tag + "_" + std::to_string(::getpid()))) {
        fs::remove_all(path_);
        fs::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    const fs::path& path() const { return path_; }
    std::string operator/(const std::string& p) const { return (path_ / p).string(); }

private:
    fs::path path_;
};

// ---- independent oracles ---------------------------------------------------

struct PlasmaEntry {
    int r, g, b;
};

std::vector<PlasmaEntry> plasma_from_file() {
    std::ifstream in(std::string(MALIMG_DATA_DIR) + "/plasma.txt");
    std::vector<PlasmaEntry> out;
    int i, r, g, b;
    while (in >> i >> r >> g >> b) out.push_back({r, g, b});
    return out;
}

double oracle_entropy(const std::uint8_t* data, std::size_t n) {
    std::map<int, std::size_t> counts;
    for (std::size_t i = 0; i < n; ++i) ++counts[data[i]];
    long double h = 0;
    for (const auto& [v, c] : counts) {
        const long double p = static_cast<long double>(c) / n;
        h -= p * std::log2(p);
    }
    return static_cast<double>(h);
}

int oracle_round_half_up(double v) {
    const double r = std::floor(v + 0.5);
    return static_cast<int>(std::clamp(r, 0.0, 255.0));
}

// ---- fuzz corpus -----------------------------------------------------------

std::uint32_t rd32(const Bytes& b, std::size_t off) {
    return b[off] | (b[off + 1] << 8) | (b[off + 2] << 16) | (static_cast<std::uint32_t>(b[off + 3]) << 24);
}

void wr32(Bytes& b, std::size_t off, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) b[off + i] = static_cast<std::uint8_t>(v >> (8 * i));
}

Bytes fuzz_case(Rng& rng, int i) {
    switch (i % 4) {
        case 0: {  // random bytes, random length
            Bytes b(1 + rng.uniform_index(40000));
            for (auto& x : b) x = static_cast<std::uint8_t>(rng.next_u64());
            return b;
        }
        case 1: {  // low-entropy runs
            Bytes b(1 + rng.uniform_index(20000));
            const std::uint64_t alphabet = 1 + rng.uniform_index(6);
            for (auto& x : b) x = static_cast<std::uint8_t>(rng.uniform_index(alphabet) * 37);
            return b;
        }
        case 2: {  // well-formed synthetic PE
            return synth_sample(static_cast<int>(rng.uniform_index(12)), i, rng.next_u64());
        }
        default: {  // damaged PE: truncation and rewritten section fields
            Bytes b = synth_sample(static_cast<int>(rng.uniform_index(12)), i, rng.next_u64());
            const std::uint32_t pe = rd32(b, 0x3C);
            const std::uint32_t nsec = b[pe + 6] | (b[pe + 7] << 8);
            const std::uint32_t opt = b[pe + 20] | (b[pe + 21] << 8);
            const std::size_t table = pe + 24 + opt;
            for (std::uint32_t s = 0; s < nsec; ++s) {
                if (rng.uniform() < 0.5) continue;
                const std::size_t e = table + 40 * s;
                if (rng.uniform() < 0.5) wr32(b, e + 16, static_cast<std::uint32_t>(rng.uniform_index(b.size() * 2)));
                if (rng.uniform() < 0.5) wr32(b, e + 20, static_cast<std::uint32_t>(rng.uniform_index(b.size() + 4096)));
            }
            if (rng.uniform() < 0.5) b.resize(std::max<std::size_t>(table + 40 * nsec, rng.uniform_index(b.size())));
            return b;
        }
    }
}

// ---- criteria ---------------------------------------------------------------

Outcome encoder_exactness() {
    const auto t0 = Clock::now();
    const auto plasma = plasma_from_file();
    if (plasma.size() != 256) return {false, "plasma data file unreadable"};
    const auto& cmap = ColorMap256::plasma();
    Rng rng(kSeed);
    std::size_t failures = 0, pe_regions = 0, fallbacks = 0, clamped = 0;
    std::string first_failure;
    auto fail = [&](const std::string& what) {
        if (failures++ == 0) first_failure = what;
    };

    // every byte value through the colour map
    Bytes all(256);
    std::iota(all.begin(), all.end(), 0);
    const MalImage every = encode_colormap(all, cmap, 16);
    for (int b = 0; b < 256; ++b) {
        if (every.pixels[b * 3] != plasma[b].r || every.pixels[b * 3 + 1] != plasma[b].g ||
            every.pixels[b * 3 + 2] != plasma[b].b) {
            fail("colormap entry " + std::to_string(b));
        }
    }

    for (int i = 0; i < kFuzzCases; ++i) {
        const Bytes bytes = fuzz_case(rng, i);
        const std::size_t n = bytes.size();
        const std::string tag = "case " + std::to_string(i) + ": ";
        const std::uint32_t width = i % 2 ? bin_width(n) : static_cast<std::uint32_t>(1 + rng.uniform_index(300));

        // grayscale: grid -> image -> PNG -> image reproduces the padded bytes
        const MalImage gray = encode_grayscale(layout_grid(bytes, width));
        const MalImage gray_back = decode_png(encode_png(gray));
        if (gray_back.pixels.size() != gray.pixels.size() ||
            !std::equal(bytes.begin(), bytes.end(), gray_back.pixels.begin()) ||
            !std::all_of(gray_back.pixels.begin() + static_cast<std::ptrdiff_t>(n), gray_back.pixels.end(),
                         [](std::uint8_t v) { return v == 0; })) {
            fail(tag + "grayscale round trip");
        }

        // 3-gram: B = 255 - b3, with missing bytes read as 0
        const MalImage tri = encode_3gram(bytes, width);
        for (std::size_t k = 0; k < (n + 2) / 3; ++k) {
            const int b1 = bytes[3 * k];
            const int b2 = 3 * k + 1 < n ? bytes[3 * k + 1] : 0;
            const int b3 = 3 * k + 2 < n ? bytes[3 * k + 2] : 0;
            if (tri.pixels[k * 3] != b1 || tri.pixels[k * 3 + 1] != b2 || tri.pixels[k * 3 + 2] != 255 - b3) {
                fail(tag + "3-gram pixel " + std::to_string(k));
                break;
            }
        }

        // colormap: pixel = plasma[byte]
        const MalImage cm = encode_colormap(bytes, cmap, width);
        for (std::size_t k = 0; k < n; ++k) {
            const auto& e = plasma[bytes[k]];
            if (cm.pixels[k * 3] != e.r || cm.pixels[k * 3 + 1] != e.g || cm.pixels[k * 3 + 2] != e.b) {
                fail(tag + "colormap pixel " + std::to_string(k));
                break;
            }
        }

        // PE: constant R and B per region, R from an independent entropy
        const PEFileInfo info = parse_pe_or_fallback(bytes);
        fallbacks += info.fallback;
        clamped += info.any_clamped();
        const MalImage pe = encode_pe(info, bytes);
        std::uint64_t covered = 0;
        for (const auto& region : info.regions()) {
            if (region.raw_size == 0) continue;
            ++pe_regions;
            const double h = oracle_entropy(bytes.data() + region.raw_offset, region.raw_size);
            const int r = oracle_round_half_up(h * 255.0 / 8.0);
            const int blue = static_cast<int>((2 * region.raw_size * 255 + n) / (2 * n));
            for (std::uint64_t p = region.raw_offset; p < region.end(); ++p) {
                if (pe.pixels[p * 3] != r || pe.pixels[p * 3 + 1] != bytes[p] || pe.pixels[p * 3 + 2] != blue) {
                    fail(tag + "PE pixel " + std::to_string(p) + " in " + region.name);
                    break;
                }
            }
            covered += region.raw_size;
        }
        if (covered != n) fail(tag + "PE regions do not tile the file");
    }
    const double secs = seconds_since(t0);
    if (secs >= kEncoderBudgetSeconds) fail("runtime " + fmt(secs, 1) + " s");
    std::string detail = std::to_string(kFuzzCases) + " sequences, " + std::to_string(pe_regions) +
                         " PE regions (" + std::to_string(fallbacks) + " fallback, " + std::to_string(clamped) +
                         " clamped), " + fmt(secs, 1) + " s";
    if (failures) detail += "; " + std::to_string(failures) + " mismatches, first: " + first_failure;
    return {failures == 0, detail};
}

Outcome bin_width_oracle() {
    // Hand-transcribed width table, KB = 1024 bytes, bins (lo, hi].
    struct Row {
        std::uint64_t size;
        std::uint32_t width;
    };
    const std::vector<Row> rows{
        {1, 32},          {5 * 1024, 32},       {10240 - 1, 32},     {10240, 32},         {10240 + 1, 64},
        {20 * 1024, 64},  {30720 - 1, 64},      {30720, 64},         {30720 + 1, 128},    {45 * 1024, 128},
        {61440 - 1, 128}, {61440, 128},         {61440 + 1, 256},    {80 * 1024, 256},    {102400 - 1, 256},
        {102400, 256},    {102400 + 1, 384},    {150 * 1024, 384},   {204800 - 1, 384},   {204800, 384},
        {204800 + 1, 512}, {300 * 1024, 512},   {512000 - 1, 512},   {512000, 512},       {512000 + 1, 768},
        {700 * 1024, 768}, {1024000 - 1, 768},  {1024000, 768},      {1024000 + 1, 1024}, {2048000, 1024},
        {UINT64_C(1) << 40, 1024},
    };
    std::size_t bad = 0;
    std::string first;
    std::set<std::uint32_t> bins;
    for (const auto& r : rows) {
        const auto got = bin_width(r.size);
        bins.insert(got);
        if (got != r.width) {
            if (!bad++) first = std::to_string(r.size) + " -> " + std::to_string(got);
        }
    }
    bool empty_ok = false;
    try {
        bin_width(0);
    } catch (const EmptyFileError&) {
        empty_ok = true;
    }
    std::string detail = std::to_string(rows.size()) + " sizes over " + std::to_string(bins.size()) +
                         " bins, empty file " + (empty_ok ? "rejected" : "NOT rejected");
    if (bad) detail += "; " + std::to_string(bad) + " wrong, first " + first;
    return {bad == 0 && empty_ok && bins.size() == 8, detail};
}

Outcome entropy_properties() {
    Bytes zeros(1024, 0), half(1024, 0), all(256);
    std::fill(half.begin() + 512, half.end(), 0xFF);
    std::iota(all.begin(), all.end(), 0);
    double worst_anchor = std::abs(shannon_entropy(zeros) - 0.0);
    worst_anchor = std::max(worst_anchor, std::abs(shannon_entropy(half) - 1.0));
    worst_anchor = std::max(worst_anchor, std::abs(shannon_entropy(all) - 8.0));

    Rng rng(kSeed + 3);
    double worst_perm = 0, worst_dup = 0;
    for (int t = 0; t < 500; ++t) {
        Bytes b(1 + rng.uniform_index(5000));
        const std::uint64_t alphabet = 1 + rng.uniform_index(256);
        for (auto& x : b) x = static_cast<std::uint8_t>(rng.uniform_index(alphabet));
        const double h = shannon_entropy(b);
        Bytes p = b;
        rng.shuffle(std::span<std::uint8_t>(p));
        worst_perm = std::max(worst_perm, std::abs(shannon_entropy(p) - h));
        Bytes d;
        const auto k = 2 + rng.uniform_index(5);
        for (std::uint64_t c = 0; c < k; ++c) d.insert(d.end(), b.begin(), b.end());
        worst_dup = std::max(worst_dup, std::abs(shannon_entropy(d) - h));
    }
    const bool pass =
        worst_anchor <= kEntropyTolerance && worst_perm <= kEntropyTolerance && worst_dup <= kEntropyTolerance;
    return {pass, "anchors 0/1/8 max error " + fmt_sci(worst_anchor) + ", permutation " + fmt_sci(worst_perm) +
                      ", duplication " + fmt_sci(worst_dup) + " over 500 sequences (tol " +
                      fmt_sci(kEntropyTolerance) + ")"};
}

Outcome metric_oracles() {
    Rng rng(kSeed + 4);
    int auc_mismatch = 0;
    for (int t = 0; t < kAucInstances; ++t) {
        const std::size_t n = 2 + rng.uniform_index(kAucMaxN - 1);
        const bool coarse = rng.uniform() < 0.5;
        std::vector<double> s(n);
        std::vector<int> y(n);
        for (std::size_t i = 0; i < n; ++i) {
            s[i] = coarse ? static_cast<double>(rng.uniform_index(5)) / 4.0 : rng.uniform();
            y[i] = static_cast<int>(rng.uniform_index(2));
        }
        y[rng.uniform_index(n)] = 1;
        std::size_t neg = rng.uniform_index(n);
        while (y[neg] == 1 && std::count(y.begin(), y.end(), 1) == 1) neg = rng.uniform_index(n);
        y[neg] = 0;
        if (std::count(y.begin(), y.end(), 1) == 0) y[(neg + 1) % n] = 1;
        // brute force over every positive/negative pair
        double wins = 0, pairs = 0;
        for (std::size_t i = 0; i < n; ++i) {
            if (!y[i]) continue;
            for (std::size_t j = 0; j < n; ++j) {
                if (y[j]) continue;
                pairs += 1;
                wins += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
            }
        }
        if (roc_auc(s, y) != wins / pairs) ++auc_mismatch;
    }
    int micro_mismatch = 0;
    for (int t = 0; t < kConfusionInstances; ++t) {
        const std::size_t C = 2 + rng.uniform_index(19);
        ConfusionMatrix cm(C);
        for (std::size_t a = 0; a < C; ++a) {
            for (std::size_t b = 0; b < C; ++b) cm.at(a, b) = rng.uniform_index(a == b ? 60 : 12);
        }
        cm.at(0, 0) += 1;
        const auto r = classification_metrics(cm);
        const double acc = static_cast<double>(cm.trace()) / static_cast<double>(cm.total());
        if (r.micro.precision != acc || r.micro.recall != acc || r.accuracy != acc) ++micro_mismatch;
    }
    return {auc_mismatch == 0 && micro_mismatch == 0,
            "AUC vs pair count: " + std::to_string(kAucInstances - auc_mismatch) + "/" +
                std::to_string(kAucInstances) + " exact (n <= " + std::to_string(kAucMaxN) +
                "); micro precision = accuracy: " + std::to_string(kConfusionInstances - micro_mismatch) + "/" +
                std::to_string(kConfusionInstances)};
}

Outcome mlp_gradient_check() {
    Rng rng(kSeed + 5);
    double worst = 0;
    for (int t = 0; t < kGradientBatches; ++t) {
        MlpParams p;
        p.hidden.clear();
        const auto layers = 1 + rng.uniform_index(4);
        for (std::uint64_t l = 0; l < layers; ++l) p.hidden.push_back(static_cast<int>(2 + rng.uniform_index(9)));
        p.l2_alpha = rng.uniform(0.0, 0.05);
        p.seed = rng.next_u64();
        const auto inputs = static_cast<std::size_t>(2 + rng.uniform_index(10));
        const int classes = static_cast<int>(2 + rng.uniform_index(5));
        const auto batch = static_cast<Eigen::Index>(1 + rng.uniform_index(8));
        MlpModel model(inputs, classes, p);
        // zero initial biases put dead-unit outputs exactly on the ReLU kink
        for (auto& b : model.biases()) {
            for (Eigen::Index i = 0; i < b.size(); ++i) b[i] = 0.1 * rng.normal();
        }
        Eigen::MatrixXd x(static_cast<Eigen::Index>(inputs), batch);
        for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
        std::vector<int> y(static_cast<std::size_t>(batch));
        for (auto& v : y) v = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(classes)));

        MlpGradients g;
        model.loss(x, y, &g);
        const double h = 1e-6;
        double diff2 = 0, a2 = 0, n2 = 0;
        auto probe = [&](double& param, double analytic) {
            const double keep = param;
            param = keep + h;
            const double up = model.loss(x, y);
            param = keep - h;
            const double down = model.loss(x, y);
            param = keep;
            const double numeric = (up - down) / (2 * h);
            diff2 += (analytic - numeric) * (analytic - numeric);
            a2 += analytic * analytic;
            n2 += numeric * numeric;
        };
        for (std::size_t l = 0; l < model.weights().size(); ++l) {
            for (Eigen::Index i = 0; i < model.weights()[l].size(); ++i) {
                probe(model.weights()[l].data()[i], g.weights[l].data()[i]);
            }
            for (Eigen::Index i = 0; i < model.biases()[l].size(); ++i) {
                probe(model.biases()[l].data()[i], g.biases[l].data()[i]);
            }
        }
        worst = std::max(worst, std::sqrt(diff2) / std::max(1e-12, std::sqrt(a2) + std::sqrt(n2)));
    }
    return {worst < kGradientRelError, std::to_string(kGradientBatches) + " random batches, max relative error " +
                                           fmt_sci(worst) + " (tol " + fmt_sci(kGradientRelError) + ")"};
}

// Shared by the multiclass and ensemble criteria.
struct MulticlassRun {
    bool ready = false;
    std::string error;
    Dataset colormap;
    std::unique_ptr<Classifier> knn, mlp;
    double acc_knn_cm = 0, acc_mlp_cm = 0, acc_knn_gs = 0, acc_mlp_gs = 0;
    double seconds = 0;
};

double accuracy(const Classifier& model, const Dataset& ds) {
    const auto preds = model.predict_all(ds.test);
    std::size_t ok = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) ok += preds[i].label == ds.test_labels[i];
    return static_cast<double>(ok) / static_cast<double>(preds.size());
}

TrainOptions default_options() {
    TrainOptions o;
    o.mlp.seed = kSeed;
    o.forest.seed = kSeed;
    o.stack.seed = kSeed;
    o.stack.meta.seed = derive_seed(kSeed, 0x5ac4);
    return o;
}

MulticlassRun& multiclass_run() {
    static MulticlassRun run;
    static bool done = false;
    if (done) return run;
    done = true;
    const auto t0 = Clock::now();
    try {
        static TempDir dir("multiclass");
        make_fixture(dir.path(), FixtureConfig{kFamilies, kPerFamily, kSeed, 0, 0});
        const auto corpus = scan_corpus(dir.path());
        const TrainOptions o = default_options();
        {
            const Dataset gs = build_dataset_in_memory(
                corpus, ExtractConfig{Method::grayscale, Geometry::truncated, kImageSize}, kTestFraction, kSeed);
            const auto knn = fit_member({ModelKind::knn, OutputKind::probabilities, o.knn, o.mlp, o.forest}, gs.train,
                                        gs.train_labels, kFamilies);
            run.acc_knn_gs = accuracy(*knn, gs);
            const auto mlp = fit_member({ModelKind::mlp, OutputKind::probabilities, o.knn, o.mlp, o.forest}, gs.train,
                                        gs.train_labels, kFamilies);
            run.acc_mlp_gs = accuracy(*mlp, gs);
        }
        run.colormap = build_dataset_in_memory(
            corpus, ExtractConfig{Method::colormap, Geometry::truncated, kImageSize}, kTestFraction, kSeed);
        const Dataset& cm = run.colormap;
        run.knn = fit_member({ModelKind::knn, OutputKind::probabilities, o.knn, o.mlp, o.forest}, cm.train,
                             cm.train_labels, kFamilies);
        run.acc_knn_cm = accuracy(*run.knn, cm);
        run.mlp = fit_member({ModelKind::mlp, OutputKind::probabilities, o.knn, o.mlp, o.forest}, cm.train,
                             cm.train_labels, kFamilies);
        run.acc_mlp_cm = accuracy(*run.mlp, cm);
        run.ready = true;
    } catch (const std::exception& e) {
        run.error = e.what();
    }
    run.seconds = seconds_since(t0);
    return run;
}

Outcome synthetic_multiclass() {
    const auto& r = multiclass_run();
    if (!r.ready) return {false, "error: " + r.error};
    const bool pass = r.acc_knn_cm >= kMinMulticlassAccuracy && r.acc_mlp_cm >= kMinMulticlassAccuracy &&
                      r.acc_knn_cm >= r.acc_knn_gs && r.acc_mlp_cm >= r.acc_mlp_gs &&
                      r.seconds < kMulticlassBudgetSeconds;
    return {pass, std::to_string(kFamilies) + "x" + std::to_string(kPerFamily) + " corpus, colormap kNN " +
                      fmt(r.acc_knn_cm) + " MLP " + fmt(r.acc_mlp_cm) + " | grayscale kNN " + fmt(r.acc_knn_gs) +
                      " MLP " + fmt(r.acc_mlp_gs) + " (min " + fmt(kMinMulticlassAccuracy, 2) + "), " +
                      fmt(r.seconds, 0) + " s"};
}

Outcome ensembles() {
    auto& r = multiclass_run();
    if (!r.ready) return {false, "error: " + r.error};
    try {
        const auto t0 = Clock::now();
        const Dataset& ds = r.colormap;
        TrainOptions o = default_options();
        const auto roster = default_roster(o);
        std::vector<std::unique_ptr<Classifier>> full;
        full.push_back(std::move(r.knn));
        full.push_back(std::move(r.mlp));
        full.push_back(fit_member(roster[2], ds.train, ds.train_labels, kFamilies));
        const double acc_forest = accuracy(*full[2], ds);

        std::vector<std::vector<Prediction>> member_preds;
        for (const auto& m : full) member_preds.push_back(m->predict_all(ds.test));
        std::size_t vote_ok = 0;
        for (std::size_t i = 0; i < ds.test.rows; ++i) {
            std::vector<Prediction> ps;
            for (const auto& mp : member_preds) ps.push_back(mp[i]);
            vote_ok += vote_ensemble(ps) == ds.test_labels[i];
        }
        const double acc_vote = static_cast<double>(vote_ok) / static_cast<double>(ds.test.rows);
        const double best_single = std::max({r.acc_knn_cm, r.acc_mlp_cm, acc_forest});

        std::vector<OutputKind> kinds;
        std::size_t label_only = 0;
        for (const auto& m : roster) {
            kinds.push_back(m.output);
            label_only += m.output == OutputKind::label;
        }
        const StackedEnsemble stacked = stacked_fit(ds.train, ds.train_labels, kFamilies, roster, o.stack, std::move(full));
        const double acc_stacked = accuracy(stacked, ds);
        const std::size_t width = stacked.meta().input_dims();
        const std::size_t expected_width = 2 * kFamilies + label_only;

        const bool pass = acc_vote >= best_single - kVoteSlack && acc_stacked >= acc_vote - kStackSlack &&
                          width == expected_width && stacked_width(kinds, kFamilies) == expected_width;
        return {pass, "kNN " + fmt(r.acc_knn_cm) + " MLP " + fmt(r.acc_mlp_cm) + " forest " + fmt(acc_forest) +
                          " | vote " + fmt(acc_vote) + " (>= " + fmt(best_single - kVoteSlack) + ") stacked " +
                          fmt(acc_stacked) + " (>= " + fmt(acc_vote - kStackSlack) + ") | stacked width " +
                          std::to_string(width) + " = 2*" + std::to_string(kFamilies) + "+" +
                          std::to_string(label_only) + ", " + fmt(seconds_since(t0), 0) + " s"};
    } catch (const std::exception& e) {
        return {false, std::string("error: ") + e.what()};
    }
}

Outcome determinism() {
    TempDir dir("determinism");
    const auto d = [&](const std::string& p) { return dir / p; };
    std::ostringstream sink, err;
    auto run = [&](std::vector<std::string> args) { return cli::run(args, sink, err); };
    const std::vector<std::string> small_models{"--k", "5", "--hidden", "16,8", "--epochs", "3", "--trees", "8",
                                                "--stack-folds", "3"};
    auto with = [](std::vector<std::string> a, const std::vector<std::string>& b) {
        a.insert(a.end(), b.begin(), b.end());
        return a;
    };
    const std::vector<std::vector<std::string>> stages{
        {"stats", "--make-fixture", "--out", d("corpus"), "--families", "4", "--per-family", "12", "--non-pe", "1"},
        {"stats", "--corpus", d("corpus"), "--out", d("stats")},
        {"extract", "--corpus", d("corpus"), "--out", d("ex_pe"), "--method", "pe", "--geometry", "resized", "--size", "24", "--workers", "3"},
        {"extract", "--corpus", d("corpus"), "--out", d("ex_cm"), "--method", "colormap", "--size", "24"},
        {"dataset", "--manifest", d("ex_cm/manifest.jsonl"), "--out", d("ds"), "--split", "0.25"},
        {"dataset", "--corpus", d("corpus"), "--method", "threegram", "--size", "16", "--out", d("ds3")},
        with({"train", "--dataset", d("ds"), "--out", d("tr_knn"), "--model", "knn"}, small_models),
        with({"train", "--dataset", d("ds"), "--out", d("tr_mlp"), "--model", "mlp"}, small_models),
        with({"train", "--dataset", d("ds"), "--out", d("tr_forest"), "--model", "forest", "--workers", "2"}, small_models),
        with({"train", "--dataset", d("ds"), "--out", d("tr_vote"), "--model", "vote"}, small_models),
        with({"train", "--dataset", d("ds"), "--out", d("tr_stacked"), "--model", "stacked"}, small_models),
        {"eval", "--dataset", d("ds"), "--model", d("tr_stacked/model.mimm"), "--out", d("ev")},
        {"stats", "--make-fakes", "--real", d("ex_cm/images"), "--out", d("fakes"), "--count", "24"},
        with({"eval", "--task", "realfake", "--real", d("ex_cm/images"), "--fake", d("fakes"), "--model", "forest",
              "--folds", "3", "--out", d("rf")}, small_models),
        with({"compare", "--corpus", d("corpus"), "--out", d("cmp"), "--size", "16", "--models", "knn,forest"},
             small_models),
    };
    std::size_t replayed = 0, identical = 0, artifacts = 0;
    std::string first_bad;
    for (const auto& stage : stages) {
        if (run(stage) != cli::kExitOk) {
            return {false, "stage failed: " + stage[0] + " " + stage[1] + ": " + err.str()};
        }
        const auto out_it = std::find(stage.begin(), stage.end(), "--out");
        const fs::path out = *std::next(out_it);
        const RunLog log = read_run_log(out / "run_log.json");
        artifacts += log.artifacts.size();
        ++replayed;
        if (run({"replay", "--log", (out / "run_log.json").string()}) == cli::kExitOk) {
            ++identical;
        } else if (first_bad.empty()) {
            first_bad = stage[0] + " -> " + out.filename().string();
        }
    }
    // extraction output must not depend on the worker count
    run({"extract", "--corpus", d("corpus"), "--out", d("ex_pe_1"), "--method", "pe", "--geometry", "resized", "--size",
         "24", "--workers", "1"});
    const bool workers_ok = hash_tree(d("ex_pe"), {"run_log.json"}) == hash_tree(d("ex_pe_1"), {"run_log.json"});
    std::string detail = std::to_string(identical) + "/" + std::to_string(replayed) + " stages replayed byte-identical (" +
                         std::to_string(artifacts) + " artifacts, SHA-256), extract workers 3 vs 1 " +
                         (workers_ok ? "identical" : "DIFFERENT");
    if (!first_bad.empty()) detail += "; first mismatch " + first_bad;
    return {identical == replayed && workers_ok, detail};
}

}  // namespace

int main(int argc, char** argv) {
    struct Criterion {
        int id;
        const char* name;
        std::function<Outcome()> fn;
    };
    const std::vector<Criterion> criteria{
        {1, "encoder exactness", encoder_exactness},
        {2, "width-bin oracle", bin_width_oracle},
        {3, "entropy properties", entropy_properties},
        {4, "metric oracles", metric_oracles},
        {5, "MLP gradient check", mlp_gradient_check},
        {6, "synthetic multiclass", synthetic_multiclass},
        {7, "ensembles", ensembles},
        {8, "determinism", determinism},
    };
    std::set<int> wanted;
    for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));

    int failed = 0;
    for (const auto& c : criteria) {
        if (!wanted.empty() && !wanted.contains(c.id)) continue;
        Outcome o;
        try {
            o = c.fn();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failed += !o.pass;
        std::cout << (o.pass ? "PASS" : "FAIL") << " [" << c.id << "] " << c.name << ": " << o.detail << std::endl;
    }
    return failed == 0 ? 0 : 1;
}
