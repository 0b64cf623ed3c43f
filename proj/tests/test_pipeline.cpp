#include <doctest.h>

#include <fstream>
#include <set>
#include <sstream>

#include "cli.hpp"
#include "malimg/errors.hpp"
#include "malimg/fixture.hpp"
#include "malimg/pipeline.hpp"
#include "malimg/png_io.hpp"
#include "malimg/runlog.hpp"
#include "test_util.hpp"

using namespace malimg;
namespace fs = std::filesystem;

namespace {

struct CliResult {
    int code;
    std::string out, err;
};

CliResult run_cli(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST_CASE("extract ten files to 128x128 colour PNGs, twice identically") {
    testutil::TempDir dir("cli_extract");
    make_fixture(dir / "corpus", FixtureConfig{2, 5, 42, 0, 0});
    const std::string corpus = (dir / "corpus").string();
    for (const char* out : {"a", "b"}) {
        const auto r = run_cli({"extract", "--corpus", corpus, "--out", (dir / out).string(), "--method",
                                "colormap", "--geometry", "truncated", "--size", "128"});
        REQUIRE(r.code == 0);
    }
    const auto pngs = list_pngs(dir / "a");
    REQUIRE(pngs.size() == 10);
    for (const auto& p : pngs) {
        const MalImage img = read_png(p);
        CHECK(img.width == 128);
        CHECK(img.height == 128);
        CHECK(img.channels == 3);
        CHECK(slurp(p) == slurp(dir / "b" / fs::relative(p, dir / "a")));
    }
    CHECK(slurp(dir / "a/manifest.jsonl") == slurp(dir / "b/manifest.jsonl"));
    const RunLog log = read_run_log(dir / "a/run_log.json");
    CHECK(log.command == "extract");
    CHECK(log.config["size"] == 128);
    CHECK(log.config["seed"] == 42);
    CHECK(log.artifacts.size() == 12);
}

TEST_CASE("extract --method pe flags non-PE files and reports failures") {
    testutil::TempDir dir("cli_pe");
    make_fixture(dir / "corpus", FixtureConfig{2, 3, 1, 0, 1});
    testutil::write_file(dir / "corpus/famx/empty.exe", Bytes{});
    const auto r = run_cli({"extract", "--corpus", (dir / "corpus").string(), "--out", (dir / "out").string(),
                            "--method", "pe", "--size", "32"});
    CHECK(r.code == 1);
    CHECK(r.err.find("empty.exe") != std::string::npos);
    const auto records = read_manifest_jsonl(dir / "out/manifest.jsonl");
    CHECK(records.size() == 8);
    int fallback = 0;
    for (const auto& rec : records) {
        if (rec.has_flag("pe_fallback")) {
            ++fallback;
            CHECK(rec.source_path.find("_raw_") != std::string::npos);
        }
        CHECK(fs::exists(dir / "out" / rec.image_path));
    }
    CHECK(fallback == 2);
    CHECK(fs::exists(dir / "out/errors.jsonl"));
}

TEST_CASE("dataset, train, eval and replay") {
    testutil::TempDir dir("cli_train");
    const auto d = [&](const char* p) { return (dir / p).string(); };
    REQUIRE(run_cli({"stats", "--make-fixture", "--out", d("corpus"), "--families", "3", "--per-family", "10"}).code == 0);
    REQUIRE(run_cli({"extract", "--corpus", d("corpus"), "--out", d("ex"), "--method", "grayscale", "--size", "16"}).code == 0);
    REQUIRE(run_cli({"dataset", "--manifest", d("ex/manifest.jsonl"), "--out", d("ds"), "--split", "80/20"}).code == 0);
    const Dataset ds = load_dataset(dir / "ds");
    CHECK(ds.classes.size() == 3);
    CHECK(ds.test.rows == 6);
    CHECK(ds.train.rows == 24);

    for (const char* model : {"knn", "forest", "vote"}) {
        const std::string tr = d("tr_") + model, ev = d("ev_") + model;
        REQUIRE(run_cli({"train", "--dataset", d("ds"), "--out", tr, "--model", model, "--k", "3", "--trees", "5",
                         "--epochs", "2", "--hidden", "8"}).code == 0);
        const auto r = run_cli({"eval", "--dataset", d("ds"), "--model", tr + "/model.mimm", "--out", ev});
        REQUIRE(r.code == 0);
        const auto report = nlohmann::json::parse(slurp(ev + "/report.json"));
        CHECK(report["accuracy"].get<double>() >= 0.0);
        CHECK(report["accuracy"].get<double>() <= 1.0);
        CHECK(report["confusion"].size() == 3);
        CHECK(report["confusion"][0].size() == 3);
        CHECK(r.out.find("F1-Score") != std::string::npos);
        const auto preds = read_predictions(ev + "/predictions.jsonl", ds.classes);
        CHECK(preds.size() == 6);
    }

    const auto replay = run_cli({"replay", "--log", d("tr_vote/run_log.json")});
    CHECK(replay.code == 0);
    CHECK(replay.out.find("identical") != std::string::npos);
    CHECK(run_cli({"replay", "--log", d("ds/run_log.json")}).code == 0);

    // predictions file as the exchange format from an external model
    {
        std::ofstream p(dir / "ext.jsonl");
        for (const auto& rec : ds.test_records) p << "{\"sample_id\":\"" << rec.sample_id << "\",\"label\":\"" << rec.family << "\"}\n";
    }
    const auto ext = run_cli({"eval", "--dataset", d("ds"), "--predictions", d("ext.jsonl"), "--out", d("ev_ext")});
    CHECK(ext.code == 0);
    CHECK(nlohmann::json::parse(slurp(dir / "ev_ext/report.json"))["accuracy"] == 1.0);
}

TEST_CASE("usage errors exit with 2") {
    testutil::TempDir dir("cli_usage");
    CHECK(run_cli({}).code == 2);
    CHECK(run_cli({"frobnicate"}).code == 2);
    CHECK(run_cli({"extract", "--corpus", (dir / "nope").string(), "--out", (dir / "o").string()}).code == 2);
    CHECK(run_cli({"extract", "--corpus", dir.path().string(), "--out", (dir / "o").string(), "--method", "jpeg"}).code == 2);
    CHECK(run_cli({"dataset", "--corpus", dir.path().string(), "--out", (dir / "o").string(), "--split", "1.5"}).code == 2);
    CHECK(run_cli({"--help"}).code == 0);

    // a dataset directory whose manifest carries no split assignment
    make_fixture(dir / "c", FixtureConfig{2, 3, 1, 0, 0});
    REQUIRE(run_cli({"extract", "--corpus", (dir / "c").string(), "--out", (dir / "ex").string(), "--size", "8"}).code == 0);
    REQUIRE(run_cli({"dataset", "--manifest", (dir / "ex/manifest.jsonl").string(), "--out", (dir / "ds").string()}).code == 0);
    fs::copy_file(dir / "ex/manifest.jsonl", dir / "ds/manifest.jsonl", fs::copy_options::overwrite_existing);
    CHECK(run_cli({"train", "--dataset", (dir / "ds").string(), "--out", (dir / "t").string()}).code == 2);
}

TEST_CASE("compare grid over four methods and three models") {
    testutil::TempDir dir("cli_compare");
    make_fixture(dir / "corpus", FixtureConfig{3, 8, 5, 0, 0});
    const std::vector<std::string> args{"compare", "--corpus", (dir / "corpus").string(), "--out",
                                        (dir / "cmp").string(), "--size", "16", "--models", "knn,mlp,forest",
                                        "--k", "3", "--epochs", "3", "--hidden", "8", "--trees", "5"};
    REQUIRE(run_cli(args).code == 0);
    const auto grid = nlohmann::json::parse(slurp(dir / "cmp/grid.json"));
    CHECK(grid.size() == 12);
    std::set<std::pair<std::string, std::string>> cells;
    for (const auto& c : grid) cells.insert({c["method"].get<std::string>(), c["model"].get<std::string>()});
    CHECK(cells.size() == 12);
    std::istringstream fam(slurp(dir / "cmp/per_family_f1.csv"));
    std::string line;
    int rows = -1;
    while (std::getline(fam, line)) ++rows;
    CHECK(rows == 12 * 3);
    CHECK(run_cli({"replay", "--log", (dir / "cmp/run_log.json").string()}).code == 0);
}

TEST_CASE("real-vs-fake evaluation against noise fakes") {
    testutil::TempDir dir("cli_realfake");
    make_fixture(dir / "corpus", FixtureConfig{2, 15, 9, 0, 0});
    REQUIRE(run_cli({"extract", "--corpus", (dir / "corpus").string(), "--out", (dir / "ex").string(), "--method",
                     "colormap", "--size", "16"}).code == 0);
    REQUIRE(run_cli({"stats", "--make-fakes", "--real", (dir / "ex/images").string(), "--out",
                     (dir / "fakes").string(), "--count", "30"}).code == 0);
    const auto r = run_cli({"eval", "--task", "realfake", "--real", (dir / "ex/images").string(), "--fake",
                            (dir / "fakes").string(), "--model", "forest", "--trees", "20", "--out",
                            (dir / "rf").string()});
    REQUIRE(r.code == 0);
    const auto report = nlohmann::json::parse(slurp(dir / "rf/report.json"));
    REQUIRE(report["auc"].is_number());
    CHECK(report["auc"].get<double>() > 0.9);
    CHECK(report["class_names"] == nlohmann::json({"real", "fake"}));
    const auto fakes_manifest = read_manifest_jsonl(dir / "fakes/manifest.jsonl");
    CHECK(fakes_manifest.size() == 30);
    CHECK(fakes_manifest[0].generated);
}

TEST_CASE("predictions exchange format") {
    testutil::TempDir dir("preds");
    const std::vector<std::string> classes{"a", "b", "c"};
    std::vector<PredictionRecord> recs{{"s1", Prediction{2, {0.1, 0.2, 0.7}}}, {"s2", Prediction{0, {1, 0, 0}}}};
    write_predictions(dir / "p.jsonl", recs);
    CHECK(slurp(dir / "p.jsonl").rfind("{\"sample_id\":\"s1\",\"label\":2,\"probabilities\":[0.1,0.2,0.7]}", 0) == 0);
    const auto back = read_predictions(dir / "p.jsonl", classes);
    REQUIRE(back.size() == 2);
    CHECK(back[0].prediction.probabilities == recs[0].prediction.probabilities);
    CHECK(back[1].prediction.label == 0);
    {
        std::ofstream p(dir / "bad.jsonl");
        p << "{\"sample_id\":\"s\",\"label\":\"zzz\"}\n";
    }
    CHECK_THROWS_AS(read_predictions(dir / "bad.jsonl", classes), FormatError);
}

TEST_CASE("run log round trip and hashing") {
    CHECK(sha256_hex(Bytes{}) == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    const std::string abc = "abc";
    CHECK(sha256_hex(std::span(reinterpret_cast<const unsigned char*>(abc.data()), 3)) ==
          "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    testutil::TempDir dir("runlog");
    RunLog log;
    log.command = "x";
    log.argv = {"x", "--out", "y"};
    log.config = {{"seed", 42}};
    log.artifacts = {{"a.txt", "00"}};
    write_run_log(dir / "run_log.json", log);
    const RunLog back = read_run_log(dir / "run_log.json");
    CHECK(back.argv == log.argv);
    CHECK(back.artifacts == log.artifacts);
    CHECK(back.config["seed"] == 42);
}
