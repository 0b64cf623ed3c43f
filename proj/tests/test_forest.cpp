#include <doctest.h>

#include <cmath>

#include "malimg/errors.hpp"
#include "malimg/forest.hpp"
#include "test_util.hpp"

using namespace malimg;

namespace {

double entropy_of(const std::vector<int>& labels, int classes) {
    std::vector<double> c(classes, 0);
    for (int l : labels) c[l] += 1;
    double e = 0;
    for (double v : c) {
        if (v > 0) {
            const double p = v / labels.size();
            e -= p * std::log2(p);
        }
    }
    return e;
}

}  // namespace

TEST_CASE("depth-1 tree picks the exhaustive best threshold") {
    Rng rng(8);
    for (int trial = 0; trial < 10; ++trial) {
        const std::size_t n = 30;
        FeatureMatrix x(n, 1);
        std::vector<int> y(n);
        for (std::size_t i = 0; i < n; ++i) {
            x.values[i] = static_cast<float>(rng.uniform_index(40));
            y[i] = x.values[i] + rng.normal() * 6 > 20 ? 1 : 0;
        }
        // brute force over midpoints of distinct sorted values
        std::vector<float> vals(x.values);
        std::sort(vals.begin(), vals.end());
        vals.erase(std::unique(vals.begin(), vals.end()), vals.end());
        const double parent = entropy_of(y, 2);
        double best_gain = 0;
        float best_thr = 0;
        for (std::size_t k = 0; k + 1 < vals.size(); ++k) {
            const float thr = vals[k] + (vals[k + 1] - vals[k]) / 2;
            std::vector<int> l, r;
            for (std::size_t i = 0; i < n; ++i) (x.values[i] <= thr ? l : r).push_back(y[i]);
            const double gain = parent - (l.size() * entropy_of(l, 2) + r.size() * entropy_of(r, 2)) / n;
            if (gain > best_gain + 1e-12) {
                best_gain = gain;
                best_thr = thr;
            }
        }
        ForestParams p{1, 1, 3, 1, false, 1};
        const ForestModel f = forest_fit(x, y, 2, p);
        const auto& root = f.trees()[0].nodes[0];
        if (best_gain <= 0) {
            CHECK(root.feature == -1);
            continue;
        }
        REQUIRE(root.feature == 0);
        // any threshold between the same neighbouring values splits identically
        for (float v : vals) CHECK((v <= root.threshold) == (v <= best_thr));
    }
}

TEST_CASE("pure data predicts the pure class") {
    Rng rng(1);
    FeatureMatrix x(25, 4);
    for (auto& v : x.values) v = static_cast<float>(rng.normal());
    const std::vector<int> y(25, 2);
    for (int trees : {1, 50}) {
        const ForestModel f = forest_fit(x, y, 3, ForestParams{trees, 6, 9, 0, true, 1});
        const auto p = f.predict(x.row(3));
        CHECK(p.label == 2);
        CHECK(p.probabilities[2] == 1.0);
    }
}

TEST_CASE("forest determinism, depth bound and worker independence") {
    Rng rng(2);
    FeatureMatrix x(120, 9);
    std::vector<int> y(120);
    for (std::size_t i = 0; i < 120; ++i) {
        y[i] = static_cast<int>(i % 3);
        for (std::size_t c = 0; c < 9; ++c) x.values[i * 9 + c] = static_cast<float>(rng.normal() + y[i] * (c % 3));
    }
    const ForestParams p{20, 4, 77, 0, true, 1};
    ForestParams p4 = p;
    p4.workers = 4;
    const ForestModel a = forest_fit(x, y, 3, p);
    const ForestModel b = forest_fit(x, y, 3, p);
    const ForestModel c = forest_fit(x, y, 3, p4);
    REQUIRE(a.trees().size() == 20);
    for (std::size_t t = 0; t < 20; ++t) {
        CHECK(a.trees()[t].depth() <= 4);
        REQUIRE(a.trees()[t].nodes.size() == c.trees()[t].nodes.size());
        for (std::size_t k = 0; k < a.trees()[t].nodes.size(); ++k) {
            CHECK(a.trees()[t].nodes[k].feature == c.trees()[t].nodes[k].feature);
            CHECK(a.trees()[t].nodes[k].threshold == b.trees()[t].nodes[k].threshold);
        }
    }
    int correct = 0;
    for (std::size_t i = 0; i < 120; ++i) {
        const auto pa = a.predict(x.row(i));
        CHECK(pa.probabilities == c.predict(x.row(i)).probabilities);
        double s = 0;
        for (double v : pa.probabilities) s += v * 20;
        CHECK(std::abs(s - 20.0) < 1e-9);
        correct += pa.label == y[i];
    }
    CHECK(correct > 90);
}

TEST_CASE("forest usage errors") {
    FeatureMatrix x(4, 1);
    const std::vector<int> y{0, 1, 0, 1};
    CHECK_THROWS_AS(forest_fit(x, y, 2, ForestParams{0, 3, 1, 0, true, 1}), UsageError);
    CHECK_THROWS_AS(forest_fit(x, y, 2, ForestParams{3, 0, 1, 0, true, 1}), UsageError);
}

TEST_CASE("class_entropy") {
    const std::vector<std::size_t> even{5, 5};
    CHECK(class_entropy(even, 10) == 1.0);
    const std::vector<std::size_t> pure{0, 7, 0};
    CHECK(class_entropy(pure, 7) == 0.0);
}
