#include "malimg/forest.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "malimg/binary_io.hpp"
#include "malimg/errors.hpp"
#include "malimg/parallel.hpp"
#include "malimg/rng.hpp"

namespace malimg {

namespace {

struct SplitChoice {
    int feature = -1;
    float threshold = 0.0f;
    double gain = 0.0;
};

class TreeBuilder {
public:
    TreeBuilder(const FeatureMatrix& x, std::span<const int> y, int num_classes, const ForestParams& p,
                Rng& rng)
        : x_(x), y_(y), classes_(static_cast<std::size_t>(num_classes)), params_(p), rng_(rng) {
        const auto f = static_cast<int>(x.cols);
        per_split_ = p.max_features > 0 ? std::min(p.max_features, f)
                                        : std::max(1, static_cast<int>(std::sqrt(static_cast<double>(f))));
        features_.resize(x.cols);
        std::iota(features_.begin(), features_.end(), 0);
    }

    DecisionTree build(std::vector<std::size_t> samples) {
        DecisionTree tree;
        grow(tree, samples, 0);
        return tree;
    }

private:
    int grow(DecisionTree& tree, std::vector<std::size_t>& samples, int depth) {
        const int id = static_cast<int>(tree.nodes.size());
        tree.nodes.emplace_back();
        std::vector<std::size_t> counts(classes_, 0);
        for (auto s : samples) ++counts[static_cast<std::size_t>(y_[s])];
        tree.nodes[id].label = static_cast<std::int32_t>(
            std::max_element(counts.begin(), counts.end()) - counts.begin());

        const bool pure = std::count_if(counts.begin(), counts.end(), [](auto c) { return c > 0; }) <= 1;
        if (pure || depth >= params_.max_depth || samples.size() < 2) return id;

        const SplitChoice best = find_split(samples, counts);
        if (best.feature < 0) return id;

        std::vector<std::size_t> left, right;
        for (auto s : samples) {
            (x_(s, static_cast<std::size_t>(best.feature)) <= best.threshold ? left : right).push_back(s);
        }
        samples.clear();
        samples.shrink_to_fit();
        tree.nodes[id].feature = best.feature;
        tree.nodes[id].threshold = best.threshold;
        const int l = grow(tree, left, depth + 1);
        const int r = grow(tree, right, depth + 1);
        tree.nodes[id].left = l;
        tree.nodes[id].right = r;
        return id;
    }

    SplitChoice find_split(const std::vector<std::size_t>& samples, const std::vector<std::size_t>& counts) {
        // partial Fisher-Yates: the first per_split_ entries become the candidates
        for (int i = 0; i < per_split_; ++i) {
            const auto j = static_cast<std::size_t>(i) + rng_.uniform_index(features_.size() - static_cast<std::size_t>(i));
            std::swap(features_[static_cast<std::size_t>(i)], features_[j]);
        }
        const std::size_t n = samples.size();
        const double parent = class_entropy(counts, n);
        SplitChoice best;
        std::vector<std::pair<float, int>> column(n);
        std::vector<std::size_t> left(classes_), right(classes_);
        for (int fi = 0; fi < per_split_; ++fi) {
            const int f = features_[static_cast<std::size_t>(fi)];
            for (std::size_t i = 0; i < n; ++i) {
                column[i] = {x_(samples[i], static_cast<std::size_t>(f)), y_[samples[i]]};
            }
            std::sort(column.begin(), column.end());
            if (column.front().first == column.back().first) continue;
            std::fill(left.begin(), left.end(), 0);
            right = counts;
            for (std::size_t i = 0; i + 1 < n; ++i) {
                const auto c = static_cast<std::size_t>(column[i].second);
                ++left[c];
                --right[c];
                if (column[i].first == column[i + 1].first) continue;
                const std::size_t nl = i + 1;
                const std::size_t nr = n - nl;
                const double child = (static_cast<double>(nl) * class_entropy(left, nl) +
                                      static_cast<double>(nr) * class_entropy(right, nr)) /
                                     static_cast<double>(n);
                const double gain = parent - child;
                if (gain > best.gain + 1e-12) {
                    best.gain = gain;
                    best.feature = f;
                    best.threshold = midpoint(column[i].first, column[i + 1].first);
                }
            }
        }
        return best;
    }

    static float midpoint(float lo, float hi) {
        const auto mid = static_cast<float>((static_cast<double>(lo) + static_cast<double>(hi)) / 2.0);
        return mid < hi ? mid : lo;
    }

    const FeatureMatrix& x_;
    std::span<const int> y_;
    std::size_t classes_;
    const ForestParams& params_;
    Rng& rng_;
    int per_split_ = 1;
    std::vector<int> features_;
};

}  // namespace

double class_entropy(std::span<const std::size_t> counts, std::size_t total) {
    if (total == 0) return 0.0;
    double h = 0.0;
    const auto n = static_cast<double>(total);
    for (auto c : counts) {
        if (c == 0) continue;
        const double p = static_cast<double>(c) / n;
        h -= p * std::log2(p);
    }
    return h;
}

int DecisionTree::predict(std::span<const float> x) const {
    std::size_t i = 0;
    while (nodes[i].feature >= 0) {
        const auto& node = nodes[i];
        i = static_cast<std::size_t>(x[static_cast<std::size_t>(node.feature)] <= node.threshold ? node.left : node.right);
    }
    return nodes[i].label;
}

int DecisionTree::depth() const {
    // nodes are stored in preorder; walk with an explicit stack
    int deepest = 0;
    std::vector<std::pair<std::size_t, int>> stack{{0, 0}};
    while (!stack.empty()) {
        auto [i, d] = stack.back();
        stack.pop_back();
        deepest = std::max(deepest, d);
        if (nodes[i].feature >= 0) {
            stack.emplace_back(static_cast<std::size_t>(nodes[i].left), d + 1);
            stack.emplace_back(static_cast<std::size_t>(nodes[i].right), d + 1);
        }
    }
    return deepest;
}

ForestModel::ForestModel(std::vector<DecisionTree> trees, int num_classes, std::size_t dims, ForestParams params)
    : trees_(std::move(trees)), num_classes_(num_classes), dims_(dims), params_(params) {}

Prediction ForestModel::predict(std::span<const float> x) const {
    check_dims(x.size());
    std::vector<double> votes(static_cast<std::size_t>(num_classes_), 0.0);
    for (const auto& t : trees_) votes[static_cast<std::size_t>(t.predict(x))] += 1.0;
    return make_prediction(std::move(votes));
}

void ForestModel::save_payload(BinaryWriter& w) const {
    w.i32(params_.n_trees);
    w.i32(params_.max_depth);
    w.u64(params_.seed);
    w.i32(params_.max_features);
    w.u8(params_.bootstrap ? 1 : 0);
    w.i32(num_classes_);
    w.u64(dims_);
    w.u32(static_cast<std::uint32_t>(trees_.size()));
    for (const auto& t : trees_) {
        w.u32(static_cast<std::uint32_t>(t.nodes.size()));
        for (const auto& n : t.nodes) {
            w.i32(n.feature);
            w.f32(n.threshold);
            w.i32(n.left);
            w.i32(n.right);
            w.i32(n.label);
        }
    }
}

ForestModel forest_fit(const FeatureMatrix& x, std::span<const int> y, int num_classes, const ForestParams& params) {
    check_training_data(x, y, num_classes);
    if (params.n_trees < 1) throw UsageError("forest: n_trees must be at least 1");
    if (params.max_depth < 1) throw UsageError("forest: max_depth must be at least 1");

    std::vector<DecisionTree> trees(static_cast<std::size_t>(params.n_trees));
    parallel_for(trees.size(), params.workers, [&](std::size_t t) {
        Rng rng(derive_seed(params.seed, t));
        std::vector<std::size_t> samples(x.rows);
        if (params.bootstrap) {
            for (auto& s : samples) s = rng.uniform_index(x.rows);
        } else {
            std::iota(samples.begin(), samples.end(), std::size_t{0});
        }
        TreeBuilder builder(x, y, num_classes, params, rng);
        trees[t] = builder.build(std::move(samples));
    });
    return ForestModel(std::move(trees), num_classes, x.cols, params);
}

}  // namespace malimg
