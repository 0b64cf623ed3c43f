#pragma once

#include <cstdint>
#include <vector>

#include "malimg/classifier.hpp"

namespace malimg {

struct ForestParams {
    int n_trees = 50;
    int max_depth = 6;
    std::uint64_t seed = 42;
    int max_features = 0;  // features tried per split; 0 means floor(sqrt(n_features))
    bool bootstrap = true;
    int workers = 1;
};

/// Leaf when feature < 0. Samples with x[feature] <= threshold go left.
struct TreeNode {
    std::int32_t feature = -1;
    float threshold = 0.0f;
    std::int32_t left = -1;
    std::int32_t right = -1;
    std::int32_t label = 0;  // majority class of the node's training samples
};

struct DecisionTree {
    std::vector<TreeNode> nodes;  // nodes[0] is the root

    int predict(std::span<const float> x) const;
    int depth() const;  // a lone leaf has depth 0
};

/// Entropy (bits) of a class-count histogram.
double class_entropy(std::span<const std::size_t> counts, std::size_t total);

/// Random forest of information-gain trees. predict() returns the fraction
/// of trees voting for each class.
class ForestModel final : public Classifier {
public:
    ForestModel(std::vector<DecisionTree> trees, int num_classes, std::size_t dims, ForestParams params);

    ModelKind kind() const override { return ModelKind::forest; }
    int num_classes() const override { return num_classes_; }
    std::size_t input_dims() const override { return dims_; }
    Prediction predict(std::span<const float> x) const override;
    void save_payload(BinaryWriter& w) const override;

    const std::vector<DecisionTree>& trees() const noexcept { return trees_; }
    const ForestParams& params() const noexcept { return params_; }

private:
    std::vector<DecisionTree> trees_;
    int num_classes_;
    std::size_t dims_;
    ForestParams params_;
};

/// Tree t is grown from a generator seeded by derive_seed(seed, t), so the
/// forest does not depend on params.workers. A node is split on the
/// threshold with the highest information gain among a fresh random subset
/// of features (first best wins); nodes that are pure, at max_depth, or
/// without a positive-gain split become leaves.
/// Throws UsageError if n_trees < 1 or max_depth < 1.
ForestModel forest_fit(const FeatureMatrix& x, std::span<const int> y, int num_classes,
                       const ForestParams& params = {});

}  // namespace malimg
