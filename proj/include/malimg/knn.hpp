#pragma once

#include "malimg/classifier.hpp"

namespace malimg {

enum class Weighting { uniform, distance };

struct KnnParams {
    int k = 20;
    Weighting weighting = Weighting::distance;
};

/// Euclidean k-nearest-neighbour classifier.
///
/// Neighbours are ranked by (distance, training index). With distance
/// weighting each neighbour adds 1/d to its class; if any of the k neighbours
/// is at distance 0, only the zero-distance neighbours vote.
class KnnModel final : public Classifier {
public:
    KnnModel(FeatureMatrix train, std::vector<int> labels, int num_classes, KnnParams params);

    ModelKind kind() const override { return ModelKind::knn; }
    int num_classes() const override { return num_classes_; }
    std::size_t input_dims() const override { return train_.cols; }
    Prediction predict(std::span<const float> x) const override;
    void save_payload(BinaryWriter& w) const override;

    const KnnParams& params() const noexcept { return params_; }
    const FeatureMatrix& train() const noexcept { return train_; }
    const std::vector<int>& labels() const noexcept { return labels_; }

private:
    FeatureMatrix train_;
    std::vector<int> labels_;
    int num_classes_;
    KnnParams params_;
};

/// Throws UsageError if k is not in [1, rows].
KnnModel knn_fit(FeatureMatrix train, std::vector<int> labels, int num_classes, KnnParams params = {});

}  // namespace malimg
