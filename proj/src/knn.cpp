#include "malimg/knn.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numeric>

#include "malimg/binary_io.hpp"
#include "malimg/errors.hpp"

namespace malimg {

KnnModel::KnnModel(FeatureMatrix train, std::vector<int> labels, int num_classes, KnnParams params)
    : train_(std::move(train)), labels_(std::move(labels)), num_classes_(num_classes), params_(params) {
    check_training_data(train_, labels_, num_classes_);
    if (params_.k < 1 || static_cast<std::size_t>(params_.k) > train_.rows) {
        throw UsageError("knn: k must be between 1 and the number of training samples");
    }
}

Prediction KnnModel::predict(std::span<const float> x) const {
    check_dims(x.size());
    using Vec = Eigen::Map<const Eigen::VectorXf>;
    const Vec query(x.data(), static_cast<Eigen::Index>(x.size()));
    std::vector<float> dist2(train_.rows);
    for (std::size_t i = 0; i < train_.rows; ++i) {
        const Vec row(train_.row(i).data(), static_cast<Eigen::Index>(train_.cols));
        dist2[i] = (row - query).squaredNorm();
    }
    std::vector<std::size_t> order(train_.rows);
    std::iota(order.begin(), order.end(), std::size_t{0});
    const auto k = static_cast<std::size_t>(params_.k);
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                      [&](std::size_t a, std::size_t b) {
                          return dist2[a] != dist2[b] ? dist2[a] < dist2[b] : a < b;
                      });

    std::vector<double> weights(static_cast<std::size_t>(num_classes_), 0.0);
    const bool exact = params_.weighting == Weighting::distance && dist2[order[0]] == 0.0f;
    for (std::size_t n = 0; n < k; ++n) {
        const std::size_t i = order[n];
        double w = 1.0;
        if (exact) {
            w = dist2[i] == 0.0f ? 1.0 : 0.0;
        } else if (params_.weighting == Weighting::distance) {
            w = 1.0 / std::sqrt(static_cast<double>(dist2[i]));
        }
        weights[static_cast<std::size_t>(labels_[i])] += w;
    }
    return make_prediction(std::move(weights));
}

void KnnModel::save_payload(BinaryWriter& w) const {
    w.i32(params_.k);
    w.u8(params_.weighting == Weighting::distance ? 1 : 0);
    w.i32(num_classes_);
    w.u64(train_.rows);
    w.u64(train_.cols);
    for (int label : labels_) w.i32(label);
    w.f32s(train_.values);
}

KnnModel knn_fit(FeatureMatrix train, std::vector<int> labels, int num_classes, KnnParams params) {
    return KnnModel(std::move(train), std::move(labels), num_classes, params);
}

}  // namespace malimg
