#include "malimg/classifier.hpp"

#include <numeric>
#include <string>

#include "malimg/errors.hpp"
#include "malimg/parallel.hpp"

namespace malimg {

int argmax_lowest(std::span<const double> values) {
    if (values.empty()) throw UsageError("argmax of an empty vector");
    std::size_t best = 0;
    for (std::size_t i = 1; i < values.size(); ++i) {
        if (values[i] > values[best]) best = i;
    }
    return static_cast<int>(best);
}

Prediction make_prediction(std::vector<double> weights) {
    const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
    if (total > 0.0) {
        for (auto& w : weights) w /= total;
    } else {
        for (auto& w : weights) w = 1.0 / static_cast<double>(weights.size());
    }
    Prediction p;
    p.label = argmax_lowest(weights);
    p.probabilities = std::move(weights);
    return p;
}

std::string_view to_string(ModelKind k) {
    switch (k) {
        case ModelKind::knn: return "knn";
        case ModelKind::mlp: return "mlp";
        case ModelKind::forest: return "forest";
        case ModelKind::vote: return "vote";
        case ModelKind::stacked: return "stacked";
    }
    return "?";
}

ModelKind parse_model_kind(std::string_view s) {
    if (s == "knn") return ModelKind::knn;
    if (s == "mlp") return ModelKind::mlp;
    if (s == "forest" || s == "rf") return ModelKind::forest;
    if (s == "vote") return ModelKind::vote;
    if (s == "stacked") return ModelKind::stacked;
    throw UsageError("unknown model '" + std::string(s) + "'");
}

std::vector<Prediction> Classifier::predict_all(const FeatureMatrix& x, int workers) const {
    check_dims(x.cols);
    std::vector<Prediction> out(x.rows);
    parallel_for(x.rows, workers, [&](std::size_t i) { out[i] = predict(x.row(i)); });
    return out;
}

void Classifier::check_dims(std::size_t got) const {
    if (got != input_dims()) {
        throw UsageError("dimension mismatch: model expects " + std::to_string(input_dims()) +
                         " features, got " + std::to_string(got));
    }
}

void check_training_data(const FeatureMatrix& x, std::span<const int> y, int num_classes) {
    if (x.rows == 0 || x.cols == 0) throw UsageError("empty training matrix");
    if (y.size() != x.rows) throw UsageError("label count does not match training rows");
    if (num_classes < 1) throw UsageError("need at least one class");
    for (int label : y) {
        if (label < 0 || label >= num_classes) throw UsageError("training label out of range");
    }
}

}  // namespace malimg
