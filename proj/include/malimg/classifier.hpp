#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string_view>
#include <vector>

#include "malimg/features.hpp"

namespace malimg {

class BinaryWriter;

/// Class label plus a probability vector over all classes.
/// label == argmax(probabilities), ties to the lowest class index.
struct Prediction {
    int label = 0;
    std::vector<double> probabilities;
};

/// Index of the largest value; ties go to the lowest index.
int argmax_lowest(std::span<const double> values);

/// Normalises weights to sum 1 (uniform if they sum to 0) and sets the label.
Prediction make_prediction(std::vector<double> weights);

enum class ModelKind : std::uint32_t { knn = 1, mlp = 2, forest = 3, vote = 4, stacked = 5 };

std::string_view to_string(ModelKind k);
ModelKind parse_model_kind(std::string_view s);  // throws UsageError

class Classifier {
public:
    virtual ~Classifier() = default;

    virtual ModelKind kind() const = 0;
    virtual int num_classes() const = 0;
    virtual std::size_t input_dims() const = 0;
    virtual Prediction predict(std::span<const float> x) const = 0;

    /// Hyperparameters and parameters, without the container header.
    virtual void save_payload(BinaryWriter& w) const = 0;

    /// One prediction per row; rows are independent so workers only affect speed.
    virtual std::vector<Prediction> predict_all(const FeatureMatrix& x, int workers = 1) const;

protected:
    void check_dims(std::size_t got) const;
};

/// Labels in [0, num_classes) and one per row; throws UsageError otherwise.
void check_training_data(const FeatureMatrix& x, std::span<const int> y, int num_classes);

}  // namespace malimg
