#pragma once

#include <memory>
#include <vector>

#include "malimg/classifier.hpp"
#include "malimg/forest.hpp"
#include "malimg/knn.hpp"
#include "malimg/mlp.hpp"

namespace malimg {

/// What a roster member contributes to a stacked feature vector.
enum class OutputKind : std::uint8_t { probabilities = 0, label = 1 };

/// One base model of an ensemble roster.
struct MemberSpec {
    ModelKind kind = ModelKind::knn;
    OutputKind output = OutputKind::label;
    KnnParams knn;
    MlpParams mlp;
    ForestParams forest;
};

std::unique_ptr<Classifier> fit_member(const MemberSpec& spec, const FeatureMatrix& x, std::span<const int> y,
                                       int num_classes);

/// Plurality label. Ties go to the tied label with the highest summed
/// probability, then to the lowest class index. Throws UsageError if empty.
int vote_ensemble(std::span<const Prediction> predictions);

/// Concatenates member outputs: a full probability vector per
/// probabilities-member, the class id as one value per label-member.
/// Throws UsageError if the counts differ.
std::vector<float> stacked_features(std::span<const Prediction> outputs, std::span<const OutputKind> kinds);

/// Length of a stacked vector for a roster with C classes.
std::size_t stacked_width(std::span<const OutputKind> kinds, int num_classes);

/// Plurality vote over fitted members. predict() scores class c as
/// votes(c) + prob_sum(c) / (members + 1), normalised, so the argmax of the
/// returned probabilities is the vote_ensemble label.
class VoteEnsemble final : public Classifier {
public:
    explicit VoteEnsemble(std::vector<std::unique_ptr<Classifier>> members);

    ModelKind kind() const override { return ModelKind::vote; }
    int num_classes() const override { return members_.front()->num_classes(); }
    std::size_t input_dims() const override { return members_.front()->input_dims(); }
    Prediction predict(std::span<const float> x) const override;
    std::vector<Prediction> predict_all(const FeatureMatrix& x, int workers = 1) const override;
    void save_payload(BinaryWriter& w) const override;

    /// Combines per-member predictions that were computed elsewhere.
    static Prediction combine(std::span<const Prediction> member_predictions);

    const std::vector<std::unique_ptr<Classifier>>& members() const noexcept { return members_; }

private:
    std::vector<std::unique_ptr<Classifier>> members_;
};

struct StackParams {
    int folds = 5;  // out-of-fold rounds used to build the meta training set
    std::uint64_t seed = 42;
    ForestParams meta{50, 6, 42, 0, true, 1};
    int workers = 1;
};

/// Members fitted on the full training set feed a random forest trained on
/// their stacked outputs.
class StackedEnsemble final : public Classifier {
public:
    StackedEnsemble(std::vector<std::unique_ptr<Classifier>> members, std::vector<OutputKind> kinds,
                    ForestModel meta);

    ModelKind kind() const override { return ModelKind::stacked; }
    int num_classes() const override { return meta_.num_classes(); }
    std::size_t input_dims() const override { return members_.front()->input_dims(); }
    Prediction predict(std::span<const float> x) const override;
    std::vector<Prediction> predict_all(const FeatureMatrix& x, int workers = 1) const override;
    void save_payload(BinaryWriter& w) const override;

    const std::vector<std::unique_ptr<Classifier>>& members() const noexcept { return members_; }
    const std::vector<OutputKind>& kinds() const noexcept { return kinds_; }
    const ForestModel& meta() const noexcept { return meta_; }

private:
    std::vector<std::unique_ptr<Classifier>> members_;
    std::vector<OutputKind> kinds_;
    ForestModel meta_;
};

/// Stacked training set from out-of-fold member predictions: the training
/// rows are split into params.folds stratified folds and each fold's rows are
/// predicted by members fitted on the other folds.
FeatureMatrix out_of_fold_stack(const FeatureMatrix& x, std::span<const int> y, int num_classes,
                                std::span<const MemberSpec> roster, const StackParams& params);

/// Fits the stacked ensemble. `full_members`, if given, must be the roster
/// members already fitted on (x, y) and are reused instead of refitting.
StackedEnsemble stacked_fit(const FeatureMatrix& x, std::span<const int> y, int num_classes,
                            std::span<const MemberSpec> roster, const StackParams& params = {},
                            std::vector<std::unique_ptr<Classifier>> full_members = {});

}  // namespace malimg
