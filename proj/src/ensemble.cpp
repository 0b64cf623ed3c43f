#include "malimg/ensemble.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "malimg/binary_io.hpp"
#include "malimg/dataset.hpp"
#include "malimg/errors.hpp"
#include "malimg/model_io.hpp"
#include "malimg/parallel.hpp"

namespace malimg {

std::unique_ptr<Classifier> fit_member(const MemberSpec& spec, const FeatureMatrix& x, std::span<const int> y,
                                       int num_classes) {
    switch (spec.kind) {
        case ModelKind::knn:
            return std::make_unique<KnnModel>(
                knn_fit(x, std::vector<int>(y.begin(), y.end()), num_classes, spec.knn));
        case ModelKind::mlp:
            return std::make_unique<MlpModel>(mlp_fit(x, y, num_classes, spec.mlp));
        case ModelKind::forest:
            return std::make_unique<ForestModel>(forest_fit(x, y, num_classes, spec.forest));
        default:
            throw UsageError("ensemble members must be knn, mlp or forest");
    }
}

int vote_ensemble(std::span<const Prediction> predictions) {
    return VoteEnsemble::combine(predictions).label;
}

Prediction VoteEnsemble::combine(std::span<const Prediction> preds) {
    if (preds.empty()) throw UsageError("vote_ensemble: no predictions");
    const std::size_t classes = preds.front().probabilities.size();
    std::vector<double> votes(classes, 0.0);
    std::vector<double> prob_sum(classes, 0.0);
    for (const auto& p : preds) {
        if (p.probabilities.size() != classes) throw UsageError("vote_ensemble: class counts differ");
        votes[static_cast<std::size_t>(p.label)] += 1.0;
        for (std::size_t c = 0; c < classes; ++c) prob_sum[c] += p.probabilities[c];
    }
    const double scale = 1.0 / static_cast<double>(preds.size() + 1);
    std::vector<double> score(classes);
    for (std::size_t c = 0; c < classes; ++c) score[c] = votes[c] + prob_sum[c] * scale;
    return make_prediction(std::move(score));
}

std::size_t stacked_width(std::span<const OutputKind> kinds, int num_classes) {
    std::size_t w = 0;
    for (auto k : kinds) w += k == OutputKind::probabilities ? static_cast<std::size_t>(num_classes) : 1;
    return w;
}

std::vector<float> stacked_features(std::span<const Prediction> outputs, std::span<const OutputKind> kinds) {
    if (outputs.size() != kinds.size()) {
        throw UsageError("stacked_features: expected " + std::to_string(kinds.size()) + " model outputs, got " +
                         std::to_string(outputs.size()));
    }
    std::vector<float> v;
    for (std::size_t i = 0; i < outputs.size(); ++i) {
        if (kinds[i] == OutputKind::probabilities) {
            if (outputs[i].probabilities.empty()) throw UsageError("stacked_features: missing probabilities");
            for (double p : outputs[i].probabilities) v.push_back(static_cast<float>(p));
        } else {
            v.push_back(static_cast<float>(outputs[i].label));
        }
    }
    return v;
}

VoteEnsemble::VoteEnsemble(std::vector<std::unique_ptr<Classifier>> members) : members_(std::move(members)) {
    if (members_.empty()) throw UsageError("vote ensemble needs members");
}

Prediction VoteEnsemble::predict(std::span<const float> x) const {
    std::vector<Prediction> preds;
    for (const auto& m : members_) preds.push_back(m->predict(x));
    return combine(preds);
}

std::vector<Prediction> VoteEnsemble::predict_all(const FeatureMatrix& x, int workers) const {
    std::vector<std::vector<Prediction>> per_member;
    for (const auto& m : members_) per_member.push_back(m->predict_all(x, workers));
    std::vector<Prediction> out(x.rows);
    std::vector<Prediction> row(members_.size());
    for (std::size_t i = 0; i < x.rows; ++i) {
        for (std::size_t m = 0; m < members_.size(); ++m) row[m] = per_member[m][i];
        out[i] = combine(row);
    }
    return out;
}

void VoteEnsemble::save_payload(BinaryWriter& w) const {
    w.u32(static_cast<std::uint32_t>(members_.size()));
    for (const auto& m : members_) {
        const auto blob = save_model(*m);
        w.u64(blob.size());
        for (auto b : blob) w.u8(b);
    }
}

StackedEnsemble::StackedEnsemble(std::vector<std::unique_ptr<Classifier>> members, std::vector<OutputKind> kinds,
                                 ForestModel meta)
    : members_(std::move(members)), kinds_(std::move(kinds)), meta_(std::move(meta)) {
    if (members_.empty() || members_.size() != kinds_.size()) {
        throw UsageError("stacked ensemble: member and output-kind counts differ");
    }
    if (meta_.input_dims() != stacked_width(kinds_, meta_.num_classes())) {
        throw UsageError("stacked ensemble: meta model width does not match the roster");
    }
}

Prediction StackedEnsemble::predict(std::span<const float> x) const {
    std::vector<Prediction> preds;
    for (const auto& m : members_) preds.push_back(m->predict(x));
    return meta_.predict(stacked_features(preds, kinds_));
}

std::vector<Prediction> StackedEnsemble::predict_all(const FeatureMatrix& x, int workers) const {
    std::vector<std::vector<Prediction>> per_member;
    for (const auto& m : members_) per_member.push_back(m->predict_all(x, workers));
    FeatureMatrix stacked(x.rows, stacked_width(kinds_, num_classes()));
    std::vector<Prediction> row(members_.size());
    for (std::size_t i = 0; i < x.rows; ++i) {
        for (std::size_t m = 0; m < members_.size(); ++m) row[m] = per_member[m][i];
        const auto v = stacked_features(row, kinds_);
        std::copy(v.begin(), v.end(), stacked.row(i).begin());
    }
    return meta_.predict_all(stacked, workers);
}

void StackedEnsemble::save_payload(BinaryWriter& w) const {
    w.u32(static_cast<std::uint32_t>(members_.size()));
    for (std::size_t i = 0; i < members_.size(); ++i) {
        w.u8(static_cast<std::uint8_t>(kinds_[i]));
        const auto blob = save_model(*members_[i]);
        w.u64(blob.size());
        for (auto b : blob) w.u8(b);
    }
    const auto meta = save_model(meta_);
    w.u64(meta.size());
    for (auto b : meta) w.u8(b);
}

FeatureMatrix out_of_fold_stack(const FeatureMatrix& x, std::span<const int> y, int num_classes,
                                std::span<const MemberSpec> roster, const StackParams& params) {
    if (roster.empty()) throw UsageError("stacked ensemble: empty roster");
    std::vector<std::string> strata;
    strata.reserve(y.size());
    for (int label : y) strata.push_back(std::to_string(label));
    const auto folds = stratified_folds(strata, params.folds, params.seed);

    std::vector<OutputKind> kinds;
    for (const auto& m : roster) kinds.push_back(m.output);
    FeatureMatrix stacked(x.rows, stacked_width(kinds, num_classes));

    for (int f = 0; f < params.folds; ++f) {
        std::vector<std::size_t> fit_rows, held_rows;
        for (std::size_t i = 0; i < x.rows; ++i) (folds[i] == f ? held_rows : fit_rows).push_back(i);
        if (held_rows.empty()) continue;
        const FeatureMatrix fit_x = x.select_rows(fit_rows);
        std::vector<int> fit_y;
        for (auto i : fit_rows) fit_y.push_back(y[i]);
        const FeatureMatrix held_x = x.select_rows(held_rows);

        std::vector<std::vector<Prediction>> per_member;
        for (const auto& spec : roster) {
            MemberSpec adjusted = spec;
            if (spec.kind == ModelKind::knn) {
                adjusted.knn.k = std::min<int>(spec.knn.k, static_cast<int>(fit_rows.size()));
            }
            per_member.push_back(fit_member(adjusted, fit_x, fit_y, num_classes)->predict_all(held_x, params.workers));
        }
        std::vector<Prediction> row(roster.size());
        for (std::size_t h = 0; h < held_rows.size(); ++h) {
            for (std::size_t m = 0; m < roster.size(); ++m) row[m] = per_member[m][h];
            const auto v = stacked_features(row, kinds);
            std::copy(v.begin(), v.end(), stacked.row(held_rows[h]).begin());
        }
    }
    return stacked;
}

StackedEnsemble stacked_fit(const FeatureMatrix& x, std::span<const int> y, int num_classes,
                            std::span<const MemberSpec> roster, const StackParams& params,
                            std::vector<std::unique_ptr<Classifier>> full_members) {
    check_training_data(x, y, num_classes);
    if (!full_members.empty() && full_members.size() != roster.size()) {
        throw UsageError("stacked ensemble: prefitted members do not match the roster");
    }
    const FeatureMatrix meta_x = out_of_fold_stack(x, y, num_classes, roster, params);
    ForestModel meta = forest_fit(meta_x, y, num_classes, params.meta);

    if (full_members.empty()) {
        for (const auto& spec : roster) full_members.push_back(fit_member(spec, x, y, num_classes));
    }
    std::vector<OutputKind> kinds;
    for (const auto& m : roster) kinds.push_back(m.output);
    return StackedEnsemble(std::move(full_members), std::move(kinds), std::move(meta));
}

}  // namespace malimg
