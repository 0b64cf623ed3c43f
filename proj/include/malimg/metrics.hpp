#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace malimg {

/// C x C counts, rows = true class, columns = predicted class.
class ConfusionMatrix {
public:
    explicit ConfusionMatrix(std::size_t classes = 0) : classes_(classes), counts_(classes * classes, 0) {}

    std::size_t classes() const noexcept { return classes_; }
    std::uint64_t at(std::size_t truth, std::size_t pred) const { return counts_[truth * classes_ + pred]; }
    std::uint64_t& at(std::size_t truth, std::size_t pred) { return counts_[truth * classes_ + pred]; }
    std::uint64_t total() const;
    std::uint64_t row_sum(std::size_t truth) const;
    std::uint64_t col_sum(std::size_t pred) const;
    std::uint64_t trace() const;

    bool operator==(const ConfusionMatrix&) const = default;

private:
    std::size_t classes_;
    std::vector<std::uint64_t> counts_;
};

/// Throws UsageError on length mismatch or a label outside [0, classes).
ConfusionMatrix confusion(std::span<const int> truth, std::span<const int> pred, std::size_t classes);

/// One-vs-rest tallies and scores for one class. 0/0 ratios are reported as
/// 0 with `undefined` set.
struct ClassMetrics {
    std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;
    std::uint64_t support = 0;
    double precision = 0.0, recall = 0.0, f1 = 0.0;
    bool undefined = false;
};

struct AveragedMetrics {
    double precision = 0.0, recall = 0.0, f1 = 0.0;
};

struct EvalReport {
    std::vector<std::string> class_names;
    std::vector<ClassMetrics> per_class;
    AveragedMetrics macro;
    AveragedMetrics weighted;
    AveragedMetrics micro;
    double accuracy = 0.0;
    std::optional<double> auc;
    ConfusionMatrix confusion;
};

/// Throws UsageError on an empty matrix.
EvalReport classification_metrics(const ConfusionMatrix& cm, std::vector<std::string> class_names = {});

/// Area under the ROC curve from mid-ranks (Mann-Whitney U): the fraction of
/// (positive, negative) pairs where the positive scores higher, ties 1/2.
/// labels: nonzero = positive. Throws UndefinedAucError unless both classes
/// are present.
double roc_auc(std::span<const double> scores, std::span<const int> labels);

nlohmann::ordered_json to_json(const EvalReport& report);

/// Aligned text table: one row per class plus macro/weighted averages, with
/// Accuracy, Precision, Recall and F1-Score columns.
std::string to_table(const EvalReport& report);

/// Header row of predicted class names, then one row per true class.
std::string confusion_csv(const EvalReport& report);

}  // namespace malimg
