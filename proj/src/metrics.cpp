#include "malimg/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "malimg/errors.hpp"

namespace malimg {

namespace {

double ratio(std::uint64_t num, std::uint64_t den) {
    return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

std::string fmt(const char* pattern, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, pattern, v);
    return buf;
}

}  // namespace

std::uint64_t ConfusionMatrix::total() const { return std::accumulate(counts_.begin(), counts_.end(), std::uint64_t{0}); }

std::uint64_t ConfusionMatrix::row_sum(std::size_t truth) const {
    std::uint64_t s = 0;
    for (std::size_t p = 0; p < classes_; ++p) s += at(truth, p);
    return s;
}

std::uint64_t ConfusionMatrix::col_sum(std::size_t pred) const {
    std::uint64_t s = 0;
    for (std::size_t t = 0; t < classes_; ++t) s += at(t, pred);
    return s;
}

std::uint64_t ConfusionMatrix::trace() const {
    std::uint64_t s = 0;
    for (std::size_t c = 0; c < classes_; ++c) s += at(c, c);
    return s;
}

ConfusionMatrix confusion(std::span<const int> truth, std::span<const int> pred, std::size_t classes) {
    if (truth.size() != pred.size()) throw UsageError("confusion: label sequences differ in length");
    ConfusionMatrix cm(classes);
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (truth[i] < 0 || pred[i] < 0 || static_cast<std::size_t>(truth[i]) >= classes ||
            static_cast<std::size_t>(pred[i]) >= classes) {
            throw UsageError("confusion: label out of range at index " + std::to_string(i));
        }
        ++cm.at(static_cast<std::size_t>(truth[i]), static_cast<std::size_t>(pred[i]));
    }
    return cm;
}

EvalReport classification_metrics(const ConfusionMatrix& cm, std::vector<std::string> class_names) {
    const std::uint64_t total = cm.total();
    if (cm.classes() == 0 || total == 0) throw UsageError("classification_metrics: empty confusion matrix");
    const std::size_t C = cm.classes();
    EvalReport report;
    report.confusion = cm;
    report.class_names = std::move(class_names);
    if (report.class_names.size() != C) {
        report.class_names.clear();
        for (std::size_t c = 0; c < C; ++c) report.class_names.push_back(std::to_string(c));
    }

    std::uint64_t tp_sum = 0, fp_sum = 0, fn_sum = 0;
    for (std::size_t c = 0; c < C; ++c) {
        ClassMetrics m;
        m.tp = cm.at(c, c);
        m.fp = cm.col_sum(c) - m.tp;
        m.fn = cm.row_sum(c) - m.tp;
        m.tn = total - m.tp - m.fp - m.fn;
        m.support = m.tp + m.fn;
        m.precision = ratio(m.tp, m.tp + m.fp);
        m.recall = ratio(m.tp, m.tp + m.fn);
        m.f1 = ratio(2 * m.tp, 2 * m.tp + m.fp + m.fn);
        m.undefined = m.tp + m.fp == 0 || m.tp + m.fn == 0;
        tp_sum += m.tp;
        fp_sum += m.fp;
        fn_sum += m.fn;

        report.macro.precision += m.precision;
        report.macro.recall += m.recall;
        report.macro.f1 += m.f1;
        const double w = static_cast<double>(m.support);
        report.weighted.precision += w * m.precision;
        report.weighted.recall += w * m.recall;
        report.weighted.f1 += w * m.f1;
        report.per_class.push_back(m);
    }
    const auto n_classes = static_cast<double>(C);
    report.macro.precision /= n_classes;
    report.macro.recall /= n_classes;
    report.macro.f1 /= n_classes;
    const auto n = static_cast<double>(total);
    report.weighted.precision /= n;
    report.weighted.recall /= n;
    report.weighted.f1 /= n;
    report.micro.precision = ratio(tp_sum, tp_sum + fp_sum);
    report.micro.recall = ratio(tp_sum, tp_sum + fn_sum);
    report.micro.f1 = ratio(2 * tp_sum, 2 * tp_sum + fp_sum + fn_sum);
    report.accuracy = ratio(cm.trace(), total);
    return report;
}

double roc_auc(std::span<const double> scores, std::span<const int> labels) {
    if (scores.size() != labels.size()) throw UsageError("roc_auc: scores and labels differ in length");
    const std::size_t n = scores.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    // Twice the positive rank sum, with tied groups given their mid-rank;
    // doubling keeps every quantity an exact integer.
    std::uint64_t twice_rank_sum = 0;
    std::uint64_t n_pos = 0;
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j < n && scores[order[j]] == scores[order[i]]) ++j;
        const std::uint64_t twice_mid_rank = (i + 1) + j;  // ranks i+1 .. j
        for (std::size_t k = i; k < j; ++k) {
            if (labels[order[k]] != 0) {
                twice_rank_sum += twice_mid_rank;
                ++n_pos;
            }
        }
        i = j;
    }
    const std::uint64_t n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0) throw UndefinedAucError("roc_auc: needs both positive and negative samples");
    const std::uint64_t twice_u = twice_rank_sum - n_pos * (n_pos + 1);
    return static_cast<double>(twice_u) / 2.0 / static_cast<double>(n_pos * n_neg);
}

nlohmann::ordered_json to_json(const EvalReport& r) {
    nlohmann::ordered_json j;
    j["class_names"] = r.class_names;
    j["accuracy"] = r.accuracy;
    auto avg = [](const AveragedMetrics& a) {
        return nlohmann::ordered_json{{"precision", a.precision}, {"recall", a.recall}, {"f1", a.f1}};
    };
    j["macro"] = avg(r.macro);
    j["weighted"] = avg(r.weighted);
    j["micro"] = avg(r.micro);
    j["auc"] = r.auc ? nlohmann::ordered_json(*r.auc) : nlohmann::ordered_json(nullptr);
    auto per_class = nlohmann::ordered_json::array();
    for (std::size_t c = 0; c < r.per_class.size(); ++c) {
        const auto& m = r.per_class[c];
        per_class.push_back({{"class", r.class_names[c]},
                             {"tp", m.tp},
                             {"fp", m.fp},
                             {"fn", m.fn},
                             {"tn", m.tn},
                             {"support", m.support},
                             {"precision", m.precision},
                             {"recall", m.recall},
                             {"f1", m.f1},
                             {"undefined", m.undefined}});
    }
    j["per_class"] = per_class;
    auto rows = nlohmann::ordered_json::array();
    for (std::size_t t = 0; t < r.confusion.classes(); ++t) {
        auto row = nlohmann::ordered_json::array();
        for (std::size_t p = 0; p < r.confusion.classes(); ++p) row.push_back(r.confusion.at(t, p));
        rows.push_back(row);
    }
    j["confusion"] = rows;
    return j;
}

std::string to_table(const EvalReport& r) {
    std::size_t name_w = 12;
    for (const auto& n : r.class_names) name_w = std::max(name_w, n.size());
    std::ostringstream out;
    auto line = [&](const std::string& name, const std::string& acc, double p, double rc, double f1,
                    const std::string& support) {
        out << name << std::string(name_w - name.size() + 2, ' ');
        out << std::string(8 - std::min<std::size_t>(8, acc.size()), ' ') << acc << "  "
            << fmt("%9.4f", p) << "  " << fmt("%6.4f", rc) << "  " << fmt("%8.4f", f1) << "  "
            << std::string(7 - std::min<std::size_t>(7, support.size()), ' ') << support << '\n';
    };
    out << "Class" << std::string(name_w - 3, ' ') << "Accuracy  Precision  Recall  F1-Score  Support\n";
    for (std::size_t c = 0; c < r.per_class.size(); ++c) {
        const auto& m = r.per_class[c];
        line(r.class_names[c], "", m.precision, m.recall, m.f1, std::to_string(m.support));
    }
    const std::string acc = fmt("%.4f", r.accuracy);
    const std::string total = std::to_string(r.confusion.total());
    line("macro avg", acc, r.macro.precision, r.macro.recall, r.macro.f1, total);
    line("weighted avg", acc, r.weighted.precision, r.weighted.recall, r.weighted.f1, total);
    if (r.auc) out << "AUC " << fmt("%.6f", *r.auc) << '\n';
    return out.str();
}

std::string confusion_csv(const EvalReport& r) {
    std::ostringstream out;
    out << "true\\pred";
    for (const auto& n : r.class_names) out << ',' << n;
    out << '\n';
    for (std::size_t t = 0; t < r.confusion.classes(); ++t) {
        out << r.class_names[t];
        for (std::size_t p = 0; p < r.confusion.classes(); ++p) out << ',' << r.confusion.at(t, p);
        out << '\n';
    }
    return out.str();
}

}  // namespace malimg
