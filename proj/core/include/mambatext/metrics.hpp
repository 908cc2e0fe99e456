#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mambatext/errors.hpp"

namespace mambatext {

// K x K counts; rows are true classes, columns predictions.
struct ConfusionMatrix {
    int k = 0;
    std::vector<std::int64_t> cells;

    explicit ConfusionMatrix(int classes = 0)
        : k(classes), cells(static_cast<std::size_t>(classes) * classes, 0) {}

    std::int64_t& at(int t, int p) { return cells[static_cast<std::size_t>(t) * k + p]; }
    std::int64_t at(int t, int p) const { return cells[static_cast<std::size_t>(t) * k + p]; }

    std::int64_t total() const {
        std::int64_t s = 0;
        for (auto c : cells) s += c;
        return s;
    }
};

ConfusionMatrix confusion(const std::vector<int>& y_true, const std::vector<int>& y_pred, int k);

struct ClassMetrics {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::int64_t support = 0;

    bool operator==(const ClassMetrics&) const = default;
};

struct MetricsReport {
    double accuracy = 0.0;
    double sensitivity = 0.0;
    double specificity = 0.0;
    double precision = 0.0;  // support-weighted
    double recall = 0.0;     // support-weighted; equals accuracy
    double f1 = 0.0;         // support-weighted
    std::vector<ClassMetrics> per_class;

    bool operator==(const MetricsReport&) const = default;
};

// Accuracy, support-weighted precision/recall/F1, and clinical
// sensitivity/specificity. Class 0 is the negative ("no finding") class:
// binary sensitivity is the recall of class 1 and specificity the recall of
// class 0; with more classes both are macro one-vs-rest averages over the
// positive classes, which reduces to the binary definitions at K = 2.
// Undefined ratios (zero denominators) are reported as 0 rather than NaN.
MetricsReport metrics_from_confusion(const ConfusionMatrix& cm);

struct RocPoint {
    double fpr = 0.0;
    double tpr = 0.0;
};

struct RocCurve {
    std::vector<RocPoint> points;  // from (0,0) to (1,1), both monotone
    double auc = 0.0;
};

// One-vs-rest ROC for class c over per-sample probability vectors. Tied
// scores are swept as a group; AUC by the trapezoid rule.
RocCurve roc_ovr(const std::vector<std::vector<double>>& scores, const std::vector<int>& labels,
                 int c);

// JSON with exactly the keys {accuracy, sensitivity, specificity,
// precision, recall, f1, per_class}, at full precision so that
// parse_report(emit_report(r)) == r.
std::string emit_report(const MetricsReport& report);
MetricsReport parse_report(const std::string& json_text);

// Human-readable table at 4 significant digits.
std::string render_report_table(const MetricsReport& report,
                                const std::vector<std::string>& class_names);

// Comma-separated "fpr,tpr" rows; first row is "0,0", last "1,1".
std::string emit_roc_csv(const RocCurve& curve);

// Minimal vector plot: the curve as a single polyline plus the chance
// diagonal.
std::string emit_roc_svg(const RocCurve& curve);

std::string format_sig4(double v);

}  // namespace mambatext
