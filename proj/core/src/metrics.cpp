#include "mambatext/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include <json.hpp>

namespace mambatext {

ConfusionMatrix confusion(const std::vector<int>& y_true, const std::vector<int>& y_pred, int k) {
    if (y_true.size() != y_pred.size())
        throw LengthMismatch("confusion: y_true and y_pred lengths differ");
    if (k < 1) throw LabelOutOfRange("confusion: class count must be >= 1");
    ConfusionMatrix cm(k);
    for (std::size_t i = 0; i < y_true.size(); ++i) {
        const int t = y_true[i], p = y_pred[i];
        if (t < 0 || t >= k || p < 0 || p >= k)
            throw LabelOutOfRange("confusion: label outside [0, K) at sample " +
                                  std::to_string(i));
        ++cm.at(t, p);
    }
    return cm;
}

namespace {

double ratio(std::int64_t num, std::int64_t den) {
    return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

MetricsReport metrics_from_confusion(const ConfusionMatrix& cm) {
    const int k = cm.k;
    const std::int64_t total = cm.total();
    if (k < 1 || total == 0) throw EmptyMatrix("metrics_from_confusion: no samples counted");

    MetricsReport r;
    std::int64_t trace = 0;
    for (int c = 0; c < k; ++c) trace += cm.at(c, c);
    r.accuracy = ratio(trace, total);

    r.per_class.resize(static_cast<std::size_t>(k));
    for (int c = 0; c < k; ++c) {
        std::int64_t row = 0, col = 0;
        for (int j = 0; j < k; ++j) {
            row += cm.at(c, j);
            col += cm.at(j, c);
        }
        ClassMetrics& m = r.per_class[static_cast<std::size_t>(c)];
        m.support = row;
        m.precision = ratio(cm.at(c, c), col);
        m.recall = ratio(cm.at(c, c), row);
        m.f1 = (m.precision + m.recall) > 0.0
                   ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
                   : 0.0;
        r.precision += static_cast<double>(row) * m.precision;
        r.recall += static_cast<double>(row) * m.recall;
        r.f1 += static_cast<double>(row) * m.f1;
    }
    r.precision /= static_cast<double>(total);
    r.recall /= static_cast<double>(total);
    r.f1 /= static_cast<double>(total);

    // Sensitivity/specificity treat class 0 as the negative class and
    // average one-vs-rest over the positive classes; with two classes this
    // is exactly recall(1) and recall(0).
    double sens = 0.0, spec = 0.0;
    for (int c = 1; c < k; ++c) {
        const ClassMetrics& m = r.per_class[static_cast<std::size_t>(c)];
        sens += m.recall;
        std::int64_t col = 0;
        for (int j = 0; j < k; ++j) col += cm.at(j, c);
        const std::int64_t fp = col - cm.at(c, c);
        const std::int64_t tn = total - m.support - fp;
        spec += ratio(tn, tn + fp);
    }
    r.sensitivity = k > 1 ? sens / static_cast<double>(k - 1) : 0.0;
    r.specificity = k > 1 ? spec / static_cast<double>(k - 1) : 0.0;
    return r;
}

RocCurve roc_ovr(const std::vector<std::vector<double>>& scores, const std::vector<int>& labels,
                 int c) {
    if (scores.size() != labels.size())
        throw LengthMismatch("roc_ovr: scores and labels lengths differ");
    const std::size_t n = scores.size();
    std::vector<double> s(n);
    std::vector<char> pos(n);
    std::int64_t n_pos = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (static_cast<std::size_t>(c) >= scores[i].size())
            throw LabelOutOfRange("roc_ovr: class index outside score vector");
        s[i] = scores[i][static_cast<std::size_t>(c)];
        if (!std::isfinite(s[i])) throw std::invalid_argument("roc_ovr: non-finite score");
        pos[i] = labels[i] == c ? 1 : 0;
        n_pos += pos[i];
    }
    const std::int64_t n_neg = static_cast<std::int64_t>(n) - n_pos;
    if (n_pos == 0 || n_neg == 0)
        throw SingleClassLabels("roc_ovr: need both positive and negative samples");

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&s](std::size_t a, std::size_t b) { return s[a] > s[b]; });

    RocCurve curve;
    curve.points.push_back({0.0, 0.0});
    std::int64_t tp = 0, fp = 0;
    std::size_t i = 0;
    while (i < n) {
        // Sweep tied scores as one group so ties become diagonal segments.
        const double v = s[order[i]];
        while (i < n && s[order[i]] == v) {
            if (pos[order[i]])
                ++tp;
            else
                ++fp;
            ++i;
        }
        curve.points.push_back({static_cast<double>(fp) / static_cast<double>(n_neg),
                                static_cast<double>(tp) / static_cast<double>(n_pos)});
    }
    double auc = 0.0;
    for (std::size_t j = 1; j < curve.points.size(); ++j) {
        const auto& a = curve.points[j - 1];
        const auto& b = curve.points[j];
        auc += (b.fpr - a.fpr) * (a.tpr + b.tpr) / 2.0;
    }
    curve.auc = auc;
    return curve;
}

std::string emit_report(const MetricsReport& r) {
    nlohmann::json j;
    j["accuracy"] = r.accuracy;
    j["sensitivity"] = r.sensitivity;
    j["specificity"] = r.specificity;
    j["precision"] = r.precision;
    j["recall"] = r.recall;
    j["f1"] = r.f1;
    nlohmann::json per = nlohmann::json::array();
    for (const auto& c : r.per_class) {
        per.push_back({{"precision", c.precision},
                       {"recall", c.recall},
                       {"f1", c.f1},
                       {"support", c.support}});
    }
    j["per_class"] = per;
    return j.dump(2) + "\n";
}

MetricsReport parse_report(const std::string& json_text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("metrics report is not valid JSON: ") + e.what());
    }
    MetricsReport r;
    try {
        r.accuracy = j.at("accuracy").get<double>();
        r.sensitivity = j.at("sensitivity").get<double>();
        r.specificity = j.at("specificity").get<double>();
        r.precision = j.at("precision").get<double>();
        r.recall = j.at("recall").get<double>();
        r.f1 = j.at("f1").get<double>();
        for (const auto& c : j.at("per_class")) {
            ClassMetrics m;
            m.precision = c.at("precision").get<double>();
            m.recall = c.at("recall").get<double>();
            m.f1 = c.at("f1").get<double>();
            m.support = c.at("support").get<std::int64_t>();
            r.per_class.push_back(m);
        }
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("metrics report missing field: ") + e.what());
    }
    return r;
}

std::string format_sig4(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.4g", v);
    return buf;
}

std::string render_report_table(const MetricsReport& r,
                                const std::vector<std::string>& class_names) {
    std::ostringstream os;
    os << "accuracy     " << format_sig4(r.accuracy) << "\n";
    os << "sensitivity  " << format_sig4(r.sensitivity) << "\n";
    os << "specificity  " << format_sig4(r.specificity) << "\n";
    os << "precision    " << format_sig4(r.precision) << "\n";
    os << "recall       " << format_sig4(r.recall) << "\n";
    os << "f1           " << format_sig4(r.f1) << "\n";
    os << "\nclass                         precision  recall  f1      support\n";
    for (std::size_t c = 0; c < r.per_class.size(); ++c) {
        const auto& m = r.per_class[c];
        std::string name = c < class_names.size() ? class_names[c] : "class_" + std::to_string(c);
        if (name.size() > 28) name.resize(28);
        os << name << std::string(30 - name.size(), ' ');
        std::string p = format_sig4(m.precision), re = format_sig4(m.recall),
                    f = format_sig4(m.f1);
        os << p << std::string(p.size() < 11 ? 11 - p.size() : 1, ' ');
        os << re << std::string(re.size() < 8 ? 8 - re.size() : 1, ' ');
        os << f << std::string(f.size() < 8 ? 8 - f.size() : 1, ' ');
        os << m.support << "\n";
    }
    return os.str();
}

namespace {

std::string num(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

std::string emit_roc_csv(const RocCurve& curve) {
    std::ostringstream os;
    for (const auto& p : curve.points) os << num(p.fpr) << ',' << num(p.tpr) << "\n";
    return os.str();
}

std::string emit_roc_svg(const RocCurve& curve) {
    constexpr double kSize = 400.0, kMargin = 40.0;
    const double span = kSize - 2.0 * kMargin;
    auto px = [&](double x) { return kMargin + x * span; };
    auto py = [&](double y) { return kSize - kMargin - y * span; };
    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"400\" height=\"400\" "
          "viewBox=\"0 0 400 400\">\n";
    os << "  <rect x=\"" << kMargin << "\" y=\"" << kMargin << "\" width=\"" << span
       << "\" height=\"" << span << "\" fill=\"none\" stroke=\"#888\"/>\n";
    os << "  <line x1=\"" << px(0) << "\" y1=\"" << py(0) << "\" x2=\"" << px(1) << "\" y2=\""
       << py(1) << "\" stroke=\"#bbb\" stroke-dasharray=\"4 4\"/>\n";
    os << "  <polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < curve.points.size(); ++i) {
        if (i) os << ' ';
        os << px(curve.points[i].fpr) << ',' << py(curve.points[i].tpr);
    }
    os << "\"/>\n";
    os << "  <text x=\"" << kMargin << "\" y=\"" << kMargin - 12.0
       << "\" font-family=\"sans-serif\" font-size=\"14\">auc " << format_sig4(curve.auc)
       << "</text>\n";
    os << "</svg>\n";
    return os.str();
}

}  // namespace mambatext
