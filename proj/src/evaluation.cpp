#include "dos/evaluation.hpp"

#include <cstdio>
#include <numeric>
#include <ostream>

namespace dos {

ConfusionMatrix confusion_matrix(const std::vector<int>& predictions,
                                 const std::vector<int>& truths, int n) {
    if (predictions.size() != truths.size()) {
        throw DataError("confusion_matrix: " + std::to_string(predictions.size()) +
                        " predictions vs " + std::to_string(truths.size()) + " truths");
    }
    ConfusionMatrix cm;
    cm.n = n;
    cm.counts.assign(static_cast<std::size_t>(n) * static_cast<std::size_t>(n), 0);
    for (std::size_t i = 0; i < truths.size(); ++i) {
        const int t = truths[i], p = predictions[i];
        if (t < 0 || t >= n || p < 0 || p >= n) {
            throw DataError("confusion_matrix: class index out of range at sample " +
                            std::to_string(i));
        }
        cm.at(t, p)++;
    }
    return cm;
}

std::vector<ClassMetrics> class_metrics(const ConfusionMatrix& cm) {
    std::vector<ClassMetrics> out(static_cast<std::size_t>(cm.n));
    for (int j = 0; j < cm.n; ++j) {
        long long tp = cm.at(j, j);
        long long pred_j = 0, truth_j = 0;
        for (int i = 0; i < cm.n; ++i) {
            pred_j += cm.at(i, j);
            truth_j += cm.at(j, i);
        }
        ClassMetrics& m = out[static_cast<std::size_t>(j)];
        m.precision = pred_j > 0 ? static_cast<double>(tp) / static_cast<double>(pred_j) : 0.0;
        m.recall = truth_j > 0 ? static_cast<double>(tp) / static_cast<double>(truth_j) : 0.0;
        m.f1 = (m.precision + m.recall) > 0
                   ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
                   : 0.0;
    }
    return out;
}

namespace {

// Shared sweep for auprc and pr_curve: one (recall, precision) point per
// distinct score, descending.
std::vector<PRPoint> sweep_pr(const std::vector<double>& scores,
                              const std::vector<std::uint8_t>& truths) {
    if (scores.size() != truths.size()) {
        throw DataError("auprc: score/truth length mismatch");
    }
    long long total_pos = 0;
    for (std::uint8_t t : truths) total_pos += t ? 1 : 0;
    if (total_pos == 0) throw DataError("auprc: no positive samples");

    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return a < b;
    });

    std::vector<PRPoint> pts;
    long long tp = 0, fp = 0;
    std::size_t i = 0;
    while (i < order.size()) {
        const double s = scores[order[i]];
        while (i < order.size() && scores[order[i]] == s) {
            if (truths[order[i]]) tp++;
            else fp++;
            i++;
        }
        PRPoint p;
        p.recall = static_cast<double>(tp) / static_cast<double>(total_pos);
        p.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
        pts.push_back(p);
    }
    return pts;
}

} // namespace

double auprc(const std::vector<double>& scores, const std::vector<std::uint8_t>& truths) {
    const auto pts = sweep_pr(scores, truths);
    double area = 0.0, prev_recall = 0.0;
    for (const auto& p : pts) {
        area += (p.recall - prev_recall) * p.precision;
        prev_recall = p.recall;
    }
    return area;
}

PRCurve pr_curve(const std::vector<double>& scores, const std::vector<std::uint8_t>& truths,
                 int class_label) {
    PRCurve c;
    c.class_label = class_label;
    c.points = sweep_pr(scores, truths);
    return c;
}

int argmax_class(const double* row, int n) {
    int best = 0;
    for (int c = 1; c < n; ++c) {
        if (row[c] > row[best]) best = c;
    }
    return best;
}

MetricsReport report_from_posteriors(const std::string& evaluator,
                                     const std::vector<double>& posteriors,
                                     const std::vector<int>& truths, int n,
                                     const std::vector<std::uint8_t>& minority_flags) {
    if (posteriors.size() != truths.size() * static_cast<std::size_t>(n)) {
        throw DataError("report_from_posteriors: posterior matrix size mismatch");
    }
    MetricsReport rep;
    rep.evaluator = evaluator;
    rep.minority_flags = minority_flags;

    std::vector<int> preds(truths.size());
    for (std::size_t i = 0; i < truths.size(); ++i) {
        preds[i] = argmax_class(posteriors.data() + i * static_cast<std::size_t>(n), n);
    }
    rep.per_class = class_metrics(confusion_matrix(preds, truths, n));

    rep.auprc_per_class.resize(static_cast<std::size_t>(n), 0.0);
    for (int c = 0; c < n; ++c) {
        std::vector<double> scores(truths.size());
        std::vector<std::uint8_t> bin(truths.size());
        bool any_pos = false;
        for (std::size_t i = 0; i < truths.size(); ++i) {
            scores[i] = posteriors[i * static_cast<std::size_t>(n) + static_cast<std::size_t>(c)];
            bin[i] = truths[i] == c ? 1 : 0;
            any_pos = any_pos || bin[i];
        }
        // A class absent from the evaluation set has an undefined PR curve;
        // its area is reported as 0, matching the zero-denominator rule.
        rep.auprc_per_class[static_cast<std::size_t>(c)] = any_pos ? auprc(scores, bin) : 0.0;
    }

    double min_f1 = 0, maj_f1 = 0, all_f1 = 0, min_ap = 0, maj_ap = 0, all_ap = 0;
    int n_min = 0, n_maj = 0;
    for (int c = 0; c < n; ++c) {
        const bool is_min =
            !minority_flags.empty() && minority_flags[static_cast<std::size_t>(c)] != 0;
        const double f1 = rep.per_class[static_cast<std::size_t>(c)].f1;
        const double ap = rep.auprc_per_class[static_cast<std::size_t>(c)];
        all_f1 += f1;
        all_ap += ap;
        if (is_min) {
            min_f1 += f1;
            min_ap += ap;
            n_min++;
        } else {
            maj_f1 += f1;
            maj_ap += ap;
            n_maj++;
        }
    }
    rep.minority_f1 = n_min ? min_f1 / n_min : 0.0;
    rep.majority_f1 = n_maj ? maj_f1 / n_maj : 0.0;
    rep.overall_f1 = n ? all_f1 / n : 0.0;
    rep.minority_auprc = n_min ? min_ap / n_min : 0.0;
    rep.majority_auprc = n_maj ? maj_ap / n_maj : 0.0;
    rep.overall_auprc = n ? all_ap / n : 0.0;
    return rep;
}

namespace {

std::string fmt6(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

} // namespace

void report_to_csv(const MetricsReport& report, std::ostream& os) {
    os << "class,precision,recall,f1,auprc,group\n";
    for (std::size_t c = 0; c < report.per_class.size(); ++c) {
        const bool is_min = !report.minority_flags.empty() && report.minority_flags[c] != 0;
        os << c << "," << fmt6(report.per_class[c].precision) << ","
           << fmt6(report.per_class[c].recall) << "," << fmt6(report.per_class[c].f1) << ","
           << fmt6(report.auprc_per_class[c]) << "," << (is_min ? "minority" : "majority")
           << "\n";
    }
}

void report_to_table(const MetricsReport& report, std::ostream& os) {
    os << "evaluator: " << report.evaluator << "\n";
    os << "class  group     precision  recall     f1         auprc\n";
    for (std::size_t c = 0; c < report.per_class.size(); ++c) {
        const bool is_min = !report.minority_flags.empty() && report.minority_flags[c] != 0;
        char buf[128];
        std::snprintf(buf, sizeof(buf), "%-6zu %-9s %-10.4f %-10.4f %-10.4f %-10.4f\n", c,
                      is_min ? "minority" : "majority", report.per_class[c].precision,
                      report.per_class[c].recall, report.per_class[c].f1,
                      report.auprc_per_class[c]);
        os << buf;
    }
    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "means: minority f1=%.4f auprc=%.4f | majority f1=%.4f auprc=%.4f | overall "
                  "f1=%.4f auprc=%.4f\n",
                  report.minority_f1, report.minority_auprc, report.majority_f1,
                  report.majority_auprc, report.overall_f1, report.overall_auprc);
    os << buf;
    std::snprintf(buf, sizeof(buf), "wall_seconds: %.3f\n", report.wall_seconds);
    os << buf;
}

} // namespace dos
