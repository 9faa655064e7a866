#include "suseg/metrics.hpp"

#include <json.hpp>

#include <cmath>
#include <sstream>

namespace suseg {

void MetricsReport::recompute() {
    mean = stddev = MetricsTriple{};
    if (per_case.empty()) return;
    const double n = static_cast<double>(per_case.size());
    for (const auto& c : per_case) {
        mean.precision += c.precision;
        mean.recall += c.recall;
        mean.dice += c.dice;
    }
    mean.precision /= n;
    mean.recall /= n;
    mean.dice /= n;
    for (const auto& c : per_case) {
        stddev.precision += (c.precision - mean.precision) * (c.precision - mean.precision);
        stddev.recall += (c.recall - mean.recall) * (c.recall - mean.recall);
        stddev.dice += (c.dice - mean.dice) * (c.dice - mean.dice);
    }
    stddev.precision = std::sqrt(stddev.precision / n);
    stddev.recall = std::sqrt(stddev.recall / n);
    stddev.dice = std::sqrt(stddev.dice / n);
}

Volume binarize(const Volume& pred, float threshold) {
    if (pred.kind != VolumeKind::Prediction) throw VolumeError("binarize expects a prediction volume");
    Volume out(pred.shape, pred.spacing, VolumeKind::Mask);
    for (size_t i = 0; i < pred.data.size(); ++i) out.data[i] = pred.data[i] > threshold ? 1.f : 0.f;
    return out;
}

MetricsTriple evaluate_case(const Volume& pred_mask, const Volume& gt_mask) {
    if (pred_mask.shape != gt_mask.shape) throw VolumeError("evaluate_case shape mismatch");
    long tp = 0, fp = 0, fn = 0;
    for (size_t i = 0; i < pred_mask.data.size(); ++i) {
        bool p = pred_mask.data[i] != 0.f, g = gt_mask.data[i] != 0.f;
        tp += p && g;
        fp += p && !g;
        fn += !p && g;
    }
    MetricsTriple m;
    if (tp + fp + fn == 0) {
        m.precision = m.recall = m.dice = 100.0;
        return m;
    }
    m.precision = tp + fp > 0 ? 100.0 * tp / (tp + fp) : 0.0;
    m.recall = tp + fn > 0 ? 100.0 * tp / (tp + fn) : 0.0;
    m.dice = 100.0 * 2 * tp / static_cast<double>(2 * tp + fp + fn);
    return m;
}

std::string report_table(const std::vector<MetricsReport>& reports) {
    std::ostringstream os;
    os << "| Method                                   | Precision (%) | Recall (%) | Dice (%) |\n";
    os << "|------------------------------------------|---------------|------------|----------|\n";
    auto row = [&](const std::string& name, const std::string& p, const std::string& r,
                   const std::string& d) {
        os << "| ";
        os.width(40);
        os << std::left << name << " | ";
        os.width(13);
        os << std::right << p << " | ";
        os.width(10);
        os << r << " | ";
        os.width(8);
        os << d << " |\n";
    };
    auto fmt = [](double v) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.1f", v);
        return std::string(buf);
    };
    for (const auto& rep : reports)
        row(rep.label, fmt(rep.mean.precision), fmt(rep.mean.recall), fmt(rep.mean.dice));
    // mean ± SD across the per-scale rows, mirroring the before-aggregation row
    std::vector<const MetricsReport*> scales;
    for (const auto& rep : reports)
        if (rep.label.rfind("ISNet", 0) == 0) scales.push_back(&rep);
    if (scales.size() > 1) {
        MetricsTriple m{}, s{};
        for (auto* rep : scales) {
            m.precision += rep->mean.precision;
            m.recall += rep->mean.recall;
            m.dice += rep->mean.dice;
        }
        const double n = static_cast<double>(scales.size());
        m.precision /= n;
        m.recall /= n;
        m.dice /= n;
        for (auto* rep : scales) {
            s.precision += (rep->mean.precision - m.precision) * (rep->mean.precision - m.precision);
            s.recall += (rep->mean.recall - m.recall) * (rep->mean.recall - m.recall);
            s.dice += (rep->mean.dice - m.dice) * (rep->mean.dice - m.dice);
        }
        auto pm = [&](double mu, double sd) { return fmt(mu) + " +/- " + fmt(std::sqrt(sd / n)); };
        row("Mean +/- S.D. of " + std::to_string(scales.size()) + " ISNets", pm(m.precision, s.precision),
            pm(m.recall, s.recall), pm(m.dice, s.dice));
    }
    return os.str();
}

std::string report_json(const std::vector<MetricsReport>& reports) {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& rep : reports) {
        nlohmann::json r;
        r["label"] = rep.label;
        r["mean"] = {{"precision", rep.mean.precision}, {"recall", rep.mean.recall}, {"dice", rep.mean.dice}};
        r["stddev"] = {{"precision", rep.stddev.precision},
                       {"recall", rep.stddev.recall},
                       {"dice", rep.stddev.dice}};
        r["per_case"] = nlohmann::json::array();
        for (const auto& c : rep.per_case)
            r["per_case"].push_back({{"case", c.case_id},
                                     {"precision", c.precision},
                                     {"recall", c.recall},
                                     {"dice", c.dice}});
        j.push_back(r);
    }
    return j.dump(2);
}

} // namespace suseg
