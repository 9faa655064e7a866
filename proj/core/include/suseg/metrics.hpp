#pragma once

#include "suseg/volume.hpp"

#include <string>
#include <vector>

namespace suseg {

struct CaseScores {
    std::string case_id;
    double precision = 0; // percent
    double recall = 0;
    double dice = 0;
};

struct MetricsTriple {
    double precision = 0;
    double recall = 0;
    double dice = 0;
};

struct MetricsReport {
    std::string label;
    std::vector<CaseScores> per_case;
    MetricsTriple mean;
    MetricsTriple stddev;

    void recompute(); // mean/stddev from per_case
};

// voxel = 1 iff value > threshold (strict)
Volume binarize(const Volume& pred, float threshold);

// Voxel-wise precision/recall/dice in percent. Empty pred and gt scores 100
// on all three; a zero denominator otherwise scores 0.
MetricsTriple evaluate_case(const Volume& pred_mask, const Volume& gt_mask);

std::string report_table(const std::vector<MetricsReport>& reports);
std::string report_json(const std::vector<MetricsReport>& reports);

} // namespace suseg
