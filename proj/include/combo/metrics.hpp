#pragma once

#include <optional>
#include <string>
#include <vector>

#include "combo/volume.hpp"

namespace combo {

struct ConfusionCounts {
    std::int64_t tp = 0, fp = 0, fn = 0, tn = 0;

    std::int64_t total() const { return tp + fp + fn + tn; }
};

/// Per-channel exact voxel counts.
std::vector<ConfusionCounts> confusion(const OneHotMask& pred, const OneHotMask& gt);

/// 2tp/(2tp+fp+fn); empty-vs-empty is 1 by convention.
double dice_score(const ConfusionCounts& cc);
/// tp/(tp+fp+fn); empty-vs-empty is 1.
double jaccard(const ConfusionCounts& cc);
/// Miss rate fn/(fn+tp); 0 when the ground truth is empty.
double fnr(const ConfusionCounts& cc);
/// False positives normalized by ground-truth positives, fp/(fn+tp). May
/// exceed 1. 0 when both gt is empty and fp is 0; fp/0 with fp>0 is
/// reported as infinity.
double fpr_pos(const ConfusionCounts& cc);
/// Classical fp/(fp+tn).
double fpr_tn(const ConfusionCounts& cc);

/// Symmetric Hausdorff distance in millimeters between the boundary-voxel
/// point sets of one channel (6-connectivity boundary). nullopt when
/// either mask channel is empty.
std::optional<double> hausdorff(const OneHotMask& pred, const OneHotMask& gt, int channel,
                                const Spacing3& spacing);

struct OrganStats {
    double mean = 0.0, stddev = 0.0;  // population std
    int count = 0;
};

struct OrganRow {
    int organ = 0;
    OrganStats dice, jaccard, fpr_pos, fpr_tn, fnr;
    OrganStats hausdorff_mm;  // over cases where HD is defined
    double fg_fraction_pct = 0.0;  // mean ground-truth foreground percentage
};

struct CaseMetrics {
    std::string case_id;
    int organ = 0;
    double dice = 0.0, jaccard = 0.0, fpr_pos = 0.0, fpr_tn = 0.0, fnr = 0.0;
    std::optional<double> hd_mm;
    double fg_fraction_pct = 0.0;
};

struct OrganReport {
    std::vector<CaseMetrics> rows;       // one per (case, organ)
    std::vector<OrganRow> per_organ;     // mean +/- population std across cases
};

struct EvalCase {
    std::string case_id;
    const OneHotMask* pred;
    const OneHotMask* gt;
    Spacing3 spacing;
};

OrganReport organ_report(const std::vector<EvalCase>& cases);

/// CSV rows: case_id, organ, dice, jaccard, fpr_pos, fpr_tn, fnr, hd_mm,
/// fg_fraction. Missing HD cells are left empty. header_comment lines are
/// prefixed with '#'.
std::string report_to_csv(const OrganReport& report, const std::string& header_comment);

}  // namespace combo
