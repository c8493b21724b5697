#pragma once

// Detection evaluation: IoU, greedy matching, 101-point interpolated AP,
// mAP50 / mAP50-95, and mean/std aggregation across runs.

#include <map>
#include <vector>

namespace dcap {

struct BoxXYXY {
    double x1 = 0, y1 = 0, x2 = 0, y2 = 0;
    double width() const { return x2 - x1; }
    double height() const { return y2 - y1; }
    double area() const { return width() * height(); }
};

struct Detection {
    int image_id = 0;
    int class_id = 0;
    double score = 0;
    BoxXYXY box;
};

struct GroundTruth {
    int image_id = 0;
    int class_id = 0;
    BoxXYXY box;
};

struct MatchResult {
    int tp = 0, fp = 0, fn = 0;
    // per input detection: index of the matched ground truth, or -1
    std::vector<int> det_match;
    // IoU of each matched pair, parallel to det_match (0 where unmatched)
    std::vector<double> det_iou;
};

struct EvalReport {
    double precision = 0, recall = 0;
    double map50 = 0, map50_95 = 0;
    double mean_iou = 0;
    std::map<int, double> per_class_ap50; // classes with ground truth only
};

struct FieldStats {
    double mean = 0, stddev = 0;
};

struct RunSummary {
    FieldStats precision, recall, map50, map50_95, mean_iou;
};

double iou(const BoxXYXY& a, const BoxXYXY& b);

// Greedy one-to-one matching. Detections must already be sorted by score
// descending; each is matched to the unmatched same-class ground truth with
// the highest IoU at or above the threshold.
MatchResult match_detections(const std::vector<Detection>& dets,
                             const std::vector<GroundTruth>& gts, double iou_thresh);

// 101-point interpolated AP for one class over the whole dataset.
// Requires at least one ground truth of that class.
double average_precision(const std::vector<Detection>& dets,
                         const std::vector<GroundTruth>& gts, int class_id,
                         double iou_thresh);

// Full report over a dataset. Throws EvalError when there is no ground
// truth at all. Precision/recall are taken at the confidence that maximizes
// F1 on the pooled IoU-0.5 PR curve; with no detections they are 0.
EvalReport evaluate(const std::vector<Detection>& dets,
                    const std::vector<GroundTruth>& gts);

// Sample mean and sample standard deviation (n-1) per field; needs >= 2 runs.
RunSummary aggregate_runs(const std::vector<EvalReport>& reports);

} // namespace dcap
