#include "dcap/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "dcap/errors.hpp"

namespace dcap {

double iou(const BoxXYXY& a, const BoxXYXY& b) {
    if (a.x1 > a.x2 || a.y1 > a.y2 || b.x1 > b.x2 || b.y1 > b.y2)
        throw GeometryError("iou: box with negative extent");
    const double ix = std::max(0.0, std::min(a.x2, b.x2) - std::max(a.x1, b.x1));
    const double iy = std::max(0.0, std::min(a.y2, b.y2) - std::max(a.y1, b.y1));
    const double inter = ix * iy;
    const double uni = a.area() + b.area() - inter;
    return uni > 0 ? inter / uni : 0.0;
}

namespace {

// Stable score-descending order of detection indices (ties keep input order).
std::vector<int> score_order(const std::vector<Detection>& dets) {
    std::vector<int> order(dets.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int i, int j) { return dets[static_cast<std::size_t>(i)].score >
                                                dets[static_cast<std::size_t>(j)].score; });
    return order;
}

// Greedy matching over an index order; fills per-detection match/IoU arrays.
void greedy_match(const std::vector<Detection>& dets, const std::vector<int>& order,
                  const std::vector<GroundTruth>& gts, double thresh,
                  std::vector<int>& det_match, std::vector<double>& det_iou) {
    det_match.assign(dets.size(), -1);
    det_iou.assign(dets.size(), 0.0);
    std::vector<char> used(gts.size(), 0);
    for (int di : order) {
        const auto& d = dets[static_cast<std::size_t>(di)];
        int best = -1;
        double best_iou = 0;
        for (std::size_t gi = 0; gi < gts.size(); ++gi) {
            if (used[gi] || gts[gi].class_id != d.class_id || gts[gi].image_id != d.image_id)
                continue;
            const double v = iou(d.box, gts[gi].box);
            if (v >= thresh && v > best_iou) {
                best = static_cast<int>(gi);
                best_iou = v;
            }
        }
        if (best >= 0) {
            used[static_cast<std::size_t>(best)] = 1;
            det_match[static_cast<std::size_t>(di)] = best;
            det_iou[static_cast<std::size_t>(di)] = best_iou;
        }
    }
}

double interp_ap_101(const std::vector<char>& tp_by_rank, std::size_t num_gt) {
    if (num_gt == 0) return 0.0;
    // precision/recall after each detection in rank order
    std::vector<double> prec, rec;
    int tp = 0, fp = 0;
    for (char t : tp_by_rank) {
        (t ? tp : fp) += 1;
        prec.push_back(static_cast<double>(tp) / (tp + fp));
        rec.push_back(static_cast<double>(tp) / static_cast<double>(num_gt));
    }
    double ap = 0;
    for (int i = 0; i <= 100; ++i) {
        const double r = i / 100.0;
        double best = 0; // precision envelope: max precision at recall >= r
        for (std::size_t k = 0; k < rec.size(); ++k)
            if (rec[k] >= r) best = std::max(best, prec[k]);
        ap += best;
    }
    return ap / 101.0;
}

double class_ap(const std::vector<Detection>& dets, const std::vector<GroundTruth>& gts,
                int class_id, double thresh, std::vector<int>* out_match = nullptr,
                std::vector<double>* out_iou = nullptr,
                std::vector<int>* out_order = nullptr) {
    std::size_t num_gt = 0;
    for (const auto& g : gts)
        if (g.class_id == class_id) ++num_gt;
    auto order = score_order(dets);
    std::erase_if(order, [&](int i) {
        return dets[static_cast<std::size_t>(i)].class_id != class_id;
    });
    std::vector<int> det_match;
    std::vector<double> det_iou;
    greedy_match(dets, order, gts, thresh, det_match, det_iou);
    std::vector<char> tp_by_rank;
    tp_by_rank.reserve(order.size());
    for (int di : order) tp_by_rank.push_back(det_match[static_cast<std::size_t>(di)] >= 0);
    if (out_match) *out_match = std::move(det_match);
    if (out_iou) *out_iou = std::move(det_iou);
    if (out_order) *out_order = std::move(order);
    return interp_ap_101(tp_by_rank, num_gt);
}

} // namespace

MatchResult match_detections(const std::vector<Detection>& dets,
                             const std::vector<GroundTruth>& gts, double iou_thresh) {
    for (std::size_t i = 1; i < dets.size(); ++i)
        if (dets[i].score > dets[i - 1].score)
            throw ValueError("match_detections: detections not sorted by score");
    std::vector<int> order(dets.size());
    std::iota(order.begin(), order.end(), 0);
    MatchResult r;
    greedy_match(dets, order, gts, iou_thresh, r.det_match, r.det_iou);
    for (int m : r.det_match) (m >= 0 ? r.tp : r.fp) += 1;
    r.fn = static_cast<int>(gts.size()) - r.tp;
    return r;
}

double average_precision(const std::vector<Detection>& dets,
                         const std::vector<GroundTruth>& gts, int class_id,
                         double iou_thresh) {
    bool any = false;
    for (const auto& g : gts) any |= (g.class_id == class_id);
    if (!any) throw EvalError("average_precision: no ground truth for class");
    return class_ap(dets, gts, class_id, iou_thresh);
}

EvalReport evaluate(const std::vector<Detection>& dets,
                    const std::vector<GroundTruth>& gts) {
    if (gts.empty()) throw EvalError("evaluate: empty ground truth");

    std::set<int> classes;
    for (const auto& g : gts) classes.insert(g.class_id);

    EvalReport rep;
    // mAP at each threshold, averaged over classes that have ground truth
    double map_sum = 0;
    for (int t = 0; t < 10; ++t) {
        const double thresh = 0.5 + 0.05 * t;
        double sum = 0;
        for (int c : classes) {
            const double ap = class_ap(dets, gts, c, thresh);
            sum += ap;
            if (t == 0) rep.per_class_ap50[c] = ap;
        }
        const double m = sum / static_cast<double>(classes.size());
        if (t == 0) rep.map50 = m;
        map_sum += m;
    }
    rep.map50_95 = map_sum / 10.0;

    // Pooled IoU-0.5 curve across classes for operating-point P/R and
    // mean-IoU of the true-positive matches. Matching stays per class so a
    // detection can never claim a ground truth of another class.
    std::vector<char> tp_flag(dets.size(), 0);
    std::vector<double> tp_iou(dets.size(), 0.0);
    for (int c : classes) {
        std::vector<int> match, order;
        std::vector<double> ious;
        class_ap(dets, gts, c, 0.5, &match, &ious, &order);
        for (int di : order)
            if (match[static_cast<std::size_t>(di)] >= 0) {
                tp_flag[static_cast<std::size_t>(di)] = 1;
                tp_iou[static_cast<std::size_t>(di)] = ious[static_cast<std::size_t>(di)];
            }
    }

    double iou_sum = 0;
    int iou_n = 0;
    for (std::size_t i = 0; i < dets.size(); ++i)
        if (tp_flag[i]) {
            iou_sum += tp_iou[i];
            ++iou_n;
        }
    rep.mean_iou = iou_n ? iou_sum / iou_n : 0.0;

    // best-F1 operating point on the pooled curve
    auto order = score_order(dets);
    int tp = 0, fp = 0;
    double best_f1 = -1;
    for (int di : order) {
        (tp_flag[static_cast<std::size_t>(di)] ? tp : fp) += 1;
        const double p = static_cast<double>(tp) / (tp + fp);
        const double r = static_cast<double>(tp) / static_cast<double>(gts.size());
        const double f1 = (p + r) > 0 ? 2 * p * r / (p + r) : 0.0;
        if (f1 > best_f1) {
            best_f1 = f1;
            rep.precision = p;
            rep.recall = r;
        }
    }
    return rep;
}

RunSummary aggregate_runs(const std::vector<EvalReport>& reports) {
    if (reports.size() < 2) throw ValueError("aggregate_runs: need at least 2 runs");
    auto stats = [&](auto field) {
        FieldStats s;
        for (const auto& r : reports) s.mean += r.*field;
        s.mean /= static_cast<double>(reports.size());
        double ss = 0;
        for (const auto& r : reports) ss += (r.*field - s.mean) * (r.*field - s.mean);
        s.stddev = std::sqrt(ss / static_cast<double>(reports.size() - 1));
        return s;
    };
    RunSummary out;
    out.precision = stats(&EvalReport::precision);
    out.recall = stats(&EvalReport::recall);
    out.map50 = stats(&EvalReport::map50);
    out.map50_95 = stats(&EvalReport::map50_95);
    out.mean_iou = stats(&EvalReport::mean_iou);
    return out;
}

} // namespace dcap
