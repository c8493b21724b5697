#pragma once

// Single-scale grid detector: three downsampling stages with C3 blocks,
// an optional pooling/attention neck, and a 1x1 head predicting
// (tx, ty, tw, th, tobj, class logits) per cell. One anchor, YOLO-style
// decode, CIoU + BCE loss, greedy NMS, and a plain SGD-momentum loop.

#include <cmath>
#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "dcap/blocks.hpp"
#include "dcap/data.hpp"
#include "dcap/errors.hpp"
#include "dcap/metrics.hpp"
#include "dcap/rng.hpp"
#include "dcap/tensor.hpp"

namespace dcap {

struct ModelConfig {
    std::string variant = "dcap"; // base|mdrc|aasp|dcap|mdrc_ssca|spp
    std::vector<int> dilations{2, 3};
    std::string mdrc_placement = "conv_layers"; // conv_layers|c3_layers
    std::vector<int> channels{8, 16, 32};
    int num_classes = 2;
    int image_size = 64;
    double anchor_w = 16, anchor_h = 16;
    std::uint64_t seed = 0;

    int stride() const { return 1 << static_cast<int>(channels.size()); }
    int grid() const { return image_size / stride(); }

    bool uses_mdrc() const {
        return variant == "mdrc" || variant == "dcap" || variant == "mdrc_ssca" ||
               variant == "spp";
    }

    void validate() const {
        if (variant != "base" && variant != "mdrc" && variant != "aasp" && variant != "dcap" &&
            variant != "mdrc_ssca" && variant != "spp")
            throw ConfigError("unknown variant '" + variant + "'");
        if (mdrc_placement != "conv_layers" && mdrc_placement != "c3_layers")
            throw ConfigError("unknown mdrc_placement '" + mdrc_placement + "'");
        if (channels.empty()) throw ConfigError("channels must be non-empty");
        if (dilations.empty()) throw ConfigError("dilations must be non-empty");
        if (num_classes < 1) throw ConfigError("num_classes must be >= 1");
        if (image_size % stride() != 0)
            throw ConfigError("image_size must be divisible by the stride " +
                              std::to_string(stride()));
        if (anchor_w <= 0 || anchor_h <= 0) throw ConfigError("anchor must be positive");
    }

    // Stable text form; hashed into checkpoints so eval can reject a
    // checkpoint from a different architecture.
    std::string canonical_text() const {
        std::ostringstream ss;
        ss << "variant=" << variant << "\n";
        ss << "dilations=";
        for (std::size_t i = 0; i < dilations.size(); ++i)
            ss << (i ? "," : "") << dilations[i];
        ss << "\nmdrc_placement=" << mdrc_placement << "\nchannels=";
        for (std::size_t i = 0; i < channels.size(); ++i) ss << (i ? "," : "") << channels[i];
        ss << "\nnum_classes=" << num_classes << "\nimage_size=" << image_size << "\nanchor="
           << anchor_w << "," << anchor_h << "\n";
        return ss.str();
    }
};

template <typename T>
struct DetectorModelT {
    ModelConfig cfg;
    bool mdrc_down = false; // MDRC replaces the downsampling convs
    bool mdrc_c3 = false;   // C3 bottlenecks host MDRC branches
    std::vector<ConvBlockT<T>> down_conv;
    std::vector<MDRCBlockT<T>> down_mdrc;
    std::vector<C3BlockT<T>> c3;
    std::optional<AaSPBlockT<T>> neck_aasp;
    std::optional<SPPFBlockT<T>> neck_sppf;
    std::optional<SSCABlockT<T>> ssca;
    ConvParamsT<T> head;

    explicit DetectorModelT(const ModelConfig& config) : cfg(config) {
        cfg.validate();
        Rng rng(cfg.seed);
        if (cfg.uses_mdrc()) {
            mdrc_down = cfg.mdrc_placement == "conv_layers";
            mdrc_c3 = !mdrc_down;
        }
        int cin = 1;
        for (std::size_t i = 0; i < cfg.channels.size(); ++i) {
            const int cout = cfg.channels[i];
            if (mdrc_down)
                down_mdrc.emplace_back(cin, cout, cfg.dilations, 2, rng);
            else
                down_conv.emplace_back(cin, cout, 3, 2, rng);
            c3.emplace_back(cout, cout, 1, mdrc_c3, cfg.dilations, rng);
            cin = cout;
        }
        const int top = cfg.channels.back();
        if (cfg.variant == "aasp" || cfg.variant == "dcap") neck_aasp.emplace(top, top, rng);
        if (cfg.variant == "spp") neck_sppf.emplace(top, top, rng);
        if (cfg.variant == "mdrc_ssca") ssca.emplace(top, rng);
        head = make_conv<T>(top, 5 + cfg.num_classes, 1, 1, 1, 0, rng);
    }

    TensorT<T> forward(const TensorT<T>& x_in) {
        TensorT<T> x = x_in;
        for (std::size_t i = 0; i < c3.size(); ++i) {
            x = mdrc_down ? down_mdrc[i].forward(x) : down_conv[i].forward(x);
            x = c3[i].forward(x);
        }
        if (neck_aasp) x = neck_aasp->forward(x);
        if (neck_sppf) x = neck_sppf->forward(x);
        if (ssca) x = ssca->forward(x);
        return conv2d(x, head); // linear head, no activation
    }

    void params(std::vector<TensorT<T>*>& out) {
        for (auto& b : down_mdrc) b.params(out);
        for (auto& b : down_conv) b.params(out);
        for (auto& b : c3) b.params(out);
        if (neck_aasp) neck_aasp->params(out);
        if (neck_sppf) neck_sppf->params(out);
        if (ssca) ssca->params(out);
        collect(out, head);
    }

    std::size_t param_count() {
        std::vector<TensorT<T>*> ps;
        params(ps);
        std::size_t n = 0;
        for (auto* p : ps) n += p->numel();
        return n;
    }
};

using DetectorModel = DetectorModelT<float>;

// ---------------------------------------------------------------------------
// Decode

namespace detail {
inline double sigmoid_d(double t) { return 1.0 / (1.0 + std::exp(-t)); }
} // namespace detail

// Raw head output N x (5+C) x S x S -> detections per image. Every cell
// yields one candidate; confidence filtering happens in NMS.
template <typename T>
std::vector<std::vector<Detection>> decode(const TensorT<T>& raw, const ModelConfig& cfg) {
    const int s = cfg.grid(), c = cfg.num_classes, ch = 5 + c;
    if (raw.rank() != 4 || raw.dim(1) != ch || raw.dim(2) != s || raw.dim(3) != s)
        throw ShapeError("decode: raw shape does not match config");
    const int n = raw.dim(0);
    const T* p = raw.ptr();
    const auto at = [&](int img, int chan, int gy, int gx) {
        return static_cast<double>(
            p[((static_cast<std::size_t>(img) * ch + chan) * s + gy) * s + gx]);
    };
    std::vector<std::vector<Detection>> out(static_cast<std::size_t>(n));
    for (int img = 0; img < n; ++img)
        for (int gy = 0; gy < s; ++gy)
            for (int gx = 0; gx < s; ++gx) {
                const double bx =
                    (2 * detail::sigmoid_d(at(img, 0, gy, gx)) - 0.5 + gx) * cfg.stride();
                const double by =
                    (2 * detail::sigmoid_d(at(img, 1, gy, gx)) - 0.5 + gy) * cfg.stride();
                const double sw = 2 * detail::sigmoid_d(at(img, 2, gy, gx));
                const double sh = 2 * detail::sigmoid_d(at(img, 3, gy, gx));
                const double bw = sw * sw * cfg.anchor_w;
                const double bh = sh * sh * cfg.anchor_h;
                double best = -1;
                int best_c = 0;
                for (int k = 0; k < c; ++k) {
                    const double pc = detail::sigmoid_d(at(img, 5 + k, gy, gx));
                    if (pc > best) {
                        best = pc;
                        best_c = k;
                    }
                }
                Detection d;
                d.image_id = img;
                d.class_id = best_c;
                d.score = detail::sigmoid_d(at(img, 4, gy, gx)) * best;
                const double lim = cfg.image_size;
                d.box.x1 = std::min(lim, std::max(0.0, bx - bw / 2));
                d.box.y1 = std::min(lim, std::max(0.0, by - bh / 2));
                d.box.x2 = std::min(lim, std::max(0.0, bx + bw / 2));
                d.box.y2 = std::min(lim, std::max(0.0, by + bh / 2));
                out[static_cast<std::size_t>(img)].push_back(d);
            }
    return out;
}

// ---------------------------------------------------------------------------
// Target assignment

struct GridAssignment {
    int grid = 0;
    std::vector<int> cls;    // per cell, -1 where no target
    std::vector<BoxXYXY> box; // valid where cls >= 0
};

inline GridAssignment assign_targets(const std::vector<std::pair<int, BoxXYXY>>& gts,
                                     const ModelConfig& cfg) {
    GridAssignment a;
    a.grid = cfg.grid();
    a.cls.assign(static_cast<std::size_t>(a.grid * a.grid), -1);
    a.box.resize(static_cast<std::size_t>(a.grid * a.grid));
    for (const auto& [cls, box] : gts) {
        const double cx = (box.x1 + box.x2) / 2, cy = (box.y1 + box.y2) / 2;
        int gx = static_cast<int>(cx / cfg.stride());
        int gy = static_cast<int>(cy / cfg.stride());
        gx = std::min(a.grid - 1, std::max(0, gx));
        gy = std::min(a.grid - 1, std::max(0, gy));
        const std::size_t idx = static_cast<std::size_t>(gy * a.grid + gx);
        // collision: the larger-area target keeps the cell
        if (a.cls[idx] >= 0 && a.box[idx].area() >= box.area()) continue;
        a.cls[idx] = cls;
        a.box[idx] = box;
    }
    return a;
}

// ---------------------------------------------------------------------------
// Loss

template <typename T>
struct LossBreakdownT {
    TensorT<T> total; // taped scalar
    double box_loss = 0, obj_loss = 0, cls_loss = 0, total_value = 0;
};

using LossBreakdown = LossBreakdownT<float>;

inline constexpr double kBoxWeight = 0.05;
inline constexpr double kObjWeight = 1.0;
inline constexpr double kClsWeight = 0.5;

template <typename T>
LossBreakdownT<T> compute_loss(const TensorT<T>& raw,
                               const std::vector<GridAssignment>& targets,
                               const ModelConfig& cfg) {
    const int s = cfg.grid(), c = cfg.num_classes, ch = 5 + c;
    if (raw.rank() != 4 || raw.dim(0) != static_cast<int>(targets.size()) ||
        raw.dim(1) != ch || raw.dim(2) != s || raw.dim(3) != s)
        throw ShapeError("compute_loss: raw/targets shape mismatch");
    const int n = raw.dim(0);
    const std::size_t cells = static_cast<std::size_t>(s) * s;
    const auto flat = [&](int img, int chan, std::size_t cell) {
        return (static_cast<std::size_t>(img) * ch + static_cast<std::size_t>(chan)) * cells +
               cell;
    };

    // objectness: BCE over every cell
    auto obj_logits = slice_channels(raw, 4, 5);
    std::vector<T> obj_t(static_cast<std::size_t>(n) * cells, T(0));
    std::vector<T> obj_m(static_cast<std::size_t>(n) * cells, T(1));
    for (int img = 0; img < n; ++img)
        for (std::size_t cell = 0; cell < cells; ++cell)
            if (targets[static_cast<std::size_t>(img)].cls[cell] >= 0)
                obj_t[static_cast<std::size_t>(img) * cells + cell] = T(1);
    auto obj = bce_with_logits_masked(obj_logits, obj_t, obj_m);

    // gather assigned cells (image-major, row-major in the grid)
    std::vector<std::size_t> ix, iy, iw, ihh;
    std::vector<std::size_t> icls;
    std::vector<T> cls_t;
    std::vector<T> gx0, gy0, gcx, gcy, gw, gh;
    for (int img = 0; img < n; ++img)
        for (std::size_t cell = 0; cell < cells; ++cell) {
            const int cls = targets[static_cast<std::size_t>(img)].cls[cell];
            if (cls < 0) continue;
            ix.push_back(flat(img, 0, cell));
            iy.push_back(flat(img, 1, cell));
            iw.push_back(flat(img, 2, cell));
            ihh.push_back(flat(img, 3, cell));
            for (int k = 0; k < c; ++k) {
                icls.push_back(flat(img, 5 + k, cell));
                cls_t.push_back(k == cls ? T(1) : T(0));
            }
            const auto& b = targets[static_cast<std::size_t>(img)].box[cell];
            gx0.push_back(static_cast<T>(cell % static_cast<std::size_t>(s)));
            gy0.push_back(static_cast<T>(cell / static_cast<std::size_t>(s)));
            gcx.push_back(static_cast<T>((b.x1 + b.x2) / 2));
            gcy.push_back(static_cast<T>((b.y1 + b.y2) / 2));
            gw.push_back(static_cast<T>(b.width()));
            gh.push_back(static_cast<T>(b.height()));
        }

    LossBreakdownT<T> out;
    TensorT<T> cls_term = TensorT<T>::scalar(0);
    TensorT<T> box_term = TensorT<T>::scalar(0);
    if (!ix.empty()) {
        auto cls_logits = gather(raw, icls);
        std::vector<T> cls_m(cls_t.size(), T(1));
        cls_term = bce_with_logits_masked(cls_logits, cls_t, cls_m);

        const int m = static_cast<int>(ix.size());
        auto cons = [&](const std::vector<T>& v) {
            TensorT<T> t({m});
            *t.data = v;
            return t;
        };
        const T stride = static_cast<T>(cfg.stride());
        auto sx = activate(gather(raw, ix), Activation::sigmoid);
        auto sy = activate(gather(raw, iy), Activation::sigmoid);
        auto sw = activate(gather(raw, iw), Activation::sigmoid);
        auto sh = activate(gather(raw, ihh), Activation::sigmoid);
        auto bx = scale(add_scalar(scale(sx, T(2)), T(-0.5)) + cons(gx0), stride);
        auto by = scale(add_scalar(scale(sy, T(2)), T(-0.5)) + cons(gy0), stride);
        auto bw = scale(sw * sw, static_cast<T>(4 * cfg.anchor_w));
        auto bh = scale(sh * sh, static_cast<T>(4 * cfg.anchor_h));

        auto x1 = bx - scale(bw, T(0.5)), x2 = bx + scale(bw, T(0.5));
        auto y1 = by - scale(bh, T(0.5)), y2 = by + scale(bh, T(0.5));
        auto tgx = cons(gcx), tgy = cons(gcy), tgw = cons(gw), tgh = cons(gh);
        auto gx1 = tgx - scale(tgw, T(0.5)), gx2 = tgx + scale(tgw, T(0.5));
        auto gy1 = tgy - scale(tgh, T(0.5)), gy2 = tgy + scale(tgh, T(0.5));

        auto zero = cons(std::vector<T>(static_cast<std::size_t>(m), T(0)));
        auto iw_t = tmax(tmin(x2, gx2) - tmax(x1, gx1), zero);
        auto ih_t = tmax(tmin(y2, gy2) - tmax(y1, gy1), zero);
        auto inter = iw_t * ih_t;
        auto uni = add_scalar(bw * bh + tgw * tgh - inter, T(1e-9));
        auto iou_t = inter / uni;

        auto rho2 = (bx - tgx) * (bx - tgx) + (by - tgy) * (by - tgy);
        auto cw = tmax(x2, gx2) - tmin(x1, gx1);
        auto chh = tmax(y2, gy2) - tmin(y1, gy1);
        auto c2 = add_scalar(cw * cw + chh * chh, T(1e-9));

        constexpr double pi = 3.14159265358979323846;
        auto dth = tatan(tgw / tgh) - tatan(bw / bh);
        auto v = scale(dth * dth, static_cast<T>(4.0 / (pi * pi)));
        auto alpha = v / add_scalar(add_scalar(scale(iou_t, T(-1)), T(1)) + v, T(1e-9));
        auto ciou = iou_t - rho2 / c2 - alpha * v;
        box_term = mean(add_scalar(scale(ciou, T(-1)), T(1)));
    }

    out.total = scale(box_term, static_cast<T>(kBoxWeight)) +
                scale(obj, static_cast<T>(kObjWeight)) +
                scale(cls_term, static_cast<T>(kClsWeight));
    out.box_loss = static_cast<double>(box_term.item());
    out.obj_loss = static_cast<double>(obj.item());
    out.cls_loss = static_cast<double>(cls_term.item());
    out.total_value = static_cast<double>(out.total.item());
    return out;
}

// ---------------------------------------------------------------------------
// NMS

inline std::vector<Detection> nms(const std::vector<Detection>& dets, double iou_thresh = 0.45,
                                  double conf_thresh = 0.25) {
    std::vector<int> order;
    for (std::size_t i = 0; i < dets.size(); ++i)
        if (dets[i].score >= conf_thresh) order.push_back(static_cast<int>(i));
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        const auto& da = dets[static_cast<std::size_t>(a)];
        const auto& db = dets[static_cast<std::size_t>(b)];
        if (da.score != db.score) return da.score > db.score;
        return da.class_id < db.class_id; // then input order via stability
    });
    std::vector<Detection> kept;
    for (int i : order) {
        const auto& d = dets[static_cast<std::size_t>(i)];
        bool suppressed = false;
        for (const auto& k : kept)
            if (k.class_id == d.class_id && iou(k.box, d.box) > iou_thresh) {
                suppressed = true;
                break;
            }
        if (!suppressed) kept.push_back(d);
    }
    return kept;
}

// ---------------------------------------------------------------------------
// Training and evaluation

struct TrainLogRow {
    int epoch = 0;
    double box_loss = 0, obj_loss = 0, cls_loss = 0, total = 0;
};

// Intensities arrive in [0,1]; recentering to roughly zero mean / unit
// variance keeps the fan-in initialization well conditioned.
inline constexpr double kInputMean = 0.2;
inline constexpr double kInputScale = 0.25;

template <typename T>
TensorT<T> batch_to_tensor(const std::vector<const LabeledImage*>& batch) {
    const int n = static_cast<int>(batch.size());
    const int h = batch[0]->pixels.h, w = batch[0]->pixels.w;
    TensorT<T> x({n, 1, h, w});
    T* p = x.ptr();
    for (int i = 0; i < n; ++i)
        for (std::size_t j = 0; j < batch[static_cast<std::size_t>(i)]->pixels.pix.size(); ++j)
            p[static_cast<std::size_t>(i) * static_cast<std::size_t>(h * w) + j] = static_cast<T>(
                (batch[static_cast<std::size_t>(i)]->pixels.pix[j] - kInputMean) / kInputScale);
    return x;
}

// Plain SGD with momentum 0.9 over shuffled mini-batches. Deterministic
// given the seed; a non-finite loss aborts with the epoch/batch named.
template <typename T>
std::vector<TrainLogRow> train(DetectorModelT<T>& model, const std::vector<LabeledImage>& data,
                               int epochs, double lr, int batch_size, std::uint64_t seed) {
    if (data.empty()) throw ValueError("train: empty dataset");
    std::vector<TensorT<T>*> params;
    model.params(params);
    for (auto* p : params) p->requires_grad = true;
    std::vector<std::vector<T>> velocity(params.size());
    for (std::size_t i = 0; i < params.size(); ++i)
        velocity[i].assign(params[i]->numel(), T(0));

    std::vector<int> order(data.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    Rng rng(seed);

    std::vector<TrainLogRow> log;
    for (int epoch = 0; epoch < epochs; ++epoch) {
        rng.shuffle(order.begin(), order.end());
        TrainLogRow row;
        row.epoch = epoch;
        int batches = 0;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(batch_size)) {
            const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(batch_size));
            std::vector<const LabeledImage*> batch;
            std::vector<GridAssignment> targets;
            for (std::size_t k = start; k < end; ++k) {
                const auto& li = data[static_cast<std::size_t>(order[k])];
                batch.push_back(&li);
                targets.push_back(assign_targets(li.boxes, model.cfg));
            }
            auto x = batch_to_tensor<T>(batch);

            Tape<T> tape;
            auto raw = model.forward(x);
            auto loss = compute_loss(raw, targets, model.cfg);
            if (!std::isfinite(loss.total_value))
                throw DivergenceError("train: non-finite loss at epoch " +
                                      std::to_string(epoch) + " batch " +
                                      std::to_string(batches));
            for (auto* p : params) p->zero_grad();
            tape.backward(loss.total);
            for (std::size_t i = 0; i < params.size(); ++i) {
                const T* g = params[i]->grad_ptr();
                T* w = params[i]->ptr();
                for (std::size_t j = 0; j < params[i]->numel(); ++j) {
                    velocity[i][j] = T(0.9) * velocity[i][j] + g[j];
                    w[j] -= static_cast<T>(lr) * velocity[i][j];
                }
            }
            row.box_loss += loss.box_loss;
            row.obj_loss += loss.obj_loss;
            row.cls_loss += loss.cls_loss;
            row.total += loss.total_value;
            ++batches;
        }
        row.box_loss /= batches;
        row.obj_loss /= batches;
        row.cls_loss /= batches;
        row.total /= batches;
        log.push_back(row);
    }
    return log;
}

// Runs the frozen model over a split and scores it. The low confidence
// floor keeps the PR curve dense for AP; NMS IoU matches prediction.
template <typename T>
EvalReport evaluate_model(DetectorModelT<T>& model, const std::vector<LabeledImage>& data,
                          double conf_thresh = 0.001, double iou_thresh = 0.45) {
    std::vector<Detection> all_dets;
    std::vector<GroundTruth> all_gts;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto& li = data[i];
        auto x = batch_to_tensor<T>({&li});
        auto raw = model.forward(x);
        auto per_image = decode(raw, model.cfg);
        for (auto d : nms(per_image[0], iou_thresh, conf_thresh)) {
            d.image_id = static_cast<int>(i);
            all_dets.push_back(d);
        }
        for (const auto& [cls, box] : li.boxes)
            all_gts.push_back({static_cast<int>(i), cls, box});
    }
    return evaluate(all_dets, all_gts);
}

} // namespace dcap
