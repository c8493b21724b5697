// Command-line surface: synth / train / eval / predict / gradcheck / bench /
// ablate. Exit codes: 0 ok, 2 config error, 3 IO error, 4 divergence,
// 5 evaluation error.

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>

#include "dcap/detector.hpp"
#include "dcap/gradcheck.hpp"
#include "dcap/runconfig.hpp"
#include "dcap/serialize.hpp"

namespace fs = std::filesystem;
using namespace dcap;

namespace {

double now_ms() {
    return std::chrono::duration<double, std::milli>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

std::vector<LabeledImage> load_split_corpus(const std::string& data_dir,
                                            const std::string& split) {
    return load_corpus(data_dir, read_split_file(data_dir, split));
}

void write_eval_csv(const std::string& path, const EvalReport& r) {
    std::ofstream f(path);
    if (!f) throw IoError("cannot write " + path);
    char buf[160];
    std::snprintf(buf, sizeof buf, "precision,recall,map50,map50_95,mean_iou\n%.6f,%.6f,%.6f,%.6f,%.6f\n",
                  r.precision, r.recall, r.map50, r.map50_95, r.mean_iou);
    f << buf;
}

void print_eval_table(const EvalReport& r) {
    std::printf("%-10s %-10s %-10s %-10s %-10s\n", "precision", "recall", "map50", "map50_95",
                "mean_iou");
    std::printf("%-10.4f %-10.4f %-10.4f %-10.4f %-10.4f\n", r.precision, r.recall, r.map50,
                r.map50_95, r.mean_iou);
}

int cmd_synth(const RunConfig& cfg, const std::string& out_dir) {
    auto ids = synth_generate(cfg.synth, out_dir);
    write_split_files(out_dir, split_dataset(ids, cfg.synth.seed));
    std::printf("wrote %zu images under %s\n", ids.size(), out_dir.c_str());
    return 0;
}

int cmd_train(const RunConfig& cfg, const std::string& data_dir, const std::string& out_dir) {
    auto data = load_split_corpus(data_dir, "train");
    DetectorModel model(cfg.model);
    auto log = train(model, data, cfg.epochs, cfg.lr, cfg.batch_size, cfg.model.seed);

    fs::create_directories(out_dir);
    std::ofstream logf(fs::path(out_dir) / "train_log.csv");
    logf << "epoch,box_loss,obj_loss,cls_loss,total\n";
    char buf[160];
    for (const auto& row : log) {
        std::snprintf(buf, sizeof buf, "%d,%.6f,%.6f,%.6f,%.6f\n", row.epoch, row.box_loss,
                      row.obj_loss, row.cls_loss, row.total);
        logf << buf;
    }
    std::vector<Tensor*> params;
    model.params(params);
    std::vector<const Tensor*> cparams(params.begin(), params.end());
    save_checkpoint((fs::path(out_dir) / "model.ckpt").string(), cfg.hash(), cparams);
    std::printf("trained %d epochs; final loss %.6f; checkpoint at %s/model.ckpt\n", cfg.epochs,
                log.empty() ? 0.0 : log.back().total, out_dir.c_str());
    return 0;
}

DetectorModel load_model(const RunConfig& cfg, const std::string& out_dir) {
    DetectorModel model(cfg.model);
    std::vector<Tensor*> params;
    model.params(params);
    load_checkpoint((fs::path(out_dir) / "model.ckpt").string(), cfg.hash(), params);
    return model;
}

int cmd_eval(const RunConfig& cfg, const std::string& data_dir, const std::string& split,
             const std::string& out_dir) {
    auto data = load_split_corpus(data_dir, split);
    if (data.empty()) throw EvalError("eval: split '" + split + "' is empty");
    auto model = load_model(cfg, out_dir);
    auto report = evaluate_model(model, data);
    print_eval_table(report);
    write_eval_csv((fs::path(out_dir) / ("eval_" + split + ".csv")).string(), report);
    return 0;
}

int cmd_predict(const RunConfig& cfg, const std::string& data_dir, const std::string& split,
                const std::string& out_dir) {
    auto ids = read_split_file(data_dir, split);
    auto data = load_corpus(data_dir, ids);
    auto model = load_model(cfg, out_dir);
    const fs::path pred_dir = fs::path(out_dir) / "pred";
    fs::create_directories(pred_dir);
    char buf[200];
    for (std::size_t i = 0; i < data.size(); ++i) {
        auto x = batch_to_tensor<float>({&data[i]});
        auto dets = nms(decode(model.forward(x), cfg.model)[0]);
        std::ofstream f(pred_dir / (ids[i] + ".txt"));
        for (const auto& d : dets) {
            std::snprintf(buf, sizeof buf, "%d %.6f %.6f %.6f %.6f %.6f\n", d.class_id, d.score,
                          d.box.x1, d.box.y1, d.box.x2, d.box.y2);
            f << buf;
        }
    }
    std::printf("predictions for %zu images under %s\n", data.size(), pred_dir.string().c_str());
    return 0;
}

int cmd_gradcheck() {
    // DCAP_GRADCHECK_CORRUPT=<item> inflates that item's error, for testing
    // that a broken gradient actually fails the gate.
    const char* corrupt = std::getenv("DCAP_GRADCHECK_CORRUPT");
    Rng rng(101);
    auto rand_t = [&](std::vector<int> shape) {
        TensorT<double> t(std::move(shape));
        for (auto& v : *t.data) v = rng.uniform(-1, 1);
        return t;
    };

    struct Item {
        std::string name;
        double err;
        double tol;
    };
    std::vector<Item> items;
    auto run = [&](const std::string& name, double tol, const std::function<double()>& f) {
        double e = f();
        if (corrupt && name == corrupt) e += 1.0;
        items.push_back({name, e, tol});
    };

    {
        auto x = rand_t({1, 2, 6, 6});
        ConvBlockT<double> b(2, 3, 3, 2, rng);
        run("conv_block", 1e-4, [&] { return gradcheck([&] { return sum(b.forward(x)); }, x); });
    }
    {
        auto x = rand_t({1, 2, 8, 8});
        MDRCBlockT<double> b(2, 2, {2, 3}, 1, rng);
        run("mdrc", 1e-4, [&] { return gradcheck([&] { return sum(b.forward(x)); }, x); });
    }
    {
        auto x = rand_t({1, 4, 4, 4});
        SEAttentionT<double> b(4, rng);
        run("se_attention", 1e-4, [&] { return gradcheck([&] { return sum(b.forward(x)); }, x); });
    }
    {
        auto x = rand_t({1, 4, 6, 6});
        AaSPBlockT<double> b(4, 4, rng);
        run("aasp", 1e-4, [&] { return gradcheck([&] { return sum(b.forward(x)); }, x); });
    }
    {
        auto x = rand_t({1, 2, 5, 5});
        SSCABlockT<double> b(2, rng);
        run("ssca", 1e-4, [&] { return gradcheck([&] { return sum(b.forward(x)); }, x); });
    }
    {
        auto x = rand_t({1, 4, 6, 6});
        SPPFBlockT<double> b(4, 4, rng);
        run("sppf", 1e-4, [&] { return gradcheck([&] { return sum(b.forward(x)); }, x); });
    }
    {
        auto x = rand_t({1, 2, 6, 6});
        C3BlockT<double> b(2, 2, 1, false, {2, 3}, rng);
        run("c3", 1e-4, [&] { return gradcheck([&] { return sum(b.forward(x)); }, x); });
    }
    {
        ModelConfig cfg;
        cfg.variant = "dcap";
        cfg.channels = {2, 4, 4};
        cfg.image_size = 16;
        cfg.anchor_w = cfg.anchor_h = 8;
        cfg.seed = 5;
        DetectorModelT<double> model(cfg);
        auto x = rand_t({1, 1, 16, 16});
        auto a = assign_targets({{0, {2, 2, 9, 10}}}, cfg);
        run("full_model_loss", 1e-3, [&] {
            return gradcheck([&] { return compute_loss(model.forward(x), {a}, cfg).total; }, x);
        });
    }

    bool ok = true;
    std::string first_bad;
    for (const auto& it : items) {
        const bool pass = it.err <= it.tol;
        if (!pass && first_bad.empty()) first_bad = it.name;
        ok &= pass;
        std::printf("%-18s max rel err %.3e  (tol %.0e)  %s\n", it.name.c_str(), it.err, it.tol,
                    pass ? "pass" : "FAIL");
    }
    if (!ok) std::fprintf(stderr, "gradcheck failed: %s\n", first_bad.c_str());
    return ok ? 0 : 1;
}

int cmd_bench() {
    Rng rng(103);
    auto rand_t = [&](std::vector<int> shape) {
        Tensor t(std::move(shape));
        for (auto& v : *t.data) v = static_cast<float>(rng.uniform(-1, 1));
        return t;
    };
    auto median_ms = [&](const std::function<void()>& f) {
        std::vector<double> times;
        for (int i = 0; i < 5; ++i) {
            const double t0 = now_ms();
            f();
            times.push_back(now_ms() - t0);
        }
        std::sort(times.begin(), times.end());
        return times[2];
    };

    // numerical agreement between conv paths on random shapes
    for (int trial = 0; trial < 5; ++trial) {
        const int cin = static_cast<int>(rng.uniform_int(1, 4));
        const int cout = static_cast<int>(rng.uniform_int(1, 4));
        const int hw = static_cast<int>(rng.uniform_int(6, 14));
        const int d = static_cast<int>(rng.uniform_int(1, 2));
        auto x = rand_t({1, cin, hw, hw});
        auto p = make_conv<float>(cin, cout, 3, 1, d, d, rng);
        const auto g = conv_geometry(x, p);
        Tensor a({g.n, g.cout, g.ho, g.wo}), b(a.shape);
        detail::conv2d_forward_im2col(x.ptr(), p.weight.ptr(), p.bias.ptr(), g, a.ptr());
        detail::conv2d_forward_direct(x.ptr(), p.weight.ptr(), p.bias.ptr(), g, b.ptr());
        float worst = 0;
        for (std::size_t i = 0; i < a.numel(); ++i)
            worst = std::max(worst, std::abs((*a.data)[i] - (*b.data)[i]));
        if (worst > 1e-5f) {
            std::fprintf(stderr, "bench: conv paths disagree by %g\n", worst);
            return 1;
        }
    }
    std::printf("conv paths agree (<= 1e-5) on 5 random shapes\n\n");

    std::printf("%-28s %12s %12s\n", "pair", "a (ms)", "b (ms)");
    {
        auto x = rand_t({1, 16, 64, 64});
        auto p = make_conv<float>(16, 16, 3, 1, 1, 1, rng);
        const auto g = conv_geometry(x, p);
        Tensor y({g.n, g.cout, g.ho, g.wo});
        const double ta = median_ms(
            [&] { detail::conv2d_forward_direct(x.ptr(), p.weight.ptr(), p.bias.ptr(), g, y.ptr()); });
        const double tb = median_ms(
            [&] { detail::conv2d_forward_im2col(x.ptr(), p.weight.ptr(), p.bias.ptr(), g, y.ptr()); });
        std::printf("%-28s %12.3f %12.3f\n", "conv direct vs im2col", ta, tb);
    }
    {
        auto x = rand_t({1, 16, 32, 32});
        ConvBlock conv(16, 16, 3, 1, rng);
        MDRCBlock mdrc(16, 16, {2, 3}, 1, rng);
        const double ta = median_ms([&] { conv.forward(x); });
        const double tb = median_ms([&] { mdrc.forward(x); });
        std::printf("%-28s %12.3f %12.3f\n", "plain conv vs mdrc", ta, tb);
    }
    {
        auto x = rand_t({1, 16, 32, 32});
        SPPFBlock sppf(16, 16, rng);
        AaSPBlock aasp(16, 16, rng);
        const double ta = median_ms([&] { sppf.forward(x); });
        const double tb = median_ms([&] { aasp.forward(x); });
        std::printf("%-28s %12.3f %12.3f\n", "sppf vs aasp", ta, tb);
    }
    return 0;
}

int cmd_ablate(const RunConfig& cfg, const std::string& data_dir, const std::string& out_dir,
               int seeds) {
    struct Row {
        std::string name;
        ModelConfig model;
    };
    std::vector<Row> grid;
    auto variant = [&](const std::string& name, const std::string& v,
                       const std::vector<int>& dil, const std::string& placement) {
        ModelConfig m = cfg.model;
        m.variant = v;
        m.dilations = dil;
        m.mdrc_placement = placement;
        grid.push_back({name, m});
    };
    variant("base", "base", cfg.model.dilations, "conv_layers");
    variant("mdrc_conv_d23", "mdrc", {2, 3}, "conv_layers");
    variant("mdrc_c3_d23", "mdrc", {2, 3}, "c3_layers");
    variant("mdrc_conv_d2", "mdrc", {2}, "conv_layers");
    variant("dcap", "dcap", cfg.model.dilations, cfg.model.mdrc_placement);
    variant("mdrc_ssca", "mdrc_ssca", cfg.model.dilations, cfg.model.mdrc_placement);
    variant("spp", "spp", cfg.model.dilations, cfg.model.mdrc_placement);

    auto train_data = load_split_corpus(data_dir, "train");
    auto val_data = load_split_corpus(data_dir, "val");
    if (val_data.empty()) throw EvalError("ablate: empty val split");

    fs::create_directories(out_dir);
    std::ofstream csv(fs::path(out_dir) / "ablate.csv");
    csv << "name,precision,recall,map50,map50_95,mean_iou";
    if (seeds >= 2) csv << ",precision_std,recall_std,map50_std,map50_95_std,mean_iou_std";
    csv << "\n";

    if (seeds >= 2)
        std::printf("%-15s %-16s %-16s %-16s %-16s %-16s\n", "name", "precision", "recall",
                    "map50", "map50_95", "mean_iou");
    else
        std::printf("%-15s %-10s %-10s %-10s %-10s %-10s\n", "name", "precision", "recall",
                    "map50", "map50_95", "mean_iou");

    char buf[320];
    for (const auto& row : grid) {
        std::vector<EvalReport> reports;
        for (int s = 0; s < seeds; ++s) {
            ModelConfig m = row.model;
            m.seed = cfg.model.seed + static_cast<std::uint64_t>(s);
            DetectorModel model(m);
            train(model, train_data, cfg.epochs, cfg.lr, cfg.batch_size, m.seed);
            reports.push_back(evaluate_model(model, val_data));
        }
        if (seeds >= 2) {
            auto agg = aggregate_runs(reports);
            std::printf("%-15s %6.4f±%-8.4f %6.4f±%-8.4f %6.4f±%-8.4f %6.4f±%-8.4f %6.4f±%-8.4f\n",
                        row.name.c_str(), agg.precision.mean, agg.precision.stddev,
                        agg.recall.mean, agg.recall.stddev, agg.map50.mean, agg.map50.stddev,
                        agg.map50_95.mean, agg.map50_95.stddev, agg.mean_iou.mean,
                        agg.mean_iou.stddev);
            std::snprintf(buf, sizeof buf,
                          "%s,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f\n",
                          row.name.c_str(), agg.precision.mean, agg.recall.mean, agg.map50.mean,
                          agg.map50_95.mean, agg.mean_iou.mean, agg.precision.stddev,
                          agg.recall.stddev, agg.map50.stddev, agg.map50_95.stddev,
                          agg.mean_iou.stddev);
        } else {
            const auto& r = reports[0];
            std::printf("%-15s %-10.4f %-10.4f %-10.4f %-10.4f %-10.4f\n", row.name.c_str(),
                        r.precision, r.recall, r.map50, r.map50_95, r.mean_iou);
            std::snprintf(buf, sizeof buf, "%s,%.6f,%.6f,%.6f,%.6f,%.6f\n", row.name.c_str(),
                          r.precision, r.recall, r.map50, r.map50_95, r.mean_iou);
        }
        csv << buf;
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"single-band grid detector toolkit"};
    app.require_subcommand(1);

    std::string config_path, data_dir, out_dir = "out", split = "val";
    int seeds = 3;

    auto add_common = [&](CLI::App* sub, bool needs_config, bool needs_data) {
        auto* c = sub->add_option("--config", config_path, "run configuration file");
        if (needs_config) c->required();
        auto* d = sub->add_option("--data", data_dir, "corpus directory");
        if (needs_data) d->required();
        sub->add_option("--out", out_dir, "output directory");
    };

    auto* synth = app.add_subcommand("synth", "generate a synthetic corpus with splits");
    add_common(synth, true, false);
    auto* trainc = app.add_subcommand("train", "train a detector");
    add_common(trainc, true, true);
    auto* evalc = app.add_subcommand("eval", "evaluate a checkpoint on a split");
    add_common(evalc, true, true);
    evalc->add_option("--split", split, "train|val|test");
    auto* predict = app.add_subcommand("predict", "write per-image detections");
    add_common(predict, true, true);
    predict->add_option("--split", split, "train|val|test");
    auto* gradcheckc = app.add_subcommand("gradcheck", "finite-difference gradient suite");
    auto* bench = app.add_subcommand("bench", "timing and cross-path equality checks");
    auto* ablate = app.add_subcommand("ablate", "train/eval the variant grid");
    add_common(ablate, true, true);
    ablate->add_option("--seeds", seeds, "seeds per variant");

    CLI11_PARSE(app, argc, argv);

    try {
        RunConfig cfg;
        if (!config_path.empty()) cfg = RunConfig::parse_file(config_path);
        if (synth->parsed()) return cmd_synth(cfg, out_dir);
        if (trainc->parsed()) return cmd_train(cfg, data_dir, out_dir);
        if (evalc->parsed()) return cmd_eval(cfg, data_dir, split, out_dir);
        if (predict->parsed()) return cmd_predict(cfg, data_dir, split, out_dir);
        if (gradcheckc->parsed()) return cmd_gradcheck();
        if (bench->parsed()) return cmd_bench();
        if (ablate->parsed()) return cmd_ablate(cfg, data_dir, out_dir, seeds);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const IoError& e) {
        std::fprintf(stderr, "io error: %s\n", e.what());
        return 3;
    } catch (const DivergenceError& e) {
        std::fprintf(stderr, "divergence: %s\n", e.what());
        return 4;
    } catch (const EvalError& e) {
        std::fprintf(stderr, "eval error: %s\n", e.what());
        return 5;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
