#include "segadapt/engine.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <sstream>

#include "segadapt/checkpoint.hpp"
#include "segadapt/errors.hpp"
#include "segadapt/losses.hpp"

namespace fs = std::filesystem;

namespace sga {

namespace {

std::string fmtf(float v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.9g", static_cast<double>(v));
    return buf;
}

double now_sec() {
    return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
}

void write_status(const std::string& dir, const std::string& status, const std::string& extra = "") {
    if (dir.empty()) return;
    fs::create_directories(dir);
    write_text_file((fs::path(dir) / "manifest.txt").string(), "status " + status + "\n" + extra);
}

int log_level() {
    const char* env = std::getenv("SEGADAPT_LOG");
    if (!env) return 1;
    std::string v = env;
    if (v == "quiet") return 0;
    if (v == "debug") return 2;
    return 1;
}

void log_info(const std::string& msg) {
    if (log_level() >= 1) std::fprintf(stderr, "[segadapt] %s\n", msg.c_str());
}

// Plain SGD with momentum over an explicit parameter set.
struct SgdMomentum {
    double momentum = 0.0;
    std::vector<std::vector<float>> velocity;

    void step(std::vector<ParamRef<float>>& params, double lr) {
        if (velocity.empty())
            for (auto& p : params) velocity.emplace_back(p.tensor->size(), 0.0f);
        for (size_t i = 0; i < params.size(); ++i) {
            Tensor& t = *params[i].tensor;
            if (!t.has_grad()) continue;
            const auto& g = t.grad();
            auto& v = velocity[i];
            auto& d = t.data();
            for (int64_t k = 0; k < t.size(); ++k) {
                v[k] = static_cast<float>(momentum * v[k] + g[k]);
                d[k] -= static_cast<float>(lr * v[k]);
            }
        }
    }
};

Tensor batch_images(const Dataset& ds, const std::vector<int>& idx) {
    const Scene& first = ds.scenes[idx[0]];
    int S = first.image.dim(-1);
    int B = static_cast<int>(idx.size());
    std::vector<float> data(static_cast<size_t>(B) * 3 * S * S);
    for (int b = 0; b < B; ++b) {
        const auto& img = ds.scenes[idx[b]].image.value();
        std::copy(img.begin(), img.end(), data.begin() + static_cast<int64_t>(b) * 3 * S * S);
    }
    return Tensor::leaf({B, 3, S, S}, std::move(data));
}

std::vector<uint8_t> batch_labels(const Dataset& ds, const std::vector<int>& idx) {
    std::vector<uint8_t> out;
    for (int i : idx) {
        const auto& ids = ds.scenes[i].labels.ids;
        out.insert(out.end(), ids.begin(), ids.end());
    }
    return out;
}

// Single-image forward through the chosen head, returning [L,H,W] logits.
Tensor head_logits_1img(FullModelT<float>& m, const Tensor& img3hw, char head, BnMode mode,
                        Rng& drop_rng, std::vector<float>* wsu_out = nullptr,
                        std::vector<uint8_t>* pred_out = nullptr) {
    Tensor x = reshape(img3hw, {1, 3, img3hw.dim(-2), img3hw.dim(-1)});
    Tensor logits;
    if (head == 'U') {
        logits = m.forward(x, mode).logits;
    } else {
        auto out = forward_model(m, x, mode, drop_rng, false);
        logits = out.o_s;
        if (wsu_out && !out.w_su.empty()) *wsu_out = out.w_su[0].value();
    }
    Tensor r = reshape(logits, {logits.shape()[1], logits.shape()[2], logits.shape()[3]});
    if (pred_out) *pred_out = argmax_classes(r);
    return r;
}

float evaluate_miou(FullModelT<float>& m, const Dataset& ds, char head, BnMode mode) {
    ConfusionMatrix cm(m.cfg.classes);
    Rng drop(0);
    for (const auto& scene : ds.scenes) {
        std::vector<uint8_t> pred;
        head_logits_1img(m, scene.image, head, mode, drop, nullptr, &pred);
        cm.accumulate(pred, scene.labels);
    }
    return static_cast<float>(miou(cm).mean);
}

// Transformed view used by the entropy/squares transform-count sweep: one
// photometric and one geometric transform composed per extra sample.
Tensor transformed_view(const Tensor& img, const AugmentConfig& aug, Rng& rng) {
    auto photo = sample_photometric(aug.photometric_strength, rng, aug.photo_kinds);
    auto geom = sample_geometric(aug, img.dim(-2), img.dim(-1), rng);
    return apply_geometric(geom, apply_photometric(photo, img));
}

}  // namespace

AdaptMethod adapt_method_from_string(const std::string& s) {
    if (s == "none") return AdaptMethod::none;
    if (s == "bn-stats") return AdaptMethod::bn_stats;
    if (s == "min-entropy") return AdaptMethod::min_entropy;
    if (s == "max-squares") return AdaptMethod::max_squares;
    if (s == "trans-consistency") return AdaptMethod::trans_consistency;
    if (s == "selective-ce") return AdaptMethod::selective_ce;
    if (s == "special-ce") return AdaptMethod::special_ce;
    throw ConfigError("unknown adaptation method '" + s + "'");
}

std::string adapt_method_to_string(AdaptMethod m) {
    switch (m) {
        case AdaptMethod::none: return "none";
        case AdaptMethod::bn_stats: return "bn-stats";
        case AdaptMethod::min_entropy: return "min-entropy";
        case AdaptMethod::max_squares: return "max-squares";
        case AdaptMethod::trans_consistency: return "trans-consistency";
        case AdaptMethod::selective_ce: return "selective-ce";
        case AdaptMethod::special_ce: return "special-ce";
    }
    return "?";
}

void gen_data(const RunConfig& cfg, const std::string& out_dir) {
    write_status(out_dir, "incomplete");
    uint64_t data_seed = stream_seed(cfg, SeedStream::data);
    log_info("generating source-train (" + cfg.get("data.source_count") + " scenes)");
    generate_split(cfg.source_domain(), cfg.get_i("data.source_count"),
                   derive_seed(data_seed, "source-train"),
                   (fs::path(out_dir) / "source-train").string(), "source");
    log_info("generating source-val (" + cfg.get("data.val_count") + " scenes)");
    generate_split(cfg.source_domain(), cfg.get_i("data.val_count"),
                   derive_seed(data_seed, "source-val"),
                   (fs::path(out_dir) / "source-val").string(), "source");
    log_info("generating target-stream (" + cfg.get("data.target_count") + " scenes)");
    generate_split(cfg.target_domain(), cfg.get_i("data.target_count"),
                   derive_seed(data_seed, "target-stream"),
                   (fs::path(out_dir) / "target-stream").string(), "target");
    cfg.write_resolved((fs::path(out_dir) / "config_resolved.txt").string());
    write_status(out_dir, "complete");
}

PretrainOutcome pretrain(const RunConfig& cfg, const std::string& data_dir,
                         const std::string& out_dir, const std::string& resume_from) {
    double t0 = now_sec();
    write_status(out_dir, "incomplete");
    Dataset train = Dataset::load((fs::path(data_dir) / "source-train").string());
    Dataset val;
    bool has_val = fs::exists(fs::path(data_dir) / "source-val" / "manifest");
    if (has_val) val = Dataset::load((fs::path(data_dir) / "source-val").string());

    FullModelT<float> model;
    int64_t steps_before = 0;
    int64_t steps_total_prev = 0;
    if (resume_from.empty()) {
        model = make_model<float>(cfg.model_config(), stream_seed(cfg, SeedStream::init));
    } else {
        std::map<std::string, std::string> meta;
        model = load_model(resume_from, &meta);
        if (meta.count("train.steps_done")) steps_before = std::stoll(meta.at("train.steps_done"));
        if (meta.count("train.steps_total")) steps_total_prev = std::stoll(meta.at("train.steps_total"));
    }

    const int batch = std::max(1, cfg.get_i("train.batch_size"));
    const int epochs = cfg.get_i("train.epochs");
    const double base_lr = cfg.get_f("train.lr");
    const double power = cfg.get_f("train.poly_power");
    const double lambda = cfg.get_f("loss.lambda");
    const double tau = cfg.get_f("loss.tau");
    const int loss_k = std::max(1, cfg.get_i("loss.K"));
    const std::string unsup_kind = cfg.get("loss.unsup");
    const AugmentConfig aug = cfg.augment_config();

    const int n = static_cast<int>(train.scenes.size());
    const int steps_per_epoch = (n + batch - 1) / batch;
    const int64_t run_steps = static_cast<int64_t>(steps_per_epoch) * epochs;
    const int64_t steps_total = std::max(steps_total_prev, steps_before + run_steps);

    auto params = parameters(model);
    SgdMomentum opt;
    opt.momentum = cfg.get_f("train.momentum");
    Rng drop_rng(stream_seed(cfg, SeedStream::dropout));
    Rng tf_rng(stream_seed(cfg, SeedStream::transforms));
    uint64_t shuffle_seed = derive_seed(stream_seed(cfg, SeedStream::data), "epoch-shuffle");

    PretrainOutcome out;
    std::vector<float> tail;
    int64_t step = steps_before;
    const int64_t start_epoch = steps_before / steps_per_epoch;
    for (int e = 0; e < epochs; ++e) {
        std::vector<int> order(n);
        for (int i = 0; i < n; ++i) order[i] = i;
        Rng sh(derive_seed(shuffle_seed, static_cast<uint64_t>(start_epoch + e)));
        for (int i = n - 1; i > 0; --i) std::swap(order[i], order[sh.uniform_int(i + 1)]);

        for (int s0 = 0; s0 < n; s0 += batch, ++step) {
            std::vector<int> idx(order.begin() + s0, order.begin() + std::min(n, s0 + batch));
            Tensor x = batch_images(train, idx);
            std::vector<uint8_t> y = batch_labels(train, idx);

            double lr = base_lr * std::pow(std::max(0.0, 1.0 - static_cast<double>(step) / steps_total), power);
            for (auto& p : params) p.tensor->zero_grad();

            auto fwd = forward_model(model, x, BnMode::train, drop_rng, true);
            Tensor unsup;
            if (unsup_kind == "min-entropy") {
                unsup = min_entropy(fwd.o_u);
            } else if (unsup_kind == "max-squares") {
                unsup = max_squares(fwd.o_u);
            } else if (unsup_kind == "selective-ce") {
                unsup = selective_ce(softmax(fwd.o_u, 1), tau);
            } else if (unsup_kind == "special-ce") {
                // photometric views of the batch; auxiliary forward keeps
                // running statistics untouched
                std::vector<Tensor> views;
                for (size_t b = 0; b < idx.size(); ++b) {
                    Tensor img = reshape(slice(x, {static_cast<int>(b), 0, 0, 0},
                                               {1, 3, x.dim(-2), x.dim(-1)}),
                                         {3, x.dim(-2), x.dim(-1)});
                    auto spec = sample_photometric(aug.photometric_strength, tf_rng, aug.photo_kinds);
                    views.push_back(reshape(apply_photometric(spec, img), {1, 3, x.dim(-2), x.dim(-1)}));
                }
                Tensor xt = views.size() == 1 ? views[0] : concat(views, 0);
                Tensor o_t = model.forward(xt, BnMode::adapt).logits;
                unsup = special_ce(softmax(fwd.o_u, 1), softmax(o_t, 1));
            } else if (unsup_kind == "trans-consistency") {
                ConsistencySetup setup;
                setup.K = loss_k;
                setup.metric = metric_from_string(cfg.get("adapt.metric"));
                setup.augment = aug;
                Tensor acc;
                for (size_t b = 0; b < idx.size(); ++b) {
                    Tensor img = reshape(slice(x, {static_cast<int>(b), 0, 0, 0},
                                               {1, 3, x.dim(-2), x.dim(-1)}),
                                         {3, x.dim(-2), x.dim(-1)});
                    auto one = consistency_loss(
                        [&](const Tensor& im) {
                            Tensor x1 = reshape(im, {1, 3, im.dim(-2), im.dim(-1)});
                            Tensor o = model.forward(x1, BnMode::adapt).logits;
                            return reshape(o, {o.shape()[1], o.shape()[2], o.shape()[3]});
                        },
                        img, setup, tf_rng);
                    acc = acc.defined() ? add(acc, one) : one;
                }
                unsup = mul_scalar(acc, 1.0f / static_cast<float>(idx.size()));
            }
            Tensor loss = total_pretrain_loss(fwd.o_s, y, lambda, unsup);

            float lv = loss.item();
            if (!std::isfinite(lv)) {
                std::ostringstream os;
                os << "pretraining diverged: non-finite loss at step " << step << " (lr " << lr
                   << "), recent losses:";
                for (float t : tail) os << " " << fmtf(t);
                write_status(out_dir, "failed");
                throw StateError(os.str());
            }
            loss.backward();
            opt.step(params, lr);
            out.step_losses.push_back(lv);
            tail.push_back(lv);
            if (tail.size() > 5) tail.erase(tail.begin());
        }
        if (has_val) {
            float v = evaluate_miou(model, val, model.has_transformer() ? 'S' : 'U', BnMode::eval);
            out.val_miou.push_back(v);
            log_info("epoch " + std::to_string(e + 1) + "/" + std::to_string(epochs) +
                     " val mIoU " + fmtf(v));
        } else {
            log_info("epoch " + std::to_string(e + 1) + "/" + std::to_string(epochs) + " done");
        }
    }
    out.steps_done = static_cast<int>(step);

    fs::create_directories(out_dir);
    std::string ckpt = (fs::path(out_dir) / "checkpoint.bin").string();
    save_model(model, ckpt,
               {{"train.steps_done", std::to_string(step)},
                {"train.steps_total", std::to_string(steps_total)},
                {"train.data_config_hash", train.manifest.config_hash}});
    out.checkpoint_path = ckpt;

    {
        std::ostringstream os;
        os << "step,epoch,lr,loss\n";
        for (size_t i = 0; i < out.step_losses.size(); ++i) {
            int64_t global = steps_before + static_cast<int64_t>(i);
            double lr = base_lr * std::pow(std::max(0.0, 1.0 - static_cast<double>(global) / steps_total), power);
            os << global << "," << global / steps_per_epoch << "," << fmtf(static_cast<float>(lr))
               << "," << fmtf(out.step_losses[i]) << "\n";
        }
        write_text_file((fs::path(out_dir) / "training_loss.csv").string(), os.str());
    }
    if (!out.val_miou.empty()) {
        std::ostringstream os;
        os << "epoch,miou\n";
        for (size_t i = 0; i < out.val_miou.size(); ++i)
            os << start_epoch + static_cast<int64_t>(i) << "," << fmtf(out.val_miou[i]) << "\n";
        write_text_file((fs::path(out_dir) / "val_miou.csv").string(), os.str());
    }
    cfg.write_resolved((fs::path(out_dir) / "config_resolved.txt").string());
    std::ostringstream mf;
    mf << "checkpoint checkpoint.bin\n"
       << "checkpoint_hash " << hash_hex(file_content_hash(ckpt)) << "\n"
       << "steps_done " << step << "\n"
       << "wall_clock_sec " << now_sec() - t0 << "\n";
    write_status(out_dir, "complete", mf.str());
    return out;
}

AdaptRunReport adapt_stream(const RunConfig& cfg, const std::string& checkpoint_path,
                            const std::string& stream_dir, const std::string& out_dir) {
    double t0 = now_sec();
    write_status(out_dir, "incomplete");

    FullModelT<float> model = load_model(checkpoint_path);
    Dataset stream = Dataset::load(stream_dir);
    if (stream.manifest.classes != model.cfg.classes)
        throw ConfigError("stream has " + std::to_string(stream.manifest.classes) +
                          " classes but the checkpoint expects " + std::to_string(model.cfg.classes));

    const AdaptMethod method = adapt_method_from_string(cfg.get("adapt.method"));
    const std::string heads = cfg.get("adapt.heads");
    const char update_head = heads[0];
    const char infer_head = heads[1];
    if (!model.has_transformer() && heads != "UU")
        throw ConfigError("head configuration " + heads +
                          " requires a transformer-equipped checkpoint; only UU is valid here");

    const double lr = cfg.get_f("adapt.lr");
    const int iterations = std::max(1, cfg.get_i("adapt.iterations"));
    const int K = std::max(1, cfg.get_i("adapt.K"));
    const Metric metric = metric_from_string(cfg.get("adapt.metric"));
    const bool continual = cfg.get_b("adapt.continual");
    const double tau = cfg.get_f("loss.tau");
    const AugmentConfig aug = cfg.augment_config();
    const std::string update_group = cfg.get("adapt.update_group");
    const BnMode infer_mode = method == AdaptMethod::none ? BnMode::eval
                              : method == AdaptMethod::bn_stats
                                  ? BnMode::adapt
                                  : (cfg.get("adapt.bn_inference") == "adapt" ? BnMode::adapt
                                                                              : BnMode::eval);
    const bool updates = method != AdaptMethod::none && method != AdaptMethod::bn_stats;

    // Only the update group carries gradients; everything else is frozen.
    auto all_params = parameters(model);
    std::vector<ParamRef<float>> update_params;
    for (auto& p : all_params) {
        bool in_group = update_group == "bn"
                            ? p.group == ParamGroup::bn
                            : (p.group == ParamGroup::bn || p.group == ParamGroup::conv ||
                               p.group == ParamGroup::head);
        p.tensor->node_->requires_grad = updates && in_group;
        if (updates && in_group) update_params.push_back(p);
    }

    // stream order
    int limit = cfg.get_i("adapt.stream_limit");
    int count = static_cast<int>(stream.scenes.size());
    if (limit > 0) count = std::min(count, limit);
    std::vector<int> order(stream.scenes.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    if (cfg.get_b("adapt.shuffle_stream")) {
        Rng so(stream_seed(cfg, SeedStream::stream_order));
        for (int i = static_cast<int>(order.size()) - 1; i > 0; --i)
            std::swap(order[i], order[so.uniform_int(i + 1)]);
    }
    order.resize(count);

    // snapshot for non-continual mode
    std::vector<std::vector<float>> param_snapshot;
    std::vector<std::vector<float>> buffer_snapshot;
    auto bufs = buffers(model);
    if (!continual) {
        for (auto& p : all_params) param_snapshot.push_back(p.tensor->value());
        for (auto& b : bufs) buffer_snapshot.push_back(*b.data);
    }

    uint64_t transforms_seed = stream_seed(cfg, SeedStream::transforms);
    Rng drop_rng(stream_seed(cfg, SeedStream::dropout));  // dropout stays inactive here
    SgdMomentum opt;  // single-sample online updates, no momentum

    AdaptRunReport rep;
    rep.method = adapt_method_to_string(method);
    rep.seed = cfg.master_seed();
    rep.checkpoint_hash = hash_hex(file_content_hash(checkpoint_path));
    rep.classes = model.cfg.classes;
    rep.confusion = ConfusionMatrix(model.cfg.classes);
    rep.run_id = "adapt-" + rep.method + "-" + heads + "-K" + std::to_string(K) + "-" +
                 metric_to_string(metric) + "-s" + std::to_string(rep.seed);
    rep.config_snapshot = cfg.resolved_text();

    for (int pos = 0; pos < count; ++pos) {
        const Scene& scene = stream.scenes[order[pos]];
        const Tensor& img = scene.image;
        Rng trng(derive_seed(transforms_seed, static_cast<uint64_t>(pos)));
        float loss_value = 0.0f;

        if (updates) {
            for (int it = 0; it < iterations; ++it) {
                for (auto& p : update_params) p.tensor->zero_grad();
                auto fwd_head = [&](const Tensor& im) {
                    return head_logits_1img(model, im, update_head, BnMode::adapt, drop_rng);
                };
                Tensor loss;
                switch (method) {
                    case AdaptMethod::min_entropy:
                    case AdaptMethod::max_squares: {
                        // the original's loss averaged with K transformed samples'
                        auto term = [&](const Tensor& im) {
                            Tensor o = fwd_head(im);
                            return method == AdaptMethod::min_entropy ? min_entropy(o) : max_squares(o);
                        };
                        Tensor acc = term(img);
                        for (int k = 0; k < K; ++k)
                            acc = add(acc, term(transformed_view(img, aug, trng)));
                        loss = mul_scalar(acc, 1.0f / static_cast<float>(K + 1));
                        break;
                    }
                    case AdaptMethod::selective_ce:
                        loss = selective_ce(softmax(fwd_head(img), 0), tau);
                        break;
                    case AdaptMethod::special_ce: {
                        auto spec = sample_photometric(aug.photometric_strength, trng, aug.photo_kinds);
                        Tensor p = softmax(fwd_head(img), 0);
                        Tensor pt = softmax(fwd_head(apply_photometric(spec, img)), 0);
                        loss = special_ce(p, pt);
                        break;
                    }
                    case AdaptMethod::trans_consistency: {
                        ConsistencySetup setup{K, metric, aug};
                        loss = consistency_loss(fwd_head, img, setup, trng);
                        break;
                    }
                    default:
                        throw StateError("unexpected adaptation method in update path");
                }
                float lv = loss.item();
                if (it == 0) loss_value = lv;
                if (!std::isfinite(lv)) {
                    rep.skipped.push_back(pos);
                    break;
                }
                loss.backward();
                opt.step(update_params, lr);
            }
        }

        // inference pass on the post-update model
        std::vector<uint8_t> pred;
        std::vector<float> wsu;
        head_logits_1img(model, img, infer_head, infer_mode, drop_rng, &wsu, &pred);
        rep.confusion.accumulate(pred, scene.labels);
        rep.miou_trace.push_back(static_cast<float>(miou(rep.confusion).mean));
        rep.loss_trace.push_back(loss_value);
        if (pos == count - 1) {
            if (!wsu.empty()) rep.last_wsu = wsu;
            rep.last_pred = LabelMap{scene.labels.h, scene.labels.w, pred};
            rep.last_gt = scene.labels;
        }

        if (!continual) {
            for (size_t i = 0; i < all_params.size(); ++i)
                all_params[i].tensor->data() = param_snapshot[i];
            for (size_t i = 0; i < bufs.size(); ++i) *bufs[i].data = buffer_snapshot[i];
        }
    }

    auto iou = miou(rep.confusion);
    rep.final_miou = static_cast<float>(iou.mean);
    rep.per_class_iou.assign(model.cfg.classes, 0.0f);
    rep.iou_defined.assign(model.cfg.classes, 0);
    for (int c = 0; c < model.cfg.classes; ++c) {
        rep.per_class_iou[c] = static_cast<float>(iou.per_class[c]);
        rep.iou_defined[c] = iou.defined[c] ? 1 : 0;
    }
    rep.wall_clock_sec = now_sec() - t0;
    if (!out_dir.empty()) {
        write_run_dir(rep, out_dir);
        // post-run parameter state, for group-freeze inspection and reuse
        save_model(model, (fs::path(out_dir) / "model_final.bin").string(),
                   {{"adapt.method", rep.method}, {"adapt.source_checkpoint", rep.checkpoint_hash}});
    }
    return rep;
}

namespace {

void write_sweep_csv(const std::string& path, const std::string& header,
                     const std::vector<std::string>& rows) {
    std::ostringstream os;
    os << header << "\n";
    for (const auto& r : rows) os << r << "\n";
    write_text_file(path, os.str());
}

std::vector<std::string> split_csv_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) out.push_back(tok);
    return out;
}

}  // namespace

void sweep(const RunConfig& base, const std::string& kind, const std::string& checkpoint_path,
           const std::string& data_dir, const std::string& stream_dir, const std::string& out_dir) {
    write_status(out_dir, "incomplete");
    fs::create_directories(out_dir);
    RunConfig cfg = base;
    if (cfg.get_i("sweep.stream_limit") > 0)
        cfg.set("adapt.stream_limit", cfg.get("sweep.stream_limit"));

    auto need = [&](const std::string& what, const std::string& v) {
        if (v.empty()) throw ConfigError("sweep kind '" + kind + "' needs " + what);
    };

    if (kind == "heads") {
        need("--checkpoint and --stream", checkpoint_path + stream_dir);
        std::vector<std::string> rows;
        std::vector<AdaptRunReport> runs;
        for (const std::string hc : {"UU", "US", "SU", "SS"}) {
            RunConfig c = cfg;
            c.set("adapt.heads", hc);
            auto rep = adapt_stream(c, checkpoint_path, stream_dir,
                                    (fs::path(out_dir) / ("run_" + hc)).string());
            rows.push_back(hc + "," + fmtf(rep.final_miou));
            runs.push_back(std::move(rep));
        }
        write_sweep_csv((fs::path(out_dir) / "heads_sweep.csv").string(), "config,final_miou", rows);
        std::vector<std::string> labels = {"UU", "US", "SU", "SS"};
        std::vector<float> vals;
        for (auto& r : runs) vals.push_back(r.final_miou);
        write_text_file((fs::path(out_dir) / "heads_sweep.svg").string(),
                        svg_bar_chart(labels, vals, "update/inference head configurations", "final mIoU"));
        write_overlay_evolution(runs, (fs::path(out_dir) / "heads_evolution.svg").string());
    } else if (kind == "K") {
        need("--checkpoint and --stream", checkpoint_path + stream_dir);
        const std::vector<std::string> methods = {"min-entropy", "max-squares", "trans-consistency"};
        std::vector<std::string> rows;
        std::vector<Series> series;
        for (const auto& m : methods) {
            Series s{m, {}};
            for (const auto& kstr : split_csv_list(cfg.get("sweep.k_grid"))) {
                RunConfig c = cfg;
                c.set("adapt.method", m);
                c.set("adapt.K", kstr);
                auto rep = adapt_stream(c, checkpoint_path, stream_dir,
                                        (fs::path(out_dir) / ("run_" + m + "_K" + kstr)).string());
                rows.push_back(m + "," + kstr + "," + fmtf(rep.final_miou));
                s.values.push_back(rep.final_miou);
            }
            series.push_back(std::move(s));
        }
        write_sweep_csv((fs::path(out_dir) / "k_sweep.csv").string(), "method,K,final_miou", rows);
        write_text_file((fs::path(out_dir) / "k_sweep.svg").string(),
                        svg_line_chart(series, "transform count sweep", "grid index", "final mIoU"));
    } else if (kind == "metric") {
        need("--checkpoint and --stream", checkpoint_path + stream_dir);
        std::vector<std::string> rows;
        std::vector<std::string> labels;
        std::vector<float> vals;
        for (const std::string m :
             {"l2-logits", "l1-logits", "l2-probs", "l1-probs", "kl-probs"}) {
            RunConfig c = cfg;
            c.set("adapt.method", "trans-consistency");
            c.set("adapt.metric", m);
            auto rep = adapt_stream(c, checkpoint_path, stream_dir,
                                    (fs::path(out_dir) / ("run_" + m)).string());
            rows.push_back(m + "," + fmtf(rep.final_miou));
            labels.push_back(m);
            vals.push_back(rep.final_miou);
        }
        write_sweep_csv((fs::path(out_dir) / "metric_sweep.csv").string(), "metric,final_miou", rows);
        write_text_file((fs::path(out_dir) / "metric_sweep.svg").string(),
                        svg_bar_chart(labels, vals, "consistency discrepancy metrics", "final mIoU"));
    } else if (kind == "lambda" || kind == "layers" || kind == "tap") {
        need("--data and --stream", data_dir + stream_dir);
        RunConfig train_cfg = cfg;
        if (cfg.get_i("sweep.epochs") > 0) train_cfg.set("train.epochs", cfg.get("sweep.epochs"));
        std::vector<std::string> rows;
        std::vector<std::string> labels;
        std::vector<float> vals;
        std::vector<std::pair<std::string, std::string>> cells;
        if (kind == "lambda") {
            for (const auto& v : split_csv_list(cfg.get("sweep.lambda_grid")))
                cells.push_back({"loss.lambda", v});
        } else if (kind == "layers") {
            for (const auto& v : split_csv_list(cfg.get("sweep.layers_grid")))
                cells.push_back({"transformer.layers", v});
        } else {
            for (const std::string v : {"block3", "block4", "logits", "block2", "block1"})
                cells.push_back({"transformer.tap", v});
            cells.push_back({"transformer.enabled", "false"});  // single-head reference
        }
        for (const auto& cell : cells) {
            RunConfig c = train_cfg;
            c.set(cell.first, cell.second);
            std::string tag = cell.first == "transformer.enabled" ? "no-transformer" : cell.second;
            std::string cell_dir = (fs::path(out_dir) / ("pretrain_" + tag)).string();
            auto pt = pretrain(c, data_dir, cell_dir);
            RunConfig eval_cfg = c;
            eval_cfg.set("adapt.method", "none");
            if (cell.first == "transformer.enabled") eval_cfg.set("adapt.heads", "UU");
            auto rep = adapt_stream(eval_cfg, pt.checkpoint_path, stream_dir,
                                    (fs::path(out_dir) / ("run_" + tag)).string());
            rows.push_back(tag + "," + fmtf(rep.final_miou));
            labels.push_back(tag);
            vals.push_back(rep.final_miou);
        }
        write_sweep_csv((fs::path(out_dir) / (kind + "_sweep.csv")).string(), kind + ",final_miou",
                        rows);
        write_text_file((fs::path(out_dir) / (kind + "_sweep.svg")).string(),
                        svg_bar_chart(labels, vals, kind + " sweep (no adaptation)", "final mIoU"));
    } else {
        throw ConfigError("unknown sweep kind '" + kind +
                          "' (expected heads, K, metric, lambda, layers or tap)");
    }
    cfg.write_resolved((fs::path(out_dir) / "config_resolved.txt").string());
    write_status(out_dir, "complete");
}

void regenerate_reports(const std::vector<std::string>& run_dirs, const std::string& overlay_dir) {
    if (run_dirs.empty()) throw ConfigError("report needs at least one run directory");
    std::vector<AdaptRunReport> runs;
    for (const auto& dir : run_dirs) {
        regenerate_run_dir(dir);
        runs.push_back(load_run_dir(dir));
    }
    if (runs.size() > 1) {
        std::string dir = overlay_dir.empty() ? run_dirs[0] : overlay_dir;
        fs::create_directories(dir);
        write_overlay_evolution(runs, (fs::path(dir) / "overlay_evolution.svg").string());
    }
}

}  // namespace sga
