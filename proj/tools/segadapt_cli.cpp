// Command-line front end. Everything goes through the public C API.

#include <cstdio>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "segadapt.h"

namespace {

struct ConfigHandle {
    sga_config* cfg = nullptr;
    ~ConfigHandle() { sga_config_free(cfg); }
};

int die(const char* what) {
    std::fprintf(stderr, "error: %s: %s\n", what, sga_last_error());
    return 1;
}

struct CommonOpts {
    std::string config_path;
    std::vector<std::string> sets;
    std::string seed;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
    cmd->add_option("--config", opts.config_path, "run configuration file (key = value lines)");
    cmd->add_option("--set", opts.sets, "override a config key, e.g. --set adapt.K=4")
        ->take_all();
    cmd->add_option("--seed", opts.seed, "override the master seed");
}

// Builds the config handle from file + overrides; returns nonzero on error.
int build_config(const CommonOpts& opts, ConfigHandle& handle) {
    sga_status st = opts.config_path.empty() ? sga_config_create(&handle.cfg)
                                             : sga_config_load(opts.config_path.c_str(), &handle.cfg);
    if (st != SGA_OK) return die("config");
    for (const auto& kv : opts.sets) {
        size_t eq = kv.find('=');
        if (eq == std::string::npos) {
            std::fprintf(stderr, "error: --set expects key=value, got '%s'\n", kv.c_str());
            return 1;
        }
        if (sga_config_set(handle.cfg, kv.substr(0, eq).c_str(), kv.substr(eq + 1).c_str()) != SGA_OK)
            return die("config");
    }
    if (!opts.seed.empty() && sga_config_set(handle.cfg, "seed", opts.seed.c_str()) != SGA_OK)
        return die("config");
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{std::string("segadapt ") + sga_version() +
                 " - online test-time adaptation for toy semantic segmentation"};
    app.require_subcommand(1);

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "generate source/target dataset splits");
    CommonOpts gen_opts;
    std::string gen_out;
    add_common(gen, gen_opts);
    gen->add_option("--out", gen_out, "output directory")->required();

    // pretrain
    auto* pre = app.add_subcommand("pretrain", "source-domain pretraining");
    CommonOpts pre_opts;
    std::string pre_data, pre_out, pre_from;
    bool pre_no_tf = false;
    add_common(pre, pre_opts);
    pre->add_option("--data", pre_data, "dataset root (contains source-train/)")->required();
    pre->add_option("--out", pre_out, "output directory")->required();
    pre->add_option("--from", pre_from, "resume from an existing checkpoint");
    pre->add_flag("--no-transformer", pre_no_tf, "train the single-head baseline");

    // adapt
    auto* ad = app.add_subcommand("adapt", "online adaptation over a target stream");
    CommonOpts ad_opts;
    std::string ad_ckpt, ad_stream, ad_out, ad_method, ad_heads, ad_metric, ad_k;
    add_common(ad, ad_opts);
    ad->add_option("--checkpoint", ad_ckpt, "pretrained checkpoint")->required();
    ad->add_option("--stream", ad_stream, "target stream dataset directory")->required();
    ad->add_option("--out", ad_out, "output run directory")->required();
    ad->add_option("--method", ad_method, "adaptation method (adapt.method)");
    ad->add_option("--heads", ad_heads, "update/inference heads, e.g. US");
    ad->add_option("--metric", ad_metric, "consistency discrepancy metric");
    ad->add_option("--K", ad_k, "transforms per family per step");

    // sweep
    auto* sw = app.add_subcommand("sweep", "comparison grids (heads, K, metric, lambda, layers, tap)");
    CommonOpts sw_opts;
    std::string sw_kind, sw_ckpt, sw_data, sw_stream, sw_out;
    add_common(sw, sw_opts);
    sw->add_option("--kind", sw_kind, "one of heads|K|metric|lambda|layers|tap")->required();
    sw->add_option("--checkpoint", sw_ckpt, "checkpoint (heads/K/metric kinds)");
    sw->add_option("--data", sw_data, "dataset root (lambda/layers/tap kinds)");
    sw->add_option("--stream", sw_stream, "target stream dataset directory");
    sw->add_option("--out", sw_out, "output directory")->required();

    // report
    auto* rp = app.add_subcommand("report", "regenerate CSV/SVG from stored run traces");
    std::vector<std::string> rp_runs;
    std::string rp_out;
    rp->add_option("--run", rp_runs, "run directory (repeatable)")->required()->take_all();
    rp->add_option("--out", rp_out, "overlay output directory (default: first run)");

    CLI11_PARSE(app, argc, argv);

    if (gen->parsed()) {
        ConfigHandle h;
        if (int rc = build_config(gen_opts, h)) return rc;
        if (sga_gen_data(h.cfg, gen_out.c_str()) != SGA_OK) return die("gen-data");
        std::printf("datasets written to %s\n", gen_out.c_str());
    } else if (pre->parsed()) {
        ConfigHandle h;
        if (int rc = build_config(pre_opts, h)) return rc;
        if (pre_no_tf && sga_config_set(h.cfg, "transformer.enabled", "false") != SGA_OK)
            return die("config");
        if (sga_pretrain(h.cfg, pre_data.c_str(), pre_out.c_str(),
                         pre_from.empty() ? nullptr : pre_from.c_str()) != SGA_OK)
            return die("pretrain");
        std::printf("checkpoint written to %s/checkpoint.bin\n", pre_out.c_str());
    } else if (ad->parsed()) {
        ConfigHandle h;
        if (int rc = build_config(ad_opts, h)) return rc;
        if (!ad_method.empty() && sga_config_set(h.cfg, "adapt.method", ad_method.c_str()) != SGA_OK)
            return die("config");
        if (!ad_heads.empty() && sga_config_set(h.cfg, "adapt.heads", ad_heads.c_str()) != SGA_OK)
            return die("config");
        if (!ad_metric.empty() && sga_config_set(h.cfg, "adapt.metric", ad_metric.c_str()) != SGA_OK)
            return die("config");
        if (!ad_k.empty() && sga_config_set(h.cfg, "adapt.K", ad_k.c_str()) != SGA_OK)
            return die("config");
        if (sga_adapt(h.cfg, ad_ckpt.c_str(), ad_stream.c_str(), ad_out.c_str()) != SGA_OK)
            return die("adapt");
        double miou = 0;
        if (sga_run_final_miou(ad_out.c_str(), &miou) != SGA_OK) return die("adapt");
        std::printf("final mIoU %.6f (run dir %s)\n", miou, ad_out.c_str());
    } else if (sw->parsed()) {
        ConfigHandle h;
        if (int rc = build_config(sw_opts, h)) return rc;
        if (sga_sweep(h.cfg, sw_kind.c_str(), sw_ckpt.empty() ? nullptr : sw_ckpt.c_str(),
                      sw_data.empty() ? nullptr : sw_data.c_str(),
                      sw_stream.empty() ? nullptr : sw_stream.c_str(), sw_out.c_str()) != SGA_OK)
            return die("sweep");
        std::printf("sweep results written to %s\n", sw_out.c_str());
    } else if (rp->parsed()) {
        std::vector<const char*> dirs;
        for (const auto& d : rp_runs) dirs.push_back(d.c_str());
        if (sga_report(dirs.data(), dirs.size(), rp_out.empty() ? nullptr : rp_out.c_str()) != SGA_OK)
            return die("report");
        std::printf("reports regenerated (%zu run%s)\n", dirs.size(), dirs.size() == 1 ? "" : "s");
    }
    return 0;
}
