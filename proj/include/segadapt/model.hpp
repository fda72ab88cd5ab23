#pragma once

// Segmentation model: feature extractor (four conv/bn/relu blocks), a 1x1
// prediction head upsampled back to input resolution, and optionally the
// transformer head that turns unsupervised logits into supervised ones.

#include <map>
#include <string>
#include <vector>

#include "segadapt/checkpoint.hpp"
#include "segadapt/errors.hpp"
#include "segadapt/rng.hpp"
#include "segadapt/tensor.hpp"
#include "segadapt/transformer.hpp"

namespace sga {

enum class Tap { block1, block2, block3, block4, logits };

inline Tap tap_from_string(const std::string& s) {
    if (s == "block1") return Tap::block1;
    if (s == "block2") return Tap::block2;
    if (s == "block3") return Tap::block3;
    if (s == "block4") return Tap::block4;
    if (s == "logits") return Tap::logits;
    throw ConfigError("unknown tap '" + s + "'");
}

inline std::string tap_to_string(Tap t) {
    switch (t) {
        case Tap::block1: return "block1";
        case Tap::block2: return "block2";
        case Tap::block3: return "block3";
        case Tap::block4: return "block4";
        case Tap::logits: return "logits";
    }
    return "?";
}

struct ModelConfig {
    int in_channels = 3;
    std::vector<int> channels = {16, 32, 32, 32};  // blocks 2 and 3 downsample x2
    int classes = 5;
    float bn_eps = 1e-5f;
    float bn_momentum = 0.1f;
    bool transformer = true;
    // Keeps the transformer out of the forward path entirely; the supervised
    // head degenerates to the unsupervised one (identity transfer matrix).
    bool identity_transfer = false;
    Tap tap = Tap::block3;
    TransformerOptions tf;
};

inline int tap_channels(const ModelConfig& cfg, Tap tap) {
    switch (tap) {
        case Tap::block1: return cfg.channels[0];
        case Tap::block2: return cfg.channels[1];
        case Tap::block3: return cfg.channels[2];
        case Tap::block4: return cfg.channels[3];
        case Tap::logits: return cfg.classes;
    }
    return 0;
}

template <typename S>
struct ConvBlockT {
    TensorT<S> w;  // [Cout,Cin,3,3], no bias, batch norm follows
    BatchNorm2d<S> bn;
    int stride = 1;
};

template <typename S>
struct TapsT {
    std::vector<TensorT<S>> blocks;  // intermediate features [B,C,h,w]
    TensorT<S> logits;               // o_u, [B,L,H,W]
};

template <typename S>
TensorT<S> select_tap(const TapsT<S>& taps, Tap which) {
    switch (which) {
        case Tap::block1: return taps.blocks.at(0);
        case Tap::block2: return taps.blocks.at(1);
        case Tap::block3: return taps.blocks.at(2);
        case Tap::block4: return taps.blocks.at(3);
        case Tap::logits: return taps.logits;
    }
    throw ConfigError("select_tap: unknown tap");
}

enum class ParamGroup { conv, bn, head, transformer };

inline const char* group_name(ParamGroup g) {
    switch (g) {
        case ParamGroup::conv: return "conv";
        case ParamGroup::bn: return "bn";
        case ParamGroup::head: return "head";
        case ParamGroup::transformer: return "transformer";
    }
    return "?";
}

template <typename S>
struct ParamRef {
    std::string name;
    ParamGroup group;
    TensorT<S>* tensor;
};

template <typename S>
struct BufferRef {
    std::string name;
    std::vector<S>* data;
};

template <typename S>
struct FullModelT {
    ModelConfig cfg;
    std::vector<ConvBlockT<S>> blocks;
    TensorT<S> head_w;  // [L,C,1,1]
    TensorT<S> head_b;  // [L]
    TransformerHeadT<S> tf;

    bool has_transformer() const { return cfg.transformer; }

    TapsT<S> forward(const TensorT<S>& x, BnMode mode) {
        if (x.rank() != 4 || x.shape()[1] != cfg.in_channels)
            throw DimensionError("model forward: expected [B," + std::to_string(cfg.in_channels) +
                                 ",H,W], got " + shape_str(x.shape()));
        int H = x.shape()[2], W = x.shape()[3];
        TapsT<S> taps;
        TensorT<S> h = x;
        for (auto& block : blocks) {
            h = relu(block.bn.forward(conv2d(h, block.w, block.stride, 1), mode));
            taps.blocks.push_back(h);
        }
        TensorT<S> head = conv2d(h, head_w, head_b, 1, 0);
        taps.logits = bilinear_resize(head, H, W);
        return taps;
    }
};

// Per-tensor named init streams: a parameter's initial values depend only on
// (seed, name), so e.g. disabling the transformer leaves backbone init intact.
template <typename S>
FullModelT<S> make_model(const ModelConfig& cfg, uint64_t init_seed) {
    if (cfg.channels.size() != 4) throw ConfigError("model needs exactly 4 block channel counts");
    FullModelT<S> m;
    m.cfg = cfg;
    const int strides[4] = {1, 2, 2, 1};
    int cin = cfg.in_channels;
    for (int i = 0; i < 4; ++i) {
        ConvBlockT<S> b;
        int cout = cfg.channels[i];
        Rng r(derive_seed(init_seed, "seg.block" + std::to_string(i + 1) + ".w"));
        b.w = init_he<S>({cout, cin, 3, 3}, cin * 9, r);
        b.bn.init(cout);
        b.bn.eps = static_cast<S>(cfg.bn_eps);
        b.bn.momentum = static_cast<S>(cfg.bn_momentum);
        b.stride = strides[i];
        m.blocks.push_back(std::move(b));
        cin = cout;
    }
    {
        Rng r(derive_seed(init_seed, "seg.head.w"));
        m.head_w = init_he<S>({cfg.classes, cin, 1, 1}, cin, r);
        m.head_b = TensorT<S>::zeros({cfg.classes}, true);
    }
    if (cfg.transformer)
        m.tf = make_transformer_head<S>(cfg.tf, cfg.classes, tap_channels(cfg, cfg.tap),
                                        derive_seed(init_seed, "tf"));
    return m;
}

template <typename S>
std::vector<ParamRef<S>> parameters(FullModelT<S>& m) {
    std::vector<ParamRef<S>> out;
    for (size_t i = 0; i < m.blocks.size(); ++i) {
        std::string p = "seg.block" + std::to_string(i + 1) + ".";
        out.push_back({p + "w", ParamGroup::conv, &m.blocks[i].w});
        out.push_back({p + "bn.gamma", ParamGroup::bn, &m.blocks[i].bn.gamma});
        out.push_back({p + "bn.beta", ParamGroup::bn, &m.blocks[i].bn.beta});
    }
    out.push_back({"seg.head.w", ParamGroup::head, &m.head_w});
    out.push_back({"seg.head.b", ParamGroup::head, &m.head_b});
    if (m.cfg.transformer) {
        out.push_back({"tf.queries", ParamGroup::transformer, &m.tf.queries});
        out.push_back({"tf.proj_u", ParamGroup::transformer, &m.tf.proj_u});
        if (m.tf.has_in_proj())
            out.push_back({"tf.in_proj", ParamGroup::transformer, &m.tf.in_proj_w});
        for (size_t l = 0; l < m.tf.layers.size(); ++l) {
            std::string p = "tf.layer" + std::to_string(l) + ".";
            auto& layer = m.tf.layers[l];
            out.push_back({p + "wq", ParamGroup::transformer, &layer.wq});
            out.push_back({p + "wk", ParamGroup::transformer, &layer.wk});
            out.push_back({p + "wv", ParamGroup::transformer, &layer.wv});
            out.push_back({p + "wo", ParamGroup::transformer, &layer.wo});
            out.push_back({p + "ln_att.g", ParamGroup::transformer, &layer.ln_att_g});
            out.push_back({p + "ln_att.b", ParamGroup::transformer, &layer.ln_att_b});
            out.push_back({p + "wf1", ParamGroup::transformer, &layer.wf1});
            out.push_back({p + "wf2", ParamGroup::transformer, &layer.wf2});
            out.push_back({p + "ln_f1.g", ParamGroup::transformer, &layer.ln_f1_g});
            out.push_back({p + "ln_f1.b", ParamGroup::transformer, &layer.ln_f1_b});
            out.push_back({p + "ln_f2.g", ParamGroup::transformer, &layer.ln_f2_g});
            out.push_back({p + "ln_f2.b", ParamGroup::transformer, &layer.ln_f2_b});
        }
    }
    return out;
}

template <typename S>
std::vector<BufferRef<S>> buffers(FullModelT<S>& m) {
    std::vector<BufferRef<S>> out;
    for (size_t i = 0; i < m.blocks.size(); ++i) {
        std::string p = "seg.block" + std::to_string(i + 1) + ".bn.";
        out.push_back({p + "running_mean", &m.blocks[i].bn.running_mean});
        out.push_back({p + "running_var", &m.blocks[i].bn.running_var});
    }
    return out;
}

// Everything the model computes in one pass. w_su is per image; o_s aliases
// o_u when the transfer path is disabled.
template <typename S>
struct ModelOutput {
    TapsT<S> taps;
    TensorT<S> o_u;
    std::vector<TensorT<S>> w_su;
    TensorT<S> o_s;
};

template <typename S>
ModelOutput<S> forward_model(FullModelT<S>& m, const TensorT<S>& x, BnMode mode, Rng& dropout_rng,
                             bool dropout_active) {
    ModelOutput<S> out;
    out.taps = m.forward(x, mode);
    out.o_u = out.taps.logits;
    if (!m.cfg.transformer || m.cfg.identity_transfer) {
        out.o_s = out.o_u;
        return out;
    }
    TensorT<S> tap = select_tap(out.taps, m.cfg.tap);
    int B = x.shape()[0];
    int L = m.cfg.classes;
    int Ht = tap.shape()[2], Wt = tap.shape()[3];
    int H = out.o_u.shape()[2], W = out.o_u.shape()[3];
    std::vector<TensorT<S>> per_image;
    per_image.reserve(B);
    for (int b = 0; b < B; ++b) {
        TensorT<S> f = reshape(slice(tap, {b, 0, 0, 0}, {1, tap.shape()[1], Ht, Wt}),
                               {tap.shape()[1], Ht, Wt});
        TensorT<S> w = transfer_matrix(m.tf, f, dropout_rng, dropout_active);
        out.w_su.push_back(w);
        TensorT<S> ou_b = reshape(slice(out.o_u, {b, 0, 0, 0}, {1, L, H, W}), {L, H, W});
        per_image.push_back(reshape(supervised_logits(ou_b, w), {1, L, H, W}));
    }
    out.o_s = B == 1 ? per_image[0] : concat(per_image, 0);
    return out;
}

// Precision conversion for the double shadow used by gradient checks.
template <typename To, typename From>
FullModelT<To> cast_model(FullModelT<From>& m) {
    FullModelT<To> out = make_model<To>(m.cfg, 0);
    auto src = parameters(m);
    auto dst = parameters(out);
    for (size_t i = 0; i < src.size(); ++i)
        *dst[i].tensor = cast_tensor<To>(*src[i].tensor, true);
    auto sb = buffers(m);
    auto db = buffers(out);
    for (size_t i = 0; i < sb.size(); ++i) {
        db[i].data->resize(sb[i].data->size());
        for (size_t k = 0; k < sb[i].data->size(); ++k)
            (*db[i].data)[k] = static_cast<To>((*sb[i].data)[k]);
    }
    for (size_t i = 0; i < m.blocks.size(); ++i)
        out.blocks[i].bn.batches_tracked = m.blocks[i].bn.batches_tracked;
    return out;
}

uint64_t hash_param_group(FullModelT<float>& m, ParamGroup group);

void save_model(FullModelT<float>& m, const std::string& path,
                const std::map<std::string, std::string>& extra_meta = {});
FullModelT<float> load_model(const std::string& path,
                             std::map<std::string, std::string>* extra_meta = nullptr);

}  // namespace sga
