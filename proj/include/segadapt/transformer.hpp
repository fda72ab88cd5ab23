#pragma once

// Transformer decoder head: learnable class queries cross-attend over feature
// tokens; the decoder output is projected to an LxL row-stochastic transfer
// matrix that maps the unsupervised logits onto the supervised ones.

#include <cmath>
#include <string>
#include <vector>

#include "segadapt/errors.hpp"
#include "segadapt/rng.hpp"
#include "segadapt/tensor.hpp"

namespace sga {

// Single-head cross attention. Softmax runs over the token axis; logits are
// unscaled by default, matching the module definition here, with 1/sqrt(C')
// scaling available as an option.
template <typename S>
TensorT<S> attention(const TensorT<S>& q, const TensorT<S>& k, const TensorT<S>& v,
                     bool scaled = false) {
    if (q.rank() != 2 || k.rank() != 2 || v.rank() != 2 || q.shape()[1] != k.shape()[1] ||
        k.shape() != v.shape())
        throw DimensionError("attention: incompatible shapes q=" + shape_str(q.shape()) +
                             " k=" + shape_str(k.shape()) + " v=" + shape_str(v.shape()));
    if (k.shape()[0] == 0) throw DimensionError("attention: no tokens");
    TensorT<S> scores = matmul(q, transpose2d(k));
    if (scaled) scores = mul_scalar(scores, static_cast<S>(1.0 / std::sqrt(static_cast<double>(q.shape()[1]))));
    return matmul(softmax(scores, 1), v);
}

// Flattens a [C,H,W] feature map into row-major spatial tokens [H*W, C],
// optionally adding a fixed 2-D sinusoidal positional encoding.
template <typename S>
TensorT<S> tokenize(const TensorT<S>& f, bool positional_encoding = false) {
    if (f.rank() != 3) throw DimensionError("tokenize: expected [C,H,W], got " + shape_str(f.shape()));
    int C = f.shape()[0], H = f.shape()[1], W = f.shape()[2];
    TensorT<S> tokens = reshape(permute(f, {1, 2, 0}), {H * W, C});
    if (!positional_encoding) return tokens;

    std::vector<S> pe(static_cast<size_t>(H) * W * C, S(0));
    int half = C / 2;
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            S* row = pe.data() + (static_cast<size_t>(y) * W + x) * C;
            for (int i = 0; i + 1 < half; i += 2) {
                double div = std::pow(10000.0, static_cast<double>(i) / half);
                row[i] = static_cast<S>(std::sin(y / div));
                row[i + 1] = static_cast<S>(std::cos(y / div));
            }
            for (int i = 0; i + 1 < half; i += 2) {
                double div = std::pow(10000.0, static_cast<double>(i) / half);
                row[half + i] = static_cast<S>(std::sin(x / div));
                row[half + i + 1] = static_cast<S>(std::cos(x / div));
            }
        }
    return add(tokens, TensorT<S>::leaf({H * W, C}, std::move(pe)));
}

template <typename S>
struct TransformerLayer {
    TensorT<S> wq, wk, wv, wo;              // [C,C]
    TensorT<S> ln_att_g, ln_att_b;          // [C]
    TensorT<S> wf1, wf2;                    // [C,C]
    TensorT<S> ln_f1_g, ln_f1_b;
    TensorT<S> ln_f2_g, ln_f2_b;
};

struct TransformerOptions {
    int layers = 1;
    int heads = 4;
    int dim = 32;
    double dropout = 0.1;
    bool positional_encoding = false;
    bool attention_scaling = false;
    // Row orientation of the transfer matrix softmax: true normalizes over the
    // unsupervised-class axis (rows convex, the default reading), false over
    // the supervised axis.
    bool softmax_over_unsup = true;
};

template <typename S>
struct TransformerHeadT {
    TransformerOptions opt;
    int classes = 0;
    int tap_channels = 0;
    TensorT<S> queries;    // [L,C]
    TensorT<S> proj_u;     // [C,L]
    TensorT<S> in_proj_w;  // [C,tap_channels,1,1] when tap channels differ from C
    std::vector<TransformerLayer<S>> layers;

    bool has_in_proj() const { return tap_channels != opt.dim; }
};

template <typename S>
TransformerHeadT<S> make_transformer_head(const TransformerOptions& opt, int classes,
                                          int tap_channels, uint64_t init_seed) {
    if (opt.dim % opt.heads != 0)
        throw ConfigError("transformer dim " + std::to_string(opt.dim) +
                          " is not divisible by head count " + std::to_string(opt.heads));
    if (opt.layers < 1) throw ConfigError("transformer needs at least one layer");
    TransformerHeadT<S> h;
    h.opt = opt;
    h.classes = classes;
    h.tap_channels = tap_channels;
    const int C = opt.dim;

    auto stream = [&](const std::string& name) { return Rng(derive_seed(init_seed, "tf." + name)); };
    {
        Rng r = stream("queries");
        h.queries = init_normal<S>({classes, C}, 0.02, r);
    }
    {
        Rng r = stream("proj_u");
        h.proj_u = init_xavier_uniform<S>({C, classes}, C, classes, r);
    }
    if (h.has_in_proj()) {
        Rng r = stream("in_proj");
        h.in_proj_w = init_he<S>({C, tap_channels, 1, 1}, tap_channels, r);
    }
    for (int l = 0; l < opt.layers; ++l) {
        TransformerLayer<S> layer;
        auto mat = [&](const std::string& nm) {
            Rng r = stream("layer" + std::to_string(l) + "." + nm);
            return init_xavier_uniform<S>({C, C}, C, C, r);
        };
        layer.wq = mat("wq");
        layer.wk = mat("wk");
        layer.wv = mat("wv");
        layer.wo = mat("wo");
        layer.wf1 = mat("wf1");
        layer.wf2 = mat("wf2");
        layer.ln_att_g = TensorT<S>::full({C}, S(1), true);
        layer.ln_att_b = TensorT<S>::zeros({C}, true);
        layer.ln_f1_g = TensorT<S>::full({C}, S(1), true);
        layer.ln_f1_b = TensorT<S>::zeros({C}, true);
        layer.ln_f2_g = TensorT<S>::full({C}, S(1), true);
        layer.ln_f2_b = TensorT<S>::zeros({C}, true);
        h.layers.push_back(std::move(layer));
    }
    return h;
}

// Multi-head cross attention with residual and layer norm:
// LN(x + DO(concat_heads(Att_m(x Wq, t Wk, t Wv)) Wo)).
template <typename S>
TensorT<S> mhatt_layer(const TransformerLayer<S>& layer, const TensorT<S>& x,
                       const TensorT<S>& tokens, int heads, bool scaled, double dropout_rate,
                       Rng& rng, bool dropout_active) {
    const int C = x.shape()[1];
    const int split = C / heads;
    TensorT<S> q = matmul(x, layer.wq);
    TensorT<S> k = matmul(tokens, layer.wk);
    TensorT<S> v = matmul(tokens, layer.wv);
    std::vector<TensorT<S>> outs;
    outs.reserve(heads);
    for (int m = 0; m < heads; ++m) {
        auto qm = slice(q, {0, m * split}, {q.shape()[0], split});
        auto km = slice(k, {0, m * split}, {k.shape()[0], split});
        auto vm = slice(v, {0, m * split}, {v.shape()[0], split});
        outs.push_back(attention(qm, km, vm, scaled));
    }
    TensorT<S> merged = heads == 1 ? outs[0] : concat(outs, 1);
    TensorT<S> projected = dropout(matmul(merged, layer.wo), dropout_rate, rng, dropout_active);
    return layernorm(add(x, projected), layer.ln_att_g, layer.ln_att_b, static_cast<S>(1e-5));
}

// Two feed-forward sub-layers, each LN(h + DO(ReLU(h Wf))).
template <typename S>
TensorT<S> ffn_layer(const TransformerLayer<S>& layer, const TensorT<S>& h, double dropout_rate,
                     Rng& rng, bool dropout_active) {
    TensorT<S> a = dropout(relu(matmul(h, layer.wf1)), dropout_rate, rng, dropout_active);
    TensorT<S> h1 = layernorm(add(h, a), layer.ln_f1_g, layer.ln_f1_b, static_cast<S>(1e-5));
    TensorT<S> b = dropout(relu(matmul(h1, layer.wf2)), dropout_rate, rng, dropout_active);
    return layernorm(add(h1, b), layer.ln_f2_g, layer.ln_f2_b, static_cast<S>(1e-5));
}

// Decoder stack over one image's tap feature [C_tap,H',W'] -> transfer matrix
// [L,L]. Rows are convex combinations (softmax over the configured axis).
template <typename S>
TensorT<S> transfer_matrix(TransformerHeadT<S>& head, const TensorT<S>& tap_feature, Rng& rng,
                           bool dropout_active) {
    if (tap_feature.rank() != 3 || tap_feature.shape()[0] != head.tap_channels)
        throw DimensionError("transfer_matrix: tap feature " + shape_str(tap_feature.shape()) +
                             " does not match configured channels " + std::to_string(head.tap_channels));
    TensorT<S> f = tap_feature;
    if (head.has_in_proj()) {
        int H = f.shape()[1], W = f.shape()[2];
        f = reshape(conv2d(reshape(f, {1, head.tap_channels, H, W}), head.in_proj_w, 1, 0),
                    {head.opt.dim, H, W});
    }
    TensorT<S> tokens = tokenize(f, head.opt.positional_encoding);
    TensorT<S> h = head.queries;
    for (auto& layer : head.layers) {
        h = mhatt_layer(layer, h, tokens, head.opt.heads, head.opt.attention_scaling,
                        head.opt.dropout, rng, dropout_active);
        h = ffn_layer(layer, h, head.opt.dropout, rng, dropout_active);
    }
    TensorT<S> logits = matmul(h, head.proj_u);
    return softmax(logits, head.opt.softmax_over_unsup ? 1 : 0);
}

// o_s[s,h,w] = sum_u o_u[u,h,w] * W[s,u]; accepts [L,H,W].
template <typename S>
TensorT<S> supervised_logits(const TensorT<S>& o_u, const TensorT<S>& w_su) {
    if (w_su.rank() != 2 || w_su.shape()[0] != w_su.shape()[1])
        throw DimensionError("supervised_logits: transfer matrix must be square, got " +
                             shape_str(w_su.shape()));
    if (o_u.rank() != 3 || o_u.shape()[0] != w_su.shape()[0])
        throw DimensionError("supervised_logits: class mismatch between logits " +
                             shape_str(o_u.shape()) + " and transfer matrix " + shape_str(w_su.shape()));
    int L = o_u.shape()[0], H = o_u.shape()[1], W = o_u.shape()[2];
    return reshape(matmul(w_su, reshape(o_u, {L, H * W})), {L, H, W});
}

}  // namespace sga
