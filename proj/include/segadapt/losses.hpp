#pragma once

// Supervised, unsupervised, baseline and transformation-consistency losses.
// Class logits/probs are [L,H,W] or [B,L,H,W]; labels are flat row-major ids.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "segadapt/augment.hpp"
#include "segadapt/errors.hpp"
#include "segadapt/tensor.hpp"

namespace sga {

enum class Metric { l2_logits, l1_logits, l2_probs, l1_probs, kl_probs };

inline Metric metric_from_string(const std::string& s) {
    if (s == "l2-logits") return Metric::l2_logits;
    if (s == "l1-logits") return Metric::l1_logits;
    if (s == "l2-probs") return Metric::l2_probs;
    if (s == "l1-probs") return Metric::l1_probs;
    if (s == "kl-probs") return Metric::kl_probs;
    throw ConfigError("unknown discrepancy metric '" + s + "'");
}

inline std::string metric_to_string(Metric m) {
    switch (m) {
        case Metric::l2_logits: return "l2-logits";
        case Metric::l1_logits: return "l1-logits";
        case Metric::l2_probs: return "l2-probs";
        case Metric::l1_probs: return "l1-probs";
        case Metric::kl_probs: return "kl-probs";
    }
    return "?";
}

namespace detail {

template <typename S>
int class_axis_of(const TensorT<S>& t, const char* op) {
    if (t.rank() == 3) return 0;
    if (t.rank() == 4) return 1;
    throw DimensionError(std::string(op) + ": expected [L,H,W] or [B,L,H,W], got " + shape_str(t.shape()));
}

template <typename S>
void class_layout(const TensorT<S>& t, const char* op, int64_t& batch, int64_t& classes, int64_t& plane) {
    int ax = class_axis_of(t, op);
    classes = t.shape()[ax];
    if (ax == 0) {
        batch = 1;
        plane = static_cast<int64_t>(t.shape()[1]) * t.shape()[2];
    } else {
        batch = t.shape()[0];
        plane = static_cast<int64_t>(t.shape()[2]) * t.shape()[3];
    }
}

}  // namespace detail

// Per-pixel argmax over the class axis (value level, ties to the lowest id).
template <typename S>
std::vector<uint8_t> argmax_classes(const TensorT<S>& t) {
    int64_t B, L, P;
    detail::class_layout(t, "argmax_classes", B, L, P);
    std::vector<uint8_t> out(B * P);
    const S* v = t.value().data();
    for (int64_t b = 0; b < B; ++b)
        for (int64_t i = 0; i < P; ++i) {
            const S* px = v + (b * L) * P + i;
            int best = 0;
            S bv = px[0];
            for (int64_t l = 1; l < L; ++l) {
                S cv = px[l * P];
                if (cv > bv) {
                    bv = cv;
                    best = static_cast<int>(l);
                }
            }
            out[b * P + i] = static_cast<uint8_t>(best);
        }
    return out;
}

namespace detail {

inline void check_labels(const std::vector<uint8_t>& y, int64_t B, int64_t L, int64_t P, const char* op) {
    if (static_cast<int64_t>(y.size()) != B * P)
        throw DimensionError(std::string(op) + ": label count " + std::to_string(y.size()) +
                             " does not match " + std::to_string(B * P) + " pixels");
    for (uint8_t id : y)
        if (id >= L)
            throw DimensionError(std::string(op) + ": label " + std::to_string(id) +
                                 " out of range for " + std::to_string(L) + " classes");
}

}  // namespace detail

// Mean over pixels of -log p[y], from logits via log-softmax.
template <typename S>
TensorT<S> cross_entropy_logits(const TensorT<S>& logits, const std::vector<uint8_t>& y) {
    int64_t B, L, P;
    detail::class_layout(logits, "cross_entropy", B, L, P);
    detail::check_labels(y, B, L, P, "cross_entropy");
    TensorT<S> lp = log_softmax(logits, logits.rank() == 3 ? 0 : 1);
    S acc = 0;
    const S* v = lp.value().data();
    for (int64_t b = 0; b < B; ++b)
        for (int64_t i = 0; i < P; ++i) acc -= v[(b * L + y[b * P + i]) * P + i];
    S inv = S(1) / static_cast<S>(B * P);
    auto nl = lp.node_;
    return detail::make_op<S>(Shape{}, {acc * inv}, {nl}, [nl, y, B, L, P, inv](Node<S>& nd) {
        accum_ensure(*nl);
        S g = nd.grad[0] * inv;
        for (int64_t b = 0; b < B; ++b)
            for (int64_t i = 0; i < P; ++i)
                nl->grad[(b * L + y[b * P + i]) * P + i] -= g;
    });
}

// Same contract, but on an explicit probability map.
template <typename S>
TensorT<S> cross_entropy_probs(const TensorT<S>& probs, const std::vector<uint8_t>& y) {
    int64_t B, L, P;
    detail::class_layout(probs, "cross_entropy", B, L, P);
    detail::check_labels(y, B, L, P, "cross_entropy");
    constexpr S tiny = static_cast<S>(1e-12);
    S acc = 0;
    const S* v = probs.value().data();
    for (int64_t b = 0; b < B; ++b)
        for (int64_t i = 0; i < P; ++i) acc -= std::log(v[(b * L + y[b * P + i]) * P + i] + tiny);
    S inv = S(1) / static_cast<S>(B * P);
    auto np = probs.node_;
    return detail::make_op<S>(Shape{}, {acc * inv}, {np}, [np, y, B, L, P, inv](Node<S>& nd) {
        accum_ensure(*np);
        S g = nd.grad[0] * inv;
        for (int64_t b = 0; b < B; ++b)
            for (int64_t i = 0; i < P; ++i) {
                int64_t at = (b * L + y[b * P + i]) * P + i;
                np->grad[at] -= g / (np->value[at] + tiny);
            }
    });
}

// Mean pixel entropy of softmax(logits).
template <typename S>
TensorT<S> min_entropy(const TensorT<S>& o_u) {
    int ax = detail::class_axis_of(o_u, "min_entropy");
    TensorT<S> p = softmax(o_u, ax);
    TensorT<S> ent = neg(sum_axis(mul(p, log_(add_scalar(p, static_cast<S>(1e-12)))), ax));
    return mean_all(ent);
}

// -mean over pixels of sum_l p_l^2 / 2; minimizing sharpens predictions.
template <typename S>
TensorT<S> max_squares(const TensorT<S>& o_u) {
    int ax = detail::class_axis_of(o_u, "max_squares");
    TensorT<S> p = softmax(o_u, ax);
    return mul_scalar(mean_all(sum_axis(square(p), ax)), static_cast<S>(-0.5));
}

// Pixels keep their pseudo-label CE only above the (strict) confidence
// threshold; below-threshold pixels contribute zero but stay in the mean.
template <typename S>
TensorT<S> selective_ce(const TensorT<S>& probs, double tau) {
    if (tau <= 0.0 || tau >= 1.0) throw ConfigError("selective_ce: tau must be in (0,1)");
    int64_t B, L, P;
    detail::class_layout(probs, "selective_ce", B, L, P);
    constexpr S tiny = static_cast<S>(1e-12);
    const S* v = probs.value().data();
    auto picks = std::make_shared<std::vector<int64_t>>();
    S acc = 0;
    for (int64_t b = 0; b < B; ++b)
        for (int64_t i = 0; i < P; ++i) {
            const S* px = v + (b * L) * P + i;
            int best = 0;
            S bv = px[0];
            for (int64_t l = 1; l < L; ++l)
                if (px[l * P] > bv) {
                    bv = px[l * P];
                    best = static_cast<int>(l);
                }
            if (static_cast<double>(bv) > tau) {
                int64_t at = (b * L + best) * P + i;
                picks->push_back(at);
                acc -= std::log(v[at] + tiny);
            }
        }
    S inv = S(1) / static_cast<S>(B * P);
    auto np = probs.node_;
    return detail::make_op<S>(Shape{}, {acc * inv}, {np}, [np, picks, inv](Node<S>& nd) {
        accum_ensure(*np);
        S g = nd.grad[0] * inv;
        for (int64_t at : *picks) np->grad[at] -= g / (np->value[at] + tiny);
    });
}

// Agreeing pixels reduce to pseudo-label CE on the transformed view; on
// disagreement every class contributes, downweighted by exp(-(p - p~)^2).
template <typename S>
TensorT<S> special_ce(const TensorT<S>& p, const TensorT<S>& p_tilde) {
    detail::check_same_shape(p.shape(), p_tilde.shape(), "special_ce");
    int64_t B, L, P;
    detail::class_layout(p, "special_ce", B, L, P);
    int ax = detail::class_axis_of(p, "special_ce");
    constexpr S tiny = static_cast<S>(1e-12);

    std::vector<uint8_t> lab_p = argmax_classes(p);
    std::vector<uint8_t> lab_t = argmax_classes(p_tilde);
    std::vector<S> agree(B * P), onehot(p.size(), S(0));
    for (int64_t b = 0; b < B; ++b)
        for (int64_t i = 0; i < P; ++i) {
            bool same = lab_p[b * P + i] == lab_t[b * P + i];
            agree[b * P + i] = same ? S(1) : S(0);
            onehot[(b * L + lab_t[b * P + i]) * P + i] = S(1);
        }
    Shape pixel_shape = p.rank() == 3 ? Shape{p.shape()[1], p.shape()[2]}
                                      : Shape{p.shape()[0], p.shape()[2], p.shape()[3]};
    TensorT<S> agree_mask = TensorT<S>::leaf(pixel_shape, agree);
    TensorT<S> disagree_mask = TensorT<S>::leaf(pixel_shape, [&] {
        std::vector<S> d(agree.size());
        for (size_t i = 0; i < agree.size(); ++i) d[i] = S(1) - agree[i];
        return d;
    }());
    TensorT<S> pick = TensorT<S>::leaf(p.shape(), std::move(onehot));

    TensorT<S> log_pt = log_(add_scalar(p_tilde, tiny));
    TensorT<S> agree_term = neg(sum_axis(mul(pick, log_pt), ax));
    TensorT<S> w = exp_(neg(square(sub(p, p_tilde))));
    TensorT<S> disagree_term = neg(sum_axis(mul(w, log_pt), ax));
    return mean_all(add(mul(agree_mask, agree_term), mul(disagree_mask, disagree_term)));
}

// Mean-reduced discrepancy between two logit tensors. The first argument is
// the reference side (relevant for the directional KL variant).
template <typename S>
TensorT<S> discrepancy(Metric metric, const TensorT<S>& a, const TensorT<S>& b) {
    detail::check_same_shape(a.shape(), b.shape(), "discrepancy");
    switch (metric) {
        case Metric::l2_logits: return mean_all(square(sub(a, b)));
        case Metric::l1_logits: return mean_all(abs_(sub(a, b)));
        case Metric::l2_probs: {
            int ax = detail::class_axis_of(a, "discrepancy");
            return mean_all(square(sub(softmax(a, ax), softmax(b, ax))));
        }
        case Metric::l1_probs: {
            int ax = detail::class_axis_of(a, "discrepancy");
            return mean_all(abs_(sub(softmax(a, ax), softmax(b, ax))));
        }
        case Metric::kl_probs: {
            int ax = detail::class_axis_of(a, "discrepancy");
            TensorT<S> pa = softmax(a, ax);
            return mean_all(sum_axis(mul(pa, sub(log_softmax(a, ax), log_softmax(b, ax))), ax));
        }
    }
    throw ConfigError("discrepancy: unknown metric");
}

struct ConsistencySetup {
    int K = 1;
    Metric metric = Metric::l2_logits;
    AugmentConfig augment;
};

// Photometric-invariance plus geometric-equivariance loss on one image with
// explicit transform specs; the sampling variant below draws K of each.
// `fwd` maps a [3,H,W] image to logits [L,H,W]; gradients flow through every
// forward and through the geometric remap of the reference logits.
template <typename S, typename Fwd>
TensorT<S> consistency_loss_with_specs(Fwd&& fwd, const TensorT<S>& x,
                                       const std::vector<PhotometricSpec>& photo,
                                       const std::vector<GeometricSpec>& geom, Metric metric) {
    if (photo.empty() && geom.empty()) throw ConfigError("consistency loss needs at least one transform");
    TensorT<S> o_u = fwd(x);
    TensorT<S> total;
    if (!photo.empty()) {
        TensorT<S> acc;
        for (const auto& spec : photo) {
            TensorT<S> o_t = fwd(apply_photometric(spec, x));
            TensorT<S> d = discrepancy(metric, o_u, o_t);
            acc = acc.defined() ? add(acc, d) : d;
        }
        total = mul_scalar(acc, S(1) / static_cast<S>(photo.size()));
    }
    if (!geom.empty()) {
        TensorT<S> acc;
        for (const auto& spec : geom) {
            TensorT<S> o_hat = fwd(apply_geometric(spec, x));
            TensorT<S> d = discrepancy(metric, apply_geometric(spec, o_u), o_hat);
            acc = acc.defined() ? add(acc, d) : d;
        }
        TensorT<S> geom_term = mul_scalar(acc, S(1) / static_cast<S>(geom.size()));
        total = total.defined() ? add(total, geom_term) : geom_term;
    }
    return total;
}

template <typename S, typename Fwd>
TensorT<S> consistency_loss(Fwd&& fwd, const TensorT<S>& x, const ConsistencySetup& setup, Rng& rng) {
    if (setup.K < 1) throw ConfigError("consistency loss needs K >= 1");
    if (x.rank() != 3) throw DimensionError("consistency loss expects a [3,H,W] image");
    int H = x.shape()[1], W = x.shape()[2];
    std::vector<PhotometricSpec> photo;
    std::vector<GeometricSpec> geom;
    for (int k = 0; k < setup.K; ++k)
        photo.push_back(sample_photometric(setup.augment.photometric_strength, rng,
                                           setup.augment.photo_kinds));
    for (int k = 0; k < setup.K; ++k)
        geom.push_back(sample_geometric(setup.augment, H, W, rng));
    return consistency_loss_with_specs(fwd, x, photo, geom, setup.metric);
}

// Total pretraining objective: supervised CE plus lambda times an
// unsupervised term (already evaluated by the caller). lambda == 0 or a
// missing term produce the plain supervised loss.
template <typename S>
TensorT<S> total_pretrain_loss(const TensorT<S>& o_s, const std::vector<uint8_t>& y, double lambda,
                               const TensorT<S>& unsup_term = {}) {
    TensorT<S> ce = cross_entropy_logits(o_s, y);
    if (!unsup_term.defined() || lambda == 0.0) return ce;
    return add(ce, mul_scalar(unsup_term, static_cast<S>(lambda)));
}

}  // namespace sga
