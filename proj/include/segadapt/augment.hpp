#pragma once

// Photometric and geometric input transformations. Photometric transforms
// change pixel values only and act on raw image values; geometric transforms
// are index remappings with exact counterparts on logit maps, so they run
// through the differentiable tensor ops (crop2d / rot90 / patch_permute).

#include <string>
#include <vector>

#include "segadapt/errors.hpp"
#include "segadapt/rng.hpp"
#include "segadapt/tensor.hpp"

namespace sga {

enum class PhotoKind { grayscale, jitter, blur };
enum class GeomKind { crop, rotate90, shuffle };

struct PhotometricSpec {
    PhotoKind kind = PhotoKind::jitter;
    // jitter parameters (factor 1 / offset 0 = no-op)
    float brightness = 1.0f;
    float contrast = 1.0f;
    float saturation = 1.0f;
    float hue = 0.0f;  // offset in turns, [-0.5, 0.5]
    // blur parameters
    float sigma = 1.0f;
    int ksize = 5;

    static PhotometricSpec identity() { return PhotometricSpec{}; }
};

struct GeometricSpec {
    GeomKind kind = GeomKind::crop;
    // crop window
    int top = 0, left = 0, height = 0, width = 0;
    // quarter turns, 1..3
    int turns = 1;
    // patch shuffle
    int patch = 0;
    std::vector<int> perm;

    static GeometricSpec identity_crop(int h, int w) {
        GeometricSpec g;
        g.kind = GeomKind::crop;
        g.height = h;
        g.width = w;
        return g;
    }
};

struct AugmentConfig {
    double photometric_strength = 0.75;
    double crop_ratio = 0.5;
    int patch_size = 16;
    std::vector<PhotoKind> photo_kinds = {PhotoKind::grayscale, PhotoKind::jitter, PhotoKind::blur};
    std::vector<GeomKind> geom_kinds = {GeomKind::crop, GeomKind::rotate90, GeomKind::shuffle};
};

inline PhotometricSpec sample_photometric(double strength, Rng& rng,
                                          const std::vector<PhotoKind>& kinds = {
                                              PhotoKind::grayscale, PhotoKind::jitter, PhotoKind::blur}) {
    if (strength < 0.0 || strength > 1.0)
        throw ConfigError("photometric strength must be in [0,1], got " + std::to_string(strength));
    if (kinds.empty()) throw ConfigError("no photometric kinds enabled");
    PhotometricSpec s;
    s.kind = kinds[rng.uniform_int(static_cast<int>(kinds.size()))];
    switch (s.kind) {
        case PhotoKind::grayscale:
            break;
        case PhotoKind::jitter: {
            double lo = std::max(0.0, 1.0 - strength);
            double hi = 1.0 + strength;
            s.brightness = static_cast<float>(rng.uniform(lo, hi));
            s.contrast = static_cast<float>(rng.uniform(lo, hi));
            s.saturation = static_cast<float>(rng.uniform(lo, hi));
            double h = std::min(strength, 0.5);  // hue offsets beyond a half turn wrap
            s.hue = static_cast<float>(rng.uniform(-h, h));
            break;
        }
        case PhotoKind::blur:
            s.sigma = static_cast<float>(rng.uniform(0.1, 2.0));
            s.ksize = 5;
            break;
    }
    return s;
}

inline GeometricSpec sample_geometric(const AugmentConfig& cfg, int H, int W, Rng& rng) {
    if (cfg.crop_ratio <= 0.0 || cfg.crop_ratio > 1.0)
        throw ConfigError("crop ratio must be in (0,1], got " + std::to_string(cfg.crop_ratio));
    if (cfg.geom_kinds.empty()) throw ConfigError("no geometric kinds enabled");
    GeometricSpec g;
    g.kind = cfg.geom_kinds[rng.uniform_int(static_cast<int>(cfg.geom_kinds.size()))];
    switch (g.kind) {
        case GeomKind::crop: {
            g.height = std::max(1, static_cast<int>(std::lround(cfg.crop_ratio * H)));
            g.width = std::max(1, static_cast<int>(std::lround(cfg.crop_ratio * W)));
            g.top = rng.uniform_int(H - g.height + 1);
            g.left = rng.uniform_int(W - g.width + 1);
            break;
        }
        case GeomKind::rotate90:
            g.turns = 1 + rng.uniform_int(3);
            break;
        case GeomKind::shuffle: {
            if (cfg.patch_size <= 0 || H % cfg.patch_size != 0 || W % cfg.patch_size != 0)
                throw ConfigError("patch size " + std::to_string(cfg.patch_size) +
                                  " does not divide image size " + std::to_string(H) + "x" + std::to_string(W));
            g.patch = cfg.patch_size;
            int cells = (H / g.patch) * (W / g.patch);
            g.perm.resize(cells);
            for (int i = 0; i < cells; ++i) g.perm[i] = i;
            for (int i = cells - 1; i > 0; --i)
                std::swap(g.perm[i], g.perm[rng.uniform_int(i + 1)]);
            break;
        }
    }
    return g;
}

// Applies the same index remapping to any tensor whose trailing two axes are
// spatial: images, logit stacks, label maps. Differentiable.
template <typename S>
TensorT<S> apply_geometric(const GeometricSpec& g, const TensorT<S>& t) {
    if (t.rank() < 2) throw DimensionError("apply_geometric: rank >= 2 required, got " + shape_str(t.shape()));
    int H = t.dim(-2), W = t.dim(-1);
    switch (g.kind) {
        case GeomKind::crop:
            if (g.top < 0 || g.left < 0 || g.top + g.height > H || g.left + g.width > W)
                throw DimensionError("apply_geometric: crop window exceeds " + shape_str(t.shape()));
            return crop2d(t, g.top, g.left, g.height, g.width);
        case GeomKind::rotate90:
            return rot90(t, g.turns);
        case GeomKind::shuffle:
            return patch_permute(t, g.patch, g.perm);
    }
    throw ConfigError("apply_geometric: unknown kind");
}

namespace detail {

template <typename S>
void rgb_to_hsv(S r, S g, S b, S& h, S& s, S& v) {
    S mx = std::max(r, std::max(g, b));
    S mn = std::min(r, std::min(g, b));
    S d = mx - mn;
    v = mx;
    s = mx > S(0) ? d / mx : S(0);
    if (d == S(0)) {
        h = S(0);
        return;
    }
    if (mx == r) h = (g - b) / d;
    else if (mx == g) h = S(2) + (b - r) / d;
    else h = S(4) + (r - g) / d;
    h /= S(6);
    if (h < S(0)) h += S(1);
}

template <typename S>
void hsv_to_rgb(S h, S s, S v, S& r, S& g, S& b) {
    if (s <= S(0)) {
        r = g = b = v;
        return;
    }
    h = h - std::floor(h);
    S f6 = h * S(6);
    int i = static_cast<int>(f6) % 6;
    S f = f6 - std::floor(f6);
    S p = v * (S(1) - s);
    S q = v * (S(1) - s * f);
    S t = v * (S(1) - s * (S(1) - f));
    switch (i) {
        case 0: r = v; g = t; b = p; break;
        case 1: r = q; g = v; b = p; break;
        case 2: r = p; g = v; b = t; break;
        case 3: r = p; g = q; b = v; break;
        case 4: r = t; g = p; b = v; break;
        default: r = v; g = p; b = q; break;
    }
}

template <typename S>
void clamp01(std::vector<S>& d) {
    for (auto& x : d) x = std::min(S(1), std::max(S(0), x));
}

// Luminance weights for grayscale and saturation blending.
template <typename S>
S luma(S r, S g, S b) {
    return S(0.299) * r + S(0.587) * g + S(0.114) * b;
}

template <typename S>
void gaussian_blur(std::vector<S>& img, int H, int W, double sigma, int ksize) {
    int half = ksize / 2;
    std::vector<S> kernel(static_cast<size_t>(ksize) * ksize);
    double sum = 0;
    for (int i = 0; i < ksize; ++i)
        for (int j = 0; j < ksize; ++j) {
            double di = i - half, dj = j - half;
            double v = std::exp(-(di * di + dj * dj) / (2.0 * sigma * sigma));
            kernel[i * ksize + j] = static_cast<S>(v);
            sum += v;
        }
    for (auto& k : kernel) k = static_cast<S>(k / sum);

    std::vector<S> out(static_cast<size_t>(H) * W);
    for (int c = 0; c < 3; ++c) {
        const S* in = img.data() + static_cast<int64_t>(c) * H * W;
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) {
                S acc = 0;
                for (int i = 0; i < ksize; ++i) {
                    int yy = std::min(H - 1, std::max(0, y + i - half));
                    for (int j = 0; j < ksize; ++j) {
                        int xx = std::min(W - 1, std::max(0, x + j - half));
                        acc += kernel[i * ksize + j] * in[yy * W + xx];
                    }
                }
                out[y * W + x] = acc;
            }
        std::copy(out.begin(), out.end(), img.begin() + static_cast<int64_t>(c) * H * W);
    }
}

}  // namespace detail

// Value-level transform of a [3,H,W] image in [0,1]. Returns a fresh leaf;
// gradients never flow through the photometric path. Factor-1 / offset-0
// jitter components are skipped so the identity spec is bit-exact.
template <typename S>
TensorT<S> apply_photometric(const PhotometricSpec& spec, const TensorT<S>& x) {
    if (x.rank() != 3 || x.shape()[0] != 3)
        throw DimensionError("apply_photometric: expected [3,H,W] image, got " + shape_str(x.shape()));
    int H = x.shape()[1], W = x.shape()[2];
    int64_t plane = static_cast<int64_t>(H) * W;
    std::vector<S> d = x.value();

    switch (spec.kind) {
        case PhotoKind::grayscale: {
            for (int64_t i = 0; i < plane; ++i) {
                S y = detail::luma(d[i], d[plane + i], d[2 * plane + i]);
                d[i] = d[plane + i] = d[2 * plane + i] = y;
            }
            break;
        }
        case PhotoKind::jitter: {
            if (spec.brightness != 1.0f) {
                for (auto& v : d) v *= static_cast<S>(spec.brightness);
                detail::clamp01(d);
            }
            if (spec.contrast != 1.0f) {
                S m = 0;
                for (int64_t i = 0; i < plane; ++i)
                    m += detail::luma(d[i], d[plane + i], d[2 * plane + i]);
                m /= static_cast<S>(plane);
                S f = static_cast<S>(spec.contrast);
                for (auto& v : d) v = m + f * (v - m);
                detail::clamp01(d);
            }
            if (spec.saturation != 1.0f) {
                S f = static_cast<S>(spec.saturation);
                for (int64_t i = 0; i < plane; ++i) {
                    S y = detail::luma(d[i], d[plane + i], d[2 * plane + i]);
                    d[i] = y + f * (d[i] - y);
                    d[plane + i] = y + f * (d[plane + i] - y);
                    d[2 * plane + i] = y + f * (d[2 * plane + i] - y);
                }
                detail::clamp01(d);
            }
            if (spec.hue != 0.0f) {
                for (int64_t i = 0; i < plane; ++i) {
                    S h, s, v;
                    detail::rgb_to_hsv(d[i], d[plane + i], d[2 * plane + i], h, s, v);
                    h += static_cast<S>(spec.hue);
                    detail::hsv_to_rgb(h, s, v, d[i], d[plane + i], d[2 * plane + i]);
                }
                detail::clamp01(d);
            }
            break;
        }
        case PhotoKind::blur:
            detail::gaussian_blur(d, H, W, spec.sigma, spec.ksize);
            detail::clamp01(d);
            break;
    }
    return TensorT<S>::leaf(x.shape(), std::move(d));
}

inline PhotoKind photo_kind_from_string(const std::string& s) {
    if (s == "grayscale") return PhotoKind::grayscale;
    if (s == "jitter") return PhotoKind::jitter;
    if (s == "blur") return PhotoKind::blur;
    throw ConfigError("unknown photometric kind '" + s + "'");
}

inline GeomKind geom_kind_from_string(const std::string& s) {
    if (s == "crop") return GeomKind::crop;
    if (s == "rotate90") return GeomKind::rotate90;
    if (s == "shuffle") return GeomKind::shuffle;
    throw ConfigError("unknown geometric kind '" + s + "'");
}

}  // namespace sga
