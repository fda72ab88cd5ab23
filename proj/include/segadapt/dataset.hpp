#pragma once

// Procedural source/target segmentation domains: simple shapes on a textured
// background, labels rasterized exactly, appearance shift applied after
// rasterization so label maps are domain-invariant.

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "segadapt/tensor.hpp"

namespace sga {

struct LabelMap {
    int h = 0, w = 0;
    std::vector<uint8_t> ids;

    uint8_t at(int y, int x) const { return ids[static_cast<size_t>(y) * w + x]; }
};

struct Scene {
    Tensor image;     // [3,H,W] in [0,1]
    LabelMap labels;  // [H,W] class ids
};

// Classes: 0 background, 1 circle, 2 square, 3 triangle, 4 stripe bar.
constexpr int kClasses = 5;
const std::vector<std::string>& class_names();

struct DomainConfig {
    int image_size = 64;
    int classes = kClasses;
    int shape_min = 2;
    int shape_max = 6;
    float texture_noise = 0.03f;
    // appearance shift (identity for the source domain)
    float hue_rotation = 0.0f;  // turns
    float gamma = 1.0f;
    float noise_sigma = 0.0f;
    float blur_sigma = 0.0f;
};

// Geometry and appearance draw from independent sub-streams of scene_seed, so
// two configs sharing geometry parameters produce identical label maps.
Scene generate_scene(const DomainConfig& cfg, uint64_t scene_seed);

struct DatasetManifest {
    int count = 0;
    uint64_t seed = 0;
    std::string config_hash;
    std::string domain;
    int image_size = 0;
    int classes = 0;
};

std::string domain_config_hash(const DomainConfig& cfg);
std::string sample_filename(int index);

// Writes `manifest` plus one container file per scene into dir.
void generate_split(const DomainConfig& cfg, int n, uint64_t split_seed, const std::string& dir,
                    const std::string& domain_tag);

struct Dataset {
    DatasetManifest manifest;
    std::vector<Scene> scenes;

    static DatasetManifest load_manifest(const std::string& dir);
    static Dataset load(const std::string& dir);
};

}  // namespace sga
