#include "segadapt/dataset.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "segadapt/augment.hpp"
#include "segadapt/checkpoint.hpp"
#include "segadapt/errors.hpp"
#include "segadapt/rng.hpp"

namespace fs = std::filesystem;

namespace sga {

const std::vector<std::string>& class_names() {
    static const std::vector<std::string> names = {"background", "circle", "square", "triangle", "bar"};
    return names;
}

namespace {

constexpr float kPalette[kClasses][3] = {
    {0.20f, 0.25f, 0.20f},  // background
    {0.75f, 0.20f, 0.20f},  // circle
    {0.20f, 0.35f, 0.75f},  // square
    {0.80f, 0.75f, 0.25f},  // triangle
    {0.55f, 0.25f, 0.65f},  // bar
};

struct ShapeDraw {
    int cls;
    float cx, cy;
    float size;   // radius / half side / half height / half thickness
    float angle;  // bar orientation
    float color[3];
};

void rasterize(const ShapeDraw& s, int S, std::vector<float>& img, std::vector<uint8_t>& lab) {
    int64_t plane = static_cast<int64_t>(S) * S;
    auto paint = [&](int y, int x) {
        int64_t i = static_cast<int64_t>(y) * S + x;
        img[i] = s.color[0];
        img[plane + i] = s.color[1];
        img[2 * plane + i] = s.color[2];
        lab[i] = static_cast<uint8_t>(s.cls);
    };
    switch (s.cls) {
        case 1: {  // circle
            float r2 = s.size * s.size;
            for (int y = 0; y < S; ++y)
                for (int x = 0; x < S; ++x) {
                    float dx = x - s.cx, dy = y - s.cy;
                    if (dx * dx + dy * dy <= r2) paint(y, x);
                }
            break;
        }
        case 2: {  // axis-aligned square
            for (int y = 0; y < S; ++y)
                for (int x = 0; x < S; ++x)
                    if (std::abs(x - s.cx) <= s.size && std::abs(y - s.cy) <= s.size) paint(y, x);
            break;
        }
        case 3: {  // isoceles triangle pointing up
            for (int y = 0; y < S; ++y) {
                float t = (y - (s.cy - s.size)) / (2.0f * s.size);
                if (t < 0.0f || t > 1.0f) continue;
                float half = t * s.size;
                for (int x = 0; x < S; ++x)
                    if (std::abs(x - s.cx) <= half) paint(y, x);
            }
            break;
        }
        case 4: {  // full-extent stripe bar
            float nx = -std::sin(s.angle), ny = std::cos(s.angle);
            for (int y = 0; y < S; ++y)
                for (int x = 0; x < S; ++x) {
                    float d = (x - s.cx) * nx + (y - s.cy) * ny;
                    if (std::abs(d) <= s.size) paint(y, x);
                }
            break;
        }
        default:
            throw StateError("rasterize: unexpected class " + std::to_string(s.cls));
    }
}

}  // namespace

Scene generate_scene(const DomainConfig& cfg, uint64_t scene_seed) {
    if (cfg.classes != kClasses)
        throw ConfigError("dataset supports exactly " + std::to_string(kClasses) + " classes");
    if (cfg.image_size < 16) throw ConfigError("image size too small");
    if (cfg.shape_min < 0 || cfg.shape_max < cfg.shape_min)
        throw ConfigError("invalid shape count range");

    const int S = cfg.image_size;
    const int64_t plane = static_cast<int64_t>(S) * S;
    Rng geom(derive_seed(scene_seed, "geometry"));
    Rng appear(derive_seed(scene_seed, "appearance"));

    std::vector<float> img(3 * plane);
    std::vector<uint8_t> lab(plane, 0);
    for (int c = 0; c < 3; ++c)
        std::fill(img.begin() + c * plane, img.begin() + (c + 1) * plane, kPalette[0][c]);

    int count = cfg.shape_min + geom.uniform_int(cfg.shape_max - cfg.shape_min + 1);
    for (int k = 0; k < count; ++k) {
        ShapeDraw s;
        s.cls = 1 + geom.uniform_int(kClasses - 1);
        float margin = S * 0.15f;
        s.cx = static_cast<float>(geom.uniform(margin, S - margin));
        s.cy = static_cast<float>(geom.uniform(margin, S - margin));
        s.size = static_cast<float>(geom.uniform(S * 0.08, S * 0.22));
        s.angle = static_cast<float>(geom.uniform(0.0, 3.14159265));
        if (s.cls == 4) s.size = static_cast<float>(geom.uniform(S * 0.04, S * 0.09));
        for (int c = 0; c < 3; ++c) {
            float jitter = static_cast<float>(appear.uniform(-0.08, 0.08));
            s.color[c] = std::min(1.0f, std::max(0.0f, kPalette[s.cls][c] + jitter));
        }
        rasterize(s, S, img, lab);
    }

    if (cfg.texture_noise > 0.0f)
        for (auto& v : img)
            v = std::min(1.0f, std::max(0.0f, v + cfg.texture_noise * static_cast<float>(appear.normal())));

    // appearance shift: hue rotation, gamma, blur, additive noise
    if (cfg.hue_rotation != 0.0f) {
        for (int64_t i = 0; i < plane; ++i) {
            float h, s, v;
            detail::rgb_to_hsv(img[i], img[plane + i], img[2 * plane + i], h, s, v);
            h += cfg.hue_rotation;
            detail::hsv_to_rgb(h, s, v, img[i], img[plane + i], img[2 * plane + i]);
        }
    }
    if (cfg.gamma != 1.0f)
        for (auto& v : img) v = std::pow(std::max(0.0f, v), cfg.gamma);
    if (cfg.blur_sigma > 0.0f) detail::gaussian_blur(img, S, S, cfg.blur_sigma, 5);
    if (cfg.noise_sigma > 0.0f)
        for (auto& v : img) v += cfg.noise_sigma * static_cast<float>(appear.normal());
    detail::clamp01(img);

    Scene scene;
    scene.image = Tensor::leaf({3, S, S}, std::move(img));
    scene.labels = LabelMap{S, S, std::move(lab)};
    return scene;
}

std::string domain_config_hash(const DomainConfig& cfg) {
    std::ostringstream os;
    os << cfg.image_size << "|" << cfg.classes << "|" << cfg.shape_min << "|" << cfg.shape_max
       << "|" << cfg.texture_noise << "|" << cfg.hue_rotation << "|" << cfg.gamma << "|"
       << cfg.noise_sigma << "|" << cfg.blur_sigma;
    return hash_hex(fnv1a64(os.str()));
}

std::string sample_filename(int index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "sample_%06d.bin", index);
    return buf;
}

void generate_split(const DomainConfig& cfg, int n, uint64_t split_seed, const std::string& dir,
                    const std::string& domain_tag) {
    if (n < 1) throw ConfigError("split size must be >= 1");
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create dataset directory '" + dir + "': " + ec.message());

    for (int i = 0; i < n; ++i) {
        Scene s = generate_scene(cfg, derive_seed(split_seed, static_cast<uint64_t>(i)));
        Container c;
        c.set_meta("domain", domain_tag);
        c.set_meta("index", std::to_string(i));
        c.add("image", s.image);
        std::vector<float> lab(s.labels.ids.begin(), s.labels.ids.end());
        c.add("labels", Shape{s.labels.h, s.labels.w}, std::move(lab));
        c.save((fs::path(dir) / sample_filename(i)).string());
    }

    std::ofstream mf(fs::path(dir) / "manifest");
    if (!mf) throw IoError("cannot write manifest in '" + dir + "'");
    mf << "segadapt-dataset v1\n"
       << "count " << n << "\n"
       << "seed " << split_seed << "\n"
       << "config_hash " << domain_config_hash(cfg) << "\n"
       << "domain " << domain_tag << "\n"
       << "image_size " << cfg.image_size << "\n"
       << "classes " << cfg.classes << "\n";
}

DatasetManifest Dataset::load_manifest(const std::string& dir) {
    std::ifstream mf(fs::path(dir) / "manifest");
    if (!mf) throw IoError("missing manifest in '" + dir + "'");
    std::string line;
    if (!std::getline(mf, line) || line != "segadapt-dataset v1")
        throw IoError("'" + dir + "' is not a dataset directory");
    DatasetManifest m;
    while (std::getline(mf, line)) {
        std::istringstream ls(line);
        std::string key;
        ls >> key;
        if (key == "count") ls >> m.count;
        else if (key == "seed") ls >> m.seed;
        else if (key == "config_hash") ls >> m.config_hash;
        else if (key == "domain") ls >> m.domain;
        else if (key == "image_size") ls >> m.image_size;
        else if (key == "classes") ls >> m.classes;
    }
    return m;
}

Dataset Dataset::load(const std::string& dir) {
    Dataset d;
    d.manifest = load_manifest(dir);
    d.scenes.reserve(d.manifest.count);
    for (int i = 0; i < d.manifest.count; ++i) {
        Container c = Container::load((fs::path(dir) / sample_filename(i)).string());
        const auto& img = c.at("image");
        const auto& lab = c.at("labels");
        Scene s;
        s.image = Tensor::leaf(img.shape, img.data);
        s.labels.h = lab.shape[0];
        s.labels.w = lab.shape[1];
        s.labels.ids.resize(lab.data.size());
        for (size_t k = 0; k < lab.data.size(); ++k) {
            int id = static_cast<int>(lab.data[k]);
            if (id < 0 || id >= d.manifest.classes)
                throw IoError("label id out of range in sample " + std::to_string(i));
            s.labels.ids[k] = static_cast<uint8_t>(id);
        }
        d.scenes.push_back(std::move(s));
    }
    return d;
}

}  // namespace sga
