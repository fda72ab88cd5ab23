#include "segadapt/config.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "segadapt/errors.hpp"

namespace sga {

namespace {

struct KeySpec {
    const char* key;
    const char* def;
    // validation kinds: s string, f float, i int, u u64, b bool, e enum
    char kind;
    const char* choices;  // for 'e', comma separated
};

const KeySpec kKeys[] = {
    {"seed", "1234", 'u', nullptr},
    {"data.image_size", "64", 'i', nullptr},
    {"data.classes", "5", 'i', nullptr},
    {"data.source_count", "2000", 'i', nullptr},
    {"data.val_count", "200", 'i', nullptr},
    {"data.target_count", "200", 'i', nullptr},
    {"data.shape_min", "2", 'i', nullptr},
    {"data.shape_max", "6", 'i', nullptr},
    {"data.texture_noise", "0.03", 'f', nullptr},
    {"data.target_hue_rotation", "0.15", 'f', nullptr},
    {"data.target_gamma", "1.4", 'f', nullptr},
    {"data.target_noise_sigma", "0.05", 'f', nullptr},
    {"data.target_blur_sigma", "0.8", 'f', nullptr},
    {"model.channels", "16,32,32,32", 's', nullptr},
    {"model.bn_eps", "1e-5", 'f', nullptr},
    {"model.bn_momentum", "0.1", 'f', nullptr},
    {"transformer.enabled", "true", 'b', nullptr},
    {"transformer.identity", "false", 'b', nullptr},
    {"transformer.layers", "1", 'i', nullptr},
    {"transformer.heads", "4", 'i', nullptr},
    {"transformer.dim", "32", 'i', nullptr},
    {"transformer.dropout", "0.1", 'f', nullptr},
    {"transformer.tap", "block3", 'e', "block1,block2,block3,block4,logits"},
    {"transformer.positional_encoding", "false", 'b', nullptr},
    {"transformer.attention_scaling", "false", 'b', nullptr},
    {"transformer.softmax_axis", "unsup", 'e', "unsup,sup"},
    {"loss.lambda", "0.1", 'f', nullptr},
    {"loss.unsup", "max-squares", 'e',
     "none,min-entropy,max-squares,trans-consistency,selective-ce,special-ce"},
    {"loss.tau", "0.8", 'f', nullptr},
    {"loss.K", "1", 'i', nullptr},
    {"train.epochs", "18", 'i', nullptr},
    {"train.batch_size", "4", 'i', nullptr},
    {"train.lr", "1e-3", 'f', nullptr},
    {"train.momentum", "0.9", 'f', nullptr},
    {"train.poly_power", "0.9", 'f', nullptr},
    {"adapt.method", "trans-consistency", 'e',
     "none,bn-stats,min-entropy,max-squares,trans-consistency,selective-ce,special-ce"},
    {"adapt.lr", "1e-4", 'f', nullptr},
    {"adapt.iterations", "1", 'i', nullptr},
    {"adapt.update_group", "bn", 'e', "bn,backbone"},
    {"adapt.heads", "US", 'e', "UU,US,SU,SS"},
    {"adapt.continual", "true", 'b', nullptr},
    {"adapt.K", "1", 'i', nullptr},
    {"adapt.metric", "l2-logits", 'e', "l2-logits,l1-logits,l2-probs,l1-probs,kl-probs"},
    {"adapt.bn_inference", "adapt", 'e', "adapt,running"},
    {"adapt.shuffle_stream", "false", 'b', nullptr},
    {"adapt.stream_limit", "0", 'i', nullptr},
    {"augment.photometric_strength", "0.75", 'f', nullptr},
    {"augment.crop_ratio", "0.5", 'f', nullptr},
    {"augment.patch_size", "16", 'i', nullptr},
    {"augment.photometric_kinds", "grayscale,jitter,blur", 's', nullptr},
    {"augment.geometric_kinds", "crop,rotate90,shuffle", 's', nullptr},
    {"sweep.k_grid", "1,2,4,8", 's', nullptr},
    {"sweep.lambda_grid", "0.01,0.1,1,10", 's', nullptr},
    {"sweep.layers_grid", "1,2,3,4", 's', nullptr},
    {"sweep.stream_limit", "0", 'i', nullptr},
    {"sweep.epochs", "0", 'i', nullptr},
};

const KeySpec* find_key(const std::string& key) {
    for (const auto& k : kKeys)
        if (key == k.key) return &k;
    return nullptr;
}

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

std::vector<std::string> split_csv(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) out.push_back(trim(tok));
    return out;
}

void validate_value(const KeySpec& spec, const std::string& value) {
    const std::string key = spec.key;
    auto fail = [&](const std::string& why) {
        throw ConfigError("config key '" + key + "': " + why + " (got '" + value + "')");
    };
    switch (spec.kind) {
        case 's':
            break;
        case 'f': {
            char* end = nullptr;
            std::strtod(value.c_str(), &end);
            if (end == value.c_str() || *end != '\0') fail("expected a number");
            break;
        }
        case 'i': {
            char* end = nullptr;
            std::strtol(value.c_str(), &end, 10);
            if (end == value.c_str() || *end != '\0') fail("expected an integer");
            break;
        }
        case 'u': {
            char* end = nullptr;
            std::strtoull(value.c_str(), &end, 10);
            if (end == value.c_str() || *end != '\0') fail("expected an unsigned integer");
            break;
        }
        case 'b':
            if (value != "true" && value != "false") fail("expected true or false");
            break;
        case 'e': {
            for (const auto& c : split_csv(spec.choices))
                if (value == c) return;
            fail(std::string("expected one of {") + spec.choices + "}");
            break;
        }
    }
}

}  // namespace

RunConfig::RunConfig() {
    for (const auto& k : kKeys) values_[k.key] = k.def;
}

RunConfig RunConfig::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return from_text(ss.str());
}

RunConfig RunConfig::from_text(const std::string& text) {
    RunConfig cfg;
    std::stringstream ss(text);
    std::string line;
    int lineno = 0;
    while (std::getline(ss, line)) {
        ++lineno;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        size_t eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + " is not 'key = value': " + t);
        cfg.set(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
    }
    return cfg;
}

void RunConfig::set(const std::string& key, const std::string& value) {
    const KeySpec* spec = find_key(key);
    if (!spec) throw ConfigError("unknown config key '" + key + "'");
    validate_value(*spec, value);
    values_[key] = value;
}

const std::string& RunConfig::get(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
    return it->second;
}

double RunConfig::get_f(const std::string& key) const { return std::strtod(get(key).c_str(), nullptr); }
int RunConfig::get_i(const std::string& key) const { return std::stoi(get(key)); }
bool RunConfig::get_b(const std::string& key) const { return get(key) == "true"; }
uint64_t RunConfig::get_u64(const std::string& key) const { return std::strtoull(get(key).c_str(), nullptr, 10); }

std::string RunConfig::resolved_text() const {
    std::ostringstream os;  // std::map keeps keys sorted
    for (const auto& kv : values_) os << kv.first << " = " << kv.second << "\n";
    return os.str();
}

void RunConfig::write_resolved(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write resolved config to '" + path + "'");
    out << resolved_text();
}

DomainConfig RunConfig::source_domain() const {
    DomainConfig d;
    d.image_size = get_i("data.image_size");
    d.classes = get_i("data.classes");
    d.shape_min = get_i("data.shape_min");
    d.shape_max = get_i("data.shape_max");
    d.texture_noise = static_cast<float>(get_f("data.texture_noise"));
    return d;
}

DomainConfig RunConfig::target_domain() const {
    DomainConfig d = source_domain();
    d.hue_rotation = static_cast<float>(get_f("data.target_hue_rotation"));
    d.gamma = static_cast<float>(get_f("data.target_gamma"));
    d.noise_sigma = static_cast<float>(get_f("data.target_noise_sigma"));
    d.blur_sigma = static_cast<float>(get_f("data.target_blur_sigma"));
    return d;
}

ModelConfig RunConfig::model_config() const {
    ModelConfig m;
    m.classes = get_i("data.classes");
    m.channels.clear();
    for (const auto& c : split_csv(get("model.channels"))) m.channels.push_back(std::stoi(c));
    if (m.channels.size() != 4) throw ConfigError("model.channels needs exactly 4 entries");
    m.bn_eps = static_cast<float>(get_f("model.bn_eps"));
    m.bn_momentum = static_cast<float>(get_f("model.bn_momentum"));
    m.transformer = get_b("transformer.enabled");
    m.identity_transfer = get_b("transformer.identity");
    m.tap = tap_from_string(get("transformer.tap"));
    m.tf.layers = get_i("transformer.layers");
    m.tf.heads = get_i("transformer.heads");
    m.tf.dim = get_i("transformer.dim");
    m.tf.dropout = get_f("transformer.dropout");
    m.tf.positional_encoding = get_b("transformer.positional_encoding");
    m.tf.attention_scaling = get_b("transformer.attention_scaling");
    m.tf.softmax_over_unsup = get("transformer.softmax_axis") == "unsup";
    return m;
}

AugmentConfig RunConfig::augment_config() const {
    AugmentConfig a;
    a.photometric_strength = get_f("augment.photometric_strength");
    a.crop_ratio = get_f("augment.crop_ratio");
    a.patch_size = get_i("augment.patch_size");
    a.photo_kinds.clear();
    for (const auto& k : split_csv(get("augment.photometric_kinds")))
        a.photo_kinds.push_back(photo_kind_from_string(k));
    a.geom_kinds.clear();
    for (const auto& k : split_csv(get("augment.geometric_kinds")))
        a.geom_kinds.push_back(geom_kind_from_string(k));
    return a;
}

const std::vector<std::string>& RunConfig::known_keys() {
    static std::vector<std::string> keys = [] {
        std::vector<std::string> k;
        for (const auto& spec : kKeys) k.push_back(spec.key);
        std::sort(k.begin(), k.end());
        return k;
    }();
    return keys;
}

uint64_t stream_seed(const RunConfig& cfg, SeedStream s) {
    const char* name = "";
    switch (s) {
        case SeedStream::data: name = "data"; break;
        case SeedStream::init: name = "init"; break;
        case SeedStream::dropout: name = "dropout"; break;
        case SeedStream::transforms: name = "transforms"; break;
        case SeedStream::stream_order: name = "stream-order"; break;
    }
    return derive_seed(cfg.master_seed(), name);
}

}  // namespace sga
