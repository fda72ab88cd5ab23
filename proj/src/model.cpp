#include "segadapt/model.hpp"

#include <cstdio>
#include <cstring>

namespace sga {

namespace {

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

std::string join_channels(const std::vector<int>& ch) {
    std::string out;
    for (size_t i = 0; i < ch.size(); ++i) out += (i ? "," : "") + std::to_string(ch[i]);
    return out;
}

std::vector<int> split_channels(const std::string& s) {
    std::vector<int> out;
    size_t pos = 0;
    while (pos < s.size()) {
        size_t comma = s.find(',', pos);
        if (comma == std::string::npos) comma = s.size();
        out.push_back(std::stoi(s.substr(pos, comma - pos)));
        pos = comma + 1;
    }
    return out;
}

}  // namespace

uint64_t hash_param_group(FullModelT<float>& m, ParamGroup group) {
    uint64_t h = 1469598103934665603ull;
    auto mix_bytes = [&h](const void* p, size_t n) {
        const unsigned char* b = static_cast<const unsigned char*>(p);
        for (size_t i = 0; i < n; ++i) {
            h ^= b[i];
            h *= 1099511628211ull;
        }
    };
    for (auto& ref : parameters(m)) {
        if (ref.group != group) continue;
        mix_bytes(ref.name.data(), ref.name.size());
        mix_bytes(ref.tensor->value().data(), ref.tensor->value().size() * sizeof(float));
    }
    return h;
}

void save_model(FullModelT<float>& m, const std::string& path,
                const std::map<std::string, std::string>& extra_meta) {
    Container c;
    c.set_meta("kind", "model");
    c.set_meta("arch.in_channels", std::to_string(m.cfg.in_channels));
    c.set_meta("arch.channels", join_channels(m.cfg.channels));
    c.set_meta("arch.classes", std::to_string(m.cfg.classes));
    c.set_meta("arch.bn_eps", fmt(m.cfg.bn_eps));
    c.set_meta("arch.bn_momentum", fmt(m.cfg.bn_momentum));
    c.set_meta("arch.transformer", m.cfg.transformer ? "1" : "0");
    c.set_meta("arch.identity_transfer", m.cfg.identity_transfer ? "1" : "0");
    c.set_meta("arch.tap", tap_to_string(m.cfg.tap));
    c.set_meta("arch.tf.layers", std::to_string(m.cfg.tf.layers));
    c.set_meta("arch.tf.heads", std::to_string(m.cfg.tf.heads));
    c.set_meta("arch.tf.dim", std::to_string(m.cfg.tf.dim));
    c.set_meta("arch.tf.dropout", fmt(m.cfg.tf.dropout));
    c.set_meta("arch.tf.positional_encoding", m.cfg.tf.positional_encoding ? "1" : "0");
    c.set_meta("arch.tf.attention_scaling", m.cfg.tf.attention_scaling ? "1" : "0");
    c.set_meta("arch.tf.softmax_over_unsup", m.cfg.tf.softmax_over_unsup ? "1" : "0");
    for (const auto& kv : extra_meta) c.set_meta(kv.first, kv.second);

    for (auto& ref : parameters(m)) c.add(ref.name, *ref.tensor);
    for (auto& buf : buffers(m))
        c.add(buf.name, Shape{static_cast<int>(buf.data->size())},
              std::vector<float>(buf.data->begin(), buf.data->end()));
    for (size_t i = 0; i < m.blocks.size(); ++i)
        c.add("seg.block" + std::to_string(i + 1) + ".bn.batches", Shape{1},
              {static_cast<float>(m.blocks[i].bn.batches_tracked)});
    c.save(path);
}

FullModelT<float> load_model(const std::string& path,
                             std::map<std::string, std::string>* extra_meta) {
    Container c = Container::load(path);
    if (!c.has_meta("kind") || c.meta("kind") != "model")
        throw IoError("'" + path + "' is not a model checkpoint");
    ModelConfig cfg;
    cfg.in_channels = std::stoi(c.meta("arch.in_channels"));
    cfg.channels = split_channels(c.meta("arch.channels"));
    cfg.classes = std::stoi(c.meta("arch.classes"));
    cfg.bn_eps = std::stof(c.meta("arch.bn_eps"));
    cfg.bn_momentum = std::stof(c.meta("arch.bn_momentum"));
    cfg.transformer = c.meta("arch.transformer") == "1";
    cfg.identity_transfer = c.meta("arch.identity_transfer") == "1";
    cfg.tap = tap_from_string(c.meta("arch.tap"));
    cfg.tf.layers = std::stoi(c.meta("arch.tf.layers"));
    cfg.tf.heads = std::stoi(c.meta("arch.tf.heads"));
    cfg.tf.dim = std::stoi(c.meta("arch.tf.dim"));
    cfg.tf.dropout = std::stod(c.meta("arch.tf.dropout"));
    cfg.tf.positional_encoding = c.meta("arch.tf.positional_encoding") == "1";
    cfg.tf.attention_scaling = c.meta("arch.tf.attention_scaling") == "1";
    cfg.tf.softmax_over_unsup = c.meta("arch.tf.softmax_over_unsup") == "1";

    FullModelT<float> m = make_model<float>(cfg, 0);
    for (auto& ref : parameters(m)) {
        const auto& e = c.at(ref.name);
        if (e.shape != ref.tensor->shape())
            throw IoError("checkpoint entry '" + ref.name + "' has shape " + shape_str(e.shape) +
                          ", expected " + shape_str(ref.tensor->shape()));
        ref.tensor->data() = e.data;
    }
    for (auto& buf : buffers(m)) {
        const auto& e = c.at(buf.name);
        buf.data->assign(e.data.begin(), e.data.end());
    }
    for (size_t i = 0; i < m.blocks.size(); ++i)
        m.blocks[i].bn.batches_tracked =
            static_cast<int64_t>(c.at("seg.block" + std::to_string(i + 1) + ".bn.batches").data[0]);

    if (extra_meta) {
        extra_meta->clear();
        for (const auto& kv : c.metas()) (*extra_meta)[kv.first] = kv.second;
    }
    return m;
}

}  // namespace sga
