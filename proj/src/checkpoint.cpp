#include "segadapt/checkpoint.hpp"

#include <bit>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "segadapt/errors.hpp"
#include "segadapt/rng.hpp"

static_assert(std::endian::native == std::endian::little,
              "container payloads are little-endian; big-endian hosts are unsupported");

namespace sga {

void Container::set_meta(const std::string& key, const std::string& value) {
    for (auto& kv : metas_)
        if (kv.first == key) {
            kv.second = value;
            return;
        }
    metas_.emplace_back(key, value);
}

bool Container::has_meta(const std::string& key) const {
    for (const auto& kv : metas_)
        if (kv.first == key) return true;
    return false;
}

const std::string& Container::meta(const std::string& key) const {
    for (const auto& kv : metas_)
        if (kv.first == key) return kv.second;
    throw IoError("container: missing meta key '" + key + "'");
}

void Container::add(const std::string& name, Shape shape, std::vector<float> data) {
    if (static_cast<int64_t>(data.size()) != shape_numel(shape))
        throw DimensionError("container: entry '" + name + "' data length does not match shape " +
                             shape_str(shape));
    if (has(name)) throw IoError("container: duplicate entry '" + name + "'");
    entries_.push_back({name, std::move(shape), std::move(data)});
}

bool Container::has(const std::string& name) const {
    for (const auto& e : entries_)
        if (e.name == name) return true;
    return false;
}

const ContainerEntry& Container::at(const std::string& name) const {
    for (const auto& e : entries_)
        if (e.name == name) return e;
    throw IoError("container: missing entry '" + name + "'");
}

namespace {

std::string dims_str(const Shape& s) {
    if (s.empty()) return "-";
    std::ostringstream os;
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    return os.str();
}

Shape parse_dims(const std::string& s) {
    if (s == "-") return {};
    Shape out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) out.push_back(std::stoi(tok));
    return out;
}

}  // namespace

void Container::save(const std::string& path) const {
    std::ostringstream header;
    header << "segadapt-container v1\n";
    for (const auto& kv : metas_) header << "meta " << kv.first << " " << kv.second << "\n";
    uint64_t offset = 0;
    for (const auto& e : entries_) {
        uint64_t nbytes = e.data.size() * sizeof(float);
        header << "tensor " << e.name << " f32 " << dims_str(e.shape) << " " << offset << " "
               << nbytes << "\n";
        offset += nbytes;
    }
    header << "end\n";

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("container: cannot open '" + path + "' for writing");
    const std::string h = header.str();
    out.write(h.data(), static_cast<std::streamsize>(h.size()));
    for (const auto& e : entries_)
        out.write(reinterpret_cast<const char*>(e.data.data()),
                  static_cast<std::streamsize>(e.data.size() * sizeof(float)));
    if (!out) throw IoError("container: write failed for '" + path + "'");
}

Container Container::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("container: cannot open '" + path + "'");
    std::string line;
    if (!std::getline(in, line) || line != "segadapt-container v1")
        throw IoError("container: '" + path + "' has no valid header");

    Container c;
    struct Pending {
        std::string name;
        Shape shape;
        uint64_t offset;
        uint64_t nbytes;
    };
    std::vector<Pending> pending;
    while (std::getline(in, line)) {
        if (line == "end") break;
        std::istringstream ls(line);
        std::string kind;
        ls >> kind;
        if (kind == "meta") {
            std::string key;
            ls >> key;
            std::string value;
            std::getline(ls, value);
            if (!value.empty() && value.front() == ' ') value.erase(0, 1);
            c.set_meta(key, value);
        } else if (kind == "tensor") {
            Pending p;
            std::string dtype, dims;
            ls >> p.name >> dtype >> dims >> p.offset >> p.nbytes;
            if (!ls || dtype != "f32")
                throw IoError("container: bad tensor record in '" + path + "': " + line);
            p.shape = parse_dims(dims);
            if (p.nbytes != static_cast<uint64_t>(shape_numel(p.shape)) * sizeof(float))
                throw IoError("container: entry '" + p.name + "' size mismatch in '" + path + "'");
            pending.push_back(std::move(p));
        } else {
            throw IoError("container: unknown record '" + kind + "' in '" + path + "'");
        }
    }
    std::streampos payload_start = in.tellg();
    for (auto& p : pending) {
        std::vector<float> data(p.nbytes / sizeof(float));
        in.seekg(payload_start + static_cast<std::streamoff>(p.offset));
        in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(p.nbytes));
        if (!in) throw IoError("container: truncated payload for '" + p.name + "' in '" + path + "'");
        c.add(p.name, std::move(p.shape), std::move(data));
    }
    return c;
}

uint64_t file_content_hash(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "' for hashing");
    uint64_t h = 1469598103934665603ull;
    char buf[65536];
    while (in) {
        in.read(buf, sizeof(buf));
        std::streamsize got = in.gcount();
        for (std::streamsize i = 0; i < got; ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 1099511628211ull;
        }
    }
    return h;
}

std::string hash_hex(uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace sga
