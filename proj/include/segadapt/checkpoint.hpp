#pragma once

// Container file format for parameters, buffers and dataset samples.
//
// Layout (documented in docs/FORMATS.md, kept bit-exact):
//   ASCII header, one record per line:
//     segadapt-container v1
//     meta <key> <value>
//     tensor <name> f32 <d0,d1,...|-> <offset> <nbytes>
//     end
//   followed by the payload: raw little-endian 32-bit floats. Offsets are
//   relative to the first byte after the "end" line.

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "segadapt/tensor.hpp"

namespace sga {

struct ContainerEntry {
    std::string name;
    Shape shape;
    std::vector<float> data;
};

class Container {
public:
    void set_meta(const std::string& key, const std::string& value);
    bool has_meta(const std::string& key) const;
    const std::string& meta(const std::string& key) const;
    const std::vector<std::pair<std::string, std::string>>& metas() const { return metas_; }

    void add(const std::string& name, Shape shape, std::vector<float> data);
    void add(const std::string& name, const Tensor& t) { add(name, t.shape(), t.value()); }
    bool has(const std::string& name) const;
    const ContainerEntry& at(const std::string& name) const;
    const std::vector<ContainerEntry>& entries() const { return entries_; }

    void save(const std::string& path) const;
    static Container load(const std::string& path);

private:
    std::vector<std::pair<std::string, std::string>> metas_;
    std::vector<ContainerEntry> entries_;
};

// FNV-1a over the raw file bytes; used as the content hash in run manifests.
uint64_t file_content_hash(const std::string& path);

std::string hash_hex(uint64_t h);

}  // namespace sga
