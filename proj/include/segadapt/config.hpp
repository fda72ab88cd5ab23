#pragma once

// Flat `key = value` run configuration with a fixed key registry. Unknown
// keys are rejected up front; a fully resolved copy (defaults filled in) is
// written next to every command's outputs.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "segadapt/augment.hpp"
#include "segadapt/dataset.hpp"
#include "segadapt/losses.hpp"
#include "segadapt/model.hpp"

namespace sga {

class RunConfig {
public:
    RunConfig();  // defaults

    static RunConfig from_file(const std::string& path);
    static RunConfig from_text(const std::string& text);

    // Validates the key and the value format.
    void set(const std::string& key, const std::string& value);
    const std::string& get(const std::string& key) const;

    double get_f(const std::string& key) const;
    int get_i(const std::string& key) const;
    bool get_b(const std::string& key) const;
    uint64_t get_u64(const std::string& key) const;

    // Deterministic resolved form, one sorted "key = value" line each.
    std::string resolved_text() const;
    void write_resolved(const std::string& path) const;

    // Typed views over config sections.
    uint64_t master_seed() const { return get_u64("seed"); }
    DomainConfig source_domain() const;
    DomainConfig target_domain() const;
    ModelConfig model_config() const;
    AugmentConfig augment_config() const;

    static const std::vector<std::string>& known_keys();

private:
    std::map<std::string, std::string> values_;
};

// Named RNG sub-streams, all derived from the master seed so that changing
// one consumer (e.g. the number of transforms) never perturbs another.
enum class SeedStream { data, init, dropout, transforms, stream_order };
uint64_t stream_seed(const RunConfig& cfg, SeedStream s);

}  // namespace sga
