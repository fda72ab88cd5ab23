#include "segadapt.h"

#include <cstring>
#include <string>

#include "segadapt/engine.hpp"
#include "segadapt/errors.hpp"

using namespace sga;

struct sga_config {
    RunConfig cfg;
};

namespace {

thread_local std::string g_last_error;

sga_status fail(sga_status code, const std::string& msg) {
    g_last_error = msg;
    return code;
}

template <typename Fn>
sga_status guarded(Fn&& fn) {
    try {
        fn();
        g_last_error.clear();
        return SGA_OK;
    } catch (const ConfigError& e) {
        return fail(SGA_ERR_CONFIG, e.what());
    } catch (const DimensionError& e) {
        return fail(SGA_ERR_DIMENSION, e.what());
    } catch (const IoError& e) {
        return fail(SGA_ERR_IO, e.what());
    } catch (const StateError& e) {
        return fail(SGA_ERR_STATE, e.what());
    } catch (const std::exception& e) {
        return fail(SGA_ERR_RUNTIME, e.what());
    }
}

std::string arg_or_empty(const char* s) { return s ? std::string(s) : std::string(); }

}  // namespace

extern "C" {

const char* sga_version(void) { return "0.1.0"; }

const char* sga_last_error(void) { return g_last_error.c_str(); }

sga_status sga_config_create(sga_config** out) {
    return guarded([&] {
        if (!out) throw ConfigError("null output pointer");
        *out = new sga_config{};
    });
}

sga_status sga_config_load(const char* path, sga_config** out) {
    return guarded([&] {
        if (!out || !path) throw ConfigError("null argument");
        *out = new sga_config{RunConfig::from_file(path)};
    });
}

sga_status sga_config_set(sga_config* cfg, const char* key, const char* value) {
    return guarded([&] {
        if (!cfg || !key || !value) throw ConfigError("null argument");
        cfg->cfg.set(key, value);
    });
}

sga_status sga_config_get(const sga_config* cfg, const char* key, char* buf, size_t buflen) {
    return guarded([&] {
        if (!cfg || !key || !buf || buflen == 0) throw ConfigError("null argument");
        const std::string& v = cfg->cfg.get(key);
        std::strncpy(buf, v.c_str(), buflen - 1);
        buf[buflen - 1] = '\0';
    });
}

void sga_config_free(sga_config* cfg) { delete cfg; }

sga_status sga_gen_data(const sga_config* cfg, const char* out_dir) {
    return guarded([&] {
        if (!cfg || !out_dir) throw ConfigError("null argument");
        gen_data(cfg->cfg, out_dir);
    });
}

sga_status sga_pretrain(const sga_config* cfg, const char* data_dir, const char* out_dir,
                        const char* resume_from) {
    return guarded([&] {
        if (!cfg || !data_dir || !out_dir) throw ConfigError("null argument");
        pretrain(cfg->cfg, data_dir, out_dir, arg_or_empty(resume_from));
    });
}

sga_status sga_adapt(const sga_config* cfg, const char* checkpoint, const char* stream_dir,
                     const char* out_dir) {
    return guarded([&] {
        if (!cfg || !checkpoint || !stream_dir || !out_dir) throw ConfigError("null argument");
        adapt_stream(cfg->cfg, checkpoint, stream_dir, out_dir);
    });
}

sga_status sga_run_final_miou(const char* run_dir, double* out) {
    return guarded([&] {
        if (!run_dir || !out) throw ConfigError("null argument");
        *out = load_run_dir(run_dir).final_miou;
    });
}

sga_status sga_sweep(const sga_config* cfg, const char* kind, const char* checkpoint,
                     const char* data_dir, const char* stream_dir, const char* out_dir) {
    return guarded([&] {
        if (!cfg || !kind || !out_dir) throw ConfigError("null argument");
        sweep(cfg->cfg, kind, arg_or_empty(checkpoint), arg_or_empty(data_dir),
              arg_or_empty(stream_dir), out_dir);
    });
}

sga_status sga_report(const char* const* run_dirs, size_t n_dirs, const char* overlay_dir) {
    return guarded([&] {
        if (!run_dirs || n_dirs == 0) throw ConfigError("report needs at least one run directory");
        std::vector<std::string> dirs;
        for (size_t i = 0; i < n_dirs; ++i) dirs.emplace_back(run_dirs[i]);
        regenerate_reports(dirs, arg_or_empty(overlay_dir));
    });
}

}  // extern "C"
