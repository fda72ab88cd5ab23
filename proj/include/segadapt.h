/* C API for the segadapt shared library.
 *
 * All functions return sga_status; on failure sga_last_error() yields a
 * human-readable message for the calling thread. Configuration lives behind
 * an opaque handle populated from a key=value file and/or individual sets.
 */

#ifndef SEGADAPT_H
#define SEGADAPT_H

#include <stddef.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum sga_status {
    SGA_OK = 0,
    SGA_ERR_CONFIG = 1,    /* invalid configuration key/value or request */
    SGA_ERR_DIMENSION = 2, /* shape/label mismatch */
    SGA_ERR_IO = 3,        /* missing or malformed files */
    SGA_ERR_STATE = 4,     /* misuse of stateful objects, divergence */
    SGA_ERR_RUNTIME = 5,   /* anything else */
} sga_status;

typedef struct sga_config sga_config;

const char* sga_version(void);

/* Last error message of the current thread ("" when the last call succeeded). */
const char* sga_last_error(void);

/* Configuration ---------------------------------------------------------- */

sga_status sga_config_create(sga_config** out);
sga_status sga_config_load(const char* path, sga_config** out);
sga_status sga_config_set(sga_config* cfg, const char* key, const char* value);
/* Copies the resolved value into buf (NUL terminated, truncated if needed). */
sga_status sga_config_get(const sga_config* cfg, const char* key, char* buf, size_t buflen);
void sga_config_free(sga_config* cfg);

/* Commands ---------------------------------------------------------------- */

/* Writes source-train, source-val and target-stream datasets into out_dir. */
sga_status sga_gen_data(const sga_config* cfg, const char* out_dir);

/* Pretrains on data_dir/source-train; resume_from may be NULL or empty. */
sga_status sga_pretrain(const sga_config* cfg, const char* data_dir, const char* out_dir,
                        const char* resume_from);

/* Sequential adaptation + evaluation over a stream directory. */
sga_status sga_adapt(const sga_config* cfg, const char* checkpoint, const char* stream_dir,
                     const char* out_dir);

/* Reads final_miou from an adapt run directory. */
sga_status sga_run_final_miou(const char* run_dir, double* out);

/* kind: heads | K | metric (checkpoint required) or lambda | layers | tap
 * (data_dir required). Unused path arguments may be NULL. */
sga_status sga_sweep(const sga_config* cfg, const char* kind, const char* checkpoint,
                     const char* data_dir, const char* stream_dir, const char* out_dir);

/* Regenerates CSV/SVG from stored traces; several runs also produce an
 * overlay chart in overlay_dir (or the first run directory when NULL). */
sga_status sga_report(const char* const* run_dirs, size_t n_dirs, const char* overlay_dir);

#ifdef __cplusplus
}
#endif

#endif /* SEGADAPT_H */
