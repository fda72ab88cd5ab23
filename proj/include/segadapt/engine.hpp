#pragma once

// End-to-end orchestration: source pretraining, the sequential test-time
// adaptation loop, and the comparison sweeps. Every entry point is
// deterministic given (config, seed) and writes a resolved config plus a
// status manifest beside its outputs.

#include <string>
#include <vector>

#include "segadapt/config.hpp"
#include "segadapt/report.hpp"

namespace sga {

enum class AdaptMethod {
    none,
    bn_stats,
    min_entropy,
    max_squares,
    trans_consistency,
    selective_ce,
    special_ce,
};

AdaptMethod adapt_method_from_string(const std::string& s);
std::string adapt_method_to_string(AdaptMethod m);

// Writes source-train, source-val and target-stream dataset directories.
void gen_data(const RunConfig& cfg, const std::string& out_dir);

struct PretrainOutcome {
    std::vector<float> step_losses;
    std::vector<float> val_miou;  // one entry per epoch when a val split exists
    int steps_done = 0;
    std::string checkpoint_path;
};

// Supervised pretraining over data_dir/source-train (evaluating on
// data_dir/source-val when present). Emits checkpoint.bin plus loss CSVs
// into out_dir. An existing checkpoint can be resumed to extend training.
PretrainOutcome pretrain(const RunConfig& cfg, const std::string& data_dir,
                         const std::string& out_dir, const std::string& resume_from = "");

// Sequential adaptation + evaluation over a target stream. out_dir may be
// empty to skip file emission (the report is still returned).
AdaptRunReport adapt_stream(const RunConfig& cfg, const std::string& checkpoint_path,
                            const std::string& stream_dir, const std::string& out_dir);

// kinds: heads | K | metric (need a checkpoint) and lambda | layers | tap
// (pretrain per cell from data_dir). Each cell is a full adapt run with the
// shared master seed, so single cells reproduce standalone runs bit-exactly.
void sweep(const RunConfig& cfg, const std::string& kind, const std::string& checkpoint_path,
           const std::string& data_dir, const std::string& stream_dir, const std::string& out_dir);

// Re-derives CSV/SVG files from stored raw traces; with several runs also
// writes an overlay evolution chart into overlay_dir (or the first run dir).
void regenerate_reports(const std::vector<std::string>& run_dirs, const std::string& overlay_dir = "");

}  // namespace sga
