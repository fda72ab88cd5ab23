#pragma once

// Run reports: raw trace storage (container format), metric CSVs, SVG charts
// and label-map raster previews. Everything emitted is deterministic given
// the report contents; wall-clock lives only in manifest.txt.

#include <string>
#include <vector>

#include "segadapt/dataset.hpp"
#include "segadapt/metrics.hpp"

namespace sga {

struct AdaptRunReport {
    std::string run_id;
    std::string method;
    uint64_t seed = 0;
    std::string checkpoint_hash;
    int classes = 0;
    std::vector<float> miou_trace;  // cumulative mIoU after each sample
    std::vector<float> loss_trace;  // per-sample update loss (0 when no update)
    std::vector<int> skipped;       // sample indices with non-finite loss
    ConfusionMatrix confusion;
    std::vector<float> per_class_iou;    // NaN-free, zero where undefined
    std::vector<uint8_t> iou_defined;    // 0/1 per class
    float final_miou = 0.0f;
    std::vector<float> last_wsu;  // L*L transfer matrix of the last sample (may be empty)
    LabelMap last_pred, last_gt;
    std::string config_snapshot;  // resolved config text
    double wall_clock_sec = 0.0;  // manifest only, never in metric files
};

// metrics.csv schema: run_id,sample_index,cumulative_miou,loss,method,seed
std::string metrics_csv_text(const AdaptRunReport& r);

struct MetricsCsvRow {
    std::string run_id;
    int sample_index;
    float cumulative_miou;
    float loss;
    std::string method;
    uint64_t seed;
};
std::vector<MetricsCsvRow> parse_metrics_csv(const std::string& path);

// Writes report.bin plus all derived files (CSVs, SVGs, previews, manifest).
void write_run_dir(const AdaptRunReport& r, const std::string& dir);
AdaptRunReport load_run_dir(const std::string& dir);
// Re-derives every generated file from report.bin; byte-idempotent.
void regenerate_run_dir(const std::string& dir);

// SVG helpers (also used by the sweep harness).
struct Series {
    std::string name;
    std::vector<float> values;
};
std::string svg_line_chart(const std::vector<Series>& series, const std::string& title,
                           const std::string& x_label, const std::string& y_label);
std::string svg_heatmap(const std::vector<float>& values, int rows, int cols,
                        const std::vector<std::string>& row_labels,
                        const std::vector<std::string>& col_labels, const std::string& title);
std::string svg_bar_chart(const std::vector<std::string>& labels, const std::vector<float>& values,
                          const std::string& title, const std::string& y_label);

void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

// Binary P6 preview of a label map, class-indexed display palette.
void write_label_ppm(const LabelMap& labels, const std::string& path);

// Multi-run overlay of the evolution curves.
void write_overlay_evolution(const std::vector<AdaptRunReport>& runs, const std::string& path);

}  // namespace sga
