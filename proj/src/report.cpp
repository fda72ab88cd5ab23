#include "segadapt/report.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "segadapt/checkpoint.hpp"
#include "segadapt/errors.hpp"

namespace fs = std::filesystem;

namespace sga {

namespace {

std::string fmtf(float v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.9g", static_cast<double>(v));
    return buf;
}

std::string fmt_coord(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

// display palette for label previews (background + 4 shape classes)
const unsigned char kDisplayPalette[][3] = {
    {40, 40, 40}, {220, 70, 70}, {70, 120, 220}, {235, 200, 70}, {165, 90, 205},
    {90, 200, 160}, {250, 140, 60}, {130, 130, 130},
};

const char* kCurveColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                              "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};

}  // namespace

std::string metrics_csv_text(const AdaptRunReport& r) {
    std::ostringstream os;
    os << "run_id,sample_index,cumulative_miou,loss,method,seed\n";
    for (size_t i = 0; i < r.miou_trace.size(); ++i)
        os << r.run_id << "," << i << "," << fmtf(r.miou_trace[i]) << "," << fmtf(r.loss_trace[i])
           << "," << r.method << "," << r.seed << "\n";
    return os.str();
}

std::vector<MetricsCsvRow> parse_metrics_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open metrics csv '" + path + "'");
    std::string line;
    if (!std::getline(in, line) || line != "run_id,sample_index,cumulative_miou,loss,method,seed")
        throw IoError("'" + path + "' has an unexpected csv header");
    std::vector<MetricsCsvRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        MetricsCsvRow row;
        std::stringstream ss(line);
        std::string tok;
        std::getline(ss, row.run_id, ',');
        std::getline(ss, tok, ',');
        row.sample_index = std::stoi(tok);
        std::getline(ss, tok, ',');
        row.cumulative_miou = std::strtof(tok.c_str(), nullptr);
        std::getline(ss, tok, ',');
        row.loss = std::strtof(tok.c_str(), nullptr);
        std::getline(ss, row.method, ',');
        std::getline(ss, tok, ',');
        row.seed = std::strtoull(tok.c_str(), nullptr, 10);
        rows.push_back(std::move(row));
    }
    return rows;
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write '" + path + "'");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw IoError("write failed for '" + path + "'");
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string svg_line_chart(const std::vector<Series>& series, const std::string& title,
                           const std::string& x_label, const std::string& y_label) {
    const int W = 720, H = 420, ml = 60, mr = 20, mt = 40, mb = 50;
    const double pw = W - ml - mr, ph = H - mt - mb;
    size_t n = 1;
    float lo = 0.0f, hi = 1e-9f;
    for (const auto& s : series) {
        n = std::max(n, s.values.size());
        for (float v : s.values) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    }
    if (hi <= lo) hi = lo + 1e-6f;

    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
       << "\" viewBox=\"0 0 " << W << " " << H << "\">\n";
    os << "<rect width=\"" << W << "\" height=\"" << H << "\" fill=\"white\"/>\n";
    os << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << title
       << "</text>\n";
    os << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << mt + ph
       << "\" stroke=\"black\"/>\n";
    os << "<line x1=\"" << ml << "\" y1=\"" << mt + ph << "\" x2=\"" << ml + pw << "\" y2=\""
       << mt + ph << "\" stroke=\"black\"/>\n";
    for (int t = 0; t <= 4; ++t) {
        double fy = mt + ph - ph * t / 4.0;
        double val = lo + (hi - lo) * t / 4.0;
        os << "<line x1=\"" << ml - 4 << "\" y1=\"" << fmt_coord(fy) << "\" x2=\"" << ml
           << "\" y2=\"" << fmt_coord(fy) << "\" stroke=\"black\"/>\n";
        os << "<text x=\"" << ml - 8 << "\" y=\"" << fmt_coord(fy + 4)
           << "\" text-anchor=\"end\" font-size=\"11\">" << fmt_coord(val) << "</text>\n";
    }
    os << "<text x=\"" << ml + pw / 2 << "\" y=\"" << H - 12
       << "\" text-anchor=\"middle\" font-size=\"12\">" << x_label << "</text>\n";
    os << "<text x=\"16\" y=\"" << mt + ph / 2
       << "\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 16 " << mt + ph / 2
       << ")\">" << y_label << "</text>\n";

    for (size_t si = 0; si < series.size(); ++si) {
        const auto& s = series[si];
        if (s.values.empty()) continue;
        os << "<polyline fill=\"none\" stroke=\"" << kCurveColors[si % 8]
           << "\" stroke-width=\"1.5\" points=\"";
        for (size_t i = 0; i < s.values.size(); ++i) {
            double fx = ml + (n <= 1 ? 0.0 : pw * static_cast<double>(i) / (n - 1));
            double fy = mt + ph - ph * (s.values[i] - lo) / (hi - lo);
            os << fmt_coord(fx) << "," << fmt_coord(fy) << " ";
        }
        os << "\"/>\n";
        os << "<text x=\"" << ml + 8 << "\" y=\"" << mt + 16 + 16 * si << "\" font-size=\"12\" fill=\""
           << kCurveColors[si % 8] << "\">" << s.name << "</text>\n";
    }
    os << "</svg>\n";
    return os.str();
}

std::string svg_heatmap(const std::vector<float>& values, int rows, int cols,
                        const std::vector<std::string>& row_labels,
                        const std::vector<std::string>& col_labels, const std::string& title) {
    if (static_cast<int>(values.size()) != rows * cols)
        throw DimensionError("svg_heatmap: value count does not match grid");
    float lo = values[0], hi = values[0];
    for (float v : values) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    if (hi <= lo) hi = lo + 1e-9f;
    const int cell = 48, ml = 110, mt = 70;
    const int W = ml + cols * cell + 80, H = mt + rows * cell + 30;

    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
       << "\" viewBox=\"0 0 " << W << " " << H << "\">\n";
    os << "<rect width=\"" << W << "\" height=\"" << H << "\" fill=\"white\"/>\n";
    os << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">" << title
       << "</text>\n";
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) {
            float v = values[static_cast<size_t>(r) * cols + c];
            // shading strictly monotone in the cell value
            double t = (v - lo) / (hi - lo);
            int shade = static_cast<int>(std::lround(235.0 * t + 10.0));
            int x = ml + c * cell, y = mt + r * cell;
            os << "<rect data-row=\"" << r << "\" data-col=\"" << c << "\" x=\"" << x << "\" y=\""
               << y << "\" width=\"" << cell << "\" height=\"" << cell << "\" fill=\"rgb(" << shade
               << "," << shade / 2 << "," << 255 - shade << ")\" stroke=\"white\"/>\n";
            int text_shade = t > 0.55 ? 0 : 255;
            os << "<text x=\"" << x + cell / 2 << "\" y=\"" << y + cell / 2 + 4
               << "\" text-anchor=\"middle\" font-size=\"10\" fill=\"rgb(" << text_shade << ","
               << text_shade << "," << text_shade << ")\">" << fmt_coord(v) << "</text>\n";
        }
    for (int r = 0; r < rows; ++r)
        os << "<text x=\"" << ml - 8 << "\" y=\"" << mt + r * cell + cell / 2 + 4
           << "\" text-anchor=\"end\" font-size=\"11\">"
           << (r < static_cast<int>(row_labels.size()) ? row_labels[r] : std::to_string(r))
           << "</text>\n";
    for (int c = 0; c < cols; ++c)
        os << "<text x=\"" << ml + c * cell + cell / 2 << "\" y=\"" << mt - 10
           << "\" text-anchor=\"middle\" font-size=\"11\">"
           << (c < static_cast<int>(col_labels.size()) ? col_labels[c] : std::to_string(c))
           << "</text>\n";
    os << "</svg>\n";
    return os.str();
}

std::string svg_bar_chart(const std::vector<std::string>& labels, const std::vector<float>& values,
                          const std::string& title, const std::string& y_label) {
    const int W = 720, H = 420, ml = 60, mr = 20, mt = 40, mb = 70;
    const double pw = W - ml - mr, ph = H - mt - mb;
    float lo = 0.0f, hi = 1e-9f;
    for (float v : values) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    if (hi <= lo) hi = lo + 1e-6f;
    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
       << "\" viewBox=\"0 0 " << W << " " << H << "\">\n";
    os << "<rect width=\"" << W << "\" height=\"" << H << "\" fill=\"white\"/>\n";
    os << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << title
       << "</text>\n";
    os << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << mt + ph
       << "\" stroke=\"black\"/>\n";
    os << "<line x1=\"" << ml << "\" y1=\"" << mt + ph << "\" x2=\"" << ml + pw << "\" y2=\""
       << mt + ph << "\" stroke=\"black\"/>\n";
    os << "<text x=\"16\" y=\"" << mt + ph / 2
       << "\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 16 " << mt + ph / 2
       << ")\">" << y_label << "</text>\n";
    double bw = pw / std::max<size_t>(1, values.size());
    for (size_t i = 0; i < values.size(); ++i) {
        double h = ph * (values[i] - lo) / (hi - lo);
        double x = ml + i * bw + bw * 0.15;
        os << "<rect x=\"" << fmt_coord(x) << "\" y=\"" << fmt_coord(mt + ph - h) << "\" width=\""
           << fmt_coord(bw * 0.7) << "\" height=\"" << fmt_coord(h) << "\" fill=\""
           << kCurveColors[i % 8] << "\"/>\n";
        os << "<text x=\"" << fmt_coord(x + bw * 0.35) << "\" y=\"" << mt + ph + 16
           << "\" text-anchor=\"middle\" font-size=\"11\">"
           << (i < labels.size() ? labels[i] : std::to_string(i)) << "</text>\n";
        os << "<text x=\"" << fmt_coord(x + bw * 0.35) << "\" y=\"" << fmt_coord(mt + ph - h - 5)
           << "\" text-anchor=\"middle\" font-size=\"10\">" << fmtf(values[i]) << "</text>\n";
    }
    os << "</svg>\n";
    return os.str();
}

void write_label_ppm(const LabelMap& labels, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write '" + path + "'");
    out << "P6\n" << labels.w << " " << labels.h << "\n255\n";
    constexpr int palette_size = sizeof(kDisplayPalette) / sizeof(kDisplayPalette[0]);
    for (int i = 0; i < labels.h * labels.w; ++i) {
        const unsigned char* c = kDisplayPalette[labels.ids[i] % palette_size];
        out.write(reinterpret_cast<const char*>(c), 3);
    }
}

namespace {

void emit_derived_files(const AdaptRunReport& r, const fs::path& dir) {
    write_text_file((dir / "metrics.csv").string(), metrics_csv_text(r));

    {
        std::ostringstream os;
        os << "class_id,class_name,iou,defined\n";
        for (int c = 0; c < r.classes; ++c)
            os << c << ","
               << (c < static_cast<int>(class_names().size()) ? class_names()[c] : std::to_string(c))
               << "," << fmtf(r.per_class_iou[c]) << "," << static_cast<int>(r.iou_defined[c]) << "\n";
        write_text_file((dir / "per_class_iou.csv").string(), os.str());
    }
    {
        std::ostringstream os;
        os << "gt\\pred";
        for (int c = 0; c < r.classes; ++c) os << "," << c;
        os << "\n";
        for (int g = 0; g < r.classes; ++g) {
            os << g;
            for (int p = 0; p < r.classes; ++p) os << "," << r.confusion.at(g, p);
            os << "\n";
        }
        write_text_file((dir / "confusion.csv").string(), os.str());
    }
    write_text_file((dir / "evolution.svg").string(),
                    svg_line_chart({{r.run_id, r.miou_trace}}, "mIoU evolution (" + r.method + ")",
                                   "sample index", "cumulative mIoU"));
    if (!r.last_wsu.empty()) {
        std::vector<std::string> sup_labels, unsup_labels;
        for (int c = 0; c < r.classes; ++c) {
            std::string nm = c < static_cast<int>(class_names().size()) ? class_names()[c]
                                                                        : std::to_string(c);
            sup_labels.push_back("sup:" + nm);
            unsup_labels.push_back("unsup:" + nm);
        }
        write_text_file((dir / "transfer_matrix.svg").string(),
                        svg_heatmap(r.last_wsu, r.classes, r.classes, sup_labels, unsup_labels,
                                    "transfer matrix (last sample)"));
    }
    if (r.last_pred.h > 0) {
        write_label_ppm(r.last_pred, (dir / "preview_pred.ppm").string());
        write_label_ppm(r.last_gt, (dir / "preview_gt.ppm").string());
    }
}

}  // namespace

void write_run_dir(const AdaptRunReport& r, const std::string& dir) {
    fs::create_directories(dir);
    Container c;
    c.set_meta("kind", "report");
    c.set_meta("run_id", r.run_id);
    c.set_meta("method", r.method);
    c.set_meta("seed", std::to_string(r.seed));
    c.set_meta("checkpoint_hash", r.checkpoint_hash);
    c.set_meta("classes", std::to_string(r.classes));
    int n = static_cast<int>(r.miou_trace.size());
    c.add("trace.miou", Shape{n}, std::vector<float>(r.miou_trace));
    c.add("trace.loss", Shape{n}, std::vector<float>(r.loss_trace));
    if (!r.skipped.empty())
        c.add("trace.skipped", Shape{static_cast<int>(r.skipped.size())},
              std::vector<float>(r.skipped.begin(), r.skipped.end()));
    c.add("confusion", Shape{r.classes, r.classes},
          std::vector<float>(r.confusion.counts.begin(), r.confusion.counts.end()));
    c.add("per_class_iou", Shape{r.classes}, std::vector<float>(r.per_class_iou));
    c.add("iou_defined", Shape{r.classes},
          std::vector<float>(r.iou_defined.begin(), r.iou_defined.end()));
    c.add("final_miou", Shape{1}, {r.final_miou});
    if (!r.last_wsu.empty())
        c.add("wsu.last", Shape{r.classes, r.classes}, std::vector<float>(r.last_wsu));
    if (r.last_pred.h > 0) {
        c.add("labels.pred", Shape{r.last_pred.h, r.last_pred.w},
              std::vector<float>(r.last_pred.ids.begin(), r.last_pred.ids.end()));
        c.add("labels.gt", Shape{r.last_gt.h, r.last_gt.w},
              std::vector<float>(r.last_gt.ids.begin(), r.last_gt.ids.end()));
    }
    c.save((fs::path(dir) / "report.bin").string());

    if (!r.config_snapshot.empty())
        write_text_file((fs::path(dir) / "config_resolved.txt").string(), r.config_snapshot);

    std::ostringstream mf;
    mf << "status complete\n"
       << "run_id " << r.run_id << "\n"
       << "method " << r.method << "\n"
       << "seed " << r.seed << "\n"
       << "checkpoint_hash " << r.checkpoint_hash << "\n"
       << "samples " << n << "\n"
       << "skipped " << r.skipped.size() << "\n"
       << "wall_clock_sec " << r.wall_clock_sec << "\n";
    write_text_file((fs::path(dir) / "manifest.txt").string(), mf.str());

    emit_derived_files(r, dir);
}

AdaptRunReport load_run_dir(const std::string& dir) {
    Container c = Container::load((fs::path(dir) / "report.bin").string());
    if (!c.has_meta("kind") || c.meta("kind") != "report")
        throw IoError("'" + dir + "' does not contain a run report");
    AdaptRunReport r;
    r.run_id = c.meta("run_id");
    r.method = c.meta("method");
    r.seed = std::strtoull(c.meta("seed").c_str(), nullptr, 10);
    r.checkpoint_hash = c.meta("checkpoint_hash");
    r.classes = std::stoi(c.meta("classes"));
    r.miou_trace = c.at("trace.miou").data;
    r.loss_trace = c.at("trace.loss").data;
    if (c.has("trace.skipped"))
        for (float v : c.at("trace.skipped").data) r.skipped.push_back(static_cast<int>(v));
    r.confusion = ConfusionMatrix(r.classes);
    const auto& cm = c.at("confusion").data;
    for (size_t i = 0; i < cm.size(); ++i) r.confusion.counts[i] = static_cast<int64_t>(cm[i]);
    r.per_class_iou = c.at("per_class_iou").data;
    for (float v : c.at("iou_defined").data) r.iou_defined.push_back(v != 0.0f);
    r.final_miou = c.at("final_miou").data[0];
    if (c.has("wsu.last")) r.last_wsu = c.at("wsu.last").data;
    if (c.has("labels.pred")) {
        const auto& p = c.at("labels.pred");
        r.last_pred.h = p.shape[0];
        r.last_pred.w = p.shape[1];
        for (float v : p.data) r.last_pred.ids.push_back(static_cast<uint8_t>(v));
        const auto& g = c.at("labels.gt");
        r.last_gt.h = g.shape[0];
        r.last_gt.w = g.shape[1];
        for (float v : g.data) r.last_gt.ids.push_back(static_cast<uint8_t>(v));
    }
    fs::path cfg = fs::path(dir) / "config_resolved.txt";
    if (fs::exists(cfg)) r.config_snapshot = read_text_file(cfg.string());
    return r;
}

void regenerate_run_dir(const std::string& dir) {
    AdaptRunReport r = load_run_dir(dir);
    emit_derived_files(r, dir);
}

void write_overlay_evolution(const std::vector<AdaptRunReport>& runs, const std::string& path) {
    std::vector<Series> series;
    for (const auto& r : runs) series.push_back({r.run_id, r.miou_trace});
    write_text_file(path, svg_line_chart(series, "mIoU evolution overlay", "sample index",
                                         "cumulative mIoU"));
}

}  // namespace sga
