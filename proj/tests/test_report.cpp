#include <doctest.h>

#include <filesystem>

#include "segadapt/report.hpp"
#include "segadapt/rng.hpp"

using namespace sga;
namespace fs = std::filesystem;

namespace {

AdaptRunReport sample_report(int n = 12) {
    AdaptRunReport r;
    r.run_id = "adapt-test-US-K1-l2-logits-s42";
    r.method = "trans-consistency";
    r.seed = 42;
    r.checkpoint_hash = "00aa11bb22cc33dd";
    r.classes = 5;
    Rng rng(1);
    for (int i = 0; i < n; ++i) {
        r.miou_trace.push_back(static_cast<float>(0.3 + 0.02 * i + rng.uniform() * 0.01));
        r.loss_trace.push_back(static_cast<float>(rng.uniform()));
    }
    r.skipped = {3};
    r.confusion = ConfusionMatrix(5);
    for (auto& c : r.confusion.counts) c = rng.uniform_int(50);
    for (int c = 0; c < 5; ++c) {
        r.per_class_iou.push_back(static_cast<float>(rng.uniform()));
        r.iou_defined.push_back(1);
    }
    r.final_miou = r.miou_trace.back();
    for (int i = 0; i < 25; ++i) r.last_wsu.push_back(static_cast<float>(rng.uniform()));
    r.last_pred = LabelMap{8, 8, std::vector<uint8_t>(64, 1)};
    r.last_gt = LabelMap{8, 8, std::vector<uint8_t>(64, 2)};
    r.config_snapshot = "seed = 42\n";
    r.wall_clock_sec = 1.5;
    return r;
}

}  // namespace

TEST_CASE("metrics csv has one data row per sample and round-trips exactly") {
    auto r = sample_report(17);
    auto dir = fs::temp_directory_path() / "sga_report_csv";
    fs::remove_all(dir);
    write_run_dir(r, dir.string());

    auto rows = parse_metrics_csv((dir / "metrics.csv").string());
    REQUIRE(rows.size() == 17);
    for (size_t i = 0; i < rows.size(); ++i) {
        CHECK(rows[i].run_id == r.run_id);
        CHECK(rows[i].sample_index == static_cast<int>(i));
        CHECK(rows[i].cumulative_miou == r.miou_trace[i]);  // %.9g round-trips float exactly
        CHECK(rows[i].loss == r.loss_trace[i]);
        CHECK(rows[i].method == r.method);
        CHECK(rows[i].seed == r.seed);
    }
    fs::remove_all(dir);
}

TEST_CASE("run dir round-trip preserves the report") {
    auto r = sample_report();
    auto dir = fs::temp_directory_path() / "sga_report_rt";
    fs::remove_all(dir);
    write_run_dir(r, dir.string());
    auto loaded = load_run_dir(dir.string());
    CHECK(loaded.run_id == r.run_id);
    CHECK(loaded.method == r.method);
    CHECK(loaded.seed == r.seed);
    CHECK(loaded.miou_trace == r.miou_trace);
    CHECK(loaded.loss_trace == r.loss_trace);
    CHECK(loaded.skipped == r.skipped);
    CHECK(loaded.confusion.counts == r.confusion.counts);
    CHECK(loaded.last_wsu == r.last_wsu);
    CHECK(loaded.last_pred.ids == r.last_pred.ids);
    CHECK(loaded.final_miou == r.final_miou);
    CHECK(loaded.config_snapshot == r.config_snapshot);
    fs::remove_all(dir);
}

TEST_CASE("report regeneration is byte-idempotent") {
    auto r = sample_report();
    auto dir = fs::temp_directory_path() / "sga_report_regen";
    fs::remove_all(dir);
    write_run_dir(r, dir.string());
    auto before_csv = read_text_file((dir / "metrics.csv").string());
    auto before_svg = read_text_file((dir / "evolution.svg").string());
    auto before_heat = read_text_file((dir / "transfer_matrix.svg").string());
    regenerate_run_dir(dir.string());
    CHECK(read_text_file((dir / "metrics.csv").string()) == before_csv);
    CHECK(read_text_file((dir / "evolution.svg").string()) == before_svg);
    CHECK(read_text_file((dir / "transfer_matrix.svg").string()) == before_heat);
    fs::remove_all(dir);
}

namespace {

// red channel of each cell <rect> fill, in emission (row-major) order
std::vector<int> heatmap_cell_reds(const std::string& svg, size_t expect) {
    std::vector<int> reds;
    size_t pos = 0;
    while ((pos = svg.find("<rect data-row", pos)) != std::string::npos) {
        size_t fill = svg.find("fill=\"rgb(", pos);
        reds.push_back(std::stoi(svg.substr(fill + 10)));
        pos = fill;
        if (reds.size() == expect) break;
    }
    return reds;
}

}  // namespace

TEST_CASE("heatmap shading is monotone in the cell value") {
    std::vector<float> vals = {0.05f, 0.9f, 0.4f, 0.7f};
    auto svg = svg_heatmap(vals, 2, 2, {"r0", "r1"}, {"c0", "c1"}, "test");
    auto reds = heatmap_cell_reds(svg, 4);
    REQUIRE(reds.size() == 4);
    CHECK(reds[0] < reds[2]);
    CHECK(reds[2] < reds[3]);
    CHECK(reds[3] < reds[1]);
}

TEST_CASE("identity transfer matrix renders a visible diagonal") {
    std::vector<float> eye(25, 0.0f);
    for (int i = 0; i < 5; ++i) eye[i * 5 + i] = 1.0f;
    auto svg = svg_heatmap(eye, 5, 5, class_names(), class_names(), "identity");
    auto reds = heatmap_cell_reds(svg, 25);
    REQUIRE(reds.size() == 25);
    for (int r = 0; r < 5; ++r)
        for (int c = 0; c < 5; ++c) {
            if (r == c) CHECK(reds[r * 5 + c] > 200);
            else CHECK(reds[r * 5 + c] < 50);
        }
}

TEST_CASE("svg charts are well formed") {
    auto line = svg_line_chart({{"a", {0.1f, 0.2f, 0.3f}}, {"b", {0.3f, 0.2f}}}, "t", "x", "y");
    CHECK(line.find("<svg") == 0);
    CHECK(line.rfind("</svg>\n") == line.size() - 7);
    CHECK(line.find("<polyline") != std::string::npos);
    auto bars = svg_bar_chart({"p", "q"}, {1.0f, 2.0f}, "t", "y");
    CHECK(bars.find("<svg") == 0);
    CHECK(bars.find("<rect") != std::string::npos);
}

TEST_CASE("label preview is a valid p6 image") {
    LabelMap lm{4, 6, std::vector<uint8_t>(24, 3)};
    auto path = fs::temp_directory_path() / "sga_preview.ppm";
    write_label_ppm(lm, path.string());
    auto content = read_text_file(path.string());
    CHECK(content.substr(0, 3) == "P6\n");
    CHECK(content.find("4") != std::string::npos);
    CHECK(content.size() > 24 * 3);
    fs::remove(path);
}

TEST_CASE("overlay evolution includes every run") {
    auto a = sample_report();
    auto b = sample_report();
    b.run_id = "other-run";
    auto path = fs::temp_directory_path() / "sga_overlay.svg";
    write_overlay_evolution({a, b}, path.string());
    auto svg = read_text_file(path.string());
    CHECK(svg.find(a.run_id) != std::string::npos);
    CHECK(svg.find("other-run") != std::string::npos);
    fs::remove(path);
}
