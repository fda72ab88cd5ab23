#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>

#include "segadapt.h"

namespace fs = std::filesystem;

TEST_CASE("version and error state") {
    CHECK(std::strlen(sga_version()) > 0);
    CHECK(sga_last_error() != nullptr);
}

TEST_CASE("config handle lifecycle and validation") {
    sga_config* cfg = nullptr;
    REQUIRE(sga_config_create(&cfg) == SGA_OK);

    CHECK(sga_config_set(cfg, "adapt.K", "4") == SGA_OK);
    char buf[64];
    CHECK(sga_config_get(cfg, "adapt.K", buf, sizeof(buf)) == SGA_OK);
    CHECK(std::string(buf) == "4");

    CHECK(sga_config_set(cfg, "bogus.key", "1") == SGA_ERR_CONFIG);
    CHECK(std::string(sga_last_error()).find("bogus.key") != std::string::npos);
    CHECK(sga_config_set(cfg, "adapt.method", "nonsense") == SGA_ERR_CONFIG);
    CHECK(sga_config_get(cfg, "no.such.key", buf, sizeof(buf)) == SGA_ERR_CONFIG);
    CHECK(sga_config_set(nullptr, "seed", "1") == SGA_ERR_CONFIG);

    sga_config_free(cfg);
}

TEST_CASE("config file loading reports io and key errors") {
    sga_config* cfg = nullptr;
    CHECK(sga_config_load("/nonexistent/config.txt", &cfg) == SGA_ERR_IO);

    auto path = fs::temp_directory_path() / "sga_capi_bad.txt";
    {
        std::ofstream out(path);
        out << "data.unknown_key = 3\n";
    }
    CHECK(sga_config_load(path.string().c_str(), &cfg) == SGA_ERR_CONFIG);
    CHECK(std::string(sga_last_error()).find("data.unknown_key") != std::string::npos);
    fs::remove(path);
}

TEST_CASE("end-to-end through the c api on a tiny problem") {
    auto root = (fs::temp_directory_path() / "sga_capi_e2e").string();
    fs::remove_all(root);
    sga_config* cfg = nullptr;
    REQUIRE(sga_config_create(&cfg) == SGA_OK);
    REQUIRE(sga_config_set(cfg, "data.image_size", "32") == SGA_OK);
    REQUIRE(sga_config_set(cfg, "data.source_count", "12") == SGA_OK);
    REQUIRE(sga_config_set(cfg, "data.val_count", "4") == SGA_OK);
    REQUIRE(sga_config_set(cfg, "data.target_count", "5") == SGA_OK);
    REQUIRE(sga_config_set(cfg, "train.epochs", "1") == SGA_OK);
    REQUIRE(sga_config_set(cfg, "augment.patch_size", "8") == SGA_OK);

    REQUIRE(sga_gen_data(cfg, (root + "/data").c_str()) == SGA_OK);
    CHECK(fs::exists(root + "/data/target-stream/manifest"));

    REQUIRE(sga_pretrain(cfg, (root + "/data").c_str(), (root + "/pre").c_str(), nullptr) == SGA_OK);
    std::string ckpt = root + "/pre/checkpoint.bin";
    CHECK(fs::exists(ckpt));

    REQUIRE(sga_config_set(cfg, "adapt.method", "trans-consistency") == SGA_OK);
    REQUIRE(sga_adapt(cfg, ckpt.c_str(), (root + "/data/target-stream").c_str(),
                      (root + "/run").c_str()) == SGA_OK);
    double miou = -1;
    REQUIRE(sga_run_final_miou((root + "/run").c_str(), &miou) == SGA_OK);
    CHECK(miou > 0.0);
    CHECK(miou <= 1.0);

    std::string run_dir = root + "/run";
    const char* dirs[] = {run_dir.c_str()};
    CHECK(sga_report(dirs, 1, nullptr) == SGA_OK);

    // missing artifacts surface as io errors
    CHECK(sga_adapt(cfg, "/nonexistent.bin", (root + "/data/target-stream").c_str(),
                    (root + "/run2").c_str()) == SGA_ERR_IO);
    CHECK(sga_run_final_miou("/nonexistent/run", &miou) == SGA_ERR_IO);

    sga_config_free(cfg);
    fs::remove_all(root);
}
