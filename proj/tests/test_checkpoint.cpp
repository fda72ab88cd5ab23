#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "segadapt/checkpoint.hpp"
#include "segadapt/errors.hpp"

using namespace sga;
namespace fs = std::filesystem;

namespace {

fs::path tmp_file(const char* name) { return fs::temp_directory_path() / name; }

}  // namespace

TEST_CASE("container round-trip is bit-exact") {
    Container c;
    c.set_meta("kind", "test");
    c.set_meta("note", "two words here");
    Rng rng(1);
    std::vector<float> a(12), b(5);
    for (auto& v : a) v = static_cast<float>(rng.normal());
    for (auto& v : b) v = static_cast<float>(rng.normal());
    c.add("weights", {3, 4}, a);
    c.add("bias", {5}, b);

    auto path = tmp_file("sga_container_rt.bin");
    c.save(path.string());
    auto loaded = Container::load(path.string());

    CHECK(loaded.meta("kind") == "test");
    CHECK(loaded.meta("note") == "two words here");
    CHECK(loaded.at("weights").shape == Shape({3, 4}));
    CHECK(loaded.at("weights").data == a);
    CHECK(loaded.at("bias").data == b);

    // identical content serializes to identical bytes
    auto path2 = tmp_file("sga_container_rt2.bin");
    loaded.save(path2.string());
    CHECK(file_content_hash(path.string()) == file_content_hash(path2.string()));
    fs::remove(path);
    fs::remove(path2);
}

TEST_CASE("container header layout matches the documented format") {
    Container c;
    c.set_meta("kind", "golden");
    c.add("t", {2}, {1.0f, 2.0f});
    auto path = tmp_file("sga_container_golden.bin");
    c.save(path.string());

    std::ifstream in(path, std::ios::binary);
    std::string l1, l2, l3, l4;
    std::getline(in, l1);
    std::getline(in, l2);
    std::getline(in, l3);
    std::getline(in, l4);
    CHECK(l1 == "segadapt-container v1");
    CHECK(l2 == "meta kind golden");
    CHECK(l3 == "tensor t f32 2 0 8");
    CHECK(l4 == "end");
    float payload[2];
    in.read(reinterpret_cast<char*>(payload), 8);
    CHECK(payload[0] == 1.0f);
    CHECK(payload[1] == 2.0f);
    fs::remove(path);
}

TEST_CASE("scalar entries use the '-' dims marker") {
    Container c;
    c.add("s", {}, {3.5f});
    auto path = tmp_file("sga_container_scalar.bin");
    c.save(path.string());
    auto loaded = Container::load(path.string());
    CHECK(loaded.at("s").shape.empty());
    CHECK(loaded.at("s").data[0] == 3.5f);
    fs::remove(path);
}

TEST_CASE("container error paths") {
    Container c;
    c.add("x", {2}, {1, 2});
    CHECK_THROWS_AS(c.add("x", {2}, {3, 4}), IoError);           // duplicate
    CHECK_THROWS_AS(c.add("y", {3}, {1, 2}), DimensionError);    // shape mismatch
    CHECK_THROWS_AS(c.at("missing"), IoError);
    CHECK_THROWS_AS(c.meta("missing"), IoError);
    CHECK_THROWS_AS(Container::load("/nonexistent/file.bin"), IoError);

    auto path = tmp_file("sga_container_bad.bin");
    std::ofstream(path) << "not a container\n";
    CHECK_THROWS_AS(Container::load(path.string()), IoError);
    fs::remove(path);
}
