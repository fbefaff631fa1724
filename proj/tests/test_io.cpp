#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "floe/flow1.hpp"
#include "floe/synthetic.hpp"
#include "floe/uq.hpp"
#include "floe/variational.hpp"

using namespace floe;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("floe_io_" + std::to_string(::getpid()) + "_" +
                                            std::to_string(counter()++));
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
    static int& counter() {
        static int c = 0;
        return c;
    }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

NetConfig small_cfg() {
    NetConfig cfg;
    cfg.chip_side = 8;
    cfg.token_grid = 2;
    cfg.patch_side = 2;
    cfg.hidden = 4;
    cfg.heads = 2;
    cfg.repeats = 2;
    return cfg;
}

}  // namespace

TEST_CASE("FLOW1 deterministic checkpoint round-trips byte-exactly") {
    TempDir dir;
    ModelT<float> m;
    m.cfg = small_cfg();
    m.mode = TrainMode::deterministic;
    m.sensor = Sensor::rcm;
    m.dropout_p = 0.0;
    m.params = init_params<float>(m.cfg, 5);

    const std::string p1 = dir.file("a.bin"), p2 = dir.file("b.bin");
    save_model(p1, m);
    auto loaded = load_model<float>(p1);
    CHECK(loaded.mode == TrainMode::deterministic);
    CHECK(loaded.sensor == Sensor::rcm);
    CHECK(loaded.cfg.chip_side == 8);
    CHECK(loaded.params.items.size() == m.params.items.size());
    save_model(p2, loaded);

    const auto b1 = read_file_bytes(p1);
    const auto b2 = read_file_bytes(p2);
    REQUIRE(b1.size() == b2.size());
    CHECK(b1 == b2);
}

TEST_CASE("FLOW1 bayesian checkpoint keeps mu/rho pairs and round-trips") {
    TempDir dir;
    ModelT<double> m;
    m.cfg = small_cfg();
    m.mode = TrainMode::bayesian;
    m.sensor = Sensor::amsr2;
    m.dropout_p = 0.1;
    m.posterior = bayesianize(init_params<double>(m.cfg, 6), 0.05);

    const std::string p1 = dir.file("bayes.bin");
    save_model(p1, m);
    const Flow1File raw = flow1_read(p1);
    CHECK(raw.kind == Flow1File::kModel);
    CHECK(raw.has_tensor("patch_proj.w.mu"));
    CHECK(raw.has_tensor("patch_proj.w.rho"));

    auto loaded = load_model<double>(p1);
    REQUIRE(loaded.bayesian());
    CHECK(loaded.posterior->items.size() == m.posterior->items.size());
    CHECK(loaded.dropout_p == doctest::Approx(0.1));

    const std::string p2 = dir.file("bayes2.bin");
    save_model(p2, loaded);
    CHECK(read_file_bytes(p1) == read_file_bytes(p2));
}

TEST_CASE("FLOW1 corrupted inputs fail with distinct errors") {
    TempDir dir;
    ModelT<float> m;
    m.cfg = small_cfg();
    m.params = init_params<float>(m.cfg, 7);
    const std::string path = dir.file("m.bin");
    save_model(path, m);
    auto bytes = read_file_bytes(path);

    SUBCASE("bad magic") {
        bytes[0] = 'X';
        std::ofstream(path, std::ios::binary).write(reinterpret_cast<char*>(bytes.data()),
                                                    static_cast<std::streamsize>(bytes.size()));
        CHECK_THROWS_WITH_AS(flow1_read(path), doctest::Contains("bad magic"), FormatError);
    }
    SUBCASE("truncation mid-tensor") {
        bytes.resize(bytes.size() / 2);
        std::ofstream(path, std::ios::binary).write(reinterpret_cast<char*>(bytes.data()),
                                                    static_cast<std::streamsize>(bytes.size()));
        CHECK_THROWS_WITH_AS(flow1_read(path), doctest::Contains("truncated"), FormatError);
    }
    SUBCASE("trailing garbage") {
        bytes.push_back(0x42);
        std::ofstream(path, std::ios::binary).write(reinterpret_cast<char*>(bytes.data()),
                                                    static_cast<std::streamsize>(bytes.size()));
        CHECK_THROWS_WITH_AS(flow1_read(path), doctest::Contains("trailing"), FormatError);
    }
    SUBCASE("missing file") { CHECK_THROWS_AS(flow1_read(dir.file("nope.bin")), IoError); }
}

TEST_CASE("FLOW1 uncertainty field round-trips with its tags") {
    TempDir dir;
    UncertaintyField f;
    f.side = 4;
    f.samples = 8;
    f.method = UqMethod::mc_dropout;
    f.sensor = Sensor::rcm;
    f.seed = 777;
    f.mean.assign(16, 0.25);
    f.variance.assign(16, 0.01);
    const std::string path = dir.file("f.uq");
    save_field(path, f);
    auto g = load_field(path);
    CHECK(g.method == UqMethod::mc_dropout);
    CHECK(g.sensor == Sensor::rcm);
    CHECK(g.samples == 8);
    CHECK(g.seed == 777);
    CHECK(g.mean == std::vector<double>(16, 0.25));
    const std::string path2 = dir.file("f2.uq");
    save_field(path2, g);
    CHECK(read_file_bytes(path) == read_file_bytes(path2));
}

TEST_CASE("SICC1 chip container round-trips bit-exactly") {
    TempDir dir;
    auto records = build_dataset(3, 99, 16);
    const std::string p1 = dir.file("chip.sicc"), p2 = dir.file("chip2.sicc");
    write_chip(p1, records[4]);
    auto loaded = read_chip(p1);
    CHECK(loaded.chip.sensor == records[4].chip.sensor);
    CHECK(loaded.split == records[4].split);
    CHECK(loaded.scene_id == records[4].scene_id);
    CHECK(loaded.chip.ch0 == records[4].chip.ch0);
    CHECK(loaded.weak == records[4].weak);
    CHECK(loaded.cls == records[4].cls);
    CHECK(loaded.truth == records[4].truth);
    write_chip(p2, loaded);
    CHECK(read_file_bytes(p1) == read_file_bytes(p2));
}

TEST_CASE("SICC1 corrupted inputs fail with distinct errors") {
    TempDir dir;
    auto records = build_dataset(3, 100, 16);
    const std::string path = dir.file("chip.sicc");
    write_chip(path, records[0]);
    auto bytes = read_file_bytes(path);

    SUBCASE("bad magic") {
        bytes[1] = 'Z';
        std::ofstream(path, std::ios::binary).write(reinterpret_cast<char*>(bytes.data()),
                                                    static_cast<std::streamsize>(bytes.size()));
        CHECK_THROWS_WITH_AS(read_chip(path), doctest::Contains("bad magic"), FormatError);
    }
    SUBCASE("truncation mid-grid") {
        bytes.resize(bytes.size() - 100);
        std::ofstream(path, std::ios::binary).write(reinterpret_cast<char*>(bytes.data()),
                                                    static_cast<std::streamsize>(bytes.size()));
        CHECK_THROWS_WITH_AS(read_chip(path), doctest::Contains("truncated"), FormatError);
    }
    SUBCASE("dimension tampering") {
        bytes[5] = 0x55;  // chip side low byte
        std::ofstream(path, std::ios::binary).write(reinterpret_cast<char*>(bytes.data()),
                                                    static_cast<std::streamsize>(bytes.size()));
        CHECK_THROWS_AS(read_chip(path), FormatError);
    }
}

TEST_CASE("manifest CSV round-trips") {
    std::vector<ManifestRow> rows = {
        {0, Split::train, 11, "chips/s1_000.sicc"},
        {0, Split::train, 11, "chips/rcm_000.sicc"},
        {1, Split::test, 12, "chips/s1_001.sicc"},
    };
    const std::string csv = manifest_csv(rows);
    CHECK(csv.substr(0, 25) == "scene_id,split,seed,path\n");
    auto parsed = parse_manifest_csv(csv);
    REQUIRE(parsed.size() == 3);
    CHECK(parsed[2].split == Split::test);
    CHECK(parsed[2].path == "chips/s1_001.sicc");
    CHECK_THROWS_AS(parse_manifest_csv("bogus\n"), FormatError);
}

TEST_CASE("atomic writes leave no temp file behind") {
    TempDir dir;
    atomic_write_file(dir.file("x.txt"), std::string("hello"));
    CHECK(fs::exists(dir.file("x.txt")));
    CHECK_FALSE(fs::exists(dir.file("x.txt.tmp")));
}
