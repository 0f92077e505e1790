#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "mtlhg/io.hpp"
#include "mtlhg/plot.hpp"

using namespace mtlhg;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("mtlhg_io_" + std::to_string(std::rand()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

}  // namespace

TEST_CASE("pgm and ppm round trips") {
    TempDir dir;
    Rng rng(71);

    SECTION("8-bit label maps") {
        LabelMap lm(13, 7, 5);
        for (auto& v : lm.ids) v = static_cast<std::uint8_t>(rng.uniform_int(5));
        write_pgm8(dir.file("l.pgm"), lm.w, lm.h, lm.ids.data());
        LabelMap back = read_pgm8_labels(dir.file("l.pgm"), 5);
        CHECK(back.w == 13);
        CHECK(back.h == 7);
        CHECK(back.ids == lm.ids);
    }
    SECTION("16-bit instance maps keep large ids") {
        InstanceMap m(9, 4);
        for (auto& v : m.ids) v = static_cast<std::uint16_t>(rng.uniform_int(60000));
        write_pgm16(dir.file("i.pgm"), m.w, m.h, m.ids.data());
        InstanceMap back = read_pgm16_instances(dir.file("i.pgm"));
        CHECK(back.ids == m.ids);
    }
    SECTION("ppm images survive 8-bit quantization") {
        Tensor img(1, 3, 6, 8);
        for (std::int64_t i = 0; i < img.size(); ++i) img[i] = rng.uniform01();
        write_ppm8(dir.file("img.ppm"), img);
        Tensor back = read_ppm8(dir.file("img.ppm"));
        REQUIRE(back.shape() == img.shape());
        for (std::int64_t i = 0; i < img.size(); ++i) {
            REQUIRE(back[i] == Catch::Approx(img[i]).margin(0.5 / 255.0 + 1e-9));
        }
    }
    SECTION("second write of the same raster is byte-identical") {
        LabelMap lm(5, 5, 3);
        for (auto& v : lm.ids) v = static_cast<std::uint8_t>(rng.uniform_int(3));
        write_pgm8(dir.file("a.pgm"), lm.w, lm.h, lm.ids.data());
        write_pgm8(dir.file("b.pgm"), lm.w, lm.h, lm.ids.data());
        std::ifstream a(dir.file("a.pgm"), std::ios::binary), b(dir.file("b.pgm"), std::ios::binary);
        std::string sa((std::istreambuf_iterator<char>(a)), std::istreambuf_iterator<char>());
        std::string sb((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
        CHECK(sa == sb);
    }
    SECTION("bad headers raise format errors") {
        std::ofstream os(dir.file("bad.pgm"), std::ios::binary);
        os << "P3\n2 2\n255\nxxxx";
        os.close();
        CHECK_THROWS_AS(read_pgm8_labels(dir.file("bad.pgm"), 4), FormatError);
        CHECK_THROWS_AS(read_ppm8(dir.file("missing.ppm")), FormatError);
    }
}

TEST_CASE("dataset manifest round trip and errors") {
    TempDir dir;
    std::vector<ManifestRecord> records{{"a.ppm", "b.pgm", "c.pgm"}, {"d.ppm", "e.pgm", "f.pgm"}};
    write_dataset_manifest(dir.file("m.txt"), records);
    auto back = read_dataset_manifest(dir.file("m.txt"));
    REQUIRE(back.size() == 2);
    CHECK(back[0].image == "a.ppm");
    CHECK(back[1].instances == "f.pgm");

    std::ofstream os(dir.file("bad.txt"));
    os << "only-one-field\n";
    os.close();
    CHECK_THROWS_AS(read_dataset_manifest(dir.file("bad.txt")), FormatError);
}

TEST_CASE("key = value parsing") {
    TempDir dir;
    {
        std::ofstream os(dir.file("c.txt"));
        os << "# comment line\n"
           << "alpha = 1.5\n"
           << "name = hello world  # trailing comment\n"
           << "\n"
           << "beta=2\n";
    }
    auto kv = parse_kv_file(dir.file("c.txt"));
    CHECK(kv.at("alpha") == "1.5");
    CHECK(kv.at("name") == "hello world");
    CHECK(kv.at("beta") == "2");

    {
        std::ofstream os(dir.file("bad.txt"));
        os << "no equals sign here\n";
    }
    CHECK_THROWS_AS(parse_kv_file(dir.file("bad.txt")), ConfigError);
    CHECK_THROWS_AS(parse_kv_file(dir.file("missing.txt")), ConfigError);
}

TEST_CASE("csv emitters use comma separators and LF endings") {
    TempDir dir;
    ClassWeights cw;
    cw.weight = {2.5, 1.0, 0.625};
    cw.frequency = {0.2, 0.5, 0.8};
    cw.median_frequency = 0.5;
    write_class_weights_csv(dir.file("w.csv"), cw);
    std::ifstream is(dir.file("w.csv"), std::ios::binary);
    std::string body((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    CHECK(body == "class,freq,weight\n0,0.20000000000000001,2.5\n1,0.5,1\n2,0.80000000000000004,0.625\n");
}

TEST_CASE("run manifest checksums its outputs and is written atomically") {
    TempDir dir;
    {
        std::ofstream os(dir.file("artifact.txt"), std::ios::binary);
        os << "hello\n";
    }
    RunManifest rm;
    rm.command = "test";
    rm.seed = 9;
    rm.config = {{"k", "v"}};
    rm.outputs = {dir.file("artifact.txt")};
    write_run_manifest(rm, dir.file("run.json"));
    CHECK_FALSE(fs::exists(dir.file("run.json.tmp")));

    std::ifstream is(dir.file("run.json"));
    std::string body((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    // crc32 of "hello\n" is the well-known 0x363a3020
    CHECK(body.find("363a3020") != std::string::npos);
    CHECK(body.find("\"command\": \"test\"") != std::string::npos);

    SECTION("a missing output makes the manifest write fail") {
        rm.outputs.push_back(dir.file("nope.bin"));
        CHECK_THROWS_AS(write_run_manifest(rm, dir.file("run2.json")), FormatError);
        CHECK_FALSE(fs::exists(dir.file("run2.json")));
    }
}

TEST_CASE("chart rendering is deterministic and rejects empty input") {
    TempDir dir;
    Series s1{"alpha", {1, 2, 3, 4}, {0.5, 0.25, 0.2, 0.15}};
    Series s2{"beta", {1, 2, 3, 4}, {0.6, 0.5, 0.45, 0.44}};
    render_chart({s1, s2}, "width", "error_pct", dir.file("a.png"));
    render_chart({s1, s2}, "width", "error_pct", dir.file("b.png"));
    std::ifstream a(dir.file("a.png"), std::ios::binary), b(dir.file("b.png"), std::ios::binary);
    std::string sa((std::istreambuf_iterator<char>(a)), std::istreambuf_iterator<char>());
    std::string sb((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
    REQUIRE(!sa.empty());
    CHECK(sa == sb);
    // PNG signature
    CHECK(static_cast<unsigned char>(sa[0]) == 0x89);
    CHECK(sa.substr(1, 3) == "PNG");

    CHECK_THROWS_AS(render_chart({}, "x", "y", dir.file("c.png")), ConfigError);
    Series nan_only{"gamma", {1, 2}, {std::numeric_limits<double>::quiet_NaN(),
                                      std::numeric_limits<double>::quiet_NaN()}};
    CHECK_THROWS_AS(render_chart({nan_only}, "x", "y", dir.file("d.png")), ConfigError);
}

TEST_CASE("latent csv layout") {
    TempDir dir;
    LatentDump dump;
    dump.dim = 3;
    dump.data = {1.0, 2.0, 3.0, 4.0, 5.0, 6.0};
    dump.tags = {2, 1};
    write_latent_csv(dir.file("l.csv"), dump);
    std::ifstream is(dir.file("l.csv"));
    std::string line;
    std::getline(is, line);
    CHECK(line == "tag,v0,v1,v2");
    std::getline(is, line);
    CHECK(line == "2,1,2,3");
    std::getline(is, line);
    CHECK(line == "1,4,5,6");
}
