#include <doctest.h>

#include <unistd.h>

#include <filesystem>
#include <fstream>

#include "hypernet/data_io.hpp"
#include "testing.hpp"

using namespace hn;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir(const std::string& tag) {
        path = fs::temp_directory_path() / ("hn_test_" + tag + "_" + std::to_string(::getpid()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string str() const { return path.string(); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

std::string slurp(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    REQUIRE(f.good());
    return std::string(std::istreambuf_iterator<char>(f), {});
}

void spit(const std::string& path, const std::string& bytes) {
    std::ofstream f(path, std::ios::binary);
    f << bytes;
}

}  // namespace

TEST_CASE("shapes dataset is deterministic and well formed") {
    ShapesDatasetConfig cfg;
    cfg.count = 6;
    cfg.image_size = 64;
    cfg.seed = 42;
    auto a = generate_shapes_dataset(cfg);
    auto b = generate_shapes_dataset(cfg);
    REQUIRE(a.size() == 6);

    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].id == b[i].id);
        CHECK(a[i].image.data == b[i].image.data);
        REQUIRE(a[i].annotations.size() == b[i].annotations.size());
        CHECK(!a[i].annotations.empty());
        for (const Annotation& ann : a[i].annotations) {
            CHECK(ann.box.valid());
            CHECK(ann.box.x_min >= 0);
            CHECK(ann.box.y_max <= 64);
            CHECK(ann.class_id >= 1);
            CHECK(ann.class_id <= cfg.num_classes);
        }
        for (float v : a[i].image.data) {
            CHECK(v >= 0.0f);
            CHECK(v <= 1.0f);
        }
    }

    cfg.seed = 43;
    auto c = generate_shapes_dataset(cfg);
    CHECK(a[0].image.data != c[0].image.data);
}

TEST_CASE("ppm round trip") {
    TempDir dir("ppm");
    auto gen = hn::testing::rng(1);
    TensorF img = hn::testing::random_tensor<float>({3, 7, 9}, gen, 0.0, 1.0);
    write_ppm(dir.file("x.ppm"), img);
    TensorF back = read_ppm(dir.file("x.ppm"));
    REQUIRE(back.shape == img.shape);
    // 8-bit quantization bounds the error
    for (std::size_t i = 0; i < img.size(); ++i)
        CHECK(std::abs(back[i] - img[i]) <= 0.5f / 255.0f + 1e-6f);

    // a second write of the decoded image reproduces the file exactly
    write_ppm(dir.file("y.ppm"), back);
    CHECK(slurp(dir.file("x.ppm")) == slurp(dir.file("y.ppm")));
}

TEST_CASE("ppm parse errors carry context") {
    TempDir dir("ppmbad");
    spit(dir.file("bad.ppm"), "P5\n2 2\n255\nxxxx");
    CHECK_THROWS_AS(read_ppm(dir.file("bad.ppm")), DataError);
    spit(dir.file("trunc.ppm"), "P6\n4 4\n255\nshort");
    CHECK_THROWS_AS(read_ppm(dir.file("trunc.ppm")), DataError);
    CHECK_THROWS_AS(read_ppm(dir.file("missing.ppm")), DataError);
}

TEST_CASE("annotation round trip and validation") {
    TempDir dir("ann");
    Sample s;
    s.id = "img_000";
    s.image = TensorF({3, 16, 16});
    s.annotations = {{{1, 2, 9, 12}, 2}, {{0, 0, 5, 5}, 1}};
    write_annotations(dir.file("a.json"), s);

    std::string id;
    auto back = read_annotations(dir.file("a.json"), &id);
    CHECK(id == "img_000");
    REQUIRE(back.size() == 2);
    CHECK(back[0].box.x_max == doctest::Approx(9.0));
    CHECK(back[0].class_id == 2);

    spit(dir.file("bad_class.json"),
         R"({"id":"x","width":16,"height":16,"objects":[{"class":0,"x_min":1,"y_min":1,"x_max":4,"y_max":4}]})");
    CHECK_THROWS_AS(read_annotations(dir.file("bad_class.json")), DataError);

    spit(dir.file("bad_box.json"),
         R"({"id":"x","width":16,"height":16,"objects":[{"class":1,"x_min":5,"y_min":1,"x_max":4,"y_max":4}]})");
    CHECK_THROWS_AS(read_annotations(dir.file("bad_box.json")), DataError);

    spit(dir.file("not_json.json"), "hello");
    CHECK_THROWS_AS(read_annotations(dir.file("not_json.json")), DataError);
}

TEST_CASE("dataset round trip") {
    TempDir dir("ds");
    ShapesDatasetConfig cfg;
    cfg.count = 4;
    cfg.image_size = 32;
    cfg.seed = 7;
    auto ds = generate_shapes_dataset(cfg);
    write_dataset(dir.str(), ds, cfg.num_classes);

    CHECK(dataset_num_classes(dir.str()) == cfg.num_classes);
    auto back = read_dataset(dir.str());
    REQUIRE(back.size() == ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i) {
        CHECK(back[i].id == ds[i].id);
        CHECK(back[i].annotations.size() == ds[i].annotations.size());
        REQUIRE(back[i].image.shape == ds[i].image.shape);
        for (std::size_t j = 0; j < ds[i].image.size(); ++j)
            CHECK(std::abs(back[i].image[j] - ds[i].image[j]) <= 0.5f / 255.0f + 1e-6f);
    }

    CHECK_THROWS_AS(read_dataset(dir.file("nope")), DataError);
    CHECK_THROWS_AS(read_sample(dir.str(), "missing_id"), DataError);
}

TEST_CASE("checkpoint save/load/save is byte identical") {
    TempDir dir("ckpt");
    auto gen = hn::testing::rng(5);
    TensorF w1 = hn::testing::random_tensor<float>({4, 3, 3, 3}, gen);
    TensorF w2 = hn::testing::random_tensor<float>({10}, gen);
    const std::string cfg = R"({"arch":"tiny"})";

    save_checkpoint(dir.file("m.bin"), cfg, "unified", {{"conv.weight", &w1}, {"fc.bias", &w2}});
    Checkpoint ck = load_checkpoint(dir.file("m.bin"));
    CHECK(ck.config_json == cfg);
    CHECK(ck.stage_tag == "unified");
    REQUIRE(ck.tensors.size() == 2);
    CHECK(ck.tensors[0].first == "conv.weight");
    CHECK(ck.tensors[0].second.data == w1.data);
    CHECK(ck.tensors[1].second.shape == std::vector<int>{10});

    save_checkpoint(dir.file("m2.bin"), ck.config_json, ck.stage_tag,
                    {{"conv.weight", &ck.tensors[0].second}, {"fc.bias", &ck.tensors[1].second}});
    CHECK(slurp(dir.file("m.bin")) == slurp(dir.file("m2.bin")));
}

TEST_CASE("checkpoint rejects corrupt files") {
    TempDir dir("ckptbad");
    auto gen = hn::testing::rng(6);
    TensorF w = hn::testing::random_tensor<float>({8}, gen);
    save_checkpoint(dir.file("ok.bin"), "{}", "s", {{"w", &w}});

    std::string bytes = slurp(dir.file("ok.bin"));
    std::string magic = bytes;
    magic[0] = 'X';
    spit(dir.file("magic.bin"), magic);
    CHECK_THROWS_AS(load_checkpoint(dir.file("magic.bin")), DataError);

    std::string version = bytes;
    version[8] = static_cast<char>(0x7f);  // unsupported version
    spit(dir.file("version.bin"), version);
    CHECK_THROWS_AS(load_checkpoint(dir.file("version.bin")), DataError);

    spit(dir.file("trunc.bin"), bytes.substr(0, bytes.size() / 2));
    CHECK_THROWS_AS(load_checkpoint(dir.file("trunc.bin")), DataError);

    CHECK_THROWS_AS(load_checkpoint(dir.file("absent.bin")), DataError);
}
