#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "mambatext/checkpoint.hpp"

using namespace mambatext;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("mambatext_ckpt_" + std::to_string(std::random_device{}()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

ModelConfig toy_config() {
    ModelConfig cfg;
    cfg.d_model = 8;
    cfg.n_layers = 2;
    cfg.d_state = 4;
    cfg.d_conv = 3;
    cfg.expand = 2;
    cfg.dt_rank = 1;
    cfg.vocab_size = 12;
    cfg.n_classes = 3;
    cfg.max_seq_len = 32;
    cfg.pooling = Pooling::last;
    return cfg;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
}

}  // namespace

TEST_CASE("crc32 known test vector") {
    const char* s = "123456789";
    CHECK(crc32_ieee(s, 9) == 0xcbf43926u);
}

TEST_CASE("config block round trip") {
    ModelConfig cfg = toy_config();
    MetaMap meta{{"seed", "99"}, {"class_names", "a,b,c"}};
    ModelConfig back;
    MetaMap meta_back;
    decode_config_block(encode_config_block(cfg, meta), back, meta_back);
    CHECK(back == cfg);
    CHECK(meta_back == meta);
}

TEST_CASE("checkpoint round trip is bit exact") {
    TempDir dir;
    const std::string path = (dir.path / "m.ckpt").string();
    MambaClassifier<float> m = MambaClassifier<float>::random_init(toy_config(), 7);
    save_checkpoint(m, path, {{"seed", "7"}});

    LoadedModel lm = load_checkpoint(path);
    CHECK_FALSE(lm.was_quantized);
    CHECK(lm.model.cfg == m.cfg);
    CHECK(lm.meta.at("seed") == "7");
    std::vector<const Tensor<float>*> orig, loaded;
    m.for_each_param([&](const std::string&, const Tensor<float>& t) { orig.push_back(&t); });
    lm.model.for_each_param(
        [&](const std::string&, const Tensor<float>& t) { loaded.push_back(&t); });
    REQUIRE(orig.size() == loaded.size());
    for (std::size_t i = 0; i < orig.size(); ++i) CHECK(*orig[i] == *loaded[i]);

    // Save -> load -> save reproduces the file byte for byte.
    const std::string path2 = (dir.path / "m2.ckpt").string();
    save_checkpoint(lm.model, path2, lm.meta);
    CHECK(slurp(path) == slurp(path2));
}

TEST_CASE("corruption yields BadMagic or ChecksumMismatch, never a model") {
    TempDir dir;
    const std::string path = (dir.path / "m.ckpt").string();
    MambaClassifier<float> m = MambaClassifier<float>::random_init(toy_config(), 8);
    save_checkpoint(m, path);
    const std::string bytes = slurp(path);

    auto write_bytes = [&](const std::string& b) {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        out.write(b.data(), static_cast<std::streamsize>(b.size()));
    };

    write_bytes(bytes.substr(0, 2));
    CHECK_THROWS_AS((void)load_checkpoint(path), BadMagic);

    write_bytes(bytes.substr(0, bytes.size() / 2));
    CHECK_THROWS_AS((void)load_checkpoint(path), ChecksumMismatch);

    std::string flipped = bytes;
    flipped[flipped.size() / 3] = static_cast<char>(~flipped[flipped.size() / 3]);
    write_bytes(flipped);
    CHECK_THROWS_AS((void)load_checkpoint(path), ChecksumMismatch);

    std::string wrong_magic = bytes;
    wrong_magic[0] = 'X';
    write_bytes(wrong_magic);
    CHECK_THROWS_AS((void)load_checkpoint(path), BadMagic);
}

TEST_CASE("version mismatch names both versions") {
    TempDir dir;
    const std::string path = (dir.path / "m.ckpt").string();
    MambaClassifier<float> m = MambaClassifier<float>::random_init(toy_config(), 9);
    save_checkpoint(m, path);
    std::string bytes = slurp(path);
    bytes[4] = 2;  // version field follows the 4-byte magic
    // Refresh the trailing CRC so only the version differs.
    const std::uint32_t crc = crc32_ieee(bytes.data(), bytes.size() - 4);
    std::memcpy(bytes.data() + bytes.size() - 4, &crc, 4);
    std::ofstream(path, std::ios::binary | std::ios::trunc)
        .write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    try {
        (void)load_checkpoint(path);
        FAIL("expected VersionMismatch");
    } catch (const VersionMismatch& e) {
        const std::string msg = e.what();
        CHECK(msg.find("2") != std::string::npos);
        CHECK(msg.find("1") != std::string::npos);
    }
}

TEST_CASE("missing file is an IoError") {
    CHECK_THROWS_AS((void)load_checkpoint("/nonexistent/nowhere.ckpt"), IoError);
}

TEST_CASE("quantized checkpoint round trip") {
    TempDir dir;
    const std::string path = (dir.path / "m.int8.ckpt").string();
    MambaClassifier<float> m = MambaClassifier<float>::random_init(toy_config(), 10);
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> d(-0.5, 0.5);
    for (std::size_t i = 0; i < m.head_w.size(); ++i) m.head_w[i] = static_cast<float>(d(rng));

    QuantizedModel qm = quantize_int8(m);
    save_quantized(qm, path, {{"seed", "10"}});

    MetaMap meta;
    QuantizedModel back = load_quantized(path, &meta);
    CHECK(meta.at("seed") == "10");
    REQUIRE(back.weights.size() == qm.weights.size());
    for (std::size_t i = 0; i < qm.weights.size(); ++i) {
        CHECK(back.weights[i].name == qm.weights[i].name);
        CHECK(back.weights[i].scale == qm.weights[i].scale);
        CHECK(back.weights[i].q == qm.weights[i].q);
    }
    REQUIRE(back.biases.size() == qm.biases.size());
    for (std::size_t i = 0; i < qm.biases.size(); ++i)
        CHECK(back.biases[i].second == qm.biases[i].second);

    // load_checkpoint dequantizes int8 containers to f32 transparently.
    LoadedModel lm = load_checkpoint(path);
    CHECK(lm.was_quantized);
    MambaClassifier<float> deq = dequantize(qm);
    CHECK(lm.model.embedding == deq.embedding);
    CHECK(lm.model.head_w == deq.head_w);
    CHECK(lm.model.head_b == deq.head_b);
}

TEST_CASE("atomic write leaves no temp file behind") {
    TempDir dir;
    const std::string path = (dir.path / "f.bin").string();
    atomic_write_file(path, "payload");
    CHECK(slurp(path) == "payload");
    CHECK_FALSE(fs::exists(path + ".tmp"));
    CHECK_THROWS_AS(atomic_write_file((dir.path / "no" / "dir" / "f").string(), "x"), IoError);
}
