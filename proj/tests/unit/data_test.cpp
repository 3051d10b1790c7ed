#include <gtest/gtest.h>

#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "uapforge/data/artifact.hpp"
#include "uapforge/data/dataset.hpp"
#include "uapforge/data/run_config.hpp"
#include "uapforge/rng.hpp"

namespace uapforge::data {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

fs::path scratch(const std::string& name) {
    const fs::path dir = fs::path(testing::TempDir()) / "uapforge_data_test";
    fs::create_directories(dir);
    return dir / name;
}

void write_bytes(const fs::path& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

void push_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int shift = 24; shift >= 0; shift -= 8) out.push_back(static_cast<std::uint8_t>(v >> shift));
}

// Two 2x3 images with labels 7 and 2.
void write_tiny_idx(const fs::path& images, const fs::path& labels, std::uint32_t image_magic = 0x00000803) {
    std::vector<std::uint8_t> img;
    push_be32(img, image_magic);
    push_be32(img, 2);
    push_be32(img, 2);
    push_be32(img, 3);
    for (std::uint8_t v : {0, 51, 102, 153, 204, 255, 255, 0, 255, 0, 255, 0}) img.push_back(v);
    std::vector<std::uint8_t> lab;
    push_be32(lab, 0x00000801);
    push_be32(lab, 2);
    lab.push_back(7);
    lab.push_back(2);
    write_bytes(images, img);
    write_bytes(labels, lab);
}

TEST(Dataset, IdxRoundTripDecodesExactPixels) {
    const auto images = scratch("tiny-images"), labels = scratch("tiny-labels");
    write_tiny_idx(images, labels);
    const Dataset ds = load_mnist_idx(images, labels, Split::Test);
    ASSERT_EQ(ds.size(), 2u);
    EXPECT_EQ(ds.image_shape(), (ImageShape{1, 2, 3}));
    EXPECT_EQ(ds.label(0), 7);
    EXPECT_EQ(ds.label(1), 2);
    const Tensor x = ds.batch(0, 2);
    EXPECT_EQ(x.shape(), (Shape{2, 1, 2, 3}));
    EXPECT_EQ(x[0], real(0));
    EXPECT_EQ(x[1], real(51) / real(255));
    EXPECT_EQ(x[5], real(1));
    EXPECT_EQ(x[7], real(0));
}

TEST(Dataset, IdxRejectsWrongMagic) {
    const auto images = scratch("bad-images"), labels = scratch("bad-labels");
    write_tiny_idx(images, labels, 0x00000802);
    EXPECT_THROW(load_mnist_idx(images, labels, Split::Test), DataError);
}

TEST(Dataset, IdxRejectsTruncatedPayload) {
    const auto images = scratch("trunc-images"), labels = scratch("trunc-labels");
    write_tiny_idx(images, labels);
    fs::resize_file(images, fs::file_size(images) - 1);
    EXPECT_THROW(load_mnist_idx(images, labels, Split::Test), DataError);
}

TEST(Dataset, CifarRecordLengthMustDivide) {
    const auto path = scratch("cifar.bin");
    std::vector<std::uint8_t> bytes(2 * 3073, 17);
    bytes[0] = 3;
    bytes[3073] = 9;
    write_bytes(path, bytes);
    const std::vector<fs::path> files{path};
    const Dataset ds = load_cifar10_binary(files, Split::Train);
    EXPECT_EQ(ds.size(), 2u);
    EXPECT_EQ(ds.image_shape(), (ImageShape{3, 32, 32}));
    EXPECT_EQ(ds.label(1), 9);

    bytes.push_back(0);
    write_bytes(path, bytes);
    EXPECT_THROW(load_cifar10_binary(files, Split::Train), DataError);
}

TEST(Dataset, CifarRejectsLabelOutOfRange) {
    const auto path = scratch("cifar-badlabel.bin");
    std::vector<std::uint8_t> bytes(3073, 0);
    bytes[0] = 10;
    write_bytes(path, bytes);
    const std::vector<fs::path> files{path};
    EXPECT_THROW(load_cifar10_binary(files, Split::Train), DataError);
}

TEST(Dataset, MissingDirectoryIsDataError) {
    EXPECT_THROW(load_dataset("/nonexistent/uapforge", DatasetFormat::MnistIdx, Split::Train), DataError);
}

Dataset random_dataset(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<std::uint8_t> px(n * 16);
    for (auto& p : px) p = static_cast<std::uint8_t>(rng.below(256));
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) labels[i] = int(i % 4);
    return Dataset("synthetic", Split::Train, {1, 4, 4}, 4, std::move(px), std::move(labels));
}

TEST(Dataset, FingerprintIsContentDefined) {
    const Dataset a = random_dataset(40, 1);
    const Dataset b = random_dataset(40, 1);
    const Dataset c = random_dataset(40, 2);
    EXPECT_EQ(a.fingerprint(), b.fingerprint());
    EXPECT_NE(a.fingerprint(), c.fingerprint());
    EXPECT_EQ(a.fingerprint_hex().size(), 16u);
}

TEST(Dataset, BalancedSubsampleTakesEqualCounts) {
    const Dataset ds = random_dataset(200, 3);
    const auto idx = balanced_indices(ds, 7, 11);
    ASSERT_EQ(idx.size(), 28u);
    std::vector<int> counts(4, 0);
    for (auto i : idx) ++counts[std::size_t(ds.label(i))];
    for (int c : counts) EXPECT_EQ(c, 7);
    EXPECT_TRUE(std::is_sorted(idx.begin(), idx.end()));
}

TEST(Dataset, AttackSplitsAreDisjointEvenWithDuplicates) {
    Dataset base = random_dataset(100, 4);
    // Duplicate every image so that index-disjoint selections could still collide.
    std::vector<std::size_t> twice;
    for (std::size_t i = 0; i < base.size(); ++i) twice.push_back(i);
    for (std::size_t i = 0; i < base.size(); ++i) twice.push_back(i);
    const Dataset doubled = base.subset(twice, Split::Train);
    const auto splits = make_attack_splits(doubled, 10, 10, 5);
    EXPECT_EQ(splits.train.size(), 40u);
    EXPECT_EQ(splits.tune.size(), 40u);
    EXPECT_EQ(splits.tune.split(), Split::Tune);
    EXPECT_TRUE(disjoint(splits.train, splits.tune));
    EXPECT_FALSE(disjoint(splits.train, doubled));
}

Artifact random_artifact(Rng& rng) {
    Artifact a;
    const std::size_t count = rng.below(5);
    for (std::size_t t = 0; t < count; ++t) {
        Shape shape;
        const std::size_t rank = 1 + rng.below(4);
        for (std::size_t r = 0; r < rank; ++r) shape.push_back(1 + rng.below(5));
        BasicTensor<float> value(shape);
        for (float& v : value.data()) {
            const std::uint32_t bits = static_cast<std::uint32_t>(rng.next_u64());
            std::memcpy(&v, &bits, sizeof v);
        }
        a.add("t" + std::to_string(t) + "/w", std::move(value));
    }
    a.metadata = {{"seed", rng.next_u64() >> 12}, {"arch_id", "cnn-a"}, {"alpha", rng.uniform()}};
    return a;
}

TEST(Artifact, RandomContainersRoundTripBitExact) {
    Rng rng(77);
    for (int trial = 0; trial < 200; ++trial) {
        const Artifact a = random_artifact(rng);
        const auto bytes = encode_artifact(a);
        const Artifact b = decode_artifact(bytes);
        ASSERT_EQ(a.tensors.size(), b.tensors.size());
        for (std::size_t i = 0; i < a.tensors.size(); ++i) {
            EXPECT_EQ(a.tensors[i].first, b.tensors[i].first);
            EXPECT_TRUE(bit_identical(a.tensors[i].second, b.tensors[i].second));
        }
        EXPECT_EQ(a.metadata, b.metadata);
        EXPECT_EQ(encode_artifact(b), bytes);
    }
}

TEST(Artifact, FileRoundTrip) {
    Rng rng(5);
    Artifact a = random_artifact(rng);
    a.add("extra", BasicTensor<float>({2, 2}, std::vector<float>{1, -0.0f, 3.5f, 1e-30f}));
    const auto path = scratch("roundtrip.uapt");
    save_artifact(a, path);
    const Artifact b = load_artifact(path);
    EXPECT_TRUE(bit_identical(b.tensor("extra"), a.tensor("extra")));
}

TEST(Artifact, UnreadableShapesAreNotWritten) {
    Artifact a;
    a.add("scalar", BasicTensor<float>(Shape{}));
    EXPECT_THROW(encode_artifact(a), ContractViolation);
    EXPECT_THROW(save_artifact(a, scratch("scalar.uapt")), ContractViolation);
}

TEST(Artifact, EmptyContainerIsValid) {
    Artifact a;
    a.metadata = {{"note", "metadata only"}};
    const Artifact b = decode_artifact(encode_artifact(a));
    EXPECT_TRUE(b.tensors.empty());
    EXPECT_EQ(b.metadata["note"], "metadata only");
}

TEST(Artifact, FlippedPayloadByteIsDetected) {
    Artifact a;
    a.add("w", BasicTensor<float>({3}, std::vector<float>{1, 2, 3}));
    auto bytes = encode_artifact(a);
    const std::size_t payload = bytes.size() - 4 - a.metadata.dump().size() - 12;
    for (std::size_t k = 0; k < 12; ++k) {
        auto corrupt = bytes;
        corrupt[payload + k] ^= 0x01;
        EXPECT_THROW(decode_artifact(corrupt), DataError) << "byte " << k;
    }
}

TEST(Artifact, EveryTruncationIsRejected) {
    Artifact a;
    a.add("w", BasicTensor<float>({2}, std::vector<float>{1, 2}));
    const auto bytes = encode_artifact(a);
    for (std::size_t n = 0; n < bytes.size(); ++n) {
        EXPECT_THROW(decode_artifact(std::span(bytes).first(n)), DataError) << n;
    }
}

TEST(Artifact, VersionMismatchIsExplicit) {
    auto bytes = encode_artifact(Artifact{});
    bytes[4] = 2;
    try {
        decode_artifact(bytes);
        FAIL();
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("unsupported version 2"), std::string::npos);
    }
}

TEST(Artifact, DuplicateNamesRejected) {
    Artifact a;
    a.add("w", BasicTensor<float>({1}));
    EXPECT_THROW(a.add("w", BasicTensor<float>({1})), ContractViolation);
}

json minimal() { return {{"dataset", {{"format", "mnist-idx"}}}, {"classifier", {{"arch", "cnn-a"}}}}; }

TEST(RunConfig, MinimalConfigFillsDefaults) {
    const RunConfig cfg = parse_config_json(minimal());
    EXPECT_EQ(cfg.attack.alpha, 0.7);
    EXPECT_EQ(cfg.attack.epsilon, 10.0);
    EXPECT_EQ(cfg.attack.norm, NormType::Linf);
    EXPECT_EQ(cfg.attack.mode, AttackMode::NonTargeted);
    EXPECT_EQ(cfg.attack.adam.lr, 2e-4);
    EXPECT_EQ(cfg.attack.adam.beta1, 0.5);
    EXPECT_EQ(cfg.attack.adam.beta2, 0.999);
    EXPECT_EQ(cfg.attack.batch_size, 64u);
    EXPECT_EQ(cfg.attack.epochs, 10u);
    EXPECT_EQ(cfg.attack.fff_input, FffInput::Adversarial);
    EXPECT_EQ(cfg.generator.arch, "gen-r4");
}

TEST(RunConfig, AlphaOutOfRangeRejected) {
    auto doc = minimal();
    doc["attack"]["alpha"] = 1.5;
    try {
        parse_config_json(doc);
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("α must lie in [0,1]"), std::string::npos);
    }
}

TEST(RunConfig, TargetedModeNeedsClass) {
    auto doc = minimal();
    doc["attack"]["mode"] = "targeted";
    EXPECT_THROW(parse_config_json(doc), ConfigError);
    doc["attack"]["target_class"] = 8;
    EXPECT_EQ(parse_config_json(doc).attack.target_class, 8);
    doc["attack"]["target_class"] = 10;
    EXPECT_THROW(parse_config_json(doc), ConfigError);
}

void expect_error_path(const json& doc, const std::string& path) {
    try {
        parse_config_json(doc);
        FAIL() << "expected ConfigError for " << path;
    } catch (const ConfigError& e) {
        EXPECT_EQ(std::string(e.what()).rfind(path, 0), 0u) << e.what();
    }
}

TEST(RunConfig, ErrorsNameTheOffendingPath) {
    auto unknown = minimal();
    unknown["attack"]["alpah"] = 0.5;
    expect_error_path(unknown, "attack.alpah");

    auto wrong_type = minimal();
    wrong_type["classifier"]["epochs"] = "three";
    expect_error_path(wrong_type, "classifier.epochs");

    auto missing = minimal();
    missing["classifier"].erase("arch");
    expect_error_path(missing, "classifier.arch");

    auto bad_model = minimal();
    bad_model["eval"]["models"] = json::array({{{"arch", "cnn-a"}, {"ckpt", "x"}}});
    expect_error_path(bad_model, "eval.models[0].ckpt");

    expect_error_path(json{{"classifier", {{"arch", "cnn-a"}}}}, "dataset");
    expect_error_path(json{{"dataset", {{"format", "mnist-idx"}}}, {"classifier", {{"arch", "x"}}}, {"extra", 1}},
                      "extra");
}

TEST(RunConfig, EchoedJsonReparsesToSameConfig) {
    auto doc = minimal();
    doc["attack"]["mode"] = "targeted";
    doc["attack"]["target_class"] = 3;
    doc["eval"]["models"] = json::array({{{"arch", "res-a"}, {"checkpoint", "a.uapt"}}});
    const RunConfig cfg = parse_config_json(doc);
    const RunConfig again = parse_config_json(cfg.to_json());
    EXPECT_EQ(cfg.to_json(), again.to_json());
    EXPECT_EQ(cfg.hash(), again.hash());
}

TEST(RunConfig, DottedOverridesWin) {
    auto doc = minimal();
    doc["attack"]["alpha"] = 0.3;
    apply_override(doc, "attack.alpha", "0.9");
    apply_override(doc, "attack.norm", "2");
    apply_override(doc, "eval.baseline", "random");
    const RunConfig cfg = parse_config_json(doc);
    EXPECT_EQ(cfg.attack.alpha, 0.9);
    EXPECT_EQ(cfg.attack.norm, NormType::L2);
    EXPECT_EQ(cfg.eval.baseline, Baseline::Random);
    EXPECT_THROW(apply_override(doc, "attack..alpha", "1"), ConfigError);
}

TEST(RunConfig, DataRootDefaultsToEnvironment) {
    ::setenv("UAPFORGE_DATA_DIR", "/srv/datasets", 1);
    RunConfig cfg = parse_config_json(minimal());
    EXPECT_EQ(cfg.dataset.resolved_root(), fs::path("/srv/datasets/mnist"));
    cfg.dataset.root = "/elsewhere";
    EXPECT_EQ(cfg.dataset.resolved_root(), fs::path("/elsewhere"));
    ::unsetenv("UAPFORGE_DATA_DIR");
}

TEST(AttackConfig, EpsilonConversion) {
    AttackConfig cfg;
    EXPECT_DOUBLE_EQ(internal_epsilon(cfg, 784), 10.0 / 255.0);
    cfg.norm = NormType::L2;
    cfg.epsilon = 2000;
    EXPECT_DOUBLE_EQ(internal_epsilon(cfg, 3 * 224 * 224), 2000.0 / 255.0);
    EXPECT_NEAR(internal_epsilon(cfg, 3 * 32 * 32), 2000.0 / 255.0 * std::sqrt(3072.0 / 150528.0), 1e-12);
}

}  // namespace
}  // namespace uapforge::data
